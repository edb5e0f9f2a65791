//! Metric profiles and the geometric quantities derived from them.
//!
//! A profile `phi` encodes a rotationally symmetric sphere metric in
//! momentum coordinates. All geometry reduces to pointwise algebra and the
//! collocation derivative: `R = -phi''`, `Δf = (phi f')'`,
//! `|∇f|² = phi (f')²`, `|∇²f|² = phi² (f'')²`, and in complex dimension
//! one `|∇∇̄f|² = (Δf)²`. The measure is fixed: `∫ h dA = 2π ∫ h dx`.

use std::sync::Arc;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::{DIM, TOTAL_VOLUME};

/// Semantic tag carried by derived scalar fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    /// Ricci potential with unit Gibbs mass: `(1/V) ∫ e^{-u} dA = 1`.
    PotentialGibbs,
    /// Ricci potential with zero average: `∫ ũ dA = 0`.
    PotentialZeroMean,
    ScalarCurvature,
    Generic,
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub kind: FieldKind,
    pub values: Array1<f64>,
}

impl ScalarField {
    pub fn generic(values: Array1<f64>) -> Self {
        ScalarField {
            kind: FieldKind::Generic,
            values,
        }
    }
}

/// Tolerances for profile validation. The slope tolerance is configurable
/// because boundary slopes drift slowly over long integrations.
#[derive(Debug, Clone, Copy)]
pub struct ProfileTolerances {
    pub endpoint_value: f64,
    pub endpoint_slope: f64,
}

impl Default for ProfileTolerances {
    fn default() -> Self {
        ProfileTolerances {
            endpoint_value: 1e-10,
            endpoint_slope: 1e-6,
        }
    }
}

/// Outcome of profile validation; carries the first violated condition.
#[derive(Debug, Clone)]
pub struct ValidityReport {
    pub ok: bool,
    pub what: Option<String>,
    pub magnitude: f64,
}

impl ValidityReport {
    fn pass() -> Self {
        ValidityReport {
            ok: true,
            what: None,
            magnitude: 0.0,
        }
    }

    fn fail(what: impl Into<String>, magnitude: f64) -> Self {
        ValidityReport {
            ok: false,
            what: Some(what.into()),
            magnitude,
        }
    }
}

/// A metric profile on its collocation grid.
#[derive(Debug, Clone)]
pub struct MetricProfile {
    grid: Arc<Grid>,
    phi: Array1<f64>,
}

impl MetricProfile {
    /// Validates and wraps node values of `phi`.
    pub fn new(grid: Arc<Grid>, phi: Array1<f64>) -> Result<Self> {
        let p = MetricProfile { grid, phi };
        let report = p.validate();
        if report.ok {
            Ok(p)
        } else {
            Err(Error::InvalidProfile {
                what: report.what.unwrap_or_default(),
                magnitude: report.magnitude,
            })
        }
    }

    /// Wraps values without validation; used inside the integrator where
    /// validity is re-checked once per accepted step.
    pub fn from_values_unchecked(grid: Arc<Grid>, phi: Array1<f64>) -> Self {
        MetricProfile { grid, phi }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut Array1<f64> {
        &mut self.phi
    }

    pub fn validate(&self) -> ValidityReport {
        self.validate_with(&ProfileTolerances::default())
    }

    pub fn validate_with(&self, tol: &ProfileTolerances) -> ValidityReport {
        let n = self.grid.n();
        if self.phi.len() != n + 1 {
            return ValidityReport::fail("node count mismatch", self.phi.len() as f64);
        }
        for (j, &v) in self.phi.iter().enumerate() {
            if !v.is_finite() {
                return ValidityReport::fail(format!("non-finite value at node {j}"), f64::NAN);
            }
        }
        if self.phi[0].abs() > tol.endpoint_value {
            return ValidityReport::fail("phi(-1) != 0", self.phi[0].abs());
        }
        if self.phi[n].abs() > tol.endpoint_value {
            return ValidityReport::fail("phi(+1) != 0", self.phi[n].abs());
        }
        let mut min_phi = f64::INFINITY;
        for j in 1..n {
            min_phi = min_phi.min(self.phi[j]);
        }
        if min_phi <= 0.0 {
            return ValidityReport::fail("interior positivity lost", min_phi);
        }
        let dphi = self.grid.diff1(&self.phi);
        let left = (dphi[0] - 1.0).abs();
        if left > tol.endpoint_slope {
            return ValidityReport::fail("phi'(-1) != 1", left);
        }
        let right = (dphi[n] + 1.0).abs();
        if right > tol.endpoint_slope {
            return ValidityReport::fail("phi'(+1) != -1", right);
        }
        ValidityReport::pass()
    }
}

/// The round profile `(1 - x²)/2`, the fixed point of the flow.
pub fn round_profile(grid: Arc<Grid>) -> MetricProfile {
    let phi = grid.nodes().mapv(|x| 0.5 * (1.0 - x * x));
    MetricProfile::from_values_unchecked(grid, phi)
}

/// One-parameter family `phi = (1-x²)/2 · (1 + β(1-x²))`; valid for β > -1.
pub fn beta_family(grid: Arc<Grid>, beta: f64) -> Result<MetricProfile> {
    let phi = grid
        .nodes()
        .mapv(|x| 0.5 * (1.0 - x * x) * (1.0 + beta * (1.0 - x * x)));
    MetricProfile::new(grid, phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Any,
}

/// Perturbation `phi = (1-x²)/2 · (1 + Σ c_k (1-x²) T_k(x))`. The
/// `(1-x²)` factor keeps the endpoint values and slopes intact for any
/// coefficients; positivity requires `Σ |c_k| < 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub coeffs: Vec<(usize, f64)>,
}

impl PerturbationSpec {
    pub fn new(coeffs: Vec<(usize, f64)>) -> Self {
        PerturbationSpec { coeffs }
    }

    /// Draws coefficients for degrees `0..=max_degree` matching `parity`
    /// from a seeded generator, scaled so that `Σ |c_k| = amplitude`.
    pub fn sampled(max_degree: usize, amplitude: f64, parity: Parity, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for k in 0..=max_degree {
            let keep = match parity {
                Parity::Even => k % 2 == 0,
                Parity::Odd => k % 2 == 1,
                Parity::Any => true,
            };
            let draw: f64 = rng.gen_range(-1.0..1.0);
            if keep {
                coeffs.push((k, draw));
            }
        }
        let total: f64 = coeffs.iter().map(|(_, c)| c.abs()).sum();
        if total > 0.0 {
            for (_, c) in coeffs.iter_mut() {
                *c *= amplitude / total;
            }
        }
        PerturbationSpec { coeffs }
    }
}

pub fn chebyshev_perturbation(grid: Arc<Grid>, spec: &PerturbationSpec) -> Result<MetricProfile> {
    let n = grid.n();
    let nodes = grid.nodes().clone();
    let max_k = spec.coeffs.iter().map(|&(k, _)| k).max().unwrap_or(0);
    // Chebyshev polynomials at the nodes by the three-term recurrence.
    let mut tk = vec![Array1::zeros(n + 1); max_k + 1];
    for k in 0..=max_k {
        tk[k] = match k {
            0 => Array1::from_elem(n + 1, 1.0),
            1 => nodes.clone(),
            _ => {
                let prev = tk[k - 1].clone();
                let prev2 = tk[k - 2].clone();
                Array1::from_shape_fn(n + 1, |j| 2.0 * nodes[j] * prev[j] - prev2[j])
            }
        };
    }
    let mut h = Array1::from_elem(n + 1, 1.0);
    for &(k, c) in &spec.coeffs {
        for j in 0..=n {
            h[j] += c * (1.0 - nodes[j] * nodes[j]) * tk[k][j];
        }
    }
    let phi = Array1::from_shape_fn(n + 1, |j| 0.5 * (1.0 - nodes[j] * nodes[j]) * h[j]);
    MetricProfile::new(grid, phi)
}

/// Scalar curvature `R = -phi''`.
pub fn scalar_curvature(profile: &MetricProfile) -> ScalarField {
    ScalarField {
        kind: FieldKind::ScalarCurvature,
        values: -profile.grid().diff2(profile.phi()),
    }
}

/// Laplacian in divergence form, `Δf = (phi f')'`.
pub fn kahler_laplacian(profile: &MetricProfile, f: &Array1<f64>) -> Array1<f64> {
    let g = profile.grid();
    let flux = profile.phi() * &g.diff1(f);
    g.diff1(&flux)
}

/// `(|∇f|², |∇∇̄f|², |∇²f|²)` as node fields.
pub fn gradient_and_hessian_norms(
    profile: &MetricProfile,
    f: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let g = profile.grid();
    let df = g.diff1(f);
    let grad_sq = profile.phi() * &df * &df;
    let lap = kahler_laplacian(profile, f);
    let box_sq = &lap * &lap;
    let d2f = g.diff2(f);
    let hess_sq = profile.phi() * profile.phi() * &d2f * &d2f;
    (grad_sq, box_sq, hess_sq)
}

/// `∫ f dA = 2π ∫ f dx`.
pub fn measure_integral(grid: &Grid, f: &Array1<f64>) -> f64 {
    2.0 * std::f64::consts::PI * grid.integrate(f)
}

/// `(1/V) ∫ f dA`.
pub fn mean(grid: &Grid, f: &Array1<f64>) -> f64 {
    measure_integral(grid, f) / TOTAL_VOLUME
}

/// Ricci potential in both normalizations, plus its scalar reductions.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    /// Gibbs normalization: `(1/V) ∫ e^{-u} dA = 1`.
    pub u: ScalarField,
    /// Zero-average normalization: `∫ ũ dA = 0`.
    pub u_tilde: ScalarField,
    /// `a = (1/V) ∫ u dA`, so `ũ = u - a`.
    pub a: f64,
    /// `b = (1/V) ∫ u e^{-u} dA`.
    pub b: f64,
    /// `u' = (phi' + x)/phi` extended to the endpoints by l'Hôpital.
    pub u_prime: Array1<f64>,
    /// Sup-node residual of `-Δu = R - n` with the generic Laplacian.
    pub laplace_defect: f64,
}

/// Reconstructs the Ricci potential from the profile: `phi u' = phi' + x`
/// with `u'(±1) = (phi''(±1) + 1)/phi'(±1)`, anchored by quadrature.
pub fn ricci_potential(profile: &MetricProfile) -> Result<PotentialPair> {
    let g = profile.grid();
    let n = g.n();
    let phi = profile.phi();
    let dphi = g.diff1(phi);
    let d2phi = g.diff2(phi);
    let q = &dphi + g.nodes();
    for idx in [0, n] {
        if q[idx].abs() > 1e-6 {
            return Err(Error::PrecisionLoss(format!(
                "phi' + x = {:.3e} at endpoint node {idx}; potential slope undefined",
                q[idx]
            )));
        }
    }
    let mut u_prime = Array1::zeros(n + 1);
    for j in 1..n {
        u_prime[j] = q[j] / phi[j];
    }
    u_prime[0] = (d2phi[0] + 1.0) / dphi[0];
    u_prime[n] = (d2phi[n] + 1.0) / dphi[n];

    let u0 = g.antiderivative(&u_prime);
    let a0 = mean(g, &u0);
    let u_tilde = u0.mapv(|v| v - a0);
    let gibbs_mass = mean(g, &u0.mapv(|v| (-v).exp()));
    let c = gibbs_mass.ln();
    let u = u0.mapv(|v| v + c);
    let a = a0 + c;
    let b = mean(g, &Array1::from_shape_fn(n + 1, |j| u[j] * (-u[j]).exp()));

    let lap_u = kahler_laplacian(profile, &u);
    let r = -&d2phi;
    let mut laplace_defect = 0.0f64;
    for j in 0..=n {
        laplace_defect = laplace_defect.max((-lap_u[j] - (r[j] - DIM)).abs());
    }

    Ok(PotentialPair {
        u: ScalarField {
            kind: FieldKind::PotentialGibbs,
            values: u,
        },
        u_tilde: ScalarField {
            kind: FieldKind::PotentialZeroMean,
            values: u_tilde,
        },
        a,
        b,
        u_prime,
        laplace_defect,
    })
}

/// `L¹`, `L²`, `C⁰` norms with respect to the fixed measure.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct NormTriple {
    pub l1: f64,
    pub l2: f64,
    pub c0: f64,
}

/// Norms of a plain scalar field.
pub fn norms(grid: &Grid, f: &Array1<f64>) -> NormTriple {
    let l1 = measure_integral(grid, &f.mapv(f64::abs));
    let l2 = measure_integral(grid, &(f * f)).max(0.0).sqrt();
    let c0 = grid.c0_norm(f);
    NormTriple { l1, l2, c0 }
}

/// Norms of `|∇f|`, computed from the smooth field `phi (f')²` so that the
/// C⁰ norm can be oversampled without interpolating a kinked integrand.
pub fn gradient_norms(profile: &MetricProfile, f: &Array1<f64>) -> NormTriple {
    let g = profile.grid();
    let df = g.diff1(f);
    let grad_sq = profile.phi() * &df * &df;
    let l2 = measure_integral(g, &grad_sq).max(0.0).sqrt();
    let l1 = measure_integral(g, &grad_sq.mapv(|v| v.max(0.0).sqrt()));
    let (_, hi) = g.minmax_oversampled(&grad_sq);
    let c0 = hi.max(0.0).sqrt();
    NormTriple { l1, l2, c0 }
}

/// Every norm the observables layer consumes, computed in one pass.
#[derive(Debug, Clone)]
pub struct NormBundle {
    pub u_tilde: NormTriple,
    pub grad_u_tilde: NormTriple,
    pub lap_u_tilde: NormTriple,
    pub u: NormTriple,
    pub r_minus_n_c0: f64,
    pub min_r: f64,
    pub profile_dist_c0: f64,
}

/// Profile together with its derived fields and norms at one instant.
#[derive(Debug, Clone)]
pub struct GeometrySnapshot {
    pub profile: MetricProfile,
    pub potentials: PotentialPair,
    pub r: ScalarField,
    pub bundle: NormBundle,
}

impl GeometrySnapshot {
    pub fn compute(profile: &MetricProfile) -> Result<GeometrySnapshot> {
        let g = profile.grid().clone();
        let r = scalar_curvature(profile);
        let potentials = ricci_potential(profile)?;

        // Δũ = -(R - n) identically; the honest Laplacian is cross-checked
        // through `laplace_defect`, so records use the curvature form.
        let lap_field = r.values.mapv(|v| DIM - v);
        let r_minus_n = r.values.mapv(|v| v - DIM);

        let u_tilde = norms(&g, &potentials.u_tilde.values);
        let grad_u_tilde = gradient_norms(profile, &potentials.u_tilde.values);
        let lap_u_tilde = norms(&g, &lap_field);
        let u = norms(&g, &potentials.u.values);
        let r_minus_n_c0 = g.c0_norm(&r_minus_n);
        let (min_r, _) = g.minmax_oversampled(&r.values);
        let round = g.nodes().mapv(|x| 0.5 * (1.0 - x * x));
        let profile_dist_c0 = g.c0_norm(&(profile.phi() - &round));

        Ok(GeometrySnapshot {
            profile: profile.clone(),
            potentials,
            r,
            bundle: NormBundle {
                u_tilde,
                grad_u_tilde,
                lap_u_tilde,
                u,
                r_minus_n_c0,
                min_r,
                profile_dist_c0,
            },
        })
    }
}
