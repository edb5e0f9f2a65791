//! Independent cross-checks of the solver against closed forms and a
//! second discretization. Expected values are frozen from symbolic
//! derivations evaluated at high precision; the quadrature oracles below
//! re-derive them inside the test so a typo in a literal cannot hide.

use std::sync::Arc;

use krflow_core::flow::{evolve, rhs, DtRule, StepPolicy};
use krflow_core::geometry::{
    beta_family, chebyshev_perturbation, kahler_laplacian, ricci_potential, round_profile,
    scalar_curvature,
};
use krflow_core::observables::{rate_fit, FitWindow, TraceQuantity};
use krflow_core::{Grid, PerturbationSpec};
use ndarray::Array1;

const BETA: f64 = 0.1;
/// `(1/2)∫ 2 ln(1.1 − 0.1x²) dx`, the measure average of the raw potential.
const POTENTIAL_MEAN: f64 = 0.128_285_816_816_179_1;
/// `2 ln(1.1) −` the mean above.
const U_TILDE_AT_ZERO: f64 = 0.062_334_542_792_470_6;
/// `√(2π ∫ ũ₀² dx)`.
const U_TILDE_L2: f64 = 0.200_064_376_585_023_2;

fn grid(n: usize) -> Arc<Grid> {
    Arc::new(Grid::new(n).unwrap())
}

/// Composite Simpson on [-1, 1]; an intentionally different quadrature from
/// the solver's Clenshaw-Curtis weights.
fn simpson(m: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(m % 2 == 0);
    let h = 2.0 / m as f64;
    let mut acc = f(-1.0) + f(1.0);
    for j in 1..m {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(-1.0 + j as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn potential_literals_match_quadrature_oracle() {
    let u_raw = |x: f64| 2.0 * (1.0 + BETA - BETA * x * x).ln();
    let mean = simpson(4000, u_raw) / 2.0;
    assert!((mean - POTENTIAL_MEAN).abs() < 1e-12);
    assert!((u_raw(0.0) - mean - U_TILDE_AT_ZERO).abs() < 1e-12);
    let l2 = (2.0 * std::f64::consts::PI * simpson(4000, |x| (u_raw(x) - mean).powi(2))).sqrt();
    assert!((l2 - U_TILDE_L2).abs() < 1e-12);
}

#[test]
fn beta_family_closed_forms_on_the_grid() {
    let g = grid(48);
    let p = beta_family(g.clone(), BETA).unwrap();
    let mid = g.nodes().iter().position(|&x| x.abs() < 1e-14).unwrap();

    // Boundary rows of the second-derivative matrix amplify rounding by
    // ~N⁴ε, so endpoint values get a looser (still tiny) budget.
    let r = scalar_curvature(&p);
    assert!((r.values[mid] - 1.2).abs() < 1e-12);
    assert!((r.values[0] - 0.6).abs() < 1e-9);
    assert!((r.values[g.n()] - 0.6).abs() < 1e-9);

    let f = rhs(&p);
    assert!((f[mid] - (-0.11)).abs() < 1e-12);

    let pot = ricci_potential(&p).unwrap();
    assert!((pot.u_tilde.values[mid] - U_TILDE_AT_ZERO).abs() < 1e-9);

    let snap = krflow_core::GeometrySnapshot::compute(&p).unwrap();
    assert!((snap.bundle.u_tilde.l2 - U_TILDE_L2).abs() < 1e-9);
}

#[test]
fn laplacian_diagonalizes_legendre_modes_on_round() {
    // On the round profile, (φ* Pℓ')' = -ℓ(ℓ+1)/2 · Pℓ exactly.
    let g = grid(32);
    let p = round_profile(g.clone());
    let nodes = g.nodes();
    let mut p_prev = Array1::from_elem(g.n() + 1, 1.0);
    let mut p_cur = nodes.clone();
    for ell in 1..=6usize {
        let lam = ell as f64 * (ell as f64 + 1.0) / 2.0;
        let lap = kahler_laplacian(&p, &p_cur);
        let defect = (0..=g.n())
            .map(|j| (lap[j] + lam * p_cur[j]).abs())
            .fold(0.0f64, f64::max);
        assert!(defect <= 1e-10, "mode {ell}: defect {defect:.3e}");
        let p_next = Array1::from_shape_fn(g.n() + 1, |j| {
            let l = ell as f64;
            ((2.0 * l + 1.0) * nodes[j] * p_cur[j] - l * p_prev[j]) / (l + 1.0)
        });
        p_prev = p_cur;
        p_cur = p_next;
    }
}

/// Second-order finite differences on a uniform grid, integrated with RK4.
/// Endpoints are held at zero: the continuum flow preserves them, and the
/// one-sided slope data never enters the interior stencil.
fn uniform_solver(m: usize, t_end: f64) -> Vec<f64> {
    let h = 2.0 / m as f64;
    let x: Vec<f64> = (0..=m).map(|j| -1.0 + j as f64 * h).collect();
    let mut phi: Vec<f64> = x
        .iter()
        .map(|&x| 0.5 * (1.0 - x * x) * (1.0 + BETA * (1.0 - x * x)))
        .collect();
    let rhs = |phi: &[f64], out: &mut Vec<f64>| {
        out[0] = 0.0;
        out[m] = 0.0;
        for j in 1..m {
            let dp = (phi[j + 1] - phi[j - 1]) / (2.0 * h);
            let d2p = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) / (h * h);
            out[j] = phi[j] * d2p - dp * dp - x[j] * dp + phi[j];
        }
    };
    let steps = (t_end / (0.2 * h * h)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut k1 = vec![0.0; m + 1];
    let mut k2 = vec![0.0; m + 1];
    let mut k3 = vec![0.0; m + 1];
    let mut k4 = vec![0.0; m + 1];
    let mut tmp = vec![0.0; m + 1];
    for _ in 0..steps {
        rhs(&phi, &mut k1);
        for j in 0..=m {
            tmp[j] = phi[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..=m {
            tmp[j] = phi[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..=m {
            tmp[j] = phi[j] + dt * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..=m {
            phi[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    phi
}

#[test]
fn uniform_grid_solver_agrees_at_center() {
    let g = grid(32);
    let initial = beta_family(g.clone(), BETA).unwrap();
    let policy = StepPolicy {
        dt: DtRule::Fixed { dt: 2.5e-4 },
        cadence: 0.05,
        checkpoint_cadence: 0.5,
        ..StepPolicy::default()
    };
    let trace = evolve(&initial, &policy, 0.5, &[]).unwrap();
    let ck = trace.checkpoints.last().unwrap();
    assert!((ck.t - 0.5).abs() < 1e-12);
    let mid = g.nodes().iter().position(|&x| x.abs() < 1e-14).unwrap();
    let spectral_mid = ck.phi[mid];

    let mut errs = Vec::new();
    for m in [200usize, 400, 800] {
        let phi = uniform_solver(m, 0.5);
        let err = (phi[m / 2] - spectral_mid).abs();
        assert!(err <= 5e-4, "m={m}: disagreement {err:.3e}");
        errs.push(err);
    }
    // Halving h must shrink the disagreement ~4x: the gap is the uniform
    // solver's own truncation, so the two discretizations share a limit.
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.0..=5.2).contains(&ratio),
            "refinement ratio {ratio:.2} outside second-order band"
        );
    }
}

#[test]
fn single_mode_decay_rates_match_spectrum() {
    // Tiny amplitudes keep the dynamics linear; fitted rates must land on
    // -(l(l+1)/2 - 1) for the dominant surviving mode.
    let g = grid(32);
    let policy = StepPolicy {
        dt: DtRule::Fixed { dt: 2e-4 },
        cadence: 0.05,
        checkpoint_cadence: 0.5,
        ..StepPolicy::default()
    };

    let even = chebyshev_perturbation(g.clone(), &PerturbationSpec::new(vec![(2, 1e-4)])).unwrap();
    let trace = evolve(&even, &policy, 4.0, &[]).unwrap();
    let fit = rate_fit(
        &trace,
        TraceQuantity::L2UTilde,
        &FitWindow::TimeRange { t0: 0.5, t1: 3.0 },
    )
    .unwrap();
    assert!((fit.rate + 2.0).abs() < 5e-3, "even rate {:.5}", fit.rate);

    let odd = chebyshev_perturbation(g, &PerturbationSpec::new(vec![(3, 1e-4)])).unwrap();
    let trace = evolve(&odd, &policy, 3.0, &[]).unwrap();
    let fit = rate_fit(
        &trace,
        TraceQuantity::C0RMinusN,
        &FitWindow::TimeRange { t0: 0.5, t1: 2.0 },
    )
    .unwrap();
    assert!((fit.rate + 5.0).abs() < 5e-2, "odd rate {:.5}", fit.rate);
}
