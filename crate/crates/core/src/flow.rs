//! Time integration: the profile equation, companion heat fields, and the
//! gauge-corrected time derivative used by the residual harness.
//!
//! The profile evolves by `∂ₜφ = φφ″ − (φ′)² − xφ′ + φ` (the expanded
//! form; regular at the degenerate boundary, no division by φ). The
//! equivalent potential form `φ²u″` is kept only as a cross-check.
//! Companions evolve by the literal heat equation `∂ₜf = (φf′)′`; with the
//! measure fixed in this gauge their mass is conserved exactly.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometrySnapshot, MetricProfile};
use crate::grid::Grid;
use crate::observables::{record, Checkpoint, Trace, TraceMeta, TRACE_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtRule {
    Fixed { dt: f64 },
    /// Per-step bound from the local mesh/diffusivity balance; aborts the
    /// run if the bound falls below `floor`.
    CflAdaptive { safety: f64, floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepPolicy {
    pub dt: DtRule,
    /// Record cadence; must divide 1.0 so window offsets {1,2,3} land on
    /// sample times.
    pub cadence: f64,
    /// Full-field checkpoint cadence; must be a multiple of `cadence`.
    pub checkpoint_cadence: f64,
    /// Exponential damping of the top third of the spectrum, off by default.
    pub filter_strength: Option<f64>,
    /// Reset φ(±1) to exactly 0 after each step.
    pub repin: bool,
    /// Permitted drift of the boundary slopes during a run.
    pub slope_tol: f64,
    /// Compare the expanded and potential-form right-hand sides on every
    /// accepted step (sup over interior nodes, reported in the trace).
    pub cross_check: bool,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            dt: DtRule::Fixed { dt: 1e-4 },
            cadence: 0.05,
            checkpoint_cadence: 0.5,
            filter_strength: None,
            repin: true,
            slope_tol: 1e-5,
            cross_check: true,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        match self.dt {
            DtRule::Fixed { dt } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::InvalidPolicy(format!("fixed dt = {dt} must be > 0")));
                }
            }
            DtRule::CflAdaptive { safety, floor } => {
                if !(safety > 0.0 && safety.is_finite()) {
                    return Err(Error::InvalidPolicy(format!(
                        "cfl safety = {safety} must be > 0"
                    )));
                }
                if !(floor >= 0.0) {
                    return Err(Error::InvalidPolicy(format!(
                        "cfl floor = {floor} must be >= 0"
                    )));
                }
            }
        }
        if !(self.cadence > 0.0) {
            return Err(Error::InvalidPolicy("cadence must be > 0".into()));
        }
        let per_unit = 1.0 / self.cadence;
        if (per_unit - per_unit.round()).abs() > 1e-9 {
            return Err(Error::InvalidPolicy(format!(
                "cadence {} must divide 1.0",
                self.cadence
            )));
        }
        let ratio = self.checkpoint_cadence / self.cadence;
        if !(self.checkpoint_cadence > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidPolicy(format!(
                "checkpoint cadence {} must be a multiple of cadence {}",
                self.checkpoint_cadence, self.cadence
            )));
        }
        if let Some(s) = self.filter_strength {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidPolicy(format!("filter strength {s}")));
            }
        }
        if !(self.slope_tol > 0.0) {
            return Err(Error::InvalidPolicy("slope tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanionInit {
    Constant { value: f64 },
    /// `1 + x`: on the frozen round background this is the exact
    /// eigen-solution `1 + e^{−t}x`.
    OnePlusX,
    /// `exp(−((x−center)/width)²)`, a localized positive bump.
    Bump { center: f64, width: f64 },
    Nodes { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompanionSpec {
    pub label: String,
    pub init: CompanionInit,
}

impl CompanionSpec {
    pub fn materialize(&self, grid: &Grid) -> Result<Array1<f64>> {
        let values = match &self.init {
            CompanionInit::Constant { value } => Array1::from_elem(grid.n() + 1, *value),
            CompanionInit::OnePlusX => grid.nodes().mapv(|x| 1.0 + x),
            CompanionInit::Bump { center, width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidPolicy(format!(
                        "bump width {width} must be > 0"
                    )));
                }
                grid.nodes()
                    .mapv(|x| (-((x - center) / width).powi(2)).exp())
            }
            CompanionInit::Nodes { values } => {
                if values.len() != grid.n() + 1 {
                    return Err(Error::GridSize(values.len()));
                }
                Array1::from_vec(values.clone())
            }
        };
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::InvalidPolicy(format!(
                "companion '{}' has negative initial data ({min:.3e})",
                self.label
            )));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone)]
pub struct CompanionField {
    pub label: String,
    pub values: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub profile: MetricProfile,
    pub companions: Vec<CompanionField>,
}

/// Expanded right-hand side `φφ″ − (φ′)² − xφ′ + φ`.
pub fn rhs(profile: &MetricProfile) -> Array1<f64> {
    rhs_raw(profile.grid(), profile.phi())
}

fn rhs_raw(grid: &Grid, phi: &Array1<f64>) -> Array1<f64> {
    let d1 = grid.diff1(phi);
    let d2 = grid.diff2(phi);
    let x = grid.nodes();
    Array1::from_shape_fn(phi.len(), |j| {
        phi[j] * d2[j] - d1[j] * d1[j] - x[j] * d1[j] + phi[j]
    })
}

/// Potential-form right-hand side `φ²u″`, with `u′ = (φ′+x)/φ` extended by
/// l'Hôpital at the endpoints. Cross-check only; never used for stepping.
pub fn rhs_potential_form(profile: &MetricProfile) -> Array1<f64> {
    let grid = profile.grid();
    let n = grid.n();
    let phi = profile.phi();
    let d1 = grid.diff1(phi);
    let d2 = grid.diff2(phi);
    let x = grid.nodes();
    let mut u_prime = Array1::zeros(n + 1);
    for j in 1..n {
        u_prime[j] = (d1[j] + x[j]) / phi[j];
    }
    u_prime[0] = (d2[0] + 1.0) / d1[0];
    u_prime[n] = (d2[n] + 1.0) / d1[n];
    let u2 = grid.diff1(&u_prime);
    Array1::from_shape_fn(n + 1, |j| phi[j] * phi[j] * u2[j])
}

/// Heat right-hand side `(φf′)′` on the current background.
pub fn heat_rhs(profile: &MetricProfile, f: &Array1<f64>) -> Array1<f64> {
    heat_rhs_raw(profile.grid(), profile.phi(), f)
}

fn heat_rhs_raw(grid: &Grid, phi: &Array1<f64>, f: &Array1<f64>) -> Array1<f64> {
    let flux = phi * &grid.diff1(f);
    grid.diff1(&flux)
}

/// Explicit-step bound `safety · min_j Δx_j² / max(φ_j, |φ′_j|·dist_j)`
/// over interior nodes, where `dist_j` is the distance to the boundary.
pub fn cfl_dt(profile: &MetricProfile, safety: f64) -> f64 {
    let grid = profile.grid();
    let n = grid.n();
    let x = grid.nodes();
    let phi = profile.phi();
    let d1 = grid.diff1(phi);
    let mut bound = f64::INFINITY;
    for j in 1..n {
        let dx = (x[j] - x[j - 1]).min(x[j + 1] - x[j]);
        let dist = (x[j] + 1.0).min(1.0 - x[j]);
        let speed = phi[j].max(d1[j].abs() * dist).max(1e-300);
        bound = bound.min(dx * dx / speed);
    }
    safety * bound
}

struct Derivatives {
    phi: Array1<f64>,
    comps: Vec<Array1<f64>>,
}

fn eval_derivatives(grid: &Grid, phi: &Array1<f64>, comps: &[Array1<f64>]) -> Derivatives {
    Derivatives {
        phi: rhs_raw(grid, phi),
        comps: comps.iter().map(|f| heat_rhs_raw(grid, phi, f)).collect(),
    }
}

fn shifted(
    phi: &Array1<f64>,
    comps: &[Array1<f64>],
    d: &Derivatives,
    h: f64,
) -> (Array1<f64>, Vec<Array1<f64>>) {
    let phi2 = phi + &(h * &d.phi);
    let comps2 = comps
        .iter()
        .zip(&d.comps)
        .map(|(f, df)| f + &(h * df))
        .collect();
    (phi2, comps2)
}

/// One classical Runge–Kutta step of the joint (profile, companions)
/// system, followed by re-pinning, optional filtering, and validity checks.
pub fn step(state: &mut FlowState, dt: f64, policy: &StepPolicy) -> Result<()> {
    let filter = policy
        .filter_strength
        .map(|s| state.profile.grid().filter_matrix(s));
    advance(state, dt, policy, filter.as_ref())
}

fn advance(
    state: &mut FlowState,
    dt: f64,
    policy: &StepPolicy,
    filter: Option<&Array2<f64>>,
) -> Result<()> {
    let grid = state.profile.grid().clone();
    let n = grid.n();
    let phi0 = state.profile.phi().clone();
    let comps0: Vec<Array1<f64>> = state.companions.iter().map(|c| c.values.clone()).collect();

    let k1 = eval_derivatives(&grid, &phi0, &comps0);
    let (p2, c2) = shifted(&phi0, &comps0, &k1, 0.5 * dt);
    let k2 = eval_derivatives(&grid, &p2, &c2);
    let (p3, c3) = shifted(&phi0, &comps0, &k2, 0.5 * dt);
    let k3 = eval_derivatives(&grid, &p3, &c3);
    let (p4, c4) = shifted(&phi0, &comps0, &k3, dt);
    let k4 = eval_derivatives(&grid, &p4, &c4);

    let sixth = dt / 6.0;
    let mut phi = Array1::from_shape_fn(n + 1, |j| {
        phi0[j] + sixth * (k1.phi[j] + 2.0 * k2.phi[j] + 2.0 * k3.phi[j] + k4.phi[j])
    });
    let mut comps: Vec<Array1<f64>> = (0..comps0.len())
        .map(|i| {
            Array1::from_shape_fn(n + 1, |j| {
                comps0[i][j]
                    + sixth
                        * (k1.comps[i][j]
                            + 2.0 * k2.comps[i][j]
                            + 2.0 * k3.comps[i][j]
                            + k4.comps[i][j])
            })
        })
        .collect();

    if let Some(fm) = filter {
        phi = fm.dot(&phi);
        for c in comps.iter_mut() {
            *c = fm.dot(c);
        }
    }
    if policy.repin {
        phi[0] = 0.0;
        phi[n] = 0.0;
    }

    let t_new = state.t + dt;
    for (i, c) in comps.iter().enumerate() {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: t_new,
                field: state.companions[i].label.clone(),
            });
        }
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: t_new,
            field: "phi".into(),
        });
    }
    let mut min_phi = f64::INFINITY;
    let mut argmin = 0;
    for j in 1..n {
        if phi[j] < min_phi {
            min_phi = phi[j];
            argmin = j;
        }
    }
    if min_phi <= 0.0 {
        return Err(Error::PositivityLoss {
            t: t_new,
            min_phi,
            x: grid.nodes()[argmin],
        });
    }
    let d1 = grid.diff1(&phi);
    let drift = (d1[0] - 1.0).abs().max((d1[n] + 1.0).abs());
    if drift > policy.slope_tol {
        return Err(Error::InvalidProfile {
            what: format!("boundary slope drift at t = {t_new:.6}"),
            magnitude: drift,
        });
    }

    state.t = t_new;
    state.profile = MetricProfile::from_values_unchecked(grid, phi);
    for (c, v) in state.companions.iter_mut().zip(comps) {
        c.values = v;
    }
    Ok(())
}

/// Sup over interior nodes of the disagreement between the two right-hand
/// side forms on the current profile.
fn rhs_cross_check(profile: &MetricProfile) -> f64 {
    let a = rhs(profile);
    let b = rhs_potential_form(profile);
    let n = profile.grid().n();
    let mut worst = 0.0f64;
    for j in 1..n {
        worst = worst.max((a[j] - b[j]).abs());
    }
    worst
}

/// Integrates to `t_max`, recording at the policy cadence. Mid-run
/// failures (positivity, step-size floor, non-finite fields, slope drift)
/// return the partial trace flagged incomplete; only configuration
/// problems are hard errors.
pub fn evolve(
    initial: &MetricProfile,
    policy: &StepPolicy,
    t_max: f64,
    companions: &[CompanionSpec],
) -> Result<Trace> {
    policy.validate()?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidPolicy(format!("t_max = {t_max} must be > 0")));
    }
    let segments = t_max / policy.cadence;
    if (segments - segments.round()).abs() > 1e-9 {
        return Err(Error::InvalidPolicy(format!(
            "t_max {t_max} must be a multiple of cadence {}",
            policy.cadence
        )));
    }
    let segments = segments.round() as usize;
    let report = initial.validate();
    if !report.ok {
        return Err(Error::InvalidProfile {
            what: report.what.unwrap_or_default(),
            magnitude: report.magnitude,
        });
    }

    let grid = initial.grid().clone();
    let filter = policy.filter_strength.map(|s| grid.filter_matrix(s));
    let ckpt_every = (policy.checkpoint_cadence / policy.cadence).round() as usize;

    let mut state = FlowState {
        t: 0.0,
        profile: initial.clone(),
        companions: companions
            .iter()
            .map(|spec| {
                Ok(CompanionField {
                    label: spec.label.clone(),
                    values: spec.materialize(&grid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let mut trace = Trace {
        meta: TraceMeta {
            schema_version: TRACE_SCHEMA_VERSION,
            n: grid.n(),
            cadence: policy.cadence,
            checkpoint_cadence: policy.checkpoint_cadence,
            t_max,
            companion_labels: companions.iter().map(|c| c.label.clone()).collect(),
            complete: false,
            abort: None,
            steps: 0,
            cross_check_max: 0.0,
            min_dt_used: f64::INFINITY,
            config_hash: None,
        },
        records: Vec::with_capacity(segments + 1),
        checkpoints: Vec::new(),
    };

    let observe = |trace: &mut Trace, state: &FlowState, ckpt: bool| -> Result<()> {
        let snap = GeometrySnapshot::compute(&state.profile)?;
        let fields: Vec<Array1<f64>> =
            state.companions.iter().map(|c| c.values.clone()).collect();
        trace.records.push(record(state.t, &snap, &fields));
        if ckpt {
            trace.checkpoints.push(Checkpoint {
                t: state.t,
                phi: state.profile.phi().clone(),
                companions: fields,
            });
        }
        Ok(())
    };

    observe(&mut trace, &state, true)?;

    'outer: for k in 1..=segments {
        let target = k as f64 * policy.cadence;
        while state.t < target - 1e-12 {
            let dt_nominal = match policy.dt {
                DtRule::Fixed { dt } => dt,
                DtRule::CflAdaptive { safety, floor } => {
                    let b = cfl_dt(&state.profile, safety);
                    if b < floor {
                        trace.meta.abort = Some(
                            Error::CflViolation {
                                t: state.t,
                                dt: b,
                                bound: floor,
                            }
                            .to_string(),
                        );
                        break 'outer;
                    }
                    b
                }
            };
            let dt = dt_nominal.min(target - state.t);
            if let Err(e) = advance(&mut state, dt, policy, filter.as_ref()) {
                trace.meta.abort = Some(e.to_string());
                break 'outer;
            }
            trace.meta.steps += 1;
            trace.meta.min_dt_used = trace.meta.min_dt_used.min(dt);
            if policy.cross_check {
                trace.meta.cross_check_max = trace
                    .meta
                    .cross_check_max
                    .max(rhs_cross_check(&state.profile));
            }
        }
        if trace.meta.abort.is_some() {
            break;
        }
        state.t = target;
        let ckpt = k % ckpt_every == 0 || k == segments;
        if let Err(e) = observe(&mut trace, &state, ckpt) {
            trace.meta.abort = Some(e.to_string());
            break;
        }
    }

    trace.meta.complete = trace.meta.abort.is_none();
    if !trace.meta.min_dt_used.is_finite() {
        trace.meta.min_dt_used = 0.0;
    }
    Ok(trace)
}

/// Gauge-corrected time derivative `Dₜ[F] = ∂ₜF|ₓ + (φ′+x)·F′` at the
/// middle frame, from 3 (2nd order) or 5 (4th order) uniformly spaced
/// frames. The transport velocity `φu′ = φ′ + x` converts fixed-`x`
/// derivatives to the fixed-complex-gauge derivatives the evolution
/// identities are stated in.
pub fn gauge_time_derivative(
    grid: &Grid,
    phi_center: &Array1<f64>,
    frames: &[&Array1<f64>],
    spacing: f64,
) -> Result<Array1<f64>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidPolicy(format!("frame spacing {spacing}")));
    }
    let dfdt = match frames.len() {
        3 => (frames[2] - frames[0]) / (2.0 * spacing),
        5 => {
            (&(frames[0] - frames[4]) + &(8.0 * &(frames[3] - frames[1]))) / (12.0 * spacing)
        }
        got => {
            return Err(Error::StencilTooShort { needed: 3, got });
        }
    };
    let center = frames[frames.len() / 2];
    let q = &grid.diff1(phi_center) + grid.nodes();
    Ok(&dfdt + &(&q * &grid.diff1(center)))
}
