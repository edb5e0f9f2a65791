//! The verification harness: residual checks for the evolution identities
//! and quantitative window/ratio/entropy checks, each returning a
//! [`LemmaReport`] with empirical constants and a verdict.
//!
//! Verdicts distinguish hypothesis violations from conclusion violations:
//! a contract probe with a deliberately broken hypothesis must not read as
//! a falsified statement. All checks are pure functions of
//! `(trace, config)` — rerunning yields identical reports.

mod chain;
mod entropy;
mod gronwall;
mod ratios;
mod residuals;
#[cfg(test)]
pub(crate) mod testkit;

pub use chain::theorem_chain;
pub use entropy::{
    calibrate_logsobolev, log_sobolev_defect, moser_epsilon, moser_exponent,
    moser_time_integral_quadrature, moser_trace,
};
pub use gronwall::{gronwall_check, lyapunov_f_grad, lyapunov_f_lap};
pub use ratios::{
    heat_kernel_check, min_scalar_monotone, ratio_grad, ratio_lap, ratio_smooth,
    smallness_monitor,
};
pub use residuals::{evolution_residuals, supersolution_residual};

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::observables::{FitWindow, Trace};
use crate::DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// A precondition of the statement failed (or was deliberately broken);
    /// the conclusion was not asserted.
    Hypothesis,
    /// The hypothesis held and the conclusion failed its tolerance.
    Conclusion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub id: String,
    pub constants: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    /// Inter-level relative deltas, filled by refinement drivers.
    pub refinement: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub violation: Option<ViolationKind>,
    pub notes: Vec<String>,
}

impl LemmaReport {
    pub(crate) fn new(id: &str) -> Self {
        LemmaReport {
            id: id.into(),
            constants: BTreeMap::new(),
            residuals: BTreeMap::new(),
            refinement: BTreeMap::new(),
            verdict: Verdict::Pass,
            violation: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn constant(&mut self, key: &str, value: f64) -> &mut Self {
        self.constants.insert(key.into(), value);
        self
    }

    pub(crate) fn residual(&mut self, key: &str, value: f64) -> &mut Self {
        self.residuals.insert(key.into(), value);
        self
    }

    pub(crate) fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub(crate) fn fail_conclusion(&mut self, note: impl Into<String>) -> &mut Self {
        self.verdict = Verdict::Fail;
        self.violation = Some(ViolationKind::Conclusion);
        self.note(note)
    }

    pub(crate) fn inconclusive(&mut self, kind: Option<ViolationKind>, note: impl Into<String>) -> &mut Self {
        self.verdict = Verdict::Inconclusive;
        self.violation = kind;
        self.note(note)
    }

    /// True only for a failed conclusion; drives the verify exit code.
    pub fn is_conclusion_violation(&self) -> bool {
        self.verdict == Verdict::Fail && self.violation == Some(ViolationKind::Conclusion)
    }
}

/// Non-negative test functions for the entropy inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Constant,
    Bump { center: f64, width: f64 },
}

impl TestFunction {
    pub fn materialize(&self, grid: &Grid) -> Array1<f64> {
        match *self {
            TestFunction::Constant => Array1::from_elem(grid.n() + 1, 1.0),
            TestFunction::Bump { center, width } => grid
                .nodes()
                .mapv(|x| (-((x - center) / width).powi(2)).exp()),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            TestFunction::Constant => "constant".into(),
            TestFunction::Bump { center, width } => format!("bump({center},{width})"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    /// L² tolerance for the five evolution-identity residuals.
    pub evolution_residual_tol: f64,
    /// Frames per time stencil: 3 (2nd order) or 5 (4th order).
    pub stencil_frames: usize,
    /// Lyapunov constant for the gradient window lemma; must be ≥ 1/2.
    pub d_grad: f64,
    /// Lyapunov constant for the Laplacian window lemma; `None` derives
    /// `n + 2·sup‖Δũ‖_C⁰` from the trace.
    pub d_lap: Option<f64>,
    /// Supersolution constant; `None` derives `2·sup‖Δũ‖_C⁰`.
    pub d_smooth: Option<f64>,
    /// Smallness threshold for the window monitor on `‖u‖_C⁰`.
    pub delta_small: f64,
    /// Ratios ignore samples whose denominator sits below this floor.
    pub denom_floor: f64,
    /// `l2_u_tilde` band over which late-time ratio asymptotes are read.
    pub ratio_tail_band: (f64, f64),
    /// Same for the three-offset smoothing ratio (numerator is noisier).
    pub ratio_smooth_tail_band: (f64, f64),
    pub eps_grid: Vec<f64>,
    pub test_family: Vec<TestFunction>,
    pub logsobolev_tol: f64,
    pub supersolution_tol: f64,
    pub supersolution_t: f64,
    /// Relative slack on window conclusions `F(T+1) ≤ e^k F(T)`.
    pub window_slack: f64,
    /// Below this, a window functional is reported degenerate, not tested.
    pub degenerate_floor: f64,
    pub moser_margin: f64,
    pub moser_t_starts: Vec<f64>,
    pub min_r_slack: f64,
    pub chain_split: f64,
    pub fit_window: FitWindow,
    pub lyapunov_t_values: Vec<f64>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            evolution_residual_tol: 1e-5,
            stencil_frames: 5,
            d_grad: 0.5,
            d_lap: None,
            d_smooth: None,
            delta_small: 0.05,
            denom_floor: 1e-10,
            ratio_tail_band: (1e-8, 1e-3),
            ratio_smooth_tail_band: (1e-6, 1e-3),
            eps_grid: vec![0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0],
            test_family: vec![
                TestFunction::Constant,
                TestFunction::Bump {
                    center: 0.0,
                    width: 0.5,
                },
                TestFunction::Bump {
                    center: 0.0,
                    width: 0.25,
                },
                TestFunction::Bump {
                    center: 0.0,
                    width: 0.1,
                },
                TestFunction::Bump {
                    center: 0.5,
                    width: 0.25,
                },
            ],
            logsobolev_tol: 1e-3,
            supersolution_tol: 1e-4,
            supersolution_t: 0.0,
            window_slack: 1e-9,
            degenerate_floor: 1e-24,
            moser_margin: 0.05,
            moser_t_starts: vec![0.0, 3.0],
            min_r_slack: 1e-6,
            chain_split: 3.0,
            fit_window: FitWindow::DenomBand { lo: 1e-8, hi: 1e-3 },
            lyapunov_t_values: (0..=15).map(|k| k as f64).collect(),
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stencil_frames != 3 && self.stencil_frames != 5 {
            return Err(Error::InvalidPolicy(format!(
                "stencil frames {} (want 3 or 5)",
                self.stencil_frames
            )));
        }
        if self.d_grad < 0.5 {
            return Err(Error::InvalidPolicy(format!(
                "gradient window constant {} below 1/2",
                self.d_grad
            )));
        }
        for (name, v) in [
            ("evolution residual tolerance", self.evolution_residual_tol),
            ("smallness threshold", self.delta_small),
            ("denominator floor", self.denom_floor),
            ("entropy tolerance", self.logsobolev_tol),
            ("supersolution tolerance", self.supersolution_tol),
            ("endpoint margin", self.moser_margin),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidPolicy(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0)) || self.eps_grid.is_empty() {
            return Err(Error::InvalidPolicy("epsilon grid must be positive".into()));
        }
        Ok(())
    }

    /// `n + 2·sup‖Δũ‖_C⁰` from the trace unless pinned in the config.
    pub fn d_lap_for(&self, trace: &Trace) -> f64 {
        self.d_lap
            .unwrap_or_else(|| DIM + 2.0 * sup_c0_lap(trace))
    }

    /// `2·sup‖Δũ‖_C⁰` from the trace unless pinned in the config.
    pub fn d_smooth_for(&self, trace: &Trace) -> f64 {
        self.d_smooth.unwrap_or_else(|| 2.0 * sup_c0_lap(trace))
    }
}

pub(crate) fn sup_c0_lap(trace: &Trace) -> f64 {
    trace
        .records
        .iter()
        .map(|r| r.c0_lap_u_tilde)
        .fold(0.0, f64::max)
}

/// Runs every check once with the given config, in a fixed order.
pub fn run_all(trace: &Trace, config: &VerificationConfig) -> Result<Vec<LemmaReport>> {
    config.validate()?;
    let mut reports = Vec::new();

    reports.push(evolution_residuals(trace, config)?);
    reports.push(lyapunov_sweep(trace, config, WindowKind::Grad)?);
    reports.push(lyapunov_sweep(trace, config, WindowKind::Lap)?);
    reports.push(ratio_grad(trace, config)?);
    reports.push(ratio_lap(trace, config)?);
    reports.push(ratio_smooth(trace, config)?);
    reports.push(heat_kernel_report(trace, config));
    let calibration = calibrate_logsobolev(trace, config)?;
    let c_emp = calibration.constants.get("c_emp").copied().unwrap_or(0.0);
    reports.push(calibration);
    reports.push(moser_report(trace, config, c_emp));
    reports.push(supersolution_residual(
        trace,
        config.supersolution_t,
        None,
        config,
    )?);
    reports.push(min_scalar_monotone(trace, config)?);
    reports.push(smallness_monitor(trace, config.delta_small, config)?);
    reports.push(theorem_chain(trace, config.chain_split, config)?);

    Ok(reports)
}

enum WindowKind {
    Grad,
    Lap,
}

/// One aggregated report over every admissible start time in the config.
fn lyapunov_sweep(
    trace: &Trace,
    config: &VerificationConfig,
    kind: WindowKind,
) -> Result<LemmaReport> {
    let (id, run): (
        &str,
        fn(&Trace, f64, Option<f64>, &VerificationConfig) -> Result<LemmaReport>,
    ) = match kind {
        WindowKind::Grad => ("lyapunov_grad", lyapunov_f_grad),
        WindowKind::Lap => ("lyapunov_lap", lyapunov_f_lap),
    };
    let mut agg = LemmaReport::new(id);
    let mut checked = 0usize;
    let mut degenerate = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut k_max = 0.0f64;
    for &t_start in &config.lyapunov_t_values {
        if t_start + 1.0 > trace.meta.t_max + 1e-9 {
            continue;
        }
        let rep = run(trace, t_start, None, config)?;
        checked += 1;
        if rep.notes.iter().any(|n| n.contains("degenerate")) {
            degenerate += 1;
        }
        if let Some(&m) = rep.constants.get("conclusion_margin") {
            if m > worst_margin {
                worst_margin = m;
                agg.constant("worst_margin_t", t_start);
            }
        }
        if let Some(&k) = rep.constants.get("k_emp") {
            k_max = k_max.max(k);
        }
        if rep.verdict == Verdict::Fail {
            agg.verdict = Verdict::Fail;
            agg.violation = rep.violation;
            agg.note(format!("window starting at t = {t_start} failed"));
        }
    }
    agg.constant("windows_checked", checked as f64);
    agg.constant("windows_degenerate", degenerate as f64);
    agg.constant("k_emp_max", k_max);
    if worst_margin.is_finite() {
        agg.constant("conclusion_margin_worst", worst_margin);
    }
    if checked == 0 {
        agg.inconclusive(None, "no admissible window start times");
    } else if checked == degenerate {
        agg.note("all windows degenerate (functional below floor)");
    }
    Ok(agg)
}

fn heat_kernel_report(trace: &Trace, config: &VerificationConfig) -> LemmaReport {
    match heat_kernel_check(trace, config) {
        Ok(rep) => rep,
        Err(e) => {
            let mut rep = LemmaReport::new("heat_kernel");
            rep.inconclusive(None, format!("skipped: {e}"));
            rep
        }
    }
}

/// Worst case over configured window starts and every companion.
fn moser_report(trace: &Trace, config: &VerificationConfig, c_emp: f64) -> LemmaReport {
    let mut agg = LemmaReport::new("moser");
    if trace.meta.companion_labels.is_empty() {
        agg.inconclusive(None, "no companion fields to iterate on");
        return agg;
    }
    let mut worst_excess = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for &t_start in &config.moser_t_starts {
        if t_start + 1.0 > trace.meta.t_max + 1e-9 {
            continue;
        }
        for c_idx in 0..trace.meta.companion_labels.len() {
            match moser_trace(trace, c_idx, t_start, c_emp, config) {
                Ok(rep) => {
                    checked += 1;
                    let lhs = rep.constants.get("lhs").copied().unwrap_or(0.0);
                    let rhs = rep.constants.get("rhs").copied().unwrap_or(0.0);
                    if lhs - rhs > worst_excess {
                        worst_excess = lhs - rhs;
                        for (k, v) in &rep.constants {
                            agg.constants.insert(k.clone(), *v);
                        }
                        agg.constant("companion_index", c_idx as f64);
                        agg.constant("t_start", t_start);
                    }
                    if rep.verdict == Verdict::Fail {
                        agg.verdict = Verdict::Fail;
                        agg.violation = rep.violation;
                        agg.note(format!(
                            "companion {c_idx} window at t = {t_start} failed"
                        ));
                    }
                }
                Err(e) => {
                    agg.note(format!("companion {c_idx} at t = {t_start}: {e}"));
                }
            }
        }
    }
    if checked == 0 {
        agg.inconclusive(None, "no admissible iteration window");
    } else {
        agg.constant("windows_checked", checked as f64);
    }
    agg
}
