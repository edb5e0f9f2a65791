//! Entropy machinery: the ε-family of logarithmic Sobolev defects, their
//! calibration over a trace, and the Moser-style iteration along companion
//! heat fields that consumes the calibrated constant.

use std::sync::Arc;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::geometry::{measure_integral, MetricProfile};
use crate::grid::Grid;
use crate::lemmas::{LemmaReport, VerificationConfig};
use crate::observables::Trace;
use crate::{DIM, TOTAL_VOLUME};

/// `∫ v̂² ln v̂ ω − ε ∫ |∇v̂|² ω + (n/2) ln ε` for the L²-normalized `v̂`.
/// The entropy integrand extends by zero where `v̂` vanishes.
pub fn log_sobolev_defect(profile: &MetricProfile, v: &Array1<f64>, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("entropy scale must be positive, got {eps}")));
    }
    let grid = profile.grid();
    if v.len() != grid.n() + 1 {
        return Err(Error::Config(format!(
            "test function has {} values on an N = {} grid",
            v.len(),
            grid.n()
        )));
    }
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Config("non-finite test function".into()));
    }
    if min < -1e-10 {
        return Err(Error::Config(format!(
            "test function dips to {min:.3e}; entropy needs v ≥ 0"
        )));
    }
    let clamped = v.mapv(|x| x.max(0.0));
    let mass = measure_integral(grid, &(&clamped * &clamped));
    if mass <= 0.0 {
        return Err(Error::Config("test function is identically zero".into()));
    }
    let vhat = clamped.mapv(|x| x / mass.sqrt());
    let entropy_integrand = vhat.mapv(|x| if x > 0.0 { x * x * x.ln() } else { 0.0 });
    let entropy = measure_integral(grid, &entropy_integrand);
    let dv = grid.diff1(&vhat);
    let gradient = measure_integral(grid, &(profile.phi() * &dv * &dv));
    Ok(entropy - eps * gradient + 0.5 * DIM * eps.ln())
}

/// Sups the defect over the configured family × ε-grid at every checkpoint;
/// the `t = 0` sup is the calibrated constant and must dominate later times.
pub fn calibrate_logsobolev(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("logsobolev_calibration");
    if trace.checkpoints.len() < 2 {
        report.inconclusive(None, "need at least two checkpoints to compare times");
        return Ok(report);
    }
    let grid = Arc::new(Grid::new(trace.meta.n)?);

    // The measure is fixed, so normalization and the entropy term are
    // profile-independent; only the gradient term varies along the trace.
    struct Prepared {
        entropy: f64,
        dv_sq: Array1<f64>,
        label: String,
    }
    let mut family = Vec::with_capacity(config.test_family.len());
    for tf in &config.test_family {
        let v = tf.materialize(&grid).mapv(|x| x.max(0.0));
        let mass = measure_integral(&grid, &(&v * &v));
        if mass <= 0.0 {
            return Err(Error::Config(format!(
                "test function {} is identically zero",
                tf.describe()
            )));
        }
        let vhat = v.mapv(|x| x / mass.sqrt());
        let entropy_integrand = vhat.mapv(|x| if x > 0.0 { x * x * x.ln() } else { 0.0 });
        let dv = grid.diff1(&vhat);
        family.push(Prepared {
            entropy: measure_integral(&grid, &entropy_integrand),
            dv_sq: &dv * &dv,
            label: tf.describe(),
        });
    }

    let mut c_emp = f64::NEG_INFINITY;
    let mut argmax_label = String::new();
    let mut argmax_eps = f64::NAN;
    let mut later_sup = f64::NEG_INFINITY;
    let mut later_argmax_t = f64::NAN;
    for (k, ckpt) in trace.checkpoints.iter().enumerate() {
        let profile = MetricProfile::from_values_unchecked(grid.clone(), ckpt.phi.clone());
        for prepared in &family {
            let gradient = measure_integral(&grid, &(profile.phi() * &prepared.dv_sq));
            for &eps in &config.eps_grid {
                let defect = prepared.entropy - eps * gradient + 0.5 * DIM * eps.ln();
                if k == 0 {
                    if defect > c_emp {
                        c_emp = defect;
                        argmax_label = prepared.label.clone();
                        argmax_eps = eps;
                    }
                } else if defect > later_sup {
                    later_sup = defect;
                    later_argmax_t = ckpt.t;
                }
            }
        }
    }

    report.constant("c_emp", c_emp);
    report.constant("argmax_eps", argmax_eps);
    report.constant("later_sup", later_sup);
    report.constant("later_sup_t", later_argmax_t);
    report.note(format!("calibrating function: {argmax_label} at ε = {argmax_eps}"));
    if later_sup > c_emp + config.logsobolev_tol {
        report.fail_conclusion(format!(
            "defect grows to {later_sup:.6} at t = {later_argmax_t}, above the t = 0 calibration {c_emp:.6}"
        ));
    }
    Ok(report)
}

/// Iteration exponent `p(t) = 1/(T+1−t)`.
pub fn moser_exponent(t_start: f64, t: f64) -> f64 {
    1.0 / (t_start + 1.0 - t)
}

/// Iteration entropy scale `ε(t) = 4(T+1−t)(t−T)`.
pub fn moser_epsilon(t_start: f64, t: f64) -> f64 {
    4.0 * (t_start + 1.0 - t) * (t - t_start)
}

/// `∫₀¹ −(1/2)·ln(4s(1−s)) ds` by double-exponential quadrature — an
/// independent check of the closed form `1 − ln 2`. The substitution
/// `s = (1+tanh(π/2·sinh τ))/2` flattens the endpoint log singularities.
pub fn moser_time_integral_quadrature() -> f64 {
    let h = 1.0 / 16.0;
    let steps = 128; // τ ∈ [−4, 4]
    let mut sum = 0.0;
    for j in -(steps as i64) / 2..=(steps as i64) / 2 {
        let tau = j as f64 * h;
        let arg = 0.5 * std::f64::consts::PI * tau.sinh();
        let s = 0.5 * (1.0 + arg.tanh());
        let weight = 0.25 * std::f64::consts::PI * tau.cosh() / arg.cosh().powi(2);
        if s <= 0.0 || s >= 1.0 || weight == 0.0 {
            continue;
        }
        sum += weight * (-0.5 * DIM * (4.0 * s * (1.0 - s)).ln());
    }
    sum * h
}

/// Checks the integrated iteration inequality for one companion on
/// `[T, T+1]`: `ln‖f‖_{L^{p_last}}(t_last) − ln‖f‖_{L¹}(T)` against the
/// time integral plus `(sup R⁻(·,0) + n + C_emp)`.
pub fn moser_trace(
    trace: &Trace,
    companion: usize,
    t_start: f64,
    c_emp: f64,
    config: &VerificationConfig,
) -> Result<LemmaReport> {
    let label = trace
        .meta
        .companion_labels
        .get(companion)
        .ok_or_else(|| Error::BadTrace(format!("no companion with index {companion}")))?;
    let grid = Arc::new(Grid::new(trace.meta.n)?);

    let start = trace
        .checkpoints
        .iter()
        .find(|c| (c.t - t_start).abs() < 1e-9)
        .ok_or_else(|| Error::BadTrace(format!("no checkpoint at t = {t_start}")))?;
    let f_start = start
        .companions
        .get(companion)
        .ok_or_else(|| Error::BadTrace(format!("checkpoint lacks companion {companion}")))?;
    let l1_start = measure_integral(&grid, &f_start.mapv(|x| x.max(0.0)));
    if l1_start <= config.denom_floor * TOTAL_VOLUME {
        return Err(Error::BadTrace(format!(
            "companion '{label}' is below the mass floor at t = {t_start}"
        )));
    }

    let samples: Vec<_> = trace
        .checkpoints
        .iter()
        .filter(|c| {
            c.t >= t_start + config.moser_margin - 1e-9
                && c.t <= t_start + 1.0 - config.moser_margin + 1e-9
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::BadTrace(format!(
            "no checkpoints inside the margin-trimmed window at T = {t_start}"
        )));
    }

    let mut report = LemmaReport::new("moser_window");
    report.note(format!("companion '{label}', window start {t_start}"));
    let ln_lp = |ckpt: &crate::observables::Checkpoint| -> f64 {
        let p = moser_exponent(t_start, ckpt.t);
        let f = ckpt.companions[companion].mapv(|x| x.max(0.0));
        let integral = measure_integral(&grid, &f.mapv(|x| x.powf(p)));
        integral.ln() / p
    };

    let mut max_rate = f64::NEG_INFINITY;
    let values: Vec<(f64, f64)> = samples.iter().map(|c| (c.t, ln_lp(c))).collect();
    for w in values.windows(2) {
        max_rate = max_rate.max((w[1].1 - w[0].1) / (w[1].0 - w[0].0));
    }

    let (t_last, ln_last) = *values.last().expect("nonempty samples");
    let p_last = moser_exponent(t_start, t_last);
    let lhs = ln_last - l1_start.ln();
    let sup_r_minus = trace.records.first().map_or(0.0, |r| (-r.min_r).max(0.0));
    let time_integral = moser_time_integral_quadrature();
    let rhs = time_integral + sup_r_minus + DIM + c_emp;

    report.constant("lhs", lhs);
    report.constant("rhs", rhs);
    report.constant("margin", rhs - lhs);
    report.constant("p_last", p_last);
    report.constant("samples", values.len() as f64);
    report.constant("time_integral", time_integral);
    report.constant("sup_r_minus_initial", sup_r_minus);
    report.constant("c_emp_used", c_emp);
    if max_rate.is_finite() {
        report.constant("max_dlnlp_dt", max_rate);
    }
    if lhs > rhs + 1e-12 {
        report.fail_conclusion(format!(
            "iteration bound violated: lhs {lhs:.6} exceeds rhs {rhs:.6}"
        ));
    }
    Ok(report)
}
