//! Discrete Grönwall windows: a differential hypothesis `F′ ≤ kF + tol`
//! checked by centered differences, and the unit-time conclusion
//! `F(t+1) ≤ e^k F(t)` checked on every aligned pair.

use crate::error::{Error, Result};
use crate::lemmas::{sup_c0_lap, LemmaReport, VerificationConfig, ViolationKind};
use crate::observables::Trace;
use crate::DIM;

/// Relative allowance for the centered-difference estimate of `F′`; covers
/// the O(h²) truncation of e^{−4t}-type decay at cadence 0.05.
const FD_HYPOTHESIS_SLACK: f64 = 0.05;

fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::BadTrace(format!(
            "{} samples cannot support a window check",
            times.len()
        )));
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::BadTrace(format!("non-increasing sample times (step {h})")));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 {
            return Err(Error::BadTrace(format!(
                "non-uniform sample spacing: {} vs {}",
                w[1] - w[0],
                h
            )));
        }
    }
    Ok(h)
}

/// Checks `F′ ≤ kF + tol` (hypothesis) on each unit-time window of a
/// uniformly sampled series and, where the hypothesis holds, asserts
/// `F(t+1) ≤ e^k F(t) + tol·(e^k−1)/k`.
pub fn gronwall_check(times: &[f64], values: &[f64], k: f64, tol: f64) -> Result<LemmaReport> {
    if times.len() != values.len() {
        return Err(Error::BadTrace(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadTrace("non-finite sample in window series".into()));
    }
    let h = uniform_spacing(times)?;
    let mut report = LemmaReport::new("gronwall");
    report.constant("k", k);
    report.constant("spacing", h);

    let m = (1.0 / h).round() as usize;
    if m == 0 || (m as f64 * h - 1.0).abs() > 1e-6 {
        report.inconclusive(None, format!("spacing {h} does not tile unit windows"));
        return Ok(report);
    }
    if values.len() <= m {
        report.inconclusive(None, "series shorter than one unit window");
        return Ok(report);
    }

    let n = values.len();
    let rate = |j: usize| (values[j + 1] - values[j - 1]) / (2.0 * h);
    let excess = |j: usize| rate(j) - k * values[j] - tol;

    let mut hyp_margin = f64::NEG_INFINITY;
    for j in 1..n - 1 {
        hyp_margin = hyp_margin.max(excess(j));
    }
    report.constant("hypothesis_margin", hyp_margin);

    let forcing = if k.abs() < 1e-12 {
        tol
    } else {
        tol * (k.exp() - 1.0) / k
    };
    let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut asserted = 0usize;
    let mut skipped = 0usize;
    let mut concl_margin = f64::NEG_INFINITY;
    for i in 0..n - m {
        let hyp_ok = (i.max(1)..=(i + m).min(n - 2)).all(|j| excess(j) <= 0.0);
        if !hyp_ok {
            skipped += 1;
            continue;
        }
        asserted += 1;
        concl_margin = concl_margin.max(values[i + m] - (k.exp() * values[i] + forcing));
    }
    report.constant("windows_checked", asserted as f64);
    report.constant("windows_hypothesis_failed", skipped as f64);

    if asserted == 0 {
        report.inconclusive(
            Some(ViolationKind::Hypothesis),
            "no unit window satisfies the differential hypothesis",
        );
        return Ok(report);
    }
    report.constant("conclusion_margin", concl_margin);
    if concl_margin > 1e-12 * scale.max(1.0) {
        report.fail_conclusion(format!(
            "integrated bound violated by {concl_margin:.3e} despite a valid hypothesis"
        ));
    }
    Ok(report)
}

enum WindowKind {
    Grad,
    Lap,
}

/// `F(t) = (t−T)‖∇ũ‖² + D‖ũ‖²` on `[T, T+1]`; requires `D ≥ 1/2`.
pub fn lyapunov_f_grad(
    trace: &Trace,
    t_start: f64,
    d: Option<f64>,
    config: &VerificationConfig,
) -> Result<LemmaReport> {
    lyapunov_window(trace, t_start, d, config, WindowKind::Grad)
}

/// `F(t) = (t−T)‖Δũ‖² + D‖∇ũ‖²` on `[T, T+1]`; requires
/// `D ≥ n + 2·sup‖Δũ‖_C⁰`.
pub fn lyapunov_f_lap(
    trace: &Trace,
    t_start: f64,
    d: Option<f64>,
    config: &VerificationConfig,
) -> Result<LemmaReport> {
    lyapunov_window(trace, t_start, d, config, WindowKind::Lap)
}

fn lyapunov_window(
    trace: &Trace,
    t_start: f64,
    d: Option<f64>,
    config: &VerificationConfig,
    kind: WindowKind,
) -> Result<LemmaReport> {
    let (id, d_used, d_bound) = match kind {
        WindowKind::Grad => ("lyapunov_grad_window", d.unwrap_or(config.d_grad), 0.5),
        WindowKind::Lap => (
            "lyapunov_lap_window",
            d.unwrap_or_else(|| config.d_lap_for(trace)),
            DIM + 2.0 * sup_c0_lap(trace),
        ),
    };
    if d_used < d_bound - 1e-12 {
        return Err(Error::InvalidPolicy(format!(
            "window constant {d_used} below admissible bound {d_bound}"
        )));
    }

    let mut report = LemmaReport::new(id);
    report.constant("d_used", d_used);
    report.constant("d_bound", d_bound);
    report.constant("t_start", t_start);

    let window: Vec<_> = trace
        .records
        .iter()
        .filter(|r| r.t >= t_start - 1e-9 && r.t <= t_start + 1.0 + 1e-9)
        .collect();
    if window.len() < 5
        || window[0].t > t_start + 1e-9
        || window[window.len() - 1].t < t_start + 1.0 - 1e-9
    {
        report.inconclusive(None, format!("records do not cover [{t_start}, {}]", t_start + 1.0));
        return Ok(report);
    }

    let times: Vec<f64> = window.iter().map(|r| r.t).collect();
    let h = uniform_spacing(&times)?;
    let f: Vec<f64> = window
        .iter()
        .map(|r| match kind {
            WindowKind::Grad => {
                (r.t - t_start) * r.l2_grad_u_tilde.powi(2) + d_used * r.l2_u_tilde.powi(2)
            }
            WindowKind::Lap => {
                (r.t - t_start) * r.l2_lap_u_tilde.powi(2) + d_used * r.l2_grad_u_tilde.powi(2)
            }
        })
        .collect();
    let k_emp = window
        .iter()
        .map(|r| 2.0 + r.c0_lap_u_tilde)
        .fold(f64::NEG_INFINITY, f64::max);
    report.constant("k_emp", k_emp);
    report.constant("f_start", f[0]);
    report.constant("f_end", f[f.len() - 1]);

    if f[0] <= config.degenerate_floor {
        report.note("degenerate window: functional below floor, conclusion vacuous");
        return Ok(report);
    }

    let mut hyp_rel = f64::NEG_INFINITY;
    let mut max_log_rate = f64::NEG_INFINITY;
    for j in 1..f.len() - 1 {
        let fp = (f[j + 1] - f[j - 1]) / (2.0 * h);
        let local = f[j].max(config.degenerate_floor);
        hyp_rel = hyp_rel.max((fp - k_emp * f[j]) / local);
        max_log_rate = max_log_rate.max(fp / local);
    }
    report.constant("hypothesis_margin_rel", hyp_rel);
    report.constant("max_dlnf_dt", max_log_rate);

    let concl = f[f.len() - 1] / (k_emp.exp() * f[0]) - 1.0;
    report.constant("conclusion_margin", concl);

    if hyp_rel > FD_HYPOTHESIS_SLACK {
        report.inconclusive(
            Some(ViolationKind::Hypothesis),
            format!("differential hypothesis exceeded by relative {hyp_rel:.3e}"),
        );
        return Ok(report);
    }
    if concl > config.window_slack {
        report.fail_conclusion(format!(
            "F({}) exceeds e^k·F({t_start}) by relative {concl:.3e}",
            t_start + 1.0
        ));
    }
    Ok(report)
}
