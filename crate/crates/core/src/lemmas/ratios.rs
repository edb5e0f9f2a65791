//! Window-ratio constants: smoothing inequalities of the form
//! `‖·‖(t + offset) ≤ C·‖·‖(t)` measured as empirical sups, plus the
//! kernel-bound and smallness monitors built the same way.

use crate::error::{Error, Result};
use crate::lemmas::{LemmaReport, VerificationConfig};
use crate::observables::{ObservableRecord, Trace};
use crate::DIM;

struct RatioScan {
    sup: f64,
    argmax_t: f64,
    used: usize,
    floored: usize,
    tail: Vec<f64>,
}

fn scan_pairs(
    pairs: &[(&ObservableRecord, &ObservableRecord)],
    numerator: impl Fn(&ObservableRecord) -> f64,
    denominator: impl Fn(&ObservableRecord) -> f64,
    floor: f64,
    tail_band: (f64, f64),
) -> RatioScan {
    let mut scan = RatioScan {
        sup: f64::NEG_INFINITY,
        argmax_t: f64::NAN,
        used: 0,
        floored: 0,
        tail: Vec::new(),
    };
    for (r0, r1) in pairs {
        let den = denominator(r0);
        if den <= floor {
            scan.floored += 1;
            continue;
        }
        let ratio = numerator(r1) / den;
        scan.used += 1;
        if ratio > scan.sup {
            scan.sup = ratio;
            scan.argmax_t = r0.t;
        }
        if den >= tail_band.0 && den <= tail_band.1 {
            scan.tail.push(ratio);
        }
    }
    scan
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn ratio_report(
    id: &str,
    trace: &Trace,
    offset: f64,
    numerator: impl Fn(&ObservableRecord) -> f64,
    denominator: impl Fn(&ObservableRecord) -> f64,
    tail_band: (f64, f64),
    config: &VerificationConfig,
) -> Result<LemmaReport> {
    let mut report = LemmaReport::new(id);
    report.constant("offset", offset);
    let pairs = trace.offset_pairs(offset)?;
    if pairs.is_empty() {
        report.inconclusive(None, format!("trace shorter than the {offset}-unit offset"));
        return Ok(report);
    }
    let mut scan = scan_pairs(&pairs, numerator, denominator, config.denom_floor, tail_band);
    report.constant("samples_floored", scan.floored as f64);
    if scan.used == 0 {
        report.inconclusive(
            None,
            "degenerate: every denominator below the floor".to_string(),
        );
        return Ok(report);
    }
    report.constant("c_emp", scan.sup);
    report.constant("argmax_t", scan.argmax_t);
    report.constant("samples_used", scan.used as f64);
    if !scan.tail.is_empty() {
        report.constant("tail_samples", scan.tail.len() as f64);
        report.constant("tail_median", median(&mut scan.tail));
    }
    if !scan.sup.is_finite() {
        report.fail_conclusion("empirical constant is not finite");
    }
    Ok(report)
}

/// `sup_t ‖∇ũ‖_{L²}(t+1) / ‖ũ‖_{L²}(t)` above the denominator floor.
pub fn ratio_grad(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    ratio_report(
        "ratio_grad",
        trace,
        1.0,
        |r| r.l2_grad_u_tilde,
        |r| r.l2_u_tilde,
        config.ratio_tail_band,
        config,
    )
}

/// `sup_t ‖Δũ‖_{L²}(t+1) / ‖∇ũ‖_{L²}(t)`.
pub fn ratio_lap(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    ratio_report(
        "ratio_lap",
        trace,
        1.0,
        |r| r.l2_lap_u_tilde,
        |r| r.l2_grad_u_tilde,
        config.ratio_tail_band,
        config,
    )
}

/// `sup_t (‖Δũ‖_{C⁰} + ‖∇ũ‖_{C⁰})(t+3) / ‖ũ‖_{L²}(t)` — the full
/// three-unit smoothing chain.
pub fn ratio_smooth(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    ratio_report(
        "ratio_smooth",
        trace,
        3.0,
        |r| r.c0_lap_u_tilde + r.c0_grad_u_tilde,
        |r| r.l2_u_tilde,
        config.ratio_smooth_tail_band,
        config,
    )
}

/// `sup_t ‖f‖_{C⁰}(t+1) / ‖f‖_{L¹}(t)` for every companion heat field.
pub fn heat_kernel_check(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    if trace.meta.companion_labels.is_empty() {
        return Err(Error::BadTrace("no companion fields in trace".into()));
    }
    let mut report = LemmaReport::new("heat_kernel");
    let pairs = trace.offset_pairs(1.0)?;
    if pairs.is_empty() {
        report.inconclusive(None, "trace shorter than the unit offset");
        return Ok(report);
    }
    let mut overall = f64::NEG_INFINITY;
    let mut any = false;
    for (k, label) in trace.meta.companion_labels.iter().enumerate() {
        let scan = scan_pairs(
            &pairs,
            |r| r.companions.get(k).map_or(f64::NAN, |c| c.c0),
            |r| r.companions.get(k).map_or(0.0, |c| c.l1),
            config.denom_floor,
            (f64::INFINITY, f64::NEG_INFINITY),
        );
        if scan.used == 0 {
            report.note(format!("companion '{label}' degenerate (mass below floor)"));
            continue;
        }
        any = true;
        report.constant(&format!("c_emp_{label}"), scan.sup);
        report.constant(&format!("argmax_t_{label}"), scan.argmax_t);
        overall = overall.max(scan.sup);
    }
    if !any {
        report.inconclusive(None, "every companion degenerate");
        return Ok(report);
    }
    report.constant("c_emp_max", overall);
    if !overall.is_finite() {
        report.fail_conclusion("kernel constant is not finite");
    }
    Ok(report)
}

/// `K_emp = sup (‖∇u‖_{C⁰}(t+2) + ‖R−n‖_{C⁰}(t)) / ‖u‖_{C⁰}(t)` over times
/// with `‖u‖_{C⁰}(t) ≤ δ`; the zero-mean variant is reported alongside.
pub fn smallness_monitor(
    trace: &Trace,
    delta: f64,
    config: &VerificationConfig,
) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("smallness_monitor");
    report.constant("delta", delta);
    let pairs = trace.offset_pairs(2.0)?;

    let mut k_emp = f64::NEG_INFINITY;
    let mut argmax = f64::NAN;
    let mut admissible = 0usize;
    let mut k_tilde = f64::NEG_INFINITY;
    for (r0, r1) in &pairs {
        let numer = r1.c0_grad_u_tilde + r0.c0_r_minus_n;
        if r0.c0_u <= delta && r0.c0_u > config.denom_floor {
            admissible += 1;
            let k = numer / r0.c0_u;
            if k > k_emp {
                k_emp = k;
                argmax = r0.t;
            }
        }
        if r0.c0_u_tilde <= delta && r0.c0_u_tilde > config.denom_floor {
            k_tilde = k_tilde.max(numer / r0.c0_u_tilde);
        }
    }
    if admissible == 0 {
        report.inconclusive(
            None,
            "no admissible times: ‖u‖_C⁰ never sits below the threshold and above the denominator floor",
        );
        return Ok(report);
    }
    report.constant("k_emp", k_emp);
    report.constant("argmax_t", argmax);
    report.constant("admissible", admissible as f64);
    if k_tilde.is_finite() {
        report.constant("k_emp_zero_mean_variant", k_tilde);
    }
    if !k_emp.is_finite() {
        report.fail_conclusion("smallness constant is not finite");
    }
    Ok(report)
}

/// Asserts `min_x R(·,t) ≥ min(min_x R(·,0), n) − slack` at every record.
pub fn min_scalar_monotone(trace: &Trace, config: &VerificationConfig) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("min_scalar_monotone");
    let Some(first) = trace.records.first() else {
        report.inconclusive(None, "empty trace");
        return Ok(report);
    };
    let bound = first.min_r.min(DIM) - config.min_r_slack;
    report.constant("min_r_initial", first.min_r);
    report.constant("bound", bound);
    let mut worst = f64::INFINITY;
    let mut worst_t = first.t;
    for r in &trace.records {
        if r.min_r < worst {
            worst = r.min_r;
            worst_t = r.t;
        }
    }
    report.constant("worst_min_r", worst);
    report.constant("worst_t", worst_t);
    if worst < bound {
        report.fail_conclusion(format!(
            "min R dips to {worst:.6} at t = {worst_t} below the floor {bound:.6}"
        ));
    }
    Ok(report)
}
