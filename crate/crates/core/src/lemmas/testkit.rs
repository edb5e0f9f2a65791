//! Synthetic traces for exercising checks without running the flow.

use crate::observables::{ObservableRecord, Trace, TraceMeta, TRACE_SCHEMA_VERSION};

/// One record of an exact exponential family: every norm carries the same
/// rate, quadratic quantities (`a`, `b`) carry twice the rate.
pub(crate) fn decaying_record(t: f64, rate: f64) -> ObservableRecord {
    let d = (rate * t).exp();
    ObservableRecord {
        t,
        l2_u_tilde: 0.2 * d,
        l2_grad_u_tilde: 0.3 * d,
        l2_lap_u_tilde: 0.4 * d,
        c0_u_tilde: 0.1 * d,
        c0_grad_u_tilde: 0.2 * d,
        c0_lap_u_tilde: 0.4 * d,
        c0_r_minus_n: 0.4 * d,
        a: 0.01 * d * d,
        b: -0.01 * d * d,
        min_r: 1.0 - 0.4 * d,
        c0_profile_dist: 0.1 * d,
        l2_u: 0.2 * d,
        l2_lap_u: 0.4 * d,
        c0_u: 0.1 * d,
        companions: Vec::new(),
    }
}

pub(crate) fn decaying_trace(rate: f64, t_max: f64) -> Trace {
    trace_with(0.05, t_max, Vec::new(), |t| decaying_record(t, rate))
}

pub(crate) fn trace_with(
    cadence: f64,
    t_max: f64,
    companion_labels: Vec<String>,
    make: impl Fn(f64) -> ObservableRecord,
) -> Trace {
    let n = (t_max / cadence).round() as usize;
    let records = (0..=n).map(|j| make(j as f64 * cadence)).collect();
    Trace {
        meta: TraceMeta {
            schema_version: TRACE_SCHEMA_VERSION,
            n: 32,
            cadence,
            checkpoint_cadence: cadence,
            t_max,
            companion_labels,
            complete: true,
            abort: None,
            steps: 0,
            cross_check_max: 0.0,
            min_dt_used: 1e-4,
            config_hash: None,
        },
        records,
        checkpoints: Vec::new(),
    }
}
