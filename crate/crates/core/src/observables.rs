//! Time series produced by a run: per-instant norm records at a fixed
//! cadence, full-field checkpoints at a coarser cadence, path-length
//! functionals, uniform-bound monitors, and exponential-rate fitting.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{measure_integral, GeometrySnapshot, MetricProfile};
use crate::grid::Grid;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Scalar summaries of one companion heat field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CompanionObs {
    pub c0: f64,
    pub l1: f64,
    pub min: f64,
    pub max: f64,
}

impl CompanionObs {
    pub fn measure(grid: &Grid, values: &Array1<f64>) -> CompanionObs {
        let (lo, hi) = grid.minmax_oversampled(values);
        CompanionObs {
            c0: grid.c0_norm(values),
            l1: measure_integral(grid, &values.mapv(f64::abs)),
            min: lo,
            max: hi,
        }
    }
}

/// One row of the time series. The first twelve fields are the pinned CSV
/// schema; the remainder are carried only in the JSON records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub l2_u_tilde: f64,
    pub l2_grad_u_tilde: f64,
    pub l2_lap_u_tilde: f64,
    pub c0_u_tilde: f64,
    pub c0_grad_u_tilde: f64,
    pub c0_lap_u_tilde: f64,
    pub c0_r_minus_n: f64,
    pub a: f64,
    pub b: f64,
    pub min_r: f64,
    pub c0_profile_dist: f64,
    pub l2_u: f64,
    pub l2_lap_u: f64,
    pub c0_u: f64,
    #[serde(default)]
    pub companions: Vec<CompanionObs>,
}

/// Assembles a record from a snapshot and the companion fields.
pub fn record(
    t: f64,
    snap: &GeometrySnapshot,
    companion_fields: &[Array1<f64>],
) -> ObservableRecord {
    let grid = snap.profile.grid();
    let b = &snap.bundle;
    ObservableRecord {
        t,
        l2_u_tilde: b.u_tilde.l2,
        l2_grad_u_tilde: b.grad_u_tilde.l2,
        l2_lap_u_tilde: b.lap_u_tilde.l2,
        c0_u_tilde: b.u_tilde.c0,
        c0_grad_u_tilde: b.grad_u_tilde.c0,
        c0_lap_u_tilde: b.lap_u_tilde.c0,
        c0_r_minus_n: b.r_minus_n_c0,
        a: snap.potentials.a,
        b: snap.potentials.b,
        min_r: b.min_r,
        c0_profile_dist: b.profile_dist_c0,
        l2_u: b.u.l2,
        l2_lap_u: b.lap_u_tilde.l2,
        c0_u: b.u.c0,
        companions: companion_fields
            .iter()
            .map(|f| CompanionObs::measure(grid, f))
            .collect(),
    }
}

/// Full-field state stored at the checkpoint cadence. Fields are kept on
/// their native grid; downstream checks recompute rather than interpolate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub phi: Array1<f64>,
    #[serde(default)]
    pub companions: Vec<Array1<f64>>,
}

impl Checkpoint {
    pub fn profile(&self, grid: &Arc<Grid>) -> MetricProfile {
        MetricProfile::from_values_unchecked(grid.clone(), self.phi.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema_version: u32,
    pub n: usize,
    pub cadence: f64,
    pub checkpoint_cadence: f64,
    pub t_max: f64,
    pub companion_labels: Vec<String>,
    pub complete: bool,
    pub abort: Option<String>,
    pub steps: u64,
    /// Sup over accepted steps of the disagreement between the expanded
    /// right-hand side and its potential form at interior nodes.
    pub cross_check_max: f64,
    pub min_dt_used: f64,
    pub config_hash: Option<String>,
}

/// Append-only during a run; immutable afterwards. All queries are pure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<ObservableRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trace {
    /// Index of the record at time `t`; `t` must land on the cadence grid.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        let idx = (t / self.meta.cadence).round();
        let k = idx as usize;
        if idx < 0.0
            || k >= self.records.len()
            || (self.records[k].t - t).abs() > 1e-9 * (1.0 + t.abs())
        {
            return Err(Error::BadTrace(format!("no record at t = {t}")));
        }
        Ok(k)
    }

    pub fn record_at(&self, t: f64) -> Result<&ObservableRecord> {
        Ok(&self.records[self.record_index(t)?])
    }

    /// Pairs `(r(t), r(t + offset))` over all admissible times; the offset
    /// must be an exact multiple of the cadence.
    pub fn offset_pairs(&self, offset: f64) -> Result<Vec<(&ObservableRecord, &ObservableRecord)>> {
        let ratio = offset / self.meta.cadence;
        let k = ratio.round() as usize;
        if k == 0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::BadOffset {
                offset,
                cadence: self.meta.cadence,
            });
        }
        Ok(self.records[..self.records.len().saturating_sub(k)]
            .iter()
            .zip(self.records[k.min(self.records.len())..].iter())
            .collect())
    }

    pub fn checkpoint_at(&self, t: f64) -> Result<&Checkpoint> {
        let idx = (t / self.meta.checkpoint_cadence).round();
        let k = idx as usize;
        if idx < 0.0
            || k >= self.checkpoints.len()
            || (self.checkpoints[k].t - t).abs() > 1e-9 * (1.0 + t.abs())
        {
            return Err(Error::BadTrace(format!("no checkpoint at t = {t}")));
        }
        Ok(&self.checkpoints[k])
    }

    pub fn final_record(&self) -> Result<&ObservableRecord> {
        self.records
            .last()
            .ok_or_else(|| Error::BadTrace("empty trace".into()))
    }
}

/// Quantities a rate fit or report can address by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceQuantity {
    L2UTilde,
    L2GradUTilde,
    L2LapUTilde,
    C0UTilde,
    C0GradUTilde,
    C0LapUTilde,
    C0RMinusN,
    C0ProfileDist,
    A,
    B,
    MinR,
    L2U,
    C0U,
}

impl TraceQuantity {
    pub fn extract(self, r: &ObservableRecord) -> f64 {
        match self {
            TraceQuantity::L2UTilde => r.l2_u_tilde,
            TraceQuantity::L2GradUTilde => r.l2_grad_u_tilde,
            TraceQuantity::L2LapUTilde => r.l2_lap_u_tilde,
            TraceQuantity::C0UTilde => r.c0_u_tilde,
            TraceQuantity::C0GradUTilde => r.c0_grad_u_tilde,
            TraceQuantity::C0LapUTilde => r.c0_lap_u_tilde,
            TraceQuantity::C0RMinusN => r.c0_r_minus_n,
            TraceQuantity::C0ProfileDist => r.c0_profile_dist,
            TraceQuantity::A => r.a,
            TraceQuantity::B => r.b,
            TraceQuantity::MinR => r.min_r,
            TraceQuantity::L2U => r.l2_u,
            TraceQuantity::C0U => r.c0_u,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceQuantity::L2UTilde => "l2_u_tilde",
            TraceQuantity::L2GradUTilde => "l2_grad_u_tilde",
            TraceQuantity::L2LapUTilde => "l2_lap_u_tilde",
            TraceQuantity::C0UTilde => "c0_u_tilde",
            TraceQuantity::C0GradUTilde => "c0_grad_u_tilde",
            TraceQuantity::C0LapUTilde => "c0_lap_u_tilde",
            TraceQuantity::C0RMinusN => "c0_r_minus_n",
            TraceQuantity::C0ProfileDist => "c0_profile_dist",
            TraceQuantity::A => "a",
            TraceQuantity::B => "b",
            TraceQuantity::MinR => "min_r",
            TraceQuantity::L2U => "l2_u",
            TraceQuantity::C0U => "c0_u",
        }
    }
}

/// Which samples enter a rate fit. The default band keeps the fit inside
/// the clean exponential regime: above quadrature noise, below the
/// nonlinear transient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWindow {
    /// Samples where `l2_u_tilde` lies in `[lo, hi]`.
    DenomBand { lo: f64, hi: f64 },
    TimeRange { t0: f64, t1: f64 },
    All,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::DenomBand { lo: 1e-8, hi: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Least-squares slope of `ln q` against `t`. Returns `None` when no
/// admissible positive samples exist.
pub fn rate_fit(trace: &Trace, quantity: TraceQuantity, window: &FitWindow) -> Option<RateFit> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for r in &trace.records {
        let admissible = match *window {
            FitWindow::DenomBand { lo, hi } => r.l2_u_tilde >= lo && r.l2_u_tilde <= hi,
            FitWindow::TimeRange { t0, t1 } => r.t >= t0 - 1e-12 && r.t <= t1 + 1e-12,
            FitWindow::All => true,
        };
        let q = quantity.extract(r);
        if admissible && q > 0.0 && q.is_finite() {
            ts.push(r.t);
            ys.push(q.ln());
        }
    }
    if ts.len() < 2 {
        return None;
    }
    let m = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        sxx += (t - tbar) * (t - tbar);
        sxy += (t - tbar) * (y - ybar);
    }
    if sxx == 0.0 {
        return None;
    }
    let rate = sxy / sxx;
    let intercept = ybar - rate * tbar;
    let mut ss = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        let e = y - (intercept + rate * t);
        ss += e * e;
    }
    Some(RateFit {
        rate,
        intercept,
        rms_residual: (ss / m).sqrt(),
        samples: ts.len(),
        window: (ts[0], ts[ts.len() - 1]),
    })
}

/// Trapezoidal integral of a record quantity over `[w0, w1]`.
pub(crate) fn trapezoid(trace: &Trace, quantity: TraceQuantity, w0: f64, w1: f64) -> f64 {
    let mut acc = 0.0;
    for pair in trace.records.windows(2) {
        let (p, q) = (&pair[0], &pair[1]);
        if p.t >= w0 - 1e-12 && q.t <= w1 + 1e-12 {
            acc += 0.5 * (quantity.extract(p) + quantity.extract(q)) * (q.t - p.t);
        }
    }
    acc
}

/// Path length of the flow line in the metric whose speed is `‖ũ‖_{L²}`.
pub fn mabuchi_length(trace: &Trace, window: (f64, f64)) -> f64 {
    trapezoid(trace, TraceQuantity::L2UTilde, window.0, window.1)
}

/// Path length with speed `‖Δũ‖_{L²}`.
pub fn calabi_length(trace: &Trace, window: (f64, f64)) -> f64 {
    trapezoid(trace, TraceQuantity::L2LapUTilde, window.0, window.1)
}

/// Both path lengths with fitted exponential tails. Tails are reported
/// separately and never added into the windowed values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthReport {
    pub mabuchi: f64,
    pub mabuchi_tail: f64,
    /// Same integral with the Gibbs-normalized integrand `‖u‖_{L²}`.
    pub mabuchi_u_variant: f64,
    pub calabi: f64,
    pub calabi_tail: f64,
    pub window: (f64, f64),
    pub quadrature: String,
    pub tail_fitted: bool,
    pub flagged_partial: bool,
    pub refinement_delta: Option<f64>,
}

pub fn path_lengths(trace: &Trace, window: Option<(f64, f64)>) -> LengthReport {
    let w = window.unwrap_or_else(|| {
        let t0 = trace.records.first().map(|r| r.t).unwrap_or(0.0);
        let t1 = trace.records.last().map(|r| r.t).unwrap_or(0.0);
        (t0, t1)
    });
    let mabuchi = mabuchi_length(trace, w);
    let calabi = calabi_length(trace, w);
    let mabuchi_u_variant = trapezoid(trace, TraceQuantity::L2U, w.0, w.1);

    // Exponential tail: if q ~ q(t1) e^{rate (t - t1)} with rate < 0, the
    // remaining integral is q(t1)/|rate|.
    let fit = rate_fit(trace, TraceQuantity::L2UTilde, &FitWindow::default());
    let (mabuchi_tail, calabi_tail, tail_fitted) = match fit {
        Some(f) if f.rate < 0.0 => {
            let last = trace.records.last().unwrap();
            (
                last.l2_u_tilde / f.rate.abs(),
                last.l2_lap_u_tilde / f.rate.abs(),
                true,
            )
        }
        _ => (0.0, 0.0, false),
    };

    LengthReport {
        mabuchi,
        mabuchi_tail,
        mabuchi_u_variant,
        calabi,
        calabi_tail,
        window: w,
        quadrature: "trapezoid".into(),
        tail_fitted,
        flagged_partial: !trace.meta.complete,
        refinement_delta: None,
    }
}

/// Sup-over-time uniform bounds: the C⁰ triple of (ũ, ∇ũ, Δũ), its
/// Gibbs-normalized variant, and the worst minimum of R.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformBoundReport {
    pub sup_triple: f64,
    pub sup_triple_argmax_t: f64,
    pub sup_triple_u_variant: f64,
    pub min_min_r: f64,
}

pub fn perelman_monitor(trace: &Trace) -> Result<UniformBoundReport> {
    if trace.records.is_empty() {
        return Err(Error::BadTrace("empty trace".into()));
    }
    let mut sup = f64::NEG_INFINITY;
    let mut arg = 0.0;
    let mut sup_u = f64::NEG_INFINITY;
    let mut min_r = f64::INFINITY;
    for r in &trace.records {
        let triple = r.c0_u_tilde + r.c0_grad_u_tilde + r.c0_lap_u_tilde;
        if triple > sup {
            sup = triple;
            arg = r.t;
        }
        sup_u = sup_u.max(r.c0_u + r.c0_grad_u_tilde + r.c0_lap_u_tilde);
        min_r = min_r.min(r.min_r);
    }
    Ok(UniformBoundReport {
        sup_triple: sup,
        sup_triple_argmax_t: arg,
        sup_triple_u_variant: sup_u,
        min_min_r: min_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{beta_family, round_profile};
    use crate::TOTAL_VOLUME;

    fn synthetic_trace(cadence: f64, t_max: f64, f: impl Fn(f64) -> ObservableRecord) -> Trace {
        let k = (t_max / cadence).round() as usize;
        let records: Vec<_> = (0..=k).map(|i| f(i as f64 * cadence)).collect();
        Trace {
            meta: TraceMeta {
                schema_version: TRACE_SCHEMA_VERSION,
                n: 16,
                cadence,
                checkpoint_cadence: cadence,
                t_max,
                companion_labels: vec![],
                complete: true,
                abort: None,
                steps: 0,
                cross_check_max: 0.0,
                min_dt_used: 0.0,
                config_hash: None,
            },
            records,
            checkpoints: vec![],
        }
    }

    fn decaying_record(t: f64) -> ObservableRecord {
        let q = 5.0 * (-2.0 * t).exp();
        ObservableRecord {
            t,
            l2_u_tilde: q,
            l2_grad_u_tilde: q * 3f64.sqrt(),
            l2_lap_u_tilde: 3.0 * q,
            c0_u_tilde: q,
            c0_grad_u_tilde: q,
            c0_lap_u_tilde: 3.0 * q,
            c0_r_minus_n: 3.0 * q,
            a: 0.0,
            b: 0.0,
            min_r: 1.0 - q,
            c0_profile_dist: q,
            l2_u: q,
            l2_lap_u: 3.0 * q,
            c0_u: q,
            companions: vec![],
        }
    }

    #[test]
    fn round_record_is_trivial() {
        let g = Arc::new(Grid::new(32).unwrap());
        let snap = GeometrySnapshot::compute(&round_profile(g.clone())).unwrap();
        let ones = Array1::from_elem(g.n() + 1, 1.0);
        let r = record(0.0, &snap, &[ones]);
        assert!(r.l2_u_tilde <= 1e-11);
        assert!(r.a.abs() <= 1e-11 && r.b.abs() <= 1e-11);
        assert!((r.min_r - 1.0).abs() <= 1e-10);
        let c = &r.companions[0];
        assert!((c.l1 - TOTAL_VOLUME).abs() <= 1e-10);
        assert!((c.c0 - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn beta_record_matches_closed_forms() {
        let g = Arc::new(Grid::new(48).unwrap());
        let snap = GeometrySnapshot::compute(&beta_family(g, 0.1).unwrap()).unwrap();
        let r = record(0.0, &snap, &[]);
        // R ranges over [0.6, 1.2]: ‖R−n‖_C⁰ = 0.4 at the poles, min R = 0.6
        assert!((r.c0_r_minus_n - 0.4).abs() <= 1e-9);
        assert!((r.min_r - 0.6).abs() <= 1e-9);
        // ‖Δũ‖ fields coincide with ‖R−n‖ counterparts
        assert!((r.c0_lap_u_tilde - r.c0_r_minus_n).abs() <= 1e-10);
        assert!((r.l2_lap_u - r.l2_lap_u_tilde).abs() <= 1e-10);
        assert!(r.b.abs() <= r.c0_u_tilde);
        assert!((r.a - r.b).abs() > 1e-4, "a and b differ off the fixed point");
    }

    #[test]
    fn windowed_queries_hit_exact_samples() {
        let tr = synthetic_trace(0.05, 5.0, decaying_record);
        for offset in [1.0, 2.0, 3.0] {
            let pairs = tr.offset_pairs(offset).unwrap();
            assert_eq!(pairs.len(), tr.records.len() - (offset / 0.05) as usize);
            for (p, q) in pairs {
                assert!((q.t - p.t - offset).abs() <= 1e-9);
            }
        }
        assert!(tr.offset_pairs(0.033).is_err());
        assert!((tr.record_at(2.35).unwrap().t - 2.35).abs() <= 1e-12);
        assert!(tr.record_at(5.21).is_err());
    }

    #[test]
    fn rate_fit_recovers_exact_exponential() {
        let tr = synthetic_trace(0.05, 3.0, decaying_record);
        let f = rate_fit(&tr, TraceQuantity::L2UTilde, &FitWindow::All).unwrap();
        assert!((f.rate + 2.0).abs() <= 1e-10);
        assert!((f.intercept - 5f64.ln()).abs() <= 1e-10);
        assert!(f.rms_residual <= 1e-12);
    }

    #[test]
    fn rate_fit_respects_window_and_can_fail() {
        let tr = synthetic_trace(0.05, 3.0, decaying_record);
        // l2_u_tilde spans [5e^{-6}, 5]: a band below that range is empty
        assert!(rate_fit(
            &tr,
            TraceQuantity::L2UTilde,
            &FitWindow::DenomBand { lo: 1e-12, hi: 1e-9 }
        )
        .is_none());
        let f = rate_fit(
            &tr,
            TraceQuantity::C0RMinusN,
            &FitWindow::TimeRange { t0: 1.0, t1: 2.0 },
        )
        .unwrap();
        assert!((f.rate + 2.0).abs() <= 1e-9);
        assert_eq!(f.samples, 21);
    }

    #[test]
    fn lengths_match_closed_form_and_are_monotone() {
        let tr = synthetic_trace(0.05, 10.0, decaying_record);
        // ∫₀¹⁰ 5e^{-2t} dt = 2.5(1 − e^{-20})
        let exact = 2.5 * (1.0 - (-20.0f64).exp());
        let full = mabuchi_length(&tr, (0.0, 10.0));
        assert!((full - exact).abs() <= 2e-3 * exact);
        let mut prev = 0.0;
        for k in 1..=10 {
            let v = mabuchi_length(&tr, (0.0, k as f64));
            assert!(v >= prev);
            prev = v;
        }
        let report = path_lengths(&tr, None);
        assert!(report.tail_fitted);
        // tail = q(10)/2 with q(10) = 5e^{-20}
        let tail_exact = 2.5 * (-20.0f64).exp();
        assert!((report.mabuchi_tail - tail_exact).abs() <= 0.05 * tail_exact);
        assert!((report.calabi - 3.0 * full).abs() <= 1e-9 * full.max(1.0));
        assert!(!report.flagged_partial);
    }

    #[test]
    fn uniform_bound_monitor_finds_sup_and_min() {
        let tr = synthetic_trace(0.05, 4.0, decaying_record);
        let rep = perelman_monitor(&tr).unwrap();
        // all quantities decay, so the sup sits at t = 0
        assert!((rep.sup_triple_argmax_t - 0.0).abs() <= 1e-12);
        assert!((rep.sup_triple - (5.0 + 5.0 + 15.0)).abs() <= 1e-12);
        assert!((rep.min_min_r - (1.0 - 5.0)).abs() <= 1e-12);
    }
}
