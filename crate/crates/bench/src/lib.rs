//! Shared fixtures for the benchmark targets.

use std::sync::Arc;

use krflow_core::geometry::beta_family;
use krflow_core::{Grid, MetricProfile};

/// Mildly non-round data: every derived field is nontrivial, none are
/// near the validity margins.
pub fn bench_profile(n: usize) -> MetricProfile {
    let grid = Arc::new(Grid::new(n).expect("valid degree"));
    beta_family(grid, 0.1).expect("valid profile")
}
