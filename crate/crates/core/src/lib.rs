//! Spectral simulator and verification harness for the volume-normalized
//! Ricci flow on rotationally symmetric metrics on the two-sphere.
//!
//! The metric is reduced, in momentum coordinates, to a single profile
//! function `phi` on `[-1, 1]` satisfying `phi > 0` in the interior,
//! `phi(±1) = 0`, `phi'(-1) = 1`, `phi'(1) = -1`. In this gauge the area
//! form is fixed (`∫ h dA = 2π ∫ h dx`, total area `4π`), the Laplacian is
//! `Δf = (phi f')'`, and the scalar curvature is `R = -phi''`. The round
//! metric is `phi(x) = (1 - x²)/2` with `R ≡ 1`.
//!
//! Crate layout mirrors the pipeline:
//!
//! * [`grid`] — Chebyshev–Gauss–Lobatto collocation: differentiation
//!   matrices, Clenshaw–Curtis quadrature, barycentric interpolation.
//! * [`geometry`] — profiles, curvature, potentials, norms, initial-data
//!   families.
//! * [`flow`] — the flow right-hand side, RK4 stepping, passive heat
//!   companions, gauge-corrected time derivatives.
//! * [`observables`] — per-time records, traces, path lengths, decay-rate
//!   fits.
//! * [`lemmas`] — the verification harness: evolution-identity residuals,
//!   Gronwall/Lyapunov devices, ratio and entropy monitors, and the
//!   convergence chain.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod lemmas;
pub mod observables;

pub use error::{Error, Result};
pub use flow::{evolve, CompanionInit, CompanionSpec, DtRule, FlowState, StepPolicy};
pub use geometry::{
    GeometrySnapshot, MetricProfile, NormTriple, PerturbationSpec, PotentialPair, ScalarField,
};
pub use grid::Grid;
pub use lemmas::{LemmaReport, Verdict, VerificationConfig};
pub use observables::{LengthReport, ObservableRecord, RateFit, Trace};

/// Total area of the fixed background measure: `∫ dA = 2π ∫ dx = 4π`.
pub const TOTAL_VOLUME: f64 = 4.0 * std::f64::consts::PI;

/// Complex dimension of the underlying surface.
pub const DIM: f64 = 1.0;
