//! Truncated state-space form of the fractional trend-cycle model, the
//! structural covariances of the observations and the shocks, and the
//! corrections that remove the truncation error from the one-step
//! predictions.

mod covariance;
mod params;
mod spec;
mod statespace;

pub use covariance::{
    cholesky_lower, correction_terms, structural_covariances, structural_covariances_with_limit,
    CorrectionTerms, CovCache, DEFAULT_MAX_N,
};
pub use params::{is_stable, Params, STABILITY_POINTS};
pub use spec::{DMode, Deterministic, ModelSpec, DEFAULT_L, DEFAULT_V, DEFAULT_W};
pub use statespace::{
    build_exact_state_space, build_state_space, Block, BlockForm, MuBlock, StateSpace,
};
