//! Filtering, likelihood evaluation, maximum-likelihood estimation and model
//! selection.

mod estimate;
mod filter;
mod likelihood;
mod select;

pub use estimate::{
    estimate, from_unconstrained, loglik_hessian, param_names, param_values, refine,
    starting_points, to_unconstrained, EstimateOptions, FitResult, ATANH_RHO_BOX, LOG_VARIANCE_BOX,
    PACF_BOUND,
};
pub use filter::{
    corrected_filter, gaussian_loglik, kalman_filter, kalman_innovations, FilterOutput,
};
pub use likelihood::{
    corrected_output, exact_loglik, loglik_at, loglik_fast, loglik_uncorrected, profile_loglik,
    regressors, truncation_is_exact, uncorrected_output,
};
pub use select::{lr_test, select_p, Selection};
