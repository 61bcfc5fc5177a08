//! Information-theoretic quantities and bound computations.

pub mod discrete;
pub mod fano;
pub mod measures;
pub mod rate_distortion;

pub use discrete::{
    lower_bound_check, upper_bound_check, DiscreteModel, LowerBoundCheck, UpperBoundCheck, LOWER_BOUND_CHECK_SLACK,
};
pub use fano::{
    binary_entropy, g, g_inverse, misclassification_upper_bound, private_error_lower_bound,
    private_error_lower_bound_entropy_variant,
};
pub use measures::{conditional_entropy, entropy, entropy_unchecked, mutual_information, output_marginal};
pub use rate_distortion::{
    blahut_arimoto, distortion_rate_at, distortion_rate_inverse, trace_curve, BetaGrid, RateDistortionCurve, RdPoint,
};
