//! Likelihood of a photodetection record as a function of the coupling `g`,
//! and the maximum-likelihood / posterior estimates derived from it.

mod estimate;
mod grid;
mod likelihood;

pub use estimate::{posterior, posterior_and_mle, Estimate};
pub use grid::GGrid;
pub use likelihood::{
    estimate_per_jump, estimate_time_series, likelihood_surface, log_likelihood,
    record_fingerprint, GridScorer, LikelihoodSurface, Snapshot,
};
