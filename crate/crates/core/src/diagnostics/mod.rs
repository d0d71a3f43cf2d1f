//! Measurements to set against the bounds in [`crate::theory`].
//!
//! KL and W₂ are only computed where the target is tractable: between Gaussians in
//! closed form, and in one dimension by quadrature or sorted-sample coupling. For
//! variance-reduced chains on quadratics the iterate law is a Gaussian mixture, so
//! the "moment KL" reported here is the KL of the moment-matched Gaussian, a surrogate
//! rather than the true divergence.

mod gaussian;
mod identities;
mod replicates;
mod samples;

use thiserror::Error;

use crate::potentials::PotentialError;
use crate::samplers::SamplerError;

pub use gaussian::{
    gaussian_moment_oracle_lmc, gaussian_quadratic_suboptimality, kl_gaussian_to_gibbs_1d,
    kl_gaussians, svrg_quadratic_moments, w2_gaussians, SvrgMomentState,
};
pub use identities::{
    estimator_mean_check, grad_second_moment_bound_check, polyak_gap_check,
    svrg_variance_identity_check, EstimatorMeanCheck, MomentBoundCheck, PolyakReport,
    VarianceIdentity, MAX_ENUMERATION_N,
};
pub use replicates::{run_replicates, InitialLaw, ReplicateRun};
pub use samples::{suboptimality, w2_empirical_1d, SampleStats, Suboptimality};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}
