//! Variance-reduced stochastic gradient Langevin dynamics.
//!
//! The crate is split into four layers:
//!
//! - [`potentials`]: finite-sum objectives `F(x) = (1/n) Σ f_i(x)` with per-component
//!   gradients, declared or estimated regularity constants, and a small set of built-ins.
//! - [`samplers`]: LMC, SGLD, SVRG-LD and SARAH-LD chains, plus the annealed runner.
//! - [`theory`]: closed-form step-size caps, KL/bias bounds, Log-Sobolev constants and
//!   gradient-complexity counts.
//! - [`diagnostics`]: Gaussian moment oracles, KL/W2 distances, suboptimality and the
//!   exact variance identities of the stochastic gradient estimators.

pub mod diagnostics;
pub mod potentials;
pub mod samplers;
pub mod theory;

pub use potentials::{BuiltinSpec, FiniteSumObjective, GaussianMoments, PotentialError};
pub use samplers::{RunTrace, SamplerConfig, SamplerError, Variant};
pub use theory::{Estimator, TheoryError};
