//! Discrete-time Langevin chains over a [`FiniteSumObjective`].
//!
//! Every step draws one standard-normal `d`-vector first and only then the minibatch
//! indices. Because [`sample_index_set`] returns the full set without touching the
//! generator when `B = n`, chains of different variants that share a seed are coupled:
//! SGLD with `B = n`, and SVRG-LD / SARAH-LD with `B = n, m = 1`, reproduce LMC bit for
//! bit.

mod anneal;
mod chain;
mod index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::{FiniteSumObjective, PotentialError};
use crate::theory::Estimator;

pub use anneal::{run_annealed, AnnealSchedule};
pub use chain::{chain_rng, Chain, ChainRng};
pub use index::sample_index_set;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lmc,
    Sgld,
    SvrgLd,
    SarahLd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lmc, Variant::Sgld, Variant::SvrgLd, Variant::SarahLd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lmc => "lmc",
            Variant::Sgld => "sgld",
            Variant::SvrgLd => "svrg_ld",
            Variant::SarahLd => "sarah_ld",
        }
    }

    /// The variance-reduced estimator, if any.
    pub fn estimator(self) -> Option<Estimator> {
        match self {
            Variant::SvrgLd => Some(Estimator::Svrg),
            Variant::SarahLd => Some(Estimator::Sarah),
            _ => None,
        }
    }

    pub fn is_variance_reduced(self) -> bool {
        self.estimator().is_some()
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown variant `{s}` (expected lmc, sgld, svrg_ld or sarah_ld)"))
    }
}

fn one() -> usize {
    1
}

/// Hyperparameters of a single chain. `batch` and `epoch_len` are ignored by LMC;
/// SGLD uses `batch` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub variant: Variant,
    pub eta: f64,
    pub gamma: f64,
    pub batch: usize,
    pub epoch_len: usize,
    pub steps: usize,
    pub seed: u64,
    /// Iterates with step index below this are excluded from statistics.
    #[serde(default)]
    pub burn_in: usize,
    /// Record every `thin`-th iterate.
    #[serde(default = "one")]
    pub thin: usize,
}

impl SamplerConfig {
    pub fn new(variant: Variant, eta: f64, gamma: f64, batch: usize, epoch_len: usize, steps: usize, seed: u64) -> Self {
        Self {
            variant,
            eta,
            gamma,
            batch,
            epoch_len,
            steps,
            seed,
            burn_in: 0,
            thin: 1,
        }
    }

    /// Every violated constraint for an objective with `n` components.
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            out.push(format!("eta must be positive and finite (got {})", self.eta));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must be >= 1 (got {})", self.gamma));
        }
        out.extend(self.structural_violations(n));
        out
    }

    fn structural_violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.variant != Variant::Lmc && !(1..=n).contains(&self.batch) {
            out.push(format!("batch size must lie in 1..={n} (got {})", self.batch));
        }
        if self.epoch_len == 0 {
            out.push("epoch length must be >= 1".into());
        }
        if self.steps == 0 {
            out.push("step count must be >= 1".into());
        }
        if self.thin == 0 {
            out.push("thinning stride must be >= 1".into());
        }
        if self.variant.is_variance_reduced()
            && self.epoch_len > 0
            && !self.steps.is_multiple_of(self.epoch_len)
        {
            out.push(format!(
                "epoch length {} must divide the step count {}",
                self.epoch_len, self.steps
            ));
        }
        out
    }

    pub fn validate(&self, n: usize) -> Result<(), SamplerError> {
        let v = self.violations(n);
        if v.is_empty() {
            Ok(())
        } else {
            Err(SamplerError::InvalidConfig(v))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochParams {
    pub eta: f64,
    pub gamma: f64,
}

/// The recorded history of one chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    /// Step index of each recorded iterate; step 0 is the initial point.
    pub recorded_steps: Vec<usize>,
    pub iterates: Vec<Vec<f64>>,
    /// Cumulative component-gradient evaluations after steps `1..=K`.
    pub grad_evals: Vec<u64>,
    /// Step indices at which an epoch (anchor refresh) begins.
    pub epoch_starts: Vec<usize>,
    /// Step size and inverse temperature in force during each epoch.
    pub schedule: Vec<EpochParams>,
    pub final_state: Vec<f64>,
    pub burn_in: usize,
}

impl RunTrace {
    pub fn steps(&self) -> usize {
        self.grad_evals.len()
    }

    pub fn total_grad_evals(&self) -> u64 {
        self.grad_evals.last().copied().unwrap_or(0)
    }

    /// Recorded `(step, iterate)` pairs with `step >= burn_in`.
    pub fn post_burn_in(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.recorded_steps
            .iter()
            .zip(&self.iterates)
            .filter(move |(k, _)| **k >= self.burn_in)
            .map(|(k, x)| (*k, x.as_slice()))
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("chain diverged at step {step} (non-finite iterate or gradient)")]
    Diverged { step: usize, trace: Box<RunTrace> },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// One LMC step `x - η∇F(x) + sqrt(2η/γ)·noise`.
pub fn step_lmc(
    obj: &FiniteSumObjective,
    x: &[f64],
    eta: f64,
    gamma: f64,
    noise: &[f64],
) -> Result<Vec<f64>, SamplerError> {
    let grad = obj.full_gradient(x).map_err(diverged_at_first)?;
    langevin_update(x, &grad, eta, gamma, noise)
}

/// One SGLD step using the minibatch mean gradient over `idx` (0-based).
pub fn step_sgld(
    obj: &FiniteSumObjective,
    x: &[f64],
    eta: f64,
    gamma: f64,
    idx: &[usize],
    noise: &[f64],
) -> Result<Vec<f64>, SamplerError> {
    let grad = obj.minibatch_gradient(x, idx).map_err(diverged_at_first)?;
    langevin_update(x, &grad, eta, gamma, noise)
}

fn diverged_at_first(e: PotentialError) -> SamplerError {
    match e {
        PotentialError::NonFinite { .. } => SamplerError::Diverged {
            step: 1,
            trace: Box::default(),
        },
        other => other.into(),
    }
}

fn langevin_update(
    x: &[f64],
    grad: &[f64],
    eta: f64,
    gamma: f64,
    noise: &[f64],
) -> Result<Vec<f64>, SamplerError> {
    if noise.len() != x.len() {
        return Err(PotentialError::DimensionMismatch {
            expected: x.len(),
            got: noise.len(),
        }
        .into());
    }
    let scale = (2.0 * eta / gamma).sqrt();
    let out: Vec<f64> = x
        .iter()
        .zip(grad)
        .zip(noise)
        .map(|((xi, gi), ei)| xi - eta * gi + scale * ei)
        .collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(SamplerError::Diverged {
            step: 1,
            trace: Box::default(),
        })
    }
}

/// Runs the configured chain from `x0` on replicate stream 0.
pub fn run(obj: &FiniteSumObjective, cfg: &SamplerConfig, x0: &[f64]) -> Result<RunTrace, SamplerError> {
    run_replicate(obj, cfg, x0, 0)
}

/// Runs replicate `replicate` of the configured chain: the generator is seeded with
/// `cfg.seed` and switched to stream `replicate`.
pub fn run_replicate(
    obj: &FiniteSumObjective,
    cfg: &SamplerConfig,
    x0: &[f64],
    replicate: u64,
) -> Result<RunTrace, SamplerError> {
    cfg.validate(obj.n())?;
    let chain = Chain::new(obj, cfg, x0, chain_rng(cfg.seed, replicate))?;
    drive(chain, cfg, |_| EpochParams {
        eta: cfg.eta,
        gamma: cfg.gamma,
    })
}

/// SVRG-LD with anchor refresh every `epoch_len` steps.
pub fn run_svrg_ld(obj: &FiniteSumObjective, cfg: &SamplerConfig, x0: &[f64]) -> Result<RunTrace, SamplerError> {
    require_variant(cfg, Variant::SvrgLd)?;
    run(obj, cfg, x0)
}

/// SARAH-LD with the recursive estimator reset every `epoch_len` steps.
pub fn run_sarah_ld(obj: &FiniteSumObjective, cfg: &SamplerConfig, x0: &[f64]) -> Result<RunTrace, SamplerError> {
    require_variant(cfg, Variant::SarahLd)?;
    run(obj, cfg, x0)
}

fn require_variant(cfg: &SamplerConfig, v: Variant) -> Result<(), SamplerError> {
    if cfg.variant == v {
        Ok(())
    } else {
        Err(SamplerError::InvalidConfig(vec![format!(
            "expected variant {v}, got {}",
            cfg.variant
        )]))
    }
}

/// Steps `chain` `cfg.steps` times, switching parameters at each epoch start.
fn drive(
    mut chain: Chain<'_>,
    cfg: &SamplerConfig,
    params: impl Fn(usize) -> EpochParams,
) -> Result<RunTrace, SamplerError> {
    let mut trace = RunTrace {
        burn_in: cfg.burn_in,
        ..RunTrace::default()
    };
    trace.grad_evals.reserve(cfg.steps);
    trace.recorded_steps.push(0);
    trace.iterates.push(chain.state().to_vec());
    for k in 0..cfg.steps {
        if k % cfg.epoch_len == 0 {
            let p = params(k / cfg.epoch_len);
            chain.set_params(p.eta, p.gamma);
            trace.epoch_starts.push(k);
            trace.schedule.push(p);
        }
        if let Err(e) = chain.advance() {
            trace.final_state = chain.state().to_vec();
            return Err(match e {
                SamplerError::Diverged { step, .. } => SamplerError::Diverged {
                    step,
                    trace: Box::new(trace),
                },
                other => other,
            });
        }
        trace.grad_evals.push(chain.grad_evals());
        if (k + 1) % cfg.thin == 0 {
            trace.recorded_steps.push(k + 1);
            trace.iterates.push(chain.state().to_vec());
        }
    }
    trace.final_state = chain.state().to_vec();
    Ok(trace)
}
