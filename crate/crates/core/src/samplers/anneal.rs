use serde::{Deserialize, Serialize};

use super::{chain_rng, drive, Chain, EpochParams, RunTrace, SamplerConfig, SamplerError};
use crate::potentials::FiniteSumObjective;

/// Per-epoch schedule `η_s = η̄ (s+σ)^(-1/μ)`, `γ_s = γ̄ ln(g (s+σ)^(1/μ))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub eta_bar: f64,
    pub gamma_bar: f64,
    pub sigma: f64,
    pub mu: f64,
    pub g: f64,
}

impl AnnealSchedule {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta_bar > 0.0 && self.eta_bar.is_finite()) {
            out.push(format!("eta_bar must be positive (got {})", self.eta_bar));
        }
        if !(self.gamma_bar > 0.0 && self.gamma_bar.is_finite()) {
            out.push(format!("gamma_bar must be positive (got {})", self.gamma_bar));
        }
        if !(self.mu > 3.0) {
            out.push(format!("mu must exceed 3 (got {})", self.mu));
        }
        if !(self.g >= std::f64::consts::E) {
            out.push(format!("g must be at least e (got {})", self.g));
        }
        if !(self.sigma >= 3.0 && self.sigma.is_finite()) {
            out.push(format!("sigma must be at least 3 (got {})", self.sigma));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SamplerError::InvalidConfig(v))
        }
    }

    pub fn eta(&self, s: usize) -> f64 {
        self.eta_bar * (s as f64 + self.sigma).powf(-1.0 / self.mu)
    }

    pub fn gamma(&self, s: usize) -> f64 {
        self.gamma_bar * (self.g.ln() + (s as f64 + self.sigma).ln() / self.mu)
    }

    pub fn at(&self, s: usize) -> EpochParams {
        EpochParams {
            eta: self.eta(s),
            gamma: self.gamma(s),
        }
    }
}

/// Runs SVRG-LD or SARAH-LD with epoch `s` using `(η_s, γ_s)` from `sched`.
///
/// `cfg.eta` and `cfg.gamma` are ignored; everything else (variant, batch, epoch
/// length, steps, seed, burn-in, thinning) is taken from `cfg`.
pub fn run_annealed(
    obj: &FiniteSumObjective,
    cfg: &SamplerConfig,
    sched: &AnnealSchedule,
    x0: &[f64],
) -> Result<RunTrace, SamplerError> {
    let mut problems = sched.violations();
    if !cfg.variant.is_variance_reduced() {
        problems.push(format!("annealing needs svrg_ld or sarah_ld (got {})", cfg.variant));
    }
    problems.extend(cfg.structural_violations(obj.n()));
    if !problems.is_empty() {
        return Err(SamplerError::InvalidConfig(problems));
    }
    let chain = Chain::new(obj, cfg, x0, chain_rng(cfg.seed, 0))?;
    drive(chain, cfg, |s| sched.at(s))
}
