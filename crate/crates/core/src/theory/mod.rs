//! Closed-form step-size caps, KL bounds, Log-Sobolev constants and complexity counts.
//!
//! Every function is a pure evaluation. Preconditions that the underlying results
//! depend on are checked and reported as [`Violation`]s naming the requirement, so a
//! caller can tell a malformed input from an out-of-scope parameter choice.

mod anneal;
mod lsi;
mod optimization;
mod sampling;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anneal::{anneal_sigma_floor, anneal_validate, chi, AnnealReport, ScheduleViolation};
pub use lsi::{
    estimate_cf, lsi_dissipative, lsi_weak_morse, poincare_constant, CfEstimate, DissipativeLsi,
    WeakMorseLsi,
};
pub use optimization::{
    gamma_for_optimization, gamma_for_optimization_strict, gibbs_suboptimality_bound,
    kl_target_for_optimization, optimization_step_size, suboptimality_decomposition,
    SuboptimalityBound,
};
pub use sampling::{
    bias_term, eta_for_eps, gradient_complexity, iterations_for_eps, kl_bound, kl_hypotheses,
    plan_for_kl, step_cap, svrg_bias_coarse, talagrand_w2, upsilon, xi, KlBound, KlInputs,
    SamplingPlan, UPSILON_CAP,
};

/// Which variance-reduced gradient estimator a bound refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Svrg,
    Sarah,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Svrg => "svrg",
            Estimator::Sarah => "sarah",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches("_ld").trim_end_matches("-ld") {
            "svrg" => Ok(Estimator::Svrg),
            "sarah" => Ok(Estimator::Sarah),
            _ => Err(format!("unknown estimator `{s}` (expected svrg or sarah)")),
        }
    }
}

/// A violated hypothesis of one of the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// The requirement in symbolic form, e.g. `B >= m`.
    pub requirement: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "requires {} ({})", self.requirement, self.detail)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("hypothesis violated: {0}")]
    Hypothesis(Violation),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl TheoryError {
    pub(crate) fn hypothesis(requirement: &'static str, detail: impl Into<String>) -> Self {
        TheoryError::Hypothesis(Violation {
            requirement,
            detail: detail.into(),
        })
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<(), TheoryError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::InvalidInput(format!("{name} must be positive and finite (got {v})")))
    }
}

pub(crate) fn nonnegative(name: &str, v: f64) -> Result<(), TheoryError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::InvalidInput(format!("{name} must be nonnegative and finite (got {v})")))
    }
}

/// The constants feeding the bounds. Unset fields are simply not available.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConstants {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_dagger: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_f: Option<f64>,
}

impl TheoryConstants {
    /// Every broken invariant among the set fields.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let reals = [
            ("L", self.l),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("M", self.m),
            ("b", self.b),
            ("lambda_dagger", self.lambda_dagger),
            ("l_prime", self.l_prime),
            ("c_star", self.c_star),
            ("c_f", self.c_f),
        ];
        for (name, v) in reals {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("{name} must be positive (got {v})"));
                }
            }
        }
        for (name, v) in [("a_star", self.a_star), ("b_star", self.b_star)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    out.push(format!("{name} must be nonnegative (got {v})"));
                }
            }
        }
        for (name, v) in [("d", self.d), ("n", self.n)] {
            if v == Some(0) {
                out.push(format!("{name} must be >= 1"));
            }
        }
        if let Some(ld) = self.lambda_dagger {
            if ld > 1.0 {
                out.push(format!("lambda_dagger must be <= 1 (got {ld})"));
            }
        }
        if let Some(cf) = self.c_f {
            if cf > 1.0 {
                out.push(format!("c_f must be <= 1 (got {cf})"));
            }
        }
        if let (Some(a), Some(g), Some(l)) = (self.alpha, self.gamma, self.l) {
            if a > g * l * (1.0 + 1e-12) {
                out.push(format!("alpha = {a} exceeds gamma*L = {}", g * l));
            }
        }
        out
    }

    /// Warnings that do not block evaluation.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(l) = self.l {
            if l < 1.0 {
                out.push(format!(
                    "L = {l} < 1: several constants are derived assuming L >= 1 and may not be conservative"
                ));
            }
        }
        if self.c_star.is_none() {
            out.push("c_star is an unknown universal constant; defaulting to 1".into());
        }
        out
    }

    pub fn c_star_or_default(&self) -> f64 {
        self.c_star.unwrap_or(1.0)
    }
}
