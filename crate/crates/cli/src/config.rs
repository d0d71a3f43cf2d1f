//! Experiment configuration files.
//!
//! A config is TOML with the sections `[potential]`, `[sampler]`, and the optional
//! `[auto]`, `[theory]`, `[anneal]`, `[experiment]`, `[compare]` and `[sweep]`.
//! Unknown keys anywhere are errors.
//!
//! ```toml
//! [potential]
//! name = "generated_quadratic"
//! n = 16
//! dim = 2
//! spread = 1.0
//! seed = 1
//!
//! [sampler]
//! variant = "svrg_ld"
//! eta = 0.004
//! gamma = 2.0
//! batch = 4
//! epoch_len = 4
//! steps = 2000
//!
//! [theory]
//! alpha = 2.0
//!
//! [experiment]
//! replicates = 8
//! seed = 7
//! init = { gaussian = { mean = [3.0, -2.0], var = 4.0 } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use vrld::samplers::AnnealSchedule;
use vrld::theory::TheoryConstants;
use vrld::{BuiltinSpec, Variant};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: BuiltinSpec,
    pub sampler: SamplerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto: Option<AutoSection>,
    /// Declared constants; they take precedence over the potential's analytic ones.
    #[serde(default, skip_serializing_if = "is_default")]
    pub theory: TheoryConstants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealSchedule>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Sampler hyperparameters. In auto mode `eta`, `batch`, `epoch_len` and `steps` are
/// chosen by the theory and must be left out; `gamma` too when the target is
/// optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `KL(ρ_K ‖ ν) <= eps`.
    Kl,
    /// `E[F(X_K)] - F* <= eps`.
    Optimization,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsiMode {
    /// `alpha` from `[theory]`.
    #[default]
    Declared,
    Dissipative,
    WeakMorse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoSection {
    pub target: Target,
    pub eps: f64,
    #[serde(default)]
    pub lsi: LsiMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, var: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "one_u64")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for replicates; 0 means one per core.
    #[serde(default, skip_serializing_if = "is_default")]
    pub workers: usize,
    /// Starting law; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    /// Steps at which states are recorded; every `thin`-th step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// KL of the initial law from the Gibbs law, when it cannot be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(default = "default_out")]
    pub out: String,
    /// Report violated theorem hypotheses as warnings instead of refusing to run.
    #[serde(default)]
    pub allow_hypothesis_violations: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            replicates: 1,
            seed: 0,
            workers: 0,
            init: None,
            checkpoints: None,
            h0: None,
            out: default_out(),
            allow_hypothesis_violations: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// KL of the moment-matched replicate Gaussian to the Gibbs law (quadratics only).
    MomentKl,
    Suboptimality,
    Objective,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MomentKl => "moment_kl",
            Metric::Suboptimality => "suboptimality",
            Metric::Objective => "objective",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub variants: Vec<Variant>,
    pub metric: Metric,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Eta,
    Gamma,
    Batch,
    EpochLen,
    N,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Eta => "eta",
            Axis::Gamma => "gamma",
            Axis::Batch => "batch",
            Axis::EpochLen => "epoch_len",
            Axis::N => "n",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    pub values: Vec<f64>,
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

fn default_out() -> String {
    "out".into()
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// A copy with one sweep axis set to `value`. Integer axes reject fractional values.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self, CliError> {
        let int = || -> Result<usize, CliError> {
            if value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(CliError::Config(vec![format!(
                    "sweep over {} needs positive integers (got {value})",
                    axis.name()
                )]))
            }
        };
        let mut out = self.clone();
        match axis {
            Axis::Eta => out.sampler.eta = Some(value),
            Axis::Gamma => out.sampler.gamma = Some(value),
            Axis::Batch => out.sampler.batch = Some(int()?),
            Axis::EpochLen => out.sampler.epoch_len = Some(int()?),
            Axis::N => {
                let n = int()?;
                let mut table = toml::Table::try_from(&self.potential).expect("potential serializes");
                if !table.contains_key("n") {
                    return Err(CliError::Config(vec![format!(
                        "potential `{}` has no `n` parameter to sweep",
                        self.potential.name()
                    )]));
                }
                table.insert("n".into(), toml::Value::Integer(n as i64));
                out.potential = table
                    .try_into()
                    .map_err(|e: toml::de::Error| CliError::Config(vec![e.to_string()]))?;
            }
        }
        Ok(out)
    }
}
