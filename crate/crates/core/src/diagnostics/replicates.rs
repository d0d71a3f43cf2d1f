use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::DiagnosticsError;
use crate::potentials::{FiniteSumObjective, GaussianMoments};
use crate::samplers::{chain_rng, AnnealSchedule, Chain, SamplerConfig, SamplerError};

/// Where replicate chains start.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Point(Vec<f64>),
    /// Replicate `r` draws its start from stream `r` of seed `!cfg.seed`, so the
    /// chain's own noise stream is untouched.
    Gaussian(GaussianMoments),
}

impl InitialLaw {
    fn dim(&self) -> usize {
        match self {
            InitialLaw::Point(x) => x.len(),
            InitialLaw::Gaussian(g) => g.dim(),
        }
    }
}

/// States of every replicate at each checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRun {
    pub checkpoints: Vec<usize>,
    /// `states[c][r]` is replicate `r` after `checkpoints[c]` steps.
    pub states: Vec<Vec<Vec<f64>>>,
    /// Per-chain component-gradient evaluations at each checkpoint.
    pub grad_evals: Vec<u64>,
}

impl ReplicateRun {
    pub fn at(&self, c: usize) -> impl Iterator<Item = &[f64]> + Clone {
        self.states[c].iter().map(Vec::as_slice)
    }
}

/// Runs `replicates` independent chains (replicate `r` on generator stream `r`) and
/// collects their states at ascending `checkpoints`. With `schedule` set, epoch `s`
/// uses the annealed `(η_s, γ_s)` instead of `cfg.eta`/`cfg.gamma`.
///
/// Results are ordered by replicate index and do not depend on `workers`
/// (0 means one thread per core).
pub fn run_replicates(
    obj: &FiniteSumObjective,
    cfg: &SamplerConfig,
    schedule: Option<&AnnealSchedule>,
    init: &InitialLaw,
    replicates: u64,
    checkpoints: &[usize],
    workers: usize,
) -> Result<ReplicateRun, DiagnosticsError> {
    match schedule {
        None => cfg.validate(obj.n())?,
        Some(s) => {
            s.validate()?;
            let mut probe = cfg.clone();
            probe.eta = s.eta(0);
            probe.gamma = s.gamma(0).max(1.0);
            probe.validate(obj.n())?;
        }
    }
    if init.dim() != obj.dim() {
        return Err(DiagnosticsError::InvalidInput("initial law dimension differs from objective".into()));
    }
    if replicates == 0 {
        return Err(DiagnosticsError::InvalidInput("need at least one replicate".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints.last().is_some_and(|&k| k > cfg.steps) {
        return Err(DiagnosticsError::InvalidInput(
            "checkpoints must be strictly ascending and at most the step count".into(),
        ));
    }
    let chol = match init {
        InitialLaw::Gaussian(g) => Some(
            g.covariance
                .clone()
                .cholesky()
                .ok_or_else(|| DiagnosticsError::InvalidInput("initial covariance not positive definite".into()))?
                .l(),
        ),
        InitialLaw::Point(_) => None,
    };

    let one = |r: u64| -> Result<(Vec<Vec<f64>>, Vec<u64>), SamplerError> {
        let x0 = match init {
            InitialLaw::Point(x) => x.clone(),
            InitialLaw::Gaussian(g) => {
                let mut rng = chain_rng(!cfg.seed, r);
                let z = nalgebra::DVector::from_fn(g.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                (&g.mean + chol.as_ref().expect("cholesky factor") * z).as_slice().to_vec()
            }
        };
        let mut chain = Chain::new(obj, cfg, &x0, chain_rng(cfg.seed, r))?;
        let mut states = Vec::with_capacity(checkpoints.len());
        let mut evals = Vec::with_capacity(checkpoints.len());
        let mut next = checkpoints.iter().peekable();
        while next.peek() == Some(&&0) {
            states.push(x0.clone());
            evals.push(0);
            next.next();
        }
        for k in 0..cfg.steps {
            if next.peek().is_none() {
                break;
            }
            if k % cfg.epoch_len == 0 {
                if let Some(s) = schedule {
                    let p = s.at(k / cfg.epoch_len);
                    chain.set_params(p.eta, p.gamma);
                }
            }
            chain.advance()?;
            if next.peek() == Some(&&(k + 1)) {
                states.push(chain.state().to_vec());
                evals.push(chain.grad_evals());
                next.next();
            }
        }
        Ok((states, evals))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DiagnosticsError::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| (0..replicates).into_par_iter().map(one).collect());

    let mut states = vec![Vec::with_capacity(replicates as usize); checkpoints.len()];
    let mut grad_evals = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let (s, e) = res?;
        if r == 0 {
            grad_evals = e;
        }
        for (c, x) in s.into_iter().enumerate() {
            states[c].push(x);
        }
    }
    Ok(ReplicateRun {
        checkpoints: checkpoints.to_vec(),
        states,
        grad_evals,
    })
}
