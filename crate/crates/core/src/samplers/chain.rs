use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{sample_index_set, SamplerConfig, SamplerError, Variant};
use crate::potentials::{FiniteSumObjective, PotentialError};

/// Counter-based generator used by every chain.
pub type ChainRng = ChaCha8Rng;

/// The generator for replicate `stream` under `seed`. Streams of one seed never
/// overlap, so replicate results do not depend on thread layout.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A single Langevin chain advanced one step at a time.
///
/// The gradient estimator `v` and its reference point persist between steps. For
/// SVRG-LD the reference is the epoch anchor, for SARAH-LD it is the previous iterate.
#[derive(Debug)]
pub struct Chain<'a> {
    obj: &'a FiniteSumObjective,
    variant: Variant,
    batch: usize,
    epoch_len: usize,
    eta: f64,
    gamma: f64,
    noise_free: bool,
    rng: ChainRng,
    step: usize,
    evals: u64,
    x: Vec<f64>,
    reference: Vec<f64>,
    v: Vec<f64>,
    noise: Vec<f64>,
    idx: Vec<usize>,
    delta: Vec<f64>,
    ga: Vec<f64>,
    gb: Vec<f64>,
    anchor_grad: Vec<f64>,
    increments: Vec<f64>,
}

impl<'a> Chain<'a> {
    pub fn new(
        obj: &'a FiniteSumObjective,
        cfg: &SamplerConfig,
        x0: &[f64],
        rng: ChainRng,
    ) -> Result<Self, SamplerError> {
        let d = obj.dim();
        if x0.len() != d {
            return Err(PotentialError::DimensionMismatch {
                expected: d,
                got: x0.len(),
            }
            .into());
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::NonFinite {
                what: "initial point",
                component: None,
            }
            .into());
        }
        Ok(Self {
            obj,
            variant: cfg.variant,
            batch: cfg.batch.clamp(1, obj.n()),
            epoch_len: cfg.epoch_len.max(1),
            eta: cfg.eta,
            gamma: cfg.gamma,
            noise_free: false,
            rng,
            step: 0,
            evals: 0,
            x: x0.to_vec(),
            reference: x0.to_vec(),
            v: vec![0.0; d],
            noise: vec![0.0; d],
            idx: Vec::with_capacity(obj.n()),
            delta: vec![0.0; d],
            ga: vec![0.0; d],
            gb: vec![0.0; d],
            anchor_grad: vec![0.0; d],
            increments: vec![0.0; d],
        })
    }

    pub fn set_params(&mut self, eta: f64, gamma: f64) {
        self.eta = eta;
        self.gamma = gamma;
    }

    /// Zeroes the injected noise. The generator is still advanced, so a noise-free
    /// chain sees the same minibatches as its noisy twin.
    pub fn set_noise_free(&mut self, on: bool) {
        self.noise_free = on;
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Number of steps taken.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Component-gradient evaluations made by this chain.
    pub fn grad_evals(&self) -> u64 {
        self.evals
    }

    /// The gradient estimate used by the most recent step.
    pub fn estimate(&self) -> &[f64] {
        &self.v
    }

    pub fn advance(&mut self) -> Result<(), SamplerError> {
        for e in self.noise.iter_mut() {
            *e = self.rng.sample(StandardNormal);
        }
        let n = self.obj.n();
        let epoch_start = self.step.is_multiple_of(self.epoch_len);
        let res = match self.variant {
            Variant::Lmc => self.full_gradient(),
            Variant::Sgld => {
                sample_index_set(n, self.batch, &mut self.rng, &mut self.idx);
                self.evals += self.idx.len() as u64;
                self.obj
                    .mean_gradient_into(&self.x, self.idx.iter().copied(), &mut self.v, &mut self.ga)
            }
            Variant::SvrgLd if epoch_start => self.refresh_anchor(),
            Variant::SvrgLd => self.batch_delta().map(|()| {
                for ((v, dl), g) in self.v.iter_mut().zip(&self.delta).zip(&self.anchor_grad) {
                    *v = dl + g;
                }
            }),
            Variant::SarahLd if epoch_start => self.refresh_anchor(),
            Variant::SarahLd => self.batch_delta().map(|()| {
                for (v, dl) in self.v.iter_mut().zip(&self.delta) {
                    *v += dl;
                }
                self.check_telescoping();
            }),
        };
        self.step += 1;
        let diverged = || SamplerError::Diverged {
            step: self.step,
            trace: Box::default(),
        };
        match res {
            Ok(()) => {}
            Err(PotentialError::NonFinite { .. }) => return Err(diverged()),
            Err(e) => return Err(e.into()),
        }
        if self.variant == Variant::SarahLd {
            self.reference.copy_from_slice(&self.x);
        }
        let scale = if self.noise_free {
            0.0
        } else {
            (2.0 * self.eta / self.gamma).sqrt()
        };
        for ((x, v), e) in self.x.iter_mut().zip(&self.v).zip(&self.noise) {
            *x = *x - self.eta * v + scale * e;
        }
        if self.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(diverged())
        }
    }

    fn full_gradient(&mut self) -> Result<(), PotentialError> {
        self.evals += self.obj.n() as u64;
        self.obj.full_gradient_into(&self.x, &mut self.v, &mut self.ga)
    }

    fn refresh_anchor(&mut self) -> Result<(), PotentialError> {
        self.full_gradient()?;
        self.reference.copy_from_slice(&self.x);
        self.anchor_grad.copy_from_slice(&self.v);
        self.increments.fill(0.0);
        Ok(())
    }

    /// `(1/B) Σ_{i in I} (∇f_i(x) - ∇f_i(reference))` into `delta`.
    fn batch_delta(&mut self) -> Result<(), PotentialError> {
        sample_index_set(self.obj.n(), self.batch, &mut self.rng, &mut self.idx);
        self.evals += 2 * self.idx.len() as u64;
        self.obj.mean_gradient_difference_into(
            &self.x,
            &self.reference,
            &self.idx,
            &mut self.delta,
            &mut self.ga,
            &mut self.gb,
        )
    }

    /// SARAH: `v` minus the increments accumulated this epoch is the anchor gradient.
    fn check_telescoping(&mut self) {
        if cfg!(debug_assertions) {
            let mut worst = 0.0_f64;
            for ((inc, dl), (v, g)) in self
                .increments
                .iter_mut()
                .zip(&self.delta)
                .zip(self.v.iter().zip(&self.anchor_grad))
            {
                *inc += dl;
                worst = worst.max((v - *inc - g).abs() / (1.0 + g.abs() + inc.abs()));
            }
            debug_assert!(worst <= 1e-12, "SARAH telescoping identity broken by {worst:e}");
        }
    }
}
