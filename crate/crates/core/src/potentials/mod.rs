//! Finite-sum objectives `F(x) = (1/n) Σ_i f_i(x)`.
//!
//! An objective couples a [`Components`] implementation (pure evaluators of `f_i` and
//! `∇f_i`) with regularity metadata and a shared evaluation counter. Every call to a
//! component gradient bumps the counter, so gradient complexity is measured rather than
//! inferred from the algorithm.

mod builtins;
mod gaussian;
mod probe;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use builtins::{make_builtin, read_labeled_matrix, BuiltinSpec, LabeledRows};
pub use gaussian::GaussianMoments;
pub use probe::{grid_points, probe_regularity, RegularityReport};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("non-finite {what} at component {component:?}")]
    NonFinite {
        what: &'static str,
        component: Option<usize>,
    },
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate index {0} in minibatch")]
    DuplicateIndex(usize),
    #[error("empty minibatch")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("malformed data at line {line}: {msg}")]
    Data { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The per-component evaluators of a finite sum. Implementations must be pure.
pub trait Components: Send + Sync + fmt::Debug {
    /// Number of components `n`.
    fn count(&self) -> usize;
    /// Input dimension `d`.
    fn dim(&self) -> usize;
    fn value(&self, i: usize, x: &[f64]) -> f64;
    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]);
}

/// Where a regularity constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Supplied by the user.
    Declared,
    /// Derived in closed form by the built-in.
    Analytic,
    /// Estimated on a finite grid. Not valid as a theory input.
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub origin: Origin,
}

impl Constant {
    pub fn declared(value: f64) -> Self {
        Self {
            value,
            origin: Origin::Declared,
        }
    }

    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            origin: Origin::Analytic,
        }
    }

    pub fn estimated(value: f64) -> Self {
        Self {
            value,
            origin: Origin::Estimated,
        }
    }

    /// The value if it may feed a closed-form bound.
    pub fn for_theory(&self) -> Option<f64> {
        match self.origin {
            Origin::Estimated => None,
            _ => Some(self.value),
        }
    }
}

/// `(M, b)` such that `<∇F(x), x> >= M |x|^2 - b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dissipativity {
    pub m: Constant,
    pub b: Constant,
}

pub struct FiniteSumObjective {
    name: String,
    components: Box<dyn Components>,
    smoothness: Option<Constant>,
    dissipativity: Option<Dissipativity>,
    f_star: Option<f64>,
    x_star: Option<Vec<f64>>,
    stationary_points: Vec<Vec<f64>>,
    quadratic_curvature: Option<f64>,
    evals: AtomicU64,
}

impl fmt::Debug for FiniteSumObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteSumObjective")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("d", &self.dim())
            .field("smoothness", &self.smoothness)
            .field("dissipativity", &self.dissipativity)
            .field("f_star", &self.f_star)
            .field("x_star", &self.x_star)
            .finish()
    }
}

impl FiniteSumObjective {
    pub fn new(name: impl Into<String>, components: Box<dyn Components>) -> Self {
        Self {
            name: name.into(),
            components,
            smoothness: None,
            dissipativity: None,
            f_star: None,
            x_star: None,
            stationary_points: Vec::new(),
            quadratic_curvature: None,
            evals: AtomicU64::new(0),
        }
    }

    pub fn with_smoothness(mut self, l: Constant) -> Self {
        self.smoothness = Some(l);
        self
    }

    pub fn with_dissipativity(mut self, m: Constant, b: Constant) -> Self {
        self.dissipativity = Some(Dissipativity { m, b });
        self
    }

    pub fn with_minimum(mut self, x_star: Vec<f64>, f_star: f64) -> Self {
        self.x_star = Some(x_star);
        self.f_star = Some(f_star);
        self
    }

    pub fn with_min_value(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn with_stationary_points(mut self, points: Vec<Vec<f64>>) -> Self {
        self.stationary_points = points;
        self
    }

    /// Marks `F` as an isotropic quadratic with Hessian `c·I`, which makes the Gibbs
    /// law an exact Gaussian.
    pub fn with_quadratic_curvature(mut self, c: f64) -> Self {
        self.quadratic_curvature = Some(c);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.components.count()
    }

    pub fn dim(&self) -> usize {
        self.components.dim()
    }

    pub fn smoothness(&self) -> Option<Constant> {
        self.smoothness
    }

    pub fn dissipativity(&self) -> Option<Dissipativity> {
        self.dissipativity
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    pub fn stationary_points(&self) -> &[Vec<f64>] {
        &self.stationary_points
    }

    pub fn quadratic_curvature(&self) -> Option<f64> {
        self.quadratic_curvature
    }

    /// The Gibbs law `∝ exp(-γF)` when it is Gaussian, i.e. `N(x*, I/(γc))`.
    pub fn gibbs_gaussian(&self, gamma: f64) -> Option<GaussianMoments> {
        let c = self.quadratic_curvature?;
        let x_star = self.x_star.as_ref()?;
        Some(GaussianMoments::isotropic(x_star.clone(), 1.0 / (gamma * c)))
    }

    /// Total component-gradient evaluations since construction or the last reset.
    pub fn evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_evals(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.components.value(i, x)
    }

    /// `∇f_i(x)`; counts as one evaluation.
    pub fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.components.gradient(i, x, out);
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.components.value(i, x)).sum::<f64>() / n as f64
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>, PotentialError> {
        self.check_point(x)?;
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        self.full_gradient_into(x, &mut out, &mut scratch)?;
        Ok(out)
    }

    /// `(1/n) Σ ∇f_i(x)` into `out`. `scratch` must have length `d`.
    pub fn full_gradient_into(
        &self,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<(), PotentialError> {
        self.mean_gradient_into(x, 0..self.n(), out, scratch)
    }

    /// `(1/|idx|) Σ_{i in idx} ∇f_i(x)`. Indices are 0-based, distinct and in range.
    pub fn minibatch_gradient(&self, x: &[f64], idx: &[usize]) -> Result<Vec<f64>, PotentialError> {
        self.check_point(x)?;
        self.check_indices(idx)?;
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        self.mean_gradient_into(x, idx.iter().copied(), &mut out, &mut scratch)?;
        Ok(out)
    }

    pub(crate) fn mean_gradient_into(
        &self,
        x: &[f64],
        idx: impl ExactSizeIterator<Item = usize>,
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<(), PotentialError> {
        let count = idx.len();
        out.fill(0.0);
        for i in idx {
            self.component_gradient(i, x, scratch);
            for (o, g) in out.iter_mut().zip(scratch.iter()) {
                *o += g;
            }
        }
        let inv = count as f64;
        for o in out.iter_mut() {
            *o /= inv;
        }
        ensure_finite(out, "gradient")
    }

    /// `(1/|idx|) Σ_{i in idx} (∇f_i(x) - ∇f_i(y))`; costs `2|idx|` evaluations.
    pub(crate) fn mean_gradient_difference_into(
        &self,
        x: &[f64],
        y: &[f64],
        idx: &[usize],
        out: &mut [f64],
        gx: &mut [f64],
        gy: &mut [f64],
    ) -> Result<(), PotentialError> {
        out.fill(0.0);
        for &i in idx {
            self.component_gradient(i, x, gx);
            self.component_gradient(i, y, gy);
            for ((o, a), b) in out.iter_mut().zip(gx.iter()).zip(gy.iter()) {
                *o += a - b;
            }
        }
        let inv = idx.len() as f64;
        for o in out.iter_mut() {
            *o /= inv;
        }
        ensure_finite(out, "gradient difference")
    }

    fn check_point(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.dim() {
            return Err(PotentialError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        ensure_finite(x, "input point")
    }

    fn check_indices(&self, idx: &[usize]) -> Result<(), PotentialError> {
        if idx.is_empty() {
            return Err(PotentialError::EmptyBatch);
        }
        let n = self.n();
        let mut seen = vec![false; n];
        for &i in idx {
            if i >= n {
                return Err(PotentialError::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(PotentialError::DuplicateIndex(i));
            }
        }
        Ok(())
    }
}

fn ensure_finite(v: &[f64], what: &'static str) -> Result<(), PotentialError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PotentialError::NonFinite {
            what,
            component: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_centers() -> FiniteSumObjective {
        make_builtin(&BuiltinSpec::GaussianQuadratic {
            centers: vec![vec![1.0], vec![-1.0]],
            scales: None,
        })
        .unwrap()
    }

    #[test]
    fn full_gradient_symmetric_centers() {
        let obj = two_centers();
        assert_eq!(obj.full_gradient(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(obj.full_gradient(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn full_gradient_double_well_stationary() {
        let obj = make_builtin(&BuiltinSpec::DoubleWell {
            a: 1.0,
            dim: 1,
            n: 5,
            weights: None,
        })
        .unwrap();
        assert_eq!(obj.full_gradient(&[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn minibatch_single_component() {
        let obj = two_centers();
        // f_0 = ½(x-1)², so ∇f_0(0) = -1 = -c_0.
        assert_eq!(obj.minibatch_gradient(&[0.0], &[0]).unwrap(), vec![-1.0]);
        let full = obj.full_gradient(&[0.7]).unwrap();
        assert_eq!(obj.minibatch_gradient(&[0.7], &[0, 1]).unwrap(), full);
        let avg = (obj.minibatch_gradient(&[0.7], &[0]).unwrap()[0]
            + obj.minibatch_gradient(&[0.7], &[1]).unwrap()[0])
            / 2.0;
        assert!((avg - full[0]).abs() < 1e-15);
    }

    #[test]
    fn minibatch_rejects_bad_indices() {
        let obj = two_centers();
        assert!(matches!(
            obj.minibatch_gradient(&[0.0], &[0, 0]),
            Err(PotentialError::DuplicateIndex(0))
        ));
        assert!(matches!(
            obj.minibatch_gradient(&[0.0], &[2]),
            Err(PotentialError::IndexOutOfRange { index: 2, n: 2 })
        ));
        assert!(matches!(
            obj.minibatch_gradient(&[0.0], &[]),
            Err(PotentialError::EmptyBatch)
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let obj = two_centers();
        assert!(matches!(
            obj.full_gradient(&[f64::NAN]),
            Err(PotentialError::NonFinite { .. })
        ));
    }

    #[test]
    fn counter_tracks_component_calls() {
        let obj = two_centers();
        obj.full_gradient(&[0.3]).unwrap();
        obj.minibatch_gradient(&[0.3], &[1]).unwrap();
        assert_eq!(obj.evals(), 3);
        obj.reset_evals();
        assert_eq!(obj.evals(), 0);
    }

    #[test]
    fn estimated_constants_are_not_theory_inputs() {
        assert_eq!(Constant::estimated(2.0).for_theory(), None);
        assert_eq!(Constant::declared(2.0).for_theory(), Some(2.0));
    }
}
