use nalgebra::{DMatrix, DVector};

use super::PotentialError;

/// Mean and covariance of a non-degenerate Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl GaussianMoments {
    /// Validates symmetry (to 1e-12, relative to the largest entry) and positive
    /// definiteness.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, PotentialError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(PotentialError::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(PotentialError::NonFinite {
                what: "gaussian moments",
                component: None,
            });
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(PotentialError::NotPositiveDefinite(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if covariance.clone().cholesky().is_none() {
            return Err(PotentialError::NotPositiveDefinite(
                "covariance has a non-positive eigenvalue".into(),
            ));
        }
        Ok(Self { mean, covariance })
    }

    /// `N(mean, var·I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        Self {
            mean: DVector::from_vec(mean),
            covariance: DMatrix::identity(d, d) * var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}
