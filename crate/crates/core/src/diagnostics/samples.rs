use nalgebra::{DMatrix, DVector};

use super::DiagnosticsError;
use crate::potentials::{FiniteSumObjective, GaussianMoments};

/// Empirical moments of a sample of `d`-vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStats {
    pub count: usize,
    pub mean: DVector<f64>,
    /// Unbiased (`1/(N-1)`) covariance.
    pub covariance: DMatrix<f64>,
    /// Standard error of each mean coordinate.
    pub mean_se: DVector<f64>,
    /// Mean objective value and its standard error, when an objective was supplied.
    pub objective: Option<(f64, f64)>,
}

impl SampleStats {
    /// Two-pass moments in input order, so results are bitwise reproducible.
    pub fn from_samples<'a, I>(samples: I, obj: Option<&FiniteSumObjective>) -> Result<Self, DiagnosticsError>
    where
        I: IntoIterator<Item = &'a [f64]>,
        I::IntoIter: Clone,
    {
        let iter = samples.into_iter();
        let mut count = 0usize;
        let mut dim = None;
        let mut sum = DVector::zeros(0);
        for x in iter.clone() {
            match dim {
                None => {
                    dim = Some(x.len());
                    sum = DVector::zeros(x.len());
                }
                Some(d) if d != x.len() => {
                    return Err(DiagnosticsError::InvalidInput("samples have mixed dimensions".into()));
                }
                _ => {}
            }
            sum += DVector::from_column_slice(x);
            count += 1;
        }
        if count < 2 {
            return Err(DiagnosticsError::InvalidInput(format!(
                "need at least 2 samples (got {count})"
            )));
        }
        let d = dim.unwrap_or(0);
        let nf = count as f64;
        let mean = sum / nf;
        let mut cov = DMatrix::zeros(d, d);
        let mut values = Vec::new();
        for x in iter {
            let c = DVector::from_column_slice(x) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
            if let Some(obj) = obj {
                values.push(obj.value(x));
            }
        }
        cov /= nf - 1.0;
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean_se = cov.diagonal().map(|v| (v / nf).sqrt());
        let objective = obj.map(|_| mean_and_se(&values));
        Ok(Self {
            count,
            mean,
            covariance: cov,
            mean_se,
            objective,
        })
    }

    /// The moment-matched Gaussian, with `jitter·I` added if needed for definiteness.
    pub fn to_gaussian(&self, jitter: f64) -> Result<GaussianMoments, DiagnosticsError> {
        let d = self.mean.len();
        let mut cov = self.covariance.clone();
        if cov.clone().cholesky().is_none() {
            cov += DMatrix::identity(d, d) * jitter;
        }
        GaussianMoments::new(self.mean.clone(), cov).map_err(DiagnosticsError::from)
    }

    /// Standard error of each covariance entry, assuming approximate normality:
    /// `sqrt((S_ij² + S_ii S_jj) / (N - 1))`.
    pub fn covariance_se(&self) -> DMatrix<f64> {
        let s = &self.covariance;
        let nf = (self.count - 1) as f64;
        DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
            ((s[(i, j)].powi(2) + s[(i, i)] * s[(j, j)]) / nf).sqrt()
        })
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact W₂ between two 1-d empirical measures (monotone quantile coupling).
pub fn w2_empirical_1d(xs: &[f64], ys: &[f64]) -> Result<f64, DiagnosticsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(DiagnosticsError::InvalidInput("empty sample".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::InvalidInput("non-finite sample".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    if na == nb {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        return Ok((s / na as f64).sqrt());
    }
    // Walk the merged quantile breakpoints i/na and j/nb using integer arithmetic.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u128;
    let total = (na as u128) * (nb as u128);
    let mut acc = 0.0;
    while i < na && j < nb {
        let next_a = (i as u128 + 1) * nb as u128;
        let next_b = (j as u128 + 1) * na as u128;
        let next = next_a.min(next_b);
        acc += (next - prev) as f64 * (a[i] - b[j]).powi(2);
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok((acc / total as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Suboptimality {
    /// Mean of `F(x) - F*` over the samples.
    pub mean: f64,
    pub se: f64,
}

/// `mean F(x) - F*` over `samples`, with its standard error.
pub fn suboptimality<'a>(
    obj: &FiniteSumObjective,
    samples: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Suboptimality, DiagnosticsError> {
    let f_star = obj
        .f_star()
        .ok_or_else(|| DiagnosticsError::InvalidInput("objective has no declared minimum value".into()))?;
    let values: Vec<f64> = samples.into_iter().map(|x| obj.value(x) - f_star).collect();
    if values.is_empty() {
        return Err(DiagnosticsError::InvalidInput("empty sample".into()));
    }
    let (mean, se) = mean_and_se(&values);
    Ok(Suboptimality { mean, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{make_builtin, BuiltinSpec};
    use crate::samplers::chain_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn stats_hand_values() {
        let pts = [vec![0.0, 1.0], vec![2.0, 1.0], vec![4.0, 4.0]];
        let s = SampleStats::from_samples(pts.iter().map(Vec::as_slice), None).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.mean.as_slice(), &[2.0, 2.0]);
        assert!((s.covariance[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((s.covariance[(1, 1)] - 3.0).abs() < 1e-15);
        assert!((s.covariance[(0, 1)] - 3.0).abs() < 1e-15);
        assert!(SampleStats::from_samples([[1.0].as_slice()], None).is_err());
    }

    #[test]
    fn suboptimality_at_minimizer_is_zero() {
        let obj = make_builtin(&BuiltinSpec::GaussianQuadratic {
            centers: vec![vec![1.0], vec![-1.0]],
            scales: None,
        })
        .unwrap();
        let x = obj.x_star().unwrap().to_vec();
        let s = suboptimality(&obj, [x.as_slice(), x.as_slice()]).unwrap();
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn w2_empirical_values() {
        assert_eq!(w2_empirical_1d(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((w2_empirical_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        // Unequal sizes: {0} vs {0, 2}: half the mass moves by 2.
        assert!((w2_empirical_1d(&[0.0], &[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(w2_empirical_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn w2_empirical_converges_to_gaussian_value() {
        let mut rng = chain_rng(5, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ys: Vec<f64> = (0..n).map(|_| 1.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        // W2² = 1 + (2 - 1)² = 2.
        let w = w2_empirical_1d(&xs, &ys).unwrap();
        assert!((w - 2f64.sqrt()).abs() < 0.02, "{w}");
    }

    proptest! {
        #[test]
        fn w2_empirical_is_a_metric(a in prop::collection::vec(-10.0f64..10.0, 1..12),
                                    b in prop::collection::vec(-10.0f64..10.0, 1..12),
                                    c in prop::collection::vec(-10.0f64..10.0, 1..12)) {
            let ab = w2_empirical_1d(&a, &b).unwrap();
            let ba = w2_empirical_1d(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(w2_empirical_1d(&a, &a).unwrap() <= 1e-12);
            let bc = w2_empirical_1d(&b, &c).unwrap();
            let ac = w2_empirical_1d(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
