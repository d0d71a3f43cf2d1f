use itertools::Itertools;

use super::DiagnosticsError;
use crate::potentials::FiniteSumObjective;
use crate::theory::xi;

/// Largest `n` for which subsets are enumerated exhaustively.
pub const MAX_ENUMERATION_N: usize = 12;

fn check_enumerable(obj: &FiniteSumObjective, b: usize) -> Result<(), DiagnosticsError> {
    let n = obj.n();
    if n > MAX_ENUMERATION_N {
        return Err(DiagnosticsError::InvalidInput(format!(
            "exhaustive enumeration needs n <= {MAX_ENUMERATION_N} (got {n})"
        )));
    }
    if b == 0 || b > n {
        return Err(DiagnosticsError::InvalidInput(format!("batch size {b} outside 1..={n}")));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Both sides of the minibatch variance identity of the SVRG estimator:
/// `E_I ‖v_I - ∇F(x)‖² = Ξ · (1/n) Σ_i ‖∇f_i(x) - ∇f_i(a) + ∇F(a) - ∇F(x)‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceIdentity {
    /// Exhaustive average over all `C(n, B)` subsets.
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn svrg_variance_identity_check(
    obj: &FiniteSumObjective,
    x: &[f64],
    anchor: &[f64],
    b: usize,
) -> Result<VarianceIdentity, DiagnosticsError> {
    check_enumerable(obj, b)?;
    let n = obj.n();
    let d = obj.dim();
    let grad_x = obj.full_gradient(x)?;
    let grad_a = obj.full_gradient(anchor)?;
    let (mut gx, mut ga) = (vec![0.0; d], vec![0.0; d]);
    let mut rhs_sum = 0.0;
    for i in 0..n {
        obj.component_gradient(i, x, &mut gx);
        obj.component_gradient(i, anchor, &mut ga);
        rhs_sum += (0..d)
            .map(|j| (gx[j] - ga[j] + grad_a[j] - grad_x[j]).powi(2))
            .sum::<f64>();
    }
    let rhs = xi(n, b).map_err(|e| DiagnosticsError::InvalidInput(e.to_string()))? * rhs_sum / n as f64;
    let mut delta = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut lhs_sum = 0.0;
    let mut count = 0usize;
    for subset in (0..n).combinations(b) {
        obj.mean_gradient_difference_into(x, anchor, &subset, &mut delta, &mut gx, &mut ga)?;
        for j in 0..d {
            v[j] = delta[j] + grad_a[j];
        }
        lhs_sum += sq_dist(&v, &grad_x);
        count += 1;
    }
    let lhs = lhs_sum / count as f64;
    Ok(VarianceIdentity {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Exhaustive subset averages of the three stochastic gradient estimators at `x`,
/// with `reference` as the SVRG anchor or the previous SARAH iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorMeanCheck {
    pub subsets: usize,
    /// Average minibatch gradient, to compare with `full_gradient`.
    pub sgld_mean: Vec<f64>,
    /// Average SVRG estimate, to compare with `full_gradient`.
    pub svrg_mean: Vec<f64>,
    pub full_gradient: Vec<f64>,
    /// Average SARAH increment, to compare with `gradient_difference`.
    pub sarah_increment_mean: Vec<f64>,
    /// `∇F(x) - ∇F(reference)`.
    pub gradient_difference: Vec<f64>,
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl EstimatorMeanCheck {
    pub fn sgld_gap(&self) -> f64 {
        max_abs_gap(&self.sgld_mean, &self.full_gradient)
    }

    pub fn svrg_gap(&self) -> f64 {
        max_abs_gap(&self.svrg_mean, &self.full_gradient)
    }

    pub fn sarah_gap(&self) -> f64 {
        max_abs_gap(&self.sarah_increment_mean, &self.gradient_difference)
    }
}

pub fn estimator_mean_check(
    obj: &FiniteSumObjective,
    x: &[f64],
    reference: &[f64],
    b: usize,
) -> Result<EstimatorMeanCheck, DiagnosticsError> {
    check_enumerable(obj, b)?;
    let d = obj.dim();
    let grad_x = obj.full_gradient(x)?;
    let grad_r = obj.full_gradient(reference)?;
    let (mut gx, mut gr, mut delta, mut mb) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut inc_sum = vec![0.0; d];
    let mut mb_sum = vec![0.0; d];
    let mut count = 0usize;
    for subset in (0..obj.n()).combinations(b) {
        obj.mean_gradient_difference_into(x, reference, &subset, &mut delta, &mut gx, &mut gr)?;
        obj.mean_gradient_into(x, subset.iter().copied(), &mut mb, &mut gx)?;
        for j in 0..d {
            inc_sum[j] += delta[j];
            mb_sum[j] += mb[j];
        }
        count += 1;
    }
    let inc: Vec<f64> = inc_sum.iter().map(|s| s / count as f64).collect();
    Ok(EstimatorMeanCheck {
        subsets: count,
        sgld_mean: mb_sum.iter().map(|s| s / count as f64).collect(),
        svrg_mean: inc.iter().zip(&grad_r).map(|(a, g)| a + g).collect(),
        full_gradient: grad_x.clone(),
        sarah_increment_mean: inc,
        gradient_difference: grad_x.iter().zip(&grad_r).map(|(a, b)| a - b).collect(),
    })
}

/// Monte Carlo `E_ν ‖∇F‖²` against `dL/γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentBoundCheck {
    pub lhs: f64,
    pub se: f64,
    pub bound: f64,
    /// `lhs <= bound + 3 se`.
    pub holds: bool,
}

/// `samples` should be (approximately) drawn from the Gibbs law at `gamma`.
pub fn grad_second_moment_bound_check<'a>(
    obj: &FiniteSumObjective,
    gamma: f64,
    samples: impl IntoIterator<Item = &'a [f64]>,
) -> Result<MomentBoundCheck, DiagnosticsError> {
    let l = obj
        .smoothness()
        .ok_or_else(|| DiagnosticsError::InvalidInput("objective has no smoothness constant".into()))?
        .value;
    let mut values = Vec::new();
    for x in samples {
        let g = obj.full_gradient(x)?;
        values.push(g.iter().map(|v| v * v).sum::<f64>());
    }
    if values.len() < 2 {
        return Err(DiagnosticsError::InvalidInput("need at least 2 samples".into()));
    }
    let n = values.len() as f64;
    let lhs = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let bound = obj.dim() as f64 * l / gamma;
    Ok(MomentBoundCheck {
        lhs,
        se,
        bound,
        holds: lhs <= bound + 3.0 * se,
    })
}

/// Worst case over a grid of `(F(x) - F*) - ‖∇F(x)‖²/(2L)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyakReport {
    pub min_gap: f64,
    pub argmin: Vec<f64>,
    /// `min_gap >= -1e-10`.
    pub holds: bool,
}

pub fn polyak_gap_check(obj: &FiniteSumObjective, grid: &[Vec<f64>]) -> Result<PolyakReport, DiagnosticsError> {
    let f_star = obj
        .f_star()
        .ok_or_else(|| DiagnosticsError::InvalidInput("objective has no declared minimum value".into()))?;
    let l = obj
        .smoothness()
        .ok_or_else(|| DiagnosticsError::InvalidInput("objective has no smoothness constant".into()))?
        .value;
    if grid.is_empty() {
        return Err(DiagnosticsError::InvalidInput("empty grid".into()));
    }
    let mut best = (f64::INFINITY, Vec::new());
    for x in grid {
        let g = obj.full_gradient(x)?;
        let gap = obj.value(x) - f_star - g.iter().map(|v| v * v).sum::<f64>() / (2.0 * l);
        if gap < best.0 {
            best = (gap, x.clone());
        }
    }
    Ok(PolyakReport {
        min_gap: best.0,
        argmin: best.1,
        holds: best.0 >= -1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{grid_points, make_builtin, BuiltinSpec, GaussianMoments};
    use crate::samplers::chain_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn hetero(n: usize, dim: usize) -> FiniteSumObjective {
        make_builtin(&BuiltinSpec::GeneratedQuadratic {
            n,
            dim,
            spread: 1.5,
            seed: 21,
            scale_range: [0.5, 1.5],
        })
        .unwrap()
    }

    #[test]
    fn identity_trivial_cases() {
        let obj = hetero(6, 2);
        let r = svrg_variance_identity_check(&obj, &[1.0, 2.0], &[1.0, 2.0], 2).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let r = svrg_variance_identity_check(&obj, &[1.0, 2.0], &[-1.0, 0.0], 6).unwrap();
        assert!(r.lhs < 1e-28);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn identity_holds_on_random_points() {
        let obj = hetero(6, 2);
        let r = svrg_variance_identity_check(&obj, &[0.3, -1.2], &[2.0, 0.5], 2).unwrap();
        assert!(r.rhs > 0.01);
        assert!(r.gap <= 1e-12 * (1.0 + r.rhs), "{r:?}");
    }

    #[test]
    fn identity_rejects_large_n() {
        let obj = hetero(13, 1);
        assert!(svrg_variance_identity_check(&obj, &[0.0], &[1.0], 2).is_err());
    }

    #[test]
    fn estimator_means() {
        let obj = hetero(6, 2);
        let r = estimator_mean_check(&obj, &[0.4, 0.1], &[-0.7, 1.3], 2).unwrap();
        assert_eq!(r.subsets, 15);
        assert!(r.sgld_gap() < 1e-12);
        assert!(r.svrg_gap() < 1e-12);
        assert!(r.sarah_gap() < 1e-12);
    }

    fn gibbs_samples(obj: &FiniteSumObjective, gamma: f64, count: usize) -> Vec<Vec<f64>> {
        let GaussianMoments { mean, covariance } = obj.gibbs_gaussian(gamma).unwrap();
        let sd = covariance[(0, 0)].sqrt();
        let mut rng = chain_rng(3, 0);
        (0..count)
            .map(|_| mean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn grad_moment_bound_is_tight_on_unit_quadratic() {
        let obj = make_builtin(&BuiltinSpec::GaussianQuadratic {
            centers: vec![vec![0.0, 0.0]],
            scales: None,
        })
        .unwrap();
        for (gamma, want) in [(1.0, 2.0), (4.0, 0.5)] {
            let s = gibbs_samples(&obj, gamma, 100_000);
            let r = grad_second_moment_bound_check(&obj, gamma, s.iter().map(Vec::as_slice)).unwrap();
            assert_eq!(r.bound, want);
            assert!((r.lhs - want).abs() < 4.0 * r.se);
            assert!(r.holds);
        }
    }

    #[test]
    fn polyak_equality_on_quadratic_and_double_well_pass() {
        let q = make_builtin(&BuiltinSpec::GaussianQuadratic {
            centers: vec![vec![0.5, -0.5]],
            scales: None,
        })
        .unwrap();
        let r = polyak_gap_check(&q, &grid_points(-3.0, 3.0, 13, 2)).unwrap();
        assert!(r.min_gap.abs() < 1e-12 && r.holds);
        let dw = make_builtin(&BuiltinSpec::DoubleWell {
            a: 1.0,
            dim: 1,
            n: 1,
            weights: None,
        })
        .unwrap();
        let r = polyak_gap_check(&dw, &grid_points(-2.0, 2.0, 401, 1)).unwrap();
        assert!(r.holds, "{r:?}");
    }
}
