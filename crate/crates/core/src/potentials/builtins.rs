//! Built-in test potentials.
//!
//! | name                 | F                                   | L          | (M, b)     |
//! |----------------------|-------------------------------------|------------|------------|
//! | `gaussian_quadratic` | mean of `½ a_i |x - c_i|^2`         | analytic   | analytic   |
//! | `double_well`        | `w_i (¼(x_0^2 - a^2)^2 + ½|x_rest|^2)` | estimated | analytic |
//! | `gaussian_mixture`   | `-log(½N(μ_1, s²I) + ½N(μ_2, s²I))`  | analytic   | analytic   |
//! | `logistic_l2`        | logistic loss + `λ/2 |w|^2`          | analytic   | analytic   |
//!
//! For the quadratic with unit scales the dissipativity pair is `M = ½`,
//! `b = ½|x*|^2`, from `<x - x*, x> >= ½|x|^2 - ½|x*|^2`.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::probe::{grid_points, max_hessian_norm};
use super::{Components, Constant, FiniteSumObjective, PotentialError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinSpec {
    GaussianQuadratic {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        centers: Vec<Vec<f64>>,
        /// Per-component curvatures `a_i`; all ones when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
    },
    /// Quadratic with generated centers and curvatures spaced linearly over a range.
    GeneratedQuadratic {
        n: usize,
        dim: usize,
        /// Standard deviation of the Gaussian the centers are drawn from.
        spread: f64,
        seed: u64,
        #[serde(default = "unit_range")]
        scale_range: [f64; 2],
    },
    DoubleWell {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one_usize")]
        dim: usize,
        #[serde(default = "one_usize")]
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        sd: f64,
        #[serde(default = "one_usize")]
        n: usize,
    },
    LogisticL2 {
        /// Path to a whitespace-separated matrix, label in the last column.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<String>,
        /// Inline rows in the same layout as the data file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<Vec<f64>>>,
        lambda: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn unit_range() -> [f64; 2] {
    [1.0, 1.0]
}

impl BuiltinSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinSpec::GaussianQuadratic { .. } => "gaussian_quadratic",
            BuiltinSpec::GeneratedQuadratic { .. } => "generated_quadratic",
            BuiltinSpec::DoubleWell { .. } => "double_well",
            BuiltinSpec::GaussianMixture { .. } => "gaussian_mixture",
            BuiltinSpec::LogisticL2 { .. } => "logistic_l2",
        }
    }
}

pub fn make_builtin(spec: &BuiltinSpec) -> Result<FiniteSumObjective, PotentialError> {
    match spec {
        BuiltinSpec::GaussianQuadratic { centers, scales } => {
            let scales = scales.clone().unwrap_or_else(|| vec![1.0; centers.len()]);
            quadratic(centers.clone(), scales)
        }
        BuiltinSpec::GeneratedQuadratic {
            n,
            dim,
            spread,
            seed,
            scale_range,
        } => {
            let (n, dim) = (*n, *dim);
            if n == 0 || dim == 0 {
                return Err(PotentialError::InvalidParameter(
                    "generated quadratic needs n >= 1 and dim >= 1".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let cs = (0..n)
                .map(|_| {
                    (0..dim)
                        .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let [lo, hi] = *scale_range;
            let scales = (0..n)
                .map(|i| {
                    if n == 1 {
                        0.5 * (lo + hi)
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect();
            quadratic(cs, scales)
        }
        BuiltinSpec::DoubleWell { a, dim, n, weights } => {
            let weights = weights.clone().unwrap_or_else(|| vec![1.0; *n]);
            double_well(*a, *dim, weights)
        }
        BuiltinSpec::GaussianMixture { means, sd, n } => mixture(means, *sd, *n),
        BuiltinSpec::LogisticL2 { data, rows, lambda } => {
            let rows = match (data, rows) {
                (Some(path), None) => read_labeled_matrix_file(path)?,
                (None, Some(rows)) => LabeledRows::from_rows(rows)?,
                _ => {
                    return Err(PotentialError::InvalidParameter(
                        "logistic_l2 needs exactly one of `data` or `rows`".into(),
                    ))
                }
            };
            logistic(rows, *lambda)
        }
    }
}

#[derive(Debug)]
struct Quadratic {
    centers: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl Components for Quadratic {
    fn count(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.centers[i])
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        0.5 * self.scales[i] * sq
    }

    fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let a = self.scales[i];
        for ((o, xi), c) in out.iter_mut().zip(x).zip(&self.centers[i]) {
            *o = a * (xi - c);
        }
    }
}

fn quadratic(centers: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<FiniteSumObjective, PotentialError> {
    let n = centers.len();
    if n == 0 {
        return Err(PotentialError::InvalidParameter(
            "gaussian_quadratic needs at least one center".into(),
        ));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(PotentialError::InvalidParameter(
            "centers must share a positive dimension".into(),
        ));
    }
    if scales.len() != n {
        return Err(PotentialError::InvalidParameter(format!(
            "expected {n} scales, got {}",
            scales.len()
        )));
    }
    if scales.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(PotentialError::NotPositiveDefinite(
            "quadratic scales must be positive".into(),
        ));
    }
    let total: f64 = scales.iter().sum();
    let mean_scale = total / n as f64;
    let mut x_star = vec![0.0; d];
    for (c, a) in centers.iter().zip(&scales) {
        for (x, ci) in x_star.iter_mut().zip(c) {
            *x += a * ci;
        }
    }
    x_star.iter_mut().for_each(|x| *x /= total);
    let l = scales.iter().cloned().fold(0.0, f64::max);
    let x_star_sq: f64 = x_star.iter().map(|v| v * v).sum();
    let comps = Quadratic { centers, scales };
    let f_star = (0..n).map(|i| comps.value(i, &x_star)).sum::<f64>() / n as f64;
    Ok(FiniteSumObjective::new("gaussian_quadratic", Box::new(comps))
        .with_smoothness(Constant::analytic(l))
        .with_dissipativity(
            Constant::analytic(0.5 * mean_scale),
            Constant::analytic(0.5 * mean_scale * x_star_sq),
        )
        .with_stationary_points(vec![x_star.clone()])
        .with_quadratic_curvature(mean_scale)
        .with_minimum(x_star, f_star))
}

#[derive(Debug)]
struct DoubleWell {
    a2: f64,
    dim: usize,
    weights: Vec<f64>,
}

impl Components for DoubleWell {
    fn count(&self) -> usize {
        self.weights.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let q = x[0] * x[0] - self.a2;
        let rest: f64 = x[1..].iter().map(|v| v * v).sum();
        self.weights[i] * (0.25 * q * q + 0.5 * rest)
    }

    fn gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let w = self.weights[i];
        out[0] = w * x[0] * (x[0] * x[0] - self.a2);
        for (o, v) in out[1..].iter_mut().zip(&x[1..]) {
            *o = w * v;
        }
    }
}

/// Half-width of the box, in units of `a`, on which the double-well smoothness
/// constant is estimated.
const DOUBLE_WELL_BOX: f64 = 3.0;

fn double_well(a: f64, dim: usize, weights: Vec<f64>) -> Result<FiniteSumObjective, PotentialError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(PotentialError::InvalidParameter("double_well needs a > 0".into()));
    }
    if dim != 1 && dim != 2 {
        return Err(PotentialError::InvalidParameter("double_well supports dim 1 or 2".into()));
    }
    if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(PotentialError::InvalidParameter(
            "double_well needs n >= 1 positive weights".into(),
        ));
    }
    let n = weights.len();
    let w_bar = weights.iter().sum::<f64>() / n as f64;
    let comps = DoubleWell {
        a2: a * a,
        dim,
        weights,
    };
    let mut x_plus = vec![0.0; dim];
    x_plus[0] = a;
    let mut x_minus = vec![0.0; dim];
    x_minus[0] = -a;
    let saddle = vec![0.0; dim];
    let obj = FiniteSumObjective::new("double_well", Box::new(comps))
        .with_dissipativity(
            Constant::analytic(0.5 * w_bar),
            Constant::analytic(w_bar * (a * a + 0.5).powi(2) / 4.0),
        )
        .with_stationary_points(vec![x_minus, saddle, x_plus.clone()])
        .with_minimum(x_plus, 0.0);
    let per_axis = if dim == 1 { 121 } else { 61 };
    let grid = grid_points(-DOUBLE_WELL_BOX * a, DOUBLE_WELL_BOX * a, per_axis, dim);
    let (_, l_components) = max_hessian_norm(&obj, &grid);
    obj.reset_evals();
    Ok(obj.with_smoothness(Constant::estimated(l_components)))
}

#[derive(Debug)]
struct Mixture {
    means: [Vec<f64>; 2],
    var: f64,
    log_norm: f64,
    n: usize,
}

impl Mixture {
    /// Squared distances scaled by `-1/(2s²)` and the responsibility of the first mean.
    fn log_terms(&self, x: &[f64]) -> [f64; 2] {
        let t = |m: &[f64]| -> f64 {
            -x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * self.var)
        };
        [t(&self.means[0]), t(&self.means[1])]
    }
}

impl Components for Mixture {
    fn count(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn value(&self, _i: usize, x: &[f64]) -> f64 {
        let [u, v] = self.log_terms(x);
        let hi = u.max(v);
        let lse = hi + ((u - hi).exp() + (v - hi).exp()).ln();
        self.log_norm + std::f64::consts::LN_2 - lse
    }

    fn gradient(&self, _i: usize, x: &[f64], out: &mut [f64]) {
        let [u, v] = self.log_terms(x);
        // r = responsibility of the first component, computed without overflow.
        let r = 1.0 / (1.0 + (v - u).exp());
        for (k, o) in out.iter_mut().enumerate() {
            let centroid = r * self.means[0][k] + (1.0 - r) * self.means[1][k];
            *o = (x[k] - centroid) / self.var;
        }
    }
}

fn mixture(means: &[Vec<f64>], sd: f64, n: usize) -> Result<FiniteSumObjective, PotentialError> {
    if means.len() != 2 {
        return Err(PotentialError::InvalidParameter(
            "gaussian_mixture needs exactly two means".into(),
        ));
    }
    let d = means[0].len();
    if d == 0 || means[1].len() != d {
        return Err(PotentialError::InvalidParameter("mixture means differ in dimension".into()));
    }
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(PotentialError::NotPositiveDefinite("mixture sd must be positive".into()));
    }
    if n == 0 {
        return Err(PotentialError::InvalidParameter("mixture needs n >= 1".into()));
    }
    let var = sd * sd;
    let gap2: f64 = means[0]
        .iter()
        .zip(&means[1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    // Hessian = I/s² - r(1-r)ΔΔᵀ/s⁴, so its spectrum lies in [1/s² - |Δ|²/(4s⁴), 1/s²].
    let l = (1.0 / var).max(gap2 / (4.0 * var * var) - 1.0 / var);
    let r2 = means
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let comps = Mixture {
        means: [means[0].clone(), means[1].clone()],
        var,
        log_norm: 0.5 * d as f64 * (2.0 * std::f64::consts::PI * var).ln(),
        n,
    };
    Ok(FiniteSumObjective::new("gaussian_mixture", Box::new(comps))
        .with_smoothness(Constant::analytic(l))
        .with_dissipativity(
            Constant::analytic(1.0 / (2.0 * var)),
            Constant::analytic(r2 / (2.0 * var)),
        ))
}

/// Feature rows with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRows {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl LabeledRows {
    /// Splits rows whose last entry is a 0/1 label.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PotentialError> {
        let mut features = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut width = None;
        for (line, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(PotentialError::Data {
                    line: line + 1,
                    msg: "need at least one feature and a label".into(),
                });
            }
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(PotentialError::Data {
                    line: line + 1,
                    msg: "inconsistent column count".into(),
                });
            }
            let label = row[row.len() - 1];
            if label != 0.0 && label != 1.0 {
                return Err(PotentialError::Data {
                    line: line + 1,
                    msg: format!("label {label} is not 0 or 1"),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(PotentialError::Data {
                    line: line + 1,
                    msg: "non-finite entry".into(),
                });
            }
            features.push(row[..row.len() - 1].to_vec());
            labels.push(label);
        }
        if features.is_empty() {
            return Err(PotentialError::Data {
                line: 0,
                msg: "no rows".into(),
            });
        }
        Ok(Self { features, labels })
    }
}

/// Parses a whitespace-separated matrix, one sample per line, label last. Blank lines
/// and lines starting with `#` are skipped.
pub fn read_labeled_matrix<R: BufRead>(reader: R) -> Result<LabeledRows, PotentialError> {
    let mut rows = Vec::new();
    let mut line_numbers = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| PotentialError::Data {
                    line: k + 1,
                    msg: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        line_numbers.push(k + 1);
    }
    LabeledRows::from_rows(&rows).map_err(|e| match e {
        PotentialError::Data { line, msg } if line > 0 => PotentialError::Data {
            line: line_numbers[line - 1],
            msg,
        },
        other => other,
    })
}

fn read_labeled_matrix_file(path: impl AsRef<Path>) -> Result<LabeledRows, PotentialError> {
    let file = std::fs::File::open(path)?;
    read_labeled_matrix(std::io::BufReader::new(file))
}

#[derive(Debug)]
struct Logistic {
    rows: LabeledRows,
    lambda: f64,
}

impl Components for Logistic {
    fn count(&self) -> usize {
        self.rows.labels.len()
    }

    fn dim(&self) -> usize {
        self.rows.features[0].len()
    }

    fn value(&self, i: usize, w: &[f64]) -> f64 {
        let z = &self.rows.features[i];
        let t: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
        let softplus = t.max(0.0) + (-t.abs()).exp().ln_1p();
        let reg: f64 = w.iter().map(|v| v * v).sum();
        softplus - self.rows.labels[i] * t + 0.5 * self.lambda * reg
    }

    fn gradient(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let z = &self.rows.features[i];
        let t: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
        let sigma = if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        };
        let resid = sigma - self.rows.labels[i];
        for ((o, zi), wi) in out.iter_mut().zip(z).zip(w) {
            *o = resid * zi + self.lambda * wi;
        }
    }
}

fn logistic(rows: LabeledRows, lambda: f64) -> Result<FiniteSumObjective, PotentialError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(PotentialError::NotPositiveDefinite(
            "logistic_l2 needs lambda > 0".into(),
        ));
    }
    let max_sq = rows
        .features
        .iter()
        .map(|z| z.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let comps = Logistic { rows, lambda };
    Ok(FiniteSumObjective::new("logistic_l2", Box::new(comps))
        .with_smoothness(Constant::analytic(lambda + 0.25 * max_sq))
        .with_dissipativity(
            Constant::analytic(0.5 * lambda),
            Constant::analytic(max_sq / (2.0 * lambda)),
        ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimizer_completes_the_square() {
        let centers = vec![vec![1.0, 2.0], vec![-3.0, 0.0], vec![0.5, -1.0]];
        let obj = make_builtin(&BuiltinSpec::GaussianQuadratic {
            centers: centers.clone(),
            scales: None,
        })
        .unwrap();
        let c_bar = [(1.0 - 3.0 + 0.5) / 3.0, (2.0 + 0.0 - 1.0) / 3.0];
        let x_star = obj.x_star().unwrap();
        assert!((x_star[0] - c_bar[0]).abs() < 1e-15);
        assert!((x_star[1] - c_bar[1]).abs() < 1e-15);
        let expected: f64 = centers
            .iter()
            .map(|c| 0.5 * ((c_bar[0] - c[0]).powi(2) + (c_bar[1] - c[1]).powi(2)))
            .sum::<f64>()
            / 3.0;
        assert!((obj.f_star().unwrap() - expected).abs() < 1e-14);
        assert_eq!(obj.smoothness().unwrap(), Constant::analytic(1.0));
        assert_eq!(obj.dissipativity().unwrap().m.value, 0.5);
    }

    #[test]
    fn double_well_minima_and_flagged_smoothness() {
        let obj = make_builtin(&BuiltinSpec::DoubleWell {
            a: 1.0,
            dim: 1,
            n: 3,
            weights: None,
        })
        .unwrap();
        assert_eq!(obj.f_star(), Some(0.0));
        assert_eq!(obj.value(&[1.0]), 0.0);
        assert_eq!(obj.value(&[-1.0]), 0.0);
        let l = obj.smoothness().unwrap();
        assert_eq!(l.origin, super::super::Origin::Estimated);
        // |3x² - 1| peaks at the box edge x = ±3.
        assert!((l.value - 26.0).abs() < 1e-3, "{}", l.value);
        assert_eq!(obj.evals(), 0);
    }

    #[test]
    fn double_well_two_dim_has_saddle() {
        let obj = make_builtin(&BuiltinSpec::DoubleWell {
            a: 1.0,
            dim: 2,
            n: 1,
            weights: None,
        })
        .unwrap();
        assert_eq!(obj.full_gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(obj.stationary_points().len(), 3);
        assert!(obj.value(&[0.0, 0.0]) > 0.0);
    }

    #[test]
    fn logistic_smoothness_is_lambda_plus_quarter_row_norm() {
        let rows = vec![vec![1.0, 2.0, 1.0], vec![-0.5, 0.5, 0.0], vec![3.0, 0.0, 1.0]];
        let obj = make_builtin(&BuiltinSpec::LogisticL2 {
            data: None,
            rows: Some(rows),
            lambda: 0.1,
        })
        .unwrap();
        assert!((obj.smoothness().unwrap().value - (0.1 + 0.25 * 9.0)).abs() < 1e-15);
    }

    #[test]
    fn mixture_is_negative_log_density() {
        let obj = make_builtin(&BuiltinSpec::GaussianMixture {
            means: vec![vec![-2.0], vec![2.0]],
            sd: 1.0,
            n: 2,
        })
        .unwrap();
        let x = 0.3_f64;
        let phi = |m: f64| (-(x - m).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expected = -(0.5 * phi(-2.0) + 0.5 * phi(2.0)).ln();
        assert!((obj.value(&[x]) - expected).abs() < 1e-14);
        // |Δ|² = 16, so L = max(1, 16/4 - 1) = 3.
        assert_eq!(obj.smoothness().unwrap().value, 3.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            make_builtin(&BuiltinSpec::GaussianQuadratic {
                centers: vec![vec![0.0]],
                scales: Some(vec![-1.0]),
            }),
            Err(PotentialError::NotPositiveDefinite(_))
        ));
        assert!(make_builtin(&BuiltinSpec::LogisticL2 {
            data: None,
            rows: Some(vec![vec![1.0, 1.0]]),
            lambda: 0.0,
        })
        .is_err());
        assert!(make_builtin(&BuiltinSpec::DoubleWell {
            a: 1.0,
            dim: 3,
            n: 1,
            weights: None
        })
        .is_err());
    }

    #[test]
    fn matrix_reader_checks_labels() {
        let text = "# header\n1.0 2.0 1\n\n0.5 -1 0\n";
        let rows = read_labeled_matrix(text.as_bytes()).unwrap();
        assert_eq!(rows.features, vec![vec![1.0, 2.0], vec![0.5, -1.0]]);
        assert_eq!(rows.labels, vec![1.0, 0.0]);
        let bad = "1 2 1\n3 4 2\n";
        match read_labeled_matrix(bad.as_bytes()) {
            Err(PotentialError::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "1 2 1\n3 1\n";
        assert!(read_labeled_matrix(ragged.as_bytes()).is_err());
    }
}
