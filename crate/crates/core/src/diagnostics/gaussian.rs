use nalgebra::{DMatrix, DVector};

use super::DiagnosticsError;
use crate::potentials::{FiniteSumObjective, GaussianMoments};
use crate::theory::xi;

fn check_dims(p: &GaussianMoments, q: &GaussianMoments) -> Result<(), DiagnosticsError> {
    if p.dim() != q.dim() || p.covariance.nrows() != p.dim() || q.covariance.nrows() != q.dim() {
        return Err(DiagnosticsError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// `KL(p ‖ q)` between two Gaussians.
pub fn kl_gaussians(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64, DiagnosticsError> {
    check_dims(p, q)?;
    let not_pd = |which: &str| DiagnosticsError::InvalidInput(format!("{which} covariance is not positive definite"));
    let lq = q.covariance.clone().cholesky().ok_or_else(|| not_pd("second"))?;
    let lp = p.covariance.clone().cholesky().ok_or_else(|| not_pd("first"))?;
    let d = p.dim() as f64;
    let trace = lq.solve(&p.covariance).trace();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&lq.solve(&diff));
    let logdet = |l: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let kl = 0.5 * (trace + maha - d + logdet(&lq) - logdet(&lp));
    Ok(kl.max(0.0))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Wasserstein-2 distance between Gaussians (Bures formula).
pub fn w2_gaussians(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64, DiagnosticsError> {
    check_dims(p, q)?;
    let mean_part = (&p.mean - &q.mean).norm_squared();
    let root_q = psd_sqrt(&q.covariance);
    let cross = psd_sqrt(&(&root_q * &p.covariance * &root_q));
    let cov_part = p.covariance.trace() + q.covariance.trace() - 2.0 * cross.trace();
    Ok((mean_part + cov_part).max(0.0).sqrt())
}

/// Exact law of LMC on `F = ½‖x‖²` after `k` steps from `N(m0, S0)`:
/// `m_k = (1-η)^k m0`, `S_k = (1-η)^{2k} S0 + (2η/γ)(1 - (1-η)^{2k}) / (1 - (1-η)²) I`.
pub fn gaussian_moment_oracle_lmc(
    eta: f64,
    gamma: f64,
    k: u64,
    init: &GaussianMoments,
) -> Result<GaussianMoments, DiagnosticsError> {
    if !(eta > 0.0 && eta < 2.0) {
        return Err(DiagnosticsError::InvalidInput(format!("eta must lie in (0, 2) (got {eta})")));
    }
    if !(gamma > 0.0) {
        return Err(DiagnosticsError::InvalidInput(format!("gamma must be positive (got {gamma})")));
    }
    let c = 1.0 - eta;
    let ck = c.powf(k as f64);
    let c2k = ck * ck;
    let d = init.dim();
    let fixed = 2.0 / (gamma * (2.0 - eta));
    Ok(GaussianMoments {
        mean: &init.mean * ck,
        covariance: &init.covariance * c2k + DMatrix::identity(d, d) * (fixed * (1.0 - c2k)),
    })
}

/// `E[F(X)] - F*` for `F(x) = F* + (c/2)‖x - x*‖²` and `X ~ N(m, S)`:
/// `(c/2)(tr S + ‖m - x*‖²)`.
pub fn gaussian_quadratic_suboptimality(moments: &GaussianMoments, x_star: &[f64], curvature: f64) -> f64 {
    let shift: f64 = moments.mean.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * curvature * (moments.covariance.trace() + shift)
}

/// Exact first and second moments of SVRG-LD on `f_i(x) = (a_i/2)‖x - c_i‖²`.
///
/// In coordinates centred at the minimizer, with `Y` the iterate, `W` the anchor and
/// `δ = â_I - ā` the minibatch deviation of the scales, an inner step is
/// `Y' = (1 - ηā) Y - ηδ (Y - W) + sqrt(2η/γ) ε`. Since `δ` is fresh, mean zero and
/// has variance `Ξ·Var(a)`, the uncentred moments `P = E[YYᵀ]`, `Q = E[YWᵀ]`,
/// `R = E[WWᵀ]` close under the recursion. The law itself is a Gaussian mixture;
/// only its first two moments are exact.
#[derive(Clone, Debug)]
pub struct SvrgMomentState {
    eta: f64,
    gamma: f64,
    contraction: f64,
    delta_var: f64,
    epoch_len: usize,
    x_star: DVector<f64>,
    step: usize,
    mean_y: DVector<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl SvrgMomentState {
    pub fn new(
        eta: f64,
        gamma: f64,
        scales: &[f64],
        batch: usize,
        epoch_len: usize,
        init: &GaussianMoments,
        x_star: &[f64],
    ) -> Result<Self, DiagnosticsError> {
        let n = scales.len();
        let x = xi(n, batch).map_err(|e| DiagnosticsError::InvalidInput(e.to_string()))?;
        if epoch_len == 0 || x_star.len() != init.dim() {
            return Err(DiagnosticsError::InvalidInput(
                "epoch length must be >= 1 and x_star must match the initial law".into(),
            ));
        }
        let mean_a = scales.iter().sum::<f64>() / n as f64;
        let var_a = scales.iter().map(|a| (a - mean_a).powi(2)).sum::<f64>() / n as f64;
        let x_star = DVector::from_column_slice(x_star);
        let mean_y = &init.mean - &x_star;
        let p = &init.covariance + &mean_y * mean_y.transpose();
        Ok(Self {
            eta,
            gamma,
            contraction: 1.0 - eta * mean_a,
            delta_var: x * var_a,
            epoch_len,
            x_star,
            step: 0,
            mean_y,
            q: p.clone(),
            r: p.clone(),
            p,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn advance(&mut self) {
        let c = self.contraction;
        let d = self.p.nrows();
        let noise = DMatrix::identity(d, d) * (2.0 * self.eta / self.gamma);
        if self.step.is_multiple_of(self.epoch_len) {
            self.q = self.p.clone();
            self.r = self.p.clone();
            self.p = &self.p * (c * c) + noise;
            self.q *= c;
        } else {
            let gap = &self.p - &self.q - self.q.transpose() + &self.r;
            self.p = &self.p * (c * c) + gap * (self.eta * self.eta * self.delta_var) + noise;
            self.q *= c;
        }
        self.mean_y *= c;
        self.step += 1;
    }

    pub fn moments(&self) -> GaussianMoments {
        let cov = &self.p - &self.mean_y * self.mean_y.transpose();
        GaussianMoments {
            mean: &self.mean_y + &self.x_star,
            covariance: (&cov + cov.transpose()) * 0.5,
        }
    }

    /// Advances whole epochs until the epoch-end covariance changes by less than
    /// `rel_tol` (relative, max-entry), or `max_epochs` is reached. Returns the
    /// epoch-end moments.
    pub fn run_to_stationarity(&mut self, rel_tol: f64, max_epochs: usize) -> GaussianMoments {
        let mut prev = self.moments();
        for _ in 0..max_epochs {
            for _ in 0..self.epoch_len {
                self.advance();
            }
            let cur = self.moments();
            let change = (&cur.covariance - &prev.covariance).amax() / cur.covariance.amax();
            let mean_change = (&cur.mean - &prev.mean).amax();
            prev = cur;
            if change < rel_tol && mean_change < rel_tol {
                break;
            }
        }
        prev
    }
}

/// [`SvrgMomentState`] evaluated at ascending `checkpoints`.
#[allow(clippy::too_many_arguments)]
pub fn svrg_quadratic_moments(
    eta: f64,
    gamma: f64,
    scales: &[f64],
    batch: usize,
    epoch_len: usize,
    init: &GaussianMoments,
    x_star: &[f64],
    checkpoints: &[usize],
) -> Result<Vec<GaussianMoments>, DiagnosticsError> {
    let mut state = SvrgMomentState::new(eta, gamma, scales, batch, epoch_len, init, x_star)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &k in checkpoints {
        if k < state.step() {
            return Err(DiagnosticsError::InvalidInput("checkpoints must be ascending".into()));
        }
        while state.step() < k {
            state.advance();
        }
        out.push(state.moments());
    }
    Ok(out)
}

/// `KL(N(mean, var) ‖ ν)` for a one-dimensional objective, `ν ∝ exp(-γF)`, by
/// Simpson's rule on `[lo, hi]` with `points` nodes (rounded up to odd).
pub fn kl_gaussian_to_gibbs_1d(
    mean: f64,
    var: f64,
    obj: &FiniteSumObjective,
    gamma: f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<f64, DiagnosticsError> {
    if obj.dim() != 1 {
        return Err(DiagnosticsError::InvalidInput("objective must be one-dimensional".into()));
    }
    if !(var > 0.0 && gamma > 0.0 && hi > lo && points >= 3) {
        return Err(DiagnosticsError::InvalidInput(
            "need var > 0, gamma > 0, hi > lo and at least 3 nodes".into(),
        ));
    }
    let nodes = points | 1;
    let h = (hi - lo) / (nodes - 1) as f64;
    let weight = |j: usize| {
        if j == 0 || j == nodes - 1 {
            h / 3.0
        } else if j % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        }
    };
    let xs: Vec<f64> = (0..nodes).map(|j| lo + h * j as f64).collect();
    let neg_energy: Vec<f64> = xs.iter().map(|&x| -gamma * obj.value(&[x])).collect();
    let log_terms: Vec<f64> = neg_energy
        .iter()
        .enumerate()
        .map(|(j, e)| weight(j).ln() + e)
        .collect();
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + log_terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let mut kl = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        let log_p = log_norm - (x - mean).powi(2) / (2.0 * var);
        let p = log_p.exp();
        if p > 0.0 {
            kl += weight(j) * p * (log_p - (neg_energy[j] - log_z));
        }
    }
    Ok(kl.max(0.0))
}
