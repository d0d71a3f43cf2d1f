use super::{nonnegative, positive, TheoryError};
use crate::potentials::FiniteSumObjective;

/// LSI constant of the Gibbs law under dissipativity, `α = γ C₁ exp(-C₂ γ)`.
///
/// `C₁` involves `exp((2d/M)(L+B*))` and `α` decays like `exp(-C₂γ)`, so both are
/// also returned as logarithms; the linear values may underflow to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipativeLsi {
    pub alpha: f64,
    pub ln_alpha: f64,
    pub c1: f64,
    pub ln_c1: f64,
    pub c2: f64,
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[allow(clippy::too_many_arguments)]
pub fn lsi_dissipative(
    gamma: f64,
    l: f64,
    m: f64,
    b: f64,
    d: usize,
    a_star: f64,
    b_star: f64,
    c_star: f64,
) -> Result<DissipativeLsi, TheoryError> {
    positive("gamma", gamma)?;
    positive("L", l)?;
    positive("M", m)?;
    positive("b", b)?;
    positive("C*", c_star)?;
    nonnegative("A*", a_star)?;
    nonnegative("B*", b_star)?;
    if d == 0 {
        return Err(TheoryError::InvalidInput("d must be >= 1".into()));
    }
    if gamma < 2.0 / m {
        return Err(TheoryError::hypothesis(
            "gamma >= 2/M",
            format!("gamma = {gamma}, 2/M = {}", 2.0 / m),
        ));
    }
    let df = d as f64;
    let p = (2.0 * m * m + 2.0 * l * l) / (m * m * l);
    let q = 6.0 * l * df / m + 2.0;
    let ln_bracket = log_sum_exp(&[
        p.ln(),
        q.ln() - (m * df).ln(),
        q.ln() + (2.0 * c_star * df / m).ln() + 2.0 * df / m * (l + b_star),
    ]);
    let ln_c1 = -ln_bracket;
    let c2 = 2.0 * b / m * (l + b_star) + (a_star + b_star) + b + 1.0;
    let ln_alpha = gamma.ln() + ln_c1 - c2 * gamma;
    Ok(DissipativeLsi {
        alpha: ln_alpha.exp(),
        ln_alpha,
        c1: ln_c1.exp(),
        ln_c1,
        c2,
    })
}

/// LSI constant under the weak Morse conditions, `α = C₃ / γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakMorseLsi {
    pub alpha: f64,
    /// Reciprocal of `(2M²+8L²)/(M²L) + (6L(d+1)/M + 2)·35/λ†`.
    pub c3: f64,
    /// Smallest inverse temperature for which the constant is established.
    pub gamma_floor: f64,
}

/// The temperature floor `max(1, a²·4dL'²/λ†², 4L'²a⁶)` with `a² = 24dL/C_F²`, and
/// the name of the binding term.
fn weak_morse_floor(d: f64, l: f64, lambda_dagger: f64, l_prime: f64, c_f: f64) -> (f64, &'static str) {
    let a2 = 24.0 * d * l / (c_f * c_f);
    let terms = [
        (1.0, "gamma >= 1"),
        (a2 * 4.0 * d * l_prime * l_prime / (lambda_dagger * lambda_dagger), "gamma >= a^2 4 d L'^2 / lambda^2"),
        (4.0 * l_prime * l_prime * a2 * a2 * a2, "gamma >= 4 L'^2 a^6"),
    ];
    terms
        .into_iter()
        .fold((f64::NEG_INFINITY, ""), |acc, t| if t.0 > acc.0 { t } else { acc })
}

#[allow(clippy::too_many_arguments)]
pub fn lsi_weak_morse(
    gamma: f64,
    lambda_dagger: f64,
    m: f64,
    l: f64,
    d: usize,
    l_prime: f64,
    c_f: f64,
) -> Result<WeakMorseLsi, TheoryError> {
    positive("gamma", gamma)?;
    positive("lambda_dagger", lambda_dagger)?;
    positive("M", m)?;
    positive("L", l)?;
    positive("L'", l_prime)?;
    positive("C_F", c_f)?;
    if d == 0 {
        return Err(TheoryError::InvalidInput("d must be >= 1".into()));
    }
    if lambda_dagger > 1.0 {
        return Err(TheoryError::InvalidInput(format!("lambda_dagger must be <= 1 (got {lambda_dagger})")));
    }
    if c_f > 1.0 {
        return Err(TheoryError::InvalidInput(format!("C_F must be <= 1 (got {c_f})")));
    }
    let df = d as f64;
    let (gamma_floor, binding) = weak_morse_floor(df, l, lambda_dagger, l_prime, c_f);
    if gamma < gamma_floor {
        return Err(TheoryError::hypothesis(
            binding,
            format!("gamma = {gamma}, floor = {gamma_floor}"),
        ));
    }
    let bracket = (2.0 * m * m + 8.0 * l * l) / (m * m * l) + (6.0 * l * (df + 1.0) / m + 2.0) * 35.0 / lambda_dagger;
    let c3 = 1.0 / bracket;
    Ok(WeakMorseLsi {
        alpha: c3 / gamma,
        c3,
        gamma_floor,
    })
}

/// Poincaré constant `λ†/35` near the stationary set.
pub fn poincare_constant(lambda_dagger: f64) -> Result<f64, TheoryError> {
    positive("lambda_dagger", lambda_dagger)?;
    Ok(lambda_dagger / 35.0)
}

/// Grid estimate of the gradient-growth constant `C_F`.
///
/// This is heuristic: the infimum is taken only over the supplied points, so the
/// value can overestimate the true constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfEstimate {
    pub value: f64,
    /// Grid points farther than `λ†/(4dL')` from every stationary point.
    pub points_used: usize,
}

/// `min(1, λ†/2, inf ‖∇F(x)‖ / dist(x, C))` over grid points with
/// `dist(x, C) > λ†/(4dL')`, where `C` is the objective's declared stationary set.
pub fn estimate_cf(
    obj: &FiniteSumObjective,
    grid: &[Vec<f64>],
    lambda_dagger: f64,
    l_prime: f64,
) -> Result<CfEstimate, TheoryError> {
    positive("lambda_dagger", lambda_dagger)?;
    positive("L'", l_prime)?;
    let stationary = obj.stationary_points();
    if stationary.is_empty() {
        return Err(TheoryError::InvalidInput(
            "the objective declares no stationary points".into(),
        ));
    }
    let radius = lambda_dagger / (4.0 * obj.dim() as f64 * l_prime);
    let mut ratio = f64::INFINITY;
    let mut used = 0;
    for x in grid {
        let dist = stationary
            .iter()
            .map(|s| s.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        if dist <= radius {
            continue;
        }
        let g = obj
            .full_gradient(x)
            .map_err(|e| TheoryError::InvalidInput(e.to_string()))?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        ratio = ratio.min(norm / dist);
        used += 1;
    }
    obj.reset_evals();
    Ok(CfEstimate {
        value: 1f64.min(lambda_dagger / 2.0).min(ratio),
        points_used: used,
    })
}
