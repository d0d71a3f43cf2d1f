use super::{nonnegative, positive, TheoryError};

const SQRT6: f64 = 2.449_489_742_783_178;

fn check_landscape(d: usize, l: f64, m: f64, b: f64) -> Result<(), TheoryError> {
    if d == 0 {
        return Err(TheoryError::InvalidInput("d must be >= 1".into()));
    }
    positive("L", l)?;
    positive("M", m)?;
    nonnegative("b", b)
}

fn gamma_with_b_factor(eps: f64, d: usize, l: f64, m: f64, b: f64, factor: f64) -> Result<f64, TheoryError> {
    positive("eps", eps)?;
    check_landscape(d, l, m, b)?;
    if l < m {
        return Err(TheoryError::hypothesis("L >= M", format!("L = {l}, M = {m}")));
    }
    let df = d as f64;
    let log_term = 4.0 * df / eps * (std::f64::consts::E * l / m).ln();
    let b_term = factor * df * b / (eps * eps);
    Ok(log_term.max(b_term).max(1.0).max(2.0 / m))
}

/// `max((4d/ε) ln(eL/M), 8db/ε², 1, 2/M)`: the inverse temperature prescribed for
/// optimization to accuracy `ε`.
///
/// The `b` term is not always large enough for [`gibbs_suboptimality_bound`] to drop
/// below `ε/4`; see [`gamma_for_optimization_strict`].
pub fn gamma_for_optimization(eps: f64, d: usize, l: f64, m: f64, b: f64) -> Result<f64, TheoryError> {
    gamma_with_b_factor(eps, d, l, m, b, 8.0)
}

/// As [`gamma_for_optimization`] with the `b` term raised to `16db/ε²`, which does
/// guarantee `gibbs_suboptimality_bound <= ε/4` (via `ln(1+x) <= √x`).
pub fn gamma_for_optimization_strict(eps: f64, d: usize, l: f64, m: f64, b: f64) -> Result<f64, TheoryError> {
    gamma_with_b_factor(eps, d, l, m, b, 16.0)
}

/// `(d/(2γ)) ln((eL/M)(bγ/d + 1))`, a bound on `E_ν[F] - F*` for the Gibbs law.
pub fn gibbs_suboptimality_bound(gamma: f64, d: usize, l: f64, m: f64, b: f64) -> Result<f64, TheoryError> {
    positive("gamma", gamma)?;
    check_landscape(d, l, m, b)?;
    if gamma < 2.0 / m {
        return Err(TheoryError::hypothesis(
            "gamma >= 2/M",
            format!("gamma = {gamma}, 2/M = {}", 2.0 / m),
        ));
    }
    let df = d as f64;
    Ok(df / (2.0 * gamma) * (std::f64::consts::E * l / m * (b * gamma / df + 1.0)).ln())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuboptimalityBound {
    /// `L W₂²`, the transport part.
    pub transport: f64,
    /// `2 (E_ν[F] - F*)` bound.
    pub gibbs: f64,
    pub total: f64,
}

/// `E[F(X_k)] - F* <= L W₂² + 2 (E_ν[F] - F*)`.
pub fn suboptimality_decomposition(
    w2: f64,
    gamma: f64,
    d: usize,
    l: f64,
    m: f64,
    b: f64,
) -> Result<SuboptimalityBound, TheoryError> {
    nonnegative("W2", w2)?;
    let gibbs = 2.0 * gibbs_suboptimality_bound(gamma, d, l, m, b)?;
    let transport = l * w2 * w2;
    Ok(SuboptimalityBound {
        transport,
        gibbs,
        total: transport + gibbs,
    })
}

/// The KL accuracy `αε/(4L)` that makes the transport part at most `ε/2`.
pub fn kl_target_for_optimization(alpha: f64, eps: f64, l: f64) -> Result<f64, TheoryError> {
    positive("alpha", alpha)?;
    positive("eps", eps)?;
    positive("L", l)?;
    Ok(alpha * eps / (4.0 * l))
}

/// `min(α/(16√6 L² √n γ), 3α²ε/(1792 L² d γ))`.
pub fn optimization_step_size(alpha: f64, l: f64, n: usize, gamma: f64, d: usize, eps: f64) -> Result<f64, TheoryError> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("gamma", gamma)?;
    positive("eps", eps)?;
    if n == 0 || d == 0 {
        return Err(TheoryError::InvalidInput("n and d must be >= 1".into()));
    }
    let cap = alpha / (16.0 * SQRT6 * l * l * (n as f64).sqrt() * gamma);
    let acc = 3.0 * alpha * alpha * eps / (1792.0 * l * l * d as f64 * gamma);
    Ok(cap.min(acc))
}
