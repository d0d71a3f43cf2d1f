use super::{nonnegative, positive, Estimator, TheoryError, Violation};

/// Universal upper bound on [`upsilon`] whenever `B >= m`.
pub const UPSILON_CAP: f64 = 7.0;

const SQRT6: f64 = 2.449_489_742_783_178;
const SQRT2: f64 = std::f64::consts::SQRT_2;

/// `Ξ = (n - B) / (B (n - 1))`, the minibatch variance factor of sampling `B` of `n`
/// without replacement. Defined as 0 for `n = 1`.
pub fn xi(n: usize, b: usize) -> Result<f64, TheoryError> {
    if b == 0 || b > n {
        return Err(TheoryError::InvalidInput(format!("batch size {b} outside 1..={n}")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    Ok((n - b) as f64 / (b as f64 * (n - 1) as f64))
}

/// `Υ = Λ + Ξ + 1 + 2mΞ` with `Λ = 1 + 2Ξ`.
pub fn upsilon(n: usize, b: usize, m: usize) -> Result<f64, TheoryError> {
    let x = xi(n, b)?;
    Ok((1.0 + 2.0 * x) + x + 1.0 + 2.0 * m as f64 * x)
}

/// Strict upper bound on the constant step size: `α / (16√6 L² m γ)` for SVRG and
/// `α / (16√2 L² m γ)` for SARAH.
pub fn step_cap(est: Estimator, alpha: f64, l: f64, m: usize, gamma: f64) -> Result<f64, TheoryError> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("gamma", gamma)?;
    if m == 0 {
        return Err(TheoryError::InvalidInput("epoch length must be >= 1".into()));
    }
    let root = match est {
        Estimator::Svrg => SQRT6,
        Estimator::Sarah => SQRT2,
    };
    Ok(alpha / (16.0 * root * l * l * m as f64 * gamma))
}

/// Inputs of the KL bound after `k` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlInputs {
    /// KL divergence of the initial law from the Gibbs law.
    pub h0: f64,
    pub k: u64,
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub d: usize,
    pub l: f64,
    pub n: usize,
    pub b: usize,
    pub m: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlBound {
    /// `exp(-αηk/γ) H0`.
    pub decay: f64,
    /// The step-size dependent residual.
    pub bias: f64,
    pub total: f64,
}

fn check_inputs(p: &KlInputs) -> Result<(), TheoryError> {
    nonnegative("H0", p.h0)?;
    positive("eta", p.eta)?;
    positive("gamma", p.gamma)?;
    positive("alpha", p.alpha)?;
    positive("L", p.l)?;
    if p.d == 0 {
        return Err(TheoryError::InvalidInput("d must be >= 1".into()));
    }
    if p.m == 0 {
        return Err(TheoryError::InvalidInput("epoch length must be >= 1".into()));
    }
    xi(p.n, p.b).map(|_| ())
}

/// Every hypothesis of the KL bound that `p` violates.
pub fn kl_hypotheses(est: Estimator, p: &KlInputs) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.gamma < 1.0 {
        out.push(Violation {
            requirement: "gamma >= 1",
            detail: format!("gamma = {}", p.gamma),
        });
    }
    if est == Estimator::Svrg && p.b < p.m {
        out.push(Violation {
            requirement: "B >= m",
            detail: format!("B = {}, m = {}", p.b, p.m),
        });
    }
    if let Ok(cap) = step_cap(est, p.alpha, p.l, p.m, p.gamma) {
        if p.eta >= cap {
            out.push(Violation {
                requirement: match est {
                    Estimator::Svrg => "eta < alpha / (16 sqrt(6) L^2 m gamma)",
                    Estimator::Sarah => "eta < alpha / (16 sqrt(2) L^2 m gamma)",
                },
                detail: format!("eta = {}, cap = {cap}", p.eta),
            });
        }
    }
    if p.alpha > p.gamma * p.l * (1.0 + 1e-12) {
        out.push(Violation {
            requirement: "alpha <= gamma L",
            detail: format!("alpha = {}, gamma L = {}", p.alpha, p.gamma * p.l),
        });
    }
    out
}

/// The bias term without checking the step-size hypotheses.
///
/// SVRG: `(32ηγdL²/(3α)) Υ`; SARAH: `(32ηγdL²/(3α)) (2 + Ξ + 2mΞ)`.
pub fn bias_term(est: Estimator, p: &KlInputs) -> Result<f64, TheoryError> {
    check_inputs(p)?;
    let pre = 32.0 * p.eta * p.gamma * p.d as f64 * p.l * p.l / (3.0 * p.alpha);
    let x = xi(p.n, p.b)?;
    Ok(match est {
        Estimator::Svrg => pre * upsilon(p.n, p.b, p.m)?,
        Estimator::Sarah => pre * (2.0 + x + 2.0 * p.m as f64 * x),
    })
}

/// The coarse SVRG bias `224ηγdL²/(3α)`, i.e. the tight coefficient with `Υ` replaced
/// by its cap of 7.
pub fn svrg_bias_coarse(eta: f64, gamma: f64, alpha: f64, d: usize, l: f64) -> Result<f64, TheoryError> {
    positive("eta", eta)?;
    positive("gamma", gamma)?;
    positive("alpha", alpha)?;
    positive("L", l)?;
    Ok(224.0 * eta * gamma * d as f64 * l * l / (3.0 * alpha))
}

/// Upper bound on the KL divergence of the iterate law after `k` steps.
pub fn kl_bound(est: Estimator, p: &KlInputs) -> Result<KlBound, TheoryError> {
    check_inputs(p)?;
    if let Some(v) = kl_hypotheses(est, p).into_iter().next() {
        return Err(TheoryError::Hypothesis(v));
    }
    let decay = (-p.alpha * p.eta * p.k as f64 / p.gamma).exp() * p.h0;
    let bias = bias_term(est, p)?;
    Ok(KlBound {
        decay,
        bias,
        total: decay + bias,
    })
}

/// Smallest `k` with `exp(-αηk/γ) H0 <= ε/2`, i.e. `⌈(γ/(αη)) ln(2H0/ε)⌉` floored at 0.
pub fn iterations_for_eps(eps: f64, h0: f64, gamma: f64, alpha: f64, eta: f64) -> Result<u64, TheoryError> {
    positive("eps", eps)?;
    nonnegative("H0", h0)?;
    positive("gamma", gamma)?;
    positive("alpha", alpha)?;
    positive("eta", eta)?;
    let log = (2.0 * h0 / eps).ln();
    if log <= 0.0 {
        return Ok(0);
    }
    Ok((gamma / (alpha * eta) * log).ceil() as u64)
}

/// Largest step size whose bias term is at most `ε/2`.
///
/// SVRG uses the coarse constant: `3αε / (448γdL²)`. SARAH:
/// `3αε / (64γdL²) · (2 + Ξ + 2mΞ)^{-1}`.
pub fn eta_for_eps(
    est: Estimator,
    eps: f64,
    gamma: f64,
    alpha: f64,
    d: usize,
    l: f64,
    n: usize,
    b: usize,
    m: usize,
) -> Result<f64, TheoryError> {
    positive("eps", eps)?;
    positive("gamma", gamma)?;
    positive("alpha", alpha)?;
    positive("L", l)?;
    let base = 3.0 * alpha * eps / (gamma * d as f64 * l * l);
    Ok(match est {
        Estimator::Svrg => base / 448.0,
        Estimator::Sarah => {
            let x = xi(n, b)?;
            base / 64.0 / (2.0 + x + 2.0 * m as f64 * x)
        }
    })
}

/// Parameters chosen to reach `KL <= eps` with `B = m = √n` and the largest
/// admissible step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingPlan {
    pub batch: usize,
    pub epoch_len: usize,
    pub eta: f64,
    pub eta_cap: f64,
    pub eta_eps: f64,
    /// Step count rounded up to a whole number of epochs.
    pub steps: u64,
    pub grad_evals: u64,
}

/// `√n` rounded to the nearest integer, at least 1.
pub(crate) fn sqrt_batch(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

/// The step cap is strict, so the plan backs off by one part in 10⁹ when it binds.
pub fn plan_for_kl(
    est: Estimator,
    eps: f64,
    h0: f64,
    alpha: f64,
    gamma: f64,
    d: usize,
    l: f64,
    n: usize,
) -> Result<SamplingPlan, TheoryError> {
    let bm = sqrt_batch(n);
    let eta_cap = step_cap(est, alpha, l, bm, gamma)?;
    let eta_eps = eta_for_eps(est, eps, gamma, alpha, d, l, n, bm, bm)?;
    let eta = eta_eps.min(eta_cap * (1.0 - 1e-9));
    let k = iterations_for_eps(eps, h0, gamma, alpha, eta)?;
    let steps = k.div_ceil(bm as u64) * bm as u64;
    Ok(SamplingPlan {
        batch: bm,
        epoch_len: bm,
        eta,
        eta_cap,
        eta_eps,
        steps,
        grad_evals: gradient_complexity(steps, bm, bm, n)?,
    })
}

/// `(k/m)(n + 2B(m-1))`: one full gradient per epoch plus `2B` per inner step.
pub fn gradient_complexity(k: u64, b: usize, m: usize, n: usize) -> Result<u64, TheoryError> {
    if m == 0 || !k.is_multiple_of(m as u64) {
        return Err(TheoryError::InvalidInput(format!(
            "epoch length {m} must divide the step count {k}"
        )));
    }
    Ok(k / m as u64 * (n as u64 + 2 * b as u64 * (m as u64 - 1)))
}

/// `√(2H/α)`, the Wasserstein-2 distance implied by a KL value under LSI(α).
pub fn talagrand_w2(h: f64, alpha: f64) -> Result<f64, TheoryError> {
    nonnegative("H", h)?;
    positive("alpha", alpha)?;
    Ok((2.0 * h / alpha).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs() -> KlInputs {
        KlInputs {
            h0: 1.0,
            k: 100,
            eta: 1e-4,
            gamma: 1.0,
            alpha: 1.0,
            d: 1,
            l: 1.0,
            n: 16,
            b: 4,
            m: 4,
        }
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi(16, 16).unwrap(), 0.0);
        assert_eq!(xi(2, 1).unwrap(), 1.0);
        assert!((xi(16, 4).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(xi(1, 1).unwrap(), 0.0);
        assert!(xi(3, 0).is_err());
        assert!(xi(3, 4).is_err());
    }

    #[test]
    fn upsilon_value() {
        assert!((upsilon(16, 4, 4).unwrap() - 4.2).abs() < 1e-12);
    }

    #[test]
    fn step_cap_values() {
        let svrg = step_cap(Estimator::Svrg, 1.0, 1.0, 4, 1.0).unwrap();
        let sarah = step_cap(Estimator::Sarah, 1.0, 1.0, 4, 1.0).unwrap();
        assert!((svrg - 1.0 / (64.0 * 6f64.sqrt())).abs() < 1e-15);
        assert!((svrg - 0.0063789).abs() < 1e-7);
        assert!((sarah - 0.0110485).abs() < 1e-7);
        let half = step_cap(Estimator::Svrg, 1.0, 1.0, 8, 1.0).unwrap();
        assert!((half - svrg / 2.0).abs() < 1e-18);
    }

    #[test]
    fn kl_bound_limits_and_linearity() {
        let mut p = inputs();
        p.k = u64::MAX;
        let inf = kl_bound(Estimator::Svrg, &p).unwrap();
        assert_eq!(inf.decay, 0.0);
        assert_eq!(inf.total, inf.bias);
        let expected = 32.0 * 1e-4 / 3.0 * 4.2;
        assert!((inf.bias - expected).abs() < 1e-15);
        p.eta *= 2.0;
        let doubled = kl_bound(Estimator::Svrg, &p).unwrap();
        assert!((doubled.bias - 2.0 * inf.bias).abs() < 1e-15);
    }

    #[test]
    fn coarse_constant_dominates_tight() {
        let p = inputs();
        let tight = bias_term(Estimator::Svrg, &p).unwrap();
        let coarse = svrg_bias_coarse(p.eta, p.gamma, p.alpha, p.d, p.l).unwrap();
        assert!((coarse / tight - 7.0 / 4.2).abs() < 1e-12);
    }

    #[test]
    fn kl_hypotheses_are_named() {
        let mut p = inputs();
        p.b = 2;
        p.eta = 1.0;
        p.gamma = 0.5;
        let v = kl_hypotheses(Estimator::Svrg, &p);
        let names: Vec<_> = v.iter().map(|v| v.requirement).collect();
        assert!(names.contains(&"B >= m"));
        assert!(names.contains(&"gamma >= 1"));
        assert!(names.iter().any(|n| n.starts_with("eta <")));
        assert!(kl_hypotheses(Estimator::Sarah, &p).iter().all(|v| v.requirement != "B >= m"));
        assert!(matches!(kl_bound(Estimator::Svrg, &p), Err(TheoryError::Hypothesis(_))));
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(iterations_for_eps(2.0, 1.0, 1.0, 1.0, 0.001).unwrap(), 0);
        assert_eq!(iterations_for_eps(0.1, 1.0, 1.0, 1.0, 0.001).unwrap(), 2996);
        let a = iterations_for_eps(0.1, 1.0, 1.0, 1.0, 0.001).unwrap() as f64;
        let b = iterations_for_eps(0.05, 1.0, 1.0, 1.0, 0.001).unwrap() as f64;
        assert!((b / a - 40f64.ln() / 20f64.ln()).abs() < 1e-3);
        assert!(iterations_for_eps(0.0, 1.0, 1.0, 1.0, 0.001).is_err());
    }

    #[test]
    fn eta_for_eps_meets_half_eps() {
        let eps = 0.2;
        let e = eta_for_eps(Estimator::Svrg, eps, 2.0, 1.5, 3, 1.2, 16, 4, 4).unwrap();
        let coarse = svrg_bias_coarse(e, 2.0, 1.5, 3, 1.2).unwrap();
        assert!((coarse - eps / 2.0).abs() < 1e-14);
        let e = eta_for_eps(Estimator::Sarah, eps, 2.0, 1.5, 3, 1.2, 16, 4, 4).unwrap();
        let p = KlInputs {
            eta: e,
            gamma: 2.0,
            alpha: 1.5,
            d: 3,
            l: 1.2,
            ..inputs()
        };
        assert!((bias_term(Estimator::Sarah, &p).unwrap() - eps / 2.0).abs() < 1e-14);
    }

    #[test]
    fn plan_uses_root_n() {
        let plan = plan_for_kl(Estimator::Svrg, 0.1, 1.0, 1.0, 1.0, 1, 1.0, 16).unwrap();
        assert_eq!((plan.batch, plan.epoch_len), (4, 4));
        assert_eq!(plan.steps % 4, 0);
        assert!(plan.eta < plan.eta_cap);
        assert_eq!(plan.eta, plan.eta_eps.min(plan.eta_cap * (1.0 - 1e-9)));
    }

    #[test]
    fn complexity_counts() {
        assert_eq!(gradient_complexity(8, 4, 4, 16).unwrap(), 80);
        assert_eq!(gradient_complexity(10, 7, 1, 7).unwrap(), 70);
        assert!(gradient_complexity(9, 4, 4, 16).is_err());
    }

    #[test]
    fn talagrand_values() {
        assert_eq!(talagrand_w2(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(talagrand_w2(1.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn m_xi_at_most_one_when_batch_covers_epoch() {
        for n in 1..=32 {
            for b in 1..=n {
                for m in 1..=b {
                    assert!(m as f64 * xi(n, b).unwrap() <= 1.0 + 1e-15, "n={n} b={b} m={m}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn sarah_cap_is_root3_svrg_cap(alpha in 1e-3f64..10.0, l in 1e-2f64..10.0, m in 1usize..64, gamma in 1.0f64..100.0) {
            let r = step_cap(Estimator::Sarah, alpha, l, m, gamma).unwrap()
                / step_cap(Estimator::Svrg, alpha, l, m, gamma).unwrap();
            prop_assert!((r - 3f64.sqrt()).abs() < 1e-14);
        }

        #[test]
        fn kl_bound_monotone(k in 0u64..100_000, dk in 1u64..1000, frac in 0.01f64..0.98, d in 1usize..10,
                             est in prop_oneof![Just(Estimator::Svrg), Just(Estimator::Sarah)]) {
            let base = inputs();
            let cap = step_cap(est, base.alpha, base.l, base.m, base.gamma).unwrap();
            let p = KlInputs { k, d, eta: cap * frac, ..base };
            let b0 = kl_bound(est, &p).unwrap();
            prop_assert!(b0.total.is_finite() && b0.total >= 0.0);
            let later = kl_bound(est, &KlInputs { k: k + dk, ..p }).unwrap();
            prop_assert!(later.total <= b0.total);
            let bigger_eta = kl_bound(est, &KlInputs { eta: cap * (frac + 0.01), ..p }).unwrap();
            prop_assert!(bigger_eta.bias >= b0.bias);
            let bigger_d = kl_bound(est, &KlInputs { d: d + 1, ..p }).unwrap();
            prop_assert!(bigger_d.total >= b0.total);
        }
    }
}
