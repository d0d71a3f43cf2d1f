use super::{nonnegative, positive, TheoryError};
use crate::samplers::AnnealSchedule;

/// `max(3, (8Lg²/(C₁²η̄))^(μ/(μ-3)), (2/(μC₂L²η̄²))^(μ/(μ-2)))`: the smallest schedule
/// offset for which the per-epoch temperature increments stay below the contraction.
pub fn anneal_sigma_floor(l: f64, g: f64, eta_bar: f64, mu: f64, c1: f64, c2: f64) -> Result<f64, TheoryError> {
    positive("L", l)?;
    positive("eta_bar", eta_bar)?;
    positive("C1", c1)?;
    positive("C2", c2)?;
    if !(mu > 3.0) {
        return Err(TheoryError::hypothesis("mu > 3", format!("mu = {mu}")));
    }
    if !(g >= std::f64::consts::E) {
        return Err(TheoryError::hypothesis("g >= e", format!("g = {g}")));
    }
    let second = (mu / (mu - 3.0) * (8.0 * l * g * g / (c1 * c1 * eta_bar)).ln()).exp();
    let third = (mu / (mu - 2.0) * (2.0 / (mu * c2 * l * l * eta_bar * eta_bar)).ln()).exp();
    Ok(3f64.max(second).max(third))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleViolation {
    pub epoch: usize,
    pub condition: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealReport {
    pub epochs_checked: usize,
    pub first_violation: Option<ScheduleViolation>,
    /// Largest `η_s² L²` seen.
    pub max_eta_sq_l_sq: f64,
    /// Largest ratio `Δγ_s / (η_s² L²)` seen.
    pub max_increment_ratio: f64,
    /// Whether `γ̄ = 1/C₂`, the scale under which the floor was derived.
    pub gamma_bar_matches: bool,
}

impl AnnealReport {
    pub fn ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks, for `s = 0..=epochs`, with `α_s = γ_s C₁ exp(-C₂γ_s)` and
/// `Δγ_s = γ_s - γ_{s-1}` (the schedule formula extended to `s = -1`):
///
/// - `Δγ_s · 2L/α_{s-1} <= α_s η_s / (2γ_s)`
/// - `Δγ_s <= η_s² L²`
/// - `η_s² L² <= 1/4`
pub fn anneal_validate(
    sched: &AnnealSchedule,
    l: f64,
    c1: f64,
    c2: f64,
    epochs: usize,
) -> Result<AnnealReport, TheoryError> {
    positive("L", l)?;
    positive("C1", c1)?;
    positive("C2", c2)?;
    if let Some(v) = sched.violations().into_iter().next() {
        return Err(TheoryError::InvalidInput(v));
    }
    let gamma_at = |t: f64| sched.gamma_bar * (sched.g.ln() + (t + sched.sigma).ln() / sched.mu);
    let ln_alpha = |gamma: f64| gamma.ln() + c1.ln() - c2 * gamma;
    let mut report = AnnealReport {
        epochs_checked: epochs + 1,
        first_violation: None,
        max_eta_sq_l_sq: 0.0,
        max_increment_ratio: 0.0,
        gamma_bar_matches: (sched.gamma_bar * c2 - 1.0).abs() < 1e-12,
    };
    for s in 0..=epochs {
        let t = s as f64;
        let eta = sched.eta(s);
        let gamma = gamma_at(t);
        let prev_gamma = gamma_at(t - 1.0);
        let dgamma = sched.gamma_bar / sched.mu * (1.0 / (t - 1.0 + sched.sigma)).ln_1p();
        let el = eta * eta * l * l;
        report.max_eta_sq_l_sq = report.max_eta_sq_l_sq.max(el);
        report.max_increment_ratio = report.max_increment_ratio.max(dgamma / el);

        let ln_lhs = dgamma.ln() + (2.0 * l).ln() - ln_alpha(prev_gamma);
        let ln_rhs = ln_alpha(gamma) + eta.ln() - (2.0 * gamma).ln();
        let checks = [
            ("dgamma 2L / alpha_prev <= alpha eta / (2 gamma)", ln_lhs, ln_rhs),
            ("dgamma <= eta^2 L^2", dgamma, el),
            ("eta^2 L^2 <= 1/4", el, 0.25),
        ];
        if report.first_violation.is_none() {
            if let Some((condition, lhs, rhs)) = checks.into_iter().find(|c| c.1 > c.2) {
                let (lhs, rhs) = if condition.starts_with("dgamma 2L") {
                    (lhs.exp(), rhs.exp())
                } else {
                    (lhs, rhs)
                };
                report.first_violation = Some(ScheduleViolation {
                    epoch: s,
                    condition,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}

/// `χ = max_{γ >= 1} (d/γ) ln((eL/M)(bγ/d + 1))`, maximized numerically over
/// `γ ∈ [1, 10¹²]`. Returns `(χ, argmax)`.
pub fn chi(d: usize, l: f64, m: f64, b: f64) -> Result<(f64, f64), TheoryError> {
    positive("L", l)?;
    positive("M", m)?;
    nonnegative("b", b)?;
    if d == 0 {
        return Err(TheoryError::InvalidInput("d must be >= 1".into()));
    }
    let df = d as f64;
    let h = |u: f64| {
        let gamma = u.exp();
        df / gamma * (std::f64::consts::E * l / m * (b * gamma / df + 1.0)).ln()
    };
    let hi = 1e12f64.ln();
    let grid = 4000;
    let step = hi / grid as f64;
    let best = (0..=grid)
        .map(|i| i as f64 * step)
        .fold(0.0, |acc, u| if h(u) > h(acc) { u } else { acc });
    let (mut a, mut c) = ((best - step).max(0.0), (best + step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = c - inv_phi * (c - a);
        let x2 = a + inv_phi * (c - a);
        if h(x1) >= h(x2) {
            c = x2;
        } else {
            a = x1;
        }
    }
    let u = 0.5 * (a + c);
    let (u, v) = if h(u) >= h(best) { (u, h(u)) } else { (best, h(best)) };
    Ok((v, u.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(sigma: f64) -> AnnealSchedule {
        AnnealSchedule {
            eta_bar: 0.01,
            gamma_bar: 1.0,
            sigma,
            mu: 13.0,
            g: std::f64::consts::E,
        }
    }

    #[test]
    fn floor_hand_values() {
        let e = std::f64::consts::E;
        let f = anneal_sigma_floor(1.0, e, 0.01, 13.0, 1.0, 1.0).unwrap();
        let second = (8.0 * e * e / 0.01f64).powf(13.0 / 10.0);
        let third = (2.0 / (13.0 * 1e-4f64)).powf(13.0 / 11.0);
        assert!((f - second).abs() <= 1e-12 * second);
        assert!(second > third);
        assert!((f / 8.0e4 - 1.0).abs() < 0.05);
        assert!((third / 5.9e3 - 1.0).abs() < 0.05);
        assert_eq!(anneal_sigma_floor(1e-3, e, 10.0, 100.0, 10.0, 1e3).unwrap(), 3.0);
        assert!(anneal_sigma_floor(1.0, 2.0, 0.01, 13.0, 1.0, 1.0).is_err());
        assert!(anneal_sigma_floor(1.0, e, 0.01, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn floor_schedule_validates() {
        let e = std::f64::consts::E;
        let sigma = anneal_sigma_floor(1.0, e, 0.01, 13.0, 1.0, 1.0).unwrap();
        let r = anneal_validate(&sched(sigma), 1.0, 1.0, 1.0, 100).unwrap();
        assert!(r.ok(), "{r:?}");
        assert!(r.gamma_bar_matches);
        assert!(r.max_increment_ratio <= 1.0);
    }

    #[test]
    fn small_offset_is_flagged() {
        let r = anneal_validate(&sched(3.0), 1.0, 1.0, 1.0, 100).unwrap();
        let v = r.first_violation.unwrap();
        assert_eq!(v.epoch, 0);
        assert!(v.lhs > v.rhs);
    }

    #[test]
    fn chi_decreasing_case_peaks_at_one() {
        // With L >= M the objective is decreasing in gamma.
        let (v, at) = chi(2, 2.0, 1.0, 0.5).unwrap();
        let direct = 2.0 * (std::f64::consts::E * 2.0 * (0.25 + 1.0)).ln();
        assert!((at - 1.0).abs() < 1e-9);
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn chi_interior_maximum() {
        // L << M makes the log negative near gamma = 1, pushing the maximizer inward.
        let (v, at) = chi(1, 0.01, 1.0, 1.0).unwrap();
        assert!(at > 1.0);
        let h = |g: f64| 1.0 / g * (std::f64::consts::E * 0.01 * (g + 1.0)).ln();
        assert!(v >= h(at * 1.01) && v >= h(at * 0.99));
        assert!(v > 0.0);
    }
}
