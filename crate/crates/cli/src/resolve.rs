//! Turns a parsed config into a runnable experiment: builds the potential, merges
//! declared and analytic constants, fills in theory-chosen parameters and checks
//! every hypothesis the bound overlays depend on.

use vrld::diagnostics::{kl_gaussian_to_gibbs_1d, kl_gaussians, InitialLaw};
use vrld::potentials::make_builtin;
use vrld::samplers::AnnealSchedule;
use vrld::theory::{
    gamma_for_optimization, iterations_for_eps, kl_hypotheses, kl_target_for_optimization, lsi_dissipative,
    lsi_weak_morse, optimization_step_size, plan_for_kl, step_cap, KlInputs,
};
use vrld::{Estimator, FiniteSumObjective, GaussianMoments, SamplerConfig, TheoryError, Variant};

use crate::config::{AutoSection, ExperimentConfig, InitSpec, LsiMode, Target};
use crate::CliError;

/// Constants available to the bound overlays after merging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Constants {
    pub l: Option<f64>,
    pub m: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub h0: Option<f64>,
}

#[derive(Debug)]
pub struct Resolved {
    /// The config with every theory-chosen value written out and `[auto]` removed;
    /// running it reproduces this experiment.
    pub explicit: ExperimentConfig,
    /// How auto mode chose the parameters, if it did.
    pub auto_note: Option<String>,
    pub objective: FiniteSumObjective,
    pub sampler: SamplerConfig,
    pub anneal: Option<AnnealSchedule>,
    pub constants: Constants,
    pub init: InitialLaw,
    pub checkpoints: Vec<usize>,
    pub replicates: u64,
    pub workers: usize,
    pub warnings: Vec<String>,
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// The inverse temperature in force after `step` steps.
    pub fn gamma_at(&self, step: usize) -> f64 {
        match &self.anneal {
            Some(s) => s.gamma(step.saturating_sub(1) / self.sampler.epoch_len),
            None => self.sampler.gamma,
        }
    }

    /// Epoch index of the step that produced the state after `step` steps.
    pub fn epoch_of(&self, step: usize) -> usize {
        step.saturating_sub(1) / self.sampler.epoch_len
    }
}

fn theory_err(e: TheoryError) -> String {
    e.to_string()
}

/// `KL(init ‖ ν_γ)` when it can be computed: Gaussian start against a Gaussian Gibbs
/// law in closed form, or in one dimension by quadrature.
pub fn initial_kl(obj: &FiniteSumObjective, init: &InitialLaw, gamma: f64) -> Option<f64> {
    let InitialLaw::Gaussian(g) = init else {
        return None;
    };
    if let Some(gibbs) = obj.gibbs_gaussian(gamma) {
        return kl_gaussians(g, &gibbs).ok();
    }
    if obj.dim() == 1 {
        let (mean, var) = (g.mean[0], g.covariance[(0, 0)]);
        let reach = 12.0 * var.sqrt() + 10.0;
        return kl_gaussian_to_gibbs_1d(mean, var, obj, gamma, mean - reach, mean + reach, 200_001).ok();
    }
    None
}

fn sqrt_n(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

struct Picked {
    eta: Option<f64>,
    gamma: Option<f64>,
    batch: Option<usize>,
    epoch_len: Option<usize>,
    steps: Option<usize>,
    alpha: Option<f64>,
    h0: Option<f64>,
    note: Option<String>,
}

/// `α` at `gamma` under the chosen Log-Sobolev mode.
fn alpha_for(
    mode: LsiMode,
    cfg: &ExperimentConfig,
    gamma: f64,
    d: usize,
    l: Option<f64>,
    m: Option<f64>,
    b: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<f64, String> {
    let t = &cfg.theory;
    let need = |name: &str, v: Option<f64>| v.ok_or_else(|| format!("lsi = {mode:?} needs {name}"));
    match mode {
        LsiMode::Declared => t.alpha.ok_or_else(|| "lsi = declared needs theory.alpha".to_string()),
        LsiMode::Dissipative => {
            if t.c_star.is_none() {
                warnings.push("c_star is an unknown universal constant; defaulting to 1".into());
            }
            let lsi = lsi_dissipative(
                gamma,
                need("L", l)?,
                need("M", m)?,
                need("b", b)?,
                d,
                need("a_star", t.a_star)?,
                need("b_star", t.b_star)?,
                t.c_star_or_default(),
            )
            .map_err(|e| format!("refusing to run: {}", theory_err(e)))?;
            if lsi.alpha == 0.0 {
                return Err(format!(
                    "dissipative LSI constant underflows (ln alpha = {}); no usable step size",
                    lsi.ln_alpha
                ));
            }
            Ok(lsi.alpha)
        }
        LsiMode::WeakMorse => lsi_weak_morse(
            gamma,
            need("lambda_dagger", t.lambda_dagger)?,
            need("M", m)?,
            need("L", l)?,
            d,
            need("l_prime", t.l_prime)?,
            need("c_f", t.c_f)?,
        )
        .map(|w| w.alpha)
        .map_err(|e| format!("refusing to run: {}", theory_err(e))),
    }
}

#[allow(clippy::too_many_arguments)]
fn pick_auto(
    auto: &AutoSection,
    cfg: &ExperimentConfig,
    obj: &FiniteSumObjective,
    init: &InitialLaw,
    l: Option<f64>,
    m: Option<f64>,
    b: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<Picked, Vec<String>> {
    let s = &cfg.sampler;
    let mut errors = Vec::new();
    let Some(est) = s.variant.estimator() else {
        return Err(vec![format!("auto mode needs svrg_ld or sarah_ld (got {})", s.variant)]);
    };
    for (name, set) in [
        ("eta", s.eta.is_some()),
        ("batch", s.batch.is_some()),
        ("epoch_len", s.epoch_len.is_some()),
        ("steps", s.steps.is_some()),
    ] {
        if set {
            errors.push(format!("sampler.{name} is chosen by auto mode and must be left out"));
        }
    }
    if cfg.anneal.is_some() {
        errors.push("auto mode does not support [anneal]".into());
    }
    if !(auto.eps > 0.0 && auto.eps.is_finite()) {
        errors.push(format!("auto.eps must be positive (got {})", auto.eps));
    }
    let Some(l) = l else {
        errors.push("auto mode needs a non-estimated L (declare theory.L)".into());
        return Err(errors);
    };
    let (d, n) = (obj.dim(), obj.n());
    let gamma = match auto.target {
        Target::Kl => match s.gamma {
            Some(g) => g,
            None => {
                errors.push("auto target kl needs sampler.gamma".into());
                return Err(errors);
            }
        },
        Target::Optimization => {
            if s.gamma.is_some() {
                errors.push("sampler.gamma is chosen by auto target optimization and must be left out".into());
            }
            let (Some(mv), Some(bv)) = (m, b) else {
                errors.push("auto target optimization needs M and b".into());
                return Err(errors);
            };
            match gamma_for_optimization(auto.eps, d, l, mv, bv) {
                Ok(g) => g,
                Err(e) => {
                    errors.push(theory_err(e));
                    return Err(errors);
                }
            }
        }
    };
    let alpha = match alpha_for(auto.lsi, cfg, gamma, d, Some(l), m, b, warnings) {
        Ok(a) => a,
        Err(e) => {
            errors.push(e);
            return Err(errors);
        }
    };
    let h0 = cfg.experiment.h0.or_else(|| initial_kl(obj, init, gamma));
    let Some(h0) = h0 else {
        errors.push("auto mode needs experiment.h0 (KL of the initial law is not computable here)".into());
        return Err(errors);
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    match auto.target {
        Target::Kl => {
            let plan = plan_for_kl(est, auto.eps, h0, alpha, gamma, d, l, n).map_err(|e| vec![theory_err(e)])?;
            Ok(Picked {
                eta: Some(plan.eta),
                gamma: Some(gamma),
                batch: Some(plan.batch),
                epoch_len: Some(plan.epoch_len),
                steps: Some(plan.steps.max(plan.epoch_len as u64) as usize),
                alpha: Some(alpha),
                h0: Some(h0),
                note: Some(format!(
                    "auto: target=kl eps={} lsi={:?} alpha={alpha} B=m={} eta=min(eta_eps={}, cap={})",
                    auto.eps, auto.lsi, plan.batch, plan.eta_eps, plan.eta_cap
                )),
            })
        }
        Target::Optimization => {
            let bm = sqrt_n(n);
            let run = || -> Result<(f64, f64, f64, usize), TheoryError> {
                let cap = step_cap(est, alpha, l, bm, gamma)?;
                let eta = optimization_step_size(alpha, l, n, gamma, d, auto.eps)?.min(cap * (1.0 - 1e-9));
                let target = kl_target_for_optimization(alpha, auto.eps, l)?;
                let k = iterations_for_eps(target, h0, gamma, alpha, eta)? as usize;
                Ok((eta, cap, target, k.div_ceil(bm).max(1) * bm))
            };
            let (eta, cap, target, steps) = run().map_err(|e| vec![theory_err(e)])?;
            Ok(Picked {
                eta: Some(eta),
                gamma: Some(gamma),
                batch: Some(bm),
                epoch_len: Some(bm),
                steps: Some(steps),
                alpha: Some(alpha),
                h0: Some(h0),
                note: Some(format!(
                    "auto: target=optimization eps={} lsi={:?} gamma={gamma} alpha={alpha} kl_target={target} B=m={bm} cap={cap}",
                    auto.eps, auto.lsi
                )),
            })
        }
    }
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved, CliError> {
    let mut errors = cfg.theory.violations();
    let mut warnings = Vec::new();
    let mut hypotheses: Vec<String> = Vec::new();
    let obj = match make_builtin(&cfg.potential) {
        Ok(o) => o,
        Err(e) => {
            errors.push(format!("potential: {e}"));
            return Err(CliError::Config(errors));
        }
    };
    let (d, n) = (obj.dim(), obj.n());
    if cfg.theory.d.is_some_and(|v| v != d) {
        errors.push(format!("theory.d = {:?} differs from the potential's dimension {d}", cfg.theory.d));
    }
    if cfg.theory.n.is_some_and(|v| v != n) {
        errors.push(format!("theory.n = {:?} differs from the potential's {n} components", cfg.theory.n));
    }
    let l = cfg.theory.l.or_else(|| obj.smoothness().and_then(|c| c.for_theory()));
    if l.is_none() {
        if let Some(c) = obj.smoothness() {
            warnings.push(format!(
                "L = {} is a grid estimate and is not used for bounds; declare theory.L",
                c.value
            ));
        }
    }
    let diss = obj.dissipativity();
    let m_diss = cfg.theory.m.or_else(|| diss.and_then(|x| x.m.for_theory()));
    let b_diss = cfg.theory.b.or_else(|| diss.and_then(|x| x.b.for_theory()));
    if let Some(lv) = l {
        if lv < 1.0 {
            warnings.push(format!(
                "L = {lv} < 1: several constants are derived assuming L >= 1 and may not be conservative"
            ));
        }
    }

    let init = match &cfg.experiment.init {
        None => InitialLaw::Point(vec![0.0; d]),
        Some(InitSpec::Point(p)) => InitialLaw::Point(p.clone()),
        Some(InitSpec::Gaussian { mean, var }) => {
            if !(*var > 0.0 && var.is_finite()) {
                errors.push(format!("experiment.init variance must be positive (got {var})"));
            }
            InitialLaw::Gaussian(GaussianMoments::isotropic(mean.clone(), var.abs().max(f64::MIN_POSITIVE)))
        }
    };
    let init_dim = match &init {
        InitialLaw::Point(p) => p.len(),
        InitialLaw::Gaussian(g) => g.dim(),
    };
    if init_dim != d {
        errors.push(format!("experiment.init has dimension {init_dim}, potential has {d}"));
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let s = &cfg.sampler;
    let picked = match &cfg.auto {
        Some(auto) => match pick_auto(auto, cfg, &obj, &init, l, m_diss, b_diss, &mut warnings) {
            Ok(p) => p,
            Err(e) => {
                errors.extend(e);
                return Err(CliError::Config(errors));
            }
        },
        None => Picked {
            eta: s.eta,
            gamma: s.gamma,
            batch: s.batch,
            epoch_len: s.epoch_len,
            steps: s.steps,
            alpha: cfg.theory.alpha,
            h0: None,
            note: None,
        },
    };

    let anneal = cfg.anneal;
    if let Some(sched) = &anneal {
        errors.extend(sched.violations().into_iter().map(|v| format!("anneal: {v}")));
        if !s.variant.is_variance_reduced() {
            errors.push(format!("[anneal] needs svrg_ld or sarah_ld (got {})", s.variant));
        }
        if s.eta.is_some() || s.gamma.is_some() {
            errors.push("sampler.eta and sampler.gamma are set by [anneal] and must be left out".into());
        }
    }
    let (eta, gamma) = match &anneal {
        Some(sched) => (sched.eta(0), sched.gamma(0).max(1.0)),
        None => (
            picked.eta.unwrap_or_else(|| {
                errors.push("sampler.eta is required".into());
                f64::NAN
            }),
            picked.gamma.unwrap_or_else(|| {
                errors.push("sampler.gamma is required".into());
                f64::NAN
            }),
        ),
    };
    let steps = picked.steps.unwrap_or_else(|| {
        errors.push("sampler.steps is required".into());
        0
    });
    let vr = s.variant.is_variance_reduced();
    let batch = match (picked.batch, s.variant) {
        (Some(b), _) => b,
        (None, Variant::Lmc) => n,
        (None, _) => {
            errors.push(format!("sampler.batch is required for {}", s.variant));
            0
        }
    };
    let epoch_len = match picked.epoch_len {
        Some(m) => m,
        None if vr => {
            errors.push(format!("sampler.epoch_len is required for {}", s.variant));
            0
        }
        None => 1,
    };
    if cfg.experiment.seed > i64::MAX as u64 {
        errors.push(format!("experiment.seed must be at most {}", i64::MAX));
    }
    let sampler = SamplerConfig {
        variant: s.variant,
        eta,
        gamma,
        batch,
        epoch_len,
        steps,
        seed: cfg.experiment.seed,
        burn_in: s.burn_in,
        thin: s.thin,
    };
    if steps > 0 && (anneal.is_none() || eta.is_finite()) {
        errors.extend(sampler.violations(n));
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    if let Some(est) = s.variant.estimator() {
        if anneal.is_none() {
            match (picked.alpha, l) {
                (Some(alpha), Some(lv)) => {
                    let p = KlInputs {
                        h0: 0.0,
                        k: 0,
                        eta,
                        gamma,
                        alpha,
                        d,
                        l: lv,
                        n,
                        b: batch,
                        m: epoch_len,
                    };
                    hypotheses.extend(
                        kl_hypotheses(est, &p)
                            .into_iter()
                            .map(|v| format!("hypothesis `{}` violated: {}", v.requirement, v.detail)),
                    );
                }
                _ => {
                    if est == Estimator::Svrg && batch < epoch_len {
                        hypotheses.push(format!("hypothesis `B >= m` violated: B = {batch}, m = {epoch_len}"));
                    }
                }
            }
        }
    }
    let needs_m_floor = cfg
        .auto
        .is_some_and(|a| a.target == Target::Optimization || a.lsi == LsiMode::Dissipative);
    if let (true, Some(mv)) = (needs_m_floor, m_diss) {
        if gamma < 2.0 / mv {
            hypotheses.push(format!("hypothesis `gamma >= 2/M` violated: gamma = {gamma}, 2/M = {}", 2.0 / mv));
        }
    }
    if !hypotheses.is_empty() {
        if cfg.experiment.allow_hypothesis_violations {
            warnings.extend(hypotheses.into_iter().map(|h| format!("{h} (bounds are not guaranteed)")));
        } else {
            errors.extend(hypotheses);
        }
    }

    if cfg.experiment.replicates == 0 {
        errors.push("experiment.replicates must be >= 1".into());
    }
    let checkpoints = match &cfg.experiment.checkpoints {
        Some(c) => {
            if c.windows(2).any(|w| w[0] >= w[1]) {
                errors.push("experiment.checkpoints must be strictly ascending".into());
            }
            if c.last().is_some_and(|&k| k > steps) {
                errors.push(format!("experiment.checkpoints must not exceed the step count {steps}"));
            }
            if c.is_empty() {
                errors.push("experiment.checkpoints must not be empty".into());
            }
            c.clone()
        }
        None => {
            let mut c: Vec<usize> = (0..=steps).step_by(s.thin.max(1)).collect();
            if c.last() != Some(&steps) {
                c.push(steps);
            }
            c
        }
    };
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let h0 = picked
        .h0
        .or(cfg.experiment.h0)
        .or_else(|| anneal.is_none().then(|| initial_kl(&obj, &init, gamma)).flatten());
    let mut explicit = cfg.clone();
    explicit.auto = None;
    if anneal.is_none() {
        explicit.sampler.eta = Some(eta);
        explicit.sampler.gamma = Some(gamma);
    }
    explicit.sampler.batch = Some(batch);
    explicit.sampler.epoch_len = Some(epoch_len);
    explicit.sampler.steps = Some(steps);
    if cfg.auto.is_some() {
        explicit.theory.alpha = picked.alpha;
        explicit.experiment.h0 = h0;
    }
    explicit.experiment.workers = 0;
    Ok(Resolved {
        explicit,
        auto_note: picked.note,
        objective: obj,
        sampler,
        anneal,
        constants: Constants {
            l,
            m: m_diss,
            b: b_diss,
            alpha: picked.alpha,
            h0,
        },
        init,
        checkpoints,
        replicates: cfg.experiment.replicates,
        workers: cfg.experiment.workers,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> String {
        r#"
[potential]
name = "generated_quadratic"
n = 16
dim = 2
spread = 1.0
seed = 3
scale_range = [0.75, 1.25]

[sampler]
variant = "svrg_ld"
eta = 0.004
gamma = 2.0
batch = 4
epoch_len = 4
steps = 400

[theory]
alpha = 2.0

[experiment]
replicates = 2
init = { gaussian = { mean = [1.0, 1.0], var = 1.0 } }
"#
        .to_string()
    }

    fn errors(text: &str) -> Vec<String> {
        match resolve(&ExperimentConfig::parse(text).unwrap()) {
            Err(CliError::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn manual_config_resolves_with_bounds() {
        let r = resolve(&ExperimentConfig::parse(&base()).unwrap()).unwrap();
        assert_eq!(r.sampler.batch, 4);
        assert_eq!(r.constants.l, Some(1.25));
        assert_eq!(r.constants.alpha, Some(2.0));
        assert!(r.constants.h0.unwrap() > 0.0);
        assert_eq!(r.checkpoints.len(), 401);
        assert!(r.auto_note.is_none());
    }

    #[test]
    fn auto_picks_sqrt_n() {
        let text = base()
            .replace("eta = 0.004\n", "")
            .replace("batch = 4\n", "")
            .replace("epoch_len = 4\n", "")
            .replace("steps = 400\n", "")
            + "\n[auto]\ntarget = \"kl\"\neps = 0.5\n";
        let r = resolve(&ExperimentConfig::parse(&text).unwrap()).unwrap();
        assert_eq!((r.sampler.batch, r.sampler.epoch_len), (4, 4));
        assert_eq!(r.sampler.steps % 4, 0);
        assert!(r.explicit.auto.is_none());
        assert_eq!(r.explicit.sampler.eta, Some(r.sampler.eta));
        let again = resolve(&r.explicit).unwrap();
        assert_eq!(again.sampler, r.sampler);
    }

    #[test]
    fn svrg_batch_below_epoch_is_rejected() {
        let text = base().replace("batch = 4", "batch = 2");
        let e = errors(&text);
        assert!(e.iter().any(|m| m.contains("B >= m")), "{e:?}");
        let text = base().replace("theory]\nalpha = 2.0", "theory]").replace("batch = 4", "batch = 2");
        assert!(errors(&text).iter().any(|m| m.contains("B >= m")));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = base()
            .replace("batch = 4", "batch = 2")
            .replace("eta = 0.004", "eta = 0.5")
            .replace("gamma = 2.0", "gamma = 0.5")
            .replace("steps = 400", "steps = 402");
        let e = errors(&text);
        assert!(e.iter().any(|m| m.contains("gamma must be >= 1")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("must divide")), "{e:?}");
        let text = base().replace("batch = 4", "batch = 2").replace("eta = 0.004", "eta = 0.5");
        let e = errors(&text);
        assert!(e.iter().any(|m| m.contains("B >= m")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("16 sqrt(6)")), "{e:?}");
    }

    #[test]
    fn violations_can_be_downgraded() {
        let text = base().replace("eta = 0.004", "eta = 0.5").replace("replicates = 2", "replicates = 2\nallow_hypothesis_violations = true");
        let r = resolve(&ExperimentConfig::parse(&text).unwrap()).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("16 sqrt(6)")));
    }

    #[test]
    fn dissipative_floor_refuses() {
        let text = r#"
[potential]
name = "double_well"
[sampler]
variant = "sarah_ld"
gamma = 1.5
[auto]
target = "kl"
eps = 0.1
lsi = "dissipative"
[theory]
L = 2.0
a_star = 1.0
b_star = 1.0
[experiment]
h0 = 1.0
"#;
        let e = errors(text);
        assert!(e.iter().any(|m| m.contains("refusing") && m.contains("2/M")), "{e:?}");
    }

    #[test]
    fn optimization_target_chooses_gamma() {
        let text = r#"
[potential]
name = "double_well"
n = 4
[sampler]
variant = "sarah_ld"
[auto]
target = "optimization"
eps = 0.5
[theory]
L = 2.0
alpha = 1.0
[experiment]
init = { gaussian = { mean = [0.0], var = 1.0 } }
"#;
        let r = resolve(&ExperimentConfig::parse(text).unwrap()).unwrap();
        let dw = r.objective.dissipativity().unwrap();
        let want = gamma_for_optimization(0.5, 1, 2.0, dw.m.value, dw.b.value).unwrap();
        assert_eq!(r.sampler.gamma, want);
        assert_eq!((r.sampler.batch, r.sampler.epoch_len), (2, 2));
        assert!(r.constants.h0.unwrap() > 0.0);
    }
}
