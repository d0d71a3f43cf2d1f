//! The `theory` calculator: `NAME key=value ...` queries over the closed-form formulas.
//!
//! Keys are case-sensitive (`B` is the batch size, `b` the dissipativity offset, `M`
//! the dissipativity constant, `m` the epoch length). Greek letters are accepted for
//! the usual names, and the estimator may be given bare (`svrg`, `sarah`) or as
//! `est=...`.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use vrld::samplers::AnnealSchedule;
use vrld::theory::{
    anneal_sigma_floor, anneal_validate, bias_term, chi, eta_for_eps, gamma_for_optimization,
    gamma_for_optimization_strict, gibbs_suboptimality_bound, gradient_complexity, iterations_for_eps, kl_bound,
    kl_target_for_optimization, lsi_dissipative, lsi_weak_morse, optimization_step_size, plan_for_kl,
    poincare_constant, step_cap, suboptimality_decomposition, talagrand_w2, upsilon, xi, KlInputs, UPSILON_CAP,
};
use vrld::{Estimator, TheoryError};

use crate::report::fmt_f64;
use crate::CliError;

/// `(name, inputs, expression)` for every formula.
pub const FORMULAS: &[(&str, &str, &str)] = &[
    ("xi", "n B", "(n - B) / (B (n - 1))"),
    ("upsilon", "n B m", "(1 + 2 xi) + xi + 1 + 2 m xi"),
    ("step_cap", "est alpha L m gamma", "alpha / (16 sqrt(6|2) L^2 m gamma)"),
    ("bias", "est eta gamma alpha d L n B m", "(32 eta gamma d L^2 / (3 alpha)) * (upsilon | 2 + xi + 2 m xi)"),
    ("kl_bound", "est h0 k eta gamma alpha d L n B m", "exp(-alpha eta k / gamma) h0 + bias"),
    ("iterations", "eps h0 gamma alpha eta", "ceil((gamma / (alpha eta)) ln(2 h0 / eps))"),
    ("eta_for_eps", "est eps gamma alpha d L n B m", "3 alpha eps / (448 gamma d L^2) | 3 alpha eps / (64 gamma d L^2 (2 + xi + 2 m xi))"),
    ("plan", "est eps h0 alpha gamma d L n", "B = m = round(sqrt n), eta = min(eta_for_eps, cap)"),
    ("gradient_complexity", "k B m n", "(k / m)(n + 2 B (m - 1))"),
    ("talagrand", "h alpha", "sqrt(2 h / alpha)"),
    ("lsi_dissipative", "gamma L M b d a_star b_star [c_star]", "alpha = gamma C1 exp(-C2 gamma)"),
    ("lsi_weak_morse", "gamma lambda_dagger M L d l_prime c_f", "alpha = C3 / gamma"),
    ("poincare", "lambda_dagger", "lambda_dagger / 35"),
    ("gamma_opt", "eps d L M b", "max((4d/eps) ln(eL/M), 8 d b / eps^2, 1, 2/M)"),
    ("gamma_opt_strict", "eps d L M b", "max((4d/eps) ln(eL/M), 16 d b / eps^2, 1, 2/M)"),
    ("gibbs_bound", "gamma d L M b", "(d / (2 gamma)) ln((eL/M)(b gamma / d + 1))"),
    ("suboptimality", "w2 gamma d L M b", "L w2^2 + 2 gibbs_bound"),
    ("kl_target", "alpha eps L", "alpha eps / (4 L)"),
    ("opt_step", "alpha L n gamma d eps", "min(alpha / (16 sqrt(6) L^2 sqrt(n) gamma), 3 alpha^2 eps / (1792 L^2 d gamma))"),
    ("sigma_floor", "L g eta_bar mu c1 c2", "max(3, (8 L g^2 / (c1^2 eta_bar))^(mu/(mu-3)), (2 / (mu c2 L^2 eta_bar^2))^(mu/(mu-2)))"),
    ("chi", "d L M b", "max over gamma >= 1 of (d / gamma) ln((eL/M)(b gamma / d + 1))"),
    ("anneal_validate", "eta_bar gamma_bar sigma mu g L c1 c2 epochs", "per-epoch increment and step-size conditions"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Val {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Val {
    fn render(&self) -> String {
        match self {
            Val::Num(v) => fmt_f64(*v),
            Val::Int(v) => v.to_string(),
            Val::Bool(v) => v.to_string(),
            Val::Text(v) => v.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Val::Num(v) => json!(v),
            Val::Int(v) => json!(v),
            Val::Bool(v) => json!(v),
            Val::Text(v) => json!(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Answer {
    pub formula: &'static str,
    pub expr: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub values: Vec<(&'static str, Val)>,
    pub warnings: Vec<String>,
}

impl Answer {
    pub fn value(&self, key: &str) -> Option<&Val> {
        self.values.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// Flat `key=value` listing.
    pub fn listing(&self) -> String {
        let mut out = format!("formula={}\nexpr={}\n", self.formula, self.expr);
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={}\n", v.render()));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning={w}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let values: Map<String, Value> = self.values.iter().map(|(k, v)| (k.to_string(), v.to_json())).collect();
        json!({
            "formula": self.formula,
            "expr": self.expr,
            "inputs": self.inputs,
            "values": values,
            "warnings": self.warnings,
        })
    }
}

fn canonical_key(k: &str) -> &str {
    match k {
        "α" => "alpha",
        "γ" => "gamma",
        "η" => "eta",
        "ε" | "epsilon" => "eps",
        "λ†" | "λ" | "lambda" => "lambda_dagger",
        "L'" | "L′" => "l_prime",
        "σ" => "sigma",
        "μ" => "mu",
        "H0" | "H₀" => "h0",
        "H" => "h",
        "η̄" => "eta_bar",
        "γ̄" => "gamma_bar",
        "C1" | "C₁" => "c1",
        "C2" | "C₂" => "c2",
        "C_F" => "c_f",
        "A*" => "a_star",
        "B*" => "b_star",
        "C*" => "c_star",
        "W2" | "W₂" => "w2",
        "K" => "k",
        other => other,
    }
}

fn err(msg: impl Into<String>) -> CliError {
    CliError::Config(vec![msg.into()])
}

fn theory(e: TheoryError) -> CliError {
    err(e.to_string())
}

struct Args {
    map: BTreeMap<String, String>,
    est: Option<Estimator>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Args {
    fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.used.borrow_mut().push(key.to_string());
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| err(format!("missing input `{key}`")))
    }

    fn f(&self, key: &str) -> Result<f64, CliError> {
        let s = self.raw(key)?;
        s.parse()
            .map_err(|_| err(format!("input `{key}` must be a number (got `{s}`)")))
    }

    fn opt_f(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.map.contains_key(key) {
            self.f(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn u(&self, key: &str) -> Result<usize, CliError> {
        let s = self.raw(key)?;
        s.parse()
            .map_err(|_| err(format!("input `{key}` must be a nonnegative integer (got `{s}`)")))
    }

    fn est(&self) -> Result<Estimator, CliError> {
        self.est
            .ok_or_else(|| err("missing estimator (`svrg` or `sarah`)"))
    }

    fn kl(&self, with_k: bool) -> Result<KlInputs, CliError> {
        Ok(KlInputs {
            h0: if with_k { self.f("h0")? } else { 0.0 },
            k: if with_k { self.u("k")? as u64 } else { 0 },
            eta: self.f("eta")?,
            gamma: self.f("gamma")?,
            alpha: self.f("alpha")?,
            d: self.u("d")?,
            l: self.f("L")?,
            n: self.u("n")?,
            b: self.u("B")?,
            m: self.u("m")?,
        })
    }
}

fn parse_args<S: AsRef<str>>(tokens: &[S]) -> Result<Args, CliError> {
    let mut map = BTreeMap::new();
    let mut est = None;
    for t in tokens {
        let t = t.as_ref();
        let (key, value) = match t.split_once('=') {
            Some((k, v)) => (canonical_key(k.trim()), v.trim()),
            None => ("est", t),
        };
        if key == "est" {
            let e: Estimator = value.parse().map_err(err)?;
            if est.replace(e).is_some() {
                return Err(err("estimator given twice"));
            }
            continue;
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(err(format!("input `{key}` given twice")));
        }
    }
    Ok(Args {
        map,
        est,
        used: Default::default(),
    })
}

/// Evaluates one query, e.g. `["xi", "n=16", "B=4"]`.
pub fn evaluate<S: AsRef<str>>(tokens: &[S]) -> Result<Answer, CliError> {
    let Some((name, rest)) = tokens.split_first() else {
        return Err(err("empty query; try `theory list`"));
    };
    let name = name.as_ref();
    let Some(&(formula, _, expr)) = FORMULAS.iter().find(|f| f.0 == name) else {
        let names: Vec<_> = FORMULAS.iter().map(|f| f.0).collect();
        return Err(err(format!("unknown formula `{name}` (known: {})", names.join(", "))));
    };
    let a = parse_args(rest)?;
    let mut warnings = Vec::new();
    let num = |v: f64| Val::Num(v);
    let values: Vec<(&'static str, Val)> = match formula {
        "xi" => vec![("value", num(xi(a.u("n")?, a.u("B")?).map_err(theory)?))],
        "upsilon" => {
            let (n, b, m) = (a.u("n")?, a.u("B")?, a.u("m")?);
            let v = upsilon(n, b, m).map_err(theory)?;
            if b < m {
                warnings.push(format!("B = {b} < m = {m}: the cap {UPSILON_CAP} is only established for B >= m"));
            }
            vec![("value", num(v)), ("cap", num(UPSILON_CAP))]
        }
        "step_cap" => vec![(
            "value",
            num(step_cap(a.est()?, a.f("alpha")?, a.f("L")?, a.u("m")?, a.f("gamma")?).map_err(theory)?),
        )],
        "bias" => vec![("value", num(bias_term(a.est()?, &a.kl(false)?).map_err(theory)?))],
        "kl_bound" => {
            let b = kl_bound(a.est()?, &a.kl(true)?).map_err(theory)?;
            vec![("decay", num(b.decay)), ("bias", num(b.bias)), ("value", num(b.total))]
        }
        "iterations" => vec![(
            "value",
            Val::Int(
                iterations_for_eps(a.f("eps")?, a.f("h0")?, a.f("gamma")?, a.f("alpha")?, a.f("eta")?)
                    .map_err(theory)?,
            ),
        )],
        "eta_for_eps" => vec![(
            "value",
            num(eta_for_eps(
                a.est()?,
                a.f("eps")?,
                a.f("gamma")?,
                a.f("alpha")?,
                a.u("d")?,
                a.f("L")?,
                a.u("n")?,
                a.u("B")?,
                a.u("m")?,
            )
            .map_err(theory)?),
        )],
        "plan" => {
            let p = plan_for_kl(
                a.est()?,
                a.f("eps")?,
                a.f("h0")?,
                a.f("alpha")?,
                a.f("gamma")?,
                a.u("d")?,
                a.f("L")?,
                a.u("n")?,
            )
            .map_err(theory)?;
            vec![
                ("batch", Val::Int(p.batch as u64)),
                ("epoch_len", Val::Int(p.epoch_len as u64)),
                ("eta", num(p.eta)),
                ("eta_cap", num(p.eta_cap)),
                ("eta_eps", num(p.eta_eps)),
                ("steps", Val::Int(p.steps)),
                ("grad_evals", Val::Int(p.grad_evals)),
            ]
        }
        "gradient_complexity" => vec![(
            "value",
            Val::Int(gradient_complexity(a.u("k")? as u64, a.u("B")?, a.u("m")?, a.u("n")?).map_err(theory)?),
        )],
        "talagrand" => vec![("value", num(talagrand_w2(a.f("h")?, a.f("alpha")?).map_err(theory)?))],
        "lsi_dissipative" => {
            let c_star = a.opt_f("c_star")?;
            if c_star.is_none() {
                warnings.push("c_star is an unknown universal constant; defaulting to 1".into());
            }
            let r = lsi_dissipative(
                a.f("gamma")?,
                a.f("L")?,
                a.f("M")?,
                a.f("b")?,
                a.u("d")?,
                a.f("a_star")?,
                a.f("b_star")?,
                c_star.unwrap_or(1.0),
            )
            .map_err(theory)?;
            vec![
                ("alpha", num(r.alpha)),
                ("ln_alpha", num(r.ln_alpha)),
                ("c1", num(r.c1)),
                ("ln_c1", num(r.ln_c1)),
                ("c2", num(r.c2)),
            ]
        }
        "lsi_weak_morse" => {
            let r = lsi_weak_morse(
                a.f("gamma")?,
                a.f("lambda_dagger")?,
                a.f("M")?,
                a.f("L")?,
                a.u("d")?,
                a.f("l_prime")?,
                a.f("c_f")?,
            )
            .map_err(theory)?;
            vec![("alpha", num(r.alpha)), ("c3", num(r.c3)), ("gamma_floor", num(r.gamma_floor))]
        }
        "poincare" => vec![("value", num(poincare_constant(a.f("lambda_dagger")?).map_err(theory)?))],
        "gamma_opt" | "gamma_opt_strict" => {
            let f = if formula == "gamma_opt" {
                gamma_for_optimization
            } else {
                gamma_for_optimization_strict
            };
            vec![(
                "value",
                num(f(a.f("eps")?, a.u("d")?, a.f("L")?, a.f("M")?, a.f("b")?).map_err(theory)?),
            )]
        }
        "gibbs_bound" => vec![(
            "value",
            num(gibbs_suboptimality_bound(a.f("gamma")?, a.u("d")?, a.f("L")?, a.f("M")?, a.f("b")?)
                .map_err(theory)?),
        )],
        "suboptimality" => {
            let s = suboptimality_decomposition(a.f("w2")?, a.f("gamma")?, a.u("d")?, a.f("L")?, a.f("M")?, a.f("b")?)
                .map_err(theory)?;
            vec![("transport", num(s.transport)), ("gibbs", num(s.gibbs)), ("value", num(s.total))]
        }
        "kl_target" => vec![(
            "value",
            num(kl_target_for_optimization(a.f("alpha")?, a.f("eps")?, a.f("L")?).map_err(theory)?),
        )],
        "opt_step" => vec![(
            "value",
            num(optimization_step_size(a.f("alpha")?, a.f("L")?, a.u("n")?, a.f("gamma")?, a.u("d")?, a.f("eps")?)
                .map_err(theory)?),
        )],
        "sigma_floor" => vec![(
            "value",
            num(anneal_sigma_floor(a.f("L")?, a.f("g")?, a.f("eta_bar")?, a.f("mu")?, a.f("c1")?, a.f("c2")?)
                .map_err(theory)?),
        )],
        "chi" => {
            let (v, arg) = chi(a.u("d")?, a.f("L")?, a.f("M")?, a.f("b")?).map_err(theory)?;
            vec![("value", num(v)), ("argmax", num(arg))]
        }
        "anneal_validate" => {
            let sched = AnnealSchedule {
                eta_bar: a.f("eta_bar")?,
                gamma_bar: a.f("gamma_bar")?,
                sigma: a.f("sigma")?,
                mu: a.f("mu")?,
                g: a.f("g")?,
            };
            let r = anneal_validate(&sched, a.f("L")?, a.f("c1")?, a.f("c2")?, a.u("epochs")?).map_err(theory)?;
            if !r.gamma_bar_matches {
                warnings.push("gamma_bar != 1/c2: the offset floor was derived for gamma_bar = 1/c2".into());
            }
            let mut v = vec![
                ("ok", Val::Bool(r.ok())),
                ("epochs_checked", Val::Int(r.epochs_checked as u64)),
                ("max_eta_sq_l_sq", num(r.max_eta_sq_l_sq)),
                ("max_increment_ratio", num(r.max_increment_ratio)),
                ("gamma_bar_matches", Val::Bool(r.gamma_bar_matches)),
            ];
            if let Some(f) = r.first_violation {
                v.push(("violation_epoch", Val::Int(f.epoch as u64)));
                v.push(("violation", Val::Text(f.condition.to_string())));
                v.push(("violation_lhs", num(f.lhs)));
                v.push(("violation_rhs", num(f.rhs)));
            }
            v
        }
        _ => unreachable!("formula table and dispatch agree"),
    };
    let used = a.used.borrow();
    let extra: Vec<_> = a.map.keys().filter(|k| !used.contains(k)).cloned().collect();
    if !extra.is_empty() {
        return Err(err(format!("unused inputs for `{formula}`: {}", extra.join(", "))));
    }
    let mut inputs = a.map.clone();
    if let Some(e) = a.est {
        inputs.insert("est".into(), e.name().into());
    }
    Ok(Answer {
        formula,
        expr,
        inputs,
        values,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(q: &str) -> f64 {
        let tokens: Vec<&str> = q.split_whitespace().collect();
        match evaluate(&tokens).unwrap().value("value").unwrap() {
            Val::Num(v) => *v,
            Val::Int(v) => *v as f64,
            other => panic!("not numeric: {other:?}"),
        }
    }

    #[test]
    fn documented_queries() {
        assert_eq!(value("xi n=16 B=4"), 0.2);
        assert_eq!(value("step_cap svrg α=1 L=1 m=4 γ=1"), 1.0 / (64.0 * 6f64.sqrt()));
        assert_eq!(value("gamma_opt eps=0.5 d=1 L=1 M=1 b=0.25"), 8.0);
        assert!((value("upsilon n=16 B=4 m=4") - 4.2).abs() < 1e-12);
        assert_eq!(value("gradient_complexity k=8 B=4 m=4 n=16"), 2.0 * (16.0 + 24.0));
    }

    #[test]
    fn aliases_agree() {
        assert_eq!(
            value("step_cap est=sarah alpha=2 L=1.5 m=3 gamma=2"),
            value("step_cap sarah α=2 L=1.5 m=3 γ=2")
        );
        assert_eq!(value("talagrand H=2 α=4"), 1.0);
    }

    #[test]
    fn listing_and_json() {
        let a = evaluate(&["xi", "n=16", "B=4"]).unwrap();
        assert_eq!(a.listing(), "formula=xi\nexpr=(n - B) / (B (n - 1))\nvalue=0.2\n");
        let j = a.to_json();
        assert_eq!(j["values"]["value"], json!(0.2));
        assert_eq!(j["inputs"]["B"], json!("4"));
    }

    #[test]
    fn errors_are_reported() {
        for q in [
            vec!["nope"],
            vec!["xi", "n=16"],
            vec!["xi", "n=16", "B=4", "m=2"],
            vec!["xi", "n=16", "B=x"],
            vec!["step_cap", "alpha=1", "L=1", "m=4", "gamma=1"],
            vec!["kl_bound", "svrg", "h0=1", "k=1", "eta=1", "gamma=1", "alpha=1", "d=1", "L=1", "n=16", "B=4", "m=4"],
        ] {
            assert!(matches!(evaluate(&q), Err(CliError::Config(_))), "{q:?}");
        }
    }

    #[test]
    fn every_formula_is_dispatched() {
        let samples: &[&str] = &[
            "xi n=4 B=2",
            "upsilon n=4 B=2 m=2",
            "step_cap svrg alpha=1 L=1 m=2 gamma=1",
            "bias sarah eta=0.01 gamma=1 alpha=1 d=1 L=1 n=4 B=2 m=2",
            "kl_bound svrg h0=1 k=10 eta=0.001 gamma=1 alpha=1 d=1 L=1 n=4 B=2 m=2",
            "iterations eps=0.1 h0=1 gamma=1 alpha=1 eta=0.01",
            "eta_for_eps sarah eps=0.1 gamma=1 alpha=1 d=1 L=1 n=4 B=2 m=2",
            "plan svrg eps=0.1 h0=1 alpha=1 gamma=1 d=1 L=1 n=16",
            "gradient_complexity k=4 B=2 m=2 n=4",
            "talagrand h=1 alpha=1",
            "lsi_dissipative gamma=4 L=1 M=1 b=1 d=1 a_star=0 b_star=0",
            "lsi_weak_morse gamma=1e6 lambda_dagger=1 M=1 L=1 d=1 l_prime=1 c_f=1",
            "poincare lambda_dagger=0.5",
            "gamma_opt eps=0.5 d=1 L=1 M=1 b=0.25",
            "gamma_opt_strict eps=0.5 d=1 L=1 M=1 b=0.25",
            "gibbs_bound gamma=8 d=1 L=1 M=1 b=0.25",
            "suboptimality w2=0.1 gamma=8 d=1 L=1 M=1 b=0.25",
            "kl_target alpha=1 eps=0.5 L=2",
            "opt_step alpha=1 L=1 n=16 gamma=1 d=1 eps=0.5",
            "sigma_floor L=1 g=3 eta_bar=0.01 mu=13 c1=1 c2=1",
            "chi d=1 L=2 M=1 b=1",
            "anneal_validate eta_bar=0.01 gamma_bar=1 sigma=3 mu=13 g=3 L=1 c1=1 c2=1 epochs=5",
        ];
        assert_eq!(samples.len(), FORMULAS.len());
        for (q, f) in samples.iter().zip(FORMULAS) {
            let tokens: Vec<&str> = q.split_whitespace().collect();
            let a = evaluate(&tokens).unwrap_or_else(|e| panic!("{q}: {e}"));
            assert_eq!(a.formula, f.0);
        }
        let dis = evaluate(&["lsi_dissipative", "gamma=4", "L=1", "M=1", "b=1", "d=1", "a_star=0", "b_star=0"]).unwrap();
        assert_eq!(dis.warnings.len(), 1);
    }
}
