//! Checkpoint statistics, bound overlays and CSV output.
//!
//! Every CSV starts with `# ` comment lines holding the resolved config, then a fixed
//! header: `step, epoch, grad_evals`, the diagnostic columns, the coordinates, and
//! the bound overlays (prefixed `bound_`). Unavailable values are left empty.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use vrld::diagnostics::{kl_gaussians, w2_gaussians, DiagnosticsError, ReplicateRun, SampleStats};
use vrld::theory::{bias_term, gibbs_suboptimality_bound, talagrand_w2, KlInputs};
use vrld::SamplerError;

use crate::resolve::Resolved;
use crate::CliError;

pub const BOUND_COLUMNS: [&str; 5] = [
    "bound_kl_decay",
    "bound_kl_bias",
    "bound_kl",
    "bound_w2",
    "bound_gibbs_suboptimality",
];

/// Shortest decimal that parses back to the same `f64`; plain notation for
/// moderate magnitudes, exponent notation otherwise.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// `None` with a single replicate.
    pub se: Option<f64>,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean, se }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointSummary {
    pub step: usize,
    pub epoch: usize,
    pub grad_evals: u64,
    pub objective: Stat,
    pub suboptimality: Option<Stat>,
    /// KL and W₂ of the moment-matched replicate Gaussian to a Gaussian Gibbs law.
    pub moment_kl: Option<f64>,
    pub moment_w2: Option<f64>,
    pub coords: Vec<Stat>,
    pub bounds: [Option<f64>; 5],
}

/// Bound overlays after `step` steps, in [`BOUND_COLUMNS`] order.
pub fn bounds_at(r: &Resolved, step: usize) -> [Option<f64>; 5] {
    let mut out = [None; 5];
    if r.anneal.is_some() {
        return out;
    }
    let s = &r.sampler;
    let c = &r.constants;
    if let (Some(est), Some(alpha), Some(l), Some(h0)) = (s.variant.estimator(), c.alpha, c.l, c.h0) {
        let p = KlInputs {
            h0,
            k: step as u64,
            eta: s.eta,
            gamma: s.gamma,
            alpha,
            d: r.dim(),
            l,
            n: r.objective.n(),
            b: s.batch,
            m: s.epoch_len,
        };
        if let Ok(bias) = bias_term(est, &p) {
            let decay = (-alpha * s.eta * step as f64 / s.gamma).exp() * h0;
            out[0] = Some(decay);
            out[1] = Some(bias);
            out[2] = Some(decay + bias);
            out[3] = talagrand_w2(decay + bias, alpha).ok();
        }
    }
    if let (Some(l), Some(m), Some(b)) = (c.l, c.m, c.b) {
        out[4] = gibbs_suboptimality_bound(s.gamma, r.dim(), l, m, b).ok();
    }
    out
}

pub fn map_run_error(e: DiagnosticsError) -> CliError {
    match e {
        DiagnosticsError::Sampler(SamplerError::Diverged { step, .. }) => {
            CliError::Divergence(format!("a replicate chain diverged at step {step}"))
        }
        DiagnosticsError::Sampler(SamplerError::InvalidConfig(v)) => CliError::Config(v),
        other => CliError::Other(other.to_string()),
    }
}

pub fn execute(r: &Resolved) -> Result<ReplicateRun, CliError> {
    vrld::diagnostics::run_replicates(
        &r.objective,
        &r.sampler,
        r.anneal.as_ref(),
        &r.init,
        r.replicates,
        &r.checkpoints,
        r.workers,
    )
    .map_err(map_run_error)
}

/// Per-checkpoint statistics over replicates, from the burn-in onwards.
pub fn summarize(r: &Resolved, run: &ReplicateRun) -> Vec<CheckpointSummary> {
    let obj = &r.objective;
    let f_star = obj.f_star();
    let d = r.dim();
    let mut out = Vec::new();
    for (c, &step) in run.checkpoints.iter().enumerate() {
        if step < r.sampler.burn_in {
            continue;
        }
        let states = &run.states[c];
        let values: Vec<f64> = states.iter().map(|x| obj.value(x)).collect();
        let suboptimality = f_star.map(|f| Stat::of(&values.iter().map(|v| v - f).collect::<Vec<_>>()));
        let coords = (0..d)
            .map(|j| Stat::of(&states.iter().map(|x| x[j]).collect::<Vec<_>>()))
            .collect();
        let moment = obj.gibbs_gaussian(r.gamma_at(step)).and_then(|gibbs| {
            let stats = SampleStats::from_samples(run.at(c), None).ok()?;
            let g = stats.to_gaussian(0.0).ok()?;
            Some((kl_gaussians(&g, &gibbs).ok()?, w2_gaussians(&g, &gibbs).ok()?))
        });
        out.push(CheckpointSummary {
            step,
            epoch: r.epoch_of(step),
            grad_evals: run.grad_evals[c],
            objective: Stat::of(&values),
            suboptimality,
            moment_kl: moment.map(|m| m.0),
            moment_w2: moment.map(|m| m.1),
            coords,
            bounds: bounds_at(r, step),
        });
    }
    out
}

pub fn replicate_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "epoch", "grad_evals", "objective", "suboptimality"]
        .map(String::from)
        .to_vec();
    h.extend((0..d).map(|j| format!("x{j}")));
    h.extend(BOUND_COLUMNS.map(String::from));
    h
}

/// Rows of replicate `rep`, one per checkpoint.
pub fn replicate_rows(r: &Resolved, run: &ReplicateRun, rep: usize) -> Vec<Vec<String>> {
    let f_star = r.objective.f_star();
    run.checkpoints
        .iter()
        .enumerate()
        .map(|(c, &step)| {
            let x = &run.states[c][rep];
            let v = r.objective.value(x);
            let mut row = vec![
                step.to_string(),
                r.epoch_of(step).to_string(),
                run.grad_evals[c].to_string(),
                fmt_f64(v),
                fmt_opt(f_star.map(|f| v - f)),
            ];
            row.extend(x.iter().map(|&v| fmt_f64(v)));
            row.extend(bounds_at(r, step).map(fmt_opt));
            row
        })
        .collect()
}

pub fn summary_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "step",
        "epoch",
        "grad_evals",
        "objective_mean",
        "objective_se",
        "suboptimality_mean",
        "suboptimality_se",
        "moment_kl",
        "moment_w2",
    ]
    .map(String::from)
    .to_vec();
    for j in 0..d {
        h.push(format!("x{j}_mean"));
        h.push(format!("x{j}_se"));
    }
    h.extend(BOUND_COLUMNS.map(String::from));
    h
}

pub fn summary_row(s: &CheckpointSummary) -> Vec<String> {
    let mut row = vec![
        s.step.to_string(),
        s.epoch.to_string(),
        s.grad_evals.to_string(),
        fmt_f64(s.objective.mean),
        fmt_opt(s.objective.se),
        fmt_opt(s.suboptimality.map(|x| x.mean)),
        fmt_opt(s.suboptimality.and_then(|x| x.se)),
        fmt_opt(s.moment_kl),
        fmt_opt(s.moment_w2),
    ];
    for c in &s.coords {
        row.push(fmt_f64(c.mean));
        row.push(fmt_opt(c.se));
    }
    row.extend(s.bounds.map(fmt_opt));
    row
}

/// The `# ` provenance lines written above every table.
pub fn provenance(r: &Resolved) -> Vec<String> {
    let mut lines = vec![format!("vrld {}", env!("CARGO_PKG_VERSION"))];
    if let Some(note) = &r.auto_note {
        lines.push(note.clone());
    }
    lines.extend(r.warnings.iter().map(|w| format!("warning: {w}")));
    lines.push("resolved config:".into());
    lines.extend(r.explicit.to_toml().lines().map(String::from));
    lines
}

pub fn write_table(path: &Path, comments: &[String], header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Other(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    for c in comments {
        if c.is_empty() {
            writeln!(w, "#").map_err(io)?;
        } else {
            writeln!(w, "# {c}").map_err(io)?;
        }
    }
    let mut csv = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Other(format!("{}: {e}", path.display()));
    csv.write_record(header).map_err(csv_err)?;
    for row in rows {
        csv.write_record(row).map_err(csv_err)?;
    }
    csv.flush().map_err(io)
}

/// Writes `replicate_NNNN.csv` for every replicate and `summary.csv` into `dir`.
pub fn write_run(dir: &Path, r: &Resolved, run: &ReplicateRun) -> Result<Vec<CheckpointSummary>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    let comments = provenance(r);
    let d = r.dim();
    for rep in 0..r.replicates as usize {
        let path = dir.join(format!("replicate_{rep:04}.csv"));
        write_table(&path, &comments, &replicate_header(d), &replicate_rows(r, run, rep))?;
    }
    let summary = summarize(r, run);
    let rows: Vec<_> = summary.iter().map(summary_row).collect();
    write_table(&dir.join("summary.csv"), &comments, &summary_header(d), &rows)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formatting_choices() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(-3.5e20), "-3.5e20");
        assert_eq!(fmt_opt(None), "");
    }

    proptest! {
        #[test]
        fn floats_round_trip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn stat_matches_hand_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.se.unwrap() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).se, None);
    }
}
