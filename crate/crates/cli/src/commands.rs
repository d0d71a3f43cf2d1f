//! Subcommand implementations. Each returns the text to print on success.

use std::path::{Path, PathBuf};

use vrld::theory::{gradient_complexity, step_cap, upsilon, xi};
use vrld::Variant;

use crate::config::{Axis, ExperimentConfig, Metric};
use crate::report::{
    self, execute, fmt_f64, provenance, replicate_header, replicate_rows, summary_header, summary_row, write_run,
    write_table, CheckpointSummary,
};
use crate::resolve::{resolve, Resolved};
use crate::CliError;

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.experiment.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.experiment.workers = w;
        }
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.experiment.out))
    }
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    o.apply(&mut cfg);
    Ok(cfg)
}

fn warning_lines(r: &Resolved) -> String {
    r.warnings.iter().map(|w| format!("warning: {w}\n")).collect()
}

pub fn validate_config(path: &Path, o: &Overrides) -> Result<String, CliError> {
    let r = resolve(&load(path, o)?)?;
    let mut out = warning_lines(&r);
    if let Some(note) = &r.auto_note {
        out.push_str(note);
        out.push('\n');
    }
    out.push_str("ok\n");
    Ok(out)
}

fn final_line(summary: &[CheckpointSummary]) -> String {
    let Some(last) = summary.last() else {
        return "no checkpoints at or after burn-in\n".into();
    };
    let mut line = format!(
        "step={} grad_evals={} objective_mean={}",
        last.step,
        last.grad_evals,
        fmt_f64(last.objective.mean)
    );
    if let Some(s) = last.suboptimality {
        line.push_str(&format!(" suboptimality_mean={}", fmt_f64(s.mean)));
    }
    if let Some(kl) = last.moment_kl {
        line.push_str(&format!(" moment_kl={}", fmt_f64(kl)));
    }
    if let Some(b) = last.bounds[2] {
        line.push_str(&format!(" bound_kl={}", fmt_f64(b)));
    }
    line.push('\n');
    line
}

pub fn run(path: &Path, o: &Overrides) -> Result<String, CliError> {
    let cfg = load(path, o)?;
    let r = resolve(&cfg)?;
    let run = execute(&r)?;
    let dir = o.out_dir(&cfg);
    let summary = write_run(&dir, &r, &run)?;
    let mut out = warning_lines(&r);
    out.push_str(&format!("wrote {} replicate(s) and summary.csv to {}\n", r.replicates, dir.display()));
    out.push_str(&final_line(&summary));
    Ok(out)
}

/// Outcome of one variant in a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub label: String,
    /// Replicates whose metric reached the threshold (the ensemble counts as one for `moment_kl`).
    pub reached: usize,
    pub trials: usize,
    pub step_mean: Option<f64>,
    pub grad_evals_mean: Option<f64>,
    pub grad_evals_se: Option<f64>,
    pub final_metric: Option<f64>,
}

const NOT_REACHED: &str = "not reached";

fn first_hit(values: impl Iterator<Item = Option<f64>>, threshold: f64) -> Option<usize> {
    values.enumerate().find(|(_, v)| v.is_some_and(|v| v <= threshold)).map(|(i, _)| i)
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = (values.len() > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    });
    (mean, se)
}

fn compare_one(label: String, r: &Resolved, metric: Metric, threshold: f64, dir: &Path) -> Result<CompareRow, CliError> {
    let run = execute(r)?;
    let summary = write_run(dir, r, &run)?;
    let first = run.checkpoints.iter().position(|&k| k >= r.sampler.burn_in).unwrap_or(run.checkpoints.len());
    let idx: Vec<usize> = (first..run.checkpoints.len()).collect();
    let hits: Vec<Option<usize>> = match metric {
        Metric::MomentKl => vec![first_hit(summary.iter().map(|s| s.moment_kl), threshold).map(|i| idx[i])],
        Metric::Suboptimality | Metric::Objective => {
            let f_star = r.objective.f_star();
            if metric == Metric::Suboptimality && f_star.is_none() {
                return Err(CliError::Config(vec![format!(
                    "metric suboptimality needs a potential with a known minimum value ({} has none)",
                    r.explicit.potential.name()
                )]));
            }
            let offset = match metric {
                Metric::Suboptimality => f_star.unwrap_or(0.0),
                _ => 0.0,
            };
            (0..r.replicates as usize)
                .map(|rep| {
                    first_hit(idx.iter().map(|&c| Some(r.objective.value(&run.states[c][rep]) - offset)), threshold)
                        .map(|i| idx[i])
                })
                .collect()
        }
    };
    let reached: Vec<usize> = hits.iter().flatten().copied().collect();
    let all = reached.len() == hits.len();
    let (step_mean, grad_evals_mean, grad_evals_se) = if all {
        let steps: Vec<f64> = reached.iter().map(|&c| run.checkpoints[c] as f64).collect();
        let evals: Vec<f64> = reached.iter().map(|&c| run.grad_evals[c] as f64).collect();
        let (g, se) = mean_se(&evals);
        (Some(mean_se(&steps).0), Some(g), se)
    } else {
        (None, None, None)
    };
    let final_metric = summary.last().and_then(|s| match metric {
        Metric::MomentKl => s.moment_kl,
        Metric::Suboptimality => s.suboptimality.map(|x| x.mean),
        Metric::Objective => Some(s.objective.mean),
    });
    Ok(CompareRow {
        label,
        reached: reached.len(),
        trials: hits.len(),
        step_mean,
        grad_evals_mean,
        grad_evals_se,
        final_metric,
    })
}

pub const COMPARE_HEADER: [&str; 8] = [
    "variant",
    "metric",
    "threshold",
    "reached",
    "step_mean",
    "grad_evals_mean",
    "grad_evals_se",
    "final_metric",
];

fn compare_record(row: &CompareRow, metric: Metric, threshold: f64) -> Vec<String> {
    let or_sentinel = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| NOT_REACHED.into());
    vec![
        row.label.clone(),
        metric.name().into(),
        fmt_f64(threshold),
        format!("{}/{}", row.reached, row.trials),
        or_sentinel(row.step_mean),
        or_sentinel(row.grad_evals_mean),
        row.grad_evals_se.map(fmt_f64).unwrap_or_default(),
        row.final_metric.map(fmt_f64).unwrap_or_default(),
    ]
}

fn variant_config(cfg: &ExperimentConfig, v: Variant) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.compare = None;
    c.sweep = None;
    if v == Variant::Lmc && c.sampler.variant != Variant::Lmc {
        c.sampler.batch = None;
        c.sampler.epoch_len = None;
    }
    c.sampler.variant = v;
    c
}

pub fn compare(path: &Path, o: &Overrides) -> Result<String, CliError> {
    let cfg = load(path, o)?;
    let Some(section) = cfg.compare.clone() else {
        return Err(CliError::Config(vec!["compare needs a [compare] section".into()]));
    };
    let mut errors = Vec::new();
    if section.variants.len() < 2 {
        errors.push("compare.variants needs at least two entries".to_string());
    }
    if !section.threshold.is_finite() {
        errors.push(format!("compare.threshold must be finite (got {})", section.threshold));
    }
    let mut resolved = Vec::new();
    for v in &section.variants {
        match resolve(&variant_config(&cfg, *v)) {
            Ok(r) => resolved.push(r),
            Err(CliError::Config(e)) => errors.extend(e.into_iter().map(|e| format!("{v}: {e}"))),
            Err(e) => return Err(e),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let dir = o.out_dir(&cfg);
    let mut rows = Vec::new();
    for (i, (v, r)) in section.variants.iter().zip(&resolved).enumerate() {
        let sub = dir.join(format!("{i}_{}", v.name()));
        rows.push(compare_one(v.name().to_string(), r, section.metric, section.threshold, &sub)?);
    }
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|row| compare_record(row, section.metric, section.threshold))
        .collect();
    let mut comments = vec![format!("vrld {}", env!("CARGO_PKG_VERSION")), "config:".into()];
    comments.extend(cfg.to_toml().lines().map(String::from));
    let header: Vec<String> = COMPARE_HEADER.map(String::from).to_vec();
    write_table(&dir.join("compare.csv"), &comments, &header, &records)?;
    Ok(render_table(&header, &records))
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", parts.join("  ").trim_end())
    };
    let mut out = line(header);
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

pub fn sweep(path: &Path, o: &Overrides) -> Result<String, CliError> {
    let cfg = load(path, o)?;
    let Some(section) = cfg.sweep.clone() else {
        return Err(CliError::Config(vec!["sweep needs a [sweep] section".into()]));
    };
    let mut errors = Vec::new();
    if section.values.is_empty() {
        errors.push("sweep.values must not be empty".to_string());
    }
    if cfg.auto.is_some() && section.axis != Axis::N {
        errors.push(format!(
            "sweep over {} conflicts with [auto], which chooses it; only n can be swept in auto mode",
            section.axis.name()
        ));
    }
    let mut resolved = Vec::new();
    for &v in &section.values {
        let mut c = match cfg.with_axis(section.axis, v) {
            Ok(c) => c,
            Err(CliError::Config(e)) => {
                errors.extend(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        c.sweep = None;
        c.compare = None;
        match resolve(&c) {
            Ok(r) => resolved.push((v, r)),
            Err(CliError::Config(e)) => {
                errors.extend(e.into_iter().map(|e| format!("{} = {}: {e}", section.axis.name(), fmt_f64(v))))
            }
            Err(e) => return Err(e),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let d = resolved[0].1.dim();
    let axis = section.axis.name();
    let mut long = Vec::new();
    let mut summary = Vec::new();
    let mut finals = String::new();
    for (v, r) in &resolved {
        let run = execute(r)?;
        for rep in 0..r.replicates as usize {
            for row in replicate_rows(r, &run, rep) {
                let mut rec = vec![axis.to_string(), fmt_f64(*v), rep.to_string()];
                rec.extend(row);
                long.push(rec);
            }
        }
        let s = report::summarize(r, &run);
        for cp in &s {
            let mut rec = vec![axis.to_string(), fmt_f64(*v)];
            rec.extend(summary_row(cp));
            summary.push(rec);
        }
        finals.push_str(&format!("{axis}={} {}", fmt_f64(*v), final_line(&s)));
    }
    let dir = o.out_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    let mut comments = vec![format!("vrld {}", env!("CARGO_PKG_VERSION")), "config:".into()];
    comments.extend(cfg.to_toml().lines().map(String::from));
    for (v, r) in &resolved {
        comments.push(format!("resolved at {axis} = {}:", fmt_f64(*v)));
        comments.extend(provenance(r).into_iter().skip(1).map(|l| format!("  {l}")));
    }
    let mut header = vec!["axis".to_string(), "value".into(), "replicate".into()];
    header.extend(replicate_header(d));
    write_table(&dir.join("sweep.csv"), &comments, &header, &long)?;
    let mut header = vec!["axis".to_string(), "value".into()];
    header.extend(summary_header(d));
    write_table(&dir.join("sweep_summary.csv"), &comments, &header, &summary)?;
    Ok(format!("wrote sweep.csv and sweep_summary.csv to {}\n{finals}", dir.display()))
}

/// Theory quantities for the resolved config of a file, as `key=value` lines.
pub fn theory_for_config(path: &Path, o: &Overrides) -> Result<String, CliError> {
    let r = resolve(&load(path, o)?)?;
    let s = &r.sampler;
    let c = &r.constants;
    let n = r.objective.n();
    let mut kv: Vec<(String, String)> = vec![
        ("variant".into(), s.variant.name().into()),
        ("n".into(), n.to_string()),
        ("d".into(), r.dim().to_string()),
        ("eta".into(), fmt_f64(s.eta)),
        ("gamma".into(), fmt_f64(s.gamma)),
        ("batch".into(), s.batch.to_string()),
        ("epoch_len".into(), s.epoch_len.to_string()),
        ("steps".into(), s.steps.to_string()),
    ];
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "unknown".into());
    kv.push(("L".into(), opt(c.l)));
    kv.push(("M".into(), opt(c.m)));
    kv.push(("b".into(), opt(c.b)));
    kv.push(("alpha".into(), opt(c.alpha)));
    kv.push(("h0".into(), opt(c.h0)));
    if let Some(est) = s.variant.estimator() {
        let vals = [
            ("xi", xi(n, s.batch).ok()),
            ("upsilon", upsilon(n, s.batch, s.epoch_len).ok()),
            (
                "step_cap",
                c.alpha
                    .zip(c.l)
                    .and_then(|(a, l)| step_cap(est, a, l, s.epoch_len, s.gamma).ok()),
            ),
        ];
        for (k, v) in vals {
            kv.push((k.into(), opt(v)));
        }
    }
    let grad_evals = match s.variant {
        Variant::Lmc => Some(s.steps as u64 * n as u64),
        Variant::Sgld => Some(s.steps as u64 * s.batch as u64),
        _ => gradient_complexity(s.steps as u64, s.batch, s.epoch_len, n).ok(),
    };
    kv.push(("grad_evals".into(), grad_evals.map(|g| g.to_string()).unwrap_or_default()));
    let bounds = report::bounds_at(&r, s.steps);
    for (k, v) in report::BOUND_COLUMNS.iter().zip(bounds) {
        kv.push((k.to_string(), opt(v)));
    }
    let mut out: String = kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    if let Some(note) = &r.auto_note {
        out.push_str(&format!("note={note}\n"));
    }
    for w in &r.warnings {
        out.push_str(&format!("warning={w}\n"));
    }
    Ok(out)
}
