use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const QUADRATIC: &str = r#"
[potential]
name = "generated_quadratic"
n = 16
dim = 2
spread = 1.0
seed = 1
scale_range = [0.75, 1.25]
"#;

fn vrld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrld"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    vrld(&args)
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let j = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[j].clone()).collect()
}

fn lmc_config() -> String {
    format!(
        "{QUADRATIC}
[sampler]
variant = \"lmc\"
eta = 0.01
gamma = 2.0
steps = 200
thin = 20

[theory]
alpha = 1.5

[experiment]
replicates = 5
seed = 3
init = {{ gaussian = {{ mean = [2.0, 0.0], var = 1.0 }} }}
"
    )
}

#[test]
fn run_is_byte_identical_on_rerun_and_across_worker_counts() {
    let c = Case::new();
    let cfg = c.config("lmc.toml", &lmc_config());
    let a = run("run", &cfg, &c.out("a"), &["--workers", "1"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = run("run", &cfg, &c.out("b"), &["--workers", "4", "--quiet"]);
    assert!(b.status.success());
    assert!(b.stdout.is_empty());
    for f in ["replicate_0000.csv", "replicate_0004.csv", "summary.csv"] {
        let x = std::fs::read(c.out("a").join(f)).unwrap();
        let y = std::fs::read(c.out("b").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let s = run("run", &cfg, &c.out("s"), &["--seed", "4"]);
    assert!(s.status.success());
    assert_ne!(
        std::fs::read(c.out("a").join("replicate_0000.csv")).unwrap(),
        std::fs::read(c.out("s").join("replicate_0000.csv")).unwrap()
    );
}

#[test]
fn csv_schema_is_fixed() {
    let c = Case::new();
    let cfg = c.config("lmc.toml", &lmc_config());
    assert!(run("run", &cfg, &c.out("a"), &[]).status.success());
    let rep = data_rows(&c.out("a").join("replicate_0002.csv"));
    assert_eq!(
        rep[0],
        [
            "step",
            "epoch",
            "grad_evals",
            "objective",
            "suboptimality",
            "x0",
            "x1",
            "bound_kl_decay",
            "bound_kl_bias",
            "bound_kl",
            "bound_w2",
            "bound_gibbs_suboptimality"
        ]
    );
    assert_eq!(column(&rep, "step"), ["0", "20", "40", "60", "80", "100", "120", "140", "160", "180", "200"]);
    assert_eq!(column(&rep, "grad_evals")[1], "320");
    // LMC is not variance reduced, so the KL overlay is blank.
    assert!(column(&rep, "bound_kl").iter().all(String::is_empty));
    let sum = data_rows(&c.out("a").join("summary.csv"));
    assert_eq!(&sum[0][..9], [
        "step",
        "epoch",
        "grad_evals",
        "objective_mean",
        "objective_se",
        "suboptimality_mean",
        "suboptimality_se",
        "moment_kl",
        "moment_w2"
    ]);
    let text = std::fs::read_to_string(c.out("a").join("summary.csv")).unwrap();
    assert!(text.starts_with("# vrld "));
    assert!(text.contains("# variant = \"lmc\""));
}

#[test]
fn auto_mode_picks_sqrt_n_and_records_it() {
    let c = Case::new();
    let cfg = c.config(
        "auto.toml",
        &format!(
            "{QUADRATIC}
[sampler]
variant = \"svrg_ld\"
gamma = 2.0
thin = 1000

[auto]
target = \"kl\"
eps = 0.5

[theory]
alpha = 1.5

[experiment]
replicates = 2
init = {{ gaussian = {{ mean = [1.0, 1.0], var = 1.0 }} }}
"
        ),
    );
    let v = vrld(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert!(v.status.success(), "{}", stderr(&v));
    assert!(stdout(&v).contains("B=m=4"));
    let o = run("run", &cfg, &c.out("a"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(c.out("a").join("summary.csv")).unwrap();
    assert!(text.contains("# batch = 4\n"));
    assert!(text.contains("# epoch_len = 4\n"));
    assert!(text.contains("# eta = "));
    assert!(text.contains("# h0 = "));
    let sum = data_rows(&c.out("a").join("summary.csv"));
    assert!(column(&sum, "bound_kl").iter().all(|v| !v.is_empty()));
}

#[test]
fn svrg_with_batch_below_epoch_length_is_a_config_error() {
    let c = Case::new();
    let cfg = c.config(
        "bad.toml",
        &format!(
            "{QUADRATIC}
[sampler]
variant = \"svrg_ld\"
eta = 0.0001
gamma = 2.0
batch = 2
epoch_len = 4
steps = 40

[theory]
alpha = 1.5
"
        ),
    );
    for cmd in ["run", "validate-config"] {
        let o = run(cmd, &cfg, &c.out("x"), &[]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("B >= m"), "{}", stderr(&o));
    }
    assert!(!c.out("x").exists());
}

#[test]
fn every_violation_is_listed_and_unknown_keys_rejected() {
    let c = Case::new();
    let cfg = c.config(
        "bad.toml",
        &format!(
            "{QUADRATIC}
[sampler]
variant = \"svrg_ld\"
eta = 0.5
gamma = 0.5
batch = 2
epoch_len = 4
steps = 42

[theory]
alpha = 1.5
"
        ),
    );
    let o = run("validate-config", &cfg, &c.out("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("gamma must be >= 1"), "{err}");
    assert!(err.contains("must divide"), "{err}");
    let typo = c.config("typo.toml", &lmc_config().replace("thin = 20", "thinn = 20"));
    let o = run("validate-config", &typo, &c.out("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("thinn"));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let c = Case::new();
    let cfg = c.config("div.toml", &lmc_config().replace("eta = 0.01", "eta = 5.0").replace("steps = 200", "steps = 2000"));
    let o = run("run", &cfg, &c.out("x"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverge"));
}

#[test]
fn theory_queries() {
    let o = vrld(&["theory", "xi", "n=16", "B=4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("value=0.2\n"));
    let o = vrld(&["theory", "step_cap", "svrg", "α=1", "L=1", "m=4", "γ=1"]);
    let want = 1.0 / (64.0 * 6f64.sqrt());
    assert!(stdout(&o).contains(&format!("value={want}\n")), "{}", stdout(&o));
    let o = vrld(&["theory", "--json", "gamma_opt", "eps=0.5", "d=1", "L=1", "M=1", "b=0.25"]);
    let j: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(j["values"]["value"], serde_json::json!(8.0));
    assert_eq!(j["formula"], "gamma_opt");
    let o = vrld(&["theory", "list"]);
    assert!(stdout(&o).contains("anneal_validate:"));
    for bad in [
        vec!["theory", "nonsense"],
        vec!["theory", "xi", "n=16"],
        vec!["theory", "kl_bound", "svrg", "h0=1", "k=1", "eta=1", "gamma=1", "alpha=1", "d=1", "L=1", "n=16", "B=4", "m=4"],
    ] {
        assert_eq!(vrld(&bad).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn theory_for_a_config() {
    let c = Case::new();
    let cfg = c.config("lmc.toml", &lmc_config().replace("\"lmc\"", "\"svrg_ld\"\nbatch = 4\nepoch_len = 4").replace("eta = 0.01", "eta = 0.002"));
    let o = vrld(&["theory", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("xi=0.2\n"), "{out}");
    assert!(out.contains("upsilon=4.19999"), "{out}");
    assert!(out.contains("grad_evals=2000\n"), "{out}");
    assert!(out.contains("bound_kl="), "{out}");
}

fn svrg_config(extra: &str) -> String {
    format!(
        "{QUADRATIC}
[sampler]
variant = \"svrg_ld\"
eta = 0.002
gamma = 2.0
batch = 4
epoch_len = 4
steps = 200
thin = 20

[theory]
alpha = 1.5

[experiment]
replicates = 3
seed = 9
init = {{ point = [1.0, -1.0] }}
{extra}"
    )
}

#[test]
fn compare_identical_variants_and_unreachable_threshold() {
    let c = Case::new();
    let cfg = c.config(
        "cmp.toml",
        &svrg_config("\n[compare]\nvariants = [\"svrg_ld\", \"svrg_ld\"]\nmetric = \"objective\"\nthreshold = 3.0\n"),
    );
    let o = run("compare", &cfg, &c.out("a"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&c.out("a").join("compare.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows[1][3], "3/3");

    let cfg = c.config(
        "never.toml",
        &svrg_config("\n[compare]\nvariants = [\"lmc\", \"sarah_ld\"]\nmetric = \"suboptimality\"\nthreshold = -1.0\n"),
    );
    let o = run("compare", &cfg, &c.out("b"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("not reached"));
    let rows = data_rows(&c.out("b").join("compare.csv"));
    for r in &rows[1..] {
        assert_eq!(r[3], "0/3");
        assert_eq!(r[4], "not reached");
        assert_eq!(r[5], "not reached");
    }
    assert!(c.out("b").join("0_lmc").join("summary.csv").exists());
}

#[test]
fn single_point_sweep_matches_run() {
    let c = Case::new();
    let cfg = c.config("sw.toml", &svrg_config("\n[sweep]\naxis = \"eta\"\nvalues = [0.002]\n"));
    assert!(run("sweep", &cfg, &c.out("s"), &[]).status.success());
    assert!(run("run", &cfg, &c.out("r"), &[]).status.success());
    let sweep = data_rows(&c.out("s").join("sweep.csv"));
    assert_eq!(&sweep[0][..3], ["axis", "value", "replicate"]);
    for rep in 0..3 {
        let single = data_rows(&c.out("r").join(format!("replicate_{rep:04}.csv")));
        assert_eq!(sweep[0][3..], single[0][..]);
        let mine: Vec<_> = sweep[1..]
            .iter()
            .filter(|r| r[2] == rep.to_string())
            .map(|r| {
                assert_eq!((r[0].as_str(), r[1].as_str()), ("eta", "0.002"));
                r[3..].to_vec()
            })
            .collect();
        assert_eq!(mine, single[1..]);
    }
    let summary = data_rows(&c.out("s").join("sweep_summary.csv"));
    let single = data_rows(&c.out("r").join("summary.csv"));
    let tail: Vec<_> = summary.iter().map(|r| r[2..].to_vec()).collect();
    assert_eq!(tail, single);
}

#[test]
fn full_batch_sweep_reproduces_lmc() {
    let c = Case::new();
    let base = svrg_config("\n[sweep]\naxis = \"batch\"\nvalues = [16]\n")
        .replace("epoch_len = 4", "epoch_len = 1")
        .replace("\"svrg_ld\"", "\"sarah_ld\"");
    let cfg = c.config("sw.toml", &base);
    let o = run("sweep", &cfg, &c.out("s"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lmc = c.config("lmc.toml", &svrg_config("").replace("\"svrg_ld\"", "\"lmc\"").replace("batch = 4\n", "").replace("epoch_len = 4\n", ""));
    let o = run("run", &lmc, &c.out("l"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = data_rows(&c.out("s").join("sweep.csv"));
    let single = data_rows(&c.out("l").join("replicate_0001.csv"));
    let rows: Vec<Vec<String>> = std::iter::once(sweep[0][3..].to_vec())
        .chain(sweep[1..].iter().filter(|r| r[2] == "1").map(|r| r[3..].to_vec()))
        .collect();
    for col in ["x0", "x1", "objective", "grad_evals"] {
        assert_eq!(column(&rows, col), column(&single, col), "{col}");
    }
}

#[test]
fn sweep_rejects_bad_axis_values() {
    let c = Case::new();
    let cfg = c.config("sw.toml", &svrg_config("\n[sweep]\naxis = \"batch\"\nvalues = [2.5]\n"));
    let o = run("sweep", &cfg, &c.out("s"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("positive integers"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let o = vrld(&["validate-config", "--config", p.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
