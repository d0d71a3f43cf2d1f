use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrld_cli::commands::{self, Overrides};
use vrld_cli::query::{evaluate, FORMULAS};
use vrld_cli::CliError;

#[derive(Parser)]
#[command(name = "vrld", version, about = "Variance-reduced Langevin samplers: experiments and theory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override `experiment.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (default: `experiment.out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override `experiment.workers` (0 = all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Suppress stdout on success.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run replicate chains and write per-replicate and summary CSVs.
    Run(Common),
    /// Evaluate a theory formula (`vrld theory xi n=16 B=4`), list formulas
    /// (`vrld theory list`), or print the theory quantities of a config.
    Theory {
        /// Formula name followed by key=value inputs.
        query: Vec<String>,
        #[arg(long, value_name = "PATH", conflicts_with = "query")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Emit one JSON object instead of key=value lines.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Run each variant of `[compare]` and tabulate grad_evals to reach the threshold.
    Compare(Common),
    /// Run the config once per value of the `[sweep]` axis.
    Sweep(Common),
    /// Resolve a config and report every error without running.
    ValidateConfig(Common),
}

fn theory(query: &[String], config: Option<PathBuf>, seed: Option<u64>, json: bool) -> Result<String, CliError> {
    if let Some(path) = config {
        let o = Overrides {
            seed,
            ..Default::default()
        };
        return commands::theory_for_config(&path, &o);
    }
    if query.len() == 1 && query[0] == "list" {
        return Ok(FORMULAS
            .iter()
            .map(|(name, inputs, expr)| format!("{name}: {inputs}\n    {expr}\n"))
            .collect());
    }
    let a = evaluate(query)?;
    Ok(if json {
        format!("{}\n", a.to_json())
    } else {
        a.listing()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, quiet) = match cli.command {
        Command::Run(c) => (commands::run(&c.config, &c.overrides()), c.quiet),
        Command::Compare(c) => (commands::compare(&c.config, &c.overrides()), c.quiet),
        Command::Sweep(c) => (commands::sweep(&c.config, &c.overrides()), c.quiet),
        Command::ValidateConfig(c) => (commands::validate_config(&c.config, &c.overrides()), c.quiet),
        Command::Theory {
            query,
            config,
            seed,
            json,
            quiet,
        } => (theory(&query, config, seed, json), quiet),
    };
    match result {
        Ok(text) => {
            if !quiet {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
