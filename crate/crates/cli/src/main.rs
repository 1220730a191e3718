//! `growdp`: simulation front end for growing-database private query
//! answering.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a run
//! detects an invariant violation, 1 for anything else.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use growdp::harness::{
    audit_csv, compose_report, run_audit, run_ermg_experiment, run_improver_experiment, run_pmwg, run_scheduler,
    run_sparse, validate_all, AuditExperiment, AuditTarget, ErmgExperiment, ExperimentOutput, ImproverExperiment,
    Overrides, PmwgExperiment, SchedulerExperiment, SparseExperiment,
};
use growdp::Error;

#[derive(Parser, Debug)]
#[command(name = "growdp", version, about = "Private query answering on growing databases")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent trials; overrides the config.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output path for the CSV; the summary goes next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Private multiplicative weights on a growing database.
    RunPmwg,
    /// Epoch scheduler around a static mechanism.
    RunScheduler,
    /// Per-step improving scheduler around a static mechanism.
    RunImprover,
    /// Above Threshold, Numeric Above Threshold or Numeric Sparse.
    RunSparse,
    /// Private empirical risk minimization on a growing database.
    RunErmg,
    /// Compose a JSON list of per-event epsilons.
    Compose {
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
    },
    /// Monte Carlo privacy audit of a micro-instance.
    DpAudit {
        /// Used when no config is given.
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Run the invariant checks.
    Validate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    Laplace,
    LaplaceHalved,
    Atg,
}

enum Failure {
    Config(String),
    Invariant(Vec<String>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => Failure::Other(io.into()),
            other => Failure::Config(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Config(format!("stdin: {e}")))?;
            Ok(s)
        }
    }
}

fn load<T: serde::de::DeserializeOwned + Overrides>(cli: &Cli) -> Result<T, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let text = read_input(Some(path))?;
    let mut cfg: T =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.apply(cli.seed, cli.trials, cli.out.clone());
    Ok(cfg)
}

fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    out.with_file_name(name)
}

fn emit(out: Option<&Path>, output: &ExperimentOutput) -> Outcome {
    let summary = output.summary_json();
    match out {
        Some(path) => {
            fs::write(path, &output.csv).with_context(|| format!("writing {}", path.display()))?;
            let sp = summary_path(path);
            fs::write(&sp, format!("{summary}\n")).with_context(|| format!("writing {}", sp.display()))?;
            println!("{summary}");
        }
        None => {
            io::stdout().write_all(output.csv.as_bytes()).context("writing CSV")?;
            eprintln!("{summary}");
        }
    }
    if output.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(output.violations.clone()))
    }
}

fn experiment<T, F>(cli: &Cli, run: F) -> Outcome
where
    T: serde::de::DeserializeOwned + Overrides,
    F: FnOnce(&T) -> growdp::Result<ExperimentOutput>,
{
    let cfg: T = load(cli)?;
    let output = run(&cfg)?;
    emit(cfg.out(), &output)
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum ComposeInput {
    List(Vec<f64>),
    Object { events: Vec<f64>, delta: Option<f64> },
}

fn compose(cli: &Cli, flag_delta: f64) -> Outcome {
    let text = read_input(cli.config.as_deref())?;
    let input: ComposeInput =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("expected a JSON list of epsilons: {e}")))?;
    let (events, delta) = match input {
        ComposeInput::List(e) => (e, flag_delta),
        ComposeInput::Object { events, delta } => (events, delta.unwrap_or(flag_delta)),
    };
    let report = compose_report(&events, delta)?;
    println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
    Ok(())
}

fn dp_audit(cli: &Cli, target: Option<Target>, samples: Option<u64>) -> Outcome {
    let mut cfg: AuditExperiment = match (&cli.config, target) {
        (Some(_), _) => load(cli)?,
        (None, Some(t)) => AuditExperiment {
            target: match t {
                Target::Laplace => AuditTarget::Laplace,
                Target::LaplaceHalved => AuditTarget::LaplaceHalved,
                Target::Atg => AuditTarget::Atg,
            },
            eps: 0.5,
            samples: 1_000_000,
            bins: 20,
            seed: cli.seed.unwrap_or(0),
            trials: 1,
            out: cli.out.clone(),
        },
        (None, None) => return Err(Failure::Config("give --config or --target".into())),
    };
    if let Some(s) = samples {
        cfg.samples = s;
    }
    let (report, violations) = run_audit(&cfg)?;
    if let Some(path) = cfg.out.as_deref() {
        fs::write(path, audit_csv(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations))
    }
}

fn validate(cli: &Cli) -> Outcome {
    let checks = validate_all(cli.seed.unwrap_or(0))?;
    let mut failed = Vec::new();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed.push(c.name.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(failed))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::RunPmwg => experiment::<PmwgExperiment, _>(&cli, run_pmwg),
        Command::RunScheduler => experiment::<SchedulerExperiment, _>(&cli, run_scheduler),
        Command::RunImprover => experiment::<ImproverExperiment, _>(&cli, run_improver_experiment),
        Command::RunSparse => experiment::<SparseExperiment, _>(&cli, run_sparse),
        Command::RunErmg => experiment::<ErmgExperiment, _>(&cli, run_ermg_experiment),
        Command::Compose { delta } => compose(&cli, *delta),
        Command::DpAudit { target, samples } => dp_audit(&cli, *target, *samples),
        Command::Validate => validate(&cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(list)) => {
            for v in &list {
                eprintln!("invariant violation: {v}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
