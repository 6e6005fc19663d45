//! Command-line front end for the `bdsde` laboratory.
//!
//! Every subcommand reads one plain-text `key = value` experiment config,
//! runs it through the library's experiment runner, and emits
//! comma-separated result records (header documented on
//! [`bdsde::CSV_HEADER`]). Records go to the `--out` file when one is
//! given (falling back to the config's own `out` key), otherwise to
//! stdout. Subcommands are typed: each accepts only the experiment kinds
//! it exists for, so a gradient config handed to `simulate` fails loudly
//! instead of running the wrong study.
//!
//! Exit codes: 0 on success, 1 when the run errored or a gated record
//! failed, 2 when the acceptance scoreboard finished without failures but
//! had to skip criteria (a starved path budget is not a green light).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bdsde::experiment::acceptance_records;
use bdsde::{
    run_acceptance, run_experiment, CriterionStatus, ExperimentConfig, ExperimentKind,
    ExperimentOutcome,
};

#[derive(Parser, Debug)]
#[command(
    name = "bdsde",
    version,
    about = "Numerical laboratory for backward doubly stochastic differential equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the coupled forward-backward system and estimate the field
    /// value u(t, x) (configs of kind `u-estimate`).
    Simulate(RunArgs),
    /// Run the gradient and Z estimators: derivative-free weights, the
    /// tangent recursion, and the Z profiles (kinds `grad-weights`,
    /// `grad-variational`, `z-profile`, `z-discrete`).
    Estimate(RunArgs),
    /// Compare the simulated field value against an independent field-
    /// equation solve (kind `oracle-compare`).
    Compare(RunArgs),
    /// Measure the Z jumps at the terminal's interior observation times
    /// (kind `jumps`).
    Jumps(RunArgs),
    /// Walk a refinement ladder and report the error per rung (kind
    /// `convergence`).
    Convergence(RunArgs),
    /// Run the acceptance scoreboard and print one line per criterion.
    Accept(AcceptArgs),
}

/// Flags shared by every config-driven subcommand.
#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (plain-text `key = value` file).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Override the config's RNG seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Write records here instead of the config's `out` destination.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Also write the per-path dump (forward state, Y, Z at every node)
    /// next to the results file, as `<out stem>.paths.csv`. Needs a file
    /// destination so the dump has somewhere to live.
    #[arg(long)]
    dump_paths: bool,
}

/// The scoreboard pins its own problems and seeds — that is what makes its
/// numbers comparable across machines — so it takes no seed and no dump
/// flag, only budget and output knobs.
#[derive(Args, Debug)]
struct AcceptArgs {
    /// Optional config (kind `acceptance`); defaults apply without one.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Scale every sampled criterion's path budget (1 = full desk scale;
    /// smaller is faster, and criteria starved below a sound sample size
    /// report SKIP instead of guessing).
    #[arg(long, value_name = "FACTOR")]
    path_scale: Option<f64>,

    /// Worker threads (default: one per core).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Write the scoreboard as result records here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => run_config_command("simulate", &args),
        Command::Estimate(args) => run_config_command("estimate", &args),
        Command::Compare(args) => run_config_command("compare", &args),
        Command::Jumps(args) => run_config_command("jumps", &args),
        Command::Convergence(args) => run_config_command("convergence", &args),
        Command::Accept(args) => run_accept(&args),
    }
}

/// The experiment kinds each subcommand exists for.
fn allowed_kinds(subcommand: &str) -> &'static [ExperimentKind] {
    match subcommand {
        "simulate" => &[ExperimentKind::UEstimate],
        "estimate" => &[
            ExperimentKind::GradWeights,
            ExperimentKind::GradVariational,
            ExperimentKind::ZProfile,
            ExperimentKind::ZDiscrete,
        ],
        "compare" => &[ExperimentKind::OracleCompare],
        "jumps" => &[ExperimentKind::Jumps],
        "convergence" => &[ExperimentKind::Convergence],
        _ => unreachable!("every config-driven subcommand is listed"),
    }
}

/// The subcommand a config of this kind belongs to, for error messages.
fn subcommand_for(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::UEstimate => "simulate",
        ExperimentKind::GradWeights
        | ExperimentKind::GradVariational
        | ExperimentKind::ZProfile
        | ExperimentKind::ZDiscrete => "estimate",
        ExperimentKind::OracleCompare => "compare",
        ExperimentKind::Jumps => "jumps",
        ExperimentKind::Convergence => "convergence",
        ExperimentKind::Acceptance => "accept",
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker thread pool")?;
    }
    Ok(())
}

fn run_config_command(subcommand: &str, args: &RunArgs) -> Result<ExitCode> {
    init_threads(args.threads)?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if !allowed_kinds(subcommand).contains(&cfg.kind) {
        bail!(
            "config kind `{}` belongs to the `{}` subcommand, not `{}`",
            cfg.kind.as_str(),
            subcommand_for(cfg.kind),
            subcommand
        );
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.display().to_string());
    }
    if args.dump_paths {
        cfg.dump_paths = true;
    }
    let destination = cfg.out.clone().map(PathBuf::from);
    // Fail before the run, not after it: a dump with nowhere to go is a
    // config error, and these runs can be long.
    if cfg.dump_paths && destination.is_none() {
        bail!(
            "--dump-paths needs a file destination (--out or the config's \
             `out`) so the dump has somewhere to live"
        );
    }
    let outcome = run_experiment(&cfg)?;
    write_outcome(&outcome, destination.as_deref())?;
    if !outcome.all_passed() {
        let failed = outcome
            .records
            .iter()
            .filter(|r| r.pass == Some(false))
            .count();
        eprintln!("{failed} gated record(s) failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_outcome(outcome: &ExperimentOutcome, destination: Option<&Path>) -> Result<()> {
    let csv = outcome.to_csv();
    match destination {
        Some(path) => {
            std::fs::write(path, &csv)
                .with_context(|| format!("writing records to {}", path.display()))?;
            println!("wrote {} record(s) to {}", outcome.records.len(), path.display());
            if let Some(dump) = &outcome.dump {
                let dump_path = dump_destination(path);
                std::fs::write(&dump_path, dump)
                    .with_context(|| format!("writing dump to {}", dump_path.display()))?;
                println!("wrote per-path dump to {}", dump_path.display());
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

/// `results.csv` → `results.paths.csv`; extensionless stems gain the same
/// suffix.
fn dump_destination(out: &Path) -> PathBuf {
    out.with_extension("paths.csv")
}

fn run_accept(args: &AcceptArgs) -> Result<ExitCode> {
    init_threads(args.threads)?;
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.kind != ExperimentKind::Acceptance {
                bail!(
                    "config kind `{}` belongs to the `{}` subcommand, not `accept`",
                    cfg.kind.as_str(),
                    subcommand_for(cfg.kind)
                );
            }
            cfg
        }
        None => ExperimentConfig::new(ExperimentKind::Acceptance),
    };
    if let Some(scale) = args.path_scale {
        if !(scale > 0.0) {
            bail!("--path-scale must be positive, got {scale}");
        }
        cfg.path_scale = scale;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.display().to_string());
    }

    let reports = run_acceptance(cfg.path_scale);
    for report in &reports {
        println!("{}", report.line());
    }
    let outcome = ExperimentOutcome {
        records: acceptance_records(&cfg, &reports),
        dump: None,
    };
    if let Some(path) = cfg.out.as_deref() {
        std::fs::write(path, outcome.to_csv())
            .with_context(|| format!("writing records to {path}"))?;
        println!("wrote {} record(s) to {path}", outcome.records.len());
    }

    let failed = reports
        .iter()
        .filter(|r| matches!(r.status, CriterionStatus::Fail))
        .count();
    let skipped = reports
        .iter()
        .filter(|r| matches!(r.status, CriterionStatus::Skipped(_)))
        .count();
    if failed > 0 {
        eprintln!("{failed} criterion(s) failed");
        return Ok(ExitCode::FAILURE);
    }
    if skipped > 0 {
        eprintln!("{skipped} criterion(s) skipped; not a full pass");
        return Ok(ExitCode::from(2));
    }
    println!("all {} criteria passed", reports.len());
    Ok(ExitCode::SUCCESS)
}
