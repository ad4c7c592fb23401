mod bench;
mod review;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use probsmith_core::pipeline::{verify, Pipeline, PipelineConfig, ProviderKind, Stage, StageSummary};
use probsmith_core::sandbox::{RuntimeMap, Sandbox, SandboxConfig};
use tracing_subscriber::EnvFilter;

/// Problems parked but the run completed.
const EXIT_PARKED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "probsmith", version, about = "Generate competitive-programming problems with trusted test suites")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Replay recorded transcripts from DIR instead of calling a model.
    #[arg(long, global = true, value_name = "DIR")]
    replay: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Concurrent sandbox guests; 0 means all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draft problems from the seed pool.
    Generate,
    /// Build generators and validators, then sample and validate inputs.
    SynthInputs,
    /// Produce trusted outputs by stress-driven voting.
    SynthOutputs,
    /// Set time and memory limits and release.
    Calibrate,
    /// Every stage in order.
    Run,
    /// Re-derive every release invariant from disk.
    Verify {
        /// Also re-run the recorded fastest solver over every case.
        #[arg(long)]
        deep: bool,
    },
    /// Judge submissions against released suites.
    Evaluate(bench::EvaluateArgs),
    /// Leaderboard, pass@k and per-tag tables from results.
    Report(bench::ReportArgs),
    /// Contamination-aware intervals and error bounds.
    Trust(bench::TrustArgs),
    /// Serve the human review API.
    ReviewServe(review::ReviewServeArgs),
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli.config.as_deref().context("this command needs --config")?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(dir) = &cli.replay {
        cfg.provider.kind = ProviderKind::Scripted;
        cfg.provider.transcripts = Some(dir.clone());
        cfg.provider.record = false;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.check()?;
    Ok(cfg)
}

fn print_summary(s: &StageSummary) {
    println!("{}: processed {}, kept {}, parked {}", s.stage, s.processed, s.kept, s.parked);
}

fn exit_for(parked: usize) -> ExitCode {
    if parked > 0 {
        ExitCode::from(EXIT_PARKED)
    } else {
        ExitCode::SUCCESS
    }
}

/// A sandbox for commands that run guests outside a pipeline.
pub(crate) fn sandbox_for(cli_config: Option<&Path>, workers: Option<usize>) -> Result<Sandbox> {
    let (runtimes, mut cfg) = match cli_config {
        Some(p) => {
            let c = PipelineConfig::load(p)?;
            (c.runtimes, SandboxConfig { workers: c.workers, ..c.sandbox })
        }
        None => (RuntimeMap::default(), SandboxConfig::default()),
    };
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok(Sandbox::new(runtimes, cfg)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stage = match &cli.command {
        Command::Generate => Some(Stage::Generate),
        Command::SynthInputs => Some(Stage::SynthInputs),
        Command::SynthOutputs => Some(Stage::SynthOutputs),
        Command::Calibrate => Some(Stage::Calibrate),
        _ => None,
    };
    if let Some(stage) = stage {
        let p = Pipeline::new(load_config(&cli)?)?;
        let s = p.run_stage(stage)?;
        print_summary(&s);
        return Ok(exit_for(s.parked));
    }
    match &cli.command {
        Command::Run => {
            let p = Pipeline::new(load_config(&cli)?)?;
            let report = p.run()?;
            for s in &report.stages {
                print_summary(s);
            }
            let c = &report.manifest.counts;
            println!("released {} ({} degraded), parked {}", c.released, c.degraded, c.parked);
            println!("manifest: {}", p.out.manifest().display());
            Ok(exit_for(report.parked()))
        }
        Command::Verify { deep } => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => load_config(&cli)?.out_dir,
                (None, None) => anyhow::bail!("verify needs --out or --config"),
            };
            let sandbox = if *deep { Some(sandbox_for(cli.config.as_deref(), cli.workers)?) } else { None };
            let v = verify(&out, sandbox.as_ref())?;
            for f in &v.failures {
                println!("FAIL {f}");
            }
            println!(
                "verified {} problems, {} cases{}: {}",
                v.problems,
                v.cases,
                if v.deep { " (deep)" } else { "" },
                if v.ok() { "ok" } else { "failed" }
            );
            Ok(if v.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Evaluate(args) => bench::evaluate(args, cli.config.as_deref(), cli.workers),
        Command::Report(args) => bench::report(args),
        Command::Trust(args) => bench::trust(args),
        Command::ReviewServe(args) => review::serve(args),
        _ => unreachable!("stage commands handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
