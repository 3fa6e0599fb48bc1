use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relprobe::pipeline::selftest::run_selftest;
use relprobe::pipeline::{Pipeline, RunConfig, Stage};
use relprobe::Error;

/// Semantic-relation probing and SAE patching pipeline.
#[derive(Debug, Parser)]
#[command(name = "relprobe", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Quiet: log to run.log only.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the relation dataset and its derived prompt sets.
    Dataset,
    /// Train a probe per layer and stream.
    Probe,
    /// Depth profiles with bootstrap intervals.
    Depth,
    /// Cosine-similarity geometry of word embeddings.
    Geometry,
    /// Argument-order reversal gap.
    Reverse,
    /// Choose k per relation and layer from SAE-latent probes.
    Sweep,
    /// Sufficiency (injection) and necessity (ablation) patching.
    Patch,
    /// Prompt-template robustness.
    Robustness,
    /// Collect summary tables.
    Report,
    /// Run stages in order (all enabled stages unless --stage is given).
    Run {
        /// Stage to run; repeat to run several.
        #[arg(long = "stage", value_name = "STAGE")]
        stages: Vec<Stage>,
    },
    /// End-to-end run on generated data; exits 2 if an invariant fails.
    Selftest,
}

fn config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let cfg = config(cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let single = |stage| -> Result<ExitCode, Error> {
        let mut p = Pipeline::new(cfg.clone())?;
        if !cli.quiet {
            p = p.verbose();
        }
        p.run(stage)?;
        Ok(ExitCode::SUCCESS)
    };
    match &cli.command {
        Command::Dataset => single(Stage::Dataset),
        Command::Probe => single(Stage::Probe),
        Command::Depth => single(Stage::Depth),
        Command::Geometry => single(Stage::Geometry),
        Command::Reverse => single(Stage::Reverse),
        Command::Sweep => single(Stage::Sweep),
        Command::Patch => single(Stage::Patch),
        Command::Robustness => single(Stage::Robustness),
        Command::Report => single(Stage::Report),
        Command::Run { stages } => {
            let mut p = Pipeline::new(cfg.clone())?;
            if !cli.quiet {
                p = p.verbose();
            }
            if stages.is_empty() {
                p.run_all()?;
            } else {
                for s in stages {
                    p.run(*s)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("relprobe-selftest"));
            let report = run_selftest(&out, cfg.seed, !cli.quiet)?;
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status}  {:<32} {}", c.name, c.detail);
            }
            println!("selftest finished in {:.1}s, outputs in {}", report.elapsed.as_secs_f64(), out.display());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
