use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pepper_core::rng::derive_seed;
use pepper_harness::analyze::analyze;
use pepper_harness::config::{parse_mode, ExperimentConfig};
use pepper_harness::matrix::{run_matrix, CellFilter};
use pepper_harness::plot::emit_plots;
use pepper_harness::pretrain;

const MODEL_DIR: &str = "model";

#[derive(Parser)]
#[command(name = "pepper", version, about = "Preference-learning experiments in volatile gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `section.key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides `matrix.master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `io.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the world model and ensemble on random-policy data.
    Pretrain(Common),
    /// Run the experiment matrix (pretraining first if no model is saved).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<pepper_core::PreferenceMode>,
        #[arg(long, value_parser = ["0", "25", "50", "75", "100"])]
        volatility: Option<String>,
        /// Worker threads for matrix cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge per-run metrics into analysis tables.
    Analyze(Common),
    /// Render SVG plots from the analysis tables.
    Plot(Common),
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply_env(std::env::vars())?;
    if let Some(seed) = common.seed {
        config.matrix.master_seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn pretrain_and_save(config: &ExperimentConfig) -> anyhow::Result<pretrain::Pretrained> {
    let dir = config.out_dir.join(MODEL_DIR);
    let p = pretrain::pretrain(config, derive_seed(config.matrix.master_seed, u64::MAX))?;
    pretrain::save(&dir, &p)?;
    std::fs::write(dir.join("config.snapshot"), config.dump())?;
    eprintln!(
        "pretrained on {} steps: log-evidence {:.3}, elbo {:.3}, {} EM iterations -> {}",
        p.report.n_steps,
        p.report.log_evidence,
        p.report.elbo,
        p.report.iterations,
        dir.display()
    );
    Ok(p)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Pretrain(common) => {
            pretrain_and_save(&load_config(&common)?)?;
            Ok(true)
        }
        Command::Run {
            common,
            mode,
            volatility,
            jobs,
        } => {
            let config = load_config(&common)?;
            let model_dir = config.out_dir.join(MODEL_DIR);
            let pretrained = if model_dir.join(pretrain::MODEL_FILE).exists() {
                pretrain::load(&model_dir)?
            } else {
                pretrain_and_save(&config)?
            };
            if pretrained.model.dims() != config.model_dims() {
                anyhow::bail!("saved model in {} does not match the configured dimensions", model_dir.display());
            }
            let filter = CellFilter {
                mode,
                volatility: volatility.map(|v| v.parse()).transpose().context("volatility")?,
            };
            let outcome = run_matrix(&config, &pretrained, &config.out_dir, &filter, jobs)?;
            eprintln!(
                "{} cells run, {} already complete, {} failed",
                outcome.ran.len(),
                outcome.skipped.len(),
                outcome.failed.len()
            );
            for (cell, msg) in &outcome.failed {
                eprintln!("  {}: {msg}", cell.id());
            }
            if !outcome.ran.is_empty() || !outcome.skipped.is_empty() {
                analyze(&config.out_dir)?;
                let report = emit_plots(&config.out_dir)?;
                for m in report.missing {
                    eprintln!("no {m}; plot skipped");
                }
            }
            Ok(outcome.failed.is_empty())
        }
        Command::Analyze(common) => {
            let config = load_config(&common)?;
            let summary = analyze(&config.out_dir)?;
            println!("{}", summary.header.join(","));
            for row in summary.rows {
                println!("{}", row.join(","));
            }
            Ok(true)
        }
        Command::Plot(common) => {
            let config = load_config(&common)?;
            let report = emit_plots(&config.out_dir)?;
            for p in &report.written {
                println!("{}", p.display());
            }
            for m in &report.missing {
                eprintln!("missing {m}");
            }
            Ok(report.missing.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
