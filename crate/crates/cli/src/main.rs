//! `psrrr`: pathway association with multivariate traits from the command line.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use config::{RunConfig, Stage};
use error::CliError;

#[derive(Parser)]
#[command(name = "psrrr", version, about = "Pathways sparse reduced-rank regression")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set fit.gamma=0.7`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PSRRR_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; each stage writes to a subdirectory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rerun stages even when their outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic data set with a planted pathway.
    Simulate,
    /// Filter SNPs on call rate, HWE and MAF.
    Qc,
    /// Map SNPs to genes and genes to pathways.
    Map,
    /// Slopes, two-group ANCOVA filter, residualisation and validation.
    Phenotype,
    /// Tune pathway weights against null selection bias.
    Tune,
    /// One rank-1 fit on the full data.
    Fit,
    /// Rank pathways by selection frequency over subsamples.
    Rank,
    /// Rank SNPs and genes within the selected pathways.
    Snprank,
    /// Permutation test for target genes near the top of the ranking.
    Enrich,
    /// qc, map, phenotype, fit, rank, snprank, then enrich when targets exist.
    Pipeline,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Simulate => vec![Stage::Simulate],
            Command::Qc => vec![Stage::Qc],
            Command::Map => vec![Stage::Map],
            Command::Phenotype => vec![Stage::Phenotype],
            Command::Tune => vec![Stage::Tune],
            Command::Fit => vec![Stage::Fit],
            Command::Rank => vec![Stage::Rank],
            Command::Snprank => vec![Stage::Snprank],
            Command::Enrich => vec![Stage::Enrich],
            Command::Pipeline => vec![
                Stage::Qc,
                Stage::Map,
                Stage::Phenotype,
                Stage::Fit,
                Stage::Rank,
                Stage::Snprank,
            ],
            Command::ShowConfig => vec![],
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run_stage(cfg: &RunConfig, stage: Stage, force: bool) -> Result<(), CliError> {
    use commands::*;
    match stage {
        Stage::Simulate => cmd_simulate(cfg, force),
        Stage::Qc => cmd_qc(cfg, force),
        Stage::Map => cmd_map(cfg, force),
        Stage::Phenotype => cmd_phenotype(cfg, force),
        Stage::Tune => cmd_tune(cfg, force),
        Stage::Fit => cmd_fit(cfg, force),
        Stage::Rank => cmd_rank(cfg, force),
        Stage::Snprank => cmd_snprank(cfg, force),
        Stage::Enrich => cmd_enrich(cfg, force),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if let Command::ShowConfig = cli.command {
        let text = toml::to_string(&cfg).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        print!("{text}");
        return Ok(());
    }
    let mut stages = cli.command.stages();
    if let Command::Pipeline = cli.command {
        if cfg.targets().is_file() {
            stages.push(Stage::Enrich);
        } else {
            log::info!("no target gene file at {}; skipping enrichment", cfg.targets().display());
        }
    }
    let errors = cfg.validate(&stages);
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(vec![format!("cannot start {} workers: {e}", cfg.workers)]))?;
    pool.install(|| stages.iter().try_for_each(|&s| run_stage(&cfg, s, cli.force)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_target(false)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
