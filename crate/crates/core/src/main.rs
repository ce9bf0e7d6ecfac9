use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polvis::config::PipelineConfig;
use polvis::pipeline::{self, Stage};

#[derive(Parser)]
#[command(name = "polvis", version, about = "Visibility and causal-effect analysis of legislators' posts")]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override a config value, e.g. `--set params.caliper=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the corpus.
    Ingest,
    /// Incivility and low-credibility labels.
    Label,
    /// Overperforming scores and author visibility.
    Visibility,
    /// Group comparisons and ECDF points.
    Describe,
    /// Mixed-effects regressions.
    Regress,
    /// Cross-fitted dragonnet training.
    #[command(name = "train-dragonnet")]
    TrainDragonnet,
    /// Deconfounded embeddings of held-out posts.
    Embed,
    /// Caliper matching and balance.
    Match,
    /// Subgroup effects with bootstrap intervals.
    Cate,
    /// Write a synthetic corpus with known effects.
    Simulate {
        /// Target directory; defaults to the directory of the posts file.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Every stage in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> polvis::Result<PipelineConfig> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut sets = cli.set.clone();
    if let Some(s) = cli.seed {
        sets.push(format!("params.seed={s}"));
    }
    let mut cfg = cfg.with_overrides(&sets)?;
    if let Some(o) = &cli.out_dir {
        cfg.paths.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> polvis::Result<()> {
    let cfg = load_config(cli)?;
    let stage = match &cli.command {
        Command::Simulate { dir } => {
            let s = pipeline::simulate(&cfg, dir.as_deref())?;
            println!("simulated {} posts, {} treated, tau {}", s.n_posts, s.n_treated, s.tau);
            return Ok(());
        }
        Command::Pipeline => {
            let m = pipeline::run_pipeline(&cfg)?;
            println!("pipeline complete: {} stages, config {}", m.stages.len(), m.config_hash);
            return Ok(());
        }
        Command::Ingest => Stage::Ingest,
        Command::Label => Stage::Label,
        Command::Visibility => Stage::Visibility,
        Command::Describe => Stage::Describe,
        Command::Regress => Stage::Regress,
        Command::TrainDragonnet => Stage::TrainDragonnet,
        Command::Embed => Stage::Embed,
        Command::Match => Stage::Match,
        Command::Cate => Stage::Cate,
    };
    let m = pipeline::run_stage(&cfg, stage)?;
    println!("{stage}: {} outputs", m.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

