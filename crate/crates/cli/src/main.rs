mod commands;
mod config;
mod manifest;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use navmap_core::captioner::SystemVariant;
use navmap_core::Split;

use config::{ConfigError, Metric, RunConfig};

#[derive(Parser)]
#[command(name = "navmap", version, about = "Semantic-map navigation instructions: data, training, evaluation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// -v info, -vv debug
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenes and paths → episodes.jsonl plus map PNGs under <run_dir>/dataset.
    BuildDataset {
        #[arg(long)]
        scenes: Option<usize>,
        /// Meters per pixel.
        #[arg(long)]
        resolution: Option<f64>,
        /// Pixels kept around the path.
        #[arg(long)]
        mask_radius: Option<f64>,
        /// Also render per-point view images.
        #[arg(long)]
        panoramas: bool,
        #[arg(long, requires = "paths_file")]
        scenes_dir: Option<PathBuf>,
        #[arg(long, requires = "scenes_dir")]
        paths_file: Option<PathBuf>,
    },
    /// Train one system variant.
    Train {
        #[arg(long)]
        variant: Option<SystemVariant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Decode instructions for evaluation splits.
    Generate {
        #[arg(long)]
        variant: Option<SystemVariant>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        splits: Vec<Split>,
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score generations, test every pair of systems, print the summary table.
    Evaluate {
        #[arg(long, num_args = 1..)]
        generations: Vec<PathBuf>,
        #[arg(long)]
        human: Option<PathBuf>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long)]
        imported_scores: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Pairwise permutation tests over a per-example score CSV.
    Significance {
        scores: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        resamples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the human-evaluation service.
    Serve {
        #[arg(long)]
        addr: Option<SocketAddr>,
        #[arg(long, value_delimiter = ',')]
        evaluators: Vec<String>,
    },
    /// build-dataset, then train and generate every configured variant, then evaluate.
    Run,
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(d) = &cli.run_dir {
        cfg.run_dir = d.clone();
    }
    match &cli.command {
        Command::BuildDataset { scenes, resolution, mask_radius, panoramas, scenes_dir, paths_file } => {
            let d = &mut cfg.dataset;
            d.scenes = scenes.unwrap_or(d.scenes);
            d.episode.resolution = resolution.unwrap_or(d.episode.resolution);
            d.episode.mask_radius = mask_radius.unwrap_or(d.episode.mask_radius);
            d.episode.panoramas |= panoramas;
            if scenes_dir.is_some() {
                d.scenes_dir = scenes_dir.clone();
                d.paths_file = paths_file.clone();
            }
        }
        Command::Train { variant, epochs, learning_rate, batch_size } => {
            if let Some(v) = variant {
                cfg.variants = vec![*v];
            }
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.learning_rate = learning_rate.unwrap_or(cfg.train.learning_rate);
            cfg.train.batch_size = batch_size.unwrap_or(cfg.train.batch_size);
        }
        Command::Generate { variant, splits, beam_width, .. } => {
            if let Some(v) = variant {
                cfg.variants = vec![*v];
            }
            if !splits.is_empty() {
                cfg.eval_splits = splits.clone();
            }
            cfg.decode.beam_width = beam_width.unwrap_or(cfg.decode.beam_width);
        }
        Command::Evaluate { human, metric, imported_scores, baseline, .. } => {
            let e = &mut cfg.evaluate;
            e.metric = metric.unwrap_or(e.metric);
            if human.is_some() {
                e.human_scores = human.clone();
            }
            if imported_scores.is_some() {
                e.imported_scores = imported_scores.clone();
            }
            if baseline.is_some() {
                e.baseline = baseline.clone();
            }
        }
        Command::Significance { resamples, .. } => {
            cfg.evaluate.permutation.resamples = resamples.unwrap_or(cfg.evaluate.permutation.resamples);
        }
        Command::Serve { addr, evaluators } => {
            cfg.serve.addr = addr.unwrap_or(cfg.serve.addr);
            if !evaluators.is_empty() {
                cfg.serve.evaluators = evaluators.clone();
            }
        }
        Command::Run => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(cli)?;
    if let Command::Significance { scores, split, out, .. } = &cli.command {
        let m = commands::significance(scores, split.as_deref(), &cfg.evaluate.permutation)?;
        print!("{}", commands::render_matrix(&m));
        if let Some(out) = out {
            std::fs::write(out, serde_json::to_string_pretty(&m)? + "\n")?;
        }
        return Ok(());
    }
    cfg.validate()?;
    let variant = cfg.variants[0];
    match &cli.command {
        Command::BuildDataset { .. } => print!("{}", commands::build_dataset(&cfg)?.render_table()),
        Command::Train { .. } => {
            commands::train(&cfg, variant)?;
        }
        Command::Generate { checkpoint, out, .. } => {
            commands::generate(&cfg, variant, checkpoint.as_deref(), &cfg.eval_splits, out.as_deref())?;
        }
        Command::Evaluate { generations, out_dir, .. } => {
            commands::evaluate(&cfg, generations, out_dir.as_deref())?;
        }
        Command::Serve { .. } => commands::serve(&cfg)?,
        Command::Run => {
            commands::run_all(&cfg)?;
        }
        Command::Significance { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
