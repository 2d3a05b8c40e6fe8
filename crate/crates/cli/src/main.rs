//! `cadet`: synthesize data, train, evaluate cross-style transfer, ablate,
//! export latent factors and predict with a per-factor readout.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use cadet_core::data::{generate_synthetic, load_corpus, split_cross_style, write_corpus, SyntheticSpec};
use cadet_core::eval::{export_latents, predict_with_factors, run_ablation, run_transfer, Factor};
use cadet_core::train::{load_checkpoint, save_checkpoint, train};
use cadet_core::{Config, LossName, Style};

#[derive(Parser)]
#[command(name = "cadet", version, about = "Causally disentangled cross-style hate-speech classification")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Overrides the seed of the config or synthetic spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML config; the toy preset when omitted.
    #[arg(long, env = "CADET_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from the causal benchmark.
    Synth {
        /// JSON synthetic spec; the default benchmark when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Style of the train/val files; test.jsonl holds the other style.
        #[arg(long, default_value = "explicit", value_parser = parse_style)]
        source_style: Style,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        /// Directory receiving corpus.jsonl, truth.jsonl, spec.json and the
        /// train/val/test split.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint directory.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on one style and test on the other over several seeds.
    Transfer {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "explicit", value_parser = parse_style)]
        source_style: Style,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the full model with loss components switched off.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated loss names.
        #[arg(long, value_parser = parse_losses)]
        disable: LossList,
        #[arg(long, default_value = "explicit", value_parser = parse_style)]
        source_style: Style,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write inference-mode factor vectors as TSV, optionally with a 2-D plot.
    ExportLatents {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_factor)]
        factor: Factor,
        #[arg(long)]
        out: PathBuf,
        /// PNG of the first two principal components, coloured by label.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Print hate probability and style/target readout as JSON.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
    },
}

#[derive(Clone)]
struct LossList(Vec<LossName>);

fn parse_losses(s: &str) -> Result<LossList, String> {
    LossName::parse_list(s).map(LossList).map_err(|e| e.to_string())
}

fn parse_style(s: &str) -> Result<Style, String> {
    s.parse().map_err(|e: cadet_core::Error| e.to_string())
}

fn parse_factor(s: &str) -> Result<Factor, String> {
    s.parse().map_err(|e: cadet_core::Error| e.to_string())
}

fn load_config(arg: &ConfigArg, seed: Option<u64>) -> Result<Config> {
    let mut config = match &arg.config {
        Some(path) => Config::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => Config::toy(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, n, source_style, val_fraction, out } => {
            let mut spec = match spec {
                Some(path) => SyntheticSpec::load(&path)?,
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let synth = generate_synthetic(&spec, n)?;
            fs::create_dir_all(&out)?;
            write_corpus(&out.join("corpus.jsonl"), &synth.corpus)?;
            synth.write_sidecar(&out.join("truth.jsonl"))?;
            write_json(&out.join("spec.json"), &spec)?;
            let split = split_cross_style(&synth.corpus, source_style, val_fraction, spec.seed)?;
            write_corpus(&out.join("train.jsonl"), &split.train)?;
            write_corpus(&out.join("val.jsonl"), &split.val)?;
            write_corpus(&out.join("test.jsonl"), &split.test)?;
            log::info!("wrote {} records to {}", synth.corpus.len(), out.display());
        }
        Command::Train { config, train: train_path, val, out } => {
            let config = load_config(&config, cli.seed)?;
            let (train_set, val_set) = (load_corpus(&train_path)?, load_corpus(&val)?);
            let outcome = train(&config, &train_set, &val_set)?;
            save_checkpoint(
                &out,
                &outcome.model,
                Some(outcome.best_val_macro_f1),
                outcome.reports.len(),
                &outcome.history,
                &outcome.reports,
            )?;
            plot::loss_curves(&outcome.reports, &out.join("loss_curve.png"))?;
            println!(
                "{}",
                serde_json::json!({
                    "best_epoch": outcome.best_epoch,
                    "best_val_macro_f1": outcome.best_val_macro_f1,
                    "epochs_run": outcome.epochs_run,
                })
            );
        }
        Command::Transfer { config, corpus, source_style, runs, out } => {
            let config = load_config(&config, cli.seed)?;
            let report = run_transfer(&config, &load_corpus(&corpus)?, source_style, runs)?;
            write_json(&out, &report)?;
        }
        Command::Ablate { config, corpus, disable, source_style, runs, out } => {
            let config = load_config(&config, cli.seed)?;
            let report = run_ablation(&config, &load_corpus(&corpus)?, source_style, &disable.0, runs)?;
            write_json(&out, &report)?;
        }
        Command::ExportLatents { ckpt, corpus, factor, out, plot: plot_path } => {
            let (model, _) = load_checkpoint(&ckpt)?;
            let table = export_latents(&model, &load_corpus(&corpus)?, factor)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            table.write_tsv(&out)?;
            if let Some(path) = plot_path {
                plot::latent_scatter(&table.vectors, &table.labels, &path)?;
            }
        }
        Command::Predict { ckpt, text } => {
            let (model, _) = load_checkpoint(&ckpt)?;
            let readout = predict_with_factors(&model, &text)?;
            println!("{}", serde_json::to_string_pretty(&readout)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
