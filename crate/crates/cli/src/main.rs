use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use facegen::corpus::{generate_synthetic_corpus, write_corpus, ExpressionLabel};
use facegen::eval::{evaluate, load_examples, train_linear};
use facegen::pipeline::{
    run_export, run_generate_with, run_stats, GenerateOptions, PipelineConfig, Split, MANIFEST_FILE,
};

#[derive(Parser)]
#[command(
    name = "facegen",
    version,
    about = "Generate labeled 3D facial-expression image datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full generation pipeline described by a TOML config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = one per CPU); overrides the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Seed for vertex sampling and the train/test split; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after writing this many new images; rerun to resume.
        #[arg(long)]
        max_new_images: Option<usize>,
    },
    /// Summarize a manifest and verify every image checksum.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Copy images into `<out>/<split>/<emotion>/` directories.
    Export {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and test the linear softmax baseline on a generated dataset.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic corpus and a matching config for trying the pipeline.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        identities: usize,
        #[arg(long, default_value_t = 1000)]
        vertices: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated categories such as `happiness_3,neutral`; defaults
        /// to the 13 standard categories.
        #[arg(long, value_delimiter = ',')]
        categories: Vec<ExpressionLabel>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            config,
            workers,
            seed,
            max_new_images,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let manifest = run_generate_with(&cfg, &GenerateOptions { max_new_images })?;
            let train = manifest
                .records
                .iter()
                .filter(|r| r.split == Split::Train)
                .count();
            println!(
                "wrote {} images ({train} train, {} test) to {}",
                manifest.records.len(),
                manifest.records.len() - train,
                cfg.output_dir.join(MANIFEST_FILE).display()
            );
        }
        Command::Stats { manifest } => {
            let stats = run_stats(&manifest)?;
            println!("{stats}");
            if !stats.is_ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Export { manifest, out } => {
            let summary = run_export(&manifest, &out)?;
            println!(
                "exported to {}: {} copied, {} unchanged",
                out.display(),
                summary.copied,
                summary.unchanged
            );
        }
        Command::Eval {
            manifest,
            epochs,
            lr,
            seed,
        } => {
            let train = load_examples(&manifest, Split::Train)?;
            let test = load_examples(&manifest, Split::Test)?;
            let model = train_linear(&train, epochs, lr, seed).context("training")?;
            println!("trained on {} examples for {epochs} epochs", train.len());
            println!(
                "{}",
                evaluate(&model, &test).context("evaluating the test split")?
            );
        }
        Command::Synth {
            out,
            identities,
            vertices,
            seed,
            categories,
        } => {
            let categories = if categories.is_empty() {
                ExpressionLabel::standard_categories()
            } else {
                categories
            };
            let corpus = generate_synthetic_corpus(seed, identities, vertices, &categories)?;
            let index = write_corpus(&corpus, out.join("corpus"))?;
            let mut cfg = PipelineConfig::new("corpus/index.csv", "dataset");
            cfg.samples = cfg.samples.min(vertices);
            cfg.seed = seed;
            let config_path = out.join("facegen.toml");
            std::fs::write(&config_path, cfg.to_toml())
                .with_context(|| format!("writing {}", config_path.display()))?;
            println!(
                "wrote {} faces to {} and config {}",
                corpus.faces().len(),
                index.display(),
                config_path.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
