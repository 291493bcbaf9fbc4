//! Command-line surface. Each subcommand reads one run configuration and
//! writes its artifacts below the output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{DataSource, RunConfig};
use crate::dataio::write_csv;
use crate::dialogue::{AeId, Dialogue};
use crate::nn::gradcheck;
use crate::pipeline::{self, Dataset};
use crate::regimes::PatternLibrary;
use crate::{Error, Result};

pub const OUTPUT_DIR_ENV: &str = "MUTUAL_AE_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mutual-ae", version, about = "Mutually regularized autoencoders for time-series regimes")]
pub struct Cli {
    /// Run configuration (JSON). Defaults describe a synthetic quickstart.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Conversation epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a conversing pair and write checkpoints and histories.
    Train {
        /// Also train the separate baseline from the same pretrained state.
        #[arg(long)]
        baseline: bool,
    },
    /// Build pattern libraries from trained checkpoints.
    Library {
        /// Directory holding the checkpoints; default `<output>/checkpoints`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Trade held-out data with pattern libraries.
    Backtest {
        /// Library files; default every library under `<output>/library`.
        #[arg(long = "library")]
        libraries: Vec<PathBuf>,
    },
    /// Train and trade every pair of contexts.
    Sweep {
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Write the configured synthetic dataset as CSV.
    Synth {
        /// Default `<output>/synthetic.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Cli {
    /// The configuration file with command-line overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.dialogue.epochs = epochs;
        }
        if let Some(lambda) = self.lambda {
            cfg.dialogue.lambda = lambda;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the parsed command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Command::Gradcheck { seeds } = cli.command {
        return cmd_gradcheck(seeds);
    }
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Train { baseline } => cmd_train(&cfg, *baseline),
        Command::Library { checkpoint } => cmd_library(&cfg, checkpoint.as_deref()),
        Command::Backtest { libraries } => cmd_backtest(&cfg, libraries),
        Command::Sweep { workers } => cmd_sweep(&cfg, *workers),
        Command::Synth { out } => cmd_synth(&cfg, out.as_deref()),
        Command::Gradcheck { .. } => unreachable!(),
    }
}

fn listed(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.sort();
    Ok(files)
}

fn conversing_sets(cfg: &RunConfig, data: &Dataset) -> Result<[crate::dataio::WindowSet; 2]> {
    let [a, b] = cfg.contexts;
    Ok([pipeline::windows(cfg, &data.pairs[a])?, pipeline::windows(cfg, &data.pairs[b])?])
}

pub fn cmd_train(cfg: &RunConfig, baseline: bool) -> Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let data = pipeline::load_data(cfg)?;
    let [s1, s2] = conversing_sets(cfg, &data)?;
    let ckpt = out.join("checkpoints");
    let every = cfg.checkpoint_every;
    let trained = pipeline::train(cfg, &s1, &s2, baseline, |d: &Dialogue| {
        let e = d.dialogue_epochs_completed();
        if every > 0 && e.is_multiple_of(every) && !d.is_finished() {
            pipeline::write_checkpoints(&ckpt.join(format!("epoch_{:04}", d.epochs_completed())), d)?;
        }
        Ok(())
    })?;
    pipeline::write_checkpoints(&ckpt, &trained.mutual)?;
    let mut runs = vec![("mutual", &trained.mutual)];
    if let Some(b) = &trained.baseline {
        runs.push(("separate", b));
    }
    pipeline::write_history(&out.join("history.csv"), &runs)?;
    pipeline::write_agreement(&out.join("agreement.csv"), &runs)?;
    pipeline::write_training_charts(out, &runs)?;
    std::fs::write(out.join("run_config.json"), cfg.to_json()? + "\n")?;
    let mut files = listed(&ckpt)?;
    files.extend(
        ["history.csv", "agreement.csv", "history.svg", "agreement.svg", "run_config.json"]
            .iter()
            .map(|f| out.join(f)),
    );
    Ok(files)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cmd_library(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Vec<PathBuf>> {
    let dir = checkpoint.map_or_else(|| cfg.output_dir.join("checkpoints"), Path::to_path_buf);
    if !dir.is_dir() {
        return Err(Error::config("checkpoint", format!("{} is not a directory", dir.display())));
    }
    let aes = pipeline::read_autoencoders(&dir)?;
    let build_epoch = pipeline::read_dictionary(&dir, crate::translator::Direction::OneToTwo, cfg)
        .map(|d| d.stamp())
        .unwrap_or(0);
    let data = pipeline::load_data(cfg)?;
    let sets = conversing_sets(cfg, &data)?;
    let lib_dir = cfg.output_dir.join("library");
    let mut libs = Vec::new();
    for (k, id) in [AeId::First, AeId::Second].into_iter().enumerate() {
        let pair = &data.pairs[cfg.contexts[k]];
        libs.push((sanitize(&pair.context_name), pipeline::build_library(cfg, &aes[id.index()], pair, &sets[k], build_epoch)?));
    }
    libs.iter().map(|(tag, lib)| pipeline::write_library(&lib_dir, tag, lib)).collect()
}

pub fn cmd_backtest(cfg: &RunConfig, libraries: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let paths = if libraries.is_empty() {
        let dir = cfg.output_dir.join("library");
        if !dir.is_dir() {
            return Err(Error::config("library", format!("{} does not exist; run `library` first", dir.display())));
        }
        listed(&dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect()
    } else {
        libraries.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::config("library", "no library files found"));
    }
    let data = pipeline::load_data(cfg)?;
    let out = cfg.output_dir.join("backtest");
    let mut files = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::config("library", format!("cannot read {}: {e}", path.display())))?;
        let lib = PatternLibrary::from_json(&text)?;
        let pair = data
            .pairs
            .iter()
            .find(|p| p.context_name == lib.meta.context_name)
            .ok_or_else(|| Error::config("library", format!("context '{}' is not in the data", lib.meta.context_name)))?;
        let set = pipeline::windows(cfg, pair)?;
        let result = pipeline::backtest_held_out(cfg, pair, &set, &lib)?;
        let tag = sanitize(&pair.context_name);
        pipeline::write_backtest(&out, &tag, &result)?;
        for ext in ["csv", "json", "svg"] {
            files.push(out.join(format!("backtest_{tag}.{ext}")));
        }
    }
    Ok(files)
}

pub fn cmd_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<PathBuf>> {
    let data = pipeline::load_data(cfg)?;
    let entries = pipeline::pair_sweep(cfg, &data, workers)?;
    let out = cfg.output_dir.join("sweep");
    pipeline::write_sweep(&out, &entries)?;
    Ok(["sweep.csv", "sweep.json", "sweep.svg"].iter().map(|f| out.join(f)).collect())
}

pub fn cmd_gradcheck(seeds: usize) -> Result<Vec<PathBuf>> {
    let results = gradcheck::run_suite(seeds.max(1), None);
    for r in &results {
        println!(
            "{:<9} {} max relative error {:.3e} over {} seeds",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.max_error,
            r.seeds
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(Vec::new())
    } else {
        Err(Error::Data(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn cmd_synth(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    if !matches!(cfg.data, DataSource::Synthetic(_)) {
        return Err(Error::config("data.kind", "synth needs a synthetic data source"));
    }
    let data = pipeline::load_data(cfg)?;
    let syn = data.synthetic.expect("synthetic source");
    let path = out.map_or_else(|| cfg.output_dir.join("synthetic.csv"), Path::to_path_buf);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut columns: Vec<(&str, &[f64])> = vec![(&syn.spec.target_name, &syn.prices)];
    for (c, spec) in syn.spec.contexts.iter().enumerate() {
        columns.push((&spec.name, &syn.contexts[c]));
    }
    write_csv(&path, &syn.dates, &columns)?;

    let truth_path = path.with_extension("truth.csv");
    let regimes: Vec<f64> = syn.truth.regimes.iter().map(|r| *r as f64).collect();
    let clean_names: Vec<String> = syn.spec.contexts.iter().map(|c| format!("{}_clean", c.name)).collect();
    let mut truth: Vec<(&str, &[f64])> = vec![("regime", &regimes)];
    for (name, clean) in clean_names.iter().zip(&syn.truth.clean_contexts) {
        truth.push((name, clean));
    }
    write_csv(&truth_path, &syn.dates, &truth)?;
    Ok(vec![path, truth_path])
}
