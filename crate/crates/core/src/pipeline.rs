//! End-to-end steps shared by the command line and the examples: load
//! series, train a conversing pair, build libraries and trade the held-out
//! segments.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ae::Autoencoder;
use crate::config::{DataSource, RunConfig};
use crate::dataio::{self, generate_synthetic, make_windows, SeriesPair, SyntheticData, WindowSet};
use crate::dialogue::{AeId, Dialogue};
use crate::nn::Rng;
use crate::regimes::{self, DenoisedWindow, LibraryMeta, PatternLibrary};
use crate::report::{write_line_chart, Series};
use crate::strategy::{backtest, BacktestResult};
use crate::translator::{Direction, TranslatorDict};
use crate::{Error, Result};

/// Every context series of a run, each paired with the target.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<SeriesPair>,
    /// Present for synthetic runs.
    pub synthetic: Option<SyntheticData>,
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic(preset) => {
            let data = generate_synthetic(&cfg.synthetic_preset(preset).build())?;
            Ok(Dataset {
                pairs: data.pairs.clone(),
                synthetic: Some(data),
            })
        }
        DataSource::Csv(src) => {
            let pairs = src
                .contexts
                .iter()
                .map(|ctx| match &src.context_path {
                    Some(cp) => dataio::load_csv_pair(&src.path, &src.target, cp, ctx, cfg.horizon(), cfg.window()),
                    None => dataio::load_csv(&src.path, &src.target, ctx, cfg.horizon(), cfg.window()),
                })
                .collect::<Result<_>>()?;
            Ok(Dataset { pairs, synthetic: None })
        }
    }
}

pub fn windows(cfg: &RunConfig, pair: &SeriesPair) -> Result<WindowSet> {
    make_windows(pair, cfg.window(), cfg.stride, cfg.split)
}

/// First series index that neither training windows nor their targets touch.
pub fn held_out_start(set: &WindowSet) -> usize {
    set.split_index + set.horizon
}

/// A fresh pair of autoencoders conversing over the training windows.
pub fn new_dialogue(cfg: &RunConfig, first: &WindowSet, second: &WindowSet) -> Result<Dialogue> {
    let rng = Rng::new(cfg.seed);
    let ae1 = Autoencoder::new(cfg.ae1.clone(), &mut rng.derive("ae1"))?;
    let ae2 = Autoencoder::new(cfg.ae2.clone(), &mut rng.derive("ae2"))?;
    Dialogue::new(ae1, first.train_tensors(), ae2, second.train_tensors(), cfg.dialogue_config())
}

pub struct Trained {
    pub mutual: Dialogue,
    /// The same pair trained from the same pretrained state without alignment.
    pub baseline: Option<Dialogue>,
}

/// Pretrains, optionally forks a separate-training baseline, then runs the
/// conversation. `after_epoch` sees the mutual run only.
pub fn train(
    cfg: &RunConfig,
    first: &WindowSet,
    second: &WindowSet,
    with_baseline: bool,
    after_epoch: impl FnMut(&Dialogue) -> Result<()>,
) -> Result<Trained> {
    let mut mutual = new_dialogue(cfg, first, second)?;
    mutual.pretrain()?;
    let baseline = if with_baseline {
        let mut sep = mutual.clone();
        sep.set_lambda(0.0)?;
        sep.run()?;
        Some(sep)
    } else {
        None
    };
    mutual.run_with(after_epoch)?;
    Ok(Trained { mutual, baseline })
}

pub const AE_FILES: [&str; 2] = ["ae1.ckpt", "ae2.ckpt"];
pub const DICT_FILES: [&str; 2] = ["dict_1to2.ckpt", "dict_2to1.ckpt"];

pub fn write_checkpoints(dir: &Path, d: &Dialogue) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (id, name) in [AeId::First, AeId::Second].into_iter().zip(AE_FILES) {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        d.ae(id).write_checkpoint(&mut w)?;
    }
    for (dir_, name) in [Direction::OneToTwo, Direction::TwoToOne].into_iter().zip(DICT_FILES) {
        if let Some(dict) = d.dict(dir_) {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            dict.write_checkpoint(&mut w)?;
        }
    }
    Ok(())
}

pub fn read_autoencoders(dir: &Path) -> Result<[Autoencoder; 2]> {
    let read = |name: &str| -> Result<Autoencoder> {
        let path = dir.join(name);
        let f = File::open(&path)
            .map_err(|e| Error::config("checkpoint", format!("cannot open {}: {e}", path.display())))?;
        Autoencoder::read_checkpoint(&mut BufReader::new(f))
    };
    Ok([read(AE_FILES[0])?, read(AE_FILES[1])?])
}

pub fn read_dictionary(dir: &Path, direction: Direction, cfg: &RunConfig) -> Result<TranslatorDict> {
    let name = DICT_FILES[match direction {
        Direction::OneToTwo => 0,
        Direction::TwoToOne => 1,
    }];
    let f = File::open(dir.join(name))?;
    TranslatorDict::read_checkpoint(&mut BufReader::new(f), &cfg.dialogue.translator)
}

/// Denoises the training windows of `set` with `ae` and clusters them.
pub fn build_library(
    cfg: &RunConfig,
    ae: &Autoencoder,
    pair: &SeriesPair,
    set: &WindowSet,
    build_epoch: usize,
) -> Result<PatternLibrary> {
    if ae.config().window != set.window {
        return Err(Error::config(
            "checkpoint",
            format!("autoencoder window {} does not match the data window {}", ae.config().window, set.window),
        ));
    }
    let denoised = regimes::denoise_windows(ae, set.train(), &set.stats)?;
    cluster(cfg, denoised, pair, set, build_epoch)
}

fn cluster(
    cfg: &RunConfig,
    denoised: Vec<DenoisedWindow>,
    pair: &SeriesPair,
    set: &WindowSet,
    build_epoch: usize,
) -> Result<PatternLibrary> {
    let meta = LibraryMeta {
        context_name: pair.context_name.clone(),
        target_name: pair.target_name.clone(),
        horizon: pair.horizon,
        build_epoch,
    };
    let mut rng = Rng::new(cfg.seed).derive(&format!("library:{}", pair.context_name));
    regimes::build_library(&denoised, &cfg.regimes, set.stats, meta, &mut rng)
}

/// Library built from the generator's noiseless contexts and expected
/// target returns instead of reconstructions.
pub fn oracle_library(cfg: &RunConfig, data: &SyntheticData, context: usize, set: &WindowSet) -> Result<PatternLibrary> {
    let truth = data.truth_pair(context);
    let denoised = set
        .train()
        .iter()
        .map(|w| DenoisedWindow {
            target: truth.target[w.end],
            context: truth.context[w.start..=w.end].iter().map(|v| set.stats.context(*v)).collect(),
        })
        .collect();
    cluster(cfg, denoised, &data.pairs[context], set, 0)
}

/// Trades the held-out segment of `pair`.
pub fn backtest_held_out(cfg: &RunConfig, pair: &SeriesPair, set: &WindowSet, library: &PatternLibrary) -> Result<BacktestResult> {
    if library.meta.context_name != pair.context_name {
        log::warn!(
            "library built for '{}' applied to '{}'",
            library.meta.context_name,
            pair.context_name
        );
    }
    backtest(pair, held_out_start(set), library, &cfg.strategy)
}

pub fn write_history(path: &Path, runs: &[(&str, &Dialogue)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "epoch", "batch", "speaker", "listener", "reconstruction", "alignment", "total"])?;
    for (name, d) in runs {
        for r in d.history() {
            w.write_record([
                name.to_string(),
                r.epoch.to_string(),
                r.batch.to_string(),
                r.speaker.to_string(),
                r.listener.to_string(),
                format!("{:?}", r.reconstruction),
                format!("{:?}", r.alignment),
                format!("{:?}", r.total),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_agreement(path: &Path, runs: &[(&str, &Dialogue)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "epoch", "agreement_level"])?;
    for (name, d) in runs {
        for a in d.agreement() {
            w.write_record([name.to_string(), a.epoch.to_string(), format!("{:?}", a.level)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean listener reconstruction loss per conversation epoch.
pub fn epoch_reconstruction(d: &Dialogue) -> Vec<f64> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in d.history() {
        match out.last_mut() {
            Some((e, sum, n)) if *e == r.epoch => {
                *sum += r.reconstruction;
                *n += 1;
            }
            _ => out.push((r.epoch, r.reconstruction, 1)),
        }
    }
    out.into_iter().map(|(_, s, n)| s / n as f64).collect()
}

pub fn write_training_charts(dir: &Path, runs: &[(&str, &Dialogue)]) -> Result<()> {
    let loss: Vec<Series> = runs
        .iter()
        .map(|(name, d)| Series::new(*name, epoch_reconstruction(d)))
        .collect();
    write_line_chart(&dir.join("history.svg"), "listener reconstruction loss per epoch", &loss)?;
    let al: Vec<Series> = runs
        .iter()
        .map(|(name, d)| Series::new(*name, d.agreement().iter().map(|a| a.level).collect()))
        .collect();
    write_line_chart(&dir.join("agreement.svg"), "agreement level", &al)
}

pub fn write_library(dir: &Path, tag: &str, lib: &PatternLibrary) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("library_{tag}.json"));
    std::fs::write(&path, lib.to_json()? + "\n")?;
    for (class, profiles) in [("up", &lib.up), ("down", &lib.down)] {
        let series: Vec<Series> = profiles
            .iter()
            .map(|p| Series::new(format!("{class} {} (n={})", p.cluster, p.members), p.values.clone()))
            .collect();
        write_line_chart(
            &dir.join(format!("profiles_{tag}_{class}.svg")),
            &format!("{} profiles, {class} class", lib.meta.context_name),
            &series,
        )?;
    }
    Ok(path)
}

pub fn write_backtest(dir: &Path, tag: &str, result: &BacktestResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    result.write_csv(&dir.join(format!("backtest_{tag}.csv")))?;
    result.write_summary(&dir.join(format!("backtest_{tag}.json")))?;
    write_line_chart(
        &dir.join(format!("backtest_{tag}.svg")),
        &format!("cumulative P/L, {} on {}", result.context_name, result.target_name),
        &[Series::new("P/L", result.cumulative())],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub first: String,
    pub second: String,
    /// Both sides carry the same context values.
    pub duplicate: bool,
    pub agreement_level: f64,
    /// Held-out backtests of the first and second context.
    pub results: [BacktestResult; 2],
}

impl SweepEntry {
    pub fn total_return(&self) -> f64 {
        self.results.iter().map(|r| r.summary.total_return).sum()
    }
}

/// Context index pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn context_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn sweep_pair(cfg: &RunConfig, data: &Dataset, sets: &[WindowSet], i: usize, j: usize) -> Result<SweepEntry> {
    let duplicate = data.pairs[i].context == data.pairs[j].context;
    if duplicate {
        log::warn!(
            "contexts '{}' and '{}' are identical",
            data.pairs[i].context_name,
            data.pairs[j].context_name
        );
    }
    let trained = train(cfg, &sets[i], &sets[j], false, |_| Ok(()))?;
    let d = &trained.mutual;
    let epoch = d.epochs_completed();
    let mut results = Vec::with_capacity(2);
    for (id, k) in [(AeId::First, i), (AeId::Second, j)] {
        let lib = build_library(cfg, d.ae(id), &data.pairs[k], &sets[k], epoch)?;
        results.push(backtest_held_out(cfg, &data.pairs[k], &sets[k], &lib)?);
    }
    let results: [BacktestResult; 2] = results.try_into().expect("two results");
    Ok(SweepEntry {
        first: data.pairs[i].context_name.clone(),
        second: data.pairs[j].context_name.clone(),
        duplicate,
        agreement_level: d.agreement().last().map_or(0.0, |a| a.level),
        results,
    })
}

/// Trains one conversing pair per context pair and trades both sides.
/// Pairs run on up to `workers` threads; results keep pair order.
pub fn pair_sweep(cfg: &RunConfig, data: &Dataset, workers: usize) -> Result<Vec<SweepEntry>> {
    if data.pairs.len() < 2 {
        return Err(Error::config("data.contexts", "a sweep needs at least two contexts"));
    }
    let sets: Vec<WindowSet> = data.pairs.iter().map(|p| windows(cfg, p)).collect::<Result<_>>()?;
    let jobs = context_pairs(data.pairs.len());
    let slots: Vec<Mutex<Option<Result<SweepEntry>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, j)) = jobs.get(k) else { break };
                let r = sweep_pair(cfg, data, &sets, i, j);
                *slots[k].lock().expect("unpoisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("unpoisoned").expect("every job ran"))
        .collect()
}

pub fn write_sweep(dir: &Path, entries: &[SweepEntry]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record([
        "first",
        "second",
        "duplicate",
        "agreement_level",
        "total_return_first",
        "total_return_second",
        "max_drawdown_first",
        "max_drawdown_second",
    ])?;
    for e in entries {
        w.write_record([
            e.first.clone(),
            e.second.clone(),
            e.duplicate.to_string(),
            format!("{:?}", e.agreement_level),
            format!("{:?}", e.results[0].summary.total_return),
            format!("{:?}", e.results[1].summary.total_return),
            format!("{:?}", e.results[0].summary.max_drawdown),
            format!("{:?}", e.results[1].summary.max_drawdown),
        ])?;
    }
    w.flush()?;
    let summaries: Vec<_> = entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "first": e.first,
                "second": e.second,
                "duplicate": e.duplicate,
                "agreement_level": e.agreement_level,
                "summaries": [e.results[0].summary, e.results[1].summary],
            })
        })
        .collect();
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&summaries)? + "\n")?;
    let series: Vec<Series> = entries
        .iter()
        .flat_map(|e| {
            e.results
                .iter()
                .map(move |r| Series::new(format!("{}|{}: {}", e.first, e.second, r.context_name), r.cumulative()))
        })
        .collect();
    write_line_chart(&dir.join("sweep.svg"), "held-out cumulative P/L per context pair", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_enumerate_combinations() {
        assert_eq!(context_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(context_pairs(5).len(), 10);
        assert!(context_pairs(1).is_empty());
    }
}
