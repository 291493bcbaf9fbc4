//! Series ingestion and rolling windows.
//!
//! A [`SeriesPair`] aligns a target with one context variable. The target is
//! stored already shifted forward: `target[t]` is the return realized over
//! `[t, t + horizon]`, so a window ending at `t` pairs today's context with the
//! future move it precedes.

mod csv_io;
pub mod synthetic;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::{Error, Result};

pub use csv_io::{load_csv, load_csv_pair, write_csv, CsvSource};
pub use synthetic::{
    generate_synthetic, ContextSpec, GroundTruth, PlantedPreset, SyntheticData, SyntheticSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub dates: Vec<NaiveDate>,
    /// Forward `horizon`-step returns.
    pub target: Vec<f64>,
    pub context: Vec<f64>,
    pub target_name: String,
    pub context_name: String,
    pub horizon: usize,
}

impl SeriesPair {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.target.len() || self.context.len() != self.target.len() {
            return Err(Error::Data(format!(
                "misaligned series: {} dates, {} target, {} context values",
                self.dates.len(),
                self.target.len(),
                self.context.len()
            )));
        }
        if self
            .target
            .iter()
            .chain(&self.context)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Data("series contains non-finite values".into()));
        }
        Ok(())
    }

    /// Steps `range` of the series, keeping names and horizon.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SeriesPair {
        SeriesPair {
            dates: self.dates[range.clone()].to_vec(),
            target: self.target[range.clone()].to_vec(),
            context: self.context[range].to_vec(),
            target_name: self.target_name.clone(),
            context_name: self.context_name.clone(),
            horizon: self.horizon,
        }
    }
}

/// `prices[t + h] / prices[t] - 1` for every `t` with a full horizon. With
/// `h = 0` the column is taken to hold returns already and passes through.
pub fn forward_returns(prices: &[f64], horizon: usize) -> Vec<f64> {
    if horizon == 0 {
        return prices.to_vec();
    }
    prices
        .iter()
        .zip(prices.iter().skip(horizon))
        .map(|(now, later)| later / now - 1.0)
        .collect()
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub target_mean: f64,
    pub target_std: f64,
    pub context_mean: f64,
    pub context_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Normalization {
    /// Fits on steps `0..end` only.
    pub fn fit(pair: &SeriesPair, end: usize) -> Result<Self> {
        if end == 0 {
            return Err(Error::EmptyDataset);
        }
        let (target_mean, target_std) = mean_std(&pair.target[..end]);
        let (context_mean, context_std) = mean_std(&pair.context[..end]);
        let tiny = |mean: f64, std: f64| std <= 1e-12 * mean.abs().max(1.0);
        if tiny(target_mean, target_std) {
            return Err(Error::DegenerateColumn(pair.target_name.clone()));
        }
        if tiny(context_mean, context_std) {
            return Err(Error::DegenerateColumn(pair.context_name.clone()));
        }
        Ok(Self {
            target_mean,
            target_std,
            context_mean,
            context_std,
        })
    }

    pub fn target(&self, v: f64) -> f64 {
        (v - self.target_mean) / self.target_std
    }

    pub fn context(&self, v: f64) -> f64 {
        (v - self.context_mean) / self.context_std
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    pub fn denormalize_context(&self, z: f64) -> f64 {
        z * self.context_std + self.context_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// First series index covered.
    pub start: usize,
    /// Last series index covered (inclusive).
    pub end: usize,
    pub date: NaiveDate,
    /// `[W, 2]`: channel 0 target, channel 1 context, both normalized.
    pub tensor: Tensor,
}

/// Chronologically ordered windows split into a training prefix and a
/// held-out suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    /// `windows[..train_count]` are training windows.
    pub train_count: usize,
    /// Series index where the training segment ends (exclusive).
    pub split_index: usize,
    pub window: usize,
    pub stride: usize,
    pub horizon: usize,
    pub stats: Normalization,
}

impl WindowSet {
    pub fn train(&self) -> &[Window] {
        &self.windows[..self.train_count]
    }

    pub fn held_out(&self) -> &[Window] {
        &self.windows[self.train_count..]
    }

    pub fn train_tensors(&self) -> Vec<Tensor> {
        self.train().iter().map(|w| w.tensor.clone()).collect()
    }

    /// Tensors at the same positions built from alternative series values
    /// (e.g. noiseless ground truth), normalized with this set's statistics.
    pub fn tensors_for(&self, target: &[f64], context: &[f64], windows: &[Window]) -> Vec<Tensor> {
        windows
            .iter()
            .map(|w| window_tensor(target, context, w.start, self.window, &self.stats))
            .collect()
    }
}

fn window_tensor(
    target: &[f64],
    context: &[f64],
    start: usize,
    len: usize,
    stats: &Normalization,
) -> Tensor {
    let mut data = Vec::with_capacity(len * 2);
    for t in start..start + len {
        data.push(stats.target(target[t]));
        data.push(stats.context(context[t]));
    }
    Tensor::new(vec![len, 2], data).expect("finite series")
}

/// Rolling windows of length `window` every `stride` steps.
///
/// With `s = floor(len * split)`, training windows end before `s` and
/// held-out windows start at or after `s + horizon`, so no held-out window
/// overlaps the training segment extended by the target horizon.
/// Normalization is fitted on steps `0..s`.
pub fn make_windows(pair: &SeriesPair, window: usize, stride: usize, split: f64) -> Result<WindowSet> {
    pair.validate()?;
    if window == 0 || stride == 0 {
        return Err(Error::config("window", "window and stride must be positive"));
    }
    if !(split > 0.0 && split <= 1.0) {
        return Err(Error::config("split", format!("must lie in (0, 1], got {split}")));
    }
    if pair.len() < window {
        return Err(Error::SegmentTooShort {
            len: pair.len(),
            needed: window,
        });
    }
    let split_index = ((pair.len() as f64) * split).floor() as usize;
    if split_index < window {
        return Err(Error::config(
            "split",
            format!("training segment of {split_index} steps is shorter than one window"),
        ));
    }
    let stats = Normalization::fit(pair, split_index)?;
    let mut train = Vec::new();
    let mut held = Vec::new();
    let mut start = 0;
    while start + window <= pair.len() {
        let end = start + window - 1;
        let make = || Window {
            start,
            end,
            date: pair.dates[end],
            tensor: window_tensor(&pair.target, &pair.context, start, window, &stats),
        };
        if end < split_index {
            train.push(make());
        } else if start >= split_index + pair.horizon {
            held.push(make());
        }
        start += stride;
    }
    let train_count = train.len();
    train.extend(held);
    Ok(WindowSet {
        windows: train,
        train_count,
        split_index,
        window,
        stride,
        horizon: pair.horizon,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(len: usize, horizon: usize) -> SeriesPair {
        let start = NaiveDate::from_ymd_opt(2000, 1, 7).unwrap();
        SeriesPair {
            dates: (0..len).map(|i| start + chrono::Duration::weeks(i as i64)).collect(),
            target: (0..len).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect(),
            context: (0..len).map(|i| (i as f64 * 0.3).sin() * 2.0 + 1.0).collect(),
            target_name: "y".into(),
            context_name: "x".into(),
            horizon,
        }
    }

    #[test]
    fn forward_return_bookkeeping() {
        let prices = [100.0, 110.0, 99.0, 120.0];
        let r = forward_returns(&prices, 1);
        assert_eq!(r.len(), 3);
        assert!((r[0] - 0.1).abs() < 1e-15);
        assert!((r[1] - (99.0 / 110.0 - 1.0)).abs() < 1e-15);
        assert_eq!(forward_returns(&prices, 2).len(), 2);
        assert_eq!(forward_returns(&prices, 0), prices.to_vec());
    }

    #[test]
    fn window_count_stride_one() {
        let p = pair(100, 4);
        let set = make_windows(&p, 32, 1, 1.0).unwrap();
        assert_eq!(set.windows.len(), 100 - 32 + 1);
        assert_eq!(set.train_count, set.windows.len());
        let strided = make_windows(&p, 32, 5, 1.0).unwrap();
        assert_eq!(strided.windows.len(), (100 - 32) / 5 + 1);
    }

    #[test]
    fn train_segment_is_standardized() {
        let p = pair(300, 4);
        let set = make_windows(&p, 32, 1, 0.8).unwrap();
        let s = set.split_index;
        let z: Vec<f64> = p.context[..s].iter().map(|v| set.stats.context(*v)).collect();
        let (m, sd) = mean_std(&z);
        assert!(m.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
        let z: Vec<f64> = p.target[..s].iter().map(|v| set.stats.target(*v)).collect();
        let (m, sd) = mean_std(&z);
        assert!(m.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn held_out_windows_do_not_leak() {
        let p = pair(400, 4);
        let set = make_windows(&p, 32, 1, 0.8).unwrap();
        let last_train_end = set.train().iter().map(|w| w.end).max().unwrap();
        assert!(last_train_end < set.split_index);
        assert!(!set.held_out().is_empty());
        for w in set.held_out() {
            assert!(w.start > last_train_end + p.horizon);
            assert!(w.start >= set.split_index + p.horizon);
        }
        assert!(set.windows.windows(2).all(|w| w[0].end < w[1].end));
    }

    #[test]
    fn degenerate_column_rejected() {
        let mut p = pair(100, 1);
        p.context = vec![3.0; 100];
        assert!(matches!(
            make_windows(&p, 32, 1, 0.8),
            Err(Error::DegenerateColumn(name)) if name == "x"
        ));
    }

    #[test]
    fn too_short_rejected() {
        assert!(make_windows(&pair(20, 1), 32, 1, 0.8).is_err());
    }
}
