//! Positions from library distances and an out-of-sample backtest.
//!
//! Only raw context values can be matched against a library out of sample:
//! a window that has not been seen in training has no reconstruction yet.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataio::SeriesPair;
use crate::regimes::PatternLibrary;
use crate::{Error, Result};

/// Relative closeness to the up class, `(1/d_up) / (1/d_up + 1/d_down)`.
///
/// Written as `d_down / (d_up + d_down)` so that a single exact match maps
/// to 0 or 1 instead of dividing by zero. Two exact matches give 0.5.
pub fn theta_from_distances(d_up: f64, d_down: f64) -> f64 {
    let total = d_up + d_down;
    if total == 0.0 {
        log::warn!("window matches both classes exactly; holding a flat position");
        return 0.5;
    }
    d_down / total
}

/// Exposure in `[-1, 1]`; `theta = 0.5` is flat.
pub fn exposure(theta: f64) -> f64 {
    2.0 * theta - 1.0
}

/// Position for a raw context window whose last `profile_len` values are
/// compared with the library.
pub fn position(raw_window: &[f64], library: &PatternLibrary) -> Result<f64> {
    let p = library.profile_len;
    if raw_window.len() < p {
        return Err(Error::SegmentTooShort {
            len: raw_window.len(),
            needed: p,
        });
    }
    let x = library.normalize(&raw_window[raw_window.len() - p..]);
    let (d_up, d_down) = library.class_distances(&x)?;
    Ok(theta_from_distances(d_up, d_down))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Steps between rebalances, and the span of each realized return.
    pub horizon: usize,
    /// Charged on every unit of exposure change.
    pub cost: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            cost: 0.0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config(format!("{field}.horizon"), "must be at least 1"));
        }
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return Err(Error::config(format!("{field}.cost"), "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    /// Series index of the window's last step, where the position is taken.
    pub index: usize,
    pub date: NaiveDate,
    pub theta: f64,
    pub exposure: f64,
    /// Target return over `[index, index + horizon]`.
    pub target_return: f64,
    pub pnl: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub periods: usize,
    pub total_return: f64,
    pub max_drawdown: f64,
    /// Share of periods with nonzero exposure whose P/L was positive.
    pub hit_rate: f64,
    pub mean_exposure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub context_name: String,
    pub target_name: String,
    pub horizon: usize,
    pub periods: Vec<Period>,
    pub summary: Summary,
}

impl BacktestResult {
    pub fn cumulative(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.cumulative).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "index", "theta", "exposure", "target_return", "pnl", "cumulative"])?;
        for p in &self.periods {
            w.write_record([
                p.date.to_string(),
                p.index.to_string(),
                format!("{:?}", p.theta),
                format!("{:?}", p.exposure),
                format!("{:?}", p.target_return),
                format!("{:?}", p.pnl),
                format!("{:?}", p.cumulative),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &serde_json::json!({
            "context": self.context_name,
            "target": self.target_name,
            "horizon": self.horizon,
            "summary": self.summary,
        }))?;
        writeln!(f)?;
        Ok(())
    }
}

fn summarize(periods: &[Period]) -> Summary {
    let (mut peak, mut drawdown) = (0.0f64, 0.0f64);
    for p in periods {
        peak = peak.max(p.cumulative);
        drawdown = drawdown.max(peak - p.cumulative);
    }
    let active: Vec<&Period> = periods.iter().filter(|p| p.exposure != 0.0).collect();
    let hits = active.iter().filter(|p| p.pnl > 0.0).count();
    let n = periods.len().max(1) as f64;
    Summary {
        periods: periods.len(),
        total_return: periods.last().map_or(0.0, |p| p.cumulative),
        max_drawdown: drawdown,
        hit_rate: if active.is_empty() { 0.0 } else { hits as f64 / active.len() as f64 },
        mean_exposure: periods.iter().map(|p| p.exposure).sum::<f64>() / n,
    }
}

/// Trades `pair[start..]` with positions from `library`.
///
/// A position is opened at every `horizon`-th step once a full profile
/// window is available, and held for exactly one horizon, so periods never
/// overlap. P/L accumulates additively.
pub fn backtest(pair: &SeriesPair, start: usize, library: &PatternLibrary, config: &StrategyConfig) -> Result<BacktestResult> {
    pair.validate()?;
    config.validate("strategy")?;
    library.validate()?;
    let p = library.profile_len;
    let h = config.horizon;
    let len = pair.len().saturating_sub(start);
    if len < p + h {
        return Err(Error::SegmentTooShort { len, needed: p + h });
    }
    let mut periods = Vec::new();
    let mut cumulative = 0.0;
    let mut previous = 0.0;
    let mut t = start + p - 1;
    while t < pair.len() {
        let theta = position(&pair.context[t + 1 - p..=t], library)?;
        let e = exposure(theta);
        let r = pair.target[t];
        let pnl = e * r - config.cost * (e - previous).abs();
        cumulative += pnl;
        previous = e;
        periods.push(Period {
            index: t,
            date: pair.dates[t],
            theta,
            exposure: e,
            target_return: r,
            pnl,
            cumulative,
        });
        t += h;
    }
    let summary = summarize(&periods);
    Ok(BacktestResult {
        context_name: pair.context_name.clone(),
        target_name: pair.target_name.clone(),
        horizon: h,
        periods,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Normalization;
    use crate::regimes::{Class, LibraryMeta, Profile, SCHEMA_VERSION};

    pub(crate) fn library(up: Vec<f64>, down: Vec<f64>) -> PatternLibrary {
        let profile = |values: Vec<f64>, class| Profile {
            values,
            class,
            cluster: 0,
            members: 1,
        };
        PatternLibrary {
            schema_version: SCHEMA_VERSION,
            meta: LibraryMeta {
                context_name: "x".into(),
                target_name: "y".into(),
                horizon: 1,
                build_epoch: 0,
            },
            profile_len: up.len(),
            stats: Normalization {
                target_mean: 0.0,
                target_std: 1.0,
                context_mean: 0.0,
                context_std: 1.0,
            },
            up: vec![profile(up, Class::Up)],
            down: vec![profile(down, Class::Down)],
        }
    }

    fn pair(context: Vec<f64>, target: Vec<f64>) -> SeriesPair {
        let start = NaiveDate::from_ymd_opt(2001, 1, 5).unwrap();
        SeriesPair {
            dates: (0..context.len()).map(|i| start + chrono::Duration::weeks(i as i64)).collect(),
            target,
            context,
            target_name: "y".into(),
            context_name: "x".into(),
            horizon: 1,
        }
    }

    #[test]
    fn theta_hand_values() {
        assert_eq!(theta_from_distances(2.0, 2.0), 0.5);
        assert_eq!(theta_from_distances(1.0, 3.0), 0.75);
        assert_eq!(theta_from_distances(0.0, 1.0), 1.0);
        assert_eq!(theta_from_distances(0.0, 0.0), 0.5);
        assert!(theta_from_distances(1e-9, 1.0) > 0.999_999);
    }

    #[test]
    fn matching_window_goes_long() {
        let lib = library(vec![1.0, 1.0], vec![-1.0, -1.0]);
        assert_eq!(position(&[5.0, 1.0, 1.0], &lib).unwrap(), 1.0);
        assert_eq!(position(&[-1.0, -1.0], &lib).unwrap(), 0.0);
        assert!(position(&[0.0], &lib).is_err());
    }

    #[test]
    fn periods_do_not_overlap() {
        let n = 20;
        let context: Vec<f64> = (0..n).map(|i| if (i / 5) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let target: Vec<f64> = (0..n).map(|i| 0.01 * (i as f64 + 1.0)).collect();
        let lib = library(vec![1.0, 1.0], vec![-1.0, -1.0]);
        let cfg = StrategyConfig { horizon: 3, cost: 0.0 };
        let res = backtest(&pair(context, target), 2, &lib, &cfg).unwrap();
        let idx: Vec<usize> = res.periods.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![3, 6, 9, 12, 15, 18]);
        let sum: f64 = res.periods.iter().map(|p| p.pnl).sum();
        assert!((res.summary.total_return - sum).abs() < 1e-15);
    }

    #[test]
    fn flat_positions_earn_nothing() {
        let lib = library(vec![1.0, -1.0], vec![-1.0, 1.0]);
        let res = backtest(&pair(vec![0.0; 12], vec![0.05; 12]), 0, &lib, &StrategyConfig::default()).unwrap();
        assert!(res.periods.iter().all(|p| p.theta == 0.5 && p.pnl == 0.0));
        assert_eq!(res.summary.total_return, 0.0);
        assert_eq!(res.summary.hit_rate, 0.0);
    }

    #[test]
    fn costs_charge_exposure_changes() {
        let lib = library(vec![1.0], vec![-1.0]);
        let cfg = StrategyConfig { horizon: 1, cost: 0.001 };
        let res = backtest(&pair(vec![1.0, -1.0, -1.0], vec![0.0; 3]), 0, &lib, &cfg).unwrap();
        let pnl: Vec<f64> = res.periods.iter().map(|p| p.pnl).collect();
        assert_eq!(pnl, vec![-0.001, -0.002, 0.0]);
        assert!((res.summary.max_drawdown - 0.003).abs() < 1e-15);
    }

    #[test]
    fn short_segment_is_rejected() {
        let lib = library(vec![1.0; 4], vec![-1.0; 4]);
        let err = backtest(&pair(vec![0.0; 10], vec![0.0; 10]), 4, &lib, &StrategyConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SegmentTooShort { len: 6, needed: 8 }));
    }
}
