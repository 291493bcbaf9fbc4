//! Planted-regime generator.
//!
//! A hidden regime path visits regimes for a whole number of template
//! repetitions at a time. Each context variable emits its per-regime template
//! plus Gaussian observation noise. Per-step target returns have sign
//! `drift[regime] * B` where `B = +1` with probability `(1 + rho) / 2`, so
//! `corr(sign(r), drift) = rho`, and magnitude `volatility * |N(0,1)|`.
//! Prices compound the step returns; the target of each [`SeriesPair`] is the
//! forward `horizon`-step return of that price path, exactly as a CSV with the
//! same prices would produce.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{forward_returns, SeriesPair};
use crate::nn::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub name: String,
    /// One length-P template per regime.
    pub templates: Vec<Vec<f64>>,
    /// Observation noise standard deviation.
    pub noise: f64,
    /// Declared lower bound on the pairwise RMS distance between templates.
    pub min_gap: f64,
}

impl ContextSpec {
    pub fn template_rms(&self) -> f64 {
        let all: Vec<f64> = self.templates.iter().flatten().copied().collect();
        (all.iter().map(|v| v * v).sum::<f64>() / all.len() as f64).sqrt()
    }

    pub fn min_pairwise_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, a) in self.templates.iter().enumerate() {
            for b in &self.templates[i + 1..] {
                let d = (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
                    / a.len() as f64)
                    .sqrt();
                gap = gap.min(d);
            }
        }
        gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Length of each generated [`SeriesPair`].
    pub length: usize,
    pub horizon: usize,
    /// Target drift sign per regime (`+1` up, `-1` down).
    pub drift: Vec<f64>,
    pub rho: f64,
    pub volatility: f64,
    /// Inclusive range of template repetitions per regime visit.
    pub dwell: (usize, usize),
    pub contexts: Vec<ContextSpec>,
    pub start: NaiveDate,
    pub seed: u64,
    #[serde(default = "default_target_name")]
    pub target_name: String,
}

fn default_target_name() -> String {
    "target".into()
}

impl SyntheticSpec {
    pub fn regimes(&self) -> usize {
        self.drift.len()
    }

    pub fn template_len(&self) -> usize {
        self.contexts[0].templates[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, reason: String| Err(Error::config(format!("synthetic.{f}"), reason));
        if self.regimes() < 2 {
            return bad("drift", "need at least two regimes".into());
        }
        if self.drift.iter().any(|d| *d != 1.0 && *d != -1.0) {
            return bad("drift", "entries must be +1 or -1".into());
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad("rho", format!("must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.volatility > 0.0 && self.volatility < 0.5) {
            return bad("volatility", "must lie in (0, 0.5)".into());
        }
        if self.dwell.0 == 0 || self.dwell.0 > self.dwell.1 {
            return bad("dwell", format!("invalid range {:?}", self.dwell));
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.length == 0 {
            return bad("length", "must be positive".into());
        }
        if self.contexts.is_empty() {
            return bad("contexts", "need at least one context".into());
        }
        let p = self.template_len();
        for (i, c) in self.contexts.iter().enumerate() {
            if c.templates.len() != self.regimes() {
                return bad(
                    &format!("contexts[{i}].templates"),
                    format!("{} templates for {} regimes", c.templates.len(), self.regimes()),
                );
            }
            if p == 0 || c.templates.iter().any(|t| t.len() != p) {
                return bad(&format!("contexts[{i}].templates"), "templates must share one positive length".into());
            }
            if !(c.noise >= 0.0 && c.noise.is_finite()) {
                return bad(&format!("contexts[{i}].noise"), "must be non-negative".into());
            }
            if c.min_pairwise_gap() < c.min_gap {
                return bad(
                    &format!("contexts[{i}].min_gap"),
                    format!(
                        "templates are only {:.4} apart, declared {:.4}",
                        c.min_pairwise_gap(),
                        c.min_gap
                    ),
                );
            }
        }
        Ok(())
    }
}

/// Compact, config-friendly description of a planted suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPreset {
    pub length: usize,
    pub horizon: usize,
    pub regimes: usize,
    pub contexts: usize,
    /// Indices of contexts that carry no regime information.
    pub uninformative: Vec<usize>,
    pub template_len: usize,
    /// Observation noise as a multiple of the template RMS.
    pub noise_ratio: f64,
    pub rho: f64,
    pub volatility: f64,
    pub dwell: (usize, usize),
    pub seed: u64,
}

impl Default for PlantedPreset {
    fn default() -> Self {
        Self {
            length: 2000,
            horizon: 4,
            regimes: 2,
            contexts: 2,
            uninformative: Vec::new(),
            template_len: 24,
            noise_ratio: 0.5,
            rho: 0.6,
            volatility: 0.02,
            dwell: (1, 3),
            seed: 0,
        }
    }
}

impl PlantedPreset {
    /// Regime `r` of context `c`: level `0.8 * (2r/(R-1) - 1)` plus a wave
    /// whose form depends on `c` and whose phase depends on `r`.
    pub fn build(&self) -> SyntheticSpec {
        let p = self.template_len.max(1);
        let r_count = self.regimes.max(2);
        let contexts = (0..self.contexts)
            .map(|c| {
                let informative = !self.uninformative.contains(&c);
                let templates: Vec<Vec<f64>> = (0..r_count)
                    .map(|r| {
                        let (level, phase) = if informative {
                            (
                                0.8 * (2.0 * r as f64 / (r_count - 1) as f64 - 1.0),
                                std::f64::consts::PI * r as f64 / r_count as f64,
                            )
                        } else {
                            (0.0, 0.0)
                        };
                        (0..p)
                            .map(|j| {
                                let x = 2.0 * std::f64::consts::PI * j as f64 / p as f64 + phase;
                                level + 0.6 * wave(c, x)
                            })
                            .collect()
                    })
                    .collect();
                let mut spec = ContextSpec {
                    name: format!("x{}", c + 1),
                    templates,
                    noise: 0.0,
                    min_gap: if informative { 0.5 } else { 0.0 },
                };
                spec.noise = self.noise_ratio * spec.template_rms();
                spec
            })
            .collect();
        SyntheticSpec {
            length: self.length,
            horizon: self.horizon,
            drift: (0..r_count).map(|r| if r % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            rho: self.rho,
            volatility: self.volatility,
            dwell: self.dwell,
            contexts,
            start: NaiveDate::from_ymd_opt(1985, 1, 4).expect("valid date"),
            seed: self.seed,
            target_name: default_target_name(),
        }
    }
}

fn wave(context: usize, x: f64) -> f64 {
    match context % 3 {
        0 => x.sin(),
        1 => (2.0 * x).cos() * 0.7 + x.sin() * 0.3,
        _ => {
            // triangle wave in [-1, 1]
            let u = (x / std::f64::consts::TAU).rem_euclid(1.0);
            4.0 * (u - 0.5).abs() - 1.0
        }
    }
}

/// Hidden structure retained for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Regime at every raw step (`length + horizon` steps).
    pub regimes: Vec<usize>,
    /// Noiseless context values per context, raw steps.
    pub clean_contexts: Vec<Vec<f64>>,
    /// Expected forward target return per sample, `length` steps.
    pub expected_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    /// Raw steps: `length + horizon` entries each.
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
    pub contexts: Vec<Vec<f64>>,
    /// One pair per context, `length` samples each.
    pub pairs: Vec<SeriesPair>,
    pub truth: GroundTruth,
}

impl SyntheticData {
    /// Noiseless counterpart of `pairs[context]`: clean context, expected target.
    pub fn truth_pair(&self, context: usize) -> SeriesPair {
        let n = self.spec.length;
        SeriesPair {
            context: self.truth.clean_contexts[context][..n].to_vec(),
            target: self.truth.expected_target.clone(),
            ..self.pairs[context].clone()
        }
    }

    /// Regime active at the last step of every sample.
    pub fn labels(&self) -> &[usize] {
        &self.truth.regimes[..self.spec.length]
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let raw = spec.length + spec.horizon;
    let p = spec.template_len();
    let r_count = spec.regimes();

    let mut regime_rng = root.derive("regimes");
    let mut regimes = Vec::with_capacity(raw + p * spec.dwell.1);
    let mut phases = Vec::with_capacity(regimes.capacity());
    let mut current = regime_rng.index(r_count);
    while regimes.len() < raw {
        let reps = spec.dwell.0 + regime_rng.index(spec.dwell.1 - spec.dwell.0 + 1);
        for _ in 0..reps {
            for j in 0..p {
                regimes.push(current);
                phases.push(j);
            }
        }
        let next = regime_rng.index(r_count - 1);
        current = if next >= current { next + 1 } else { next };
    }
    regimes.truncate(raw);
    phases.truncate(raw);

    let mut clean_contexts = Vec::with_capacity(spec.contexts.len());
    let mut contexts = Vec::with_capacity(spec.contexts.len());
    for c in &spec.contexts {
        let clean: Vec<f64> = regimes
            .iter()
            .zip(&phases)
            .map(|(r, j)| c.templates[*r][*j])
            .collect();
        let mut noise_rng = root.derive(&format!("context:{}", c.name));
        let noisy: Vec<f64> = clean.iter().map(|v| v + c.noise * noise_rng.gaussian()).collect();
        clean_contexts.push(clean);
        contexts.push(noisy);
    }

    let mut ret_rng = root.derive("returns");
    let p_agree = (1.0 + spec.rho) / 2.0;
    let mean_abs = spec.volatility * (2.0 / std::f64::consts::PI).sqrt();
    let mut prices = Vec::with_capacity(raw);
    let mut expected_step = Vec::with_capacity(raw);
    prices.push(100.0);
    for t in 0..raw - 1 {
        let drift = spec.drift[regimes[t]];
        let agree = ret_rng.uniform() < p_agree;
        let magnitude = spec.volatility * ret_rng.gaussian().abs();
        let r = if agree { drift * magnitude } else { -drift * magnitude };
        prices.push(prices[t] * (1.0 + r));
        expected_step.push(drift * spec.rho * mean_abs);
    }
    let expected_target: Vec<f64> = (0..spec.length)
        .map(|t| {
            expected_step[t..t + spec.horizon]
                .iter()
                .map(|m| 1.0 + m)
                .product::<f64>()
                - 1.0
        })
        .collect();

    let dates: Vec<NaiveDate> = (0..raw)
        .map(|i| spec.start + chrono::Duration::weeks(i as i64))
        .collect();
    let target = forward_returns(&prices, spec.horizon);
    let pairs = spec
        .contexts
        .iter()
        .zip(&contexts)
        .map(|(c, values)| SeriesPair {
            dates: dates[..spec.length].to_vec(),
            target: target.clone(),
            context: values[..spec.length].to_vec(),
            target_name: spec.target_name.clone(),
            context_name: c.name.clone(),
            horizon: spec.horizon,
        })
        .collect();

    Ok(SyntheticData {
        spec: spec.clone(),
        dates,
        prices,
        contexts,
        pairs,
        truth: GroundTruth {
            regimes,
            clean_contexts,
            expected_target,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset(seed: u64) -> PlantedPreset {
        PlantedPreset {
            seed,
            ..PlantedPreset::default()
        }
    }

    #[test]
    fn noiseless_context_is_concatenated_templates() {
        let mut spec = preset(1).build();
        for c in &mut spec.contexts {
            c.noise = 0.0;
        }
        let data = generate_synthetic(&spec).unwrap();
        let p = spec.template_len();
        for (c, ctx) in spec.contexts.iter().enumerate() {
            assert_eq!(data.contexts[c], data.truth.clean_contexts[c]);
            // every block of the raw series is a whole template of its regime
            for (b, block) in data.contexts[c].chunks(p).enumerate() {
                let r = data.truth.regimes[b * p];
                assert_eq!(block, &ctx.templates[r][..block.len()]);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&preset(5).build()).unwrap();
        let b = generate_synthetic(&preset(5).build()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&preset(6).build()).unwrap();
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn sign_correlation_matches_rho() {
        let spec = PlantedPreset {
            horizon: 1,
            rho: 0.6,
            length: 2000,
            seed: 11,
            ..PlantedPreset::default()
        }
        .build();
        let data = generate_synthetic(&spec).unwrap();
        let a: Vec<f64> = data.pairs[0].target.iter().map(|y| y.signum()).collect();
        let b: Vec<f64> = data.labels().iter().map(|r| spec.drift[*r]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!((corr - 0.6).abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn lengths_and_alignment() {
        let data = generate_synthetic(&preset(2).build()).unwrap();
        assert_eq!(data.prices.len(), 2004);
        assert_eq!(data.pairs.len(), 2);
        for pair in &data.pairs {
            pair.validate().unwrap();
            assert_eq!(pair.len(), 2000);
        }
        assert_eq!(data.truth.expected_target.len(), 2000);
        let t = 100;
        assert!((data.pairs[0].target[t] - (data.prices[t + 4] / data.prices[t] - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn templates_declared_distinguishable() {
        let spec = preset(0).build();
        for c in &spec.contexts {
            assert!(c.min_pairwise_gap() >= c.min_gap);
        }
        let mut bad = spec.clone();
        bad.contexts[0].min_gap = 100.0;
        assert!(bad.validate().is_err());
        let flat = PlantedPreset {
            uninformative: vec![1],
            ..PlantedPreset::default()
        }
        .build();
        assert_eq!(flat.contexts[1].min_pairwise_gap(), 0.0);
        flat.validate().unwrap();
    }

    #[test]
    fn noise_scales_with_template_rms() {
        let spec = preset(0).build();
        for c in &spec.contexts {
            assert!((c.noise - 0.5 * c.template_rms()).abs() < 1e-15);
        }
    }
}
