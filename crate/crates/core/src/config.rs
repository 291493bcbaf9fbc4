//! Run configuration: one JSON document describes a whole run.
//!
//! ```json
//! {
//!   "data": { "kind": "synthetic", "length": 2000, "noise_ratio": 0.5 },
//!   "ae1": { "window": 32, "channels": 16, "code_dim": 8 },
//!   "ae2": { "window": 32, "channels": 32, "code_dim": 6 },
//!   "dialogue": { "epochs": 150, "batches": 10, "lambda": 1.0 },
//!   "regimes": { "k": 4, "profile_len": 24 },
//!   "strategy": { "horizon": 4, "cost": 0.0 },
//!   "seed": 7
//! }
//! ```
//!
//! Every section is optional. `strategy.horizon` also sets how far the
//! target is shifted forward when the series are loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ae::AeConfig;
use crate::dataio::{CsvSource, PlantedPreset};
use crate::dialogue::DialogueConfig;
use crate::regimes::RegimesConfig;
use crate::strategy::StrategyConfig;
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(PlantedPreset),
    Csv(CsvSource),
}

impl DataSource {
    pub fn context_count(&self) -> usize {
        match self {
            DataSource::Synthetic(p) => p.contexts,
            DataSource::Csv(c) => c.contexts.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub ae1: AeConfig,
    pub ae2: AeConfig,
    pub dialogue: DialogueConfig,
    pub regimes: RegimesConfig,
    pub strategy: StrategyConfig,
    pub stride: usize,
    /// Fraction of the series used for training.
    pub split: f64,
    /// Indices into the context list for the two conversing autoencoders.
    pub contexts: [usize; 2],
    /// Also write checkpoints every this many conversation epochs; 0 keeps
    /// only the final ones.
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(PlantedPreset::default()),
            ae1: AeConfig::first(DEFAULT_WINDOW),
            ae2: AeConfig::second(DEFAULT_WINDOW),
            dialogue: DialogueConfig::default(),
            regimes: RegimesConfig::default(),
            strategy: StrategyConfig::default(),
            stride: 1,
            split: 0.8,
            contexts: [0, 1],
            checkpoint_every: 0,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn window(&self) -> usize {
        self.ae1.window
    }

    pub fn horizon(&self) -> usize {
        self.strategy.horizon
    }

    /// Dialogue settings with the master seed applied.
    pub fn dialogue_config(&self) -> DialogueConfig {
        DialogueConfig {
            seed: self.seed,
            ..self.dialogue.clone()
        }
    }

    /// The preset with this run's horizon applied.
    pub fn synthetic_preset(&self, preset: &PlantedPreset) -> PlantedPreset {
        PlantedPreset {
            horizon: self.horizon(),
            ..preset.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        AeConfig::validate_pair(&self.ae1, &self.ae2)?;
        self.dialogue.validate("dialogue")?;
        self.regimes.validate("regimes", self.window())?;
        self.strategy.validate("strategy")?;
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::config("split", format!("must lie in (0, 1), got {}", self.split)));
        }
        let n = self.data.context_count();
        if self.contexts.iter().any(|c| *c >= n) {
            return Err(Error::config(
                "contexts",
                format!("indices {:?} exceed the {n} available contexts", self.contexts),
            ));
        }
        match &self.data {
            DataSource::Synthetic(p) => {
                if p.contexts < 2 {
                    return Err(Error::config("data.contexts", "at least two contexts are needed"));
                }
                self.synthetic_preset(p).build().validate().map_err(|e| match e {
                    Error::Config { field, reason } => {
                        let field = field.strip_prefix("synthetic.").unwrap_or(&field);
                        Error::config(format!("data.{field}"), reason)
                    }
                    other => other,
                })?;
            }
            DataSource::Csv(c) => {
                if c.contexts.len() < 2 {
                    return Err(Error::config("data.contexts", "at least two context columns are needed"));
                }
                for (field, path) in [("data.path", Some(&c.path)), ("data.context_path", c.context_path.as_ref())] {
                    if let Some(p) = path {
                        if !p.is_file() {
                            return Err(Error::config(field, format!("{} does not exist", p.display())));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
