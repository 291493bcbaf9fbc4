//! Pattern libraries: k-means profiles of denoised context windows, split by
//! the sign of the reconstructed forward target return.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ae::Autoencoder;
use crate::dataio::{Normalization, Window};
use crate::nn::Rng;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Up,
    Down,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Up => "up",
            Class::Down => "down",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after every assignment step.
    pub wcss: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iterations from k-means++ seeding. Stops when assignments settle,
/// when WCSS improves by less than `tolerance` (relative), or after
/// `max_iter` rounds. Emptied clusters are reseeded at the point farthest
/// from its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut Rng, max_iter: usize, tolerance: f64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::config("regimes.k", "must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::Data(format!("{} points for {k} clusters", points.len())));
    }
    let mut centroids = vec![points[rng.index(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut idx = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.index(points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut wcss = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut cost = 0.0;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            changed |= assignment[i] != c;
            assignment[i] = c;
            dists[i] = d;
            cost += d;
        }
        // reseed clusters that lost every member
        let mut counts = vec![0usize; k];
        for a in &assignment {
            counts[*a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|i| counts[assignment[*i]] > 1)
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(b.cmp(a)));
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    cost -= dists[i];
                    dists[i] = 0.0;
                    assignment[i] = c;
                    counts[c] = 1;
                    changed = true;
                }
            }
        }
        let previous = wcss.last().copied();
        wcss.push(cost);
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, a) in points.iter().zip(&assignment) {
            for (s, v) in sums[*a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
        if let Some(prev) = previous {
            if prev - cost <= tolerance * prev.max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    Ok(KMeans {
        centroids,
        assignment,
        wcss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Z-scored context values, oldest first.
    pub values: Vec<f64>,
    pub class: Class,
    pub cluster: usize,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub context_name: String,
    pub target_name: String,
    pub horizon: usize,
    /// Completed training epochs of the autoencoder that denoised the windows.
    pub build_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternLibrary {
    pub schema_version: u32,
    pub meta: LibraryMeta,
    pub profile_len: usize,
    pub stats: Normalization,
    pub up: Vec<Profile>,
    pub down: Vec<Profile>,
}

/// A reconstructed window reduced to what the library needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedWindow {
    /// Reconstructed forward return at the last step, in raw units.
    pub target: f64,
    /// Reconstructed context channel, z-scored.
    pub context: Vec<f64>,
}

pub fn denoise_windows(ae: &Autoencoder, windows: &[Window], stats: &Normalization) -> Result<Vec<DenoisedWindow>> {
    windows
        .iter()
        .map(|w| {
            let r = ae.reconstruct(&w.tensor)?;
            let last = r.shape()[0] - 1;
            Ok(DenoisedWindow {
                target: stats.denormalize_target(r.at(last, 0)),
                context: r.channel(1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimesConfig {
    /// Clusters per class.
    pub k: usize,
    pub profile_len: usize,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for RegimesConfig {
    fn default() -> Self {
        Self {
            k: 4,
            profile_len: 24,
            max_iter: 100,
            tolerance: 1e-8,
        }
    }
}

impl RegimesConfig {
    pub fn validate(&self, field: &str, window: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config(format!("{field}.k"), "must be at least 1"));
        }
        if self.profile_len == 0 || self.profile_len > window {
            return Err(Error::config(
                format!("{field}.profile_len"),
                format!("must lie in 1..={window}, got {}", self.profile_len),
            ));
        }
        Ok(())
    }
}

pub fn build_library(
    windows: &[DenoisedWindow],
    config: &RegimesConfig,
    stats: Normalization,
    meta: LibraryMeta,
    rng: &mut Rng,
) -> Result<PatternLibrary> {
    let p = config.profile_len;
    if let Some(w) = windows.iter().find(|w| w.context.len() < p) {
        return Err(Error::config(
            "regimes.profile_len",
            format!("{p} exceeds the window length {}", w.context.len()),
        ));
    }
    let tail = |w: &DenoisedWindow| w.context[w.context.len() - p..].to_vec();
    let up: Vec<Vec<f64>> = windows.iter().filter(|w| w.target > 0.0).map(tail).collect();
    let down: Vec<Vec<f64>> = windows.iter().filter(|w| w.target < 0.0).map(tail).collect();
    let profiles = |points: &[Vec<f64>], class: Class| -> Result<Vec<Profile>> {
        if points.len() < config.k.max(1) {
            return Err(Error::ClassTooSmall {
                class: match class {
                    Class::Up => "up",
                    Class::Down => "down",
                },
                members: points.len(),
                k: config.k,
            });
        }
        let mut class_rng = rng.derive(&class.to_string());
        let km = kmeans(points, config.k, &mut class_rng, config.max_iter, config.tolerance)?;
        Ok(km
            .centroids
            .into_iter()
            .enumerate()
            .map(|(c, values)| Profile {
                values,
                class,
                cluster: c,
                members: km.assignment.iter().filter(|a| **a == c).count(),
            })
            .collect())
    };
    let up = profiles(&up, Class::Up)?;
    let down = profiles(&down, Class::Down)?;
    Ok(PatternLibrary {
        schema_version: SCHEMA_VERSION,
        meta,
        profile_len: p,
        stats,
        up,
        down,
    })
}

/// Mean squared difference of two equal-length sequences.
pub fn distance(x: &[f64], profile: &[f64]) -> Result<f64> {
    if x.len() != profile.len() {
        return Err(Error::Shape(format!(
            "window of {} steps against a profile of {}",
            x.len(),
            profile.len()
        )));
    }
    Ok(sq_dist(x, profile) / x.len() as f64)
}

impl PatternLibrary {
    pub fn profiles(&self) -> impl Iterator<Item = &Profile> {
        self.up.iter().chain(&self.down)
    }

    /// Z-scores raw context values with the build-time statistics.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|v| self.stats.context(*v)).collect()
    }

    /// Summed distances `(d_up, d_down)` of a normalized window to each class.
    pub fn class_distances(&self, x: &[f64]) -> Result<(f64, f64)> {
        let sum = |ps: &[Profile]| -> Result<f64> {
            ps.iter().map(|p| distance(x, &p.values)).sum()
        };
        Ok((sum(&self.up)?, sum(&self.down)?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        if self.up.is_empty() || self.down.is_empty() {
            return Err(Error::Data("library needs at least one profile per class".into()));
        }
        if self.profiles().any(|p| p.values.len() != self.profile_len || p.members == 0) {
            return Err(Error::Data("malformed profile".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(v.schema_version));
        }
        let lib: PatternLibrary = serde_json::from_str(text)?;
        lib.validate()?;
        Ok(lib)
    }
}
