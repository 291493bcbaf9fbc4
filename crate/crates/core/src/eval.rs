//! Quality measures for trained autoencoders.

use crate::ae::Autoencoder;
use crate::nn::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseReport {
    /// Mean per-element squared error of reconstructions against the clean windows.
    pub reconstruction_mse: f64,
    /// The same for the noisy inputs themselves.
    pub input_mse: f64,
}

impl DenoiseReport {
    pub fn denoises(&self) -> bool {
        self.reconstruction_mse < self.input_mse
    }
}

pub fn denoising(ae: &Autoencoder, noisy: &[Tensor], clean: &[Tensor]) -> Result<DenoiseReport> {
    if noisy.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if noisy.len() != clean.len() {
        return Err(Error::Shape("noisy and clean sets differ in length".into()));
    }
    let (mut rec, mut raw) = (0.0, 0.0);
    for (x, c) in noisy.iter().zip(clean) {
        rec += ae.reconstruct(x)?.mse(c);
        raw += x.mse(c);
    }
    let n = noisy.len() as f64;
    Ok(DenoiseReport {
        reconstruction_mse: rec / n,
        input_mse: raw / n,
    })
}

/// Solves the symmetric positive definite system `a x = b` in place.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    for i in 0..n {
        let p = a[i][i];
        if p.is_nan() || p <= 0.0 {
            return None;
        }
        let (pivot_a, pivot_b) = (a[i].clone(), b[i].clone());
        for k in i + 1..n {
            let f = a[k][i] / p;
            if f == 0.0 {
                continue;
            }
            for (x, y) in a[k][i..].iter_mut().zip(&pivot_a[i..]) {
                *x -= f * y;
            }
            for (x, y) in b[k].iter_mut().zip(&pivot_b) {
                *x -= f * y;
            }
        }
    }
    for i in (0..n).rev() {
        for j in 0..b[i].len() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * b[k][j]).sum();
            b[i][j] = (b[i][j] - s) / a[i][i];
        }
    }
    Some(b)
}

/// One-vs-rest least-squares classifier with an intercept and a small ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `weights[c]` scores class `c`; the last entry is the intercept.
    pub weights: Vec<Vec<f64>>,
}

impl LinearProbe {
    pub fn fit(features: &[Vec<f64>], labels: &[usize], ridge: f64) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Shape("one label per feature vector required".into()));
        }
        let d = features[0].len() + 1;
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        let mut xtx = vec![vec![0.0; d]; d];
        let mut xty = vec![vec![0.0; classes]; d];
        for (f, &y) in features.iter().zip(labels) {
            let row: Vec<f64> = f.iter().copied().chain([1.0]).collect();
            for i in 0..d {
                for j in 0..d {
                    xtx[i][j] += row[i] * row[j];
                }
                for (c, t) in xty[i].iter_mut().enumerate() {
                    *t += row[i] * if c == y { 1.0 } else { -1.0 };
                }
            }
        }
        for (i, r) in xtx.iter_mut().enumerate() {
            r[i] += ridge * features.len() as f64;
        }
        let sol = solve_spd(xtx, xty).ok_or_else(|| Error::Data("probe system is singular".into()))?;
        let weights = (0..classes).map(|c| sol.iter().map(|r| r[c]).collect()).collect();
        Ok(Self { weights })
    }

    pub fn predict(&self, f: &[f64]) -> usize {
        let score = |w: &Vec<f64>| w[..f.len()].iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + w[f.len()];
        let mut best = 0;
        for c in 1..self.weights.len() {
            if score(&self.weights[c]) > score(&self.weights[best]) {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(f, y)| self.predict(f) == **y)
            .count();
        hits as f64 / features.len().max(1) as f64
    }
}

/// Accuracy of a linear probe fitted and scored on the same codes.
pub fn probe_accuracy(features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    Ok(LinearProbe::fit(features, labels, 1e-6)?.accuracy(features, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    #[test]
    fn separable_classes_are_recovered() {
        let mut rng = Rng::new(1);
        let mut f = Vec::new();
        let mut y = Vec::new();
        for _ in 0..300 {
            let c = rng.index(3);
            let centre = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]][c];
            f.push(vec![centre[0] + 0.3 * rng.gaussian(), centre[1] + 0.3 * rng.gaussian()]);
            y.push(c);
        }
        assert!(probe_accuracy(&f, &y).unwrap() > 0.97);
    }

    #[test]
    fn uninformative_features_score_near_chance() {
        let mut rng = Rng::new(2);
        let f: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gaussian()]).collect();
        let y: Vec<usize> = (0..2000).map(|_| rng.index(2)).collect();
        let acc = probe_accuracy(&f, &y).unwrap();
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }
}
