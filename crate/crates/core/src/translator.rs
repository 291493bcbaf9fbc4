//! Per-sample code dictionaries between the two autoencoders.
//!
//! `g` maps codes of the first autoencoder to codes of the second and `h` the
//! reverse. Each is `dense -> sigmoid -> dense` fitted by plain MSE so that it
//! memorizes individual pairs rather than smoothing over sparse regions.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ae::Autoencoder;
use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::{AdamConfig, AdamState, Gradients, LayerSpec, Network, Rng, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `g: z1 -> z2'`
    OneToTwo,
    /// `h: z2 -> z1'`
    TwoToOne,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::OneToTwo => Direction::TwoToOne,
            Direction::TwoToOne => Direction::OneToTwo,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Direction::OneToTwo => 0,
            Direction::TwoToOne => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::OneToTwo => "1->2",
            Direction::TwoToOne => "2->1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslatorConfig {
    /// Hidden width; `None` means 16 times the larger code dimension.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            epochs: 10,
            learning_rate: 0.01,
            batch_size: 8,
        }
    }
}

impl TranslatorConfig {
    pub fn hidden_width(&self, dim1: usize, dim2: usize) -> usize {
        self.hidden.unwrap_or(16 * dim1.max(dim2))
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.hidden == Some(0) {
            return Err(Error::config(format!("{field}.hidden"), "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config(format!("{field}.batch_size"), "must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("{field}.learning_rate"), "must be non-negative"));
        }
        Ok(())
    }
}

/// Mean codes `(mu1(x_t), mu2(x_t))`, one pair per sample, in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct CodePairSet {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl CodePairSet {
    pub fn new(first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::Shape(format!(
                "{} first codes but {} second codes",
                first.len(),
                second.len()
            )));
        }
        let uniform = |v: &[Vec<f64>]| v.windows(2).all(|w| w[0].len() == w[1].len());
        if !uniform(&first) || !uniform(&second) {
            return Err(Error::Shape("codes of one side differ in length".into()));
        }
        Ok(Self { first, second })
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.first.first().map_or(0, Vec::len),
            self.second.first().map_or(0, Vec::len),
        )
    }

    /// `(inputs, outputs)` for `direction`.
    pub fn oriented(&self, direction: Direction) -> (&[Vec<f64>], &[Vec<f64>]) {
        match direction {
            Direction::OneToTwo => (&self.first, &self.second),
            Direction::TwoToOne => (&self.second, &self.first),
        }
    }
}

/// Each autoencoder encodes its own view; `data1[t]` and `data2[t]` must
/// describe the same time step.
pub fn collect_pairs(
    ae1: &Autoencoder,
    data1: &[Tensor],
    ae2: &Autoencoder,
    data2: &[Tensor],
) -> Result<CodePairSet> {
    if data1.is_empty() || data2.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data1.len() != data2.len() {
        return Err(Error::Shape(format!(
            "views differ in length: {} and {} samples",
            data1.len(),
            data2.len()
        )));
    }
    let first = data1.iter().map(|x| ae1.encode(x)).collect::<Result<Vec<_>>>()?;
    let second = data2.iter().map(|x| ae2.encode(x)).collect::<Result<Vec<_>>>()?;
    CodePairSet::new(first, second)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorDict {
    direction: Direction,
    network: Network,
    /// Number of completed autoencoder epochs when the fitted pairs were taken.
    stamp: usize,
    optimizer: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub direction: Direction,
    /// Fitting-set MSE before and after this fit.
    pub initial_mse: f64,
    pub mse: f64,
    /// All inputs identical: nothing to separate.
    pub degenerate: bool,
}

fn translator_specs(inputs: usize, hidden: usize, outputs: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            inputs,
            outputs: hidden,
        },
        LayerSpec::Sigmoid {
            shape: vec![hidden],
            centered: false,
        },
        LayerSpec::Dense {
            inputs: hidden,
            outputs,
        },
    ]
}

/// `mean_j (net(z)_j - target_j)^2` and its gradient.
pub fn pair_loss_and_gradients(net: &Network, z: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
    let trace = net.forward_trace(&Tensor::vector(z.to_vec())?)?;
    let out = trace.output().data();
    if out.len() != target.len() {
        return Err(Error::Shape(format!(
            "target has {} components, translator emits {}",
            target.len(),
            out.len()
        )));
    }
    let n = out.len() as f64;
    let loss = out.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let upstream = Tensor::vector(out.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / n).collect())?;
    Ok((loss, net.backward_trace(&trace, &upstream)?.grads))
}

impl TranslatorDict {
    pub fn new(
        direction: Direction,
        inputs: usize,
        outputs: usize,
        config: &TranslatorConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate("translator")?;
        let hidden = config.hidden_width(inputs, outputs);
        let network = Network::new(translator_specs(inputs, hidden, outputs), rng)?;
        let optimizer = AdamState::new(&network, AdamConfig::with_learning_rate(config.learning_rate));
        Ok(Self {
            direction,
            network,
            stamp: 0,
            optimizer,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn stamp(&self) -> usize {
        self.stamp
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_shape()[0]
    }

    pub fn checksum(&self) -> u64 {
        self.network.checksum()
    }

    pub fn translate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "translator {} expects {} components, got {}",
                self.direction,
                self.input_dim(),
                z.len()
            )));
        }
        Ok(self.network.forward(&Tensor::vector(z.to_vec())?)?.into_data())
    }

    /// Per-sample squared error (mean over components) on `pairs`.
    pub fn sample_errors(&self, pairs: &CodePairSet) -> Result<Vec<f64>> {
        let (inputs, targets) = pairs.oriented(self.direction);
        inputs
            .iter()
            .zip(targets)
            .map(|(z, t)| {
                let out = self.translate(z)?;
                Ok(out.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64)
            })
            .collect()
    }

    pub fn mse(&self, pairs: &CodePairSet) -> Result<f64> {
        let e = self.sample_errors(pairs)?;
        Ok(e.iter().sum::<f64>() / e.len() as f64)
    }

    /// Continues fitting on `pairs` for `config.epochs` shuffled passes and
    /// stamps the dictionary with `stamp`. Optimizer state carries over.
    pub fn refit(
        &mut self,
        pairs: &CodePairSet,
        config: &TranslatorConfig,
        stamp: usize,
        rng: &mut Rng,
    ) -> Result<FitReport> {
        if pairs.len() < 2 {
            return Err(Error::Data(format!(
                "translator fit needs at least 2 pairs, got {}",
                pairs.len()
            )));
        }
        let (inputs, targets) = pairs.oriented(self.direction);
        if inputs[0].len() != self.input_dim() || targets[0].len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "pairs are {}->{}, translator {} is {}->{}",
                inputs[0].len(),
                targets[0].len(),
                self.direction,
                self.input_dim(),
                self.output_dim()
            )));
        }
        let degenerate = inputs.windows(2).all(|w| w[0] == w[1]);
        if degenerate {
            log::warn!(
                "translator {}: all {} input codes are identical",
                self.direction,
                pairs.len()
            );
        }
        let initial_mse = self.mse(pairs)?;
        for _ in 0..config.epochs {
            let order = rng.permutation(pairs.len());
            for batch in order.chunks(config.batch_size) {
                let mut grads = Gradients::zeros_like(&self.network);
                for &i in batch {
                    let (_, g) = pair_loss_and_gradients(&self.network, &inputs[i], &targets[i])?;
                    grads.add_assign(&g);
                }
                grads.scale(1.0 / batch.len() as f64);
                self.optimizer.step(&mut self.network, &grads)?;
            }
        }
        self.stamp = stamp;
        Ok(FitReport {
            direction: self.direction,
            initial_mse,
            mse: self.mse(pairs)?,
            degenerate,
        })
    }

    pub const MAGIC: [u8; 4] = *b"MRTR";
    pub const VERSION: u16 = 1;

    /// `magic, version u16, direction u8, stamp u64`, then the network blob.
    /// Optimizer moments are not stored; a loaded dictionary warm-starts
    /// with fresh moments.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(&Self::MAGIC)?;
        checkpoint::write_u16(w, Self::VERSION)?;
        checkpoint::write_u8(w, self.direction.tag())?;
        checkpoint::write_u64(w, self.stamp as u64)?;
        checkpoint::write_network(w, &self.network)
    }

    pub fn read_checkpoint(r: &mut impl Read, config: &TranslatorConfig) -> Result<Self> {
        checkpoint::expect_magic(r, Self::MAGIC)?;
        let version = checkpoint::read_u16(r).map_err(CheckpointError::from)?;
        if version != Self::VERSION {
            return Err(CheckpointError::Version(version).into());
        }
        let direction = match checkpoint::read_u8(r).map_err(CheckpointError::from)? {
            0 => Direction::OneToTwo,
            1 => Direction::TwoToOne,
            t => return Err(CheckpointError::Malformed(format!("direction tag {t}")).into()),
        };
        let stamp = checkpoint::read_u64(r).map_err(CheckpointError::from)? as usize;
        let network = checkpoint::read_network(r)?;
        let specs = network.specs();
        let expected = translator_specs(
            network.input_shape()[0],
            specs[0].output_shape()[0],
            network.output_shape()[0],
        );
        if specs != expected {
            return Err(CheckpointError::Malformed("not a translator network".into()).into());
        }
        let optimizer = AdamState::new(&network, AdamConfig::with_learning_rate(config.learning_rate));
        Ok(Self {
            direction,
            network,
            stamp,
            optimizer,
        })
    }
}

/// Fits a dictionary from scratch or, given `previous`, warm-starts from it.
pub fn fit_translator(
    pairs: &CodePairSet,
    direction: Direction,
    config: &TranslatorConfig,
    previous: Option<TranslatorDict>,
    stamp: usize,
    rng: &mut Rng,
) -> Result<(TranslatorDict, FitReport)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut dict = match previous {
        Some(d) if d.direction == direction => d,
        Some(d) => {
            return Err(Error::Shape(format!(
                "warm start from a {} dictionary for direction {direction}",
                d.direction
            )))
        }
        None => {
            let (a, b) = pairs.dims();
            let (i, o) = match direction {
                Direction::OneToTwo => (a, b),
                Direction::TwoToOne => (b, a),
            };
            TranslatorDict::new(direction, i, o, config, &mut rng.derive("init"))?
        }
    };
    let report = dict.refit(pairs, config, stamp, rng)?;
    Ok((dict, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(n: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.uniform()).collect()).collect()
    }

    #[test]
    fn linear_map_is_learned() {
        let mut rng = Rng::new(3);
        let a: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform_range(-0.5, 0.5)).collect())
            .collect();
        let z1 = points(200, 4, &mut rng);
        let z2: Vec<Vec<f64>> = z1
            .iter()
            .map(|z| a.iter().map(|row| row.iter().zip(z).map(|(r, v)| r * v).sum()).collect())
            .collect();
        let pairs = CodePairSet::new(z1, z2).unwrap();
        let cfg = TranslatorConfig::default();
        let (dict, report) =
            fit_translator(&pairs, Direction::OneToTwo, &cfg, None, 1, &mut rng).unwrap();
        assert!(report.mse < 1e-3, "mse {}", report.mse);
        assert!(report.mse < report.initial_mse);
        let worst = pairs
            .first
            .iter()
            .zip(&pairs.second)
            .flat_map(|(z, t)| {
                let out = dict.translate(z).unwrap();
                out.into_iter().zip(t.clone()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "worst component error {worst}");

        // warm start on unchanged pairs keeps descending
        let mut again = dict.clone();
        let second = again.refit(&pairs, &cfg, 2, &mut rng).unwrap();
        assert!(second.mse <= report.mse * (1.0 + 1e-9) + 1e-12);
        assert_eq!(again.stamp(), 2);
    }

    #[test]
    fn translate_checks_dimension() {
        let mut rng = Rng::new(1);
        let dict =
            TranslatorDict::new(Direction::TwoToOne, 3, 5, &TranslatorConfig::default(), &mut rng)
                .unwrap();
        assert_eq!(dict.translate(&[0.1, 0.2, 0.3]).unwrap().len(), 5);
        assert!(dict.translate(&[0.1; 4]).is_err());
        assert_eq!(dict.network().specs()[0].output_shape(), vec![80]);
    }

    #[test]
    fn degenerate_pairs_fit_with_flag() {
        let mut rng = Rng::new(2);
        let pairs = CodePairSet::new(vec![vec![0.5; 3]; 10], vec![vec![0.2; 2]; 10]).unwrap();
        let (_, report) = fit_translator(
            &pairs,
            Direction::OneToTwo,
            &TranslatorConfig::default(),
            None,
            0,
            &mut rng,
        )
        .unwrap();
        assert!(report.degenerate);
        assert!(report.mse.is_finite());
    }

    #[test]
    fn too_few_pairs() {
        let mut rng = Rng::new(2);
        let pairs = CodePairSet::new(vec![vec![0.5; 3]], vec![vec![0.2; 2]]).unwrap();
        assert!(fit_translator(
            &pairs,
            Direction::OneToTwo,
            &TranslatorConfig::default(),
            None,
            0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = Rng::new(9);
        let cfg = TranslatorConfig {
            hidden: Some(7),
            ..TranslatorConfig::default()
        };
        let pairs = CodePairSet::new(points(20, 3, &mut rng), points(20, 2, &mut rng)).unwrap();
        let (dict, _) = fit_translator(&pairs, Direction::TwoToOne, &cfg, None, 4, &mut rng).unwrap();
        let mut buf = Vec::new();
        dict.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MRTR");
        let back = TranslatorDict::read_checkpoint(&mut buf.as_slice(), &cfg).unwrap();
        assert_eq!(back.direction(), Direction::TwoToOne);
        assert_eq!(back.stamp(), 4);
        assert_eq!(back.network(), dict.network());
        assert!(TranslatorDict::read_checkpoint(&mut &buf[..buf.len() - 3], &cfg).is_err());
    }
}

#[cfg(test)]
mod fidelity {
    use super::*;

    /// Three tight clusters on a linear map plus five isolated pairs, far
    /// from every cluster, whose targets ignore that map.
    fn gap_pairs(rng: &mut Rng) -> (CodePairSet, Vec<usize>) {
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..8).map(|_| rng.uniform_range(0.2, 0.8)).collect())
            .collect();
        let a: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..8).map(|_| rng.uniform_range(-0.2, 0.2)).collect())
            .collect();
        let map = |z: &[f64]| -> Vec<f64> {
            a.iter().map(|r| 0.5 + r.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()).collect()
        };
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for c in &centers {
            for _ in 0..100 {
                let z: Vec<f64> = c.iter().map(|m| m + 0.03 * rng.gaussian()).collect();
                second.push(map(&z).iter().map(|v| v + 0.01 * rng.gaussian()).collect());
                first.push(z);
            }
        }
        let mut isolated = Vec::new();
        while isolated.len() < 5 {
            let z: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
            let dist = |c: &Vec<f64>| c.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if centers.iter().any(|c| dist(c) < 0.5) {
                continue;
            }
            isolated.push(first.len());
            first.push(z);
            second.push((0..6).map(|_| rng.uniform()).collect());
        }
        (CodePairSet::new(first, second).unwrap(), isolated)
    }

    #[test]
    fn isolated_pairs_are_memorized() {
        let mut rng = Rng::new(17);
        let (pairs, isolated) = gap_pairs(&mut rng);
        let cfg = TranslatorConfig {
            epochs: 1000,
            batch_size: 32,
            learning_rate: 0.03,
            ..TranslatorConfig::default()
        };
        let (dict, _) = fit_translator(&pairs, Direction::OneToTwo, &cfg, None, 0, &mut rng).unwrap();
        let errs = dict.sample_errors(&pairs).unwrap();
        let mut cluster: Vec<f64> = (0..300).map(|i| errs[i]).collect();
        cluster.sort_by(f64::total_cmp);
        let median = cluster[150];
        let worst = isolated.iter().map(|i| errs[*i]).fold(0.0, f64::max);
        assert!(worst < 5.0 * median, "median {median:e}, worst isolated {worst:e}");
    }

    #[test]
    fn round_trip_through_both_directions() {
        let mut rng = Rng::new(8);
        // invertible affine map on the unit cube
        let b = [
            [0.5, 0.2, 0.0, -0.1],
            [-0.2, 0.5, 0.1, 0.0],
            [0.0, -0.1, 0.5, 0.2],
            [0.1, 0.0, -0.2, 0.5],
        ];
        let first: Vec<Vec<f64>> = (0..400).map(|_| (0..4).map(|_| rng.uniform()).collect()).collect();
        let second: Vec<Vec<f64>> = first
            .iter()
            .map(|z| b.iter().map(|r| 0.2 + r.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()).collect())
            .collect();
        let pairs = CodePairSet::new(first, second).unwrap();
        let cfg = TranslatorConfig::default();
        let (g, _) = fit_translator(&pairs, Direction::OneToTwo, &cfg, None, 0, &mut rng).unwrap();
        let (h, _) = fit_translator(&pairs, Direction::TwoToOne, &cfg, None, 0, &mut rng).unwrap();
        let mut err: Vec<f64> = pairs
            .first
            .iter()
            .map(|z| {
                let back = h.translate(&g.translate(z).unwrap()).unwrap();
                back.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        err.sort_by(f64::total_cmp);
        assert!(err[200] < 0.1, "median round-trip error {}", err[200]);
    }
}
