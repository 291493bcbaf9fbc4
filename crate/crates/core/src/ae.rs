//! Convolutional autoencoder with a stochastic bottleneck.
//!
//! ```text
//! x [W, 2] -> conv1d(2->c) -> sigmoid° -> conv1d(c->c) -> sigmoid°
//!          -> flatten [W*c] -> dense(W*c -> dim z) -> sigmoid = mu(x)
//! z = mu(x) + sigma * eps
//! z -> dense(dim z -> W*c) -> sigmoid° -> unflatten [W, c]
//!   -> conv1d(c->c) -> sigmoid° -> conv1d(c->2) = x' [W, 2]
//! ```
//!
//! `sigmoid°` is the sigmoid shifted by -1/2 onto `(-1/2, 1/2)`.
//!
//! Channel 0 carries the (forward-shifted) target, channel 1 the context.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::{AdamConfig, AdamState, Gradients, LayerSpec, Network, Rng, Tensor};
use crate::{Error, Result};

pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    /// Window length in time steps.
    pub window: usize,
    /// Width of both convolution layers.
    pub channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    pub code_dim: usize,
    /// Fixed code noise scale of the reparametrized bottleneck.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Amplitude of the independent input/output perturbations.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

fn default_kernel() -> usize {
    5
}
fn default_sigma() -> f64 {
    0.1
}
fn default_noise() -> f64 {
    0.05
}
fn default_lr() -> f64 {
    0.01
}

impl AeConfig {
    /// The wider, larger-code member of a pair.
    pub fn first(window: usize) -> Self {
        Self {
            window,
            channels: 16,
            kernel: default_kernel(),
            code_dim: 8,
            sigma: default_sigma(),
            noise: default_noise(),
            learning_rate: default_lr(),
        }
    }

    pub fn second(window: usize) -> Self {
        Self {
            channels: 32,
            code_dim: 6,
            ..Self::first(window)
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let err = |f: &str, reason: String| Err(Error::config(format!("{field}.{f}"), reason));
        if self.code_dim == 0 {
            return err("code_dim", "must be at least 1".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return err("sigma", format!("must be positive, got {}", self.sigma));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return err("noise", format!("must be non-negative, got {}", self.noise));
        }
        if self.kernel.is_multiple_of(2) {
            return err("kernel", format!("must be odd, got {}", self.kernel));
        }
        if self.window < self.kernel {
            return err(
                "window",
                format!("{} is shorter than kernel {}", self.window, self.kernel),
            );
        }
        if self.channels == 0 {
            return err("channels", "must be at least 1".into());
        }
        if self.code_dim >= self.window * INPUT_CHANNELS {
            return err(
                "code_dim",
                format!(
                    "{} is not below the input dimension {} (autoencoder must be undercomplete)",
                    self.code_dim,
                    self.window * INPUT_CHANNELS
                ),
            );
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate", "must be non-negative".into());
        }
        Ok(())
    }

    /// Heterogeneity requirement for a conversing pair.
    pub fn validate_pair(first: &AeConfig, second: &AeConfig) -> Result<()> {
        first.validate("ae1")?;
        second.validate("ae2")?;
        if first.code_dim <= second.code_dim {
            return Err(Error::config(
                "ae1.code_dim",
                format!(
                    "must exceed ae2.code_dim ({} <= {})",
                    first.code_dim, second.code_dim
                ),
            ));
        }
        if first.window != second.window {
            return Err(Error::config("ae2.window", "both autoencoders must share the window"));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 2] {
        [self.window, INPUT_CHANNELS]
    }

    fn encoder_specs(&self) -> Vec<LayerSpec> {
        let (w, c, k) = (self.window, self.channels, self.kernel);
        vec![
            LayerSpec::Conv1d {
                steps: w,
                in_channels: INPUT_CHANNELS,
                out_channels: c,
                kernel: k,
            },
            LayerSpec::Sigmoid { shape: vec![w, c], centered: true },
            LayerSpec::Conv1d {
                steps: w,
                in_channels: c,
                out_channels: c,
                kernel: k,
            },
            LayerSpec::Sigmoid { shape: vec![w, c], centered: true },
            LayerSpec::Flatten {
                input: vec![w, c],
                output: vec![w * c],
            },
            LayerSpec::Dense {
                inputs: w * c,
                outputs: self.code_dim,
            },
            LayerSpec::Sigmoid {
                shape: vec![self.code_dim],
                centered: false,
            },
        ]
    }

    fn decoder_specs(&self) -> Vec<LayerSpec> {
        let (w, c, k) = (self.window, self.channels, self.kernel);
        vec![
            LayerSpec::Dense {
                inputs: self.code_dim,
                outputs: w * c,
            },
            LayerSpec::Sigmoid { shape: vec![w * c], centered: true },
            LayerSpec::Flatten {
                input: vec![w * c],
                output: vec![w, c],
            },
            LayerSpec::Conv1d {
                steps: w,
                in_channels: c,
                out_channels: c,
                kernel: k,
            },
            LayerSpec::Sigmoid { shape: vec![w, c], centered: true },
            LayerSpec::Conv1d {
                steps: w,
                in_channels: c,
                out_channels: INPUT_CHANNELS,
                kernel: k,
            },
        ]
    }
}

/// A stochastic code: `z = mu + sigma * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSample {
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub sigma: f64,
    pub eps: Vec<f64>,
}

/// Reparametrized draw around `mu`.
pub fn sample_code(mu: &[f64], sigma: f64, rng: &mut Rng) -> CodeSample {
    let eps = rng.gaussian_vec(mu.len());
    code_from_noise(mu, sigma, eps)
}

pub(crate) fn code_from_noise(mu: &[f64], sigma: f64, eps: Vec<f64>) -> CodeSample {
    let z = mu.iter().zip(&eps).map(|(m, e)| m + sigma * e).collect();
    CodeSample {
        mu: mu.to_vec(),
        z,
        sigma,
        eps,
    }
}

/// `x + amplitude * eps`, elementwise.
pub fn perturb_io(x: &Tensor, amplitude: f64, rng: &mut Rng) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|v| v + amplitude * rng.gaussian())
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("finite input stays finite")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeGradients {
    pub encoder: Gradients,
    pub decoder: Gradients,
}

impl AeGradients {
    pub fn zeros_like(ae: &Autoencoder) -> Self {
        Self {
            encoder: Gradients::zeros_like(&ae.encoder),
            decoder: Gradients::zeros_like(&ae.decoder),
        }
    }

    pub fn add_assign(&mut self, other: &AeGradients) {
        self.encoder.add_assign(&other.encoder);
        self.decoder.add_assign(&other.decoder);
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.decoder.scale(factor);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend(self.decoder.flatten());
        v
    }
}

/// Loss terms of one training sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// `||target - x'||^2` summed over the window.
    pub reconstruction: f64,
    /// `||mu - mu_prior||^2`; zero without a prior.
    pub alignment: f64,
    pub total: f64,
}

/// Everything needed to evaluate one sample's loss deterministically.
#[derive(Debug, Clone)]
pub struct SampleInputs<'a> {
    pub input: &'a Tensor,
    pub target: &'a Tensor,
    pub eps: &'a [f64],
    /// Translated partner code and its weight.
    pub prior: Option<(&'a [f64], f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    config: AeConfig,
    encoder: Network,
    decoder: Network,
}

impl Autoencoder {
    pub fn new(config: AeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate("ae")?;
        let encoder = Network::new(config.encoder_specs(), &mut rng.derive("encoder"))?;
        let decoder = Network::new(config.decoder_specs(), &mut rng.derive("decoder"))?;
        Ok(Self {
            config,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &AeConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Network {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Network {
        &mut self.decoder
    }

    pub fn code_dim(&self) -> usize {
        self.config.code_dim
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.encoder.flat_params();
        v.extend(self.decoder.flat_params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.encoder.param_count();
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        self.encoder.set_flat_params(&flat[..n])?;
        self.decoder.set_flat_params(&flat[n..])?;
        Ok(())
    }

    pub fn checksum(&self) -> u64 {
        self.encoder.checksum() ^ self.decoder.checksum().rotate_left(1)
    }

    /// Encoder mean `mu(x)`, each component in (0, 1).
    pub fn encode(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encoder.forward(x)?.into_data())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Tensor> {
        if z.len() != self.config.code_dim {
            return Err(Error::Shape(format!(
                "code length {} does not match code dimension {}",
                z.len(),
                self.config.code_dim
            )));
        }
        Ok(self.decoder.forward(&Tensor::vector(z.to_vec())?)?)
    }

    /// Deterministic reconstruction through the code mean.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(x)?)
    }

    /// Loss and exact gradients for one sample:
    /// `||target - dec(mu(input) + sigma*eps)||^2 + lambda*||mu(input) - prior||^2`.
    pub fn loss_and_gradients(&self, s: &SampleInputs<'_>) -> Result<(LossParts, AeGradients)> {
        let enc = self.encoder.forward_trace(s.input)?;
        let mu = enc.output().data();
        if s.eps.len() != mu.len() {
            return Err(Error::Shape("noise length differs from code dimension".into()));
        }
        let z: Vec<f64> = mu
            .iter()
            .zip(s.eps)
            .map(|(m, e)| m + self.config.sigma * e)
            .collect();
        let dec = self.decoder.forward_trace(&Tensor::vector(z)?)?;
        let out = dec.output();
        if out.shape() != s.target.shape() {
            return Err(Error::Shape(format!(
                "target shape {:?} differs from output {:?}",
                s.target.shape(),
                out.shape()
            )));
        }
        let residual: Vec<f64> = out
            .data()
            .iter()
            .zip(s.target.data())
            .map(|(a, b)| a - b)
            .collect();
        let reconstruction: f64 = residual.iter().map(|r| r * r).sum();
        let upstream = Tensor::new(
            out.shape().to_vec(),
            residual.iter().map(|r| 2.0 * r).collect(),
        )?;
        let dec_back = self.decoder.backward_trace(&dec, &upstream)?;

        let mut g_mu = dec_back.input_grad.into_data();
        let mut alignment = 0.0;
        let mut weight = 0.0;
        if let Some((prior, lambda)) = s.prior {
            if prior.len() != mu.len() {
                return Err(Error::Shape("prior length differs from code dimension".into()));
            }
            alignment = mu.iter().zip(prior).map(|(m, p)| (m - p) * (m - p)).sum();
            weight = lambda;
            if lambda != 0.0 {
                for ((g, m), p) in g_mu.iter_mut().zip(mu).zip(prior) {
                    *g += 2.0 * lambda * (m - p);
                }
            }
        }
        let enc_back = self
            .encoder
            .backward_trace(&enc, &Tensor::from_parts(vec![mu.len()], g_mu))?;
        let parts = LossParts {
            reconstruction,
            alignment,
            total: reconstruction + weight * alignment,
        };
        Ok((
            parts,
            AeGradients {
                encoder: enc_back.grads,
                decoder: dec_back.grads,
            },
        ))
    }

    /// Loss only; matches [`Autoencoder::loss_and_gradients`].
    pub fn loss(&self, s: &SampleInputs<'_>) -> Result<LossParts> {
        let mu = self.encode(s.input)?;
        let z: Vec<f64> = mu
            .iter()
            .zip(s.eps)
            .map(|(m, e)| m + self.config.sigma * e)
            .collect();
        let out = self.decode(&z)?;
        let reconstruction = out.sum_squared_diff(s.target);
        let (alignment, weight) = match s.prior {
            Some((prior, lambda)) => (
                mu.iter().zip(prior).map(|(m, p)| (m - p) * (m - p)).sum(),
                lambda,
            ),
            None => (0.0, 0.0),
        };
        Ok(LossParts {
            reconstruction,
            alignment,
            total: reconstruction + weight * alignment,
        })
    }

    pub const MAGIC: [u8; 4] = *b"MRAE";
    pub const VERSION: u16 = 1;

    /// Writes `MRAE`, version, the config header (window, channels, kernel,
    /// code_dim as u32; sigma, noise, learning_rate as f64) and then the
    /// encoder and decoder network blobs.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(&Self::MAGIC)?;
        checkpoint::write_u16(w, Self::VERSION)?;
        checkpoint::write_u32(w, self.config.window)?;
        checkpoint::write_u32(w, self.config.channels)?;
        checkpoint::write_u32(w, self.config.kernel)?;
        checkpoint::write_u32(w, self.config.code_dim)?;
        checkpoint::write_f64(w, self.config.sigma)?;
        checkpoint::write_f64(w, self.config.noise)?;
        checkpoint::write_f64(w, self.config.learning_rate)?;
        checkpoint::write_network(w, &self.encoder)?;
        checkpoint::write_network(w, &self.decoder)?;
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        checkpoint::expect_magic(r, Self::MAGIC)?;
        let version = checkpoint::read_u16(r).map_err(CheckpointError::from)?;
        if version != Self::VERSION {
            return Err(CheckpointError::Version(version).into());
        }
        let read = |r: &mut dyn Read| -> std::io::Result<AeConfig> {
            let mut r = r;
            Ok(AeConfig {
                window: checkpoint::read_u32(&mut r)?,
                channels: checkpoint::read_u32(&mut r)?,
                kernel: checkpoint::read_u32(&mut r)?,
                code_dim: checkpoint::read_u32(&mut r)?,
                sigma: checkpoint::read_f64(&mut r)?,
                noise: checkpoint::read_f64(&mut r)?,
                learning_rate: checkpoint::read_f64(&mut r)?,
            })
        };
        let config = read(r).map_err(CheckpointError::from)?;
        config.validate("checkpoint")?;
        let encoder = checkpoint::read_network(r)?;
        let decoder = checkpoint::read_network(r)?;
        if encoder.specs() != config.encoder_specs() || decoder.specs() != config.decoder_specs() {
            return Err(CheckpointError::Malformed(
                "layer layout does not match the header config".into(),
            )
            .into());
        }
        Ok(Self {
            config,
            encoder,
            decoder,
        })
    }
}

/// ADAM state for both halves of an autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AeOptimizer {
    pub encoder: AdamState,
    pub decoder: AdamState,
}

impl AeOptimizer {
    pub fn new(ae: &Autoencoder) -> Self {
        let cfg = AdamConfig::with_learning_rate(ae.config.learning_rate);
        Self {
            encoder: AdamState::new(&ae.encoder, cfg),
            decoder: AdamState::new(&ae.decoder, cfg),
        }
    }

    pub fn step(&mut self, ae: &mut Autoencoder, grads: &AeGradients) -> Result<(), crate::nn::NnError> {
        // validate both halves before touching either
        if let Some(layer) = grads.encoder.first_non_finite() {
            return Err(crate::nn::NnError::NonFiniteGradient { layer });
        }
        if let Some(layer) = grads.decoder.first_non_finite() {
            return Err(crate::nn::NnError::NonFiniteGradient {
                layer: ae.encoder.layers().len() + layer,
            });
        }
        self.encoder.step(&mut ae.encoder, &grads.encoder)?;
        self.decoder.step(&mut ae.decoder, &grads.decoder)
    }
}

/// Mean loss terms over one mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub reconstruction: f64,
    pub alignment: f64,
    pub total: f64,
}

/// An autoencoder together with everything its training consumes: its
/// optimizer state and its private random stream (batch order, input/output
/// perturbations, bottleneck noise).
#[derive(Debug, Clone)]
pub struct Learner {
    pub ae: Autoencoder,
    pub optimizer: AeOptimizer,
    pub rng: Rng,
}

impl Learner {
    pub fn new(ae: Autoencoder, rng: Rng) -> Self {
        let optimizer = AeOptimizer::new(&ae);
        Self { ae, optimizer, rng }
    }

    /// Shuffles `0..n` and splits it into `batches` contiguous chunks whose
    /// sizes differ by at most one.
    pub fn plan_epoch(&mut self, n: usize, batches: usize) -> Vec<Vec<usize>> {
        let order = self.rng.permutation(n);
        split_batches(&order, batches)
    }

    /// One ADAM step on the batch mean of the per-sample loss. With `priors`
    /// (one per batch entry, in batch order) the alignment term is included with
    /// weight `lambda`; at zero weight it is reported but contributes no
    /// gradient.
    pub fn step(
        &mut self,
        data: &[Tensor],
        batch: &[usize],
        priors: Option<&[Vec<f64>]>,
        lambda: f64,
    ) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if priors.is_some_and(|p| p.len() != batch.len()) {
            return Err(Error::Shape("one prior per batch entry required".into()));
        }
        let noise = self.ae.config.noise;
        let dim = self.ae.config.code_dim;
        let mut grads = AeGradients::zeros_like(&self.ae);
        let mut stats = StepStats::default();
        for (k, &i) in batch.iter().enumerate() {
            let x = &data[i];
            let input = perturb_io(x, noise, &mut self.rng);
            let target = perturb_io(x, noise, &mut self.rng);
            let eps = self.rng.gaussian_vec(dim);
            let prior = priors.map(|p| (p[k].as_slice(), lambda));
            let (parts, g) = self.ae.loss_and_gradients(&SampleInputs {
                input: &input,
                target: &target,
                eps: &eps,
                prior,
            })?;
            grads.add_assign(&g);
            stats.reconstruction += parts.reconstruction;
            stats.alignment += parts.alignment;
            stats.total += parts.total;
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        self.optimizer.step(&mut self.ae, &grads)?;
        stats.reconstruction *= inv;
        stats.alignment *= inv;
        stats.total *= inv;
        Ok(stats)
    }
}

pub(crate) fn split_batches(order: &[usize], batches: usize) -> Vec<Vec<usize>> {
    let batches = batches.clamp(1, order.len().max(1));
    let base = order.len() / batches;
    let extra = order.len() % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}
