use serde::{Deserialize, Serialize};

use super::{Gradients, Network, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// ADAM moments for one network, with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.params().len()])
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One update in place. Nothing is modified when the gradient is rejected.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        if grads.0.len() != self.first.len()
            || grads.0.iter().zip(&self.first).any(|(g, m)| g.len() != m.len())
        {
            return Err(NnError::GradientShape);
        }
        if let Some(layer) = grads.first_non_finite() {
            return Err(NnError::NonFiniteGradient { layer });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, g), m), v) in layer
                .params_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Rng};

    fn net() -> Network {
        Network::new(
            vec![LayerSpec::Dense { inputs: 3, outputs: 2 }],
            &mut Rng::new(9),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut n = net();
        let before = n.clone();
        let mut adam = AdamState::new(&n, AdamConfig::with_learning_rate(0.01));
        adam.step(&mut n, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(n, before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut n = net();
        let mut adam = AdamState::new(&n, AdamConfig::with_learning_rate(0.01));
        let mut g = Gradients::zeros_like(&n);
        g.0[0][0] = 1.0;
        adam.step(&mut n, &g).unwrap();
        let m1 = adam.first_moments()[0][0];
        let zeros = Gradients::zeros_like(&n);
        adam.step(&mut n, &zeros).unwrap();
        assert!((adam.first_moments()[0][0] - 0.9 * m1).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut n = net();
        let before = n.clone();
        let mut adam = AdamState::new(&n, AdamConfig::with_learning_rate(0.0));
        let mut g = Gradients::zeros_like(&n);
        for v in g.0.iter_mut().flatten() {
            *v = 3.7;
        }
        for _ in 0..5 {
            adam.step(&mut n, &g).unwrap();
        }
        assert_eq!(n, before);
    }

    // Scalar simulation of the bias-corrected recurrence under a constant
    // gradient: m_hat = g and v_hat = g^2 exactly at every step, so the update
    // is lr * |g| / (|g| + eps), bounded by lr.
    #[test]
    fn constant_gradient_step_bounded_by_lr() {
        let lr = 0.01;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let g = 5.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut oracle = Vec::new();
        for t in 1..=200 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            oracle.push(lr * mh / (vh.sqrt() + eps));
        }

        let mut n = net();
        let mut adam = AdamState::new(&n, AdamConfig::with_learning_rate(lr));
        let mut grads = Gradients::zeros_like(&n);
        for v in grads.0.iter_mut().flatten() {
            *v = g;
        }
        for expected in oracle {
            let before = n.flat_params();
            adam.step(&mut n, &grads).unwrap();
            for (a, b) in before.iter().zip(n.flat_params()) {
                let delta = (a - b).abs();
                assert!(delta <= lr * (1.0 + 1e-9));
                assert!((delta - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut n = net();
        let before = n.clone();
        let mut adam = AdamState::new(&n, AdamConfig::with_learning_rate(0.01));
        let mut g = Gradients::zeros_like(&n);
        g.0[0][2] = f64::NAN;
        assert!(matches!(
            adam.step(&mut n, &g),
            Err(NnError::NonFiniteGradient { layer: 0 })
        ));
        assert_eq!(n, before);
        assert_eq!(adam.steps(), 0);
    }
}
