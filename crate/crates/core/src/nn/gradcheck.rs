//! Central finite-difference checks of the analytic gradients.
//!
//! Component error is `|a - n| / max(|a|, |n|, floor)` where `a` is the
//! analytic and `n` the numeric derivative, and `floor = 1e-6 * max(1, |L|)`
//! guards components that are zero up to rounding of the loss `L`.

use super::layer::{Gradients, Network};
use super::{LayerSpec, NnError, Rng, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub max_error: f64,
    pub worst_index: usize,
    pub components: usize,
}

impl Comparison {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error < tolerance
    }
}

pub fn guarded_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-6 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` to central differences of `loss` at `point`.
pub fn compare(
    point: &[f64],
    analytic: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Comparison {
    assert_eq!(point.len(), analytic.len());
    let base = loss(point);
    let mut x = point.to_vec();
    let mut worst = (0.0, 0);
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = loss(&x);
        x[i] = orig - step;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = guarded_error(analytic[i], numeric, base);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    Comparison {
        max_error: worst.0,
        worst_index: worst.1,
        components: point.len(),
    }
}

/// Deliberate corruption of one layer kind's backward pass, used to prove the
/// checker detects broken gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub kind: &'static str,
}

impl Fault {
    fn apply(&self, spec: &LayerSpec, param_grad: &mut [f64], input_grad: &mut [f64]) {
        if spec.kind() != self.kind {
            return;
        }
        for g in param_grad.iter_mut().chain(input_grad.iter_mut()) {
            *g *= 1.05;
        }
    }
}

fn faulty_backward(
    net: &Network,
    input: &Tensor,
    upstream: &Tensor,
    fault: Option<Fault>,
) -> Result<(Gradients, Vec<f64>), NnError> {
    let Some(fault) = fault else {
        let b = net.backward(input, upstream)?;
        return Ok((b.grads, b.input_grad.into_data()));
    };
    // Re-run layer by layer so the corruption propagates like a real bug.
    let trace = net.forward_trace(input)?;
    let mut grads = vec![Vec::new(); net.layers().len()];
    let mut g = upstream.clone();
    for i in (0..net.layers().len()).rev() {
        let single = Network::from_parts(
            vec![net.layers()[i].spec().clone()],
            vec![net.layers()[i].params().to_vec()],
        )?;
        let b = single.backward(&trace.activations[i], &g)?;
        let mut pg = b.grads.0.into_iter().next().unwrap_or_default();
        let mut ig = b.input_grad.into_data();
        fault.apply(net.layers()[i].spec(), &mut pg, &mut ig);
        grads[i] = pg;
        g = Tensor::from_parts(net.layers()[i].spec().input_shape(), ig);
    }
    Ok((Gradients(grads), g.into_data()))
}

/// Checks parameter and input gradients of the scalar `<r, net(x)>` for a
/// random projection `r`.
pub fn check_network(
    net: &Network,
    input: &Tensor,
    rng: &mut Rng,
    step: f64,
    fault: Option<Fault>,
) -> Result<(Comparison, Comparison), NnError> {
    let out_shape = net.output_shape();
    let projection = rng.gaussian_sample(&out_shape);
    let (grads, input_grad) = faulty_backward(net, input, &projection, fault)?;

    let proj = projection.data().to_vec();
    let objective = |n: &Network, x: &Tensor| -> f64 {
        let out = n.forward(x).expect("shapes validated");
        out.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
    };

    let mut probe = net.clone();
    let params = net.flat_params();
    let param_cmp = compare(&params, &grads.flatten(), step, |p| {
        probe.set_flat_params(p).expect("same length");
        objective(&probe, input)
    });

    let shape = input.shape().to_vec();
    let input_cmp = compare(input.data(), &input_grad, step, |x| {
        objective(net, &Tensor::from_parts(shape.clone(), x.to_vec()))
    });
    Ok((param_cmp, input_cmp))
}

/// Net exercising exactly one layer kind (plus nothing else).
pub fn single_kind_network(kind: &str, rng: &mut Rng) -> Network {
    let spec = match kind {
        "dense" => LayerSpec::Dense {
            inputs: 2 + rng.index(6),
            outputs: 1 + rng.index(6),
        },
        "conv1d" => LayerSpec::Conv1d {
            steps: 3 + rng.index(8),
            in_channels: 1 + rng.index(3),
            out_channels: 1 + rng.index(3),
            kernel: [1, 3, 5][rng.index(3)],
        },
        "sigmoid" => LayerSpec::Sigmoid {
            shape: vec![2 + rng.index(5), 1 + rng.index(3)],
            centered: rng.uniform() < 0.5,
        },
        "flatten" => {
            let (a, b) = (2 + rng.index(5), 1 + rng.index(3));
            LayerSpec::Flatten {
                input: vec![a, b],
                output: vec![a * b],
            }
        }
        other => panic!("unknown layer kind {other}"),
    };
    let mut net = Network::new(vec![spec], rng).expect("valid spec");
    randomize_biases(&mut net, rng);
    net
}

/// Random chain of at most four layers and at most 200 parameters.
pub fn random_network(rng: &mut Rng) -> Network {
    loop {
        let specs = if rng.uniform() < 0.5 {
            let steps = 3 + rng.index(6);
            let cin = 1 + rng.index(2);
            let cout = 1 + rng.index(3);
            let kernel = [1, 3, 5][rng.index(3)];
            let outputs = 1 + rng.index(4);
            vec![
                LayerSpec::Conv1d {
                    steps,
                    in_channels: cin,
                    out_channels: cout,
                    kernel,
                },
                LayerSpec::Sigmoid {
                    shape: vec![steps, cout],
                    centered: false,
                },
                LayerSpec::Flatten {
                    input: vec![steps, cout],
                    output: vec![steps * cout],
                },
                LayerSpec::Dense {
                    inputs: steps * cout,
                    outputs,
                },
            ]
        } else {
            let a = 2 + rng.index(6);
            let b = 2 + rng.index(8);
            let c = 1 + rng.index(5);
            vec![
                LayerSpec::Dense { inputs: a, outputs: b },
                LayerSpec::Sigmoid { shape: vec![b], centered: false },
                LayerSpec::Dense { inputs: b, outputs: c },
                LayerSpec::Sigmoid { shape: vec![c], centered: false },
            ]
        };
        let total: usize = specs.iter().map(LayerSpec::param_count).sum();
        if total <= 200 {
            let mut net = Network::new(specs, rng).expect("valid chain");
            randomize_biases(&mut net, rng);
            return net;
        }
    }
}

// Zero biases hide bias-gradient bugs behind symmetric activations.
fn randomize_biases(net: &mut Network, rng: &mut Rng) {
    let mut flat = net.flat_params();
    for v in &mut flat {
        if *v == 0.0 {
            *v = rng.uniform_range(-0.5, 0.5);
        }
    }
    net.set_flat_params(&flat).expect("same length");
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub seeds: usize,
    pub max_error: f64,
    pub passed: bool,
}

/// Runs every single-kind check plus random composed nets over `seeds` seeds.
pub fn run_suite(seeds: usize, fault: Option<Fault>) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let mut names: Vec<&str> = vec!["dense", "conv1d", "sigmoid", "flatten"];
    names.push("composed");
    for name in names {
        let mut max_error: f64 = 0.0;
        for seed in 0..seeds {
            let mut rng = Rng::new(seed as u64).derive(name);
            let net = if name == "composed" {
                random_network(&mut rng)
            } else {
                single_kind_network(name, &mut rng)
            };
            let input = rng.gaussian_sample(&net.input_shape());
            let (p, i) = check_network(&net, &input, &mut rng, DEFAULT_STEP, fault)
                .expect("generated nets are consistent");
            max_error = max_error.max(p.max_error).max(i.max_error);
        }
        results.push(CheckResult {
            name: name.to_string(),
            seeds,
            max_error,
            passed: max_error < DEFAULT_TOLERANCE,
        });
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_passes() {
        for r in run_suite(20, None) {
            assert!(r.passed, "{} max error {}", r.name, r.max_error);
        }
    }

    #[test]
    fn injected_fault_is_named() {
        for kind in ["dense", "conv1d", "sigmoid"] {
            let results = run_suite(3, Some(Fault { kind }));
            let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            assert!(failed.contains(&kind), "{kind}: {failed:?}");
            assert!(results.iter().filter(|r| r.name != kind && r.name != "composed").all(|r| r.passed));
        }
    }

    #[test]
    fn delta_conv_is_linear() {
        let mut rng = Rng::new(11);
        let net = Network::new(
            vec![LayerSpec::Conv1d {
                steps: 16,
                in_channels: 2,
                out_channels: 3,
                kernel: 5,
            }],
            &mut rng,
        )
        .unwrap();
        // remove bias so the map is linear rather than affine
        let mut flat = net.flat_params();
        let n = flat.len();
        flat[n - 3..].fill(0.0);
        let mut net = net;
        net.set_flat_params(&flat).unwrap();
        let x = rng.gaussian_sample(&[16, 2]);
        let y = rng.gaussian_sample(&[16, 2]);
        let (a, b) = (1.7, -0.3);
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let lhs = net.forward(&Tensor::new(vec![16, 2], mix).unwrap()).unwrap();
        let fx = net.forward(&x).unwrap();
        let fy = net.forward(&y).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(fx.data()).zip(fy.data()) {
            assert!((l - (a * p + b * q)).abs() < 1e-12);
        }
    }
}
