//! Finite-difference check of every layer kind, a full autoencoder loss and
//! a translator loss.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use mutual_ae::ae::{AeConfig, Autoencoder, SampleInputs};
use mutual_ae::nn::gradcheck::{compare, run_suite};
use mutual_ae::nn::{Network, Rng};
use mutual_ae::translator::{pair_loss_and_gradients, Direction, TranslatorConfig, TranslatorDict};

fn main() -> mutual_ae::Result<()> {
    for r in run_suite(20, None) {
        println!("{:<9} max relative error {:.2e} ({})", r.name, r.max_error, if r.passed { "ok" } else { "FAIL" });
    }

    let mut rng = Rng::new(5);
    let cfg = AeConfig { window: 12, channels: 3, kernel: 3, code_dim: 3, ..AeConfig::first(12) };
    let ae = Autoencoder::new(cfg, &mut rng)?;
    let x = rng.gaussian_sample(&[12, 2]);
    let target = rng.gaussian_sample(&[12, 2]);
    let eps = rng.gaussian_vec(3);
    let prior = vec![0.3, 0.6, 0.5];
    let sample = SampleInputs { input: &x, target: &target, eps: &eps, prior: Some((&prior, 0.7)) };
    let (_, grads) = ae.loss_and_gradients(&sample)?;
    let point = ae.flat_params();
    let mut probe = ae.clone();
    let cmp = compare(&point, &grads.flatten(), 1e-5, |p| {
        probe.set_flat_params(p).expect("same length");
        probe.loss(&sample).expect("valid sample").total
    });
    println!("autoencoder loss: max relative error {:.2e} over {} parameters", cmp.max_error, cmp.components);

    let dict = TranslatorDict::new(Direction::OneToTwo, 3, 2, &TranslatorConfig { hidden: Some(6), ..TranslatorConfig::default() }, &mut rng)?;
    let (z, t) = (vec![0.2, 0.9, 0.4], vec![0.7, 0.1]);
    let (_, g) = pair_loss_and_gradients(dict.network(), &z, &t)?;
    let mut net: Network = dict.network().clone();
    let cmp = compare(&net.flat_params(), &g.flatten(), 1e-5, |p| {
        net.set_flat_params(p).expect("same length");
        let out = net.forward(&mutual_ae::nn::Tensor::vector(z.clone()).expect("finite")).expect("shape");
        out.data().iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64
    });
    println!("translator loss: max relative error {:.2e} over {} parameters", cmp.max_error, cmp.components);
    Ok(())
}
