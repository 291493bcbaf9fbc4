//! Mutual against separate training on planted regimes: agreement level,
//! regime separability of the codes and denoising against ground truth.
//!
//! ```text
//! cargo run --release --example mutual_training -- 3
//! ```

use mutual_ae::config::RunConfig;
use mutual_ae::dialogue::{AeId, Dialogue};
use mutual_ae::eval::{denoising, probe_accuracy};
use mutual_ae::pipeline;

fn main() -> mutual_ae::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = RunConfig::from_json(include_str!("../configs/quickstart.json"))?;
    cfg.seed = seed;
    let data = pipeline::load_data(&cfg)?;
    let truth = data.synthetic.as_ref().expect("synthetic data");
    let sets = [pipeline::windows(&cfg, &data.pairs[0])?, pipeline::windows(&cfg, &data.pairs[1])?];
    let labels: Vec<usize> = sets[0].train().iter().map(|w| truth.labels()[w.end]).collect();

    let trained = pipeline::train(&cfg, &sets[0], &sets[1], true, |d| {
        let al = d.agreement().last().map_or(0.0, |a| a.level);
        println!("epoch {:>3}  listener done, agreement {al:.3}", d.epochs_completed());
        Ok(())
    })?;
    let baseline = trained.baseline.as_ref().expect("baseline requested");

    let report = |name: &str, d: &Dialogue| -> mutual_ae::Result<()> {
        let codes = d.code_pairs()?;
        let acc = (probe_accuracy(&codes.first, &labels)? + probe_accuracy(&codes.second, &labels)?) / 2.0;
        print!("{name:<9} agreement {:.3}  probe accuracy {acc:.3}", d.agreement().last().map_or(0.0, |a| a.level));
        for (k, id) in [AeId::First, AeId::Second].into_iter().enumerate() {
            let clean_pair = truth.truth_pair(k);
            let clean = sets[k].tensors_for(&clean_pair.target, &clean_pair.context, sets[k].train());
            let dn = denoising(d.ae(id), d.data(id), &clean)?;
            print!("  {id} mse {:.3} (input {:.3})", dn.reconstruction_mse, dn.input_mse);
        }
        println!();
        Ok(())
    };
    report("mutual", &trained.mutual)?;
    report("separate", baseline)?;
    Ok(())
}
