//! Fits a code dictionary on clustered pairs plus a few isolated ones and
//! shows that the rare pairs are not averaged away.

use mutual_ae::nn::Rng;
use mutual_ae::translator::{fit_translator, CodePairSet, Direction, TranslatorConfig};

fn main() -> mutual_ae::Result<()> {
    let mut rng = Rng::new(11);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| (0..8).map(|_| rng.uniform_range(0.2, 0.8)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.uniform_range(-0.2, 0.2)).collect()).collect();
    let map = |z: &[f64]| -> Vec<f64> { a.iter().map(|r| 0.5 + r.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()).collect() };
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for c in &centres {
        for _ in 0..100 {
            let z: Vec<f64> = c.iter().map(|v| v + 0.03 * rng.gaussian()).collect();
            second.push(map(&z).iter().map(|v| v + 0.01 * rng.gaussian()).collect());
            first.push(z);
        }
    }
    let clustered = first.len();
    while first.len() < clustered + 5 {
        let z: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
        if centres.iter().all(|c| c.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= 0.5) {
            first.push(z);
            second.push((0..4).map(|_| rng.uniform()).collect());
        }
    }
    let pairs = CodePairSet::new(first, second)?;
    let cfg = TranslatorConfig { epochs: 1000, learning_rate: 0.03, batch_size: 32, ..TranslatorConfig::default() };
    let (dict, report) = fit_translator(&pairs, Direction::OneToTwo, &cfg, None, 0, &mut rng)?;
    let errors = dict.sample_errors(&pairs)?;
    let mut cluster_err = errors[..clustered].to_vec();
    cluster_err.sort_by(f64::total_cmp);
    let median = cluster_err[clustered / 2];
    let worst = errors[clustered..].iter().copied().fold(0.0, f64::max);
    println!("fit mse {:.2e} -> {:.2e}", report.initial_mse, report.mse);
    println!("median cluster error {median:.2e}, worst isolated error {worst:.2e}, ratio {:.2}", worst / median);
    Ok(())
}
