//! Closed-form Gaussian KL divergence against a Monte-Carlo estimate, and
//! the alignment term as a scaled KL between isotropic code posteriors.

use mutual_ae::dialogue::{gaussian_kl, Covariance};
use mutual_ae::nn::Rng;

fn log_density(x: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((x - m).powi(2) / v + v.ln() + std::f64::consts::TAU.ln()))
        .sum()
}

fn main() -> mutual_ae::Result<()> {
    let mut rng = Rng::new(3);
    let (mu_q, var_q) = (vec![0.3, -0.2, 0.8], vec![0.5, 1.2, 0.9]);
    let (mu_p, var_p) = (vec![0.0, 0.1, 0.5], vec![1.0, 0.7, 1.5]);
    let kl = gaussian_kl(&mu_q, Covariance::Diagonal(&var_q), &mu_p, Covariance::Diagonal(&var_p))?;

    let n = 200_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let x: Vec<f64> = mu_q.iter().zip(&var_q).map(|(m, v)| m + v.sqrt() * rng.gaussian()).collect();
            log_density(&x, &mu_q, &var_q) - log_density(&x, &mu_p, &var_p)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let se = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
    println!("closed form {kl:.5}   Monte Carlo {mean:.5} ± {se:.5}");

    let sigma = 0.1;
    let iso = vec![sigma * sigma; 3];
    let kl = gaussian_kl(&mu_q, Covariance::Diagonal(&iso), &mu_p, Covariance::Diagonal(&iso))?;
    let align: f64 = mu_q.iter().zip(&mu_p).map(|(a, b)| (a - b).powi(2)).sum();
    println!("||mu_q - mu_p||^2 = {align:.6}   2 sigma^2 KL = {:.6}", 2.0 * sigma * sigma * kl);

    let full = vec![vec![1.0, 0.4, 0.0], vec![0.4, 1.0, 0.2], vec![0.0, 0.2, 0.8]];
    let kl = gaussian_kl(&mu_q, Covariance::Full(&full), &mu_p, Covariance::Diagonal(&var_p))?;
    println!("correlated posterior against a diagonal prior: {kl:.5}");
    Ok(())
}
