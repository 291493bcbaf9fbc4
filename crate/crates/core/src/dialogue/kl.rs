//! Closed-form divergence between two Gaussians.

use crate::{Error, Result};

/// A covariance matrix, either as its diagonal or in full (row-major rows).
#[derive(Debug, Clone, Copy)]
pub enum Covariance<'a> {
    Diagonal(&'a [f64]),
    Full(&'a [Vec<f64>]),
}

impl Covariance<'_> {
    fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(d) => d.len(),
            Covariance::Full(m) => m.len(),
        }
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        match self {
            Covariance::Diagonal(d) => (0..d.len())
                .map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect())
                .collect(),
            Covariance::Full(m) => m.to_vec(),
        }
    }
}

/// Lower-triangular `L` with `L L^T = a`.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!("covariance row {i} has {} entries, expected {n}", row.len())));
        }
        for j in 0..i {
            let scale = row[j].abs().max(a[j][i].abs()).max(1.0);
            if (row[j] - a[j][i]).abs() > 1e-12 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b`.
fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// `KL(q || p) = 0.5 [ln(|Sp|/|Sq|) - d + (mq-mp)^T Sp^-1 (mq-mp) + tr(Sp^-1 Sq)]`.
pub fn gaussian_kl(mu_q: &[f64], cov_q: Covariance<'_>, mu_p: &[f64], cov_p: Covariance<'_>) -> Result<f64> {
    let d = mu_q.len();
    if mu_p.len() != d || cov_q.dim() != d || cov_p.dim() != d {
        return Err(Error::Shape(format!(
            "dimension mismatch: means {} and {}, covariances {} and {}",
            d,
            mu_p.len(),
            cov_q.dim(),
            cov_p.dim()
        )));
    }
    let diff: Vec<f64> = mu_q.iter().zip(mu_p).map(|(a, b)| a - b).collect();
    if let (Covariance::Diagonal(q), Covariance::Diagonal(p)) = (cov_q, cov_p) {
        if q.iter().chain(p.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut acc = -(d as f64);
        for i in 0..d {
            acc += (p[i] / q[i]).ln() + diff[i] * diff[i] / p[i] + q[i] / p[i];
        }
        return Ok(0.5 * acc);
    }
    let sq = cov_q.dense();
    let lq = cholesky(&sq)?;
    let lp = cholesky(&cov_p.dense())?;
    let log_det = |l: &[Vec<f64>]| 2.0 * (0..l.len()).map(|i| l[i][i].ln()).sum::<f64>();
    let mahalanobis: f64 = cholesky_solve(&lp, &diff).iter().zip(&diff).map(|(a, b)| a * b).sum();
    let mut trace = 0.0;
    for j in 0..d {
        let column: Vec<f64> = sq.iter().map(|row| row[j]).collect();
        trace += cholesky_solve(&lp, &column)[j];
    }
    Ok(0.5 * (log_det(&lp) - log_det(&lq) - d as f64 + mahalanobis + trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    #[test]
    fn identical_is_zero() {
        let m = [0.3, -1.2, 4.0];
        let v = [0.5, 2.0, 1.5];
        assert!(gaussian_kl(&m, Covariance::Diagonal(&v), &m, Covariance::Diagonal(&v)).unwrap().abs() <= 1e-12);
        let full = vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 0.7]];
        assert!(gaussian_kl(&m, Covariance::Full(&full), &m, Covariance::Full(&full)).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn unit_shift_is_half() {
        let kl = gaussian_kl(&[1.0, 0.0], Covariance::Diagonal(&[1.0, 1.0]), &[0.0, 0.0], Covariance::Diagonal(&[1.0, 1.0]))
            .unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_matches_diagonal_path() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let d = 1 + rng.index(4);
            let mq: Vec<f64> = rng.gaussian_vec(d);
            let mp: Vec<f64> = rng.gaussian_vec(d);
            let vq: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.2, 3.0)).collect();
            let vp: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.2, 3.0)).collect();
            let diag = |v: &[f64]| -> Vec<Vec<f64>> {
                (0..d).map(|i| (0..d).map(|j| if i == j { v[i] } else { 0.0 }).collect()).collect()
            };
            let (fq, fp) = (diag(&vq), diag(&vp));
            let a = gaussian_kl(&mq, Covariance::Diagonal(&vq), &mp, Covariance::Diagonal(&vp)).unwrap();
            let b = gaussian_kl(&mq, Covariance::Full(&fq), &mp, Covariance::Full(&fp)).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_non_pd() {
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let good = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = [0.0, 0.0];
        assert!(matches!(
            gaussian_kl(&m, Covariance::Full(&bad), &m, Covariance::Full(&good)),
            Err(Error::NotPositiveDefinite)
        ));
        let asym = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        assert!(gaussian_kl(&m, Covariance::Full(&good), &m, Covariance::Full(&asym)).is_err());
        assert!(gaussian_kl(&m, Covariance::Diagonal(&[1.0, 0.0]), &m, Covariance::Diagonal(&[1.0, 1.0])).is_err());
    }
}
