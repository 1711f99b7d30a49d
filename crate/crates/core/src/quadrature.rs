//! Gauss-Hermite rules for expectations under a standard normal.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point rule with `sum_i w_i f(x_i) ~ E[f(Z)]`,
/// `Z ~ N(0, 1)`, from the eigen-decomposition of the Jacobi matrix of the
/// probabilists' Hermite polynomials. Weights sum to one.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidConfig("quadrature needs at least one node".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(x, w)| (x, w / total)).unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_normal_moments() {
        let (x, w) = gauss_hermite(20).unwrap();
        let moment = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn integrates_exponential() {
        let (x, w) = gauss_hermite(64).unwrap();
        let e: f64 = x.iter().zip(&w).map(|(x, w)| w * (1.3 * x).exp()).sum();
        assert!((e - (0.5f64 * 1.3 * 1.3).exp()).abs() < 1e-12);
    }

    #[test]
    fn single_node_is_the_mean() {
        let (x, w) = gauss_hermite(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(w, vec![1.0]);
    }
}
