use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{factorial, gauss_legendre};

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("kernel argument {x} outside [0, 1]")))
    }
}

/// `K_0(x, x') = min(x, x')`; for `k >= 1`,
/// `K_k(x, x') = int_0^1 (x - t)_+^k (x' - t)_+^k dt / (k!)^2`.
///
/// The integrand is a polynomial of degree `2k` on `[0, min(x, x')]`, so `k + 1`
/// Gauss–Legendre nodes integrate it exactly.
pub fn kernel_entry(k: usize, x: f64, x2: f64) -> Result<f64> {
    check_unit(x)?;
    check_unit(x2)?;
    let (nodes, weights) = gauss_legendre(k + 1);
    Ok(entry_with_rule(k, x, x2, &nodes, &weights))
}

fn entry_with_rule(k: usize, x: f64, x2: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let m = x.min(x2);
    if k == 0 {
        return m;
    }
    if m <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * m;
    let kf = factorial(k);
    let sum: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(&s, &w)| {
            let t = half * (1.0 + s);
            w * ((x - t) * (x2 - t)).powi(k as i32)
        })
        .sum();
    sum * half / (kf * kf)
}

/// Kernel matrix `[K_k(x_i, x_j)]` on a design.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSystem {
    pub order: usize,
    pub matrix: DMatrix<f64>,
    pub design: Vec<f64>,
}

impl KernelSystem {
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Kernel row `[K_k(x, x_j)]_j` for a new point.
    pub fn row(&self, x: f64) -> Result<Vec<f64>> {
        check_unit(x)?;
        let (nodes, weights) = gauss_legendre(self.order + 1);
        Ok(self.design.iter().map(|&xj| entry_with_rule(self.order, x, xj, &nodes, &weights)).collect())
    }
}

/// Assembles the symmetric kernel matrix; rows are filled in parallel.
pub fn build_kernel(k: usize, xs: &[f64]) -> Result<KernelSystem> {
    for &x in xs {
        check_unit(x)?;
    }
    let n = xs.len();
    let (nodes, weights) = gauss_legendre(k + 1);
    let rows: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| (0..=i).map(|j| entry_with_rule(k, xs[i], xs[j], &nodes, &weights)).collect()).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(KernelSystem { order: k, matrix, design: xs.to_vec() })
}
