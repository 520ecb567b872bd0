//! Dense and banded linear algebra used by the solvers and the reference oracles.
//!
//! faer supplies dense LU, SVD, eigendecomposition and the Hessenberg reduction; the
//! Padé exponential, the complex Schur iteration, the triangular square root and the
//! banded shifted solver live here.

pub mod banded;
mod expm;
mod schur;
mod sqrtm;

pub use expm::{expm_complex, expm_real};
pub use schur::{complex_schur, Schur};
pub use sqrtm::{principal_sqrt_mean_zero, sqrtm_upper_triangular, DenseSqrt};

use crate::error::{Error, Result};
use faer::Mat;
use num_complex::Complex64 as C64;

/// Largest problem size accepted by the dense oracles.
pub const DENSE_CAP: usize = 4096;

pub fn check_dense_cap(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        Err(Error::SizeCap { size: n, cap: DENSE_CAP })
    } else {
        Ok(())
    }
}

pub fn to_complex(a: &Mat<f64>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)], 0.0))
}

pub fn frobenius(a: &Mat<C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat<C64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let s = a.singular_values().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// Dense matrix–vector product.
pub fn mat_vec(a: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// Columns of `a` as vectors.
pub fn columns(a: &Mat<C64>) -> Vec<Vec<C64>> {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)]).collect()).collect()
}

pub fn from_columns(cols: &[Vec<C64>]) -> Mat<C64> {
    let nrows = cols.first().map_or(0, |c| c.len());
    Mat::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

/// Lower bound for `‖A‖₂` by power iteration on `A*A` with random restarts; returns
/// `‖Ax‖/‖x‖` at the best final iterate.
pub fn power_norm(
    n: usize,
    apply: impl Fn(&[C64]) -> Vec<C64>,
    apply_adjoint: impl Fn(&[C64]) -> Vec<C64>,
    steps: usize,
    restarts: usize,
    seed: u64,
) -> f64 {
    use rand::{Rng, SeedableRng};
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..restarts.max(1) {
        let mut x: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for _ in 0..steps.max(1) {
            let nx = norm(&x);
            if nx == 0.0 {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let ax = apply(&x);
            best = best.max(norm(&ax));
            x = apply_adjoint(&ax);
        }
    }
    best
}
