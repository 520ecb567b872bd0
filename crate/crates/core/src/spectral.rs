//! Functional calculus through a dense eigendecomposition `M = V diag(μ) V⁻¹`.
//!
//! One decomposition serves every time and every function of the operator, which is what the
//! larger resolution sweeps need. The accuracy depends on the conditioning of `V`; the
//! reconstruction residual `‖MV − V diag(μ)‖_F / ‖M‖_F` and `κ(V)` are recorded so that callers
//! can compare against the contour and Padé routes on smaller grids.

use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::linalg::{check_dense_cap, frobenius, from_columns};
use crate::operator::LatticeOperator;
use crate::semigroup::Propagator;
use crate::sparse::CsrMatrix;
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64 as C64;

/// Eigenvalues below this fraction of the largest modulus are treated as the constant mode.
const KERNEL_SNAP: f64 = 1e-11;

pub struct SpectralCalculus {
    grid: Grid,
    matrix: CsrMatrix,
    vectors: Mat<C64>,
    inverse: Mat<C64>,
    eigenvalues: Vec<C64>,
    residual: f64,
    condition: f64,
}

impl SpectralCalculus {
    pub fn new<O: LatticeOperator + ?Sized>(op: &O) -> Result<SpectralCalculus> {
        let n = op.grid().cell_count();
        check_dense_cap(n)?;
        let dense = op.matrix().to_dense();
        let evd = dense.eigen().map_err(|e| Error::Factorization(format!("eigendecomposition: {e:?}")))?;
        let vectors = evd.U().to_owned();
        let mut eigenvalues: Vec<C64> = (0..n).map(|i| evd.S()[i]).collect();
        let top = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for mu in eigenvalues.iter_mut() {
            if mu.norm() <= KERNEL_SNAP * top {
                *mu = C64::new(0.0, 0.0);
            }
        }
        let inverse = vectors.partial_piv_lu().inverse();
        let mut res2 = 0.0;
        for j in 0..n {
            let col: Vec<C64> = (0..n).map(|i| vectors[(i, j)]).collect();
            let mv = op.matrix().mul_vec(&col);
            res2 += mv.iter().zip(&col).map(|(a, v)| (a - v * eigenvalues[j]).norm_sqr()).sum::<f64>();
        }
        let m_norm = op.matrix().triplets().map(|(_, _, v)| v * v).sum::<f64>().sqrt();
        let residual = res2.sqrt() / m_norm.max(f64::MIN_POSITIVE);
        let condition = frobenius(&vectors) * frobenius(&inverse) / n as f64;
        if !residual.is_finite() || !condition.is_finite() {
            return Err(Error::Factorization("eigenvector matrix is numerically singular".into()));
        }
        Ok(SpectralCalculus { grid: *op.grid(), matrix: op.matrix().clone(), vectors, inverse, eigenvalues, residual, condition })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    /// `‖MV − V diag(μ)‖_F / ‖M‖_F`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Frobenius estimate `‖V‖_F‖V⁻¹‖_F / n` of the eigenvector condition number.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `g(M) = V g(diag μ) V⁻¹` applied to each right-hand side.
    pub fn apply_function(&self, g: impl Fn(C64) -> C64, rhs: &[Vec<C64>]) -> Vec<Vec<C64>> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let b = from_columns(rhs);
        let mut c = &self.inverse * &b;
        for (i, mu) in self.eigenvalues.iter().enumerate() {
            let s = g(*mu);
            for j in 0..c.ncols() {
                c[(i, j)] *= s;
            }
        }
        let out = &self.vectors * &c;
        (0..out.ncols()).map(|j| (0..out.nrows()).map(|i| out[(i, j)]).collect()).collect()
    }

    /// The dense matrix `g(M)`.
    pub fn function_matrix(&self, g: impl Fn(C64) -> C64) -> Mat<C64> {
        let n = self.eigenvalues.len();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * g(self.eigenvalues[j]));
        &scaled * &self.inverse
    }
}

impl Propagator for SpectralCalculus {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    fn propagate(&self, z: C64, l: usize, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        if z.re < 0.0 {
            return Err(Error::Precondition(format!("Re z = {} < 0", z.re)));
        }
        Ok(self.apply_function(|mu| (-mu).powu(l as u32) * (-z * mu).exp(), rhs))
    }
    fn backend(&self) -> &'static str {
        "spectral"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field};
    use crate::operator::{assemble, EllipticOperator};
    use crate::semigroup::DensePropagator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bmo(n: usize) -> EllipticOperator {
        let grid = Grid::new(2, n, 1.0).unwrap();
        let params = CoefficientParams { kappa: 0.5, ..CoefficientParams::default() };
        assemble(&make_coefficients(CoefficientKind::BmoLog, &params, grid).unwrap())
    }

    #[test]
    fn matches_dense_exponential() {
        let op = bmo(8);
        let spec = SpectralCalculus::new(&op).unwrap();
        assert!(spec.residual() < 1e-12, "{}", spec.residual());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<C64> = (0..64).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let dense = DensePropagator::new(&op).unwrap();
        for (z, l) in [(C64::new(0.01, 0.0), 0), (C64::new(0.1, 0.05), 0), (C64::new(0.02, 0.0), 1)] {
            let a = spec.propagate(z, l, std::slice::from_ref(&f)).unwrap().remove(0);
            let b = dense.propagate(z, l, std::slice::from_ref(&f)).unwrap().remove(0);
            let a = Field::from_values(*op.grid(), a).unwrap();
            let b = Field::from_values(*op.grid(), b).unwrap();
            assert!(a.sub(&b).unwrap().norm2() < 1e-10 * b.norm2());
        }
    }

    #[test]
    fn constant_mode_is_exactly_zero() {
        let op = bmo(8);
        let spec = SpectralCalculus::new(&op).unwrap();
        assert_eq!(spec.eigenvalues().iter().filter(|m| m.norm() == 0.0).count(), 1);
        let one = vec![C64::new(1.0, 0.0); 64];
        let s = spec.apply_function(|m| m.sqrt(), &[one]).remove(0);
        assert!(s.iter().all(|v| v.norm() < 1e-10));
        let m = spec.function_matrix(|m| m);
        let dense = op.matrix().to_dense_complex();
        assert!(frobenius(&(&m - &dense)) < 1e-10 * frobenius(&dense));
    }
}
