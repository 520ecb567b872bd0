//! Banded LU with partial pivoting for shifted lattice operators `M + λI`.
//!
//! Periodic neighbours are brought close to the diagonal by the fold ordering
//! `0, N−1, 1, N−2, …` along each axis, so a stencil of reach one has bandwidth 2 in 1D
//! and `2N + 2` in 2D.

use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Position of coordinate `x` in the fold ordering of an axis with `n` points.
fn fold(x: usize, n: usize) -> usize {
    if x < n.div_ceil(2) {
        2 * x
    } else {
        2 * (n - 1 - x) + 1
    }
}

/// `perm[new] = old` for the fold ordering of `grid`.
pub fn fold_permutation(grid: &Grid) -> Vec<usize> {
    let n = grid.points_per_axis();
    let mut perm = vec![0; grid.cell_count()];
    for old in 0..grid.cell_count() {
        let [x, y] = grid.coords(old);
        let new = if grid.dim() == 1 { fold(x, n) } else { fold(y, n) * n + fold(x, n) };
        perm[new] = old;
    }
    perm
}

/// LU factors of `P(M + λI)Pᵀ` in band storage.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    // Row i holds columns i−kl ..= i+kl+ku at offset `col + kl − i`.
    band: Vec<C64>,
    mult: Vec<C64>,
    piv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    /// Factors `M + shift·I` in the ordering `perm` (`perm[new] = old`).
    pub fn factor(m: &CsrMatrix, shift: C64, perm: &[usize]) -> Result<BandedLu> {
        let n = m.dim();
        if perm.len() != n {
            return Err(Error::Precondition("permutation length differs from matrix size".into()));
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        if inv.contains(&usize::MAX) {
            return Err(Error::Precondition("ordering is not a permutation".into()));
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, c, _) in m.triplets() {
            let (i, j) = (inv[r], inv[c]);
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![ZERO; n * width];
        for (r, c, v) in m.triplets() {
            let (i, j) = (inv[r], inv[c]);
            band[i * width + j + kl - i] += C64::new(v, 0.0);
        }
        for i in 0..n {
            band[i * width + kl] += shift;
        }
        let mut lu = BandedLu { n, kl, ku, width, band, mult: vec![ZERO; n * kl.max(1)], piv: vec![0; n], perm: perm.to_vec() };
        lu.eliminate()?;
        Ok(lu)
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut scale = 0.0f64;
        for v in &self.band {
            scale = scale.max(v.norm());
        }
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.at(k, k)].norm();
            for r in k + 1..=last_row {
                let v = self.band[self.at(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= f64::EPSILON * scale * n as f64 {
                return Err(Error::SolverBreakdown { residual: f64::INFINITY });
            }
            self.piv[k] = p;
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (self.at(k, c), self.at(p, c));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.at(k, k)];
            let inv_pivot = pivot.inv();
            let kw = self.at(k, k);
            for r in k + 1..=last_row {
                let ri = self.at(r, k);
                let f = self.band[ri] * inv_pivot;
                self.mult[k * kl + (r - k - 1)] = f;
                self.band[ri] = ZERO;
                if f == ZERO {
                    continue;
                }
                let len = last_col - k;
                let (head, tail) = self.band.split_at_mut(ri);
                let src = &head[kw + 1..kw + 1 + len];
                let dst = &mut tail[1..1 + len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= f * s;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidths of the permuted matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves in place in the original (unpermuted) ordering.
    pub fn solve_in_place(&self, rhs: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x: Vec<C64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk == ZERO {
                continue;
            }
            #[allow(clippy::needless_range_loop)]
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] -= self.mult[k * kl + (r - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + kl + ku).min(n - 1);
            let base = self.at(k, k);
            let row = &self.band[base + 1..base + 1 + (last_col - k)];
            let s: C64 = row.iter().zip(&x[k + 1..=last_col]).map(|(a, b)| a * b).sum();
            x[k] = (x[k] - s) / self.band[base];
        }
        for (new, &old) in self.perm.iter().enumerate() {
            rhs[old] = x[new];
        }
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
