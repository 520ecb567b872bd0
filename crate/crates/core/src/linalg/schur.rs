//! Complex Schur form `A = Q T Q*` by Hessenberg reduction followed by a single-shift QR
//! iteration with Wilkinson shifts and Givens rotations.

use crate::error::{Error, Result};
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::hessenberg;
use faer::linalg::householder;
use faer::{Conj, Mat, Par};
use num_complex::Complex64 as C64;

pub struct Schur {
    /// Unitary factor.
    pub q: Mat<C64>,
    /// Upper triangular factor.
    pub t: Mat<C64>,
}

fn abs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Rotation `G = [[c, s], [−s̄, c]]` with `G·[x; y] = [r; 0]`.
fn givens(x: C64, y: C64) -> (f64, C64, C64) {
    if y == C64::new(0.0, 0.0) {
        return (1.0, C64::new(0.0, 0.0), x);
    }
    if x == C64::new(0.0, 0.0) {
        let ay = y.norm();
        return (0.0, y.conj() / ay, C64::new(ay, 0.0));
    }
    let ax = x.norm();
    let rho = ax.hypot(y.norm());
    let phase = x / ax;
    (ax / rho, phase * y.conj() / rho, phase * rho)
}

/// Reduces to Hessenberg form, returning `(H, Q)` row-major with `A = Q H Q*`.
fn hessenberg_reduce(a: &Mat<C64>) -> (Vec<C64>, Vec<C64>) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = Mat::<C64>::identity(n, n);
    if n > 2 {
        let bs = faer::linalg::qr::no_pivoting::factor::recommended_block_size::<C64>(n - 1, n - 1);
        let mut hh = Mat::<C64>::zeros(bs, n - 1);
        let req = hessenberg::hessenberg_in_place_scratch::<C64>(n, bs, Par::Seq, Default::default()).or(
            householder::apply_block_householder_sequence_on_the_right_in_place_scratch::<C64>(n - 1, bs, n - 1),
        );
        let mut mem = MemBuffer::new(req);
        let stack = MemStack::new(&mut mem);
        hessenberg::hessenberg_in_place(h.as_mut(), hh.as_mut(), Par::Seq, stack, Default::default());
        householder::apply_block_householder_sequence_on_the_right_in_place_with_conj(
            h.as_ref().submatrix(1, 0, n - 1, n - 1),
            hh.as_ref(),
            Conj::No,
            q.as_mut().submatrix_mut(1, 1, n - 1, n - 1),
            Par::Seq,
            stack,
        );
    }
    let mut hr = vec![C64::new(0.0, 0.0); n * n];
    let mut qr = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            if j + 1 >= i {
                hr[i * n + j] = h[(i, j)];
            }
            qr[i * n + j] = q[(i, j)];
        }
    }
    (hr, qr)
}

pub fn complex_schur(a: &Mat<C64>) -> Result<Schur> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    for j in 0..n {
        for i in 0..n {
            let v = a[(i, j)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Factorization("non-finite entry before Schur reduction".into()));
            }
        }
    }
    let (mut h, q) = hessenberg_reduce(a);
    // Columns of Q are stored as rows of `zt` so rotations touch contiguous memory.
    let mut zt = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            zt[j * n + i] = q[i * n + j];
        }
    }
    let eps = f64::EPSILON;
    let hnorm = h.iter().map(|v| abs1(*v)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_iter = 30 * n.max(10);
    let mut total = 0usize;
    let mut its = 0usize;
    let mut ihi = n.saturating_sub(1);
    let idx = |i: usize, j: usize| i * n + j;
    while ihi > 0 {
        let mut l = ihi;
        while l > 0 {
            let mut tst = abs1(h[idx(l - 1, l - 1)]) + abs1(h[idx(l, l)]);
            if tst == 0.0 {
                tst = hnorm;
            }
            if abs1(h[idx(l, l - 1)]) <= eps * tst {
                break;
            }
            l -= 1;
        }
        if l > 0 {
            h[idx(l, l - 1)] = C64::new(0.0, 0.0);
        }
        if l == ihi {
            ihi -= 1;
            its = 0;
            continue;
        }
        total += 1;
        its += 1;
        if total > max_iter {
            return Err(Error::Factorization(format!("Schur QR iteration did not converge at row {ihi}")));
        }
        let d = h[idx(ihi, ihi)];
        let sigma = if its.is_multiple_of(10) {
            d + abs1(h[idx(ihi, ihi - 1)]) * 0.75
        } else {
            let a11 = h[idx(ihi - 1, ihi - 1)];
            let b = h[idx(ihi - 1, ihi)];
            let c = h[idx(ihi, ihi - 1)];
            let half = (a11 - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let (e1, e2) = (d + half + disc, d + half - disc);
            if (e1 - d).norm() <= (e2 - d).norm() {
                e1
            } else {
                e2
            }
        };
        let mut x = h[idx(l, l)] - sigma;
        let mut y = h[idx(l + 1, l)];
        for k in l..ihi {
            if k > l {
                x = h[idx(k, k - 1)];
                y = h[idx(k + 1, k - 1)];
            }
            let (c, s, r) = givens(x, y);
            let first_col = if k > l {
                h[idx(k, k - 1)] = r;
                h[idx(k + 1, k - 1)] = C64::new(0.0, 0.0);
                k
            } else {
                l
            };
            let sc = s.conj();
            for j in first_col..n {
                let (u, v) = (h[idx(k, j)], h[idx(k + 1, j)]);
                h[idx(k, j)] = u * c + s * v;
                h[idx(k + 1, j)] = v * c - sc * u;
            }
            let last_row = (k + 2).min(ihi);
            for i in 0..=last_row {
                let (u, v) = (h[idx(i, k)], h[idx(i, k + 1)]);
                h[idx(i, k)] = u * c + sc * v;
                h[idx(i, k + 1)] = v * c - s * u;
            }
            let (top, bottom) = zt.split_at_mut((k + 1) * n);
            let rk = &mut top[k * n..];
            let rk1 = &mut bottom[..n];
            for (u, v) in rk.iter_mut().zip(rk1.iter_mut()) {
                let (a0, b0) = (*u, *v);
                *u = a0 * c + sc * b0;
                *v = b0 * c - s * a0;
            }
        }
    }
    let t = Mat::from_fn(n, n, |i, j| if j >= i { h[idx(i, j)] } else { C64::new(0.0, 0.0) });
    let q = Mat::from_fn(n, n, |i, j| zt[j * n + i]);
    Ok(Schur { q, t })
}
