//! Principal square root through the Schur form (Björck–Hammarling recurrence), applied
//! on the mean-zero subspace of an operator whose kernel is the constants.

use super::{complex_schur, frobenius, to_complex};
use crate::error::{Error, Result};
use faer::Mat;
use num_complex::Complex64 as C64;

/// Square root of an upper triangular matrix with eigenvalues off the closed negative axis.
pub fn sqrtm_upper_triangular(t: &Mat<C64>) -> Result<Mat<C64>> {
    let n = t.nrows();
    // Column-major and row-major copies keep both factors of the inner sum contiguous.
    let mut ucol = vec![C64::new(0.0, 0.0); n * n];
    let mut urow = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let d = t[(j, j)];
        if d.re <= 0.0 && d.im == 0.0 {
            return Err(Error::Factorization(format!("eigenvalue {d} on the closed negative axis")));
        }
        let r = d.sqrt();
        ucol[j * n + j] = r;
        urow[j * n + j] = r;
        for i in (0..j).rev() {
            let s: C64 = urow[i * n + i + 1..i * n + j].iter().zip(&ucol[j * n + i + 1..j * n + j]).map(|(a, b)| a * b).sum();
            let denom = urow[i * n + i] + ucol[j * n + j];
            if denom == C64::new(0.0, 0.0) {
                return Err(Error::Factorization("singular Sylvester step in triangular square root".into()));
            }
            let v = (t[(i, j)] - s) / denom;
            ucol[j * n + i] = v;
            urow[i * n + j] = v;
        }
    }
    Ok(Mat::from_fn(n, n, |i, j| ucol[j * n + i]))
}

/// Dense square root and its squaring residual.
pub struct DenseSqrt {
    pub matrix: Mat<C64>,
    /// `‖S² − M‖_F / ‖M‖_F`.
    pub squaring_residual: f64,
}

/// Applies the reflector `H = I − 2vvᵀ/vᵀv` that swaps `1/√n` and `e_0`, from both sides.
fn reflect_both(m: &Mat<f64>, v: &[f64]) -> Mat<f64> {
    let n = m.nrows();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut out = m.clone();
    // H·M
    for j in 0..n {
        let dot: f64 = (0..n).map(|i| v[i] * out[(i, j)]).sum();
        let f = 2.0 * dot / vv;
        for i in 0..n {
            out[(i, j)] -= f * v[i];
        }
    }
    // (H·M)·H
    for i in 0..n {
        let dot: f64 = (0..n).map(|j| out[(i, j)] * v[j]).sum();
        let f = 2.0 * dot / vv;
        for j in 0..n {
            out[(i, j)] -= f * v[j];
        }
    }
    out
}

fn reflect_both_complex(m: &Mat<C64>, v: &[f64]) -> Mat<C64> {
    let n = m.nrows();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut out = m.clone();
    for j in 0..n {
        let dot: C64 = (0..n).map(|i| out[(i, j)] * v[i]).sum();
        let f = dot * (2.0 / vv);
        for i in 0..n {
            out[(i, j)] -= f * v[i];
        }
    }
    for i in 0..n {
        let dot: C64 = (0..n).map(|j| out[(i, j)] * v[j]).sum();
        let f = dot * (2.0 / vv);
        for j in 0..n {
            out[(i, j)] -= f * v[j];
        }
    }
    out
}

/// Principal square root of a real `M` with `M·1 = 0` and `1ᵀM = 0`, restricted to the
/// mean-zero subspace and extended by zero on constants.
pub fn principal_sqrt_mean_zero(m: &Mat<f64>) -> Result<DenseSqrt> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::Precondition("need at least two cells".into()));
    }
    let e = 1.0 / (n as f64).sqrt();
    let mut v = vec![e; n];
    v[0] -= 1.0;
    let b = reflect_both(m, &v);
    let m0 = Mat::from_fn(n - 1, n - 1, |i, j| C64::new(b[(i + 1, j + 1)], 0.0));
    let schur = complex_schur(&m0)?;
    for i in 0..n - 1 {
        let d = schur.t[(i, i)];
        if d.re <= 0.0 {
            return Err(Error::Factorization(format!("eigenvalue {d} off the kernel has nonpositive real part")));
        }
    }
    let u = sqrtm_upper_triangular(&schur.t)?;
    let s0 = &schur.q * &u * schur.q.adjoint();
    let mut padded = Mat::<C64>::zeros(n, n);
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            padded[(i + 1, j + 1)] = s0[(i, j)];
        }
    }
    let s = reflect_both_complex(&padded, &v);
    let mc = to_complex(m);
    let squaring_residual = frobenius(&(&s * &s - &mc)) / frobenius(&mc).max(f64::MIN_POSITIVE);
    Ok(DenseSqrt { matrix: s, squaring_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangular_root_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 12;
        let t = Mat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(rng.random_range(0.5..3.0), rng.random_range(-1.0..1.0))
            } else if j > i {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let u = sqrtm_upper_triangular(&t).unwrap();
        assert!(frobenius(&(&u * &u - &t)) < 1e-13 * frobenius(&t));
        for i in 0..n {
            assert!(u[(i, i)].re > 0.0);
        }
    }

    #[test]
    fn circulant_laplacian_root() {
        // 1D periodic second difference: eigenvalues 4 sin²(πk/n) on Fourier modes.
        let n = 16;
        let m = Mat::from_fn(n, n, |i, j| match (i as isize - j as isize).rem_euclid(n as isize) {
            0 => 2.0,
            1 => -1.0,
            x if x == n as isize - 1 => -1.0,
            _ => 0.0,
        });
        let root = principal_sqrt_mean_zero(&m).unwrap();
        assert!(root.squaring_residual < 1e-13);
        let k = 3;
        let mode: Vec<C64> = (0..n).map(|x| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * x) as f64 / n as f64)).collect();
        let mu = 2.0 * (std::f64::consts::PI * k as f64 / n as f64).sin();
        let out = crate::linalg::mat_vec(&root.matrix, &mode);
        for (o, m) in out.iter().zip(&mode) {
            assert!((o - m * mu).norm() < 1e-13);
        }
        let ones = vec![C64::new(1.0, 0.0); n];
        assert!(crate::linalg::mat_vec(&root.matrix, &ones).iter().all(|v| v.norm() < 1e-13));
    }
}
