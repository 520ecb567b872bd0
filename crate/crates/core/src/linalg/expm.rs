//! Scaling and squaring with the degree-13 Padé approximant (Higham 2005).

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::{Mat, Scale};
use num_complex::Complex64 as C64;

const THETA13: f64 = 5.371_920_351_148_152;
const B: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

macro_rules! padé13 {
    ($name:ident, $t:ty, $abs:expr, $from:expr) => {
        pub fn $name(a: &Mat<$t>) -> Result<Mat<$t>> {
            let n = a.nrows();
            assert_eq!(n, a.ncols());
            let norm1 = (0..n).map(|j| (0..n).map(|i| $abs(a[(i, j)])).sum::<f64>()).fold(0.0, f64::max);
            if !norm1.is_finite() {
                return Err(Error::Factorization("non-finite matrix in exponential".into()));
            }
            let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
            let a = a * Scale($from(0.5f64.powi(s)));
            let id = Mat::<$t>::identity(n, n);
            let a2 = &a * &a;
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let c = |k: usize| Scale($from(B[k]));
            let inner_u = &a6 * (c(13) * &a6 + c(11) * &a4 + c(9) * &a2);
            let u = &a * (inner_u + c(7) * &a6 + c(5) * &a4 + c(3) * &a2 + c(1) * &id);
            let inner_v = &a6 * (c(12) * &a6 + c(10) * &a4 + c(8) * &a2);
            let v = inner_v + c(6) * &a6 + c(4) * &a4 + c(2) * &a2 + c(0) * &id;
            let p = &v + &u;
            let q = &v - &u;
            let mut r = q.partial_piv_lu().solve(&p);
            for _ in 0..s {
                r = &r * &r;
            }
            Ok(r)
        }
    };
}

padé13!(expm_real, f64, |v: f64| v.abs(), |v: f64| v);
padé13!(expm_complex, C64, |v: C64| v.norm(), |v: f64| C64::new(v, 0.0));

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gives_identity() {
        let z = Mat::<f64>::zeros(5, 5);
        let e = expm_real(&z).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((e[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn rotation_generator() {
        // exp([[0, −θ], [θ, 0]]) is a rotation by θ; θ large exercises squaring.
        for theta in [0.3, 2.0, 40.0] {
            let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 1) => -theta,
                (1, 0) => theta,
                _ => 0.0,
            });
            let e = expm_real(&a).unwrap();
            let (s, c) = f64::sin_cos(theta);
            let tol = 1e-13 * theta.max(1.0);
            assert!((e[(0, 0)] - c).abs() < tol && (e[(1, 0)] - s).abs() < tol, "theta {theta}");
        }
    }

    #[test]
    fn complex_diagonal() {
        let d = [C64::new(-3.0, 1.0), C64::new(0.5, -2.0), C64::new(-20.0, 0.0)];
        let a = Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) });
        let e = expm_complex(&a).unwrap();
        for i in 0..3 {
            assert!((e[(i, i)] - d[i].exp()).norm() <= 1e-12 * d[i].exp().norm());
        }
    }

    #[test]
    fn jordan_block() {
        // exp([[λ, 1], [0, λ]]) = e^λ [[1, 1], [0, 1]]
        let a = Mat::from_fn(2, 2, |i, j| if i == j { -1.5 } else if j == i + 1 { 1.0 } else { 0.0 });
        let e = expm_real(&a).unwrap();
        let el = (-1.5f64).exp();
        assert!((e[(0, 1)] - el).abs() < 1e-15 && (e[(1, 0)]).abs() < 1e-15);
    }
}
