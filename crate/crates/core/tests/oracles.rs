//! Frozen values from independent references: dense exponential, square root and resolvent
//! computed outside this crate (numpy/scipy in double precision) on small assembled operators,
//! and the closed-form circulant spectrum of the 1D Laplacian.

use elliptic_lab::calculus::{sqrt_apply, QuadratureSpec, SchurSqrt, SqrtRoute};
use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::operator::{assemble, EllipticOperator, LatticeOperator};
use elliptic_lab::resolvent::resolve;
use elliptic_lab::semigroup::{expm_oracle, semigroup_apply, ContourSpec, DensePropagator};
use elliptic_lab::spectral::SpectralCalculus;
use elliptic_lab::C64;
use serde_json::Value;

fn golden(name: &str) -> Value {
    let path = format!("{}/tests/golden/{name}.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn complex(v: &Value) -> Vec<C64> {
    let re = floats(&v["re"]);
    let im = v.get("im").map(floats).unwrap_or_else(|| vec![0.0; re.len()]);
    re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect()
}

fn operator(name: &str) -> EllipticOperator {
    let (kind, dim, n) = match name {
        "bmo_2d_n4" => (CoefficientKind::BmoLog, 2, 4),
        "aniso_1d_n8" => (CoefficientKind::AnisotropicSym, 1, 8),
        "antisym_2d_n4" => (CoefficientKind::SmoothAntisym, 2, 4),
        _ => unreachable!(),
    };
    let grid = Grid::new(dim, n, 1.0).unwrap();
    let params = CoefficientParams { kappa: 0.5, ..CoefficientParams::default() };
    assemble(&make_coefficients(kind, &params, grid).unwrap()).with_sector_estimate(16, 1).unwrap()
}

fn test_vectors(grid: Grid) -> (Field, Field) {
    let n = grid.cell_count();
    let v: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 + 0.2).cos() + 0.3 * (2.1 * i as f64).sin()).collect();
    let v = Field::from_real(grid, &v).unwrap();
    let w = v.minus_mean();
    (v, w)
}

fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    d / b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

const CASES: [&str; 3] = ["bmo_2d_n4", "aniso_1d_n8", "antisym_2d_n4"];

#[test]
fn assembled_matrices_match_frozen_entries() {
    for name in CASES {
        let g = golden(name);
        let op = operator(name);
        let dense = op.matrix().to_dense();
        let scale = dense.norm_max();
        let mut count = 0;
        for t in g["matrix"].as_array().unwrap() {
            let (i, j, v) = (t[0].as_u64().unwrap() as usize, t[1].as_u64().unwrap() as usize, t[2].as_f64().unwrap());
            assert!((dense[(i, j)] - v).abs() <= 1e-14 * scale, "{name} ({i},{j})");
            count += 1;
        }
        let nonzero = (0..dense.nrows()).flat_map(|i| (0..dense.ncols()).map(move |j| (i, j))).filter(|&(i, j)| dense[(i, j)] != 0.0).count();
        assert_eq!(nonzero, count, "{name}");
    }
}

#[test]
fn exponential_matches_reference() {
    for name in CASES {
        let g = golden(name);
        let op = operator(name);
        let (v, _) = test_vectors(*op.grid());
        for case in g["expm"].as_array().unwrap() {
            let t = case["t"].as_f64().unwrap();
            let want = complex(case);
            let pade = expm_oracle(&op, t, &v).unwrap();
            assert!(rel_err(pade.values(), &want) <= 1e-12, "{name} t={t}");
            let contour = semigroup_apply(&op, t, &v, &ContourSpec::for_operator(&op, C64::new(t, 0.0)).unwrap()).unwrap();
            assert!(rel_err(contour.values(), &want) <= 1e-8, "{name} t={t}");
        }
    }
}

#[test]
fn square_root_matches_reference() {
    for name in CASES {
        let g = golden(name);
        let op = operator(name);
        let (_, w) = test_vectors(*op.grid());
        let want = complex(&g["sqrt_w"]);
        let schur = SchurSqrt::new(&op).unwrap();
        let s = schur.sqrt_many(std::slice::from_ref(&w)).unwrap().remove(0);
        assert!(rel_err(s.values(), &want) <= 1e-12, "{name} schur");
        let spectral = SpectralCalculus::new(&op).unwrap();
        let s = spectral.sqrt_many(std::slice::from_ref(&w)).unwrap().remove(0);
        assert!(rel_err(s.values(), &want) <= 1e-10, "{name} spectral");
        let dense = DensePropagator::new(&op).unwrap();
        let q = sqrt_apply(&dense, &w, &QuadratureSpec::for_grid(op.grid())).unwrap();
        assert!(rel_err(q.values(), &want) <= 1e-6, "{name} quadrature");
    }
}

#[test]
fn resolvent_matches_reference() {
    for name in CASES {
        let g = golden(name);
        let op = operator(name);
        let (v, _) = test_vectors(*op.grid());
        let l = floats(&g["resolvent"]["lambda"]);
        let u = resolve(&op, C64::new(l[0], l[1]), &v, 1e-13).unwrap();
        assert!(rel_err(u.values(), &complex(&g["resolvent"])) <= 1e-12, "{name}");
    }
}

#[test]
fn spectrum_matches_reference() {
    for name in CASES {
        let g = golden(name);
        let op = operator(name);
        let want = floats(&g["eigenvalues_sorted_re"]);
        let spectral = SpectralCalculus::new(&op).unwrap();
        let mut got: Vec<f64> = spectral.eigenvalues().iter().map(|m| m.re).collect();
        got.sort_by(f64::total_cmp);
        let top = want.last().copied().unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10 * top, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn laplacian_spectrum_is_the_circulant_formula() {
    let g = golden("laplacian_1d_n8");
    let mu = floats(&g["mu"]);
    let grid = Grid::new(1, 8, 1.0).unwrap();
    let op = assemble(&make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), grid).unwrap());
    for (k, m) in mu.iter().enumerate() {
        let mode = Field::from_fn(grid, |x| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * x[0]));
        let lm = op.matrix().mul_vec(mode.values());
        let want: Vec<C64> = mode.values().iter().map(|v| v * m).collect();
        let d: f64 = lm.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d <= 1e-11 * 256.0, "k={k}: {d}");
    }
    assert!((mu[2] - 128.0).abs() < 1e-12 && (mu[4] - 256.0).abs() < 1e-12);
}
