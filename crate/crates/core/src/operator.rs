//! Assembly of `M ≈ −div(A∇)` on the torus, the sesquilinear form, the numerical-range
//! angle, the adjoint and the exponentially conjugated operator `e^{−Ψ} M e^{Ψ}`.
//!
//! Diagonal coefficients act on forward differences with face-averaged values. Off-diagonal
//! entries (symmetric and antisymmetric) act cellwise on centered differences
//! `C_i u(x) = (u(x+e_i) − u(x−e_i))/2h`, the forward differences averaged back to cells:
//!
//! `M = Σ_i D_iᵀ diag(ā_ii) D_i + Σ_{i≠j} C_iᵀ diag(A_ij) C_j`.
//!
//! The antisymmetric entries therefore assemble to a skew matrix, constants are in the
//! kernel on both sides, and `Re⟨Mu,u⟩ ≥ λ₀‖∇_h u‖²` holds exactly.

use crate::error::{Error, Result};
use crate::lattice::{gradient, CoefficientField, Field, Grid, VectorField};
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Anything with a lattice and an assembled real matrix that the solvers can act on.
pub trait LatticeOperator: Sync {
    fn grid(&self) -> &Grid;
    fn matrix(&self) -> &CsrMatrix;
    /// Lower bound on the numerical-range half-angle, when one has been estimated.
    fn theta0_estimate(&self) -> Option<f64>;

    fn apply(&self, u: &Field) -> Result<Field> {
        self.grid().check_same(u.grid())?;
        Ok(Field::from_raw(*self.grid(), self.matrix().mul_vec(u.values())))
    }
}

#[derive(Clone, Debug)]
pub struct EllipticOperator {
    grid: Grid,
    coefficients: CoefficientField,
    matrix: CsrMatrix,
    theta0_estimate: Option<f64>,
}

impl LatticeOperator for EllipticOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    fn theta0_estimate(&self) -> Option<f64> {
        self.theta0_estimate
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Full,
    AntisymmetricOnly,
}

fn assemble_matrix(coeffs: &CoefficientField, part: Part) -> CsrMatrix {
    let grid = *coeffs.grid();
    let dim = grid.dim();
    let n = grid.cell_count();
    let h = grid.spacing();
    let mut t = Vec::with_capacity(n * (2 * dim * dim + 1) * 2);
    if part == Part::Full {
        let w = 1.0 / (h * h);
        for x in 0..n {
            for i in 0..dim {
                let xp = grid.shift(x, i, 1);
                let a = 0.5 * (coeffs.sym(x)[i][i] + coeffs.sym(xp)[i][i]) * w;
                t.extend([(x, x, a), (x, xp, -a), (xp, x, -a), (xp, xp, a)]);
            }
        }
    }
    if dim == 2 {
        let w = 1.0 / (4.0 * h * h);
        for x in 0..n {
            let full = coeffs.matrix(x);
            let sym = coeffs.sym(x);
            for (i, j) in [(0usize, 1usize), (1, 0)] {
                let a = match part {
                    Part::Full => full[i][j],
                    Part::AntisymmetricOnly => full[i][j] - sym[i][j],
                };
                if a == 0.0 {
                    continue;
                }
                for (ri, si) in [(1isize, 1.0), (-1, -1.0)] {
                    for (cj, sj) in [(1isize, 1.0), (-1, -1.0)] {
                        t.push((grid.shift(x, i, ri), grid.shift(x, j, cj), a * w * si * sj));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, t)
}

/// Matrix of the antisymmetric contribution alone; skew by construction.
pub fn assemble_antisymmetric_part(coeffs: &CoefficientField) -> CsrMatrix {
    assemble_matrix(coeffs, Part::AntisymmetricOnly)
}

pub fn assemble(coeffs: &CoefficientField) -> EllipticOperator {
    EllipticOperator {
        grid: *coeffs.grid(),
        matrix: assemble_matrix(coeffs, Part::Full),
        coefficients: coeffs.clone(),
        theta0_estimate: None,
    }
}

/// `h^dim Σ (Mu) v̄`.
pub(crate) fn pairing(grid: &Grid, mu: &[C64], v: &[C64]) -> C64 {
    mu.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<C64>() * grid.cell_volume()
}

impl EllipticOperator {
    pub fn coefficients(&self) -> &CoefficientField {
        &self.coefficients
    }

    pub fn lambda0(&self) -> f64 {
        self.coefficients.lambda0()
    }

    pub fn bmo_bound(&self) -> f64 {
        self.coefficients.bmo_bound()
    }

    pub fn is_symmetric(&self) -> bool {
        self.coefficients.is_symmetric()
    }

    pub fn with_theta0_estimate(mut self, theta0: f64) -> Self {
        self.theta0_estimate = Some(theta0);
        self
    }

    /// Estimates the sector angle and stores it.
    pub fn with_sector_estimate(self, sample_count: usize, seed: u64) -> Result<Self> {
        let theta = sector_angle(&self, sample_count, seed)?;
        Ok(self.with_theta0_estimate(theta))
    }

    /// `⟨Mu, v⟩`, conjugate-linear in `v`.
    pub fn form_apply(&self, u: &Field, v: &Field) -> Result<C64> {
        self.grid.check_same(u.grid())?;
        self.grid.check_same(v.grid())?;
        Ok(pairing(&self.grid, &self.matrix.mul_vec(u.values()), v.values()))
    }

    /// Adjoint: transposed matrix with coefficients `Aᵀ`.
    pub fn adjoint(&self) -> EllipticOperator {
        EllipticOperator {
            grid: self.grid,
            coefficients: self.coefficients.transpose(),
            matrix: self.matrix.transpose(),
            theta0_estimate: self.theta0_estimate,
        }
    }

    pub fn conjugate(&self, weight: &ConjugationWeight) -> Result<ConjugatedOperator> {
        self.grid.check_same(&weight.grid)?;
        let down: Vec<f64> = weight.psi.iter().map(|p| (-p).exp()).collect();
        let up: Vec<f64> = weight.psi.iter().map(|p| p.exp()).collect();
        if down.iter().chain(&up).any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::Precondition("exponential weight over/underflows".into()));
        }
        Ok(ConjugatedOperator {
            grid: self.grid,
            matrix: self.matrix.scale_rows_cols(&down, &up),
            weight: weight.clone(),
            theta0_estimate: self.theta0_estimate,
        })
    }
}

/// Real weight `Ψ` for `e^{−Ψ}Me^{Ψ}`; stored with its mean removed.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugationWeight {
    grid: Grid,
    psi: Vec<f64>,
    lip_bound: f64,
}

impl ConjugationWeight {
    /// Uses the real part of `psi`.
    pub fn new(psi: &Field) -> Result<ConjugationWeight> {
        let grid = *psi.grid();
        let re = psi.real_part();
        if re.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite weight".into()));
        }
        let mean = re.iter().sum::<f64>() / re.len() as f64;
        let psi: Vec<f64> = re.iter().map(|v| v - mean).collect();
        let h = grid.spacing();
        let mut lip: f64 = 0.0;
        for x in 0..psi.len() {
            for axis in 0..grid.dim() {
                lip = lip.max((psi[grid.shift(x, axis, 1)] - psi[x]).abs() / h);
            }
        }
        Ok(ConjugationWeight { grid, psi, lip_bound: lip })
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// Largest `|ΔΨ|/h` over faces.
    pub fn lip_bound(&self) -> f64 {
        self.lip_bound
    }

    /// Whether `lip_bound ≤ δ/M₀`; recorded only.
    pub fn satisfies_smallness(&self, delta: f64, m0: f64) -> bool {
        self.lip_bound <= delta / m0
    }
}

#[derive(Clone, Debug)]
pub struct ConjugatedOperator {
    grid: Grid,
    matrix: CsrMatrix,
    weight: ConjugationWeight,
    theta0_estimate: Option<f64>,
}

impl ConjugatedOperator {
    pub fn weight(&self) -> &ConjugationWeight {
        &self.weight
    }
}

impl LatticeOperator for ConjugatedOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    fn theta0_estimate(&self) -> Option<f64> {
        self.theta0_estimate
    }
}

/// Four-term expansion `Lu − div(uA∇Ψ) − ∇Ψ·A∇u − (A∇Ψ·∇Ψ)u` with lattice derivatives.
///
/// Consistent with the exact similarity to first order in `h` for smooth `Ψ` and `u`.
pub fn expanded_conjugate_apply(op: &EllipticOperator, weight: &ConjugationWeight, u: &Field) -> Result<Field> {
    let grid = op.grid;
    grid.check_same(u.grid())?;
    let n = grid.cell_count();
    let dim = grid.dim();
    let psi = Field::from_raw(grid, weight.psi.iter().map(|&p| p.into()).collect());
    let gpsi = gradient(&psi);
    let gu = gradient(u);
    let a = |x: usize| op.coefficients.matrix(x);
    // A∇Ψ and A∇u at cells.
    let apply_a = |g: &VectorField, x: usize, i: usize| -> C64 { (0..dim).map(|j| g.component(j).values()[x] * a(x)[i][j]).sum() };
    let flux: Vec<Field> = (0..dim)
        .map(|i| Field::from_raw(grid, (0..n).map(|x| apply_a(&gpsi, x, i) * u.values()[x]).collect()))
        .collect();
    let div_flux = crate::lattice::divergence(&VectorField::new(flux)?)?;
    let lu = op.apply(u)?;
    let values = (0..n)
        .map(|x| {
            let mut drift = C64::new(0.0, 0.0);
            let mut potential = C64::new(0.0, 0.0);
            for i in 0..dim {
                drift += gpsi.component(i).values()[x] * apply_a(&gu, x, i);
                potential += apply_a(&gpsi, x, i) * gpsi.component(i).values()[x];
            }
            lu.values()[x] - div_flux.values()[x] - drift - potential * u.values()[x]
        })
        .collect();
    Ok(Field::from_raw(grid, values))
}

/// Random mean-zero complex vector with unit `L²` norm.
fn random_mean_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let mut u: Vec<C64> = (0..n).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let mean = u.iter().sum::<C64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let norm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    u
}

/// `(Re⟨Mu,u⟩, Im⟨Mu,u⟩)` without the cell-volume weight, which cancels in the angle.
fn form_parts(m: &CsrMatrix, u: &[C64]) -> (f64, f64) {
    let mu = m.mul_vec(u);
    let q: C64 = mu.iter().zip(u).map(|(a, b)| a * b.conj()).sum();
    (q.re, q.im)
}

/// Lower bound for the numerical-range half-angle: sampled maxima of
/// `arctan(|Im⟨Mu,u⟩| / Re⟨Mu,u⟩)` refined by normalized gradient ascent.
pub fn sector_angle<O: LatticeOperator + ?Sized>(op: &O, sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::Precondition("sample_count must be at least 1".into()));
    }
    let m = op.matrix();
    let mt = m.transpose();
    let n = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = |u: &[C64]| -> Result<f64> {
        let (re, im) = form_parts(m, u);
        if !(re > 0.0) {
            return Err(Error::Accretivity(format!("Re⟨Mu,u⟩ = {re:e} on a mean-zero sample")));
        }
        Ok(im / re)
    };
    let mut best = 0.0f64;
    for _ in 0..sample_count {
        let mut u = random_mean_zero(&mut rng, n);
        let mut r = ratio(&u)?;
        let mut step = 0.5;
        for _ in 0..60 {
            // With S = (M+Mᵀ)/2 and H = (M−Mᵀ)/2i, r = u*Hu/u*Su and the ascent direction of s·r
            // is s·Hu − |r|Su; H and S are applied through M and Mᵀ.
            let mu = m.mul_vec(&u);
            let mtu = mt.mul_vec(&u);
            let s = r.signum();
            let g: Vec<C64> = mu
                .iter()
                .zip(&mtu)
                .map(|(a, b)| {
                    let hu = (a - b) / C64::new(0.0, 2.0);
                    let su = (a + b) * 0.5;
                    hu * s - su * r.abs()
                })
                .collect();
            let gnorm = g.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                break;
            }
            let cand: Vec<C64> = u.iter().zip(&g).map(|(a, b)| a + b * (step / gnorm)).collect();
            let cand = renormalize(cand);
            let rc = ratio(&cand)?;
            if rc.abs() > r.abs() {
                u = cand;
                r = rc;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
        best = best.max(r.abs());
    }
    Ok(best.atan())
}

fn renormalize(mut u: Vec<C64>) -> Vec<C64> {
    let n = u.len() as f64;
    let mean = u.iter().sum::<C64>() / n;
    u.iter_mut().for_each(|v| *v -= mean);
    let norm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_coefficients, lp_norm_vector, CoefficientKind, CoefficientParams};

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(grid, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn bmo_op(n: usize, kappa: f64) -> EllipticOperator {
        let g = Grid::new(2, n, 1.0).unwrap();
        assemble(&make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(kappa), g).unwrap())
    }

    #[test]
    fn identity_stencil_1d() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        let op = assemble(&make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), g).unwrap());
        let w = 16.0;
        for r in 0..4 {
            for c in 0..4 {
                let expected = match (r as isize - c as isize).rem_euclid(4) {
                    0 => 2.0 * w,
                    1 | 3 => -w,
                    _ => 0.0,
                };
                assert_eq!(op.matrix().get(r, c), expected);
            }
        }
    }

    #[test]
    fn stencil_width_and_kernel() {
        let op = assemble(
            &make_coefficients(CoefficientKind::AnisotropicSym, &CoefficientParams::with_lambda0(0.4), Grid::new(2, 8, 1.0).unwrap())
                .unwrap(),
        );
        assert!(op.matrix().max_row_nnz() <= 9);
        let op = bmo_op(8, 0.5);
        let ones = vec![C64::new(1.0, 0.0); 64];
        let scale = op.matrix().max_abs_row_sum();
        assert!(op.matrix().mul_vec(&ones).iter().all(|v| v.norm() <= 1e-12 * scale));
        assert!(op.matrix().transpose().mul_vec(&ones).iter().all(|v| v.norm() <= 1e-12 * scale));
    }

    #[test]
    fn accretivity_lower_bound() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let mut coeffs = make_coefficients(CoefficientKind::AnisotropicSym, &CoefficientParams::with_lambda0(0.3), g).unwrap();
        let anti = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(2.0), g).unwrap();
        coeffs = coeffs.with_antisym(anti.parts().1.to_vec(), None).unwrap();
        let op = assemble(&coeffs);
        for s in 0..50 {
            let u = random_field(g, s);
            let q = op.form_apply(&u, &u).unwrap();
            let grad = lp_norm_vector(&gradient(&u), 2.0).unwrap().powi(2);
            assert!(q.re >= 0.3 * grad - 1e-10, "{} < {}", q.re, 0.3 * grad);
        }
    }

    #[test]
    fn identity_form_is_dirichlet_energy() {
        let g = Grid::new(2, 8, 2.0).unwrap();
        let op = assemble(&make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), g).unwrap());
        let u = random_field(g, 4);
        let q = op.form_apply(&u, &u).unwrap();
        let e = lp_norm_vector(&gradient(&u), 2.0).unwrap().powi(2);
        assert!((q.re - e).abs() <= 1e-12 * e && q.im.abs() <= 1e-12 * e);
        let c = Field::constant(g, C64::new(1.0, 2.0));
        assert!(op.form_apply(&c, &u).unwrap().norm() < 1e-12);
    }

    #[test]
    fn antisymmetric_part_is_real_neutral() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let coeffs = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(1.3), g).unwrap();
        let ma = assemble_antisymmetric_part(&coeffs);
        assert!(ma.add_scaled(&ma.transpose(), 1.0).max_abs() <= 1e-12 * ma.max_abs_row_sum());
        let u = random_field(g, 8);
        let q = pairing(&g, &ma.mul_vec(u.values()), u.values());
        assert!(q.re.abs() < 1e-12 * ma.max_abs_row_sum() * u.norm2().powi(2));
        // κ varied with A^s fixed leaves Re⟨Mu,u⟩ unchanged.
        let re = |k: f64| bmo_op(8, k).form_apply(&u, &u).unwrap().re;
        assert!((re(0.1) - re(3.0)).abs() <= 1e-12 * re(0.1));
    }

    #[test]
    fn sector_angle_behaviour() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let sym = assemble(&make_coefficients(CoefficientKind::AnisotropicSym, &CoefficientParams::with_lambda0(0.5), g).unwrap());
        assert!(sector_angle(&sym, 5, 1).unwrap() <= 1e-8);
        let t1 = sector_angle(&bmo_op(8, 0.3), 5, 7).unwrap();
        let t2 = sector_angle(&bmo_op(8, 0.9), 5, 7).unwrap();
        assert!(t2 >= t1 && t2 < std::f64::consts::FRAC_PI_2);
        assert!(sector_angle(&sym, 0, 1).is_err());
    }

    #[test]
    fn adjoint_properties() {
        let op = bmo_op(8, 0.7);
        let adj = op.adjoint();
        let back = adj.adjoint();
        assert_eq!(back.matrix(), op.matrix());
        assert_eq!(back.coefficients(), op.coefficients());
        let g = *op.grid();
        let (u, v) = (random_field(g, 1), random_field(g, 2));
        let lhs = op.form_apply(&u, &v).unwrap();
        let rhs = adj.form_apply(&v, &u).unwrap().conj();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        // The adjoint is also the assembly of the transposed coefficients.
        let direct = assemble(&op.coefficients().transpose());
        assert!(direct.matrix().max_abs_diff(adj.matrix()) <= 1e-12 * op.matrix().max_abs_row_sum());
    }

    #[test]
    fn trivial_conjugation() {
        let op = bmo_op(8, 0.5);
        let w = ConjugationWeight::new(&Field::constant(*op.grid(), C64::new(3.0, 0.0))).unwrap();
        assert_eq!(w.lip_bound(), 0.0);
        assert_eq!(op.conjugate(&w).unwrap().matrix(), op.matrix());
    }

    #[test]
    fn expanded_conjugation_is_first_order_consistent() {
        let err = |n: usize| {
            let g = Grid::new(2, n, 1.0).unwrap();
            let coeffs = make_coefficients(CoefficientKind::SmoothAntisym, &CoefficientParams::bmo_log(0.5), g).unwrap();
            let op = assemble(&coeffs);
            let tau = 2.0 * std::f64::consts::PI;
            let w = ConjugationWeight::new(&Field::from_real_fn(g, |x| 0.3 * (tau * x[0]).sin() * (tau * x[1]).cos())).unwrap();
            let u = Field::from_real_fn(g, |x| (tau * x[0]).cos() + 0.5 * (tau * x[1]).sin());
            let exact = op.conjugate(&w).unwrap().apply(&u).unwrap();
            let expanded = expanded_conjugate_apply(&op, &w, &u).unwrap();
            exact.sub(&expanded).unwrap().norm2() / exact.norm2()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 < 0.5 && e2 < 0.6 * e1, "{e1} {e2}");
    }
}
