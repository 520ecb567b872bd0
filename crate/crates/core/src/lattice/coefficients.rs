//! Cellwise coefficient matrices `A = A^s + A^a` and the generator library.

use super::{Field, Grid};
use crate::error::{Error, Result};
use crate::spaces::bmo_seminorm;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Mat2 = [[f64; 2]; 2];

/// Slack allowed on the ellipticity bounds.
const ELLIPTICITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Identity,
    AnisotropicSym,
    SmoothAntisym,
    BmoLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientParams {
    /// Ellipticity constant `λ₀ ∈ (0, 1]`.
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    /// Amplitude of the antisymmetric entry.
    #[serde(default)]
    pub kappa: f64,
    /// Location of the logarithmic singularity; defaults to the box center.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    /// Declared BMO bound `Λ₀`; when absent the measured seminorm is recorded instead.
    #[serde(default)]
    pub bmo_bound: Option<f64>,
}

fn default_lambda0() -> f64 {
    1.0
}

impl Default for CoefficientParams {
    fn default() -> Self {
        CoefficientParams { lambda0: 1.0, kappa: 0.0, center: None, bmo_bound: None }
    }
}

impl CoefficientParams {
    pub fn with_lambda0(lambda0: f64) -> Self {
        CoefficientParams { lambda0, ..Default::default() }
    }

    pub fn bmo_log(kappa: f64) -> Self {
        CoefficientParams { kappa, ..Default::default() }
    }
}

/// Per-cell symmetric part and antisymmetric off-diagonal entry `a = A^a_{12} = −A^a_{21}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    grid: Grid,
    sym: Vec<Mat2>,
    antisym: Vec<f64>,
    lambda0: f64,
    bmo_bound: f64,
}

fn sym_eigenvalues(m: &Mat2, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (m[0][0], m[0][0]);
    }
    let tr = 0.5 * (m[0][0] + m[1][1]);
    let d = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[0][1]).sqrt();
    (tr - d, tr + d)
}

impl CoefficientField {
    /// Validates and wraps raw per-cell data.
    ///
    /// For `dim = 1` only `sym[·][0][0]` is read and `antisym` must vanish.
    pub fn from_parts(grid: Grid, sym: Vec<Mat2>, antisym: Vec<f64>, lambda0: f64, bmo_bound: Option<f64>) -> Result<Self> {
        let n = grid.cell_count();
        if sym.len() != n || antisym.len() != n {
            return Err(Error::Coefficient(format!("expected {n} cells of coefficient data")));
        }
        if !(lambda0 > 0.0 && lambda0 <= 1.0) {
            return Err(Error::Coefficient(format!("lambda0 = {lambda0} outside (0, 1]")));
        }
        let dim = grid.dim();
        for (i, m) in sym.iter().enumerate() {
            if m.iter().flatten().any(|v| !v.is_finite()) || !antisym[i].is_finite() {
                return Err(Error::Coefficient(format!("non-finite coefficient in cell {i}")));
            }
            if dim == 2 && m[0][1] != m[1][0] {
                return Err(Error::Coefficient(format!("symmetric part not symmetric in cell {i}")));
            }
            let (lo, hi) = sym_eigenvalues(m, dim);
            if lo < lambda0 - ELLIPTICITY_SLACK || hi > 1.0 / lambda0 + ELLIPTICITY_SLACK {
                return Err(Error::Coefficient(format!(
                    "cell {i}: eigenvalues [{lo:.6}, {hi:.6}] outside [{lambda0}, {}]",
                    1.0 / lambda0
                )));
            }
        }
        if dim == 1 && antisym.iter().any(|&a| a != 0.0) {
            return Err(Error::Coefficient("a one-dimensional antisymmetric part must vanish".into()));
        }
        let measured = bmo_seminorm(&Field::from_real(grid, &antisym)?);
        let bmo_bound = match bmo_bound {
            Some(declared) => {
                if !(declared > 0.0) {
                    return Err(Error::Coefficient(format!("declared BMO bound {declared} must be positive")));
                }
                if measured > declared {
                    return Err(Error::BmoBound { measured, declared });
                }
                declared
            }
            None => measured,
        };
        Ok(CoefficientField { grid, sym, antisym, lambda0, bmo_bound })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// BMO bound `Λ₀` on the antisymmetric entry (declared, or measured when none was given).
    pub fn bmo_bound(&self) -> f64 {
        self.bmo_bound
    }

    pub fn sym(&self, cell: usize) -> &Mat2 {
        &self.sym[cell]
    }

    pub fn antisym_entry(&self, cell: usize) -> f64 {
        self.antisym[cell]
    }

    pub fn antisym_field(&self) -> Field {
        Field::from_raw(self.grid, self.antisym.iter().map(|&a| a.into()).collect())
    }

    /// Full matrix `A^s + A^a` at a cell.
    pub fn matrix(&self, cell: usize) -> Mat2 {
        let s = self.sym[cell];
        let a = self.antisym[cell];
        [[s[0][0], s[0][1] + a], [s[1][0] - a, s[1][1]]]
    }

    pub fn is_symmetric(&self) -> bool {
        self.antisym.iter().all(|&a| a == 0.0)
    }

    /// Coefficients of the adjoint operator, `A ↦ Aᵀ`.
    pub fn transpose(&self) -> CoefficientField {
        CoefficientField { antisym: self.antisym.iter().map(|a| -a).collect(), ..self.clone() }
    }

    /// Same symmetric part with the antisymmetric entry replaced.
    pub fn with_antisym(&self, antisym: Vec<f64>, bmo_bound: Option<f64>) -> Result<CoefficientField> {
        CoefficientField::from_parts(self.grid, self.sym.clone(), antisym, self.lambda0, bmo_bound)
    }

    /// Symmetric part only.
    pub fn symmetric_part(&self) -> CoefficientField {
        CoefficientField { antisym: vec![0.0; self.antisym.len()], bmo_bound: 0.0, ..self.clone() }
    }

    /// Raw `(sym, antisym)` data.
    pub fn parts(&self) -> (&[Mat2], &[f64]) {
        (&self.sym, &self.antisym)
    }
}

pub fn make_coefficients(kind: CoefficientKind, params: &CoefficientParams, grid: Grid) -> Result<CoefficientField> {
    let n = grid.cell_count();
    let dim = grid.dim();
    let side = grid.side_length();
    let lambda0 = params.lambda0;
    if !(lambda0 > 0.0 && lambda0 <= 1.0) {
        return Err(Error::Coefficient(format!("lambda0 = {lambda0} outside (0, 1]")));
    }
    let identity: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    let needs_plane = |name: &str| {
        if dim != 2 {
            Err(Error::Coefficient(format!("{name} coefficients require dim = 2")))
        } else {
            Ok(())
        }
    };
    let (sym, antisym) = match kind {
        CoefficientKind::Identity => (vec![identity; n], vec![0.0; n]),
        CoefficientKind::AnisotropicSym => {
            // Eigenvalues λ₀^{±0.9·…} stay strictly inside [λ₀, 1/λ₀]; the frame rotates with x.
            let sym = (0..n)
                .map(|i| {
                    let x = grid.center(i);
                    let u = 2.0 * PI * x[0] / side;
                    let v = 2.0 * PI * x[1] / side;
                    let e1 = lambda0.powf(0.9 * u.sin());
                    if dim == 1 {
                        return [[e1, 0.0], [0.0, 1.0]];
                    }
                    let e2 = lambda0.powf(0.9 * v.cos());
                    let phi = u + v;
                    let (s, c) = phi.sin_cos();
                    let a = c * c * e1 + s * s * e2;
                    let b = c * s * (e1 - e2);
                    let d = s * s * e1 + c * c * e2;
                    [[a, b], [b, d]]
                })
                .collect();
            (sym, vec![0.0; n])
        }
        CoefficientKind::SmoothAntisym => {
            needs_plane("SMOOTH_ANTISYM")?;
            let a = (0..n)
                .map(|i| {
                    let x = grid.center(i);
                    params.kappa * (2.0 * PI * x[0] / side).sin() * (2.0 * PI * x[1] / side).cos()
                })
                .collect();
            (vec![identity; n], a)
        }
        CoefficientKind::BmoLog => {
            needs_plane("BMO_LOG")?;
            let x0 = params.center.unwrap_or([0.5 * side, 0.5 * side]);
            let h = grid.spacing();
            let a = (0..n)
                .map(|i| {
                    // The singular cell is evaluated at distance h/2.
                    let d = grid.torus_distance(grid.center(i), x0).max(0.5 * h);
                    params.kappa * (d / side + h / side).ln()
                })
                .collect();
            (vec![identity; n], a)
        }
    };
    CoefficientField::from_parts(grid, sym, antisym, lambda0, params.bmo_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(n: usize) -> Grid {
        Grid::new(2, n, 1.0).unwrap()
    }

    #[test]
    fn identity_coefficients() {
        let c = make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), plane(8)).unwrap();
        for i in 0..64 {
            assert_eq!(sym_eigenvalues(c.sym(i), 2), (1.0, 1.0));
            assert_eq!(c.antisym_entry(i), 0.0);
        }
        assert!(c.is_symmetric());
    }

    #[test]
    fn anisotropic_respects_ellipticity() {
        for dim in 1..=2 {
            let g = Grid::new(dim, 16, 2.0).unwrap();
            let c = make_coefficients(CoefficientKind::AnisotropicSym, &CoefficientParams::with_lambda0(0.25), g).unwrap();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..g.cell_count() {
                let (a, b) = sym_eigenvalues(c.sym(i), dim);
                lo = lo.min(a);
                hi = hi.max(b);
            }
            assert!(lo >= 0.25 && hi <= 4.0);
            assert!(hi / lo > 4.0, "coefficients should be genuinely anisotropic");
        }
    }

    #[test]
    fn rejects_eigenvalue_below_lambda0() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        let ok = vec![[[0.5 - 0.5e-12, 0.0], [0.0, 0.0]]; 4];
        assert!(CoefficientField::from_parts(g, ok, vec![0.0; 4], 0.5, None).is_ok());
        let bad = vec![[[0.5 - 2e-12, 0.0], [0.0, 0.0]]; 4];
        assert!(CoefficientField::from_parts(g, bad, vec![0.0; 4], 0.5, None).is_err());
        let too_big = vec![[[2.1, 0.0], [0.0, 0.0]]; 4];
        assert!(CoefficientField::from_parts(g, too_big, vec![0.0; 4], 0.5, None).is_err());
    }

    #[test]
    fn bmo_log_declared_bound() {
        let g = plane(16);
        let c = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(0.5), g).unwrap();
        let measured = c.bmo_bound();
        assert!(measured > 0.0);
        let tight = CoefficientParams { bmo_bound: Some(0.5 * measured), ..CoefficientParams::bmo_log(0.5) };
        assert!(matches!(make_coefficients(CoefficientKind::BmoLog, &tight, g), Err(Error::BmoBound { .. })));
        let loose = CoefficientParams { bmo_bound: Some(2.0 * measured), ..CoefficientParams::bmo_log(0.5) };
        assert_eq!(make_coefficients(CoefficientKind::BmoLog, &loose, g).unwrap().bmo_bound(), 2.0 * measured);
    }

    #[test]
    fn doubling_kappa_doubles_seminorm() {
        let g = plane(16);
        let s = |k: f64| make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(k), g).unwrap().bmo_bound();
        assert!((s(1.0) - 2.0 * s(0.5)).abs() <= 1e-12 * s(1.0));
    }

    #[test]
    fn bmo_log_unbounded_but_bmo_stable() {
        let stats: Vec<(f64, f64)> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let c = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(1.0), plane(n)).unwrap();
                (c.antisym_field().max_abs(), c.bmo_bound())
            })
            .collect();
        // sup grows by ≈ log 2 per doubling
        for w in stats.windows(2) {
            let growth = w[1].0 - w[0].0;
            assert!((growth - 2f64.ln()).abs() < 0.2, "growth {growth}");
        }
        let (lo, hi) = stats.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.1), hi.max(s.1)));
        assert!(hi / lo <= 1.5, "bmo spread {lo}..{hi}");
    }

    #[test]
    fn plane_only_kinds_reject_dim1() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        assert!(make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(1.0), g).is_err());
        assert!(make_coefficients(CoefficientKind::SmoothAntisym, &CoefficientParams::bmo_log(1.0), g).is_err());
    }

    #[test]
    fn transpose_flips_antisymmetric_part() {
        let c = make_coefficients(CoefficientKind::SmoothAntisym, &CoefficientParams::bmo_log(0.7), plane(8)).unwrap();
        let t = c.transpose();
        for i in 0..64 {
            let (a, b) = (c.matrix(i), t.matrix(i));
            assert_eq!(a[0][1], b[1][0]);
            assert_eq!(a[1][0], b[0][1]);
        }
        assert_eq!(t.transpose(), c);
    }
}
