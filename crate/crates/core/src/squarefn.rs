//! Vertical square functions `S(f)(x) = (∫₀^∞ |Ψ_t f(x)|² dμ(t))^{1/2}` on a geometric time grid,
//! the gradient energy `∫₀^∞ ‖∇e^{−tL}f‖² dt`, and `L^p` ratio sweeps against `‖∇f‖_p`.
//!
//! | kind  | `Ψ_t`                 | measure |
//! |-------|-----------------------|---------|
//! | GL    | `tL^{1/2}e^{−t²L}`     | `dt/t`  |
//! | GGRAD | `∇e^{−tL}`             | `dt`    |
//! | G1    | `tLe^{−t²L}`           | `dt/t`  |
//! | G2X   | `t²∇Le^{−t²L}`         | `dt/t`  |
//! | G2T   | `t²∂_t(Le^{−t²L})`     | `dt/t`  |

use crate::calculus::{test_fields, SqrtRoute, TestFamily};
use crate::error::{Error, Result};
use crate::fit::median;
use crate::lattice::{gradient, gradient_values, lp_norm, lp_norm_vector, Field, Grid};
use crate::semigroup::Propagator;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SquareFnKind {
    Gl,
    Ggrad,
    G1,
    G2x,
    G2t,
}

impl SquareFnKind {
    pub const ALL: [SquareFnKind; 5] = [SquareFnKind::Gl, SquareFnKind::Ggrad, SquareFnKind::G1, SquareFnKind::G2x, SquareFnKind::G2t];

    pub fn name(self) -> &'static str {
        match self {
            SquareFnKind::Gl => "GL",
            SquareFnKind::Ggrad => "GGRAD",
            SquareFnKind::G1 => "G1",
            SquareFnKind::G2x => "G2X",
            SquareFnKind::G2t => "G2T",
        }
    }

    /// GGRAD integrates against `dt`; every other kind against `dt/t`.
    pub fn plain_measure(self) -> bool {
        self == SquareFnKind::Ggrad
    }
}

/// Nodes `t_k = t_min ρ^k` up to the first node at or beyond `t_max`, with trapezoid weights
/// in `log t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub ratio: f64,
}

impl TimeGrid {
    /// `t_min = 10⁻³h²`, `t_max = 4Λ²`, `ρ = 1.1`; GGRAD starts at `10⁻⁵h²`. Below `t_min` the
    /// `dt/t` kinds lose `≈ 2μ_max t_min²` of the top modes and GGRAD loses `≈ μ_max t_min`.
    pub fn default_for(grid: &Grid, kind: SquareFnKind) -> TimeGrid {
        let h2 = grid.spacing().powi(2);
        let t_min = if kind.plain_measure() { 1e-5 * h2 } else { 1e-3 * h2 };
        TimeGrid { t_min, t_max: 4.0 * grid.side_length().powi(2), ratio: 1.1 }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = !(self.t_min > 0.0)
            || self.t_min > grid.spacing()
            || self.t_max < grid.side_length().powi(2)
            || !(self.ratio > 1.0 && self.ratio <= 1.5);
        if bad {
            return Err(Error::Precondition(format!("time grid {self:?} violates t_min ≤ h, t_max ≥ Λ², ρ ∈ (1, 1.5]")));
        }
        Ok(())
    }

    /// `(t_k, w_k)` with `Σ w_k g(t_k) ≈ ∫ g dt/t`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let count = ((self.t_max / self.t_min).ln() / self.ratio.ln()).ceil() as usize + 1;
        let step = self.ratio.ln();
        (0..count)
            .map(|k| {
                let w = if k == 0 || k + 1 == count { step / 2.0 } else { step };
                (self.t_min * self.ratio.powi(k as i32), w)
            })
            .collect()
    }
}

fn apply_matrix(prop: &dyn Propagator, v: &[C64]) -> Vec<C64> {
    prop.matrix().mul_vec(v)
}

/// `Ψ_t f` for each right-hand side at one node, as per-cell component lists (`dim` values for
/// gradient kinds, one otherwise) flattened cell-major.
fn psi(prop: &dyn Propagator, kind: SquareFnKind, t: f64, rhs: &[Vec<C64>], roots: Option<&[Vec<C64>]>) -> Result<Vec<Vec<C64>>> {
    let grid = *prop.grid();
    let tt = C64::new(t * t, 0.0);
    let scale = |v: Vec<C64>, c: f64| -> Vec<C64> { v.into_iter().map(|x| x * c).collect() };
    let grad = |v: &[C64], c: f64| -> Vec<C64> {
        let g = gradient_values(&grid, v);
        let n = v.len();
        let mut out = Vec::with_capacity(n * g.len());
        for x in 0..n {
            for comp in &g {
                out.push(comp[x] * c);
            }
        }
        out
    };
    Ok(match kind {
        SquareFnKind::Gl => {
            let r = roots.ok_or_else(|| Error::Precondition("GL needs L^{1/2} f".into()))?;
            prop.propagate(tt, 0, r)?.into_iter().map(|v| scale(v, t)).collect()
        }
        SquareFnKind::Ggrad => prop.propagate(C64::new(t, 0.0), 0, rhs)?.iter().map(|v| grad(v, 1.0)).collect(),
        SquareFnKind::G1 => prop.propagate(tt, 0, rhs)?.iter().map(|v| scale(apply_matrix(prop, v), t)).collect(),
        SquareFnKind::G2x => prop.propagate(tt, 0, rhs)?.iter().map(|v| grad(&apply_matrix(prop, v), t * t)).collect(),
        SquareFnKind::G2t => {
            // ∂_t e^{−t²L} f = 2t·(−L)e^{−t²L} f, taken from the derivative route of the propagator.
            prop.propagate(tt, 1, rhs)?.iter().map(|v| scale(apply_matrix(prop, v), 2.0 * t * t * t)).collect()
        }
    })
}

/// `2t³L²e^{−t²L} f`, the pointwise magnitude of G2T's integrand by the second route.
pub fn g2t_second_route(prop: &dyn Propagator, t: f64, f: &Field) -> Result<Field> {
    let u = prop.propagate(C64::new(t * t, 0.0), 0, &[f.values().to_vec()])?.remove(0);
    let v = apply_matrix(prop, &apply_matrix(prop, &u));
    Field::from_values(*f.grid(), v.into_iter().map(|x| x * (2.0 * t * t * t)).collect())
}

/// `Ψ_t f` of `kind` as cell-major values, for single-node checks.
pub fn integrand(prop: &dyn Propagator, kind: SquareFnKind, t: f64, f: &Field, root: Option<&Field>) -> Result<Vec<C64>> {
    let r = root.map(|r| vec![r.values().to_vec()]);
    Ok(psi(prop, kind, t, &[f.values().to_vec()], r.as_deref())?.remove(0))
}

/// Square-function fields for several inputs at once. GL needs `L^{1/2} f` for each input.
pub fn square_function_many(prop: &dyn Propagator, fs: &[Field], kind: SquareFnKind, tg: &TimeGrid, roots: Option<&[Field]>) -> Result<Vec<Field>> {
    let grid = *prop.grid();
    tg.validate(&grid)?;
    for f in fs {
        grid.check_same(f.grid())?;
    }
    let n = grid.cell_count();
    let comp = if matches!(kind, SquareFnKind::Ggrad | SquareFnKind::G2x) { grid.dim() } else { 1 };
    // Constants contribute nothing to any kind; dropping the mean keeps t³-scaled roundoff out.
    let rhs: Vec<Vec<C64>> = fs.iter().map(|f| f.minus_mean().values().to_vec()).collect();
    let root_vals: Option<Vec<Vec<C64>>> = match (kind, roots) {
        (SquareFnKind::Gl, Some(r)) if r.len() == fs.len() => Some(r.iter().map(|f| f.values().to_vec()).collect()),
        (SquareFnKind::Gl, _) => return Err(Error::Precondition("GL needs one L^{1/2} f per input".into())),
        _ => None,
    };
    let mut acc = vec![vec![0.0f64; n]; fs.len()];
    for (t, w) in tg.nodes() {
        let weight = if kind.plain_measure() { w * t } else { w };
        let vals = psi(prop, kind, t, &rhs, root_vals.as_deref())?;
        for (a, v) in acc.iter_mut().zip(&vals) {
            for (x, cell) in v.chunks(comp).enumerate() {
                a[x] += weight * cell.iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
        }
    }
    acc.into_iter().map(|a| Field::from_real(grid, &a.into_iter().map(f64::sqrt).collect::<Vec<_>>())).collect()
}

pub fn square_function(prop: &dyn Propagator, f: &Field, kind: SquareFnKind, tg: &TimeGrid, root: Option<&Field>) -> Result<Field> {
    let roots = root.map(|r| vec![r.clone()]);
    Ok(square_function_many(prop, std::slice::from_ref(f), kind, tg, roots.as_deref())?.remove(0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GgradEnergy {
    /// `∫₀^∞ ‖∇e^{−tL}f‖₂² dt`.
    pub energy: f64,
    /// `∫₀^∞ Re⟨Me^{−tL}f, e^{−tL}f⟩ dt` on the same grid.
    pub form_energy: f64,
    /// `‖f − mean f‖₂²/2`, the exact value of the form integral.
    pub exact_form_energy: f64,
    /// `energy / ‖f‖₂²`.
    pub constant: f64,
    /// `λ₀·form ≤ energy ≤ form/λ₀`.
    pub sandwich_holds: bool,
}

/// Gradient energy and the form energy, each by the GGRAD time grid.
pub fn ggrad_energy(prop: &dyn Propagator, f: &Field, tg: &TimeGrid, lambda0: f64) -> Result<GgradEnergy> {
    let grid = *prop.grid();
    tg.validate(&grid)?;
    grid.check_same(f.grid())?;
    let vol = grid.cell_volume();
    let (mut energy, mut form) = (0.0, 0.0);
    for (t, w) in tg.nodes() {
        let u = prop.propagate(C64::new(t, 0.0), 0, &[f.values().to_vec()])?.remove(0);
        let g: f64 = gradient_values(&grid, &u).iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() * vol;
        let mu = apply_matrix(prop, &u);
        let a: f64 = mu.iter().zip(&u).map(|(x, y)| (x * y.conj()).re).sum::<f64>() * vol;
        energy += w * t * g;
        form += w * t * a;
    }
    let centered = f.minus_mean();
    let exact = centered.norm2().powi(2) / 2.0;
    let fn2 = f.norm2().powi(2);
    let slack = 1e-6 * form.abs();
    Ok(GgradEnergy {
        energy,
        form_energy: form,
        exact_form_energy: exact,
        constant: if fn2 > 0.0 { energy / fn2 } else { 0.0 },
        sandwich_holds: lambda0 * form <= energy + slack && energy <= form / lambda0 + slack,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SquareFnRatios {
    pub p: f64,
    /// `‖S(F)‖_p / ‖∇_h F‖_p` per sample.
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SquareFnRatioReport {
    pub kind: SquareFnKind,
    pub family: String,
    /// Route used for `L^{1/2}` (GL only).
    pub sqrt_route: Option<String>,
    pub per_p: Vec<SquareFnRatios>,
    pub skipped: usize,
}

/// Ratios `‖S_kind(F)‖_p/‖∇_h F‖_p` on `count` test fields for every `p` in `ps`; fields with
/// `∇F = 0` are skipped.
pub fn square_function_ratio_sweep(
    prop: &dyn Propagator,
    root: Option<&dyn SqrtRoute>,
    ps: &[f64],
    kind: SquareFnKind,
    family: TestFamily,
    count: usize,
    seed: u64,
) -> Result<SquareFnRatioReport> {
    let grid = *prop.grid();
    let all = test_fields(grid, family, count, seed);
    let (fields, skipped): (Vec<Field>, usize) = {
        let kept: Vec<Field> = all.iter().filter(|f| gradient(f).norm2() > 0.0).cloned().collect();
        let s = all.len() - kept.len();
        (kept, s)
    };
    let roots = match kind {
        SquareFnKind::Gl => Some(root.ok_or_else(|| Error::Precondition("GL needs a square-root route".into()))?.sqrt_many(&fields)?),
        _ => None,
    };
    let tg = TimeGrid::default_for(&grid, kind);
    let sfs = square_function_many(prop, &fields, kind, &tg, roots.as_deref())?;
    let mut per_p = Vec::new();
    for &p in ps {
        let mut ratios = Vec::new();
        for (f, s) in fields.iter().zip(&sfs) {
            ratios.push(lp_norm(s, p)? / lp_norm_vector(&gradient(f), p)?);
        }
        per_p.push(SquareFnRatios {
            p,
            min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            max: ratios.iter().cloned().fold(0.0, f64::max),
            median: median(&ratios).unwrap_or(f64::NAN),
            ratios,
        });
    }
    Ok(SquareFnRatioReport {
        kind,
        family: family.describe(),
        sqrt_route: if kind == SquareFnKind::Gl { root.map(|r| r.route().to_string()) } else { None },
        per_p,
        skipped,
    })
}
