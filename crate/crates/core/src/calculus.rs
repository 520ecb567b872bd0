//! Square root, inverse square root and Riesz transform by quadrature of the semigroup,
//!
//! `L^{1/2} f = π^{−1/2} ∫₀^∞ e^{−tL} Lf dt/√t`,  `L^{−1/2} g = π^{−1/2} ∫₀^∞ e^{−tL} g dt/√t`,
//!
//! a dense Schur-based reference for `L^{1/2}`, and Kato ratio sweeps.
//!
//! On the torus the constants span the kernel of `M`, so `L^{−1/2}` and `∇L^{−1/2}` act on
//! mean-zero fields and `L^{1/2}` maps constants to zero.

use crate::error::{Error, Result};
use crate::fit::median;
use crate::lattice::{gradient, gradient_values, lp_norm, lp_norm_vector, Field, Grid, VectorField};
use crate::linalg::{check_dense_cap, mat_vec, principal_sqrt_mean_zero, DenseSqrt};
use crate::operator::LatticeOperator;
use crate::quadrature::{gauss_legendre, inverse_sqrt_weight, Rule};
use crate::semigroup::Propagator;
use crate::spectral::SpectralCalculus;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// End of the near field, where the rule carries the `t^{−1/2}` weight exactly.
    pub t0: f64,
    pub near_nodes: usize,
    /// Far field: Gauss–Legendre panels `[t0·r^k, t0·r^{k+1}]`.
    pub ratio: f64,
    pub per_panel: usize,
    pub t_max: f64,
    /// Integration stops once two consecutive panels each add less than this fraction of the
    /// accumulated norm.
    pub tail_tolerance: f64,
}

impl QuadratureSpec {
    /// `t0 = h²`, ratio 1.25, `t_max = 100Λ²`.
    pub fn for_grid(grid: &Grid) -> QuadratureSpec {
        QuadratureSpec {
            t0: grid.spacing().powi(2),
            near_nodes: 12,
            ratio: 1.25,
            per_panel: 8,
            t_max: 100.0 * grid.side_length().powi(2),
            tail_tolerance: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t_max > self.t0) || !(self.ratio > 1.0) || self.near_nodes == 0 || self.per_panel == 0 || !(self.tail_tolerance > 0.0) {
            return Err(Error::Precondition(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }

    fn near_rule(&self) -> Rule {
        inverse_sqrt_weight(self.near_nodes, self.t0)
    }
}

/// `π^{−1/2} ∫₀^∞ e^{−tL} v_j dt/√t` for every right-hand side, each node result passed through
/// `post` (identity or a gradient) before accumulation.
fn semigroup_integral(
    prop: &dyn Propagator,
    rhs: &[Vec<C64>],
    spec: &QuadratureSpec,
    post: &dyn Fn(Vec<C64>) -> Vec<C64>,
) -> Result<Vec<Vec<C64>>> {
    spec.validate()?;
    let near = spec.near_rule();
    let mut acc: Option<Vec<Vec<C64>>> = None;
    let add = |t: f64, w: f64, acc: &mut Option<Vec<Vec<C64>>>| -> Result<f64> {
        let vals = prop.propagate(C64::new(t, 0.0), 0, rhs)?;
        let mut contrib = 0.0f64;
        let slot = acc.get_or_insert_with(Vec::new);
        for (k, v) in vals.into_iter().enumerate() {
            let v = post(v);
            if slot.len() <= k {
                slot.push(vec![C64::new(0.0, 0.0); v.len()]);
            }
            let mut c = 0.0;
            for (a, b) in slot[k].iter_mut().zip(&v) {
                *a += b * w;
                c += (b * w).norm_sqr();
            }
            contrib = contrib.max(c.sqrt());
        }
        Ok(contrib)
    };
    for (t, w) in near.nodes.iter().zip(&near.weights) {
        add(*t, *w, &mut acc)?;
    }
    let gl = gauss_legendre(spec.per_panel);
    let mut lo = spec.t0;
    let mut quiet = 0;
    let mut last = f64::INFINITY;
    while lo < spec.t_max {
        let hi = (lo * spec.ratio).min(spec.t_max);
        let panel = gl.mapped(lo, hi);
        let before: Vec<Vec<C64>> = acc.clone().unwrap_or_default();
        for (t, w) in panel.nodes.iter().zip(&panel.weights) {
            add(*t, *w / t.sqrt(), &mut acc)?;
        }
        let now = acc.as_ref().expect("near field evaluated");
        let mut rel = 0.0f64;
        for (a, b) in now.iter().zip(&before) {
            let total = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let delta = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            if total > 0.0 {
                rel = rel.max(delta / total);
            }
        }
        last = rel;
        lo = hi;
        quiet = if rel <= spec.tail_tolerance { quiet + 1 } else { 0 };
        if quiet >= 2 {
            let s = 1.0 / PI.sqrt();
            return Ok(acc.unwrap_or_default().into_iter().map(|v| v.into_iter().map(|x| x * s).collect()).collect());
        }
    }
    Err(Error::TailNotConverged { achieved: last, t_reached: lo })
}

fn without_mean(mut v: Vec<C64>) -> Vec<C64> {
    let m = v.iter().sum::<C64>() / v.len().max(1) as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}

fn check_mean_zero(f: &Field) -> Result<()> {
    let rms = f.norm2() / f.grid().side_length().powi(f.grid().dim() as i32).sqrt();
    if f.mean().norm() > 1e-10 * rms.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("field has mean {} (needs mean zero)", f.mean())));
    }
    Ok(())
}

/// Dense `L^{1/2}`: principal root on the mean-zero subspace, zero on constants.
pub fn sqrtm_oracle<O: LatticeOperator + ?Sized>(op: &O) -> Result<DenseSqrt> {
    check_dense_cap(op.grid().cell_count())?;
    principal_sqrt_mean_zero(&op.matrix().to_dense())
}

/// `L^{1/2} f` by quadrature of `t ↦ e^{−tL}(Mf)/√t`.
pub fn sqrt_apply(prop: &dyn Propagator, f: &Field, spec: &QuadratureSpec) -> Result<Field> {
    Ok(sqrt_apply_many(prop, std::slice::from_ref(f), spec)?.remove(0))
}

pub fn sqrt_apply_many(prop: &dyn Propagator, fs: &[Field], spec: &QuadratureSpec) -> Result<Vec<Field>> {
    let grid = *prop.grid();
    for f in fs {
        grid.check_same(f.grid())?;
    }
    // The range of M is mean-zero; removing the roundoff mean keeps the tail decaying.
    let rhs: Vec<Vec<C64>> = fs.iter().map(|f| without_mean(prop.matrix().mul_vec(f.values()))).collect();
    if rhs.iter().all(|v| v.iter().all(|x| x.norm() == 0.0)) {
        return Ok(fs.iter().map(|_| Field::zeros(grid)).collect());
    }
    semigroup_integral(prop, &rhs, spec, &|v| v)?.into_iter().map(|v| Field::from_values(grid, v)).collect()
}

/// `L^{−1/2} g` for mean-zero `g`.
pub fn inv_sqrt_apply(prop: &dyn Propagator, g: &Field, spec: &QuadratureSpec) -> Result<Field> {
    prop.grid().check_same(g.grid())?;
    check_mean_zero(g)?;
    if g.max_abs() == 0.0 {
        return Ok(Field::zeros(*g.grid()));
    }
    let v = semigroup_integral(prop, &[without_mean(g.values().to_vec())], spec, &|v| v)?.remove(0);
    Field::from_values(*g.grid(), v)
}

/// `∇L^{−1/2} f` with the gradient taken at every quadrature node.
pub fn riesz_apply(prop: &dyn Propagator, f: &Field, spec: &QuadratureSpec) -> Result<VectorField> {
    let grid = *prop.grid();
    grid.check_same(f.grid())?;
    check_mean_zero(f)?;
    if f.max_abs() == 0.0 {
        return Ok(VectorField::zeros(grid));
    }
    let stack = move |u: Vec<C64>| gradient_values(&grid, &u).concat();
    let v = semigroup_integral(prop, &[without_mean(f.values().to_vec())], spec, &stack)?.remove(0);
    let n = grid.cell_count();
    VectorField::new(v.chunks(n).map(|c| Field::from_values(grid, c.to_vec())).collect::<Result<Vec<_>>>()?)
}

/// A way of applying `L^{1/2}`; the name goes into reports.
pub trait SqrtRoute {
    fn grid(&self) -> &Grid;
    fn sqrt_many(&self, fs: &[Field]) -> Result<Vec<Field>>;
    fn route(&self) -> &'static str;
}

/// Quadrature over a propagator.
pub struct QuadratureSqrt<'a> {
    pub propagator: &'a dyn Propagator,
    pub spec: QuadratureSpec,
}

impl SqrtRoute for QuadratureSqrt<'_> {
    fn grid(&self) -> &Grid {
        self.propagator.grid()
    }
    fn sqrt_many(&self, fs: &[Field]) -> Result<Vec<Field>> {
        sqrt_apply_many(self.propagator, fs, &self.spec)
    }
    fn route(&self) -> &'static str {
        "quadrature"
    }
}

/// The dense Schur root.
pub struct SchurSqrt {
    grid: Grid,
    root: DenseSqrt,
}

impl SchurSqrt {
    pub fn new<O: LatticeOperator + ?Sized>(op: &O) -> Result<SchurSqrt> {
        Ok(SchurSqrt { grid: *op.grid(), root: sqrtm_oracle(op)? })
    }

    pub fn squaring_residual(&self) -> f64 {
        self.root.squaring_residual
    }
}

impl SqrtRoute for SchurSqrt {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn sqrt_many(&self, fs: &[Field]) -> Result<Vec<Field>> {
        fs.iter().map(|f| Field::from_values(self.grid, mat_vec(&self.root.matrix, f.values()))).collect()
    }
    fn route(&self) -> &'static str {
        "schur"
    }
}

impl SqrtRoute for SpectralCalculus {
    fn grid(&self) -> &Grid {
        Propagator::grid(self)
    }
    fn sqrt_many(&self, fs: &[Field]) -> Result<Vec<Field>> {
        let rhs: Vec<Vec<C64>> = fs.iter().map(|f| f.values().to_vec()).collect();
        let grid = *Propagator::grid(self);
        self.apply_function(|m| m.sqrt(), &rhs).into_iter().map(|v| Field::from_values(grid, v)).collect()
    }
    fn route(&self) -> &'static str {
        "spectral"
    }
}

/// Random mean-zero test fields, defined in physical units so that the same seed gives the
/// same continuum profile on every resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFamily {
    /// Real trigonometric polynomials with frequencies `0 < |k|_∞ ≤ max_frequency`.
    BandLimited { max_frequency: usize },
    /// Sums of `count` Gaussian bumps of width in `[min_width, max_width]` (units of `Λ`), random signs.
    Bumps { count: usize, min_width: f64, max_width: f64 },
    /// Alternates between the two.
    Mixed { max_frequency: usize, count: usize },
}

impl TestFamily {
    pub fn describe(&self) -> String {
        match self {
            TestFamily::BandLimited { max_frequency } => format!("band-limited, |k|_inf <= {max_frequency}"),
            TestFamily::Bumps { count, min_width, max_width } => format!("{count} bumps, widths [{min_width}, {max_width}]·Λ"),
            TestFamily::Mixed { max_frequency, count } => format!("band-limited |k|_inf <= {max_frequency} and {count} bumps, alternating"),
        }
    }
}

fn band_limited(grid: Grid, kmax: usize, rng: &mut ChaCha8Rng) -> Field {
    let side = grid.side_length();
    let k = kmax as i64;
    let ky_range = if grid.dim() == 2 { -k..=k } else { 0..=0 };
    let mut modes = Vec::new();
    for kx in -k..=k {
        for ky in ky_range.clone() {
            if (kx, ky) != (0, 0) {
                modes.push((kx as f64, ky as f64, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)));
            }
        }
    }
    Field::from_real_fn(grid, |x| {
        modes.iter().map(|(kx, ky, a, ph)| a * (2.0 * PI * (kx * x[0] + ky * x[1]) / side + ph).cos()).sum()
    })
    .minus_mean()
}

fn bumps(grid: Grid, count: usize, wmin: f64, wmax: f64, rng: &mut ChaCha8Rng) -> Field {
    let side = grid.side_length();
    let list: Vec<([f64; 2], f64, f64)> = (0..count)
        .map(|_| {
            let c = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
            let w = rng.random_range(wmin..=wmax) * side;
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (c, w, s)
        })
        .collect();
    Field::from_real_fn(grid, |x| {
        list.iter()
            .map(|(c, w, s)| {
                let mut p = x;
                if grid.dim() == 1 {
                    p[1] = c[1];
                }
                let d = grid.torus_distance(p, *c);
                s * (-(d / w).powi(2)).exp()
            })
            .sum()
    })
    .minus_mean()
}

/// `count` fields of `family`, deterministic in `seed`.
pub fn test_fields(grid: Grid, family: TestFamily, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match family {
            TestFamily::BandLimited { max_frequency } => band_limited(grid, max_frequency, &mut rng),
            TestFamily::Bumps { count, min_width, max_width } => bumps(grid, count, min_width, max_width, &mut rng),
            TestFamily::Mixed { max_frequency, count } => {
                if i % 2 == 0 {
                    band_limited(grid, max_frequency, &mut rng)
                } else {
                    bumps(grid, count, 0.03, 0.15, &mut rng)
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KatoReport {
    pub p: f64,
    pub family: String,
    pub route: String,
    /// `‖L^{1/2}f‖_p / ‖∇_h f‖_p` per sample.
    pub upper_ratios: Vec<f64>,
    /// `‖∇_h f‖_p / ‖L^{1/2}f‖_p` per sample.
    pub lower_ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub lower_max: f64,
}

/// Kato ratios on `count` fields of `family`; fields with vanishing gradient are skipped.
pub fn kato_ratio_sweep(root: &dyn SqrtRoute, p: f64, family: TestFamily, count: usize, seed: u64) -> Result<KatoReport> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(p));
    }
    let fields: Vec<Field> = test_fields(*root.grid(), family, count, seed).into_iter().filter(|f| f.max_abs() > 0.0).collect();
    let roots = root.sqrt_many(&fields)?;
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (f, s) in fields.iter().zip(&roots) {
        let g = lp_norm_vector(&gradient(f), p)?;
        let r = lp_norm(s, p)?;
        if g > 0.0 && r > 0.0 {
            upper.push(r / g);
            lower.push(g / r);
        }
    }
    if upper.is_empty() {
        return Err(Error::InsufficientSamples("no field with nonzero gradient".into()));
    }
    Ok(KatoReport {
        p,
        family: family.describe(),
        route: root.route().into(),
        min: upper.iter().cloned().fold(f64::INFINITY, f64::min),
        max: upper.iter().cloned().fold(0.0, f64::max),
        median: median(&upper).unwrap_or(f64::NAN),
        lower_max: lower.iter().cloned().fold(0.0, f64::max),
        upper_ratios: upper,
        lower_ratios: lower,
    })
}
