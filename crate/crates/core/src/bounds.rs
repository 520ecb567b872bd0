//! Off-diagonal decay of the families `e^{−zL}`, `zLe^{−zL}`, `√z∇e^{−zL}` (and their adjoint
//! counterparts) between boxes of cells, and `L^p → L^q` norms of these families along time grids.
//!
//! On a fixed grid every family is bounded between any pair of Lebesgue spaces with some
//! constant, so the sweeps measure how norms scale in `t` and how they move under refinement,
//! never finiteness at one resolution.

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::lattice::{conjugate_exponent, gradient_values, Grid};
use crate::linalg::{check_dense_cap, spectral_norm};
use crate::semigroup::Propagator;
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Header stored with every sweep report.
pub const FINITE_DIMENSION_CAVEAT: &str = "every family is L^p-L^q bounded on a fixed grid; \
acceptance concerns scaling in t and stability under refinement, not finiteness";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FamilyTag {
    Semigroup,
    TLt,
    SqrtTGrad,
    AdjointSemigroup,
    AdjointTLt,
    AdjointSqrtTGrad,
}

impl FamilyTag {
    pub const PRIMAL: [FamilyTag; 3] = [FamilyTag::Semigroup, FamilyTag::TLt, FamilyTag::SqrtTGrad];

    pub fn is_adjoint(self) -> bool {
        matches!(self, FamilyTag::AdjointSemigroup | FamilyTag::AdjointTLt | FamilyTag::AdjointSqrtTGrad)
    }

    pub fn is_gradient(self) -> bool {
        matches!(self, FamilyTag::SqrtTGrad | FamilyTag::AdjointSqrtTGrad)
    }

    /// The same family built on the adjoint operator, and back.
    pub fn dual(self) -> FamilyTag {
        match self {
            FamilyTag::Semigroup => FamilyTag::AdjointSemigroup,
            FamilyTag::TLt => FamilyTag::AdjointTLt,
            FamilyTag::SqrtTGrad => FamilyTag::AdjointSqrtTGrad,
            FamilyTag::AdjointSemigroup => FamilyTag::Semigroup,
            FamilyTag::AdjointTLt => FamilyTag::TLt,
            FamilyTag::AdjointSqrtTGrad => FamilyTag::SqrtTGrad,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Semigroup => "SEMIGROUP",
            FamilyTag::TLt => "T_LT",
            FamilyTag::SqrtTGrad => "SQRT_T_GRAD",
            FamilyTag::AdjointSemigroup => "ADJOINT_SEMIGROUP",
            FamilyTag::AdjointTLt => "ADJOINT_T_LT",
            FamilyTag::AdjointSqrtTGrad => "ADJOINT_SQRT_T_GRAD",
        }
    }
}

/// Propagators for `L` and, when adjoint families are needed, for `L*`.
#[derive(Clone, Copy)]
pub struct Families<'a> {
    primal: &'a dyn Propagator,
    adjoint: Option<&'a dyn Propagator>,
}

impl<'a> Families<'a> {
    pub fn new(primal: &'a dyn Propagator) -> Families<'a> {
        Families { primal, adjoint: None }
    }

    pub fn with_adjoint(mut self, adjoint: &'a dyn Propagator) -> Result<Families<'a>> {
        self.primal.grid().check_same(adjoint.grid())?;
        self.adjoint = Some(adjoint);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        self.primal.grid()
    }

    /// Number of values per cell in the output of `family`.
    pub fn components(&self, family: FamilyTag) -> usize {
        if family.is_gradient() {
            self.grid().dim()
        } else {
            1
        }
    }

    fn propagator(&self, family: FamilyTag) -> Result<&'a dyn Propagator> {
        if family.is_adjoint() {
            self.adjoint.ok_or_else(|| Error::Precondition(format!("{} needs an adjoint propagator", family.name())))
        } else {
            Ok(self.primal)
        }
    }

    /// `T_z f` for each right-hand side; gradient families return the components stacked
    /// cell-major, `out[x·dim + axis]`.
    pub fn apply(&self, family: FamilyTag, z: C64, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let prop = self.propagator(family)?;
        let grid = *self.grid();
        match family {
            FamilyTag::Semigroup | FamilyTag::AdjointSemigroup => prop.propagate(z, 0, rhs),
            FamilyTag::TLt | FamilyTag::AdjointTLt => {
                let out = prop.propagate(z, 1, rhs)?;
                Ok(out.into_iter().map(|v| v.into_iter().map(|x| -z * x).collect()).collect())
            }
            FamilyTag::SqrtTGrad | FamilyTag::AdjointSqrtTGrad => {
                let out = prop.propagate(z, 0, rhs)?;
                let s = z.sqrt();
                Ok(out.iter().map(|u| interleave(&gradient_values(&grid, u), s)).collect())
            }
        }
    }

    /// Dense matrix of `T_z` acting on cell values.
    pub fn matrix(&self, family: FamilyTag, z: C64) -> Result<Mat<C64>> {
        let n = self.grid().cell_count();
        check_dense_cap(n)?;
        let cols = self.apply(family, z, &unit_vectors(n, &(0..n).collect::<Vec<_>>()))?;
        Ok(Mat::from_fn(cols[0].len(), n, |i, j| cols[j][i]))
    }
}

fn interleave(comps: &[Vec<C64>], scale: C64) -> Vec<C64> {
    let dim = comps.len();
    let n = comps.first().map_or(0, |c| c.len());
    let mut out = vec![C64::new(0.0, 0.0); n * dim];
    for (axis, c) in comps.iter().enumerate() {
        for (x, v) in c.iter().enumerate() {
            out[x * dim + axis] = v * scale;
        }
    }
    out
}

fn unit_vectors(n: usize, cells: &[usize]) -> Vec<Vec<C64>> {
    cells
        .iter()
        .map(|&c| {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[c] = C64::new(1.0, 0.0);
            v
        })
        .collect()
}

/// Axis-aligned box of cells on the torus, `start + [0, extent)` per axis with wrap-around.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub start: [usize; 2],
    pub extent: [usize; 2],
}

impl CellSet {
    pub fn new(grid: &Grid, start: [usize; 2], extent: [usize; 2]) -> Result<CellSet> {
        let n = grid.points_per_axis();
        for a in 0..grid.dim() {
            if extent[a] == 0 || extent[a] > n || start[a] >= n {
                return Err(Error::Precondition(format!("box start {start:?} extent {extent:?} does not fit N = {n}")));
            }
        }
        let mut s = start;
        let mut e = extent;
        for a in grid.dim()..2 {
            s[a] = 0;
            e[a] = 1;
        }
        Ok(CellSet { start: s, extent: e })
    }

    pub fn whole(grid: &Grid) -> CellSet {
        let n = grid.points_per_axis();
        CellSet { start: [0, 0], extent: [n, if grid.dim() == 2 { n } else { 1 }] }
    }

    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        let n = grid.points_per_axis();
        let mut out = Vec::with_capacity(self.extent[0] * self.extent[1]);
        for j in 0..self.extent[1] {
            for i in 0..self.extent[0] {
                out.push(grid.index([(self.start[0] + i) % n, (self.start[1] + j) % n]));
            }
        }
        out
    }

    /// Torus distance between the closest cell centers of the two boxes.
    pub fn distance(&self, other: &CellSet, grid: &Grid) -> f64 {
        let n = grid.points_per_axis() as i64;
        let mut s = 0.0;
        for a in 0..grid.dim() {
            let gap = circular_interval_gap(self.start[a] as i64, self.extent[a] as i64, other.start[a] as i64, other.extent[a] as i64, n);
            s += (gap as f64 * grid.spacing()).powi(2);
        }
        s.sqrt()
    }
}

/// Smallest circular index difference between `a + [0, la)` and `b + [0, lb)` modulo `n`.
fn circular_interval_gap(a: i64, la: i64, b: i64, lb: i64, n: i64) -> i64 {
    // b − a reduced into [0, n); the intervals meet iff the offset lies in (−lb, la).
    let d = (b - a).rem_euclid(n);
    if d < la || d > n - lb {
        return 0;
    }
    (d - (la - 1)).min(n - d - (lb - 1))
}

/// `‖χ_F T_z χ_E‖_{2→2}` from the singular values of the restricted block.
pub fn localized_norm(fam: &Families, family: FamilyTag, z: C64, e: &CellSet, f: &CellSet) -> Result<f64> {
    let grid = *fam.grid();
    let cols = source_columns(fam, family, z, e)?;
    block_norm(&cols, &f.cells(&grid), fam.components(family))
}

/// `T_z` applied to the unit vectors of `e`.
fn source_columns(fam: &Families, family: FamilyTag, z: C64, e: &CellSet) -> Result<Vec<Vec<C64>>> {
    let grid = *fam.grid();
    let ec = e.cells(&grid);
    check_dense_cap(ec.len())?;
    fam.apply(family, z, &unit_vectors(grid.cell_count(), &ec))
}

/// Spectral norm of the rows of `cols` belonging to the cells `fc`.
fn block_norm(cols: &[Vec<C64>], fc: &[usize], comp: usize) -> Result<f64> {
    check_dense_cap(fc.len().min(cols.len()))?;
    let block = Mat::from_fn(fc.len() * comp, cols.len(), |i, j| cols[j][fc[i / comp] * comp + i % comp]);
    spectral_norm(&block)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffDiagSample {
    pub z_re: f64,
    pub z_im: f64,
    pub distance: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffDiagReport {
    pub family: FamilyTag,
    /// `arg z` shared by all samples.
    pub angle: f64,
    pub samples: Vec<OffDiagSample>,
    /// `C` and `α` of `‖χ_F T_z χ_E‖ ≤ C e^{−α d(E,F)²/|z|}`.
    pub c: f64,
    pub alpha: f64,
    pub r_squared: f64,
    pub fitted_samples: usize,
}

/// Source box `E` at the origin and target boxes `F` shifted along the first axis; the
/// separations are the index gaps between the boxes.
pub fn separated_boxes(grid: &Grid, side: usize, gaps: &[usize]) -> Result<Vec<(CellSet, CellSet)>> {
    let n = grid.points_per_axis();
    let ext = [side, side];
    gaps.iter()
        .map(|&g| {
            let shift = side - 1 + g;
            if shift + side > n + 1 - g.min(1) {
                return Err(Error::Precondition(format!("gap {g} with side {side} wraps around N = {n}")));
            }
            Ok((CellSet::new(grid, [0, 0], ext)?, CellSet::new(grid, [shift % n, 0], ext)?))
        })
        .collect()
}

/// Level, relative to `‖T_z χ_E‖`, below which localized norms are treated as roundoff and
/// left out of the fit.
const OFFDIAG_FLOOR: f64 = 1e-12;

/// Localized norms on the product of `times` and `pairs`, then the regression of `log norm` on
/// `d²/|z|` over samples above roundoff. All times must share one argument.
pub fn offdiag_fit(fam: &Families, family: FamilyTag, times: &[C64], pairs: &[(CellSet, CellSet)]) -> Result<OffDiagReport> {
    let Some(first) = times.first() else {
        return Err(Error::InsufficientSamples("empty time grid".into()));
    };
    let angle = first.arg();
    if times.iter().any(|z| (z.arg() - angle).abs() > 1e-12) {
        return Err(Error::Precondition("offdiag_fit expects times on a single ray".into()));
    }
    let grid = *fam.grid();
    let mut samples = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let comp = fam.components(family);
    let all: Vec<usize> = (0..grid.cell_count()).collect();
    for &z in times {
        // Pairs usually share their source box; its columns are computed once.
        let mut cached: Option<(&CellSet, Vec<Vec<C64>>, f64)> = None;
        for (e, f) in pairs {
            if cached.as_ref().is_none_or(|(c, _, _)| *c != e) {
                let cols = source_columns(fam, family, z, e)?;
                let scale = block_norm(&cols, &all, comp)?;
                cached = Some((e, cols, scale));
            }
            let (_, cols, scale) = cached.as_ref().expect("filled above");
            let d = e.distance(f, &grid);
            let norm = block_norm(cols, &f.cells(&grid), comp)?;
            samples.push(OffDiagSample { z_re: z.re, z_im: z.im, distance: d, norm });
            if norm > OFFDIAG_FLOOR * scale && d > 0.0 {
                xs.push(d * d / z.norm());
                ys.push(norm.ln());
            }
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(OffDiagReport { family, angle, samples, c: fit.intercept.exp(), alpha: -fit.slope, r_squared: fit.r_squared, fitted_samples: xs.len() })
}

/// Result of a mixed-norm estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PqNorm {
    pub value: f64,
    /// True for the closed-form corners, false for power-iteration lower bounds.
    pub exact: bool,
    /// Interpolation bound `‖A‖_{1→q/p}^{1/p} ‖A‖_{∞→∞}^{1−1/p}`, always valid.
    pub upper_bound: f64,
    /// Estimates of the best restart, one per iteration.
    pub trace: Vec<f64>,
}

/// Matrix acting on cell values whose output has `components` values per cell (cell-major),
/// measured in lattice norms `(Σ_x |v(x)|^q h^dim)^{1/q}` with `|v(x)|` Euclidean.
pub struct LatticeMatrix<'a> {
    pub matrix: &'a Mat<C64>,
    pub components: usize,
    pub cell_volume: f64,
}

fn cell_magnitudes(v: &[C64], comp: usize) -> Vec<f64> {
    v.chunks(comp).map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).collect()
}

fn lq(mags: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return mags.iter().cloned().fold(0.0, f64::max);
    }
    let m = mags.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    m * mags.iter().map(|a| (a / m).powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Norming functional of `v` in `ℓ^q(ℓ²)`: `w` with `‖w‖_{q'} = 1` and `⟨w, v⟩ = ‖v‖_q`.
fn dual_vector(v: &[C64], comp: usize, q: f64) -> Vec<C64> {
    let mags = cell_magnitudes(v, comp);
    let norm = lq(&mags, q);
    if norm == 0.0 {
        return vec![C64::new(0.0, 0.0); v.len()];
    }
    let mut out = Vec::with_capacity(v.len());
    for (cell, m) in v.chunks(comp).zip(&mags) {
        let s = if *m == 0.0 { 0.0 } else { (m / norm).powf(q - 1.0) / m };
        out.extend(cell.iter().map(|x| x * s));
    }
    out
}

fn adjoint_mul(a: &Mat<C64>, y: &[C64]) -> Vec<C64> {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].conj() * y[i]).sum()).collect()
}

fn mul(a: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    crate::linalg::mat_vec(a, x)
}

/// Unweighted `‖A‖_{ℓ¹→ℓ^s}`: largest column norm.
fn one_to(a: &Mat<C64>, comp: usize, s: f64) -> f64 {
    (0..a.ncols())
        .map(|j| {
            let col: Vec<C64> = (0..a.nrows()).map(|i| a[(i, j)]).collect();
            lq(&cell_magnitudes(&col, comp), s)
        })
        .fold(0.0, f64::max)
}

/// Unweighted `‖A‖_{ℓ^∞→ℓ^∞}` for scalar output, and the bound `max_x Σ_j ‖A_x e_j‖` otherwise.
fn inf_to_inf(a: &Mat<C64>, comp: usize) -> f64 {
    let cells = a.nrows() / comp;
    (0..cells)
        .map(|x| (0..a.ncols()).map(|j| (0..comp).map(|c| a[(x * comp + c, j)].norm_sqr()).sum::<f64>().sqrt()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖A‖_{L^p → L^q}` in lattice norms, `1 ≤ p ≤ q ≤ ∞`. Exact at `p = 1`, at `q = ∞` for
/// scalar output and at `p = q = 2`; elsewhere the best of Boyd's power iteration over the
/// all-ones start and `restarts` random starts.
pub fn pq_norm(a: &LatticeMatrix, p: f64, q: f64, restarts: usize, seed: u64) -> Result<PqNorm> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::InvalidExponent(p.min(q)));
    }
    if p > q {
        return Err(Error::Precondition(format!("p = {p} > q = {q} is not supported")));
    }
    let m = a.matrix;
    let comp = a.components.max(1);
    if m.nrows() != comp * m.ncols() {
        return Err(Error::Precondition("output rows must be components × input cells".into()));
    }
    let inv = |r: f64| if r.is_infinite() { 0.0 } else { 1.0 / r };
    let weight = a.cell_volume.powf(inv(q) - inv(p));
    let upper = if p.is_infinite() { inf_to_inf(m, comp) } else { one_to(m, comp, q / p).powf(1.0 / p) * inf_to_inf(m, comp).powf(1.0 - 1.0 / p) };
    let done = |value: f64, exact: bool, trace: Vec<f64>| PqNorm { value: value * weight, exact, upper_bound: upper * weight, trace: trace.into_iter().map(|v| v * weight).collect() };
    if p == 1.0 {
        let v = one_to(m, comp, q);
        return Ok(done(v, true, vec![v]));
    }
    if q.is_infinite() && comp == 1 {
        let pp = conjugate_exponent(p);
        let v = (0..m.nrows()).map(|i| lq(&(0..m.ncols()).map(|j| m[(i, j)].norm()).collect::<Vec<_>>(), pp)).fold(0.0, f64::max);
        return Ok(done(v, true, vec![v]));
    }
    if p == 2.0 && q == 2.0 {
        let v = spectral_norm(m)?;
        return Ok(done(v, true, vec![v]));
    }
    if q.is_infinite() {
        return Err(Error::Precondition("q = ∞ with vector output is not supported".into()));
    }
    let n = m.ncols();
    let pp = conjugate_exponent(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..=restarts {
        let mut x: Vec<C64> = if r == 0 {
            vec![C64::new(1.0, 0.0); n]
        } else {
            (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let xn = lq(&cell_magnitudes(&x, 1), p);
        x.iter_mut().for_each(|v| *v /= xn);
        let mut trace = Vec::new();
        let mut est = 0.0f64;
        for _ in 0..100 {
            let y = mul(m, &x);
            let cur = lq(&cell_magnitudes(&y, comp), q);
            trace.push(cur);
            let z = adjoint_mul(m, &dual_vector(&y, comp, q));
            let zn = lq(&cell_magnitudes(&z, 1), pp);
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if cur <= est * (1.0 + 1e-13) || zn <= zx * (1.0 + 1e-12) {
                est = est.max(cur);
                break;
            }
            est = cur;
            x = dual_vector(&z, 1, pp);
        }
        if best.as_ref().is_none_or(|(b, _)| est > *b) {
            best = Some((est, trace));
        }
    }
    let (v, trace) = best.unwrap_or_default();
    Ok(done(v, false, trace))
}

/// `γ_{pq} = |dim/q − dim/p|`.
pub fn gamma_pq(dim: usize, p: f64, q: f64) -> f64 {
    let inv = |r: f64| if r.is_infinite() { 0.0 } else { 1.0 / r };
    (dim as f64 * (inv(q) - inv(p))).abs()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PqSample {
    pub t: f64,
    pub norm: f64,
    pub scaled: f64,
    pub exact: bool,
    pub upper_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PqSweepReport {
    pub header: String,
    pub family: FamilyTag,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub samples: Vec<PqSample>,
    /// `sup_t t^{γ/2}·‖T_t‖_{p→q}`.
    pub sup_scaled: f64,
    /// Log-log slope of the scaled norms against `t`.
    pub scaled_slope: f64,
    /// Log-log slope of the raw norms against `t`.
    pub norm_slope: f64,
}

const BOYD_RESTARTS: usize = 3;

/// `t^{γ/2}‖T_t‖_{L^p→L^q}` over `t_grid`.
pub fn pq_bound_sweep(fam: &Families, family: FamilyTag, p: f64, q: f64, t_grid: &[f64], seed: u64) -> Result<PqSweepReport> {
    let grid = *fam.grid();
    let gamma = gamma_pq(grid.dim(), p, q);
    let mut samples = Vec::new();
    for (k, &t) in t_grid.iter().enumerate() {
        if !(t > 0.0) {
            return Err(Error::Precondition(format!("time must be positive, got {t}")));
        }
        let m = fam.matrix(family, C64::new(t, 0.0))?;
        let lm = LatticeMatrix { matrix: &m, components: fam.components(family), cell_volume: grid.cell_volume() };
        let est = pq_norm(&lm, p, q, BOYD_RESTARTS, seed.wrapping_add(k as u64))?;
        let scaled = t.powf(gamma / 2.0) * est.value;
        samples.push(PqSample { t, norm: est.value, scaled, exact: est.exact, upper_bound: est.upper_bound });
    }
    let slope = |vals: Vec<f64>| -> f64 {
        let lt: Vec<f64> = samples.iter().map(|s| s.t.ln()).collect();
        let lv: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        linear_fit(&lt, &lv).map(|f| f.slope).unwrap_or(f64::NAN)
    };
    let scaled_slope = slope(samples.iter().map(|s| s.scaled).collect());
    let norm_slope = slope(samples.iter().map(|s| s.norm).collect());
    let sup_scaled = samples.iter().map(|s| s.scaled).fold(0.0, f64::max);
    Ok(PqSweepReport { header: FINITE_DIMENSION_CAVEAT.into(), family, p, q, gamma, samples, sup_scaled, scaled_slope, norm_slope })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Epsilon1Report {
    pub header: String,
    /// `(p, sup_t t^{γ_p/2}‖√t∇e^{−tL}‖_{2→p})` for each `p` of the grid.
    pub curve: Vec<(f64, f64)>,
    pub threshold: f64,
    pub epsilon1: f64,
    /// `(threshold, ε̂₁)` at 3×, 10× and 30×.
    pub sensitivity: Vec<(f64, f64)>,
}

fn epsilon_at(curve: &[(f64, f64)], base: f64, threshold: f64) -> f64 {
    let mut best = 0.0;
    for &(p, v) in curve {
        if p < 2.0 {
            continue;
        }
        if v.is_finite() && v <= threshold * base {
            best = p - 2.0;
        } else {
            break;
        }
    }
    best
}

/// Largest `p − 2` on `p_grid` (ascending, starting at 2) for which the scaled gradient norms
/// stay below `threshold` times their `p = 2` value.
pub fn epsilon1_estimate(fam: &Families, p_grid: &[f64], t_grid: &[f64], threshold: f64, seed: u64) -> Result<Epsilon1Report> {
    if p_grid.first() != Some(&2.0) || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("p grid must ascend from 2".into()));
    }
    let grid = *fam.grid();
    let mats = t_grid.iter().map(|&t| fam.matrix(FamilyTag::SqrtTGrad, C64::new(t, 0.0))).collect::<Result<Vec<_>>>()?;
    let mut curve = Vec::new();
    for &p in p_grid {
        let gamma = gamma_pq(grid.dim(), 2.0, p);
        let mut sup = 0.0f64;
        for (k, (m, &t)) in mats.iter().zip(t_grid).enumerate() {
            let lm = LatticeMatrix { matrix: m, components: grid.dim(), cell_volume: grid.cell_volume() };
            let est = pq_norm(&lm, 2.0, p, BOYD_RESTARTS, seed.wrapping_add(k as u64))?;
            sup = sup.max(t.powf(gamma / 2.0) * est.value);
        }
        curve.push((p, sup));
    }
    let base = curve[0].1;
    let sensitivity = [3.0, 10.0, 30.0].iter().map(|&th| (th, epsilon_at(&curve, base, th))).collect();
    Ok(Epsilon1Report { header: FINITE_DIMENSION_CAVEAT.into(), epsilon1: epsilon_at(&curve, base, threshold), curve, threshold, sensitivity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_coefficients, CoefficientKind, CoefficientParams};
    use crate::operator::{assemble, EllipticOperator, LatticeOperator};
    use crate::semigroup::DensePropagator;
    use crate::spectral::SpectralCalculus;

    fn op(kind: CoefficientKind, dim: usize, n: usize) -> EllipticOperator {
        let grid = Grid::new(dim, n, 1.0).unwrap();
        let params = CoefficientParams { kappa: 0.5, ..CoefficientParams::default() };
        assemble(&make_coefficients(kind, &params, grid).unwrap())
    }

    fn brute_force_pq(a: &Mat<C64>, p: f64, q: f64) -> f64 {
        // Random real vectors with one to three nonzero entries and dense ones; a lower bound.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = a.ncols();
        let mut best = 0.0f64;
        for k in 0..20000 {
            let support = if k % 2 == 0 { 1 + k % 3 } else { n };
            let mut x = vec![C64::new(0.0, 0.0); n];
            for _ in 0..support {
                x[rng.random_range(0..n)] = C64::new(rng.random_range(-1.0..1.0), 0.0);
            }
            if x.iter().all(|v| v.norm() == 0.0) {
                continue;
            }
            let v = lq(&cell_magnitudes(&mul(a, &x), 1), q) / lq(&cell_magnitudes(&x, 1), p);
            best = best.max(v);
        }
        best
    }

    #[test]
    fn identity_has_unit_norms() {
        let m = Mat::<C64>::identity(6, 6);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let lm = LatticeMatrix { matrix: &m, components: 1, cell_volume: 0.25 };
            let r = pq_norm(&lm, p, p, 2, 1).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12, "p {p}: {}", r.value);
        }
    }

    #[test]
    fn rank_one_closed_form() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 1.0, -0.7, 2.0];
        let m = Mat::from_fn(4, 4, |i, j| C64::new(u[i] * v[j], 0.0));
        let norm = |w: &[f64], r: f64| lq(&w.iter().map(|x| x.abs()).collect::<Vec<_>>(), r);
        for (p, q) in [(1.5, 3.0), (2.0, 4.0), (1.5, 1.5), (3.0, 3.0), (1.0, 2.0), (2.0, f64::INFINITY)] {
            let lm = LatticeMatrix { matrix: &m, components: 1, cell_volume: 1.0 };
            let r = pq_norm(&lm, p, q, 3, 2).unwrap();
            let exact = norm(&u, q) * norm(&v, conjugate_exponent(p));
            assert!((r.value - exact).abs() < 1e-8 * exact, "({p},{q}): {} vs {exact}", r.value);
            assert!(r.value <= r.upper_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn one_to_two_corner_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mat::from_fn(8, 8, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        let lm = LatticeMatrix { matrix: &m, components: 1, cell_volume: 1.0 };
        let r = pq_norm(&lm, 1.0, 2.0, 0, 0).unwrap();
        assert!(r.exact);
        let bf = brute_force_pq(&m, 1.0, 2.0);
        assert!(bf <= r.value * (1.0 + 1e-12) && bf >= 0.9 * r.value);
        let boyd = pq_norm(&lm, 1.5, 2.5, 4, 3).unwrap();
        assert!(boyd.value >= brute_force_pq(&m, 1.5, 2.5) * (1.0 - 1e-9));
        assert!(boyd.value <= boyd.upper_bound * (1.0 + 1e-12));
    }

    #[test]
    fn duality_of_exact_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = Mat::from_fn(9, 9, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mt = m.adjoint().to_owned();
        let a = LatticeMatrix { matrix: &m, components: 1, cell_volume: 1.0 };
        let b = LatticeMatrix { matrix: &mt, components: 1, cell_volume: 1.0 };
        let x = pq_norm(&a, 1.0, 2.0, 0, 0).unwrap().value;
        let y = pq_norm(&b, 2.0, f64::INFINITY, 0, 0).unwrap().value;
        assert!((x - y).abs() < 1e-10 * x);
        assert!(pq_norm(&a, 3.0, 2.0, 0, 0).is_err());
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_pq(2, 1.0, 2.0), 1.0);
        assert_eq!(gamma_pq(1, 1.0, 2.0), 0.5);
        assert_eq!(gamma_pq(2, 2.0, f64::INFINITY), 1.0);
    }

    #[test]
    fn box_distances() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let a = CellSet::new(&g, [0, 0], [2, 2]).unwrap();
        let b = CellSet::new(&g, [5, 0], [2, 2]).unwrap();
        assert!((a.distance(&b, &g) - 4.0 / 16.0).abs() < 1e-15);
        let c = CellSet::new(&g, [14, 14], [2, 2]).unwrap();
        let brute = a.cells(&g).iter().flat_map(|&i| c.cells(&g).into_iter().map(move |j| (i, j))).map(|(i, j)| g.cell_distance(i, j)).fold(f64::INFINITY, f64::min);
        assert!((a.distance(&c, &g) - brute).abs() < 1e-15);
        assert_eq!(a.distance(&a, &g), 0.0);
        for (e, f) in separated_boxes(&g, 2, &[1, 3, 6]).unwrap() {
            let brute = e.cells(&g).iter().flat_map(|&i| f.cells(&g).into_iter().map(move |j| (i, j))).map(|(i, j)| g.cell_distance(i, j)).fold(f64::INFINITY, f64::min);
            assert!((e.distance(&f, &g) - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn localized_norms() {
        let o = op(CoefficientKind::BmoLog, 2, 8);
        let dense = DensePropagator::new(&o).unwrap();
        let fam = Families::new(&dense);
        let g = *o.grid();
        let z = C64::new(0.01, 0.0);
        let whole = localized_norm(&fam, FamilyTag::Semigroup, z, &CellSet::whole(&g), &CellSet::whole(&g)).unwrap();
        assert!(whole <= 1.0 + 1e-6);
        let e = CellSet::new(&g, [0, 0], [2, 2]).unwrap();
        let f = CellSet::new(&g, [4, 0], [2, 2]).unwrap();
        let small = CellSet::new(&g, [4, 0], [1, 2]).unwrap();
        let far = localized_norm(&fam, FamilyTag::Semigroup, C64::new(1e-4, 0.0), &e, &f).unwrap();
        assert!(far < 1e-6, "{far}");
        let a = localized_norm(&fam, FamilyTag::TLt, z, &e, &f).unwrap();
        let b = localized_norm(&fam, FamilyTag::TLt, z, &e, &small).unwrap();
        assert!(b <= a * (1.0 + 1e-12) && a <= localized_norm(&fam, FamilyTag::TLt, z, &CellSet::whole(&g), &CellSet::whole(&g)).unwrap());
    }

    #[test]
    fn adjoint_families_swap_sets() {
        let o = op(CoefficientKind::BmoLog, 2, 8);
        let p = DensePropagator::new(&o).unwrap();
        let adj = o.adjoint();
        let pa = DensePropagator::new(&adj).unwrap();
        let fam = Families::new(&p).with_adjoint(&pa).unwrap();
        let g = *o.grid();
        let e = CellSet::new(&g, [0, 0], [2, 3]).unwrap();
        let f = CellSet::new(&g, [3, 2], [3, 2]).unwrap();
        let z = C64::new(0.02, 0.0);
        for fam_tag in [FamilyTag::Semigroup, FamilyTag::TLt] {
            let a = localized_norm(&fam, fam_tag, z, &e, &f).unwrap();
            let b = localized_norm(&fam, fam_tag.dual(), z, &f, &e).unwrap();
            assert!((a - b).abs() < 1e-10 * a.max(1e-300), "{fam_tag:?}");
        }
        assert!(Families::new(&p).apply(FamilyTag::AdjointSemigroup, z, &[]).is_err());
    }

    #[test]
    fn identity_offdiag_fit() {
        let o = op(CoefficientKind::Identity, 2, 32);
        let spec = SpectralCalculus::new(&o).unwrap();
        let fam = Families::new(&spec);
        let g = *o.grid();
        let pairs = separated_boxes(&g, 4, &(1..=10).collect::<Vec<_>>()).unwrap();
        let h2 = g.spacing().powi(2);
        let times: Vec<C64> = [2.0, 4.0, 8.0].iter().map(|&t| C64::new(t * h2, 0.0)).collect();
        let r = offdiag_fit(&fam, FamilyTag::Semigroup, &times, &pairs).unwrap();
        assert!(r.alpha > 0.0 && r.r_squared >= 0.9, "{} {}", r.alpha, r.r_squared);
    }

    #[test]
    fn semigroup_contraction_sweep_and_one_to_two_slope() {
        let o = op(CoefficientKind::Identity, 1, 64);
        let dense = DensePropagator::new(&o).unwrap();
        let fam = Families::new(&dense);
        let ts: Vec<f64> = (0..7).map(|k| 1e-3 * 10f64.powf(k as f64 / 6.0)).collect();
        let r = pq_bound_sweep(&fam, FamilyTag::Semigroup, 2.0, 2.0, &ts, 0).unwrap();
        assert!(r.sup_scaled <= 1.0 + 1e-6);
        let r = pq_bound_sweep(&fam, FamilyTag::Semigroup, 1.0, 2.0, &ts, 0).unwrap();
        assert!((r.norm_slope + 0.25).abs() < 0.15, "slope {}", r.norm_slope);
    }

    #[test]
    fn epsilon_curve_for_identity() {
        let o = op(CoefficientKind::Identity, 2, 8);
        let dense = DensePropagator::new(&o).unwrap();
        let fam = Families::new(&dense);
        let r = epsilon1_estimate(&fam, &[2.0, 2.5, 3.0], &[0.005, 0.02], 10.0, 1).unwrap();
        assert!(r.curve[0].1.is_finite() && r.curve[0].1 > 0.0);
        assert_eq!(r.epsilon1, 1.0);
        assert_eq!(r.sensitivity.len(), 3);
        assert!(epsilon1_estimate(&fam, &[2.5, 3.0], &[0.01], 10.0, 1).is_err());
    }
}
