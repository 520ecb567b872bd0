//! The semigroup `e^{−zL}` and its time derivatives through the resolvent contour
//! integral, a dense Padé reference, heat kernels, Gaussian fits, a discrete Hölder
//! statistic and the conservation check.
//!
//! The contour `Γ` is the arc `{Re^{iθ} : |θ| ≤ α}` joined to the rays
//! `{re^{±iα} : r ≥ R}` with `α = π − θ₁`, and
//!
//! `(−L)^l e^{−zL} f = (1/2πi) ∫_Γ e^{zλ} λ^l (λ + L)^{−1} f dλ`.
//!
//! Rays are parameterized by `r = R e^s` and cut where the integrand falls below `1e−16`;
//! every panel (arcs of width at most π/4, unit intervals in `s`) uses a Clenshaw–Curtis
//! rule doubled until two levels agree. For real `z` and real data the lower half of the
//! contour is the mirror image of the upper half and only the upper half is evaluated.

use crate::error::{Error, Result};
use crate::fit::{linear_fit, multilinear_fit, quantile};
use crate::kernel::KernelMatrix;
use crate::lattice::{Field, Grid};
use crate::linalg::{check_dense_cap, expm_complex, mat_vec};
use crate::operator::{sector_angle, LatticeOperator};
use crate::quadrature::clenshaw_curtis;
use crate::resolvent::ShiftedSolver;
use crate::sparse::CsrMatrix;
use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

/// Default relative tolerance of the node-doubling test.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const LN_TRUNCATION: f64 = -36.841_361_487_904_734;
const SOLVE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    /// Opening half-angle; the rays leave at `±(π − θ₁)`.
    pub theta1: f64,
    pub arc_radius: f64,
    /// `|λ|` at which the rays are cut for `l = 0`; longer rays are used for `l > 0`.
    pub ray_length: f64,
    pub nodes_per_ray: usize,
    pub nodes_on_arc: usize,
    pub tolerance: f64,
    pub max_doublings: usize,
}

/// `min(−cos(φ + α), −cos(φ − α))`, the slowest relative decay of `|e^{zλ}|` on the rays.
fn ray_decay(z: C64, alpha: f64) -> f64 {
    let phi = z.arg();
    (-(phi + alpha).cos()).min(-(phi - alpha).cos())
}

impl ContourSpec {
    /// `θ₁ = θ₀ + 0.2(π/2 − |arg z| − θ₀)`, `R = 1/|z|`, rays cut where `|e^{zλ}| < 1e−16`.
    pub fn for_time(theta0: f64, z: C64) -> Result<ContourSpec> {
        let room = PI / 2.0 - z.arg().abs() - theta0;
        if !(z.norm() > 0.0) || !(room > 0.0) {
            return Err(Error::Precondition(format!("time {z} is not inside the sector |arg z| < π/2 − θ₀ = {}", PI / 2.0 - theta0)));
        }
        let theta1 = theta0 + 0.2 * room;
        let r = 1.0 / z.norm();
        let c = ray_decay(z, PI - theta1);
        Ok(ContourSpec {
            theta1,
            arc_radius: r,
            ray_length: r * (-LN_TRUNCATION / c).max(1.0),
            nodes_per_ray: 32,
            nodes_on_arc: 16,
            tolerance: DEFAULT_TOLERANCE,
            max_doublings: 6,
        })
    }

    /// Default contour for an operator, estimating `θ₀` when it has not been stored.
    pub fn for_operator<O: LatticeOperator + ?Sized>(op: &O, z: C64) -> Result<ContourSpec> {
        ContourSpec::for_time(theta0_of(op)?, z)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self, theta0: f64, z: C64) -> Result<()> {
        if !(z.norm() > 0.0) {
            return Err(Error::Precondition("contour integrals need z ≠ 0".into()));
        }
        if !(self.theta1 > theta0 + 1e-9) {
            return Err(Error::Precondition(format!("θ₁ = {} does not exceed θ₀ = {theta0}", self.theta1)));
        }
        if !(ray_decay(z, PI - self.theta1) > 0.0) {
            return Err(Error::Precondition(format!("|arg z| = {} leaves no decay on the rays for θ₁ = {}", z.arg().abs(), self.theta1)));
        }
        if !(self.arc_radius > 0.0) || !(self.ray_length >= self.arc_radius) {
            return Err(Error::Precondition("need 0 < R ≤ ray length".into()));
        }
        if self.nodes_per_ray < 4 || self.nodes_on_arc < 4 {
            return Err(Error::Precondition("node counts must be at least 4".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Precondition("tolerance must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn theta0_of<O: LatticeOperator + ?Sized>(op: &O) -> Result<f64> {
    match op.theta0_estimate() {
        Some(t) => Ok(t),
        None => sector_angle(op, 16, 0),
    }
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Arc { from: f64, to: f64 },
    Ray { upper: bool, from: f64, to: f64 },
}

impl Segment {
    /// `(λ, dλ/dp)` at `p ∈ [−1, 1]`.
    fn point(&self, p: f64, radius: f64, alpha: f64) -> (C64, C64) {
        match *self {
            Segment::Arc { from, to } => {
                let half = (to - from) / 2.0;
                let lam = C64::from_polar(radius, from + half * (p + 1.0));
                (lam, C64::new(0.0, half) * lam)
            }
            Segment::Ray { upper, from, to } => {
                let half = (to - from) / 2.0;
                let r = radius * (from + half * (p + 1.0)).exp();
                if upper {
                    let lam = C64::from_polar(r, alpha);
                    (lam, lam * half)
                } else {
                    let lam = C64::from_polar(r, -alpha);
                    (lam, -lam * half)
                }
            }
        }
    }
}

/// Node count and the final doubling discrepancy of a contour evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContourStats {
    pub factorizations: usize,
    pub error_estimate: f64,
    pub half_contour: bool,
}

struct Integrand<'a> {
    matrix: &'a CsrMatrix,
    grid: &'a Grid,
    z: C64,
    l: usize,
    power: usize,
    radius: f64,
    alpha: f64,
}

impl Integrand<'_> {
    /// Weight `e^{zλ}λ^l dλ/dp` and the solves `(λ + M)^{−power} f` for every right-hand side.
    fn eval(&self, seg: &Segment, p: f64, rhs: &[Vec<C64>]) -> Result<(C64, Vec<Vec<C64>>)> {
        let (lam, dl) = seg.point(p, self.radius, self.alpha);
        let weight = (self.z * lam).exp() * lam.powu(self.l as u32) * dl;
        let solver = ShiftedSolver::new(self.matrix, self.grid, lam)?;
        let sols = rhs
            .par_iter()
            .map(|f| {
                let mut v = f.clone();
                for _ in 0..self.power {
                    v = solver.solve_checked(&v, SOLVE_TOL)?;
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((weight, sols))
    }
}

fn euclid(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest `s ≥ 0` with `(l − power + 1)s − c·e^s ≤ ln 1e−16`, the ray cut in `s = ln(r/R)`.
fn ray_end(c: f64, l: usize, power: usize) -> f64 {
    let k = l as f64 - power as f64 + 1.0;
    let mut s = 0.0;
    while k * s - c * s.exp() > LN_TRUNCATION {
        s += 0.01;
    }
    s
}

fn panels(spec: &ContourSpec, z: C64, l: usize, power: usize, half: bool) -> Vec<Segment> {
    let alpha = PI - spec.theta1;
    let mut segs = Vec::new();
    let arc_pieces = (alpha / (PI / 4.0)).ceil() as usize;
    let arc_from = if half { 0.0 } else { -alpha };
    let pieces = if half { arc_pieces } else { 2 * arc_pieces };
    let width = (alpha - arc_from) / pieces as f64;
    for k in 0..pieces {
        segs.push(Segment::Arc { from: arc_from + k as f64 * width, to: arc_from + (k + 1) as f64 * width });
    }
    let phi = z.arg();
    let rays: &[bool] = if half { &[true] } else { &[true, false] };
    for &upper in rays {
        let c = if upper { -(phi + alpha).cos() } else { -(phi - alpha).cos() };
        let s_end = ray_end(c * z.norm() * spec.arc_radius, l, power).max((spec.ray_length / spec.arc_radius).ln());
        let count = s_end.ceil().max(1.0) as usize;
        let step = s_end / count as f64;
        for k in 0..count {
            segs.push(Segment::Ray { upper, from: k as f64 * step, to: (k + 1) as f64 * step });
        }
    }
    segs
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Panel sums `Σ w_k·g(p_k)·x_k` at a fixed Clenshaw–Curtis level, all right-hand sides.
fn panel_sum(rule_n: usize, cache: &HashMap<u64, (C64, Vec<Vec<C64>>)>, nrhs: usize, len: usize) -> Vec<Vec<C64>> {
    let rule = clenshaw_curtis(rule_n);
    let mut acc = vec![vec![C64::new(0.0, 0.0); len]; nrhs];
    for (p, w) in rule.nodes.iter().zip(&rule.weights) {
        let (g, sols) = &cache[&p.to_bits()];
        let c = g * *w;
        for (a, s) in acc.iter_mut().zip(sols) {
            a.iter_mut().zip(s).for_each(|(x, y)| *x += c * y);
        }
    }
    acc
}

/// Adaptive evaluation of one panel with cached node solves. Returns the converged sum,
/// the final level and the number of factorizations.
fn adapt_panel(
    integrand: &Integrand,
    seg: &Segment,
    n0: usize,
    rhs: &[Vec<C64>],
    scales: &[f64],
    tol: f64,
    max_doublings: usize,
) -> Result<(Vec<Vec<C64>>, usize, usize, f64)> {
    let len = rhs.first().map_or(0, |v| v.len());
    let mut cache: HashMap<u64, (C64, Vec<Vec<C64>>)> = HashMap::new();
    let fill = |n: usize, cache: &mut HashMap<u64, (C64, Vec<Vec<C64>>)>| -> Result<usize> {
        let rule = clenshaw_curtis(n);
        let missing: Vec<f64> = rule.nodes.iter().copied().filter(|p| !cache.contains_key(&p.to_bits())).collect();
        let evals = missing.par_iter().map(|&p| integrand.eval(seg, p, rhs)).collect::<Result<Vec<_>>>()?;
        for (p, e) in missing.iter().zip(evals) {
            cache.insert(p.to_bits(), e);
        }
        Ok(missing.len())
    };
    let mut n = n0;
    let mut count = fill(n, &mut cache)?;
    let mut prev = panel_sum(n, &cache, rhs.len(), len);
    let mut diff = f64::INFINITY;
    for _ in 0..max_doublings {
        n *= 2;
        count += fill(n, &mut cache)?;
        let cur = panel_sum(n, &cache, rhs.len(), len);
        diff = cur
            .iter()
            .zip(&prev)
            .zip(scales)
            .map(|((a, b), s)| {
                let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                euclid(&d) / s
            })
            .fold(0.0, f64::max);
        prev = cur;
        if diff <= tol {
            return Ok((prev, n, count, diff));
        }
    }
    Err(Error::QuadratureNotConverged { achieved: diff, evaluations: count })
}

/// `(1/2πi) ∫_Γ e^{zλ} λ^l (λ + M)^{−power} f dλ` for each right-hand side, with the
/// contour of `spec`. The result is `(−L)^l e^{−zL} f / (power − 1)!·z^{power−1}` by
/// repeated integration by parts.
pub fn contour_integral<O: LatticeOperator + ?Sized>(
    op: &O,
    z: C64,
    l: usize,
    power: usize,
    spec: &ContourSpec,
    rhs: &[Vec<C64>],
) -> Result<(Vec<Vec<C64>>, ContourStats)> {
    let theta0 = theta0_of(op)?;
    spec.validate(theta0, z)?;
    if power == 0 {
        return Err(Error::Precondition("resolvent power must be at least 1".into()));
    }
    let n = op.grid().cell_count();
    if rhs.iter().any(|f| f.len() != n) {
        return Err(Error::GridMismatch);
    }
    if rhs.is_empty() {
        return Ok((Vec::new(), ContourStats::default()));
    }
    let half = z.im == 0.0;
    // With a real time the integrand is conjugate-symmetric on real data, so complex data
    // are split into real and imaginary parts.
    let work: Vec<Vec<C64>> = if half {
        let mut w: Vec<Vec<C64>> = rhs.iter().map(|f| f.iter().map(|v| C64::new(v.re, 0.0)).collect()).collect();
        for f in rhs {
            if f.iter().any(|v| v.im != 0.0) {
                w.push(f.iter().map(|v| C64::new(v.im, 0.0)).collect());
            }
        }
        w
    } else {
        rhs.to_vec()
    };
    let scale_of = |f: &[C64]| (euclid(f) * z.norm().powi(power as i32 - 1 - l as i32) / factorial(power - 1)).max(f64::MIN_POSITIVE);
    let integrand = Integrand { matrix: op.matrix(), grid: op.grid(), z, l, power, radius: spec.arc_radius, alpha: PI - spec.theta1 };
    let segs = panels(spec, z, l, power, half);
    let arc_count = segs.iter().filter(|s| matches!(s, Segment::Arc { .. })).count().max(1);
    let ray_count = (segs.len() - arc_count).max(1);
    let per_panel = |seg: &Segment| -> usize {
        match seg {
            Segment::Arc { .. } => (spec.nodes_on_arc / arc_count).max(4),
            Segment::Ray { .. } => (spec.nodes_per_ray * if half { 1 } else { 2 } / ray_count).max(4),
        }
    };
    let tol = spec.tolerance / segs.len() as f64;
    let mut total = vec![vec![C64::new(0.0, 0.0); n]; work.len()];
    let mut stats = ContourStats { half_contour: half, ..ContourStats::default() };
    // Many right-hand sides: settle each panel's level on a few probes, then sweep all
    // right-hand sides through the fixed rule without caching solutions.
    let probe_limit = 4;
    if work.len() <= probe_limit {
        let scales: Vec<f64> = work.iter().map(|f| scale_of(f)).collect();
        for seg in &segs {
            let (sum, _, count, diff) = adapt_panel(&integrand, seg, per_panel(seg), &work, &scales, tol, spec.max_doublings)?;
            stats.factorizations += count;
            stats.error_estimate += diff;
            for (t, s) in total.iter_mut().zip(sum) {
                t.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
        }
    } else {
        let idx = [0, work.len() / 2, work.len() - 1];
        let probes: Vec<Vec<C64>> = idx.iter().map(|&i| work[i].clone()).collect();
        let scales: Vec<f64> = probes.iter().map(|f| scale_of(f)).collect();
        for seg in &segs {
            let (_, level, count, diff) = adapt_panel(&integrand, seg, per_panel(seg), &probes, &scales, tol, spec.max_doublings)?;
            stats.factorizations += count;
            stats.error_estimate += diff;
            let rule = clenshaw_curtis(level);
            for (p, w) in rule.nodes.iter().zip(&rule.weights) {
                let (g, sols) = integrand.eval(seg, *p, &work)?;
                stats.factorizations += 1;
                let c = g * *w;
                for (t, s) in total.iter_mut().zip(&sols) {
                    t.iter_mut().zip(s).for_each(|(a, b)| *a += c * b);
                }
            }
        }
    }
    let out: Vec<Vec<C64>> = if half {
        let finish = |v: &[C64]| -> Vec<f64> { v.iter().map(|x| x.im / PI).collect() };
        let mut imag_slot = rhs.len();
        rhs.iter()
            .enumerate()
            .map(|(k, f)| {
                let re = finish(&total[k]);
                if f.iter().any(|v| v.im != 0.0) {
                    let im = finish(&total[imag_slot]);
                    imag_slot += 1;
                    re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect()
                } else {
                    re.iter().map(|a| C64::new(*a, 0.0)).collect()
                }
            })
            .collect()
    } else {
        let c = C64::new(0.0, 2.0 * PI).inv();
        total.iter().map(|v| v.iter().map(|x| x * c).collect()).collect()
    };
    Ok((out, stats))
}

fn check_field<O: LatticeOperator + ?Sized>(op: &O, f: &Field) -> Result<()> {
    op.grid().check_same(f.grid())
}

/// `e^{−tL} f` by contour quadrature, `t > 0`.
pub fn semigroup_apply<O: LatticeOperator + ?Sized>(op: &O, t: f64, f: &Field, spec: &ContourSpec) -> Result<Field> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    time_derivative(op, t, 0, f, spec)
}

/// `e^{−zL} f` for complex `z` in the sector `|arg z| < π/2 − θ₁`.
pub fn semigroup_apply_complex<O: LatticeOperator + ?Sized>(op: &O, z: C64, f: &Field, spec: &ContourSpec) -> Result<Field> {
    check_field(op, f)?;
    let (v, _) = contour_integral(op, z, 0, 1, spec, &[f.values().to_vec()])?;
    Field::from_values(*op.grid(), v.into_iter().next().unwrap_or_default())
}

/// `∂_t^l e^{−tL} f` from the contour integral with weight `λ^l`.
pub fn time_derivative<O: LatticeOperator + ?Sized>(op: &O, t: f64, l: usize, f: &Field, spec: &ContourSpec) -> Result<Field> {
    check_field(op, f)?;
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    let (v, _) = contour_integral(op, C64::new(t, 0.0), l, 1, spec, &[f.values().to_vec()])?;
    Field::from_values(*op.grid(), v.into_iter().next().unwrap_or_default())
}

/// `e^{−tL} f = ((2m−1)!/t^{2m−1}) (1/2πi) ∫_Γ e^{tλ} (λ + L)^{−2m} f dλ`.
pub fn semigroup_apply_ibp<O: LatticeOperator + ?Sized>(op: &O, t: f64, m: usize, f: &Field, spec: &ContourSpec) -> Result<Field> {
    check_field(op, f)?;
    if !(t > 0.0) || m == 0 {
        return Err(Error::Precondition("need t > 0 and m ≥ 1".into()));
    }
    let (v, _) = contour_integral(op, C64::new(t, 0.0), 0, 2 * m, spec, &[f.values().to_vec()])?;
    let c = factorial(2 * m - 1) / t.powi(2 * m as i32 - 1);
    Ok(Field::from_values(*op.grid(), v[0].clone())?.scale(C64::new(c, 0.0)))
}

/// Dense `e^{−zM}` by scaling and squaring.
pub fn expm_matrix<O: LatticeOperator + ?Sized>(op: &O, z: C64) -> Result<Mat<C64>> {
    check_dense_cap(op.grid().cell_count())?;
    let m = op.matrix().to_dense_complex();
    expm_complex(&(m * faer::Scale(-z)))
}

/// Reference `e^{−tM} f` from the dense exponential; `t = 0` returns `f` unchanged.
pub fn expm_oracle<O: LatticeOperator + ?Sized>(op: &O, t: f64, f: &Field) -> Result<Field> {
    check_field(op, f)?;
    check_dense_cap(op.grid().cell_count())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let e = expm_matrix(op, C64::new(t, 0.0))?;
    Field::from_values(*op.grid(), mat_vec(&e, f.values()))
}

/// Applies `(−L)^l e^{−zL}` to blocks of vectors.
pub trait Propagator: Sync {
    fn grid(&self) -> &Grid;
    fn matrix(&self) -> &CsrMatrix;
    fn propagate(&self, z: C64, l: usize, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>>;
    /// Short label recorded in reports.
    fn backend(&self) -> &'static str;
}

fn apply_neg_power(m: &CsrMatrix, l: usize, v: &[C64]) -> Vec<C64> {
    let mut out = v.to_vec();
    for _ in 0..l {
        out = m.mul_vec(&out).into_iter().map(|x| -x).collect();
    }
    out
}

/// The contour route, with default contours for every time.
pub struct ContourPropagator<'a, O: LatticeOperator + ?Sized> {
    op: &'a O,
    theta0: f64,
    tolerance: f64,
}

impl<'a, O: LatticeOperator + ?Sized> ContourPropagator<'a, O> {
    pub fn new(op: &'a O) -> Result<Self> {
        Ok(ContourPropagator { op, theta0: theta0_of(op)?, tolerance: DEFAULT_TOLERANCE })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn spec(&self, z: C64) -> Result<ContourSpec> {
        Ok(ContourSpec::for_time(self.theta0, z)?.with_tolerance(self.tolerance))
    }
}

impl<O: LatticeOperator + ?Sized> Propagator for ContourPropagator<'_, O> {
    fn grid(&self) -> &Grid {
        self.op.grid()
    }
    fn matrix(&self) -> &CsrMatrix {
        self.op.matrix()
    }
    fn propagate(&self, z: C64, l: usize, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        if z == C64::new(0.0, 0.0) {
            return Ok(rhs.iter().map(|v| apply_neg_power(self.op.matrix(), l, v)).collect());
        }
        let spec = self.spec(z)?;
        Ok(contour_integral(self.op, z, l, 1, &spec, rhs)?.0)
    }
    fn backend(&self) -> &'static str {
        "contour"
    }
}

/// The dense Padé exponential, caching the most recent `e^{−zM}`.
pub struct DensePropagator {
    grid: Grid,
    matrix: CsrMatrix,
    dense: Mat<C64>,
    cache: Mutex<Option<(C64, Mat<C64>)>>,
}

impl DensePropagator {
    pub fn new<O: LatticeOperator + ?Sized>(op: &O) -> Result<DensePropagator> {
        check_dense_cap(op.grid().cell_count())?;
        Ok(DensePropagator { grid: *op.grid(), matrix: op.matrix().clone(), dense: op.matrix().to_dense_complex(), cache: Mutex::new(None) })
    }

    pub fn exponential(&self, z: C64) -> Result<Mat<C64>> {
        let mut guard = self.cache.lock().expect("cache lock");
        if let Some((zc, e)) = guard.as_ref() {
            if *zc == z {
                return Ok(e.clone());
            }
        }
        let e = expm_complex(&(&self.dense * faer::Scale(-z)))?;
        *guard = Some((z, e.clone()));
        Ok(e)
    }
}

impl Propagator for DensePropagator {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    fn propagate(&self, z: C64, l: usize, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        if z == C64::new(0.0, 0.0) {
            return Ok(rhs.iter().map(|v| apply_neg_power(&self.matrix, l, v)).collect());
        }
        let e = self.exponential(z)?;
        Ok(rhs.iter().map(|v| apply_neg_power(&self.matrix, l, &mat_vec(&e, v))).collect())
    }
    fn backend(&self) -> &'static str {
        "dense-pade"
    }
}

/// `K(x, y) = [(−L)^l e^{−tL}(δ_y / h^dim)](x)`.
pub fn heat_kernel(prop: &dyn Propagator, t: f64, l: usize) -> Result<KernelMatrix> {
    let grid = *prop.grid();
    let n = grid.cell_count();
    check_dense_cap(n)?;
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("time must be positive, got {t}")));
    }
    let inv = C64::new(1.0 / grid.cell_volume(), 0.0);
    let rhs: Vec<Vec<C64>> = (0..n)
        .map(|y| {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[y] = inv;
            v
        })
        .collect();
    let cols = prop.propagate(C64::new(t, 0.0), l, &rhs)?;
    Ok(KernelMatrix::from_columns(grid, &cols))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderQuantiles {
    pub t: f64,
    pub median: f64,
    pub q90: f64,
    pub q95: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub beta: f64,
    pub per_t: Vec<HolderQuantiles>,
    pub max_q95: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianFitReport {
    pub order: usize,
    /// `C` in `|∂_t^l K_t| ≤ C t^{−dim/2−l} e^{−β d²/t}`.
    pub c: f64,
    pub beta: f64,
    pub r_squared: f64,
    /// Exponent of `t^{−1}` when it is fitted freely instead of fixed at `l`.
    pub fitted_order: f64,
    pub t_values: Vec<f64>,
    /// Common window of `d²/t` used across all times.
    pub x_window: (f64, f64),
    pub sample_count: usize,
    pub holder_ratio_stats: Option<HolderReport>,
}

/// Relative level below which kernel entries are treated as quadrature noise.
const KERNEL_FLOOR: f64 = 1e-8;

/// Fits `log|K_t| + (dim/2) log t = c − βd²/t − l log t` over far-field pairs
/// (`3h ≤ d_T < 0.4Λ`, values above `1e−8·max|K_t|`) restricted to a window of `d²/t` common
/// to all times; for `l ≥ 1` the window starts at `4·dim·l` to stay clear of the sign change
/// of the derivative kernel. Only times with `√t ≤ Λ/4` are used.
pub fn gaussian_fit(kernels: &[(f64, KernelMatrix)], l: usize) -> Result<GaussianFitReport> {
    let usable: Vec<&(f64, KernelMatrix)> = kernels.iter().filter(|(t, k)| t.sqrt() <= k.grid().side_length() / 4.0).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientSamples(format!("{} times with √t ≤ Λ/4, need 3", usable.len())));
    }
    let grid = *usable[0].1.grid();
    if usable.iter().any(|(_, k)| *k.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let dim = grid.dim() as f64;
    let (d_lo, d_hi) = (3.0 * grid.spacing(), 0.4 * grid.side_length());
    let n = grid.cell_count();
    let mut per_t: Vec<Vec<(f64, f64)>> = Vec::new();
    let (mut x_lo, mut x_hi) = (if l > 0 { 4.0 * dim * l as f64 } else { 0.0 }, f64::INFINITY);
    for (t, k) in &usable {
        let floor = KERNEL_FLOOR * k.max_abs();
        let mut pts = Vec::new();
        let mut x_max_t = 0.0f64;
        for y in 0..n {
            for x in 0..n {
                let d = grid.cell_distance(x, y);
                if d < d_lo || d >= d_hi {
                    continue;
                }
                let v = k.get(x, y).norm();
                let xx = d * d / t;
                if v > floor {
                    x_max_t = x_max_t.max(xx);
                    pts.push((xx, v));
                }
            }
        }
        if pts.is_empty() {
            return Err(Error::InsufficientSamples(format!("far field of K_t vanishes at t = {t}")));
        }
        x_lo = x_lo.max(d_lo * d_lo / t);
        x_hi = x_hi.min(x_max_t);
        per_t.push(pts);
    }
    if !(x_hi > x_lo) {
        return Err(Error::InsufficientSamples(format!("empty common window [{x_lo}, {x_hi}] of d²/t")));
    }
    let (mut xs, mut ys, mut logt) = (Vec::new(), Vec::new(), Vec::new());
    for ((t, _), pts) in usable.iter().zip(&per_t) {
        for &(x, v) in pts {
            if x >= x_lo && x <= x_hi {
                xs.push(x);
                ys.push(v.ln() + dim / 2.0 * t.ln());
                logt.push(t.ln());
            }
        }
    }
    // Fixed order: y + l·log t = c − βx.
    let shifted: Vec<f64> = ys.iter().zip(&logt).map(|(y, lt)| y + l as f64 * lt).collect();
    let fixed = linear_fit(&xs, &shifted)?;
    let ones = vec![1.0; xs.len()];
    let neg_x: Vec<f64> = xs.iter().map(|x| -x).collect();
    let neg_lt: Vec<f64> = logt.iter().map(|v| -v).collect();
    let (coef, _) = multilinear_fit(&[ones, neg_x, neg_lt], &ys)?;
    Ok(GaussianFitReport {
        order: l,
        c: fixed.intercept.exp(),
        beta: -fixed.slope,
        r_squared: fixed.r_squared,
        fitted_order: coef[2],
        t_values: usable.iter().map(|(t, _)| *t).collect(),
        x_window: (x_lo, x_hi),
        sample_count: xs.len(),
        holder_ratio_stats: None,
    })
}

/// Distribution of `|K_t(x+h,y) − K_t(x,y)|·t^{dim/2}·(√t + d)/(h·e^{−βd²/t})` over pairs with
/// `2h ≤ √t + d`, `d_T < 0.4Λ` and `|K_t(x,y)|` above the noise floor; one shift per axis.
pub fn holder_statistic(kernels: &[(f64, KernelMatrix)], beta: f64) -> Result<HolderReport> {
    let mut per_t = Vec::new();
    for (t, k) in kernels {
        let grid = *k.grid();
        let h = grid.spacing();
        let n = grid.cell_count();
        let floor = KERNEL_FLOOR * k.max_abs();
        let st = t.sqrt();
        let mut vals = Vec::new();
        for y in 0..n {
            for x in 0..n {
                let d = grid.cell_distance(x, y);
                if 2.0 * h > st + d || d >= 0.4 * grid.side_length() || k.get(x, y).norm() <= floor {
                    continue;
                }
                for axis in 0..grid.dim() {
                    let xs = grid.shift(x, axis, 1);
                    let diff = (k.get(xs, y) - k.get(x, y)).norm();
                    vals.push(diff * t.powf(grid.dim() as f64 / 2.0) * (st + d) / (h * (-beta * d * d / t).exp()));
                }
            }
        }
        let q = |p: f64| quantile(&vals, p).unwrap_or(0.0);
        per_t.push(HolderQuantiles { t: *t, median: q(0.5), q90: q(0.9), q95: q(0.95), max: q(1.0), count: vals.len() });
    }
    let max_q95 = per_t.iter().map(|h| h.q95).fold(0.0, f64::max);
    Ok(HolderReport { beta, per_t, max_q95 })
}

/// `max_t ‖e^{−tL}1 − 1‖_∞`.
pub fn conservation_check(prop: &dyn Propagator, t_grid: &[f64]) -> Result<f64> {
    let n = prop.grid().cell_count();
    let one = vec![C64::new(1.0, 0.0); n];
    let mut worst = 0.0f64;
    for &t in t_grid {
        if !(t >= 0.0) {
            return Err(Error::Precondition(format!("negative time {t}")));
        }
        let out = prop.propagate(C64::new(t, 0.0), 0, std::slice::from_ref(&one))?;
        worst = worst.max(out[0].iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}
