//! Periodic lattices, complex fields on them and the staggered difference calculus.
//!
//! Cells are indexed row-major with the first axis fastest: `idx = y·N + x`.
//! The gradient is the forward difference and the divergence is its exact negative
//! adjoint (a backward difference), so summation by parts holds to rounding.

mod coefficients;
pub mod io;

pub use coefficients::{make_coefficients, CoefficientField, CoefficientKind, CoefficientParams, Mat2};

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Periodic lattice `[0, Λ)^dim` with `N` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    side: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, side_length: f64) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("unsupported dimension {dim}")));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells per axis, got {points_per_axis}")));
        }
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::InvalidGrid(format!("side length must be positive, got {side_length}")));
        }
        Ok(Grid { dim, n: points_per_axis, side: side_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn side_length(&self) -> f64 {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Cell volume `h^dim`, the weight of every lattice integral.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx % self.n, idx / self.n]
    }

    pub fn index(&self, c: [usize; 2]) -> usize {
        c[1] * self.n + c[0]
    }

    /// Index of the cell `offset` steps away along `axis`, wrapping periodically.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.n as isize;
        c[axis] = (c[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(c)
    }

    pub fn center(&self, idx: usize) -> [f64; 2] {
        let c = self.coords(idx);
        let h = self.spacing();
        let y = if self.dim == 2 { (c[1] as f64 + 0.5) * h } else { 0.0 };
        [(c[0] as f64 + 0.5) * h, y]
    }

    /// Periodic distance between two coordinates on one axis.
    pub fn axis_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.side);
        d.min(self.side - d)
    }

    pub fn torus_distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        (0..self.dim).map(|i| self.axis_distance(p[i], q[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Torus distance between the centers of two cells.
    pub fn cell_distance(&self, i: usize, j: usize) -> f64 {
        self.torus_distance(self.center(i), self.center(j))
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Complex scalar field, one value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Field {
        Field { grid, values: vec![C64::new(0.0, 0.0); grid.cell_count()] }
    }

    pub fn constant(grid: Grid, c: C64) -> Field {
        Field { grid, values: vec![c; grid.cell_count()] }
    }

    /// Field with one cell set to `value`.
    pub fn delta(grid: Grid, idx: usize, value: C64) -> Field {
        let mut f = Field::zeros(grid);
        f.values[idx] = value;
        f
    }

    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Field> {
        if values.len() != grid.cell_count() {
            return Err(Error::Precondition(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Precondition("field contains non-finite values".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Field> {
        Field::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> C64) -> Field {
        let values = (0..grid.cell_count()).map(|i| f(grid.center(i))).collect();
        Field { grid, values }
    }

    pub fn from_real_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Field {
        Field::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    /// Wraps raw values without validation; used by kernels that already produce finite data.
    pub(crate) fn from_raw(grid: Grid, values: Vec<C64>) -> Field {
        debug_assert_eq!(values.len(), grid.cell_count());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Average value `⨏ f`.
    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }

    pub fn minus_mean(&self) -> Field {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: C64) -> Field {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid, values })
    }

    /// `L²` pairing `h^dim Σ f ḡ`, conjugate-linear in the second slot.
    pub fn inner(&self, other: &Field) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Vector field stored as `dim` component fields.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<VectorField> {
        let first = components.first().ok_or_else(|| Error::Precondition("empty vector field".into()))?;
        if components.len() != first.grid.dim {
            return Err(Error::Precondition("component count must equal grid dimension".into()));
        }
        for c in &components[1..] {
            first.grid.check_same(&c.grid)?;
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: Grid) -> VectorField {
        VectorField { components: (0..grid.dim).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.components[0].grid
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    /// Pointwise Euclidean magnitude `|v(x)|`.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.grid().cell_count();
        (0..n)
            .map(|i| self.components.iter().map(|c| c.values[i].norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    pub fn inner(&self, other: &VectorField) -> Result<C64> {
        self.grid().check_same(other.grid())?;
        self.components.iter().zip(&other.components).map(|(a, b)| a.inner(b)).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.components.iter().map(|c| c.norm2().powi(2)).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: C64) -> VectorField {
        VectorField { components: self.components.iter().map(|f| f.scale(c)).collect() }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        let components = self.components.iter().zip(&other.components).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(VectorField { components })
    }
}

/// Forward difference `(u(x+e_i) − u(x))/h` along `axis`, written into `out`.
pub(crate) fn forward_difference(grid: &Grid, u: &[C64], axis: usize, out: &mut [C64]) {
    let inv_h = 1.0 / grid.spacing();
    for (i, o) in out.iter_mut().enumerate() {
        *o = (u[grid.shift(i, axis, 1)] - u[i]) * inv_h;
    }
}

pub fn gradient(f: &Field) -> VectorField {
    let grid = f.grid;
    let components = (0..grid.dim)
        .map(|axis| {
            let mut out = vec![C64::new(0.0, 0.0); grid.cell_count()];
            forward_difference(&grid, &f.values, axis, &mut out);
            Field::from_raw(grid, out)
        })
        .collect();
    VectorField { components }
}

/// Gradient of a field given as raw cell values.
pub(crate) fn gradient_values(grid: &Grid, u: &[C64]) -> Vec<Vec<C64>> {
    (0..grid.dim)
        .map(|axis| {
            let mut out = vec![C64::new(0.0, 0.0); u.len()];
            forward_difference(grid, u, axis, &mut out);
            out
        })
        .collect()
}

/// Backward-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorField) -> Result<Field> {
    let grid = *v.grid();
    let inv_h = 1.0 / grid.spacing();
    let mut out = vec![C64::new(0.0, 0.0); grid.cell_count()];
    for (axis, comp) in v.components.iter().enumerate() {
        grid.check_same(&comp.grid)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o += (comp.values[i] - comp.values[grid.shift(i, axis, -1)]) * inv_h;
        }
    }
    Ok(Field::from_raw(grid, out))
}

/// Adjoint of [`gradient_values`] for the unweighted inner product, `−div`.
pub(crate) fn gradient_adjoint_values(grid: &Grid, comps: &[Vec<C64>]) -> Vec<C64> {
    let inv_h = 1.0 / grid.spacing();
    let mut out = vec![C64::new(0.0, 0.0); grid.cell_count()];
    for (axis, comp) in comps.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            *o -= (comp[i] - comp[grid.shift(i, axis, -1)]) * inv_h;
        }
    }
    out
}

/// Weighted `L^p` norm of absolute values `(h^dim Σ |a|^p)^{1/p}`, `p = ∞` allowed.
pub(crate) fn lp_of_abs(abs: impl Iterator<Item = f64>, weight: f64, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(abs.fold(0.0, f64::max));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let vals: Vec<f64> = abs.collect();
    let scale = vals.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Scaling by the maximum keeps large p from overflowing.
    let s: f64 = vals.iter().map(|a| (a / scale).powf(p)).sum();
    Ok(scale * (weight * s).powf(1.0 / p))
}

pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    lp_of_abs(f.values.iter().map(|v| v.norm()), f.grid.cell_volume(), p)
}

/// `L^p` norm of the pointwise Euclidean magnitude of a vector field.
pub fn lp_norm_vector(v: &VectorField, p: f64) -> Result<f64> {
    lp_of_abs(v.magnitude().into_iter(), v.grid().cell_volume(), p)
}

/// Hölder conjugate exponent `p' = p/(p−1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}
