//! Lattice versions of the BMO seminorm, the grand-maximal Hardy norm, Morrey and
//! Campanato norms, and the div-curl quantities built from the lattice gradient.
//!
//! Cubes and scales are dyadic multiples of the spacing and wrap around the torus.

use crate::error::{Error, Result};
use crate::lattice::{gradient, lp_norm_vector, Field, Grid};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Every axis-aligned cube of side `h·2^k` (up to the box), at every periodic position.
#[derive(Clone, Debug)]
pub struct DyadicCubeSet {
    grid: Grid,
    sides: Vec<usize>,
}

/// A cube given by its lower corner cell and its side in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cube {
    pub origin: [usize; 2],
    pub side: usize,
}

impl DyadicCubeSet {
    pub fn new(grid: Grid) -> DyadicCubeSet {
        let n = grid.points_per_axis();
        let sides = std::iter::successors(Some(1usize), |s| Some(s * 2)).take_while(|&s| s <= n).collect();
        DyadicCubeSet { grid, sides }
    }

    /// Side lengths in cells.
    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    /// All cubes; a cube spanning the whole box is listed once.
    pub fn cubes(&self) -> impl Iterator<Item = Cube> + '_ {
        let n = self.grid.points_per_axis();
        let dim = self.grid.dim();
        self.sides.iter().flat_map(move |&side| {
            let positions = if side == n { 1 } else { n };
            let count = positions.pow(dim as u32);
            (0..count).map(move |k| Cube { origin: [k % positions, k / positions], side })
        })
    }

    pub fn len(&self) -> usize {
        self.cubes().count()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    /// Cells of a cube, wrapping periodically.
    pub fn cells(&self, cube: Cube) -> Vec<usize> {
        let n = self.grid.points_per_axis();
        let ys = if self.grid.dim() == 2 { cube.side } else { 1 };
        let mut out = Vec::with_capacity(cube.side * ys);
        for dy in 0..ys {
            for dx in 0..cube.side {
                out.push(self.grid.index([(cube.origin[0] + dx) % n, (cube.origin[1] + dy) % n]));
            }
        }
        out
    }
}

fn mean_oscillation(values: &[C64], cells: &[usize]) -> f64 {
    let m = cells.iter().map(|&c| values[c]).sum::<C64>() / cells.len() as f64;
    cells.iter().map(|&c| (values[c] - m).norm()).sum::<f64>() / cells.len() as f64
}

/// Largest mean oscillation `⨏_Q |f − f_Q|` over all dyadic cubes.
pub fn bmo_seminorm(f: &Field) -> f64 {
    let set = DyadicCubeSet::new(*f.grid());
    let values = f.values();
    let mut cells = Vec::new();
    let mut best = 0.0f64;
    for cube in set.cubes() {
        cells.clear();
        cells.extend(set.cells(cube));
        best = best.max(mean_oscillation(values, &cells));
    }
    best
}

/// Discrete hat kernel of half-width `m` cells with unit mass.
pub fn hat_weights(m: usize) -> Vec<f64> {
    let mf = m as f64;
    (0..m).map(|k| (1.0 - k as f64 / mf) / mf).collect()
}

/// Periodic convolution with the tensor hat kernel of half-width `m` cells.
pub fn hat_smooth(f: &Field, m: usize) -> Field {
    let grid = *f.grid();
    let w = hat_weights(m);
    let mut cur = f.values().to_vec();
    for axis in 0..grid.dim() {
        let mut next = vec![C64::new(0.0, 0.0); cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = cur[i] * w[0];
            for (k, &wk) in w.iter().enumerate().skip(1) {
                let k = k as isize;
                acc += (cur[grid.shift(i, axis, k)] + cur[grid.shift(i, axis, -k)]) * wk;
            }
            *out = acc;
        }
        cur = next;
    }
    Field::from_raw(grid, cur)
}

/// Half-widths `m` (in cells) of the dyadic scales `t = m·h ≤ Λ/2`.
pub fn hardy_scales(grid: &Grid) -> Vec<usize> {
    let n = grid.points_per_axis();
    std::iter::successors(Some(1usize), |m| Some(m * 2)).take_while(|&m| 2 * m <= n).collect()
}

/// `∫ sup_t |h_t ∗ f|` over the dyadic scales with the hat mollifier.
pub fn hardy_norm(f: &Field) -> f64 {
    let grid = *f.grid();
    let mut sup = vec![0.0f64; grid.cell_count()];
    for m in hardy_scales(&grid) {
        let s = hat_smooth(f, m);
        for (a, v) in sup.iter_mut().zip(s.values()) {
            *a = a.max(v.norm());
        }
    }
    sup.iter().sum::<f64>() * grid.cell_volume()
}

/// `∂_j u ∂_i v − ∂_i u ∂_j v` with zero-based axis indices.
pub fn divcurl_product(u: &Field, v: &Field, i: usize, j: usize) -> Result<Field> {
    let grid = *u.grid();
    grid.check_same(v.grid())?;
    for k in [i, j] {
        if k >= grid.dim() {
            return Err(Error::IndexOutOfRange { index: k, dim: grid.dim() });
        }
    }
    let gu = gradient(u);
    let gv = gradient(v);
    let values = (0..grid.cell_count())
        .map(|x| {
            gu.component(j).values()[x] * gv.component(i).values()[x]
                - gu.component(i).values()[x] * gv.component(j).values()[x]
        })
        .collect();
    Ok(Field::from_raw(grid, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyProductReport {
    /// Hardy norm of `∂_i(uv)`.
    pub hardy: f64,
    /// `‖u‖₂‖∇v‖₂ + ‖∇u‖₂‖v‖₂`.
    pub bound: f64,
}

impl HardyProductReport {
    pub fn ratio(&self) -> f64 {
        if self.bound > 0.0 {
            self.hardy / self.bound
        } else {
            0.0
        }
    }
}

pub fn product_gradient_hardy(u: &Field, v: &Field, i: usize) -> Result<HardyProductReport> {
    let grid = *u.grid();
    if i >= grid.dim() {
        return Err(Error::IndexOutOfRange { index: i, dim: grid.dim() });
    }
    let uv = u.mul(v)?;
    let d = gradient(&uv);
    let hardy = hardy_norm(d.component(i));
    let bound = u.norm2() * lp_norm_vector(&gradient(v), 2.0)? + lp_norm_vector(&gradient(u), 2.0)? * v.norm2();
    Ok(HardyProductReport { hardy, bound })
}

/// Largest admissible ball radius: `min(1, Λ/2)`, or `Λ/2` on boxes smaller than 1.
pub fn morrey_radius_cap(grid: &Grid) -> f64 {
    (0.5 * grid.side_length()).min(1.0)
}

/// Dyadic radii `h·2^k` up to the cap.
pub fn morrey_radii(grid: &Grid) -> Vec<f64> {
    let cap = morrey_radius_cap(grid) * (1.0 + 1e-12);
    let h = grid.spacing();
    std::iter::successors(Some(h), |r| Some(r * 2.0)).take_while(|&r| r <= cap).collect()
}

/// Offsets (in cells) of the lattice ball of radius `r` around a cell center.
fn ball_offsets(grid: &Grid, r: f64) -> Vec<[isize; 2]> {
    let h = grid.spacing();
    let n = grid.points_per_axis() as isize;
    let reach = ((r / h).floor() as isize).min(n / 2);
    let ys = if grid.dim() == 2 { reach } else { 0 };
    let mut out = Vec::new();
    for dy in -ys..=ys {
        for dx in -reach..=reach {
            let d = ((dx * dx + dy * dy) as f64).sqrt() * h;
            // Offsets of ±n/2 hit the same cell on even grids; keep one copy.
            let dup = (n % 2 == 0) && ((dx == n / 2) || (dy == n / 2));
            if d <= r * (1.0 + 1e-12) && !dup {
                out.push([dx, dy]);
            }
        }
    }
    out
}

fn ball_cells<'a>(grid: &'a Grid, center: usize, offsets: &'a [[isize; 2]]) -> impl Iterator<Item = usize> + 'a {
    let dim = grid.dim();
    offsets.iter().map(move |o| {
        let i = grid.shift(center, 0, o[0]);
        if dim == 2 {
            grid.shift(i, 1, o[1])
        } else {
            i
        }
    })
}

fn check_gamma(gamma: f64, max: f64) -> Result<()> {
    if gamma >= 0.0 && gamma <= max {
        Ok(())
    } else {
        Err(Error::Precondition(format!("gamma = {gamma} outside [0, {max}]")))
    }
}

/// `sup_{x, R} (R^{−γ} ∫_{B_R(x)} |f|²)^{1/2}` over cell centers and dyadic radii.
pub fn morrey_norm(f: &Field, gamma: f64) -> Result<f64> {
    let grid = *f.grid();
    check_gamma(gamma, grid.dim() as f64)?;
    let vol = grid.cell_volume();
    let abs2: Vec<f64> = f.values().iter().map(|v| v.norm_sqr()).collect();
    let mut best = 0.0f64;
    for r in morrey_radii(&grid) {
        let offs = ball_offsets(&grid, r);
        let w = r.powf(-gamma) * vol;
        for c in 0..grid.cell_count() {
            let mass: f64 = ball_cells(&grid, c, &offs).map(|k| abs2[k]).sum();
            best = best.max(w * mass);
        }
    }
    Ok(best.sqrt())
}

/// `sup_{x, R} (R^{−γ} ∫_{B_R(x)} |f − f_{x,R}|²)^{1/2}`.
pub fn campanato_norm(f: &Field, gamma: f64) -> Result<f64> {
    let grid = *f.grid();
    check_gamma(gamma, grid.dim() as f64 + 2.0)?;
    let vol = grid.cell_volume();
    let vals = f.values();
    let mut best = 0.0f64;
    let mut cells = Vec::new();
    for r in morrey_radii(&grid) {
        let offs = ball_offsets(&grid, r);
        let w = r.powf(-gamma) * vol;
        for c in 0..grid.cell_count() {
            cells.clear();
            cells.extend(ball_cells(&grid, c, &offs));
            let m = cells.iter().map(|&k| vals[k]).sum::<C64>() / cells.len() as f64;
            let osc: f64 = cells.iter().map(|&k| (vals[k] - m).norm_sqr()).sum();
            best = best.max(w * osc);
        }
    }
    Ok(best.sqrt())
}
