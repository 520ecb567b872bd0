//! Dense integral kernels `K(x, y)` on a lattice, stored as matrices with the cell volume
//! divided out so that `(Tf)(x) = Σ_y K(x, y) f(y) h^dim`.

use crate::error::Result;
use crate::lattice::Grid;
use faer::Mat;
use num_complex::Complex64 as C64;
use std::io::Write;

#[derive(Clone, Debug)]
pub struct KernelMatrix {
    grid: Grid,
    values: Mat<C64>,
}

impl KernelMatrix {
    /// Kernel of the matrix `a` acting on cell values: `K = a / h^dim`.
    pub fn from_operator_matrix(grid: Grid, a: Mat<C64>) -> KernelMatrix {
        let inv = 1.0 / grid.cell_volume();
        KernelMatrix { grid, values: a * faer::Scale(C64::new(inv, 0.0)) }
    }

    /// Kernel from its columns `K(·, y)`.
    pub fn from_columns(grid: Grid, columns: &[Vec<C64>]) -> KernelMatrix {
        let n = grid.cell_count();
        KernelMatrix { grid, values: Mat::from_fn(n, n, |i, j| columns[j][i]) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Mat<C64> {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> C64 {
        self.values[(x, y)]
    }

    /// The matrix acting on cell values, `K·h^dim`.
    pub fn operator_matrix(&self) -> Mat<C64> {
        &self.values * faer::Scale(C64::new(self.grid.cell_volume(), 0.0))
    }

    /// `max_{x,y} |K(x,y) − K(y,x)|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.values.nrows();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                m = m.max((self.values[(i, j)] - self.values[(j, i)]).norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.values.nrows();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.values[(i, j)].norm());
            }
        }
        m
    }

    /// `Σ_y K(x, y) h^dim` for every `x`.
    pub fn row_sums(&self) -> Vec<C64> {
        let n = self.values.nrows();
        let w = self.grid.cell_volume();
        (0..n).map(|i| (0..n).map(|j| self.values[(i, j)]).sum::<C64>() * w).collect()
    }

    /// CSV with header `x,y,re,im`, one row per entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y", "re", "im"])?;
        let n = self.values.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = self.values[(i, j)];
                wr.write_record(&[i.to_string(), j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Pairs `(x, y, d_T(x, y))` with `d_min ≤ d_T < d_max`.
pub fn pairs_in_annulus(grid: &Grid, d_min: f64, d_max: f64) -> Vec<(usize, usize, f64)> {
    let n = grid.cell_count();
    let mut out = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let d = grid.cell_distance(x, y);
            if d >= d_min && d < d_max {
                out.push((x, y, d));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_row_sums() {
        let grid = Grid::new(1, 8, 2.0).unwrap();
        let k = KernelMatrix::from_operator_matrix(grid, Mat::<C64>::identity(8, 8));
        assert!((k.get(3, 3).re - 4.0).abs() < 1e-15);
        assert!(k.row_sums().iter().all(|s| (s - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(k.asymmetry(), 0.0);
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 65);
        assert!(text.starts_with("x,y,re,im"));
    }

    #[test]
    fn annulus_pairs_are_symmetric() {
        let grid = Grid::new(2, 6, 1.0).unwrap();
        let pairs = pairs_in_annulus(&grid, 0.2, 0.4);
        assert!(!pairs.is_empty());
        for &(x, y, d) in &pairs {
            assert!((0.2..0.4).contains(&d));
            assert!(pairs.iter().any(|&(a, b, _)| a == y && b == x));
        }
    }
}
