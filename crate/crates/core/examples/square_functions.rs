//! Vertical square functions; GL takes L^{1/2}f as input. On the Laplacian the L² identities are exact:
//! ‖GL f‖² = ‖f − f̄‖²/4, ‖G1 f‖² = ‖L^{1/2}f‖²/4 and the gradient energy is ‖f − f̄‖²/2.
//!
//! cargo run --release --example square_functions

use elliptic_lab::calculus::{SchurSqrt, SqrtRoute};
use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::operator::assemble;
use elliptic_lab::semigroup::DensePropagator;
use elliptic_lab::squarefn::{ggrad_energy, square_function, SquareFnKind, TimeGrid};

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(2, 8, 1.0)?;
    let op = assemble(&make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), grid)?);
    let prop = DensePropagator::new(&op)?;
    let f = Field::from_real_fn(grid, |x| (6.0 * x[0]).sin() + (x[1] - 0.5).powi(2));
    let w = f.minus_mean().norm2().powi(2);
    let root = SchurSqrt::new(&op)?.sqrt_many(std::slice::from_ref(&f))?.remove(0);

    let gl = square_function(&prop, &f, SquareFnKind::Gl, &TimeGrid::default_for(&grid, SquareFnKind::Gl), Some(&root))?;
    println!("‖GL f‖² / (‖f − f̄‖²/4) = {:.6}", gl.norm2().powi(2) / (w / 4.0));
    let g1 = square_function(&prop, &f, SquareFnKind::G1, &TimeGrid::default_for(&grid, SquareFnKind::G1), None)?;
    println!("‖G1 f‖² / (‖L^½f‖²/4) = {:.6}", g1.norm2().powi(2) / (root.norm2().powi(2) / 4.0));
    let e = ggrad_energy(&prop, &f, &TimeGrid::default_for(&grid, SquareFnKind::Ggrad), 1.0)?;
    println!("gradient energy / (‖f − f̄‖²/2) = {:.6}", e.energy / e.exact_form_energy);
    for kind in [SquareFnKind::G2x, SquareFnKind::G2t] {
        let s = square_function(&prop, &f, kind, &TimeGrid::default_for(&grid, kind), None)?;
        println!("‖{} f‖₂ = {:.4}", kind.name(), s.norm2());
    }
    Ok(())
}
