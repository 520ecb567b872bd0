//! Assembles the lattice operator for a logarithmic BMO antisymmetric part and checks the
//! structure the rest of the library relies on.
//!
//! cargo run --example assemble_operator

use elliptic_lab::lattice::{gradient, make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::operator::{assemble, assemble_antisymmetric_part, sector_angle, ConjugationWeight, LatticeOperator};
use elliptic_lab::C64;

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(2, 16, 1.0)?;
    let coeffs = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(0.5), grid)?;
    let op = assemble(&coeffs);
    println!("{} cells, λ₀ = {}, BMO bound {:.3}", grid.cell_count(), op.lambda0(), op.bmo_bound());

    let one = vec![C64::new(1.0, 0.0); grid.cell_count()];
    let defect = op.matrix().mul_vec(&one).iter().map(|v| v.norm()).fold(0.0, f64::max);
    println!("|M1|_∞ = {defect:.1e}");

    let u = Field::from_real_fn(grid, |x| (2.0 * std::f64::consts::PI * x[0]).sin() * (x[1] * 3.0).cos()).minus_mean();
    let form = op.form_apply(&u, &u)?;
    println!("Re⟨Mu,u⟩ / ‖∇u‖² = {:.4}", form.re / gradient(&u).norm2().powi(2));
    let ma = assemble_antisymmetric_part(&coeffs);
    let e = ma.mul_vec(u.values()).iter().zip(u.values()).map(|(a, b)| a * b.conj()).sum::<C64>();
    println!("Re⟨M_a u,u⟩ = {:.1e}", e.re);

    let theta0 = sector_angle(&op, 256, 3)?;
    println!("sector angle θ₀ ≈ {theta0:.4}");

    let psi = Field::from_real_fn(grid, |x| 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin());
    let weight = ConjugationWeight::new(&psi)?;
    let conj = op.conjugate(&weight)?;
    println!("conjugated operator with Lipschitz bound {:.3}: {} nonzeros", weight.lip_bound(), conj.matrix().nnz());
    Ok(())
}
