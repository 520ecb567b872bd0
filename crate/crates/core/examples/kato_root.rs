//! The square root by singular quadrature against the Schur root, the Riesz transform, and
//! Kato ratios ‖L^{1/2}f‖_p / ‖∇f‖_p.
//!
//! cargo run --release --example kato_root

use elliptic_lab::calculus::{kato_ratio_sweep, riesz_apply, sqrt_apply, test_fields, QuadratureSpec, SchurSqrt, SqrtRoute, TestFamily};
use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Grid};
use elliptic_lab::operator::assemble;
use elliptic_lab::semigroup::DensePropagator;

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(2, 12, 1.0)?;
    let op = assemble(&make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(0.5), grid)?);
    let prop = DensePropagator::new(&op)?;
    let schur = SchurSqrt::new(&op)?;
    let family = TestFamily::Mixed { max_frequency: 3, count: 3 };
    let f = test_fields(grid, family, 1, 4).remove(0);
    let spec = QuadratureSpec::for_grid(&grid);
    let quad = sqrt_apply(&prop, &f, &spec)?;
    let exact = schur.sqrt_many(std::slice::from_ref(&f))?.remove(0);
    println!("quadrature vs Schur: {:.1e}; Schur squaring residual {:.1e}", quad.sub(&exact)?.norm2() / exact.norm2(), schur.squaring_residual());
    let r = riesz_apply(&prop, &f, &spec)?;
    println!("‖∇L^(-1/2)f‖ / ‖f‖ = {:.4}", r.norm2() / f.norm2());
    for p in [1.5, 2.0, 3.0, 4.0] {
        let k = kato_ratio_sweep(&schur, p, family, 8, 1)?;
        println!("p = {p}: ratios in [{:.3}, {:.3}], median {:.3}", k.min, k.max, k.median);
    }
    Ok(())
}
