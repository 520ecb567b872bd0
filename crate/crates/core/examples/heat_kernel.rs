//! Heat semigroup through the resolvent contour, checked against the Padé exponential, and a
//! Gaussian fit of the heat kernel of the 1D Laplacian (continuum β = 1/4).
//!
//! cargo run --release --example heat_kernel

use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::operator::assemble;
use elliptic_lab::semigroup::{conservation_check, expm_oracle, gaussian_fit, heat_kernel, semigroup_apply, ContourPropagator, ContourSpec, DensePropagator};
use elliptic_lab::C64;

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(2, 16, 1.0)?;
    let op = assemble(&make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(0.5), grid)?).with_sector_estimate(64, 1)?;
    let f = Field::from_real_fn(grid, |x| (-((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)) / 0.02).exp());
    for t in [0.01, 0.1, 1.0] {
        let a = semigroup_apply(&op, t, &f, &ContourSpec::for_operator(&op, C64::new(t, 0.0))?)?;
        let b = expm_oracle(&op, t, &f)?;
        println!("t = {t:<5} contour vs Padé {:.2e}", a.sub(&b)?.norm2() / b.norm2());
    }
    let dev = conservation_check(&ContourPropagator::new(&op)?, &[1e-3, 1e-2, 0.1, 1.0])?;
    println!("max |e^(-tL)1 − 1| = {dev:.1e}");

    let line = Grid::new(1, 128, 1.0)?;
    let lap = assemble(&make_coefficients(CoefficientKind::Identity, &CoefficientParams::default(), line)?);
    let prop = DensePropagator::new(&lap)?;
    let h2 = line.spacing().powi(2);
    let kernels: Vec<_> = [2.0, 4.0, 8.0, 16.0].iter().map(|m| Ok((m * h2, heat_kernel(&prop, m * h2, 0)?))).collect::<elliptic_lab::Result<_>>()?;
    let fit = gaussian_fit(&kernels, 0)?;
    println!("1D Laplacian: β = {:.3}, r² = {:.3}, t-offset {:.3}", fit.beta, fit.r_squared, fit.fitted_order);
    Ok(())
}
