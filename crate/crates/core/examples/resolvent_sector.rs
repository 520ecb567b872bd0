//! Resolvent solves, scaled resolvent norms on a sector, and exponential decay of the kernel
//! of a resolvent power.
//!
//! cargo run --release --example resolvent_sector

use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::operator::{assemble, LatticeOperator};
use elliptic_lab::resolvent::{default_power, resolve, resolvent_power_kernel, sector_sweep};
use elliptic_lab::C64;

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(2, 12, 1.0)?;
    let op = assemble(&make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(0.5), grid)?).with_sector_estimate(64, 1)?;
    let f = Field::from_real_fn(grid, |x| x[0].sin() + x[1]);
    let lambda = C64::new(2.0, 5.0);
    let u = resolve(&op, lambda, &f, 1e-12)?;
    let lu = Field::from_values(grid, op.matrix().mul_vec(u.values()))?;
    let back = lu.add(&u.scale(lambda))?;
    println!("‖(λ + L)u − f‖/‖f‖ = {:.1e}", back.sub(&f)?.norm2() / f.norm2());

    let theta0 = op.theta0_estimate().unwrap_or(0.0);
    let theta1 = 0.5 * (theta0 + std::f64::consts::FRAC_PI_2);
    let sweep = sector_sweep(&op, theta1, &[1.0, 10.0, 100.0, 1000.0], &[-0.5, 0.0, 0.5])?;
    println!("θ₀ {:.3}, θ₁ {:.3}: sup|λ|‖(λ+L)⁻¹‖ = {:.3}, sup|λ|^½‖∇(λ+L)⁻¹‖ = {:.3}", theta0, theta1, sweep.sup_scaled_norm, sweep.sup_scaled_grad_norm);

    let m = default_power(grid.dim());
    let k = resolvent_power_kernel(&op, C64::new(400.0, 0.0), m)?;
    println!("(L + 400)^(-{}) kernel: decay rate {:.3}·|λ|^½, r² {:.3}", 2 * m, k.fit.rate, k.fit.r_squared);
    Ok(())
}
