//! Function-space norms of the antisymmetric coefficient: BMO stays bounded while the sup
//! norm grows with resolution. Also Morrey/Campanato norms and a div-curl product in the
//! Hardy space.
//!
//! cargo run --example bmo_spaces

use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Field, Grid};
use elliptic_lab::spaces::{bmo_seminorm, campanato_norm, divcurl_product, hardy_norm, morrey_norm};
use std::f64::consts::PI;

fn main() -> elliptic_lab::Result<()> {
    println!("{:>4} {:>10} {:>10}", "N", "sup|a|", "‖a‖_BMO");
    for n in [16, 32, 64] {
        let grid = Grid::new(2, n, 1.0)?;
        let a = make_coefficients(CoefficientKind::BmoLog, &CoefficientParams::bmo_log(1.0), grid)?.antisym_field();
        println!("{n:>4} {:>10.4} {:>10.4}", a.max_abs(), bmo_seminorm(&a));
    }

    let grid = Grid::new(2, 32, 1.0)?;
    let f = Field::from_real_fn(grid, |x| (2.0 * PI * x[0]).cos() + 0.5 * (4.0 * PI * x[1]).sin());
    println!("Morrey γ=1: {:.4}, Campanato γ=1: {:.4}", morrey_norm(&f, 1.0)?, campanato_norm(&f, 1.0)?);

    let u = Field::from_real_fn(grid, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let v = Field::from_real_fn(grid, |x| (2.0 * PI * (x[0] + x[1])).cos());
    let prod = divcurl_product(&u, &v, 0, 1)?;
    println!("div-curl product: mean {:.1e}, Hardy norm {:.4}", prod.mean().norm(), hardy_norm(&prod));
    Ok(())
}
