//! L^p → L^q norms of the semigroup families against t, with the scaling t^{γ/2}.
//!
//! cargo run --release --example lpq_bounds

use elliptic_lab::bounds::{pq_bound_sweep, Families, FamilyTag};
use elliptic_lab::lattice::{make_coefficients, CoefficientKind, CoefficientParams, Grid};
use elliptic_lab::operator::assemble;
use elliptic_lab::semigroup::DensePropagator;

fn main() -> elliptic_lab::Result<()> {
    let grid = Grid::new(1, 64, 1.0)?;
    let op = assemble(&make_coefficients(CoefficientKind::AnisotropicSym, &CoefficientParams::default(), grid)?);
    let prop = DensePropagator::new(&op)?;
    let fam = Families::new(&prop);
    let t_grid: Vec<f64> = (0..=4).map(|k| 1e-3 * 10f64.powf(k as f64 / 4.0)).collect();
    for (family, p, q) in [(FamilyTag::Semigroup, 1.0, 2.0), (FamilyTag::TLt, 1.5, 2.0), (FamilyTag::SqrtTGrad, 2.0, 2.5)] {
        let s = pq_bound_sweep(&fam, family, p, q, &t_grid, 1)?;
        println!("{:<12} {p}→{q}: γ = {:.3}, norm slope {:.3}, sup t^(γ/2)‖T_t‖ = {:.3}", family.name(), s.gamma, s.norm_slope, s.sup_scaled);
        for x in &s.samples {
            println!("    t = {:.2e}  ‖T_t‖ = {:.4}  (upper bound {:.4}{})", x.t, x.norm, x.upper_bound, if x.exact { ", exact" } else { "" });
        }
    }
    Ok(())
}
