//! `heat`: contour against Padé, conservation, Gaussian fits of `K_t` and `∂_tK_t`, Hölder
//! statistic.

use super::{CheckMode, Context, Recorder, Table};
use crate::error::Result;
use crate::kernel::KernelMatrix;
use crate::lattice::Field;
use crate::operator::LatticeOperator;
use crate::semigroup::{conservation_check, gaussian_fit, heat_kernel, holder_statistic, ContourPropagator, DensePropagator, GaussianFitReport, Propagator};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE: &str = "e^{−tL} = (2πi)^{−1}∫_Γ e^{tλ}(λ−L)^{−1}dλ";
const CONSERVATION: &str = "e^{−tL}1 = 1";
const GAUSSIAN: &str = "|K_t(x,y)| ≤ Ct^{−n/2}e^{−β|x−y|²/t}";
const DERIVATIVE: &str = "|∂_t^l K_t(x,y)| ≤ Ct^{−n/2−l}e^{−β|x−y|²/t}";
const HOLDER: &str = "|K_t(x,y) − K_t(x',y)| ≤ C(|x−x'|/(√t+|x−y|))^{μ₀}t^{−n/2}e^{−β|x−y|²/t}";

fn fit_record(rec: &mut Recorder, name: &str, anchor: &str, criterion: &str, fit: &Result<GaussianFitReport>, met: impl Fn(&GaussianFitReport) -> bool) {
    match fit {
        Ok(f) => {
            let mut t = Table::new(&["t"]);
            f.t_values.iter().for_each(|v| t.push(vec![*v]));
            rec.add(name, anchor, CheckMode::Gate, criterion, met(f))
                .value("c", f.c)
                .value("beta", f.beta)
                .value("r_squared", f.r_squared)
                .value("fitted_order", f.fitted_order)
                .value("window_lo", f.x_window.0)
                .value("window_hi", f.x_window.1)
                .value("samples", f.sample_count as f64)
                .with_table(t);
        }
        Err(e) => {
            rec.add(name, anchor, CheckMode::Gate, criterion, false).note("error", e.to_string());
        }
    }
}

pub(super) fn run(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let hp = &cfg.heat;
    let op = ctx.operator(cfg.grid.n, false)?;
    let grid = *op.grid();
    let contour = ContourPropagator::new(&*op)?.with_tolerance(hp.contour_tolerance);
    let pade = DensePropagator::new(&*op)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4ea7);
    let f: Vec<C64> = (0..grid.cell_count()).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    let mut table = Table::new(&["t", "relative_error"]);
    let mut worst = 0.0f64;
    for &t in &hp.oracle_times {
        let z = C64::new(t, 0.0);
        let a = Field::from_values(grid, contour.propagate(z, 0, std::slice::from_ref(&f))?.remove(0))?;
        let b = Field::from_values(grid, pade.propagate(z, 0, std::slice::from_ref(&f))?.remove(0))?;
        let e = a.sub(&b)?.norm2() / b.norm2();
        worst = worst.max(e);
        table.push(vec![t, e]);
    }
    rec.add("heat.oracle_match", ORACLE, CheckMode::Gate, "contour vs Padé relative L² error ≤ 1e-8", worst <= 1e-8)
        .value("max_relative_error", worst)
        .value("contour_tolerance", hp.contour_tolerance)
        .value("theta0", op.theta0_estimate().unwrap_or(f64::NAN))
        .with_table(table);

    let dev = conservation_check(&contour, &hp.conservation_times)?;
    rec.add("heat.conservation", CONSERVATION, CheckMode::Gate, "max_t ‖e^{−tL}1 − 1‖_∞ ≤ 1e-6", dev <= 1e-6).value("max_deviation", dev);

    let kn = hp.kernel_n.unwrap_or(cfg.grid.n);
    let prop = ctx.propagator(kn, false)?;
    let h2 = prop.grid().spacing().powi(2);
    let times: Vec<f64> = hp.kernel_time_multipliers.iter().map(|m| m * h2).collect();
    let k0: Vec<(f64, KernelMatrix)> = times.iter().map(|&t| Ok((t, heat_kernel(&prop, t, 0)?))).collect::<Result<_>>()?;
    let k1: Vec<(f64, KernelMatrix)> = times.iter().map(|&t| Ok((t, heat_kernel(&prop, t, 1)?))).collect::<Result<_>>()?;
    let fit0 = gaussian_fit(&k0, 0);
    fit_record(rec, "heat.gaussian_fit", GAUSSIAN, "β > 0 and r² ≥ 0.8", &fit0, |f| f.beta > 0.0 && f.r_squared >= 0.8);
    if let Some(r) = rec.records.last_mut() {
        r.value("n", kn as f64).note("backend", prop.backend());
    }
    let fit1 = gaussian_fit(&k1, 1);
    fit_record(rec, "heat.derivative_fit", DERIVATIVE, "l = 1: |fitted order − 1| ≤ 0.2", &fit1, |f| (f.fitted_order - 1.0).abs() <= 0.2);

    match &fit0 {
        Ok(f) => {
            let h = holder_statistic(&k0, f.beta)?;
            let mut t = Table::new(&["t", "median", "q95", "max", "count"]);
            for q in &h.per_t {
                t.push(vec![q.t, q.median, q.q95, q.max, q.count as f64]);
            }
            rec.add("heat.holder", HOLDER, CheckMode::Record, "95th percentile finite (μ₀ = 1)", h.max_q95.is_finite())
                .value("max_q95", h.max_q95)
                .value("beta", h.beta)
                .with_table(t);
        }
        Err(e) => {
            rec.add("heat.holder", HOLDER, CheckMode::Record, "needs a Gaussian fit", false).note("error", e.to_string());
        }
    }
    Ok(())
}
