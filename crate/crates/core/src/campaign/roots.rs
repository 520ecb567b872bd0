//! `kato` and `sqfn`: the square root against its dense oracle, Riesz transform, Kato ratios
//! and square-function ratios across resolutions.

use super::{label, stable, CheckMode, Context, Recorder, Table};
use crate::calculus::{inv_sqrt_apply, kato_ratio_sweep, riesz_apply, sqrt_apply_many, test_fields, QuadratureSpec, SchurSqrt, SqrtRoute};
use crate::error::Result;
use crate::lattice::{gradient, CoefficientKind, Field};
use crate::operator::LatticeOperator;
use crate::semigroup::Propagator;
use crate::squarefn::{g2t_second_route, ggrad_energy, integrand, square_function, square_function_ratio_sweep, SquareFnKind, TimeGrid};

const SQRT: &str = "L^{1/2}f = π^{−1/2}∫₀^∞ e^{−tL}Lf t^{−1/2}dt";
const RIESZ: &str = "‖∇L^{−1/2}f‖₂ ≲ ‖f‖₂";
const KATO: &str = "‖L^{1/2}f‖_p ≈ ‖∇f‖_p";
const ADJOINT: &str = "⟨L^{1/2}f, g⟩ = ⟨f, (L*)^{1/2}g⟩";
const PLANCHEREL: &str = "‖S f‖₂² = c_S‖f − f̄‖₂² for self-adjoint L";
const GGRAD: &str = "λ₀∫Re⟨Lu,u⟩dt ≤ ∫‖∇e^{−tL}f‖₂²dt ≤ λ₀^{−1}∫Re⟨Lu,u⟩dt";
const SQFN: &str = "‖S f‖_p ≲ ‖∇f‖_p";
const G2T: &str = "t²∂_t e^{−t²L}f = −2t³Le^{−t²L}f";

fn rel(a: &Field, b: &Field) -> Result<f64> {
    Ok(a.sub(b)?.norm2() / b.norm2().max(f64::MIN_POSITIVE))
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

pub(super) fn run_kato(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let kp = &cfg.kato;
    let n = cfg.grid.n;
    let op = ctx.operator(n, false)?;
    let grid = *op.grid();
    // Quadrature needs e^{−tL} at a few hundred times; the eigendecomposition makes each one a
    // pair of products, where Padé would redo a dense exponential per node.
    let spectral = ctx.spectral(n, false)?;
    let prop: &dyn Propagator = &*spectral;
    let spec = QuadratureSpec::for_grid(&grid);
    let fields = test_fields(grid, kp.family, kp.oracle_count, cfg.seed ^ 0x5a7);

    let schur = SchurSqrt::new(&*op)?;
    let quad = sqrt_apply_many(prop, &fields, &spec)?;
    let exact = schur.sqrt_many(&fields)?;
    let errs: Vec<f64> = quad.iter().zip(&exact).map(|(a, b)| rel(a, b)).collect::<Result<_>>()?;
    let mut t = Table::new(&["field", "relative_error"]);
    errs.iter().enumerate().for_each(|(i, e)| t.push(vec![i as f64, *e]));
    let worst = max_of(errs.iter().cloned());
    rec.add("kato.oracle_match", SQRT, CheckMode::Gate, "quadrature vs Schur relative L² error ≤ 1e-6", worst <= 1e-6)
        .value("max_relative_error", worst)
        .value("fields", fields.len() as f64)
        .note("backend", prop.backend())
        .with_table(t);

    let twice = sqrt_apply_many(prop, &quad, &spec)?;
    let mut squaring = 0.0f64;
    for (s, f) in twice.iter().zip(&fields) {
        let mf = Field::from_values(grid, op.matrix().mul_vec(f.values()))?;
        squaring = squaring.max(rel(s, &mf)?);
    }
    rec.add("kato.squaring", SQRT, CheckMode::Gate, "‖L^{1/2}L^{1/2}f − Lf‖₂/‖Lf‖₂ ≤ 1e-5", squaring <= 1e-5 && schur.squaring_residual() <= 1e-5)
        .value("quadrature", squaring)
        .value("schur", schur.squaring_residual());

    let mut round = 0.0f64;
    let mut riesz = 0.0f64;
    for (f, s) in fields.iter().zip(&quad) {
        round = round.max(rel(&inv_sqrt_apply(prop, s, &spec)?, f)?);
        let direct = riesz_apply(prop, f, &spec)?;
        let composed = gradient(&inv_sqrt_apply(prop, f, &spec)?);
        riesz = riesz.max(direct.sub(&composed)?.norm2() / composed.norm2().max(f64::MIN_POSITIVE));
    }
    rec.add("kato.round_trip", SQRT, CheckMode::Gate, "‖L^{−1/2}L^{1/2}f − f‖₂/‖f‖₂ ≤ 1e-6", round <= 1e-6).value("max_relative_error", round);
    rec.add("kato.riesz_paths", RIESZ, CheckMode::Gate, "∇ inside the quadrature vs ∇ after it, relative ≤ 1e-6", riesz <= 1e-6).value("max_relative_error", riesz);

    let adj = SchurSqrt::new(&*ctx.operator(n, true)?)?;
    let gs = test_fields(grid, kp.family, fields.len(), cfg.seed ^ 0xad7);
    let adj_roots = adj.sqrt_many(&gs)?;
    let mut pairing = 0.0f64;
    for ((f, rf), (g, rg)) in fields.iter().zip(&exact).zip(gs.iter().zip(&adj_roots)) {
        let a = rf.inner(g)?;
        let b = f.inner(rg)?;
        pairing = pairing.max((a - b).norm() / (rf.norm2() * g.norm2()).max(f64::MIN_POSITIVE));
    }
    rec.add("kato.adjoint_pairing", ADJOINT, CheckMode::Gate, "relative defect ≤ 1e-6", pairing <= 1e-6).value("max_defect", pairing);

    if cfg.coefficients.kind == CoefficientKind::Identity {
        let r = kato_ratio_sweep(&schur, 2.0, kp.family, kp.count, cfg.seed)?;
        let dev = max_of(r.upper_ratios.iter().map(|v| (v - 1.0).abs()));
        rec.add("kato.identity_p2", KATO, CheckMode::Gate, "L = −Δ_h: every p = 2 ratio is 1 ± 1e-6", dev <= 1e-6).value("max_deviation", dev);
    }

    let resolutions = cfg.resolutions(&kp.resolutions);
    let mut riesz_norms = Vec::new();
    let mut sweeps = Vec::new();
    for &rn in &resolutions {
        let p = ctx.propagator(rn, false)?;
        let root = ctx.root(&p)?;
        let g = *p.grid();
        let f = test_fields(g, kp.family, 1, cfg.seed ^ 0x7e5).remove(0);
        let r = riesz_apply(&p, &f, &QuadratureSpec::for_grid(&g))?;
        riesz_norms.push(r.norm2() / f.norm2());
        let per_p = kp.ps.iter().map(|&q| kato_ratio_sweep(&root, q, kp.family, kp.count, cfg.seed)).collect::<Result<Vec<_>>>()?;
        sweeps.push((root.route(), per_p));
    }
    let r = rec.add("kato.riesz_l2", RIESZ, CheckMode::Gate, "‖∇L^{−1/2}f‖₂/‖f‖₂ within ±50% across resolutions", stable(&riesz_norms));
    for (rn, v) in resolutions.iter().zip(&riesz_norms) {
        r.value(format!("ratio_n{rn}"), *v);
    }
    for (k, &q) in kp.ps.iter().enumerate() {
        let maxes: Vec<f64> = sweeps.iter().map(|(_, s)| s[k].max).collect();
        let mins: Vec<f64> = sweeps.iter().map(|(_, s)| s[k].min).collect();
        let met = stable(&maxes) && (q != 2.0 || stable(&mins));
        let criterion = if q == 2.0 { "max and min ratio within ±50% across resolutions" } else { "max ratio within ±50% across resolutions" };
        let mut t = Table::new(&["n", "upper_ratio", "lower_ratio"]);
        for (rn, (_, s)) in resolutions.iter().zip(&sweeps) {
            for (u, l) in s[k].upper_ratios.iter().zip(&s[k].lower_ratios) {
                t.push(vec![*rn as f64, *u, *l]);
            }
        }
        let r = rec.add(format!("kato.p{}", label(q)), KATO, CheckMode::Gate, criterion, met);
        r.with_table(t).note("family", kp.family.describe());
        for (rn, (route, s)) in resolutions.iter().zip(&sweeps) {
            r.value(format!("max_n{rn}"), s[k].max)
                .value(format!("min_n{rn}"), s[k].min)
                .value(format!("median_n{rn}"), s[k].median)
                .value(format!("lower_max_n{rn}"), s[k].lower_max)
                .note(format!("route_n{rn}"), *route);
        }
    }
    Ok(())
}

pub(super) fn run_sqfn(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let sp = &cfg.sqfn;
    let n = cfg.grid.n;
    let op = ctx.operator(n, false)?;
    let grid = *op.grid();
    let prop = ctx.propagator(n, false)?;
    let root = ctx.root(&prop)?;
    let symmetric = op.is_symmetric();
    let plancherel_mode = if symmetric { CheckMode::Gate } else { CheckMode::Record };
    let f = test_fields(grid, sp.family, 1, cfg.seed ^ 0x5f).remove(0);
    let centered = f.minus_mean();
    let sq = |v: &Field| v.norm2().powi(2);
    let rf = root.sqrt_many(std::slice::from_ref(&f))?.remove(0);

    let gl = square_function(&prop, &f, SquareFnKind::Gl, &TimeGrid::default_for(&grid, SquareFnKind::Gl), Some(&rf))?;
    let d = (sq(&gl) / (sq(&centered) / 4.0) - 1.0).abs();
    rec.add("sqfn.plancherel_gl", PLANCHEREL, plancherel_mode, "|‖S_GL f‖²/(‖f − f̄‖²/4) − 1| ≤ 1e-4", d <= 1e-4).value("deviation", d);
    let g1 = square_function(&prop, &f, SquareFnKind::G1, &TimeGrid::default_for(&grid, SquareFnKind::G1), None)?;
    let d = (sq(&g1) / (sq(&rf) / 4.0) - 1.0).abs();
    rec.add("sqfn.plancherel_g1", PLANCHEREL, plancherel_mode, "|‖S_G1 f‖²/(‖L^{1/2}f‖²/4) − 1| ≤ 1e-4", d <= 1e-4).value("deviation", d);

    let tg = TimeGrid::default_for(&grid, SquareFnKind::Ggrad);
    let e = ggrad_energy(&prop, &f, &tg, op.lambda0())?;
    let d = (e.form_energy / e.exact_form_energy - 1.0).abs();
    rec.add("sqfn.form_energy", PLANCHEREL, CheckMode::Gate, "|∫Re⟨Lu,u⟩dt/(‖f − f̄‖²/2) − 1| ≤ 1e-4", d <= 1e-4).value("deviation", d);
    let ggrad_mode = if cfg.coefficients.kind == CoefficientKind::Identity { CheckMode::Gate } else { CheckMode::Record };
    let d = (e.energy / e.exact_form_energy - 1.0).abs();
    rec.add("sqfn.plancherel_ggrad", PLANCHEREL, ggrad_mode, "|∫‖∇u‖²dt/(‖f − f̄‖²/2) − 1| ≤ 1e-4", d <= 1e-4).value("deviation", d);
    rec.add("sqfn.ggrad_sandwich", GGRAD, CheckMode::Gate, "sandwich holds", e.sandwich_holds)
        .value("energy", e.energy)
        .value("form_energy", e.form_energy)
        .value("lambda0", op.lambda0());
    rec.add("sqfn.ggrad_constant", GGRAD, CheckMode::Record, "finite", e.constant.is_finite()).value("constant", e.constant);

    let mut worst = 0.0f64;
    for t in [0.25, 1.0, 4.0].map(|m| m * grid.spacing()) {
        let a = integrand(&prop, SquareFnKind::G2t, t, &f, None)?;
        let b = g2t_second_route(&prop, t, &f)?;
        let scale = b.max_abs().max(f64::MIN_POSITIVE);
        worst = worst.max(max_of(a.iter().zip(b.values()).map(|(x, y)| (x.norm() - y.norm()).abs() / scale)));
    }
    rec.add("sqfn.g2t_routes", G2T, CheckMode::Gate, "pointwise |·| agree to 1e-8 of the max", worst <= 1e-8).value("max_defect", worst);

    let coarse = TimeGrid::default_for(&grid, SquareFnKind::G1);
    let fine = TimeGrid { ratio: coarse.ratio.sqrt(), t_min: coarse.t_min / 2.0, t_max: coarse.t_max * 2.0 };
    let b = square_function(&prop, &f, SquareFnKind::G1, &fine, None)?;
    let d = rel(&g1, &b)?;
    rec.add("sqfn.refinement", SQFN, CheckMode::Gate, "G1 on a refined time grid moves by < 1e-3", d < 1e-3).value("relative_change", d);

    let resolutions = cfg.resolutions(&sp.resolutions);
    let props = resolutions.iter().map(|&rn| ctx.propagator(rn, false)).collect::<Result<Vec<_>>>()?;
    for sw in &sp.sweeps {
        let ps: Vec<f64> = sw.ps.iter().chain(&sw.recorded_ps).cloned().collect();
        let reports = props
            .iter()
            .map(|p| square_function_ratio_sweep(p, None, &ps, sw.kind, sp.family, sp.count, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        for (k, &q) in ps.iter().enumerate() {
            let default = if k < sw.ps.len() { CheckMode::Gate } else { CheckMode::Record };
            let maxes: Vec<f64> = reports.iter().map(|r| r.per_p[k].max).collect();
            let mut t = Table::new(&["n", "ratio"]);
            for (rn, r) in resolutions.iter().zip(&reports) {
                r.per_p[k].ratios.iter().for_each(|v| t.push(vec![*rn as f64, *v]));
            }
            let name = format!("sqfn.{}.p{}", sw.kind.name().to_lowercase(), label(q));
            let r = rec.add(name, SQFN, default, "max ratio within ±50% across resolutions", stable(&maxes));
            r.with_table(t).note("family", sp.family.describe());
            for (rn, rep) in resolutions.iter().zip(&reports) {
                r.value(format!("max_n{rn}"), rep.per_p[k].max).value(format!("median_n{rn}"), rep.per_p[k].median).value(format!("skipped_n{rn}"), rep.skipped as f64);
            }
        }
    }
    Ok(())
}
