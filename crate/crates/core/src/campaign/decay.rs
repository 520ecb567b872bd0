//! `offdiag` and `lpq`: off-diagonal fits for the three families and `L^p → L^q` sweeps
//! across resolutions.

use super::{label, stable, CheckMode, Context, Recorder, Table};
use crate::bounds::{epsilon1_estimate, gamma_pq, offdiag_fit, pq_bound_sweep, separated_boxes, Families, FamilyTag, OffDiagReport, FINITE_DIMENSION_CAVEAT};
use crate::error::Result;
use crate::operator::LatticeOperator;
use crate::semigroup::Propagator;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const OFFDIAG: &str = "‖χ_F T_z χ_E‖_{2→2} ≤ Ce^{−αd(E,F)²/|z|} for e^{−zL}, zLe^{−zL}, √z∇e^{−zL}";
const OFFDIAG_ADJOINT: &str = "the same off-diagonal bounds for L*, with E and F exchanged";
const SEMIGROUP_LP: &str = "‖e^{−tL}‖_{p→2} ≤ Ct^{−γ_{p2}/2}, 1 ≤ p < 2";
const TLT_LP: &str = "‖t∂_te^{−tL}‖_{p→2} ≤ Ct^{−γ_{p2}/2}, 1 ≤ p < 2";
const GRAD_LP: &str = "‖√t∇e^{−tL}‖_{2→p} ≤ Ct^{−γ_{2p}/2}, 2 ≤ p ≤ 2+ε₁";
const CONTRACTION: &str = "‖e^{−tL}‖_{2→2} ≤ 1";
const EPSILON: &str = "√t∇e^{−tL} is L²−L^p bounded for 2 ≤ p ≤ 2+ε₁";

fn family_key(f: FamilyTag) -> String {
    f.name().to_lowercase()
}

fn fit_table(r: &OffDiagReport) -> Table {
    let mut t = Table::new(&["z_re", "z_im", "distance", "norm"]);
    for s in &r.samples {
        t.push(vec![s.z_re, s.z_im, s.distance, s.norm]);
    }
    t
}

fn push_fit(rec: &mut Recorder, name: String, anchor: &str, mode: CheckMode, fit: &Result<OffDiagReport>) -> Option<f64> {
    let criterion = "α > 0 and r² ≥ 0.85";
    match fit {
        Ok(r) => {
            rec.add(name, anchor, mode, criterion, r.alpha > 0.0 && r.r_squared >= 0.85)
                .value("c", r.c)
                .value("alpha", r.alpha)
                .value("r_squared", r.r_squared)
                .value("angle", r.angle)
                .value("fitted_samples", r.fitted_samples as f64)
                .with_table(fit_table(r));
            Some(r.alpha)
        }
        Err(e) => {
            rec.add(name, anchor, mode, criterion, false).note("error", e.to_string());
            None
        }
    }
}

pub(super) fn run_offdiag(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let od = &cfg.offdiag;
    let n = od.n.unwrap_or(cfg.grid.n);
    let op = ctx.operator(n, false)?;
    let grid = *op.grid();
    let primal = ctx.propagator(n, false)?;
    let adjoint = if od.adjoint { Some(ctx.propagator(n, true)?) } else { None };
    let mut fam = Families::new(&primal);
    if let Some(a) = &adjoint {
        fam = fam.with_adjoint(a)?;
    }
    let side = od.box_side.unwrap_or((n / 8).max(1));
    let gaps: Vec<usize> = if od.gaps.is_empty() {
        (1..=(3 * n) / 10).filter(|g| 2 * side + g <= n).collect()
    } else {
        od.gaps.clone()
    };
    let pairs = separated_boxes(&grid, side, &gaps)?;
    let swapped: Vec<_> = pairs.iter().map(|(e, f)| (*f, *e)).collect();
    let h2 = grid.spacing().powi(2);
    let ts: Vec<f64> = od.time_multipliers.iter().map(|m| m * h2).collect();
    let theta0 = op.theta0_estimate().unwrap_or(0.0);
    let mu = 0.5 * (PI / 2.0 - theta0);
    let ray = |phi: f64| -> Vec<C64> { ts.iter().map(|&t| C64::from_polar(t, phi)).collect() };
    let real = ray(0.0);
    for family in FamilyTag::PRIMAL {
        let key = family_key(family);
        let a_real = push_fit(rec, format!("offdiag.{key}.real"), OFFDIAG, CheckMode::Gate, &offdiag_fit(&fam, family, &real, &pairs));
        if let Some(r) = rec.records.last_mut() {
            r.value("n", n as f64).value("box_side", side as f64).note("backend", primal.backend());
        }
        let a_pos = push_fit(rec, format!("offdiag.{key}.ray_pos"), OFFDIAG, CheckMode::Gate, &offdiag_fit(&fam, family, &ray(mu), &pairs));
        push_fit(rec, format!("offdiag.{key}.ray_neg"), OFFDIAG, CheckMode::Gate, &offdiag_fit(&fam, family, &ray(-mu), &pairs));
        if let (Some(r), Some(p)) = (a_real, a_pos) {
            rec.add(format!("offdiag.{key}.angle_trend"), OFFDIAG, CheckMode::Record, "α on arg z = μ ≤ α on real t", p <= r)
                .value("alpha_real", r)
                .value("alpha_ray", p)
                .value("mu", mu)
                .value("theta0", theta0);
        }
        if adjoint.is_some() {
            let dual = family.dual();
            let a_adj = push_fit(rec, format!("offdiag.{}.real", family_key(dual)), OFFDIAG_ADJOINT, CheckMode::Record, &offdiag_fit(&fam, dual, &real, &swapped));
            if let (Some(r), Some(d)) = (a_real, a_adj) {
                rec.add(format!("offdiag.{key}.adjoint_symmetry"), OFFDIAG_ADJOINT, CheckMode::Record, "|α*/α − 1| ≤ 0.05", (d / r - 1.0).abs() <= 0.05)
                    .value("alpha", r)
                    .value("alpha_adjoint", d);
            }
        }
    }
    Ok(())
}

fn pair_anchor(f: FamilyTag) -> &'static str {
    match f {
        FamilyTag::Semigroup | FamilyTag::AdjointSemigroup => SEMIGROUP_LP,
        FamilyTag::TLt | FamilyTag::AdjointTLt => TLT_LP,
        FamilyTag::SqrtTGrad | FamilyTag::AdjointSqrtTGrad => GRAD_LP,
    }
}

pub(super) fn run_lpq(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let lp = &cfg.lpq;
    let resolutions = cfg.resolutions(&lp.resolutions);
    let props = resolutions.iter().map(|&n| ctx.propagator(n, false)).collect::<Result<Vec<_>>>()?;
    let fams: Vec<Families> = props.iter().map(|p| Families::new(p)).collect();
    let dim = cfg.grid.dim;
    for (k, pair) in lp.pairs.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        let sweeps = fams.iter().map(|f| pq_bound_sweep(f, pair.family, pair.p, pair.q, &lp.t_grid, seed)).collect::<Result<Vec<_>>>()?;
        let sups: Vec<f64> = sweeps.iter().map(|s| s.sup_scaled).collect();
        let mut t = Table::new(&["n", "t", "norm", "scaled", "exact", "upper_bound"]);
        for (n, s) in resolutions.iter().zip(&sweeps) {
            for x in &s.samples {
                t.push(vec![*n as f64, x.t, x.norm, x.scaled, if x.exact { 1.0 } else { 0.0 }, x.upper_bound]);
            }
        }
        let name = format!("lpq.{}.p{}_q{}", family_key(pair.family), label(pair.p), label(pair.q));
        let r = rec.add(name, pair_anchor(pair.family), CheckMode::Gate, "sup_t t^{γ/2}‖T_t‖_{p→q} within ±50% of the coarsest grid", stable(&sups));
        r.value("gamma", gamma_pq(dim, pair.p, pair.q)).note("header", FINITE_DIMENSION_CAVEAT).with_table(t);
        for (n, s) in resolutions.iter().zip(&sweeps) {
            r.value(format!("sup_scaled_n{n}"), s.sup_scaled).value(format!("scaled_slope_n{n}"), s.scaled_slope).value(format!("norm_slope_n{n}"), s.norm_slope);
        }
        if pair.family == FamilyTag::Semigroup && pair.p == 1.0 && pair.q == 2.0 {
            let finest = sweeps.last().expect("at least one resolution");
            let target = -finest.gamma / 2.0;
            rec.add("lpq.semigroup_slope", SEMIGROUP_LP, CheckMode::Gate, "log-log slope of ‖e^{−tL}‖_{1→2} within ±0.15 of −γ/2", (finest.norm_slope - target).abs() <= 0.15)
                .value("slope", finest.norm_slope)
                .value("target", target)
                .value("n", *resolutions.last().expect("nonempty") as f64)
                .value("t_min", lp.t_grid.iter().cloned().fold(f64::INFINITY, f64::min))
                .value("t_max", lp.t_grid.iter().cloned().fold(0.0, f64::max));
        }
    }
    let base = &fams[0];
    let contraction = pq_bound_sweep(base, FamilyTag::Semigroup, 2.0, 2.0, &lp.t_grid, cfg.seed)?;
    rec.add("lpq.contraction", CONTRACTION, CheckMode::Gate, "sup_t ‖e^{−tL}‖_{2→2} ≤ 1 + 1e-6", contraction.sup_scaled <= 1.0 + 1e-6)
        .value("sup", contraction.sup_scaled);
    let eps = epsilon1_estimate(base, &lp.epsilon_p_grid, &lp.t_grid, lp.epsilon_threshold, cfg.seed)?;
    let mut t = Table::new(&["p", "sup_scaled"]);
    eps.curve.iter().for_each(|(p, v)| t.push(vec![*p, *v]));
    let r = rec.add("lpq.epsilon1", EPSILON, CheckMode::Record, "p = 2 entry finite", eps.curve[0].1.is_finite());
    r.value("epsilon1", eps.epsilon1).value("threshold", eps.threshold).note("header", eps.header.clone()).with_table(t);
    for (th, e) in &eps.sensitivity {
        r.value(format!("epsilon1_at_{}", label(*th)), *e);
    }
    Ok(())
}
