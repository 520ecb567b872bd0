//! `assemble`: the operator, its sector estimate and the exact structural identities.

use super::{CheckMode, Context, Recorder, Table};
use crate::error::Result;
use crate::lattice::{divergence, gradient, Field, VectorField};
use crate::operator::{assemble_antisymmetric_part, ConjugationWeight, LatticeOperator};
use crate::resolvent::{default_power, sector_sweep, ShiftedSolver};
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

const KERNEL: &str = "M·1 = 0 and 1ᵀM = 0 (constants in the kernel, footing of e^{−tL}1 = 1)";
const ACCRETIVE: &str = "Re⟨Lu,u⟩ ≥ λ₀‖∇u‖² from λ₀|ξ|² ≤ a^s_{ij}ξ_iξ_j";
const NEUTRAL: &str = "Re⟨A^a∇u,∇u⟩ = 0 for antisymmetric A^a";
const DUALITY: &str = "⟨∇f, v⟩ = −⟨f, div v⟩";
const ADJOINT: &str = "⟨Lu, v⟩ = ⟨u, L*v⟩ with L* built from Aᵀ";
const SECTOR: &str = "|arg⟨Lu,u⟩| ≤ θ₀ < π/2";
const CONJUGATION: &str = "G_Ψ(x,y) = e^{−Ψ(x)}G(x,y)e^{Ψ(y)} for L_Ψ = e^{−Ψ}Le^{Ψ}";
const RESOLVENT: &str = "(λ+L)^{−1} − (ν+L)^{−1} = (ν−λ)(λ+L)^{−1}(ν+L)^{−1}";
const RESOLVENT_ADJOINT: &str = "((λ+L)^{−1})* = (λ̄+L*)^{−1}";
const RESOLVENT_BOUND: &str = "‖(λ+L)^{−1}‖ ≤ C/|λ| and ‖∇(λ+L)^{−1}‖ ≤ C/|λ|^{1/2} on the sector";

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).collect()
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// `(λ+M)^{−2m}` applied to every unit vector scaled by `1/h^dim`.
fn power_kernel(m: &CsrMatrix, op: &dyn LatticeOperator, lambda: C64, power: usize) -> Result<Vec<Vec<C64>>> {
    let grid = *op.grid();
    let n = grid.cell_count();
    let solver = ShiftedSolver::new(m, &grid, lambda)?;
    Ok((0..n)
        .map(|j| {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[j] = C64::new(1.0 / grid.cell_volume(), 0.0);
            for _ in 0..2 * power {
                v = solver.solve(&v);
            }
            v
        })
        .collect())
}

pub(super) fn run(ctx: &Context, rec: &mut Recorder) -> Result<()> {
    let cfg = ctx.cfg;
    let a = &cfg.assemble;
    let op = ctx.operator(cfg.grid.n, false)?;
    let adj = ctx.operator(cfg.grid.n, true)?;
    let grid = *op.grid();
    let cells = grid.cell_count();
    let m = op.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<Field> = (0..a.audit_samples)
        .map(|_| {
            let v = random_vec(&mut rng, cells);
            let s = norm(&v);
            Field::from_values(grid, v.into_iter().map(|x| x / s).collect())
        })
        .collect::<Result<_>>()?;

    let one = vec![C64::new(1.0, 0.0); cells];
    let scale = m.max_abs_row_sum().max(f64::MIN_POSITIVE);
    let rows = m.mul_vec(&one).iter().map(|x| x.norm()).fold(0.0, f64::max) / scale;
    let cols = m.transpose().mul_vec(&one).iter().map(|x| x.norm()).fold(0.0, f64::max) / scale;
    rec.add("assemble.kernel", KERNEL, CheckMode::Gate, "max(|M1|, |Mᵀ1|)/‖M‖_∞ ≤ 1e-12", rows.max(cols) <= 1e-12)
        .value("row_sums", rows)
        .value("column_sums", cols)
        .value("nnz", m.nnz() as f64);

    let lambda0 = op.lambda0();
    let mut worst = f64::INFINITY;
    for u in &samples {
        let g = gradient(u).norm2().powi(2);
        if g > 0.0 {
            worst = worst.min(op.form_apply(u, u)?.re / g);
        }
    }
    rec.add("assemble.accretivity", ACCRETIVE, CheckMode::Gate, "min Re⟨Mu,u⟩/‖∇u‖² ≥ λ₀ − 1e-10", worst >= lambda0 - 1e-10)
        .value("min_ratio", worst)
        .value("lambda0", lambda0)
        .value("samples", samples.len() as f64);

    let ma = assemble_antisymmetric_part(op.coefficients());
    let mut neutral = 0.0f64;
    for u in &samples {
        let mu = ma.mul_vec(u.values());
        let d = norm(&mu) * norm(u.values());
        if d > 0.0 {
            neutral = neutral.max(dot(&mu, u.values()).re.abs() / d);
        }
    }
    rec.add("assemble.antisymmetric_neutrality", NEUTRAL, CheckMode::Gate, "|Re⟨M_a u,u⟩|/(‖M_a u‖‖u‖) ≤ 1e-12", neutral <= 1e-12)
        .value("max_relative", neutral)
        .value("antisymmetric_max_entry", ma.max_abs());

    let mut sbp = 0.0f64;
    let mut adjoint = 0.0f64;
    for pair in samples.chunks(2).filter(|c| c.len() == 2) {
        let (f, u) = (&pair[0], &pair[1]);
        let comps: Vec<Field> = (0..grid.dim())
            .map(|_| Field::from_values(grid, random_vec(&mut rng, cells)))
            .collect::<Result<_>>()?;
        let v = VectorField::new(comps)?;
        let lhs = gradient(f).inner(&v)? + f.inner(&divergence(&v)?)?;
        sbp = sbp.max(lhs.norm() / (f.norm2() * v.norm2()));
        let x = op.form_apply(f, u)?;
        let w = f.inner(&adj.apply(u)?)?;
        adjoint = adjoint.max((x - w).norm() / (op.apply(f)?.norm2() * u.norm2()));
    }
    rec.add("assemble.summation_by_parts", DUALITY, CheckMode::Gate, "|⟨∇f,v⟩ + ⟨f,div v⟩| ≤ 1e-12‖f‖‖v‖", sbp <= 1e-12)
        .value("max_relative", sbp);
    rec.add("assemble.adjoint", ADJOINT, CheckMode::Gate, "|⟨Mu,v⟩ − ⟨u,M*v⟩| ≤ 1e-12‖Mu‖‖v‖", adjoint <= 1e-12)
        .value("max_relative", adjoint);

    let theta0 = op.theta0_estimate().unwrap_or(f64::NAN);
    let symmetric = op.is_symmetric();
    let (criterion, met) = if symmetric { ("θ₀ ≤ 1e-8 (symmetric A)", theta0 <= 1e-8) } else { ("θ₀ < π/2", theta0 < PI / 2.0) };
    rec.add("assemble.theta0", SECTOR, CheckMode::Gate, criterion, met)
        .value("theta0", theta0)
        .value("lambda0", lambda0)
        .value("bmo_bound", op.bmo_bound())
        .value("sector_samples", a.sector_samples as f64);

    let lambdas: Vec<C64> = a.resolvent_points.iter().map(|p| C64::new(p[0], p[1])).collect();
    let lambda = lambdas[0];
    let nu = lambdas.get(1).copied().unwrap_or(2.0 * lambda);
    let r_l = ShiftedSolver::new(m, &grid, lambda)?;
    let r_n = ShiftedSolver::new(m, &grid, nu)?;
    let r_adj = ShiftedSolver::new(adj.matrix(), &grid, lambda.conj())?;
    let (mut ident, mut radj) = (0.0f64, 0.0f64);
    for pair in samples.chunks(2).filter(|c| c.len() == 2) {
        let (u, v) = (pair[0].values(), pair[1].values());
        let a1 = r_l.solve(u);
        let a2 = r_n.solve(u);
        let both = r_l.solve(&a2);
        let diff: Vec<C64> = a1.iter().zip(&a2).zip(&both).map(|((x, y), z)| x - y - (nu - lambda) * z).collect();
        ident = ident.max(norm(&diff) / (norm(&a1) + norm(&a2)));
        let lhs = dot(&a1, v);
        let rhs = dot(u, &r_adj.solve(v));
        radj = radj.max((lhs - rhs).norm() / (norm(&a1) * norm(v)));
    }
    rec.add("assemble.resolvent_identity", RESOLVENT, CheckMode::Gate, "relative defect ≤ 1e-8", ident <= 1e-8)
        .value("max_relative", ident)
        .note("lambda", format!("{lambda}"))
        .note("nu", format!("{nu}"));
    rec.add("assemble.resolvent_adjoint", RESOLVENT_ADJOINT, CheckMode::Gate, "|⟨R_λu,v⟩ − ⟨u,R*_λ̄v⟩| ≤ 1e-8‖R_λu‖‖v‖", radj <= 1e-8)
        .value("max_relative", radj);

    if cells <= a.dense_limit {
        let side = grid.side_length();
        let psi = Field::from_real_fn(grid, |x| 0.3 * (2.0 * PI * x[0] / side).sin() + 0.2 * (2.0 * PI * x[1] / side).cos());
        let w = ConjugationWeight::new(&psi)?;
        let conj = op.conjugate(&w)?;
        let power = default_power(grid.dim());
        let g = power_kernel(m, &*op, lambda, power)?;
        let gc = power_kernel(conj.matrix(), &conj, lambda, power)?;
        let p = w.psi();
        let top = g.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
        let mut defect = 0.0f64;
        for (y, (col, colc)) in g.iter().zip(&gc).enumerate() {
            for (x, (v, vc)) in col.iter().zip(colc).enumerate() {
                defect = defect.max((vc - v * (p[y] - p[x]).exp()).norm());
            }
        }
        defect /= top;
        rec.add("assemble.conjugation", CONJUGATION, CheckMode::Gate, "max entrywise defect ≤ 1e-10·max|G|", defect <= 1e-10)
            .value("max_relative", defect)
            .value("lip_bound", w.lip_bound())
            .value("power_m", power as f64);

        if !a.sweep_radii.is_empty() {
            let theta1 = theta0 + 0.5 * (PI / 2.0 - theta0);
            let edge = PI - theta1;
            let sweep = sector_sweep(&*op, theta1, &a.sweep_radii, &[-edge, -0.5 * edge, 0.0, 0.5 * edge, edge])?;
            let mut t = Table::new(&["re_lambda", "im_lambda", "resolvent_norm", "grad_resolvent_norm"]);
            for s in &sweep.samples {
                t.push(vec![s.lambda.re, s.lambda.im, s.resolvent_norm, s.grad_resolvent_norm]);
            }
            let finite = sweep.sup_scaled_norm.is_finite() && sweep.sup_scaled_grad_norm.is_finite();
            rec.add("assemble.resolvent_sector", RESOLVENT_BOUND, CheckMode::Record, "both scaled suprema finite", finite)
                .value("sup_scaled_norm", sweep.sup_scaled_norm)
                .value("sup_scaled_grad_norm", sweep.sup_scaled_grad_norm)
                .value("theta1", theta1)
                .note("exact_norms", sweep.exact_norms.to_string())
                .with_table(t);
        }
    } else {
        rec.add("assemble.conjugation", CONJUGATION, CheckMode::Record, "skipped above assemble.dense_limit", true)
            .value("cells", cells as f64)
            .note("skipped", format!("N^dim = {cells} > {}", a.dense_limit));
    }
    Ok(())
}
