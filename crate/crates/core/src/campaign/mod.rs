//! Verification campaigns: each subcommand runs a fixed list of checks on the operator
//! described by a [`CampaignConfig`] and returns a [`Report`]. Checks are either gates, which
//! decide the exit status, or records, which are only written out.

mod audit;
pub mod config;
mod decay;
mod heat;
pub mod report;
mod roots;

pub use config::{Backend, CampaignConfig, CheckMode};
pub use report::{Environment, Record, Report, Status, Table, SCHEMA_VERSION};

use crate::calculus::{QuadratureSqrt, QuadratureSpec, SchurSqrt, SqrtRoute};
use crate::error::Result;
use crate::lattice::{Field, Grid};
use crate::operator::{assemble, EllipticOperator, LatticeOperator};
use crate::semigroup::{ContourPropagator, DensePropagator, Propagator};
use crate::sparse::CsrMatrix;
use crate::spectral::SpectralCalculus;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Assemble,
    Heat,
    Offdiag,
    Lpq,
    Kato,
    Sqfn,
    All,
}

impl Subcommand {
    pub const SECTIONS: [Subcommand; 6] =
        [Subcommand::Assemble, Subcommand::Heat, Subcommand::Offdiag, Subcommand::Lpq, Subcommand::Kato, Subcommand::Sqfn];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Assemble => "assemble",
            Subcommand::Heat => "heat",
            Subcommand::Offdiag => "offdiag",
            Subcommand::Lpq => "lpq",
            Subcommand::Kato => "kato",
            Subcommand::Sqfn => "sqfn",
            Subcommand::All => "all",
        }
    }
}

/// Runs one subcommand; `All` runs every section on one shared context.
pub fn run(subcommand: Subcommand, config: &CampaignConfig) -> Result<Report> {
    let sections = if subcommand == Subcommand::All { &Subcommand::SECTIONS[..] } else { std::slice::from_ref(&subcommand) };
    let mut report = run_sections(sections, config)?;
    report.subcommand = subcommand.name().into();
    Ok(report)
}

/// Runs the listed sections in order on one shared context, so operators and
/// eigendecompositions are built once. The report is labelled with the first section.
pub fn run_sections(sections: &[Subcommand], config: &CampaignConfig) -> Result<Report> {
    config.validate()?;
    let ctx = Context::new(config);
    let mut rec = Recorder { config, records: Vec::new() };
    for &s in sections {
        match s {
            Subcommand::Assemble => audit::run(&ctx, &mut rec)?,
            Subcommand::Heat => heat::run(&ctx, &mut rec)?,
            Subcommand::Offdiag => decay::run_offdiag(&ctx, &mut rec)?,
            Subcommand::Lpq => decay::run_lpq(&ctx, &mut rec)?,
            Subcommand::Kato => roots::run_kato(&ctx, &mut rec)?,
            Subcommand::Sqfn => roots::run_sqfn(&ctx, &mut rec)?,
            Subcommand::All => return Err(crate::Error::Config("`all` is not a section".into())),
        }
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        subcommand: sections.first().map_or("all", |s| s.name()).into(),
        environment: Environment::of(config),
        config: config.clone(),
        records: rec.records,
    })
}

pub(crate) struct Recorder<'a> {
    config: &'a CampaignConfig,
    records: Vec<Record>,
}

impl Recorder<'_> {
    /// Appends a check; its mode comes from the configured gates, falling back to `default`.
    pub(crate) fn add(&mut self, name: impl Into<String>, anchor: &str, default: CheckMode, criterion: impl Into<String>, met: bool) -> &mut Record {
        let name = name.into();
        let mode = self.config.mode_for(&name, default);
        let status = match (mode, met) {
            (CheckMode::Gate, true) => Status::Pass,
            (CheckMode::Gate, false) => Status::Fail,
            (CheckMode::Record, _) => Status::Recorded,
        };
        self.records.push(Record {
            name,
            anchor: anchor.into(),
            mode,
            status,
            criterion: criterion.into(),
            criterion_met: met,
            values: BTreeMap::new(),
            notes: BTreeMap::new(),
            table: None,
        });
        self.records.last_mut().expect("just pushed")
    }
}

impl Record {
    pub fn value(&mut self, key: impl Into<String>, v: f64) -> &mut Record {
        self.values.insert(key.into(), v);
        self
    }

    pub fn note(&mut self, key: impl Into<String>, v: impl Into<String>) -> &mut Record {
        self.notes.insert(key.into(), v.into());
        self
    }

    pub fn with_table(&mut self, table: Table) -> &mut Record {
        self.table = Some(table);
        self
    }
}

/// Every value within ±50% of the first (coarsest) one.
pub(crate) fn stable(values: &[f64]) -> bool {
    match values.first() {
        Some(&v0) if v0 > 0.0 && v0.is_finite() => values.iter().all(|v| v.is_finite() && (v / v0 - 1.0).abs() <= 0.5),
        _ => false,
    }
}

/// `1.5` → `"1_5"`, so that dots stay reserved for name segments.
pub(crate) fn label(p: f64) -> String {
    format!("{p}").replace('.', "_")
}

/// Propagator picked by the configured backend, owning what it needs.
pub(crate) struct Backed {
    op: Arc<EllipticOperator>,
    route: Route,
}

enum Route {
    Contour(f64),
    Dense(Box<DensePropagator>),
    Spectral(Arc<SpectralCalculus>),
}

impl Backed {
    pub(crate) fn spectral(&self) -> Option<&SpectralCalculus> {
        match &self.route {
            Route::Spectral(s) => Some(s),
            _ => None,
        }
    }
}

impl Propagator for Backed {
    fn grid(&self) -> &Grid {
        self.op.grid()
    }
    fn matrix(&self) -> &CsrMatrix {
        self.op.matrix()
    }
    fn propagate(&self, z: C64, l: usize, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        match &self.route {
            Route::Contour(tol) => ContourPropagator::new(&*self.op)?.with_tolerance(*tol).propagate(z, l, rhs),
            Route::Dense(d) => d.propagate(z, l, rhs),
            Route::Spectral(s) => s.propagate(z, l, rhs),
        }
    }
    fn backend(&self) -> &'static str {
        match &self.route {
            Route::Contour(_) => "contour",
            Route::Dense(d) => d.backend(),
            Route::Spectral(s) => s.backend(),
        }
    }
}

/// Square-root route for ratio sweeps.
pub(crate) enum RootRoute<'a> {
    Spectral(&'a SpectralCalculus),
    Schur(SchurSqrt),
    Quadrature(QuadratureSqrt<'a>),
}

impl SqrtRoute for RootRoute<'_> {
    fn grid(&self) -> &Grid {
        match self {
            RootRoute::Spectral(s) => SqrtRoute::grid(*s),
            RootRoute::Schur(s) => s.grid(),
            RootRoute::Quadrature(q) => q.grid(),
        }
    }
    fn sqrt_many(&self, fs: &[Field]) -> Result<Vec<Field>> {
        match self {
            RootRoute::Spectral(s) => s.sqrt_many(fs),
            RootRoute::Schur(s) => s.sqrt_many(fs),
            RootRoute::Quadrature(q) => q.sqrt_many(fs),
        }
    }
    fn route(&self) -> &'static str {
        match self {
            RootRoute::Spectral(s) => s.route(),
            RootRoute::Schur(s) => s.route(),
            RootRoute::Quadrature(q) => q.route(),
        }
    }
}

/// Operators and eigendecompositions shared by the sections of one run.
pub(crate) struct Context<'a> {
    pub(crate) cfg: &'a CampaignConfig,
    operators: RefCell<BTreeMap<(usize, bool), Arc<EllipticOperator>>>,
    spectra: RefCell<BTreeMap<(usize, bool), Arc<SpectralCalculus>>>,
}

/// Cell count up to which `Backend::Auto` uses the Padé exponential.
const AUTO_DENSE_CELLS: usize = 256;

impl<'a> Context<'a> {
    fn new(cfg: &'a CampaignConfig) -> Context<'a> {
        Context { cfg, operators: RefCell::new(BTreeMap::new()), spectra: RefCell::new(BTreeMap::new()) }
    }

    /// The operator (or its adjoint) on `n` cells per axis, with its sector estimate.
    pub(crate) fn operator(&self, n: usize, adjoint: bool) -> Result<Arc<EllipticOperator>> {
        if let Some(op) = self.operators.borrow().get(&(n, adjoint)) {
            return Ok(op.clone());
        }
        let op = if adjoint {
            Arc::new(self.operator(n, false)?.adjoint())
        } else {
            let a = &self.cfg.assemble;
            Arc::new(assemble(&self.cfg.coefficients(n)?).with_sector_estimate(a.sector_samples, self.cfg.seed)?)
        };
        self.operators.borrow_mut().insert((n, adjoint), op.clone());
        Ok(op)
    }

    pub(crate) fn spectral(&self, n: usize, adjoint: bool) -> Result<Arc<SpectralCalculus>> {
        if let Some(s) = self.spectra.borrow().get(&(n, adjoint)) {
            return Ok(s.clone());
        }
        let s = Arc::new(SpectralCalculus::new(&*self.operator(n, adjoint)?)?);
        self.spectra.borrow_mut().insert((n, adjoint), s.clone());
        Ok(s)
    }

    pub(crate) fn propagator(&self, n: usize, adjoint: bool) -> Result<Backed> {
        let op = self.operator(n, adjoint)?;
        let cells = op.grid().cell_count();
        let route = match self.cfg.backend {
            Backend::Contour => Route::Contour(self.cfg.heat.contour_tolerance),
            Backend::Dense => Route::Dense(Box::new(DensePropagator::new(&*op)?)),
            Backend::Spectral => Route::Spectral(self.spectral(n, adjoint)?),
            Backend::Auto if cells <= AUTO_DENSE_CELLS => Route::Dense(Box::new(DensePropagator::new(&*op)?)),
            Backend::Auto => Route::Spectral(self.spectral(n, adjoint)?),
        };
        Ok(Backed { op, route })
    }

    /// Route for `L^{1/2}` in ratio sweeps, matching the propagator backend.
    pub(crate) fn root<'b>(&self, prop: &'b Backed) -> Result<RootRoute<'b>> {
        if let Some(s) = prop.spectral() {
            return Ok(RootRoute::Spectral(s));
        }
        match prop.route {
            Route::Dense(_) => Ok(RootRoute::Schur(SchurSqrt::new(&*prop.op)?)),
            _ => Ok(RootRoute::Quadrature(QuadratureSqrt { propagator: prop, spec: QuadratureSpec::for_grid(prop.grid()) })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_is_relative_to_the_first_value() {
        assert!(stable(&[1.0, 1.4, 0.6]));
        assert!(!stable(&[1.0, 1.6]));
        assert!(!stable(&[0.0, 0.0]));
        assert!(!stable(&[1.0, f64::NAN]));
        assert!(!stable(&[]));
    }

    #[test]
    fn labels_keep_dots_for_segments() {
        assert_eq!(label(1.5), "1_5");
        assert_eq!(label(2.0), "2");
        assert_eq!(label(2.25), "2_25");
    }

    #[test]
    fn assemble_section_on_the_laplacian() {
        let cfg = CampaignConfig::from_toml_str("seed = 3\n[grid]\ndim = 1\nn = 16\n[coefficients]\nkind = \"identity\"\n").unwrap();
        let report = run(Subcommand::Assemble, &cfg).unwrap();
        assert!(report.gate_failures().is_empty());
        assert!(report.records.iter().all(|r| r.name.starts_with("assemble.")));
        assert_eq!(report.subcommand, "assemble");
    }

    #[test]
    fn context_caches_operators_and_picks_backends() {
        let cfg = CampaignConfig::from_toml_str("seed = 3\n[grid]\ndim = 2\nn = 8\n[coefficients]\nkind = \"bmo_log\"\nkappa = 0.5\n").unwrap();
        let ctx = Context::new(&cfg);
        let a = ctx.operator(8, false).unwrap();
        assert!(Arc::ptr_eq(&a, &ctx.operator(8, false).unwrap()));
        assert!(ctx.operator(8, true).unwrap().theta0_estimate().is_some());
        assert_eq!(ctx.propagator(8, false).unwrap().backend(), DensePropagator::new(&*a).unwrap().backend());
        let p = ctx.propagator(32, false).unwrap();
        assert!(p.spectral().is_some());
        assert_eq!(ctx.root(&p).unwrap().route(), "spectral");
        assert_eq!(ctx.root(&ctx.propagator(8, false).unwrap()).unwrap().route(), "schur");
    }
}
