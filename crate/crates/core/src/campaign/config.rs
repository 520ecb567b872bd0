//! Campaign configuration, read from TOML and validated before anything is computed.

use crate::bounds::FamilyTag;
use crate::calculus::TestFamily;
use crate::error::{Error, Result};
use crate::lattice::{make_coefficients, CoefficientField, CoefficientKind, CoefficientParams, Grid};
use crate::linalg::DENSE_CAP;
use crate::squarefn::SquareFnKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Whether a failing check fails the run or is only written to the report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Gate,
    Record,
}

/// Propagator used for dense sweeps (kernels, families, square functions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Padé exponential up to 256 cells, eigendecomposition above.
    #[default]
    Auto,
    Contour,
    Dense,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub side_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub kind: CoefficientKind,
    #[serde(default = "one")]
    pub lambda0: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub bmo_bound: Option<f64>,
}

impl CoefficientSpec {
    pub fn params(&self) -> CoefficientParams {
        CoefficientParams { lambda0: self.lambda0, kappa: self.kappa, center: self.center, bmo_bound: self.bmo_bound }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssembleParams {
    pub sector_samples: usize,
    pub audit_samples: usize,
    /// Resolvent points `λ` (as `[re, im]`) for the resolvent and adjoint identities.
    pub resolvent_points: Vec<[f64; 2]>,
    /// Radii of the resolvent sector sweep; empty skips it.
    pub sweep_radii: Vec<f64>,
    /// Largest cell count for the dense conjugation and sector checks.
    pub dense_limit: usize,
}

impl Default for AssembleParams {
    fn default() -> Self {
        AssembleParams {
            sector_samples: 16,
            audit_samples: 32,
            resolvent_points: vec![[1.0, 0.0], [4.0, 2.0]],
            sweep_radii: vec![0.1, 1.0, 10.0, 100.0],
            dense_limit: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatParams {
    /// Times for the contour against Padé comparison.
    pub oracle_times: Vec<f64>,
    /// Heat-kernel times as multiples of `h²` on the kernel grid.
    pub kernel_time_multipliers: Vec<f64>,
    /// Cells per axis for the kernel fits; the campaign grid when absent.
    pub kernel_n: Option<usize>,
    pub conservation_times: Vec<f64>,
    pub contour_tolerance: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        HeatParams {
            oracle_times: vec![0.01, 0.1, 1.0],
            kernel_time_multipliers: vec![2.0, 4.0, 8.0, 16.0],
            kernel_n: None,
            conservation_times: vec![0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0],
            contour_tolerance: crate::semigroup::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OffDiagParams {
    pub n: Option<usize>,
    /// Box side in cells; `N/8` when absent.
    pub box_side: Option<usize>,
    /// Index gaps along the first axis; `1..=⌊0.3N⌋` when empty.
    pub gaps: Vec<usize>,
    pub time_multipliers: Vec<f64>,
    /// Also fit the adjoint families (recorded only).
    pub adjoint: bool,
}

impl Default for OffDiagParams {
    fn default() -> Self {
        OffDiagParams { n: None, box_side: None, gaps: Vec::new(), time_multipliers: vec![2.0, 4.0, 8.0], adjoint: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PqPair {
    pub family: FamilyTag,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpqParams {
    /// Cells per axis compared for stability; `[N, 2N]` when empty.
    pub resolutions: Vec<usize>,
    pub pairs: Vec<PqPair>,
    pub t_grid: Vec<f64>,
    pub epsilon_p_grid: Vec<f64>,
    pub epsilon_threshold: f64,
}

impl Default for LpqParams {
    fn default() -> Self {
        let pair = |family, p, q| PqPair { family, p, q };
        LpqParams {
            resolutions: Vec::new(),
            pairs: vec![
                pair(FamilyTag::Semigroup, 1.0, 2.0),
                pair(FamilyTag::Semigroup, 1.5, 2.0),
                pair(FamilyTag::TLt, 1.0, 2.0),
                pair(FamilyTag::TLt, 1.5, 2.0),
                pair(FamilyTag::SqrtTGrad, 2.0, 2.0),
                pair(FamilyTag::SqrtTGrad, 2.0, 2.5),
            ],
            t_grid: (0..=4).map(|k| 1e-3 * 10f64.powf(k as f64 / 4.0)).collect(),
            epsilon_p_grid: vec![2.0, 2.25, 2.5, 3.0, 4.0],
            epsilon_threshold: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KatoParams {
    pub resolutions: Vec<usize>,
    pub ps: Vec<f64>,
    pub family: TestFamily,
    pub count: usize,
    /// Fields for the quadrature against Schur comparison on the campaign grid.
    pub oracle_count: usize,
}

impl Default for KatoParams {
    fn default() -> Self {
        KatoParams {
            resolutions: Vec::new(),
            ps: vec![1.5, 2.0, 3.0, 4.0],
            family: TestFamily::Mixed { max_frequency: 3, count: 3 },
            count: 8,
            oracle_count: 20,
        }
    }
}

/// A kind with its gated exponents and the exponents recorded only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqfnSweep {
    pub kind: SquareFnKind,
    pub ps: Vec<f64>,
    #[serde(default)]
    pub recorded_ps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqfnParams {
    pub resolutions: Vec<usize>,
    pub sweeps: Vec<SqfnSweep>,
    pub family: TestFamily,
    pub count: usize,
}

impl Default for SqfnParams {
    fn default() -> Self {
        SqfnParams {
            resolutions: Vec::new(),
            sweeps: vec![
                SqfnSweep { kind: SquareFnKind::G1, ps: vec![1.5, 2.0, 3.0], recorded_ps: Vec::new() },
                SqfnSweep { kind: SquareFnKind::G2x, ps: vec![1.5, 2.0], recorded_ps: vec![3.0] },
                SqfnSweep { kind: SquareFnKind::G2t, ps: vec![1.5, 2.0, 3.0], recorded_ps: Vec::new() },
            ],
            family: TestFamily::BandLimited { max_frequency: 3 },
            count: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub assemble: AssembleParams,
    #[serde(default)]
    pub heat: HeatParams,
    #[serde(default)]
    pub offdiag: OffDiagParams,
    #[serde(default)]
    pub lpq: LpqParams,
    #[serde(default)]
    pub kato: KatoParams,
    #[serde(default)]
    pub sqfn: SqfnParams,
    /// Mode overrides keyed by check name or by a dotted prefix of it (`"offdiag"`,
    /// `"kato.p4"`); the longest matching key wins.
    #[serde(default)]
    pub gates: BTreeMap<String, CheckMode>,
}

fn one() -> f64 {
    1.0
}

const SECTIONS: [&str; 6] = ["assemble", "heat", "offdiag", "lpq", "kato", "sqfn"];

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<CampaignConfig> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<CampaignConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        CampaignConfig::from_toml_str(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid_with(self.grid.n)
    }

    /// The campaign grid with another cell count per axis.
    pub fn grid_with(&self, n: usize) -> Result<Grid> {
        Grid::new(self.grid.dim, n, self.grid.side_length)
    }

    pub fn coefficients(&self, n: usize) -> Result<CoefficientField> {
        make_coefficients(self.coefficients.kind, &self.coefficients.params(), self.grid_with(n)?)
    }

    /// Resolutions of a stability sweep: the configured list, or `[N, 2N]`.
    pub fn resolutions(&self, configured: &[usize]) -> Vec<usize> {
        if configured.is_empty() {
            vec![self.grid.n, 2 * self.grid.n]
        } else {
            configured.to_vec()
        }
    }

    pub fn mode_for(&self, check: &str, default: CheckMode) -> CheckMode {
        self.gates
            .iter()
            .filter(|(k, _)| check == k.as_str() || check.strip_prefix(k.as_str()).is_some_and(|rest| rest.starts_with('.')))
            .max_by_key(|(k, _)| k.len())
            .map_or(default, |(_, m)| *m)
    }

    /// Every check against every configured resolution; nothing is computed.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.grid().map_err(as_config)?;
        for n in self.all_resolutions() {
            let grid = self.grid_with(n).map_err(as_config)?;
            if grid.cell_count() > DENSE_CAP {
                return bad(format!("N = {n} gives {} cells, above the dense cap {DENSE_CAP}", grid.cell_count()));
            }
            self.coefficients(n).map_err(as_config)?;
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Config(format!("{name} must be a nonempty list of positive numbers")));
            }
            Ok(())
        };
        let a = &self.assemble;
        if a.sector_samples == 0 || a.audit_samples == 0 {
            return bad("assemble.sector_samples and audit_samples must be positive".into());
        }
        if a.resolvent_points.is_empty() || a.resolvent_points.iter().any(|p| !(p[0] > 0.0)) {
            return bad("assemble.resolvent_points need positive real parts".into());
        }
        if a.sweep_radii.iter().any(|r| !(*r > 0.0)) {
            return bad("assemble.sweep_radii must be positive".into());
        }
        let h = &self.heat;
        positive("heat.oracle_times", &h.oracle_times)?;
        positive("heat.kernel_time_multipliers", &h.kernel_time_multipliers)?;
        if h.kernel_time_multipliers.len() < 3 {
            return bad("heat.kernel_time_multipliers needs at least three times".into());
        }
        if h.conservation_times.is_empty() || h.conservation_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("heat.conservation_times must be nonnegative".into());
        }
        if !(h.contour_tolerance > 0.0 && h.contour_tolerance < 1e-2) {
            return bad(format!("heat.contour_tolerance = {} outside (0, 1e-2)", h.contour_tolerance));
        }
        let o = &self.offdiag;
        positive("offdiag.time_multipliers", &o.time_multipliers)?;
        let on = o.n.unwrap_or(self.grid.n);
        let side = o.box_side.unwrap_or((on / 8).max(1));
        if side == 0 || side >= on {
            return bad(format!("offdiag.box_side = {side} does not fit N = {on}"));
        }
        if o.gaps.iter().any(|&g| 2 * side + g > on) {
            return bad("offdiag.gaps must leave both boxes inside one period".into());
        }
        let l = &self.lpq;
        positive("lpq.t_grid", &l.t_grid)?;
        if l.t_grid.len() < 2 {
            return bad("lpq.t_grid needs at least two times".into());
        }
        for pair in &l.pairs {
            if pair.family.is_adjoint() || !(pair.p >= 1.0 && pair.q >= pair.p) {
                return bad(format!("lpq pair {pair:?} needs a primal family and 1 ≤ p ≤ q"));
            }
        }
        if l.epsilon_p_grid.first() != Some(&2.0) || l.epsilon_p_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("lpq.epsilon_p_grid must start at 2 and increase".into());
        }
        if !(l.epsilon_threshold > 1.0) {
            return bad("lpq.epsilon_threshold must exceed 1".into());
        }
        let k = &self.kato;
        if k.ps.is_empty() || k.ps.iter().any(|p| !(*p > 1.0 && p.is_finite())) || k.count == 0 || k.oracle_count == 0 {
            return bad("kato needs exponents in (1, ∞) and positive counts".into());
        }
        let s = &self.sqfn;
        if s.count == 0 || s.sweeps.iter().any(|w| w.ps.iter().chain(&w.recorded_ps).any(|p| !(*p >= 1.0))) {
            return bad("sqfn needs a positive count and exponents ≥ 1".into());
        }
        if s.sweeps.iter().any(|w| w.kind == SquareFnKind::Gl) {
            return bad("sqfn ratio sweeps cover G1, G2X, G2T and GGRAD; GL is checked by its identity".into());
        }
        for key in self.gates.keys() {
            let head = key.split('.').next().unwrap_or("");
            if !SECTIONS.contains(&head) {
                return bad(format!("gate key {key:?} does not name a campaign section"));
            }
        }
        Ok(())
    }

    fn all_resolutions(&self) -> Vec<usize> {
        let mut out = vec![self.grid.n];
        out.extend(self.heat.kernel_n);
        out.extend(self.offdiag.n);
        out.extend(self.resolutions(&self.lpq.resolutions));
        out.extend(self.resolutions(&self.kato.resolutions));
        out.extend(self.resolutions(&self.sqfn.resolutions));
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "seed = 4\n[grid]\ndim = 2\nn = 16\n[coefficients]\nkind = \"bmo_log\"\nkappa = 0.5\n";

    fn with(extra: &str) -> Result<CampaignConfig> {
        CampaignConfig::from_toml_str(&format!("{BASE}{extra}"))
    }

    #[test]
    fn defaults_fill_every_section() {
        let c = with("").unwrap();
        assert_eq!(c.backend, Backend::Auto);
        assert_eq!(c.resolutions(&[]), vec![16, 32]);
        assert_eq!(c.resolutions(&[8]), vec![8]);
        assert_eq!(c.heat.kernel_time_multipliers, vec![2.0, 4.0, 8.0, 16.0]);
        assert_eq!(c.lpq.t_grid.len(), 5);
        assert!((c.lpq.t_grid[4] / c.lpq.t_grid[0] - 10.0).abs() < 1e-12);
        assert_eq!(c.coefficients(16).unwrap().grid().points_per_axis(), 16);
    }

    #[test]
    fn rejects_invalid_sections() {
        for extra in [
            "[heat]\ncontour_tolerance = 0.5\n",
            "[heat]\nkernel_time_multipliers = [1.0, 2.0]\n",
            "[offdiag]\nbox_side = 16\n",
            "[offdiag]\nbox_side = 4\ngaps = [9]\n",
            "[lpq]\nepsilon_p_grid = [2.5, 3.0]\n",
            "[[lpq.pairs]]\nfamily = \"ADJOINT_SEMIGROUP\"\np = 1.0\nq = 2.0\n",
            "[[lpq.pairs]]\nfamily = \"SEMIGROUP\"\np = 2.0\nq = 1.0\n",
            "[kato]\nps = [1.0]\n",
            "[[sqfn.sweeps]]\nkind = \"GL\"\nps = [2.0]\n",
            "[kato]\nresolutions = [128]\n",
            "[gates]\n\"nonsense.x\" = \"gate\"\n",
            "[assemble]\nresolvent_points = [[-1.0, 0.0]]\n",
        ] {
            let e = with(extra).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{extra}: {e}");
        }
        assert!(CampaignConfig::from_toml_str("[grid]\ndim = 1\nn = 8\n[coefficients]\nkind = \"identity\"\n").is_err());
    }

    #[test]
    fn test_family_and_kind_spellings() {
        let c = with("[kato]\nfamily = { kind = \"bumps\", count = 2, min_width = 0.05, max_width = 0.1 }\n[[sqfn.sweeps]]\nkind = \"G2X\"\nps = [2.0]\n").unwrap();
        assert_eq!(c.kato.family, TestFamily::Bumps { count: 2, min_width: 0.05, max_width: 0.1 });
        assert_eq!(c.sqfn.sweeps[0].kind, SquareFnKind::G2x);
    }

    #[test]
    fn mode_for_needs_a_segment_boundary() {
        let c = with("[gates]\nkato = \"record\"\n").unwrap();
        assert_eq!(c.mode_for("kato", CheckMode::Gate), CheckMode::Record);
        assert_eq!(c.mode_for("kato.p2", CheckMode::Gate), CheckMode::Record);
        assert_eq!(c.mode_for("katop2", CheckMode::Gate), CheckMode::Gate);
    }
}
