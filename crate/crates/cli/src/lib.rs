//! Batch front end for gapcert: a JSON run configuration in, a JSON record or
//! a CSV table out.
//!
//! Output is deterministic: numbers are rounded to the configured number of
//! significant digits, object keys are sorted, and parallel jobs are
//! reassembled in a fixed order.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use gapcert_core::covering::{
    ball_lattice_covering, box_partition, default_radii, evaluate_covering, radius_sweep, two_piece_covering,
    SweepReport,
};
use gapcert_core::oracle::{grid_gap, grid_gap_masked, radial_sector_gap};
use gapcert_core::poincare::oracle_gap;
use gapcert_core::potential::PolynomialPotential;
use gapcert_core::powerlaw::{assemble_two_piece_bound, inner_bracket, outer_bracket};
use gapcert_core::{
    normalize, BoundConfig, Cell, Covering, FormBoundSpec, GlobalBoundReport, LocalBoundConfig, MeasureSpec,
    Method, NormalizedMeasure, OracleSettings, PoincarePolicy, PowerLawBranch, PowerLawSpec, RadialMeasure,
    SpectralResult,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;
const EPS_TAIL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Already carries a `source:line:column:` prefix.
    #[error("{0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] gapcert_core::Error),
    #[error("column `{0}` is not available")]
    ColumnMissing(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::ColumnMissing(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Exit code for a record that is not certified although the policy asked
/// for certified inputs only.
pub const EXIT_UNCERTIFIED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bound,
    OracleRadial,
    OracleGrid,
    Powerlaw,
    Sweep,
    Validate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchName {
    #[default]
    Pure,
    #[serde(alias = "prop71")]
    Inner,
    #[serde(alias = "prop72")]
    Outer,
}

impl From<BranchName> for PowerLawBranch {
    fn from(b: BranchName) -> Self {
        match b {
            BranchName::Pure => PowerLawBranch::Pure,
            BranchName::Inner => PowerLawBranch::Inner,
            BranchName::Outer => PowerLawBranch::Outer,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Gaussian {
        n: usize,
    },
    PowerLaw {
        n: usize,
        alpha: f64,
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        c: f64,
        #[serde(default)]
        branch: BranchName,
    },
    /// `V(x) = ½xᵀQx + b·x + Σ qᵢxᵢ⁴/4`.
    Polynomial {
        quadratic: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quartic: Vec<f64>,
    },
}

impl MeasureConfig {
    pub fn dim(&self) -> usize {
        match self {
            MeasureConfig::Gaussian { n } | MeasureConfig::PowerLaw { n, .. } => *n,
            MeasureConfig::Polynomial { quadratic, .. } => quadratic.len(),
        }
    }

    fn is_radial(&self) -> bool {
        !matches!(self, MeasureConfig::Polynomial { .. })
    }

    fn power_law(&self) -> Option<(f64, f64, f64)> {
        match self {
            MeasureConfig::PowerLaw { alpha, a, c, .. } => Some((*alpha, *a, *c)),
            _ => None,
        }
    }

    fn build(&self) -> gapcert_core::Result<MeasureSpec> {
        Ok(match self {
            MeasureConfig::Gaussian { n } => MeasureSpec::Radial(RadialMeasure::gaussian(*n)),
            MeasureConfig::PowerLaw { n, alpha, a, c, branch } => {
                MeasureSpec::Radial(RadialMeasure::power_law(*n, *alpha, *a, *c, (*branch).into())?)
            }
            MeasureConfig::Polynomial { quadratic, linear, quartic } => MeasureSpec::Evaluator(Arc::new(
                PolynomialPotential::new(quadratic.clone(), linear.clone(), quartic.clone())?,
            )),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveringKindName {
    TwoPiece,
    BallLattice,
    BoxPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    pub kind: CoveringKindName,
    /// Two-piece split radius or lattice ball radius. Defaults to `(a n)^{1/α}`
    /// for power-law measures.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Radii to try; the largest bound wins. An empty list uses the default
    /// radii around the reference scale.
    #[serde(default)]
    pub radii_sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub inf_over_lattice_ok: bool,
    #[serde(default, rename = "box")]
    pub bx: Option<BoxConfig>,
    #[serde(default)]
    pub parts: Option<usize>,
    /// Adds the complement of the inscribed ball to a lattice.
    #[serde(default)]
    pub complement: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    #[default]
    CertifiedOnly,
    AllowNumerical,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundOptions {
    pub poincare_policy: PolicyName,
    pub user_value: Option<f64>,
    pub form_bound_alpha: Option<f64>,
    pub k_grid_size: usize,
    pub k_grid: Option<Vec<f64>>,
    pub kappa_grid: Vec<f64>,
    pub methods_enabled: Vec<Method>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        let local = LocalBoundConfig::default();
        Self {
            poincare_policy: PolicyName::CertifiedOnly,
            user_value: None,
            form_bound_alpha: None,
            k_grid_size: local.k_grid_size,
            k_grid: None,
            kappa_grid: local.kappa_grid,
            methods_enabled: local.methods_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mesh: usize,
    pub l_max: usize,
    #[serde(rename = "box")]
    pub bx: Option<BoxConfig>,
    pub h: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let s = OracleSettings::default();
        Self { mesh: s.mesh, l_max: s.l_max, bx: None, h: None }
    }
}

impl OracleConfig {
    fn settings(&self) -> OracleSettings {
        OracleSettings { mesh: self.mesh, l_max: self.l_max, h: self.h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawConfig {
    pub alpha: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub c: f64,
    pub n: usize,
    #[serde(default)]
    pub branch: BranchName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    #[serde(default = "unit_list")]
    pub a: Vec<f64>,
    #[serde(default = "unit_list")]
    pub c: Vec<f64>,
    #[serde(default)]
    pub branch: BranchName,
    /// Also run the radial oracle for every row.
    #[serde(default = "yes")]
    pub oracle: bool,
}

fn unit_list() -> Vec<f64> {
    vec![1.0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Format,
    /// Significant digits for every number written.
    pub precision: usize,
    pub columns: Option<Vec<String>>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: None, format: Format::Json, precision: 17, columns: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub covering: Option<CoveringConfig>,
    #[serde(default)]
    pub bound: BoundOptions,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub powerlaw: Option<PowerLawConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// A schema problem tied to the config key where it shows up.
struct Issue {
    key: &'static str,
    message: String,
}

fn issue(key: &'static str, message: impl Into<String>) -> Issue {
    Issue { key, message: message.into() }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl RunConfig {
    fn check(&self) -> Result<(), Issue> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(issue("schema_version", format!("unsupported schema version {}", self.schema_version)));
        }
        if !(6..=17).contains(&self.output.precision) {
            return Err(issue("precision", format!("precision must lie in [6, 17], got {}", self.output.precision)));
        }
        let b = &self.bound;
        match (b.poincare_policy, b.user_value) {
            (PolicyName::User, None) => return Err(issue("poincare_policy", "policy `user` needs `user_value`")),
            (PolicyName::User, Some(v)) if !positive(v) => {
                return Err(issue("user_value", format!("user_value must be positive, got {v}")))
            }
            (PolicyName::CertifiedOnly | PolicyName::AllowNumerical, Some(_)) => {
                return Err(issue("user_value", "user_value is only read with policy `user`"))
            }
            _ => {}
        }
        if let Some(fb) = b.form_bound_alpha {
            if !(0.0..1.0).contains(&fb) {
                return Err(issue("form_bound_alpha", format!("form_bound_alpha must lie in [0, 1), got {fb}")));
            }
        }
        if b.k_grid_size == 0 {
            return Err(issue("k_grid_size", "k_grid_size must be at least 1"));
        }
        if b.kappa_grid.is_empty() || b.kappa_grid.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return Err(issue("kappa_grid", "kappa_grid needs values in (0, 1)"));
        }
        if b.methods_enabled.is_empty() {
            return Err(issue("methods_enabled", "methods_enabled is empty"));
        }
        if self.oracle.mesh < 16 {
            return Err(issue("mesh", format!("oracle mesh must be at least 16, got {}", self.oracle.mesh)));
        }
        if let Some(h) = self.oracle.h {
            if !positive(h) {
                return Err(issue("h", format!("grid step must be positive, got {h}")));
            }
        }
        if let Some(m) = &self.measure {
            if m.dim() == 0 {
                return Err(issue("measure", "dimension must be at least 1"));
            }
        }
        let needs_measure = || self.measure.as_ref().ok_or_else(|| issue("command", "this command needs a `measure` block"));
        match self.command {
            Command::Bound => {
                let m = needs_measure()?;
                let cov = self.covering.as_ref().ok_or_else(|| issue("command", "`bound` needs a `covering` block"))?;
                self.check_covering(cov, m)?;
            }
            Command::Validate => {
                let m = needs_measure()?;
                match &self.covering {
                    Some(cov) => self.check_covering(cov, m)?,
                    None if m.power_law().is_some() => {}
                    None => return Err(issue("command", "`validate` needs a `covering` block unless the measure is a power law")),
                }
                if !m.is_radial() && self.oracle.bx.is_none() {
                    return Err(issue("oracle", "validating a non-radial measure needs `oracle.box`"));
                }
            }
            Command::OracleRadial => {
                if !needs_measure()?.is_radial() {
                    return Err(issue("family", "oracle-radial needs a radial measure family"));
                }
            }
            Command::OracleGrid => {
                let m = needs_measure()?;
                let bx = self.oracle.bx.as_ref().ok_or_else(|| issue("oracle", "oracle-grid needs `oracle.box`"))?;
                check_box(bx, m.dim())?;
                if m.dim() > 2 {
                    return Err(issue("measure", "oracle-grid works in dimension 1 or 2"));
                }
            }
            Command::Powerlaw => {
                let p = self.powerlaw.as_ref().ok_or_else(|| issue("command", "`powerlaw` needs a `powerlaw` block"))?;
                if p.n == 0 {
                    return Err(issue("n", "dimension must be at least 1"));
                }
            }
            Command::Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| issue("command", "`sweep` needs a `sweep` block"))?;
                if s.n.is_empty() || s.alpha.is_empty() || s.a.is_empty() || s.c.is_empty() {
                    return Err(issue("sweep", "every sweep axis needs at least one value"));
                }
                if s.n.contains(&0) {
                    return Err(issue("n", "dimension must be at least 1"));
                }
            }
        }
        Ok(())
    }

    fn check_covering(&self, cov: &CoveringConfig, m: &MeasureConfig) -> Result<(), Issue> {
        if let Some(r) = cov.radius {
            if !positive(r) {
                return Err(issue("radius", format!("radius must be positive, got {r}")));
            }
        }
        if let Some(radii) = &cov.radii_sweep {
            if radii.iter().any(|r| !positive(*r)) {
                return Err(issue("radii_sweep", "radii must be positive"));
            }
        }
        match cov.kind {
            CoveringKindName::TwoPiece => {
                if cov.radius.is_none() && cov.radii_sweep.is_none() && m.power_law().is_none() {
                    return Err(issue("covering", "two_piece needs `radius` unless the measure is a power law"));
                }
            }
            CoveringKindName::BallLattice => {
                let bx = cov.bx.as_ref().ok_or_else(|| issue("covering", "ball_lattice needs `box`"))?;
                check_box(bx, m.dim())?;
                if cov.radius.is_none() && cov.radii_sweep.is_none() {
                    return Err(issue("covering", "ball_lattice needs `radius` or `radii_sweep`"));
                }
            }
            CoveringKindName::BoxPartition => {
                let bx = cov.bx.as_ref().ok_or_else(|| issue("covering", "box_partition needs `box`"))?;
                check_box(bx, m.dim())?;
                if cov.parts.unwrap_or(0) == 0 {
                    return Err(issue("covering", "box_partition needs `parts` ≥ 1"));
                }
                if cov.radii_sweep.is_some() {
                    return Err(issue("radii_sweep", "box_partition has no radius to sweep"));
                }
            }
        }
        Ok(())
    }

    fn policy(&self) -> PoincarePolicy {
        match self.bound.poincare_policy {
            PolicyName::CertifiedOnly => PoincarePolicy::CertifiedOnly,
            PolicyName::AllowNumerical => PoincarePolicy::AllowNumerical,
            PolicyName::User => PoincarePolicy::User(self.bound.user_value.unwrap_or(f64::NAN)),
        }
    }

    fn bound_config(&self) -> gapcert_core::Result<BoundConfig> {
        let b = &self.bound;
        Ok(BoundConfig {
            local: LocalBoundConfig {
                k_grid_size: b.k_grid_size,
                k_grid: b.k_grid.clone(),
                kappa_grid: b.kappa_grid.clone(),
                methods_enabled: b.methods_enabled.clone(),
            },
            policy: self.policy(),
            oracle: self.oracle.settings(),
            form_bound: b.form_bound_alpha.map(FormBoundSpec::user).transpose()?,
            inf_over_lattice_ok: self.covering.as_ref().is_some_and(|c| c.inf_over_lattice_ok),
        })
    }
}

fn check_box(bx: &BoxConfig, n: usize) -> Result<(), Issue> {
    if bx.lo.len() != n || bx.hi.len() != n {
        return Err(issue("box", format!("box corners must have {n} coordinates")));
    }
    if bx.lo.iter().zip(&bx.hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
        return Err(issue("box", "box needs finite lo < hi on every axis"));
    }
    Ok(())
}

/// `line:column` of the first occurrence of `"key"` in the source, or `1:1`.
fn locate(text: &str, key: &str) -> (usize, usize) {
    let needle = format!("\"{key}\"");
    match text.find(&needle) {
        Some(pos) => {
            let before = &text[..pos];
            let line = before.matches('\n').count() + 1;
            let col = pos - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, col)
        }
        None => (1, 1),
    }
}

/// Parses and validates a configuration. Diagnostics read
/// `source:line:column: message`.
pub fn parse_config(text: &str, source: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
        CliError::Schema(format!("{source}:{}:{}: {msg}", e.line(), e.column()))
    })?;
    cfg.check().map_err(|i| {
        let (line, col) = locate(text, i.key);
        CliError::Schema(format!("{source}:{line}:{col}: {}", i.message))
    })?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawResult {
    pub spec: PowerLawSpec,
    pub r_a: f64,
    pub bracket_kind: BranchName,
    pub bracket: f64,
    pub two_piece_bound: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResultRow {
    pub n: usize,
    pub alpha: f64,
    pub a: f64,
    pub c: f64,
    pub bound: f64,
    pub certified: bool,
    pub oracle: Option<SpectralResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateResult {
    pub bound: GlobalBoundReport,
    pub oracle: SpectralResult,
    pub ratio: f64,
    /// `bound ≤ oracle + 3·error`.
    pub sound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Results {
    Bound(GlobalBoundReport),
    RadiusSweep(SweepReport),
    Spectral(SpectralResult),
    Powerlaw(PowerLawResult),
    Sweep { rows: Vec<SweepResultRow> },
    Validate(ValidateResult),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub schema_version: u32,
    pub command: Command,
    /// `None` for pure oracle runs.
    pub certified: Option<bool>,
    pub config: RunConfig,
    pub results: Results,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl RunRecord {
    /// Whether the record should end with the uncertified exit code.
    pub fn uncertified_under_policy(&self) -> bool {
        self.config.bound.poincare_policy == PolicyName::CertifiedOnly && self.certified == Some(false)
    }
}

fn normalized(m: &MeasureConfig) -> gapcert_core::Result<NormalizedMeasure> {
    normalize(&m.build()?, EPS_TAIL)
}

fn reference_radius(m: &MeasureConfig) -> Option<f64> {
    m.power_law().map(|(alpha, a, _)| (a * m.dim() as f64).powf(1.0 / alpha))
}

fn build_covering(cov: &CoveringConfig, m: &MeasureConfig, radius: f64) -> gapcert_core::Result<Covering> {
    let n = m.dim();
    let bx = cov.bx.as_ref();
    let covering = match cov.kind {
        CoveringKindName::TwoPiece => two_piece_covering(radius, n)?,
        CoveringKindName::BallLattice => {
            let bx = bx.expect("checked");
            ball_lattice_covering(&bx.lo, &bx.hi, radius)?
        }
        CoveringKindName::BoxPartition => {
            let bx = bx.expect("checked");
            box_partition(&Cell::boxed(bx.lo.clone(), bx.hi.clone())?, cov.parts.expect("checked"))?
        }
    };
    if cov.complement && cov.kind != CoveringKindName::TwoPiece {
        covering.with_complement()
    } else {
        Ok(covering)
    }
}

fn bound_results(cfg: &RunConfig, m: &MeasureConfig, cov: &CoveringConfig) -> gapcert_core::Result<Results> {
    let measure = normalized(m)?;
    let bc = cfg.bound_config()?;
    match &cov.radii_sweep {
        Some(radii) => {
            let radii = if radii.is_empty() { default_radii(&measure)? } else { radii.clone() };
            let builder = |r: f64| build_covering(cov, m, r);
            Ok(Results::RadiusSweep(radius_sweep(&measure, &radii, &builder, &bc)?))
        }
        None => {
            let radius = cov.radius.or_else(|| reference_radius(m)).unwrap_or(1.0);
            let covering = build_covering(cov, m, radius)?;
            Ok(Results::Bound(evaluate_covering(&measure, &covering, &bc)?))
        }
    }
}

fn powerlaw_spec(p: &PowerLawConfig) -> gapcert_core::Result<PowerLawSpec> {
    PowerLawSpec::new(p.alpha, p.a, p.c, p.n, p.branch.into())
}

fn whole_space_oracle(m: &NormalizedMeasure, settings: &OracleSettings) -> gapcert_core::Result<SpectralResult> {
    oracle_gap(m, &Cell::whole(m.dim()), settings)
}

fn sweep_row(
    cfg: &RunConfig,
    s: &SweepConfig,
    (n, alpha, a, c): (usize, f64, f64, f64),
) -> gapcert_core::Result<SweepResultRow> {
    let spec = PowerLawSpec::new(alpha, a, c, n, s.branch.into())?;
    let g = assemble_two_piece_bound(&spec, &cfg.bound_config()?)?;
    let oracle = if s.oracle {
        let m = normalize(&MeasureSpec::Radial(spec.measure()?), EPS_TAIL)?;
        Some(whole_space_oracle(&m, &cfg.oracle.settings())?)
    } else {
        None
    };
    Ok(SweepResultRow { n, alpha, a, c, bound: g.value, certified: g.certified, oracle })
}

fn tuple_order(x: &SweepResultRow, y: &SweepResultRow) -> Ordering {
    x.n.cmp(&y.n)
        .then(x.alpha.total_cmp(&y.alpha))
        .then(x.a.total_cmp(&y.a))
        .then(x.c.total_cmp(&y.c))
}

fn execute(cfg: &RunConfig) -> gapcert_core::Result<Results> {
    let oracle = cfg.oracle.settings();
    match cfg.command {
        Command::Bound => {
            let (m, cov) = (cfg.measure.as_ref().expect("checked"), cfg.covering.as_ref().expect("checked"));
            bound_results(cfg, m, cov)
        }
        Command::OracleRadial => {
            let m = normalized(cfg.measure.as_ref().expect("checked"))?;
            let result = match m.radial() {
                Some(rm) if m.dim() > 1 => radial_sector_gap(rm, &Cell::whole(m.dim()), oracle.l_max, oracle.mesh)?,
                _ => whole_space_oracle(&m, &oracle)?,
            };
            Ok(Results::Spectral(result))
        }
        Command::OracleGrid => {
            let m = cfg.measure.as_ref().expect("checked").build()?;
            let bx = cfg.oracle.bx.as_ref().expect("checked");
            let cell = Cell::boxed(bx.lo.clone(), bx.hi.clone())?;
            let shortest = bx.lo.iter().zip(&bx.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
            Ok(Results::Spectral(grid_gap(&m, &cell, oracle.h.unwrap_or(shortest / 64.0))?))
        }
        Command::Powerlaw => {
            let p = cfg.powerlaw.as_ref().expect("checked");
            let spec = powerlaw_spec(p)?;
            let inner = match p.branch {
                BranchName::Inner => true,
                BranchName::Outer => false,
                BranchName::Pure => p.alpha >= 2.0,
            };
            let bracket = if inner { inner_bracket(&spec)? } else { outer_bracket(&spec)? };
            let g = assemble_two_piece_bound(&spec, &cfg.bound_config()?)?;
            Ok(Results::Powerlaw(PowerLawResult {
                spec,
                r_a: spec.r_a(),
                bracket_kind: if inner { BranchName::Inner } else { BranchName::Outer },
                bracket,
                two_piece_bound: g.value,
                certified: g.certified,
            }))
        }
        Command::Sweep => {
            let s = cfg.sweep.as_ref().expect("checked");
            let mut tuples = Vec::new();
            for &n in &s.n {
                for &alpha in &s.alpha {
                    for &a in &s.a {
                        for &c in &s.c {
                            tuples.push((n, alpha, a, c));
                        }
                    }
                }
            }
            let mut rows: Vec<SweepResultRow> =
                tuples.into_par_iter().map(|t| sweep_row(cfg, s, t)).collect::<gapcert_core::Result<_>>()?;
            rows.sort_by(tuple_order);
            rows.dedup_by(|x, y| tuple_order(x, y) == Ordering::Equal);
            Ok(Results::Sweep { rows })
        }
        Command::Validate => {
            let m = cfg.measure.as_ref().expect("checked");
            let bound = match &cfg.covering {
                Some(cov) => match bound_results(cfg, m, cov)? {
                    Results::RadiusSweep(s) => s.best,
                    Results::Bound(g) => g,
                    _ => unreachable!(),
                },
                None => {
                    let MeasureConfig::PowerLaw { n, alpha, a, c, branch } = m else { unreachable!() };
                    let spec = PowerLawSpec::new(*alpha, *a, *c, *n, (*branch).into())?;
                    assemble_two_piece_bound(&spec, &cfg.bound_config()?)?
                }
            };
            let oracle_result = if m.is_radial() {
                whole_space_oracle(&normalized(m)?, &oracle)?
            } else {
                let bx = cfg.oracle.bx.as_ref().expect("checked");
                let cell = Cell::boxed(bx.lo.clone(), bx.hi.clone())?;
                let shortest = bx.lo.iter().zip(&bx.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
                grid_gap_masked(&m.build()?, &cell, oracle.h.unwrap_or(shortest / 64.0))?
            };
            let sound = bound.value <= oracle_result.value + 3.0 * oracle_result.error_estimate;
            Ok(Results::Validate(ValidateResult {
                ratio: bound.value / oracle_result.value,
                sound,
                bound,
                oracle: oracle_result,
            }))
        }
    }
}

/// Runs a validated configuration.
pub fn run(cfg: &RunConfig) -> Result<RunRecord, CliError> {
    let results = execute(cfg)?;
    let certified = match &results {
        Results::Bound(g) => Some(g.certified),
        Results::RadiusSweep(s) => Some(s.best.certified),
        Results::Spectral(_) => None,
        Results::Powerlaw(p) => Some(p.certified),
        Results::Sweep { rows } => Some(rows.iter().all(|r| r.certified)),
        Results::Validate(v) => Some(v.bound.certified && v.sound),
    };
    Ok(RunRecord {
        tool_version: TOOL_VERSION.to_string(),
        schema_version: SCHEMA_VERSION,
        command: cfg.command,
        certified,
        config: cfg.clone(),
        results,
        wall_time_ms: None,
    })
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut serde_json::Value, digits: usize) {
    match v {
        serde_json::Value::Number(num) if num.is_f64() => {
            let x = round_sig(num.as_f64().expect("f64"), digits);
            if let Some(r) = serde_json::Number::from_f64(x) {
                *num = r;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|x| round_value(x, digits)),
        serde_json::Value::Object(map) => map.values_mut().for_each(|x| round_value(x, digits)),
        _ => {}
    }
}

/// Pretty JSON with numbers rounded to the configured precision.
pub fn render_json(record: &RunRecord) -> Result<String, CliError> {
    let mut v = serde_json::to_value(record).map_err(|e| CliError::Schema(format!("serialization: {e}")))?;
    round_value(&mut v, record.config.output.precision);
    let mut out = serde_json::to_string_pretty(&v).map_err(|e| CliError::Schema(format!("serialization: {e}")))?;
    out.push('\n');
    Ok(out)
}

pub const DEFAULT_COLUMNS: [&str; 8] = ["n", "alpha", "a", "c", "bound", "oracle", "ratio", "certified"];

/// One plot-ready row; unknown quantities stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvRow {
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub bound: Option<f64>,
    pub oracle: Option<f64>,
    pub certified: Option<bool>,
}

impl CsvRow {
    fn ratio(&self) -> Option<f64> {
        Some(self.bound? / self.oracle?)
    }

    fn cell(&self, column: &str, digits: usize) -> Result<String, CliError> {
        let num = |x: Option<f64>| x.map(|v| format_number(v, digits)).unwrap_or_default();
        Ok(match column {
            "n" => self.n.map(|n| n.to_string()).unwrap_or_default(),
            "alpha" => num(self.alpha),
            "a" => num(self.a),
            "c" => num(self.c),
            "bound" => num(self.bound),
            "oracle" => num(self.oracle),
            "ratio" => num(self.ratio()),
            "certified" => self.certified.map(|b| b.to_string()).unwrap_or_default(),
            other => return Err(CliError::ColumnMissing(other.to_string())),
        })
    }
}

fn format_number(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{}", round_sig(x, digits))
}

/// The CSV rows of a record, sorted by `(n, alpha, a, c)`.
pub fn csv_rows(record: &RunRecord) -> Vec<CsvRow> {
    let measure = record.config.measure.as_ref();
    let base = || {
        let mut row = CsvRow { n: measure.map(|m| m.dim()), ..CsvRow::default() };
        if let Some((alpha, a, c)) = measure.and_then(|m| m.power_law()) {
            (row.alpha, row.a, row.c) = (Some(alpha), Some(a), Some(c));
        }
        row
    };
    match &record.results {
        Results::Bound(g) => vec![CsvRow { bound: Some(g.value), certified: Some(g.certified), ..base() }],
        Results::RadiusSweep(s) => {
            vec![CsvRow { bound: Some(s.best.value), certified: Some(s.best.certified), ..base() }]
        }
        Results::Spectral(r) => vec![CsvRow { oracle: Some(r.value), ..base() }],
        Results::Powerlaw(p) => vec![CsvRow {
            n: Some(p.spec.n),
            alpha: Some(p.spec.alpha),
            a: Some(p.spec.a),
            c: Some(p.spec.c),
            bound: Some(p.two_piece_bound),
            oracle: None,
            certified: Some(p.certified),
        }],
        Results::Sweep { rows } => rows
            .iter()
            .map(|r| CsvRow {
                n: Some(r.n),
                alpha: Some(r.alpha),
                a: Some(r.a),
                c: Some(r.c),
                bound: Some(r.bound),
                oracle: r.oracle.as_ref().map(|o| o.value),
                certified: Some(r.certified),
            })
            .collect(),
        Results::Validate(v) => vec![CsvRow {
            bound: Some(v.bound.value),
            oracle: Some(v.oracle.value),
            certified: Some(v.bound.certified),
            ..base()
        }],
    }
}

/// Header plus one line per row; `.` decimal separator, no quoting needed.
pub fn emit_csv(rows: &[CsvRow], columns: &[&str], digits: usize) -> Result<String, CliError> {
    for c in columns {
        CsvRow::default().cell(c, digits)?;
    }
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        let cells = columns.iter().map(|c| row.cell(c, digits)).collect::<Result<Vec<_>, _>>()?;
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}

/// Renders a record in `format`.
pub fn render(record: &RunRecord, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => render_json(record),
        Format::Csv => {
            let out = &record.config.output;
            let columns: Vec<&str> = match &out.columns {
                Some(cols) => cols.iter().map(String::as_str).collect(),
                None => DEFAULT_COLUMNS.to_vec(),
            };
            emit_csv(&csv_rows(record), &columns, out.precision)
        }
    }
}
