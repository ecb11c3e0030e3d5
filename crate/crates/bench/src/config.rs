//! Run configuration and the check manifest, both TOML with a
//! `schema_version` key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bubblelab::quadrature::QuadratureSpec;
use serde::{Deserialize, Serialize};

use crate::record::Rule;

pub const SCHEMA_VERSION: u32 = 1;

/// Manifest shipped with the crate.
pub const DEFAULT_MANIFEST: &str = include_str!("../manifest.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed TOML: {0}")]
    Syntax(String),
    #[error("unsupported schema_version {found}; this build reads version {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown check id {0}")]
    UnknownCheck(String),
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// A geometric sweep `start · factor^k`, `k < points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub points: usize,
    #[serde(default = "two")]
    pub factor: f64,
}

fn two() -> f64 {
    2.0
}

impl Sweep {
    pub fn new(start: f64, points: usize) -> Self {
        Self {
            start,
            points,
            factor: 2.0,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.start * self.factor.powi(k as i32)).collect()
    }

    fn validate(&self, key: &str, min_start: f64, min_points: usize) -> Result<(), ConfigError> {
        if !(self.start.is_finite() && self.start >= min_start) {
            return Err(bad(key, format!("start must be at least {min_start}, got {}", self.start)));
        }
        if !(self.factor.is_finite() && self.factor > 1.0) {
            return Err(bad(key, format!("factor must exceed 1, got {}", self.factor)));
        }
        if self.points < min_points || self.points > 12 {
            return Err(bad(key, format!("points must lie in {min_points}..=12, got {}", self.points)));
        }
        if !self.values().last().is_some_and(|v| v.is_finite() && *v < 1e8) {
            return Err(bad(key, "sweep overflows"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub points: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            points: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixAConfig {
    pub dims: Vec<usize>,
    /// Center distances of unit-scale pairs.
    pub separations: Sweep,
    /// Scale ratios of concentric pairs.
    pub scale_ratios: Sweep,
    pub random_tuples: usize,
}

impl Default for AppendixAConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 7],
            separations: Sweep::new(10.0, 4),
            scale_ratios: Sweep {
                start: 100.0,
                points: 4,
                factor: 4.0,
            },
            random_tuples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixBConfig {
    pub dims: Vec<usize>,
    pub radii: Sweep,
    pub drop_first: bool,
}

impl Default for AppendixBConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 7, 8],
            radii: Sweep::new(20.0, 5),
            drop_first: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub dims: Vec<usize>,
    /// Half-separations `R` of the symmetric unit-scale pair.
    pub radii: Sweep,
    pub nodes_per_efold: f64,
    pub outer_factor: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Cutoffs for the data-norm check, in tower and cluster geometries.
    pub norm_radii: Sweep,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 7],
            radii: Sweep::new(10.0, 4),
            nodes_per_efold: 16.0,
            outer_factor: 10.0,
            tol: 1e-9,
            max_iter: 50,
            norm_radii: Sweep::new(10.0, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpConfig {
    pub dims: Vec<usize>,
    pub radii: Sweep,
    /// Matching exponent `s` of the annulus `R^{1−s} ≤ |y| ≤ 2R^{1−s}`.
    pub s: f64,
    /// Take `Γ` from a reduction solve at every point instead of a scaling
    /// law calibrated on the smallest `R`.
    pub use_reduction: bool,
    pub nodes_per_efold: f64,
}

impl Default for SharpConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 7],
            radii: Sweep::new(20.0, 4),
            s: 0.5,
            use_reduction: true,
            nodes_per_efold: 16.0,
        }
    }
}

/// Planted-parameter projection checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSuiteConfig {
    pub dims: Vec<usize>,
    /// Axial shift and dilation factor of the equivariance check.
    pub shift: f64,
    pub dilation: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionSuiteConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 7],
            shift: 2.7,
            dilation: 1.7,
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleConfig {
    pub center: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub bubbles: Vec<BubbleConfig>,
}

fn default_delta() -> f64 {
    0.1
}

/// Bubble on the axis: `(axial position, scale)`, with a coefficient for
/// target terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBubble {
    pub t: f64,
    pub scale: f64,
    #[serde(default = "one")]
    pub coeff: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub n: usize,
    /// Field snapshot added to the bubble terms; relative to the config file.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub terms: Vec<AxisBubble>,
    pub initial: Vec<AxisBubble>,
    #[serde(default = "default_project_tol")]
    pub tol: f64,
    #[serde(default = "default_project_iter")]
    pub max_iter: usize,
}

fn default_project_tol() -> f64 {
    1e-8
}

fn default_project_iter() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub appendix_a: AppendixAConfig,
    #[serde(default)]
    pub appendix_b: AppendixBConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub sharp: SharpConfig,
    #[serde(default)]
    pub projection: ProjectionSuiteConfig,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub project: Option<ProjectConfig>,
    /// Overrides of manifest tolerances, by check id.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 20_240_601,
            quadrature: QuadratureConfig::default(),
            appendix_a: AppendixAConfig::default(),
            appendix_b: AppendixBConfig::default(),
            reduction: ReductionConfig::default(),
            sharp: SharpConfig::default(),
            projection: ProjectionSuiteConfig::default(),
            family: None,
            project: None,
            tolerances: BTreeMap::new(),
        }
    }
}

fn check_dims(key: &str, dims: &[usize], lo: usize, hi: usize) -> Result<(), ConfigError> {
    if dims.is_empty() {
        return Err(bad(key, "at least one dimension is required"));
    }
    if let Some(d) = dims.iter().find(|d| **d < lo || **d > hi) {
        return Err(bad(key, format!("dimension {d} outside {lo}..={hi}")));
    }
    Ok(())
}

impl RunConfig {
    /// Reduced sweeps for continuous integration.
    pub fn quick() -> Self {
        let mut c = Self::default();
        c.appendix_a.separations.points = 3;
        c.appendix_a.scale_ratios.points = 3;
        c.appendix_a.random_tuples = 2000;
        c.appendix_b.radii.points = 4;
        c.reduction.radii.points = 3;
        c.reduction.nodes_per_efold = 8.0;
        c.reduction.norm_radii.points = 3;
        c.sharp.use_reduction = false;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let head: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        match head.get("schema_version").and_then(|v| v.as_integer()) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(ConfigError::Schema {
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                })
            }
            None => return Err(bad("schema_version", "missing or not an integer")),
        }
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml_str(&read(path)?)?;
        if let Some(p) = cfg.project.as_mut() {
            if let Some(s) = p.snapshot.as_mut() {
                if s.is_relative() {
                    *s = path.parent().unwrap_or(Path::new(".")).join(&*s);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        // TOML integers are signed 64-bit; larger seeds would not read back.
        if i64::try_from(self.seed).is_err() {
            return Err(bad("seed", "must be at most 2^63 - 1"));
        }
        let q = &self.quadrature;
        if !(q.rel_tol > 0.0 && q.rel_tol <= 0.1) {
            return Err(bad("quadrature.rel_tol", "must lie in (0, 0.1]"));
        }
        if q.points < 16 || q.points > 1 << 20 {
            return Err(bad("quadrature.points", "must lie in 16..=2^20"));
        }
        check_dims("appendix_a.dims", &self.appendix_a.dims, 6, 8)?;
        self.appendix_a.separations.validate("appendix_a.separations", 4.0, 2)?;
        self.appendix_a.scale_ratios.validate("appendix_a.scale_ratios", 4.0, 2)?;
        if self.appendix_a.random_tuples == 0 || self.appendix_a.random_tuples > 10_000_000 {
            return Err(bad("appendix_a.random_tuples", "must lie in 1..=10^7"));
        }
        check_dims("appendix_b.dims", &self.appendix_b.dims, 6, 12)?;
        self.appendix_b.radii.validate("appendix_b.radii", 4.0, 3)?;
        let r = &self.reduction;
        check_dims("reduction.dims", &r.dims, 6, 8)?;
        r.radii.validate("reduction.radii", 4.0, 2)?;
        r.norm_radii.validate("reduction.norm_radii", 4.0, 2)?;
        if !(r.nodes_per_efold >= 2.0 && r.nodes_per_efold <= 128.0) {
            return Err(bad("reduction.nodes_per_efold", "must lie in [2, 128]"));
        }
        if !(r.outer_factor >= 2.0 && r.outer_factor <= 1000.0) {
            return Err(bad("reduction.outer_factor", "must lie in [2, 1000]"));
        }
        if !(r.tol > 0.0 && r.tol < 1e-2) {
            return Err(bad("reduction.tol", "must lie in (0, 1e-2)"));
        }
        if r.max_iter == 0 || r.max_iter > 10_000 {
            return Err(bad("reduction.max_iter", "must lie in 1..=10000"));
        }
        let s = &self.sharp;
        check_dims("sharp.dims", &s.dims, 6, 8)?;
        s.radii.validate("sharp.radii", 10.0, 4)?;
        if !(s.s > 0.0 && s.s < 1.0) {
            return Err(bad("sharp.s", "must lie in (0, 1)"));
        }
        if !(s.nodes_per_efold >= 2.0 && s.nodes_per_efold <= 128.0) {
            return Err(bad("sharp.nodes_per_efold", "must lie in [2, 128]"));
        }
        let pj = &self.projection;
        check_dims("projection.dims", &pj.dims, 3, 12)?;
        if !(pj.shift.is_finite() && pj.shift.abs() <= 100.0) {
            return Err(bad("projection.shift", "must be finite with |shift| <= 100"));
        }
        if !(pj.dilation > 0.05 && pj.dilation < 20.0) {
            return Err(bad("projection.dilation", "must lie in (0.05, 20)"));
        }
        if !(pj.tol > 0.0 && pj.tol < 1e-2) {
            return Err(bad("projection.tol", "must lie in (0, 1e-2)"));
        }
        if pj.max_iter == 0 || pj.max_iter > 1000 {
            return Err(bad("projection.max_iter", "must lie in 1..=1000"));
        }
        if let Some(f) = &self.family {
            if f.n < 3 || f.n > 64 {
                return Err(bad("family.n", "must lie in 3..=64"));
            }
            if f.bubbles.is_empty() || f.bubbles.len() > 64 {
                return Err(bad("family.bubbles", "between 1 and 64 bubbles"));
            }
            for b in &f.bubbles {
                if b.center.len() != f.n {
                    return Err(bad("family.bubbles.center", format!("expected {} coordinates", f.n)));
                }
                if !(b.scale > 0.0 && b.scale.is_finite()) || b.center.iter().any(|c| !c.is_finite()) {
                    return Err(bad("family.bubbles", "scales must be positive and centers finite"));
                }
            }
            if !(f.delta > 0.0 && f.delta.is_finite()) {
                return Err(bad("family.delta", "must be positive"));
            }
        }
        if let Some(p) = &self.project {
            if p.n < 3 || p.n > 64 {
                return Err(bad("project.n", "must lie in 3..=64"));
            }
            if p.initial.is_empty() || p.initial.len() > 8 {
                return Err(bad("project.initial", "between 1 and 8 bubbles"));
            }
            if p.terms.is_empty() && p.snapshot.is_none() {
                return Err(bad("project", "needs bubble terms, a snapshot, or both"));
            }
            for b in p.terms.iter().chain(&p.initial) {
                if !(b.scale > 0.0 && b.scale.is_finite() && b.t.is_finite() && b.coeff.is_finite()) {
                    return Err(bad("project", "bubble entries need finite t, coeff and positive scale"));
                }
            }
            if !(p.tol > 0.0 && p.tol < 1.0) {
                return Err(bad("project.tol", "must lie in (0, 1)"));
            }
        }
        for (k, v) in &self.tolerances {
            if !v.is_finite() {
                return Err(bad(&format!("tolerances.{k}"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn quad_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            points: self.quadrature.points,
            target_rel_err: self.quadrature.rel_tol,
            seed: self.seed,
            ..QuadratureSpec::default()
        }
    }
}

/// One check of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub id: String,
    pub suite: String,
    /// Stable name of the estimate being checked.
    pub anchor: String,
    /// Human-readable statement of the predicted scaling.
    pub prediction: String,
    pub rule: Rule,
    pub tolerance: f64,
    /// `stated` when the target is quoted from the source estimate,
    /// `derived` when computed from its formulas.
    pub grade: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub schema_version: u32,
    #[serde(rename = "check")]
    pub checks: Vec<CheckSpec>,
}

impl SuiteManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let m: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema { found: m.schema_version });
        }
        for (i, c) in m.checks.iter().enumerate() {
            if c.id.is_empty() || c.anchor.is_empty() {
                return Err(bad("check", "id and anchor must be non-empty"));
            }
            if m.checks[..i].iter().any(|o| o.id == c.id) {
                return Err(bad("check", format!("duplicate id {}", c.id)));
            }
            if !c.tolerance.is_finite() {
                return Err(bad(&format!("check.{}.tolerance", c.id), "must be finite"));
            }
            if !matches!(c.grade.as_str(), "stated" | "derived") {
                return Err(bad(&format!("check.{}.grade", c.id), "must be `stated` or `derived`"));
            }
        }
        Ok(m)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_MANIFEST).expect("built-in manifest is valid")
    }

    pub fn get(&self, id: &str) -> Option<&CheckSpec> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Applies tolerance overrides; unknown ids are rejected.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self, ConfigError> {
        for (id, tol) in overrides {
            let c = self
                .checks
                .iter_mut()
                .find(|c| &c.id == id)
                .ok_or_else(|| ConfigError::UnknownCheck(id.clone()))?;
            c.tolerance = *tol;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        let q = RunConfig::quick();
        assert_eq!(RunConfig::from_toml_str(&q.to_toml_string()).unwrap(), q);
    }

    #[test]
    fn minimal_config_expands_defaults() {
        let c = RunConfig::from_toml_str("schema_version = 1\nseed = 7\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.appendix_b, AppendixBConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_toml_str("seed = 1"), Err(ConfigError::Value { .. })));
        assert!(matches!(
            RunConfig::from_toml_str("schema_version = 2\nseed = 1"),
            Err(ConfigError::Schema { found: 2 })
        ));
        assert!(matches!(
            RunConfig::from_toml_str("schema_version = 1\nseed = 1\nbogus = 3"),
            Err(ConfigError::Syntax(_))
        ));
        assert!(RunConfig::from_toml_str(
            "schema_version = 1\nseed = 1\n[appendix_b]\ndims = [5]\nradii = { start = 20.0, points = 4 }\ndrop_first = false"
        )
        .is_err());
        assert!(RunConfig::from_toml_str("schema_version = 1\nseed = 1\n[quadrature]\nrel_tol = 0.5\npoints = 100").is_err());
        assert!(RunConfig::from_toml_str("schema_version = [").is_err());
        let fam = "schema_version = 1\nseed = 1\n[family]\nn = 3\nbubbles = [{ center = [0.0, 0.0], scale = 1.0 }]";
        assert!(RunConfig::from_toml_str(fam).is_err());
    }

    #[test]
    fn sweep_values() {
        assert_eq!(Sweep::new(10.0, 4).values(), vec![10.0, 20.0, 40.0, 80.0]);
    }

    #[test]
    fn manifest_parses_and_overrides() {
        let m = SuiteManifest::builtin();
        assert!(m.get("kernel-gram-diagonal").is_some());
        let mut o = BTreeMap::new();
        o.insert("kernel-gram-diagonal".to_string(), 1e-6);
        let m2 = m.clone().with_overrides(&o).unwrap();
        assert_eq!(m2.get("kernel-gram-diagonal").unwrap().tolerance, 1e-6);
        o.insert("nope".to_string(), 1.0);
        assert!(matches!(m.with_overrides(&o), Err(ConfigError::UnknownCheck(_))));
    }
}
