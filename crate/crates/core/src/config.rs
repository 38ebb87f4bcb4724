//! Experiment files: JSON with a versioned `schema` field, unknown keys
//! rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::BarrierKind;
use crate::geometry::{BoundaryGraph, GraphSpec};
use crate::modulus::ModulusSpec;
use crate::pucci::{EllipticityPair, SymMatrix};
use crate::solver::{BoundaryFn, BoundaryPiece, Operator, ScalarFn, Stencil};

pub const EXPERIMENT_SCHEMA: &str = "hopflab.experiment/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: &'static str },
    #[error("config has no `{0}` section")]
    Missing(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// The top-level experiment file. Each subcommand reads its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory, overridden by `--out`.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub modulus_table: Option<ModulusTableConfig>,
    #[serde(default)]
    pub regdist_check: Option<RegdistCheckConfig>,
    #[serde(default)]
    pub barrier_check: Option<BarrierCheckConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub growth: Option<GrowthConfig>,
    #[serde(default)]
    pub boundary_modulus: Option<GrowthConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema != EXPERIMENT_SCHEMA {
            return Err(ConfigError::Schema { found: cfg.schema, expected: EXPERIMENT_SCHEMA });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Checks every present section, so nothing runs on a half-valid file.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(c) = &self.modulus_table {
            c.validate()?;
        }
        if let Some(c) = &self.regdist_check {
            c.validate()?;
        }
        if let Some(c) = &self.barrier_check {
            c.validate()?;
        }
        if let Some(c) = &self.solve {
            c.validate()?;
        }
        if let Some(c) = &self.growth {
            c.validate()?;
        }
        if let Some(c) = &self.boundary_modulus {
            c.validate()?;
        }
        if let Some(c) = &self.calibrate {
            c.validate()?;
        }
        Ok(())
    }
}

/// Operator choice in configs, e.g. `{"kind": "pucci_minus", "ellipticity": {"lambda": 1, "Lambda": 2}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    #[default]
    Laplace,
    /// Constant coefficients `Tr(A D²u)`.
    Fixed { a: [[f64; 2]; 2], ellipticity: EllipticityPair },
    PucciMinus { ellipticity: EllipticityPair },
    PucciPlus { ellipticity: EllipticityPair },
}

impl OperatorSpec {
    pub fn build(&self) -> Result<Operator, ConfigError> {
        Ok(match self {
            OperatorSpec::Laplace => Operator::Laplace,
            OperatorSpec::Fixed { a, ellipticity } => {
                if a[0][1] != a[1][0] {
                    return Err(invalid("a", "coefficient matrix must be symmetric"));
                }
                let m = SymMatrix::from_rows(&[a[0].to_vec(), a[1].to_vec()]);
                Operator::Fixed { field: Arc::new(move |_| m.clone()), ellipticity: *ellipticity }
            }
            OperatorSpec::PucciMinus { ellipticity } => Operator::PucciMinus(*ellipticity),
            OperatorSpec::PucciPlus { ellipticity } => Operator::PucciPlus(*ellipticity),
        })
    }
}

/// `g(x) = c + a·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LinearData {
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub a: [f64; 2],
}

impl LinearData {
    pub fn eval(&self, x: &[f64; 2]) -> f64 {
        self.c + self.a[0] * x[0] + self.a[1] * x[1]
    }
}

/// Problem data: `u = g` on the graph, `u = g + amplitude·(x₂ - Γ(x₁))`
/// on the outer arc, and constant right-hand side `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub g: LinearData,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub f: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { g: LinearData::default(), amplitude: 1.0, f: 0.0 }
    }
}

impl DataSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = self.g.c.is_finite() && self.g.a.iter().all(|v| v.is_finite());
        if !finite {
            return Err(invalid("g", "must be finite"));
        }
        if !self.amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite"));
        }
        if !self.f.is_finite() {
            return Err(invalid("f", "must be finite"));
        }
        Ok(())
    }

    pub fn dirichlet(&self, graph: &BoundaryGraph) -> BoundaryFn {
        let (g, amp, graph) = (self.g, self.amplitude, graph.clone());
        Arc::new(move |x, piece| match piece {
            BoundaryPiece::Graph => g.eval(x),
            BoundaryPiece::Arc => g.eval(x) + amp * (x[1] - graph.gamma(&x[..1])).max(0.0),
        })
    }

    pub fn rhs(&self) -> ScalarFn {
        let f = self.f;
        Arc::new(move |_| f)
    }

    /// `g(0) + ∇g(0)·x'`.
    pub fn linear_part(&self, x: &[f64; 2]) -> f64 {
        self.g.c + self.g.a[0] * x[0]
    }

    /// `ω_f(s) = sup ‖f‖_{L²(B_s)} = |f| √π s` for constant `f`.
    pub fn omega_f(&self, s: f64) -> f64 {
        self.f.abs() * std::f64::consts::PI.sqrt() * s
    }

    /// `∫_a^b ω_f(s) ds/s`; `ω_g` vanishes for linear data.
    pub fn forcing_integral(&self, a: f64, b: f64) -> f64 {
        self.f.abs() * std::f64::consts::PI.sqrt() * (b - a)
    }
}

fn check_graph(graph: &GraphSpec, dim: usize, radius: f64) -> Result<(), ConfigError> {
    BoundaryGraph::new(graph, dim, radius).map(|_| ()).map_err(|e| invalid("graph", e.to_string()))
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

/// `modulus-table`: tabulates `ω`, `∫_t^b ω ds/s` and `ω̃` with `ω₂ = ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusTableConfig {
    pub omega: ModulusSpec,
    pub points: Vec<f64>,
    pub b: f64,
    #[serde(default)]
    pub composite: Option<CompositeParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeParams {
    pub a: f64,
    pub c: f64,
    /// Defaults to `ω₁ ≡ 0`.
    #[serde(default)]
    pub omega1: Option<ModulusSpec>,
}

impl ModulusTableConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::modulus::Modulus::from_spec(&self.omega).map_err(|e| invalid("omega", e.to_string()))?;
        if self.points.is_empty() || self.points.iter().any(|&t| !(t > 0.0 && t < self.b)) {
            return Err(invalid("points", format!("need at least one point, all in (0, b = {})", self.b)));
        }
        if let Some(c) = &self.composite {
            positive("a", c.a)?;
            positive("c", c.c)?;
        }
        Ok(())
    }
}

/// `regdist-check`: the sandwich and derivative bounds on random points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegdistCheckConfig {
    pub graph: GraphSpec,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "half")]
    pub working_radius: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "thousand")]
    pub points: usize,
}

fn two() -> usize {
    2
}
fn half() -> f64 {
    0.5
}
fn default_order() -> usize {
    crate::regdist::DEFAULT_ORDER
}
fn thousand() -> usize {
    1000
}

impl RegdistCheckConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(invalid("dim", format!("must be 2 or 3, got {}", self.dim)));
        }
        if !(self.working_radius > 0.0 && self.working_radius <= 0.5) {
            return Err(invalid("working_radius", "must lie in (0, 1/2]"));
        }
        if self.order < 4 {
            return Err(invalid("order", "must be at least 4"));
        }
        if self.points == 0 {
            return Err(invalid("points", "must be positive"));
        }
        check_graph(&self.graph, self.dim, 1.0)
    }
}

/// `barrier-check`: sign of both barriers on random points of `Ω ∩ B_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierCheckConfig {
    pub graph: GraphSpec,
    #[serde(default = "quarter")]
    pub r: f64,
    #[serde(default = "thousand")]
    pub samples: usize,
    /// Smallest distance sampled, as a fraction of `r`.
    #[serde(default = "default_delta")]
    pub delta_min: f64,
    /// Defaults to `Ĉ₀ · sup_{B'_{2r}} |∇Γ|` from the calibration file.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "both_kinds")]
    pub kinds: Vec<BarrierKind>,
}

fn quarter() -> f64 {
    0.25
}
fn default_delta() -> f64 {
    1e-3
}
fn both_kinds() -> Vec<BarrierKind> {
    vec![BarrierKind::Sub, BarrierKind::Super]
}

impl BarrierCheckConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.r > 0.0 && self.r <= 0.25) {
            return Err(invalid("r", "must lie in (0, 1/4]"));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be positive"));
        }
        if !(self.delta_min > 0.0 && self.delta_min < 1.0) {
            return Err(invalid("delta_min", "must lie in (0, 1)"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 0.5) {
                return Err(invalid("epsilon", "must lie in (0, 1/2)"));
            }
        }
        if self.kinds.is_empty() {
            return Err(invalid("kinds", "must not be empty"));
        }
        check_graph(&self.graph, 2, 1.0)
    }
}

/// `solve`: one grid problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub graph: GraphSpec,
    #[serde(default = "unit")]
    pub r: f64,
    pub h: f64,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub stencil: Stencil,
}

fn unit() -> f64 {
    1.0
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("r", self.r)?;
        positive("h", self.h)?;
        if self.h > self.r / 16.0 {
            return Err(invalid("h", format!("must be at most r/16 = {}", self.r / 16.0)));
        }
        self.operator.build()?;
        self.data.validate()?;
        check_graph(&self.graph, 2, self.r)
    }
}

/// `growth` and `boundary-modulus`: the dyadic cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub graph: GraphSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub stencil: Stencil,
    /// The first level solves on `B_{2^{1-k_min}}`.
    #[serde(default = "one_u32")]
    pub k_min: u32,
    pub k_max: u32,
    /// `h_k = 2^{-k} h0`.
    #[serde(default = "default_h0")]
    pub h0: f64,
    /// Modulus used in the envelopes; defaults to the graph's own.
    #[serde(default)]
    pub omega: Option<ModulusSpec>,
    /// Envelopes compare every level against this one; defaults to `k_min + 1`.
    #[serde(default)]
    pub ref_level: Option<u32>,
}

fn one_u32() -> u32 {
    1
}
fn default_h0() -> f64 {
    1.0 / 64.0
}

impl GrowthConfig {
    pub fn top_radius(&self) -> f64 {
        2f64.powi(1 - self.k_min as i32)
    }

    pub fn ref_level(&self) -> u32 {
        self.ref_level.unwrap_or(self.k_min + 1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_max < self.k_min + 2 {
            return Err(invalid("k_max", format!("must be at least k_min + 2 = {}", self.k_min + 2)));
        }
        if self.k_max > 30 {
            return Err(invalid("k_max", "must be at most 30"));
        }
        if !(self.h0 > 0.0 && self.h0 <= 0.125) {
            return Err(invalid("h0", "must lie in (0, 1/8]"));
        }
        let rl = self.ref_level();
        if rl < self.k_min || rl >= self.k_max {
            return Err(invalid("ref_level", format!("must lie in [k_min, k_max) = [{}, {})", self.k_min, self.k_max)));
        }
        self.operator.build()?;
        self.data.validate()?;
        if let Some(w) = &self.omega {
            crate::modulus::Modulus::from_spec(w).map_err(|e| invalid("omega", e.to_string()))?;
        }
        check_graph(&self.graph, 2, self.top_radius())
    }
}

/// `calibrate`: sizes of the calibration sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_ellipticity")]
    pub ellipticity: EllipticityPair,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default = "default_regdist_points")]
    pub regdist_points: usize,
    #[serde(default = "default_regdist_points_3d")]
    pub regdist_points_3d: usize,
    #[serde(default = "thousand")]
    pub barrier_samples: usize,
    #[serde(default = "default_special_h")]
    pub special_h: f64,
}

fn default_ellipticity() -> EllipticityPair {
    EllipticityPair::new(1.0, 2.0).expect("valid pair")
}
fn default_safety() -> f64 {
    2.0
}
fn default_regdist_points() -> usize {
    1000
}
fn default_regdist_points_3d() -> usize {
    200
}
fn default_special_h() -> f64 {
    1.0 / 128.0
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            ellipticity: default_ellipticity(),
            safety_factor: default_safety(),
            regdist_points: default_regdist_points(),
            regdist_points_3d: default_regdist_points_3d(),
            barrier_samples: thousand(),
            special_h: default_special_h(),
        }
    }
}

impl CalibrateConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.safety_factor < 1.0 || !self.safety_factor.is_finite() {
            return Err(invalid("safety_factor", "must be at least 1"));
        }
        if self.regdist_points == 0 || self.barrier_samples == 0 {
            return Err(invalid("regdist_points", "sweep sizes must be positive"));
        }
        if !(self.special_h > 0.0 && self.special_h <= 1.0 / 64.0) {
            return Err(invalid("special_h", "must lie in (0, 1/64]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"schema": "hopflab.experiment/1", "grwoth": {}}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(ConfigError::Json(_))));
    }

    #[test]
    fn negative_lambda_names_the_field() {
        let text = r#"{"schema": "hopflab.experiment/1", "solve": {"graph": {"family": "zero"}, "h": 0.01,
            "operator": {"kind": "pucci_minus", "ellipticity": {"lambda": -1, "Lambda": 2}}}}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("lambda"), "{err}");
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let err = ExperimentConfig::from_json(r#"{"schema": "hopflab.experiment/0"}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }));
    }

    #[test]
    fn growth_defaults() {
        let text = r#"{"schema": "hopflab.experiment/1", "growth": {"graph": {"family": "zero"}, "k_max": 5}}"#;
        let g = ExperimentConfig::from_json(text).unwrap().growth.unwrap();
        assert_eq!(g.k_min, 1);
        assert_eq!(g.ref_level(), 2);
        assert_eq!(g.top_radius(), 1.0);
        assert_eq!(g.data, DataSpec::default());
    }
}
