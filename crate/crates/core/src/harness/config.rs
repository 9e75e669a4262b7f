use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::MAX_ICOSPHERE_LEVEL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MeshConfig {
    Icosphere { level: usize },
    Torus { n_u: usize, n_v: usize },
    Off { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum VelocityConfig {
    Zero,
    Radial { rate: f64 },
    Rotation { axis: [f64; 3], omega: f64 },
    Expression { components: [String; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub epsilon: f64,
    /// Decreasing ε values for the convergence check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
}

/// Initial state and source as expressions over `(t, x, y, z)`. Exactly one
/// of `u0` and `e0` is given; a temperature is turned into an enthalpy by
/// `e0 = u0` where `u0 ≤ 0` and `e0 = u0 + 1` where `u0 > 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<String>,
    #[serde(default = "zero_expr")]
    pub f: String,
    /// Exact temperature, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_u: Option<String>,
}

fn zero_expr() -> String {
    "0".into()
}

/// Second data set for two-solution checks. Missing entries fall back to
/// the primary data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Also solve one refinement level up (mesh level + 1, twice the steps,
    /// half ε) and require the contraction violation to shrink.
    #[serde(default)]
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughConfig {
    /// Clamp levels `n` of the bounded approximations `max(−n, min(n, ·))`.
    pub levels: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSchemeConfig {
    Newton,
    FrozenFixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_inner")]
    pub inner: InnerSchemeConfig,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
}

fn default_inner() -> InnerSchemeConfig {
    InnerSchemeConfig::Newton
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_max_inner() -> usize {
    100
}
fn default_linear_tol() -> f64 {
    1e-11
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner: default_inner(),
            newton_tol: default_newton_tol(),
            max_inner: default_max_inner(),
            linear_tol: default_linear_tol(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Conservation,
    Graph,
    Linfty,
    Energy,
    Contraction,
    Dual,
    Eps,
    TimeTranslate,
    Interface,
    Exact,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Conservation,
        Check::Graph,
        Check::Linfty,
        Check::Energy,
        Check::Contraction,
        Check::Dual,
        Check::Eps,
        Check::TimeTranslate,
        Check::Interface,
        Check::Exact,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "default_checks")]
    pub run: Vec<Check>,
    /// Bound on the final-time `L²` error against `data.exact_u`.
    #[serde(default = "default_exact_tol")]
    pub exact_final_tol: f64,
    /// Shifts for the time-translate check, in units of τ.
    #[serde(default = "default_shifts")]
    pub time_shifts: Vec<usize>,
    /// Random terminal data sets for the dual check.
    #[serde(default = "default_dual_samples")]
    pub dual_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_checks() -> Vec<Check> {
    vec![Check::Conservation, Check::Graph, Check::Linfty]
}
fn default_exact_tol() -> f64 {
    5e-3
}
fn default_shifts() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn default_dual_samples() -> usize {
    20
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            run: default_checks(),
            exact_final_tol: default_exact_tol(),
            time_shifts: default_shifts(),
            dual_samples: default_dual_samples(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Scenario description: geometry, data, solver settings, checks, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mesh: MeshConfig,
    #[serde(default = "default_velocity")]
    pub velocity: VelocityConfig,
    pub time: TimeConfig,
    pub regularization: RegularizationConfig,
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rough: Option<RoughConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_velocity() -> VelocityConfig {
    VelocityConfig::Zero
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn check_expr(field: &str, src: &str) -> Result<()> {
    Expr::parse(src).map(|_| ()).map_err(|e| config_err(field, e.to_string()))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses and validates a TOML document. Syntax and type errors carry
    /// the 1-based line; range errors name the offending field.
    pub fn parse(src: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.mesh {
            MeshConfig::Icosphere { level } if *level > MAX_ICOSPHERE_LEVEL => {
                return Err(config_err("mesh.level", format!("at most {MAX_ICOSPHERE_LEVEL}, got {level}")));
            }
            MeshConfig::Torus { n_u, n_v } if *n_u < 3 || *n_v < 3 => {
                return Err(config_err("mesh.n_u", "torus grid needs at least 3 x 3 cells"));
            }
            _ => {}
        }
        match &self.velocity {
            VelocityConfig::Radial { rate } if !rate.is_finite() => {
                return Err(config_err("velocity.rate", "must be finite"));
            }
            VelocityConfig::Rotation { axis, omega } => {
                if !omega.is_finite() || axis.iter().any(|a| !a.is_finite()) || axis.iter().all(|a| *a == 0.0) {
                    return Err(config_err("velocity.axis", "need a finite nonzero axis and finite omega"));
                }
            }
            VelocityConfig::Expression { components } => {
                for c in components {
                    check_expr("velocity.components", c)?;
                }
            }
            _ => {}
        }
        positive("time.t_final", self.time.t_final)?;
        if self.time.steps == 0 {
            return Err(config_err("time.steps", "must be at least 1"));
        }
        positive("regularization.epsilon", self.regularization.epsilon)?;
        for &e in &self.regularization.sweep {
            positive("regularization.sweep", e)?;
        }
        if self.regularization.sweep.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(config_err("regularization.sweep", "values must be strictly decreasing"));
        }
        match (&self.data.u0, &self.data.e0) {
            (Some(u0), None) => check_expr("data.u0", u0)?,
            (None, Some(e0)) => check_expr("data.e0", e0)?,
            _ => return Err(config_err("data", "give exactly one of u0 and e0")),
        }
        check_expr("data.f", &self.data.f)?;
        if let Some(x) = &self.data.exact_u {
            check_expr("data.exact_u", x)?;
        }
        if let Some(p) = &self.pair {
            if p.u0.is_some() && p.e0.is_some() {
                return Err(config_err("pair", "give at most one of u0 and e0"));
            }
            for (field, x) in [("pair.u0", &p.u0), ("pair.e0", &p.e0), ("pair.f", &p.f)] {
                if let Some(x) = x {
                    check_expr(field, x)?;
                }
            }
        }
        if let Some(r) = &self.rough {
            if r.levels.len() < 2 {
                return Err(config_err("rough.levels", "need at least two clamp levels"));
            }
            for &l in &r.levels {
                positive("rough.levels", l)?;
            }
            if r.levels.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(config_err("rough.levels", "values must be strictly increasing"));
            }
        }
        positive("solver.newton_tol", self.solver.newton_tol)?;
        positive("solver.linear_tol", self.solver.linear_tol)?;
        if self.solver.max_inner == 0 {
            return Err(config_err("solver.max_inner", "must be at least 1"));
        }
        positive("checks.exact_final_tol", self.checks.exact_final_tol)?;
        if self.checks.time_shifts.contains(&0) {
            return Err(config_err("checks.time_shifts", "shifts must be at least one step"));
        }
        let wants = |c: Check| self.checks.run.contains(&c);
        if wants(Check::Contraction) && self.pair.is_none() {
            return Err(config_err("checks.run", "contraction needs a [pair] section"));
        }
        if wants(Check::Exact) && self.data.exact_u.is_none() {
            return Err(config_err("checks.run", "exact needs data.exact_u"));
        }
        if wants(Check::Eps) && self.regularization.sweep.len() < 3 {
            return Err(config_err("regularization.sweep", "eps check needs at least three values"));
        }
        if wants(Check::TimeTranslate) && self.checks.time_shifts.len() < 2 {
            return Err(config_err("checks.time_shifts", "need at least two shifts"));
        }
        Ok(())
    }
}

const ONE_PHASE: &str = r#"
name = "one_phase_sphere"
mesh = { kind = "icosphere", level = 4 }
velocity = { kind = "zero" }
time = { t_final = 0.5, steps = 64 }
regularization = { epsilon = 0.05, sweep = [0.05, 0.025, 0.0125] }
data = { u0 = "2 + z", f = "0", exact_u = "2 + exp(-2*t)*z" }
checks = { run = ["conservation", "graph", "linfty", "energy", "eps", "time_translate", "interface", "exact"] }
"#;

const FREEZING: &str = r#"
name = "freezing_sphere"
mesh = { kind = "icosphere", level = 3 }
velocity = { kind = "zero" }
time = { t_final = 0.5, steps = 32 }
regularization = { epsilon = 0.05, sweep = [0.2, 0.1, 0.05, 0.025] }
data = { u0 = "-0.5 + z", f = "0" }
checks = { run = ["conservation", "graph", "linfty", "energy", "eps", "time_translate", "interface"] }
"#;

const CONTRACTION_PAIR: &str = r#"
name = "contraction_pair"
mesh = { kind = "icosphere", level = 3 }
velocity = { kind = "zero" }
time = { t_final = 0.5, steps = 32 }
regularization = { epsilon = 0.05 }
data = { u0 = "-0.5 + z", f = "0" }
pair = { f = "0.5*(1 + sin(6*t))*x", refine = true }
checks = { run = ["conservation", "graph", "linfty", "contraction", "dual"] }
"#;

const EXPANDING: &str = r#"
name = "expanding_sphere"
mesh = { kind = "icosphere", level = 3 }
velocity = { kind = "radial", rate = 1.0 }
time = { t_final = 0.5, steps = 32 }
regularization = { epsilon = 0.05 }
data = { u0 = "-0.5 + z", f = "0" }
checks = { run = ["conservation", "graph", "linfty", "interface"] }
"#;

const ROUGH: &str = r#"
name = "rough_data"
mesh = { kind = "icosphere", level = 3 }
velocity = { kind = "zero" }
time = { t_final = 0.25, steps = 32 }
regularization = { epsilon = 0.05 }
data = { e0 = "step(z - 0.3)*(0.6/(abs(z - 0.3) + 0.05) + 1) - 0.5", f = "12*exp(-40*((x - 1)^2 + y^2 + z^2))" }
rough = { levels = [1, 2, 4, 8] }
checks = { run = ["conservation", "graph", "linfty"] }
"#;

const PRESETS: [(&str, &str, &str); 5] = [
    ("one_phase_sphere", ONE_PHASE, "stationary sphere, liquid everywhere, exact solution 2 + exp(-2t) z"),
    ("freezing_sphere", FREEZING, "stationary sphere, interface at z = 0.5 from u0 = -0.5 + z"),
    ("contraction_pair", CONTRACTION_PAIR, "freezing data against a time-varying source perturbation"),
    ("expanding_sphere", EXPANDING, "freezing data on a sphere moving with w = x"),
    ("rough_data", ROUGH, "unbounded jump enthalpy and a source spike for the clamp study"),
];

/// `(name, description)` of every built-in scenario.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|(n, _, d)| (*n, *d)).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, src, _) = PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| config_err("preset", format!("unknown preset `{name}`")))?;
    ScenarioConfig::parse(src)
}
