//! Run configuration: the JSON schema, defaults, validation and the mapping
//! from a validated config to a solver problem.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use selfmix_core::scenario::{gaussian_blob, laminar_dt, laminar_model, two_stream};
use selfmix_core::{
    kappa_from_scales, AlphaField, Boundary, BoundaryModulation, DtPolicy, Integrator, MixerParams, Model,
    SolverConfig, SpatialGrid, VelocityGrid,
};

use crate::output::read_snapshot;

/// A config problem, located by the dotted key path it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<selfmix_core::Error> for ConfigError {
    fn from(e: selfmix_core::Error) -> Self {
        match e {
            selfmix_core::Error::InvalidParameter { name, reason } => Self::new(name, reason),
            other => Self::new("", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub velocity: VelocityConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub solver: SolverSection,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub portions: PortionsConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellCount {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Periodic,
    Outflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub nx: CellCount,
    /// Defaults to `1 / nx` along the first axis.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryName,
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
}

fn default_boundary() -> BoundaryName {
    BoundaryName::Periodic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityConfig {
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub nodes_per_axis: usize,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            nodes_per_axis: default_nodes(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPreset {
    #[default]
    Zero,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(rename = "D", default = "one")]
    pub saturation: f64,
    #[serde(rename = "E", default)]
    pub diffusion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default)]
    pub b_preset: BoundaryPreset,
    #[serde(default = "one")]
    pub zero_angle: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            saturation: 1.0,
            diffusion: 0.0,
            kappa: None,
            delta: None,
            epsilon: None,
            g: None,
            b_preset: BoundaryPreset::Zero,
            zero_angle: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    #[default]
    Euler,
    Rk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicyConfig {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default)]
    pub dt_policy: DtPolicyConfig,
    #[serde(default = "half")]
    pub cfl_advection: f64,
    #[serde(default = "quarter")]
    pub cfl_diffusion: f64,
    #[serde(default = "half")]
    pub cfl_mixing: f64,
}

fn half() -> f64 {
    0.5
}

fn quarter() -> f64 {
    0.25
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            integrator: IntegratorName::Euler,
            t_end: 1.0,
            dt_policy: DtPolicyConfig::Auto,
            cfl_advection: 0.5,
            cfl_diffusion: 0.25,
            cfl_mixing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TwoStream,
    GaussianBlob,
    LaminarLimit,
    Custom,
}

/// Either a bare preset name or an object with `kind` and options.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Spatial width of the blob (`gaussian_blob`, `laminar_limit`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Node speed of `laminar_limit`; defaults to half the velocity radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    /// Initial snapshot for `custom`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioObject {
    kind: ScenarioKind,
    #[serde(default)]
    width: Option<f64>,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    file: Option<PathBuf>,
}

impl<'de> Deserialize<'de> for ScenarioConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScenarioVisitor;

        impl<'de> Visitor<'de> for ScenarioVisitor {
            type Value = ScenarioConfig;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a preset name or an object with `kind`")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                let kind = ScenarioKind::deserialize(de::value::StrDeserializer::<E>::new(v))?;
                Ok(ScenarioConfig {
                    kind,
                    width: None,
                    speed: None,
                    file: None,
                })
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                let o = ScenarioObject::deserialize(de::value::MapAccessDeserializer::new(map))?;
                Ok(ScenarioConfig {
                    kind: o.kind,
                    width: o.width,
                    speed: o.speed,
                    file: o.file,
                })
            }
        }

        deserializer.deserialize_any(ScenarioVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Snapshot cadence; the first and last states are always written.
    #[serde(default = "default_every")]
    pub every_n_steps: u64,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_every() -> u64 {
    10
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            every_n_steps: default_every(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortionsConfig {
    #[serde(default = "default_threshold")]
    pub support_threshold: f64,
}

fn default_threshold() -> f64 {
    selfmix_core::portions::DEFAULT_SUPPORT_THRESHOLD
}

impl Default for PortionsConfig {
    fn default() -> Self {
        Self {
            support_threshold: default_threshold(),
        }
    }
}

/// Reads and validates a config file. Relative scenario files are resolved
/// against the config's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config_str(&text)?;
    if let Some(file) = &config.scenario.file {
        if file.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            config.scenario.file = Some(base.join(file));
        }
    }
    Ok(config)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let dim = self.grid.dim;
        if !(1..=2).contains(&dim) {
            return Err(ConfigError::new("grid.dim", format!("must be 1 or 2, got {dim}")));
        }
        let cells = self.cells_per_axis()?;
        if let Some(n) = cells.iter().find(|n| **n < 4) {
            return Err(ConfigError::new("grid.nx", format!("need at least 4 cells per axis, got {n}")));
        }
        if let Some(h) = self.grid.h {
            positive("grid.h", h)?;
        }
        if let Some(o) = &self.grid.origin {
            if o.len() != dim {
                return Err(ConfigError::new("grid.origin", format!("expected {dim} entries")));
            }
        }
        positive("velocity.radius", self.velocity.radius)?;
        if self.velocity.nodes_per_axis < 2 {
            return Err(ConfigError::new("velocity.nodes_per_axis", "need at least 2 nodes per axis"));
        }

        let p = &self.params;
        positive("params.D", p.saturation)?;
        if !(p.diffusion.is_finite() && p.diffusion >= 0.0) {
            return Err(ConfigError::new("params.E", format!("must be non-negative, got {}", p.diffusion)));
        }
        if p.kappa.is_some() && (p.delta.is_some() || p.epsilon.is_some()) {
            return Err(ConfigError::new(
                "params.kappa",
                "`kappa` and (`delta`, `epsilon`) are mutually exclusive",
            ));
        }
        if let Some(k) = p.kappa {
            if !(k.is_finite() && k >= 0.0) {
                return Err(ConfigError::new("params.kappa", format!("must be non-negative, got {k}")));
            }
        }
        match (p.delta, p.epsilon) {
            (Some(d), Some(e)) => {
                positive("params.delta", d)?;
                positive("params.epsilon", e)?;
            }
            (Some(_), None) => return Err(ConfigError::new("params.epsilon", "required together with `delta`")),
            (None, Some(_)) => return Err(ConfigError::new("params.delta", "required together with `epsilon`")),
            (None, None) => {}
        }
        if let Some(g) = &p.g {
            if g.len() != dim || g.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::new("params.g", format!("expected {dim} finite components")));
            }
        }
        if !(0.0..=1.0).contains(&p.zero_angle) {
            return Err(ConfigError::new("params.zero_angle", "must lie in [0, 1]"));
        }

        let s = &self.solver;
        for (path, v) in [
            ("solver.cfl_advection", s.cfl_advection),
            ("solver.cfl_diffusion", s.cfl_diffusion),
            ("solver.cfl_mixing", s.cfl_mixing),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::new(path, format!("must lie in (0, 1], got {v}")));
            }
        }
        if !(s.t_end.is_finite() && s.t_end >= 0.0) {
            return Err(ConfigError::new("solver.t_end", format!("must be non-negative, got {}", s.t_end)));
        }
        if let DtPolicyConfig::Fixed(dt) = s.dt_policy {
            positive("solver.dt_policy.fixed", dt)?;
        }

        let sc = &self.scenario;
        if let Some(w) = sc.width {
            positive("scenario.width", w)?;
        }
        if let Some(u) = sc.speed {
            positive("scenario.speed", u)?;
        }
        if sc.kind == ScenarioKind::Custom && sc.file.is_none() {
            return Err(ConfigError::new("scenario.file", "required for the custom scenario"));
        }
        if sc.kind != ScenarioKind::Custom && sc.file.is_some() {
            return Err(ConfigError::new("scenario.file", "only used by the custom scenario"));
        }

        let t = self.portions.support_threshold;
        if !(t.is_finite() && (0.0..1.0).contains(&t)) {
            return Err(ConfigError::new("portions.support_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn cells_per_axis(&self) -> Result<Vec<usize>, ConfigError> {
        match &self.grid.nx {
            CellCount::Uniform(n) => Ok(vec![*n; self.grid.dim]),
            CellCount::PerAxis(v) if v.len() == self.grid.dim => Ok(v.clone()),
            CellCount::PerAxis(v) => Err(ConfigError::new(
                "grid.nx",
                format!("expected {} entries, got {}", self.grid.dim, v.len()),
            )),
        }
    }

    pub fn kappa(&self) -> Result<f64, ConfigError> {
        let p = &self.params;
        match (p.kappa, p.delta, p.epsilon) {
            (Some(k), _, _) => Ok(k),
            (None, Some(d), Some(e)) => Ok(kappa_from_scales(d, e)?),
            _ => Ok(1.0),
        }
    }

    pub fn is_laminar(&self) -> bool {
        self.scenario.kind == ScenarioKind::LaminarLimit
    }
}

/// Everything a command needs to run: the model, the solver settings and
/// the initial field.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub solver: SolverConfig,
    pub initial: AlphaField,
    pub laminar: bool,
}

const DEFAULT_BLOB_WIDTH: f64 = 0.1;

/// Model and solver settings described by `config`. The laminar preset
/// replaces the velocity grid, switches mixing and diffusion off and fixes
/// the step to one cell per step.
pub fn build_model(config: &RunConfig) -> Result<(Model, SolverConfig), ConfigError> {
    let dim = config.grid.dim;
    let cells = config.cells_per_axis()?;
    let h = config.grid.h.unwrap_or(1.0 / cells[0] as f64);
    let origin = config.grid.origin.clone().unwrap_or_else(|| vec![0.0; dim]);
    let boundary = match config.grid.boundary {
        BoundaryName::Periodic => Boundary::Periodic,
        BoundaryName::Outflow => Boundary::Outflow,
    };
    let spatial = SpatialGrid::new(dim, &cells, h, &origin, boundary)?;
    let s = &config.solver;
    let mut solver = SolverConfig {
        dt_policy: match s.dt_policy {
            DtPolicyConfig::Auto => DtPolicy::AutoCfl,
            DtPolicyConfig::Fixed(dt) => DtPolicy::Fixed(dt),
        },
        cfl_advection: s.cfl_advection,
        cfl_diffusion: s.cfl_diffusion,
        cfl_mixing: s.cfl_mixing,
        t_end: s.t_end,
        integrator: match s.integrator {
            IntegratorName::Euler => Integrator::Euler,
            IntegratorName::Rk2 => Integrator::Rk2,
        },
    };

    if config.is_laminar() {
        let speed = config.scenario.speed.unwrap_or(0.5 * config.velocity.radius);
        let model = laminar_model(spatial, speed)?;
        solver.dt_policy = DtPolicy::Fixed(laminar_dt(&model));
        return Ok((model, solver));
    }

    let velocity = VelocityGrid::build(dim, config.velocity.radius, config.velocity.nodes_per_axis)?
        .with_kappa(config.kappa()?)?;
    let p = &config.params;
    let mut params = MixerParams::new(p.saturation, p.diffusion, dim)?;
    if let Some(g) = &p.g {
        params = params.with_gravity(g.clone())?;
    }
    params.zero_angle = p.zero_angle;
    params.boundary = match p.b_preset {
        BoundaryPreset::Zero => BoundaryModulation::Off,
        BoundaryPreset::Unit => BoundaryModulation::Unit,
    };
    Ok((Model::new(spatial, velocity, params)?, solver))
}

impl Problem {
    pub fn build(config: &RunConfig, seed: u64) -> Result<Self, ConfigError> {
        let (model, solver) = build_model(config)?;
        let width = config.scenario.width.unwrap_or(DEFAULT_BLOB_WIDTH);
        let initial = match config.scenario.kind {
            ScenarioKind::TwoStream => two_stream(&model, seed),
            ScenarioKind::GaussianBlob | ScenarioKind::LaminarLimit => gaussian_blob(&model, width),
            ScenarioKind::Custom => {
                let file = config.scenario.file.as_ref().expect("validated");
                let snap = read_snapshot(file).map_err(|e| ConfigError::new("scenario.file", format!("{e:#}")))?;
                if snap.dim != model.spatial.dim() {
                    return Err(ConfigError::new(
                        "scenario.file",
                        format!(
                            "snapshot has {} coordinate columns, grid has dimension {}",
                            snap.dim,
                            model.spatial.dim()
                        ),
                    ));
                }
                AlphaField::from_values(model.spatial.n_cells(), model.velocity.len(), snap.values)
                    .map_err(|e| ConfigError::new("scenario.file", e.to_string()))?
            }
        };
        Ok(Self {
            model,
            solver,
            initial,
            laminar: config.is_laminar(),
        })
    }
}
