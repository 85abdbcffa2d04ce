//! Experiment configuration: TOML schema, validation, and assembly of
//! penalized problems from declarative descriptions.

use crate::domain::{
    DecayClass, Mesh, PenalizationMode, PotentialSpec, RegionShape, RegionSpec,
};
use crate::energy::PenalizedProblem;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub dimension: usize,
    pub p: f64,
    /// Named built-in potential; mutually exclusive with `expression`.
    #[serde(default)]
    pub potential: Option<String>,
    /// Expression in `x`, `y`, `z`, `r`.
    #[serde(default)]
    pub expression: Option<String>,
    pub decay_class: DecayClass,
    pub region: RegionBlock,
}

// no deny_unknown_fields here: it cannot coexist with the flattened shape
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionBlock {
    #[serde(flatten)]
    pub shape: RegionShape,
    pub anchor: Vec<f64>,
    pub rho: f64,
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta_pen: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub penalization: PenalizationMode,
}

fn default_beta() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub half_width: f64,
    pub points_per_axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Ground,
    Pinned,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum SeedMode {
    Cold,
    #[default]
    Warm,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub epsilons: Vec<f64>,
    pub mode: SolveMode,
    #[serde(default)]
    pub pin_target: Option<Vec<f64>>,
    /// Concentration center of cold seeds; defaults to the pin target or
    /// the region anchor.
    #[serde(default)]
    pub seed_center: Option<Vec<f64>>,
    #[serde(default)]
    pub seed_mode: SeedMode,
    /// Evaluate the test-path levels per sweep entry.
    #[serde(default)]
    pub path_levels: bool,
    /// Override the cutoff plateau/support radii of seeds (in units of the
    /// region circumradius).
    #[serde(default = "default_plateau_factor")]
    pub seed_plateau_factor: f64,
    #[serde(default = "default_support_factor")]
    pub seed_support_factor: f64,
}

fn default_plateau_factor() -> f64 {
    1.55
}
fn default_support_factor() -> f64 {
    2.7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    #[serde(default = "default_tol_grad")]
    pub tol_grad: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_nehari_tol")]
    pub nehari_tol: f64,
    #[serde(default = "default_shoot_tol")]
    pub shoot_tol: f64,
}

fn default_tol_grad() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    40_000
}
fn default_nehari_tol() -> f64 {
    1e-8
}
fn default_shoot_tol() -> f64 {
    1e-13
}

impl Default for ToleranceBlock {
    fn default() -> Self {
        Self {
            tol_grad: default_tol_grad(),
            max_iter: default_max_iter(),
            nehari_tol: default_nehari_tol(),
            shoot_tol: default_shoot_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default)]
    pub field_dumps: bool,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: "out".into(), formats: default_formats(), field_dumps: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Identifier used in reports and file names.
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemBlock,
    pub mesh: MeshBlock,
    pub sweep: SweepBlock,
    #[serde(default)]
    pub tolerances: ToleranceBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = toml::from_str(&text)?;
        if config.name.is_none() {
            config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if !(1..=3).contains(&p.dimension) {
            return Err(ConfigError::Invalid(format!("dimension {} not in 1..=3", p.dimension)));
        }
        match (&p.potential, &p.expression) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give either a built-in potential name or an expression, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid("no potential given".into()));
            }
            _ => {}
        }
        // resolve once so unknown names fail at load time
        self.build_potential()?;
        if self.sweep.epsilons.is_empty() {
            return Err(ConfigError::Invalid("epsilon list is empty".into()));
        }
        if self.sweep.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(ConfigError::Invalid("epsilons must be positive".into()));
        }
        if self.sweep.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Invalid("epsilons must decrease strictly".into()));
        }
        if self.sweep.mode == SolveMode::Pinned && self.sweep.pin_target.is_none() {
            return Err(ConfigError::Invalid("pinned mode requires a pin_target".into()));
        }
        if let Some(t) = &self.sweep.pin_target {
            if t.len() != p.dimension {
                return Err(ConfigError::Invalid(format!(
                    "pin_target has {} coordinates for dimension {}",
                    t.len(),
                    p.dimension
                )));
            }
        }
        let region = self.region_spec();
        region
            .validate_parameters()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Mesh::new(p.dimension, self.mesh.half_width, self.mesh.points_per_axis)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        // the region must sit strictly inside the box with margin >= L/4,
        // sampled on a coarse probe mesh
        let probe = Mesh::new(p.dimension, self.mesh.half_width, 33)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let potential = self.build_potential()?;
        let circ = region.circumradius(&potential, &probe);
        let margin = self.mesh.half_width - circ;
        if margin < self.mesh.half_width / 4.0 {
            return Err(ConfigError::Invalid(format!(
                "region circumradius {circ:.3} leaves margin {margin:.3} < L/4 to the box boundary"
            )));
        }
        Ok(())
    }

    pub fn build_potential(&self) -> Result<PotentialSpec, ConfigError> {
        let p = &self.problem;
        let spec = if let Some(name) = &p.potential {
            let mut s = PotentialSpec::builtin(name, p.dimension)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            s.decay_class = p.decay_class;
            s
        } else {
            PotentialSpec::from_expression(
                p.expression.as_deref().unwrap(),
                p.dimension,
                p.decay_class,
            )
            .map_err(|e| ConfigError::Invalid(e.to_string()))?
        };
        Ok(spec)
    }

    pub fn region_spec(&self) -> RegionSpec {
        let r = &self.problem.region;
        RegionSpec {
            shape: r.shape.clone(),
            anchor: r.anchor.clone(),
            rho: r.rho,
            rho0: r.rho0.unwrap_or(r.rho / 2.0),
            beta_pen: r.beta_pen,
            mu: r.mu,
            mode: r.penalization,
        }
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh>, ConfigError> {
        Ok(Arc::new(
            Mesh::new(self.problem.dimension, self.mesh.half_width, self.mesh.points_per_axis)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        ))
    }

    /// Assemble the penalized problem at one value of `eps`.
    pub fn build_problem(&self, eps: f64) -> Result<PenalizedProblem, ConfigError> {
        let mesh = self.build_mesh()?;
        let potential = self.build_potential()?;
        let region = self.region_spec();
        PenalizedProblem::new(mesh, potential, region, self.problem.p, eps)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OK: &str = r#"
name = "demo"
[problem]
dimension = 1
p = 3.0
potential = "inverse_poly4"
decay_class = "quadratic_slow"
[problem.region]
kind = "level_set"
threshold = 0.8
anchor = [0.0]
rho = 0.15
penalization = "low_dim"
[mesh]
half_width = 6.0
points_per_axis = 601
[sweep]
epsilons = [0.2, 0.1]
mode = "pinned"
pin_target = [0.0]
"#;

    #[test]
    fn round_trips_and_builds() {
        let config = ExperimentConfig::from_str_validated(OK).unwrap();
        assert_eq!(config.label(), "demo");
        assert_eq!(config.region_spec().rho0, 0.075, "rho0 defaults to rho/2");
        let problem = config.build_problem(0.1).unwrap();
        assert_eq!(problem.mesh.dim, 1);
    }

    #[test]
    fn empty_epsilons_rejected() {
        let bad = OK.replace("epsilons = [0.2, 0.1]", "epsilons = []");
        assert!(matches!(
            ExperimentConfig::from_str_validated(&bad),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn nondecreasing_epsilons_rejected() {
        let bad = OK.replace("epsilons = [0.2, 0.1]", "epsilons = [0.1, 0.2]");
        assert!(ExperimentConfig::from_str_validated(&bad).is_err());
    }

    #[test]
    fn pinned_without_target_rejected() {
        let bad = OK.replace("pin_target = [0.0]\n", "");
        assert!(ExperimentConfig::from_str_validated(&bad).is_err());
    }

    #[test]
    fn unknown_builtin_rejected() {
        let bad = OK.replace("inverse_poly4", "mystery_potential");
        assert!(ExperimentConfig::from_str_validated(&bad).is_err());
    }

    #[test]
    fn expression_potential_accepted() {
        let expr = OK
            .replace("potential = \"inverse_poly4\"", "expression = \"1/(1 + x^4)\"");
        let config = ExperimentConfig::from_str_validated(&expr).unwrap();
        let v = config.build_potential().unwrap();
        assert!((v.eval(&[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-12);
    }
}
