//! Scenario files: TOML with a fixed schema, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use agestruct::controller::{ControllerGains, InputLaw};
use agestruct::grid::DEFAULT_AGE_NODES;
use agestruct::model::{calibrate_birth_modulus, compatible_linear_exponential, solve_equilibrium};
use agestruct::trajectory::{make_constant, make_periodic, make_ramp, make_transition, Trajectory};
use agestruct::{AgeGrid, Equilibrium, GridFunction, InputBounds, ModelParams, Profile};

use crate::error::{Context, Result, ScenarioError};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub routes: Routes,
    pub model: ModelBlock,
    pub trajectory: TrajectoryBlock,
    pub controller: ControllerBlock,
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub outputs: OutputsBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Routes {
    Galerkin,
    Oracle,
    #[default]
    Both,
}

impl Routes {
    pub fn galerkin(self) -> bool {
        matches!(self, Routes::Galerkin | Routes::Both)
    }

    pub fn oracle(self) -> bool {
        matches!(self, Routes::Oracle | Routes::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub max_age: f64,
    pub mortality: ProfileSpec,
    pub birth: ProfileSpec,
    #[serde(rename = "yield")]
    pub output_weight: ProfileSpec,
    pub d_min: f64,
    pub d_max: f64,
    /// Rescales the birth modulus so that the equilibrium dilution hits
    /// this value.
    #[serde(default)]
    pub calibrate_d_star: Option<f64>,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant(f64),
    Quadratic(f64),
    LinearExponential { slope: f64, rate: f64, scale: f64 },
    Table(Vec<f64>),
}

impl ProfileSpec {
    pub fn to_profile(&self) -> Profile {
        match self {
            ProfileSpec::Constant(c) => Profile::Constant(*c),
            ProfileSpec::Quadratic(scale) => Profile::QuadraticMotherhood { scale: *scale },
            ProfileSpec::LinearExponential { slope, rate, scale } => Profile::LinearExponential {
                slope: *slope,
                rate: *rate,
                scale: *scale,
            },
            ProfileSpec::Table(v) => Profile::Table(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `c1 a + e^{rate a}` with `c1` from the birth condition, scaled to the
    /// given output.
    CompatibleExponential {
        rate: f64,
        output: f64,
    },
    /// Equilibrium profile scaled to the given output.
    Equilibrium(f64),
    LinearExponential {
        slope: f64,
        rate: f64,
        scale: f64,
    },
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryBlock {
    Constant { value: f64 },
    Ramp { y4: f64, y1: f64 },
    Periodic { y2: f64, y3: f64, omega: f64 },
    Transition { y0: f64, y_delta: f64, t_delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerBlock {
    pub gamma: f64,
    pub l1: f64,
    pub l2: f64,
    pub z0: [f64; 2],
    /// Fixed dilution rate instead of feedback.
    #[serde(default)]
    pub open_loop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    pub basis_size: usize,
    #[serde(default = "default_age_nodes")]
    pub age_nodes: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    pub horizon: f64,
    /// Repeat the oracle run at half the age and time step to estimate
    /// the simulation error of the Lyapunov functional.
    #[serde(default = "default_true")]
    pub refinement_check: bool,
}

fn default_age_nodes() -> usize {
    DEFAULT_AGE_NODES
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsBlock {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

/// Parsed configuration with the hash of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub hash: String,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    if table.is_empty() {
        return Err(ScenarioError::Parse("configuration is empty".into()));
    }
    let config: ScenarioConfig = serde_path_to_error::deserialize(table).map_err(|e| {
        let key = e.path().to_string();
        ScenarioError::Validation {
            key,
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        hash: config_hash(text),
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.into(),
        source,
    })?;
    parse_config(&text)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::validation(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        if n.basis_size < 4 || n.basis_size % 2 != 0 {
            return Err(ScenarioError::validation(
                "numerics.basis_size",
                format!("must be even and at least 4, got {}", n.basis_size),
            ));
        }
        if n.age_nodes < 5 {
            return Err(ScenarioError::validation(
                "numerics.age_nodes",
                "needs at least 5 nodes",
            ));
        }
        positive("numerics.horizon", n.horizon)?;
        positive("model.max_age", self.model.max_age)?;
        let dt = self.time_step();
        positive("numerics.dt", dt)?;
        if agestruct::integrate::step_count(n.horizon, dt).is_none() {
            return Err(ScenarioError::validation(
                "numerics.dt",
                format!("horizon {} is not a whole number of steps {dt}", n.horizon),
            ));
        }
        if self.routes.oracle() && dt > self.grid()?.spacing() * (1.0 + 1e-12) {
            return Err(ScenarioError::validation(
                "numerics.dt",
                format!(
                    "the delay route needs dt <= age spacing {}",
                    self.grid()?.spacing()
                ),
            ));
        }
        if let Some(d) = self.model.calibrate_d_star {
            if !d.is_finite() {
                return Err(ScenarioError::validation(
                    "model.calibrate_d_star",
                    "must be finite",
                ));
            }
        }
        InputBounds::new(self.model.d_min, self.model.d_max).at_key("model.d_min")?;
        self.trajectory()?;
        self.gains()?;
        if let Some(d) = self.controller.open_loop {
            if !d.is_finite() {
                return Err(ScenarioError::validation(
                    "controller.open_loop",
                    "must be finite",
                ));
            }
        }
        for (i, t) in self.outputs.snapshots.iter().enumerate() {
            if !(*t >= 0.0 && *t <= n.horizon) {
                return Err(ScenarioError::validation(
                    &format!("outputs.snapshots[{i}]"),
                    format!("{t} lies outside [0, {}]", n.horizon),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<AgeGrid> {
        AgeGrid::new(self.model.max_age, self.numerics.age_nodes).at_key("numerics.age_nodes")
    }

    pub fn time_step(&self) -> f64 {
        match (
            self.numerics.dt,
            AgeGrid::new(self.model.max_age, self.numerics.age_nodes),
        ) {
            (Some(dt), _) => dt,
            (None, Ok(grid)) => agestruct::delay::default_step(grid),
            (None, Err(_)) => f64::NAN,
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        match self.trajectory {
            TrajectoryBlock::Constant { value } => make_constant(value),
            TrajectoryBlock::Ramp { y4, y1 } => make_ramp(y4, y1),
            TrajectoryBlock::Periodic { y2, y3, omega } => make_periodic(y2, y3, omega),
            TrajectoryBlock::Transition {
                y0,
                y_delta,
                t_delta,
            } => make_transition(y0, y_delta, t_delta),
        }
        .at_key("trajectory")
    }

    pub fn gains(&self) -> Result<ControllerGains> {
        let c = &self.controller;
        ControllerGains::new(c.gamma, c.l1, c.l2, c.z0).at_key("controller")
    }

    pub fn law(&self) -> Result<InputLaw> {
        Ok(match self.controller.open_loop {
            Some(d) => InputLaw::Constant(d),
            None => InputLaw::Feedback(self.gains()?),
        })
    }

    /// Model on `grid`; the birth modulus scale is `birth_scale` if given,
    /// otherwise calibrated as configured.
    pub fn model_on(&self, grid: AgeGrid, birth_scale: Option<f64>) -> Result<(ModelParams, f64)> {
        let m = &self.model;
        let bounds = InputBounds::new(m.d_min, m.d_max).at_key("model.d_min")?;
        let base = ModelParams::new(
            grid,
            &m.mortality.to_profile(),
            &m.birth.to_profile(),
            &m.output_weight.to_profile(),
            bounds,
        )
        .at_key("model")?;
        let scale = match (birth_scale, m.calibrate_d_star) {
            (Some(c), _) => c,
            (None, Some(d)) => {
                calibrate_birth_modulus(&base.k, d, &base).at_key("model.calibrate_d_star")?
            }
            (None, None) => 1.0,
        };
        let params = if scale == 1.0 {
            base
        } else {
            base.with_birth_scaled(scale).at_key("model.birth")?
        };
        Ok((params, scale))
    }

    pub fn equilibrium(&self, params: &ModelParams) -> Result<Equilibrium> {
        solve_equilibrium(params).context("equilibrium")
    }

    pub fn initial_profile(&self, params: &ModelParams, eq: &Equilibrium) -> Result<GridFunction> {
        let grid = params.grid();
        let key = "model.initial";
        match &self.model.initial {
            InitialSpec::CompatibleExponential { rate, output } => {
                compatible_linear_exponential(*rate, *output, params)
                    .at_key(key)?
                    .sample(grid)
                    .at_key(key)
            }
            InitialSpec::Equilibrium(output) => {
                positive(key, *output)?;
                Ok(eq.x_star.scale(*output / eq.x_star.inner(&params.p)))
            }
            InitialSpec::LinearExponential { slope, rate, scale } => Profile::LinearExponential {
                slope: *slope,
                rate: *rate,
                scale: *scale,
            }
            .sample(grid)
            .at_key(key),
            InitialSpec::Table(values) => GridFunction::from_table(grid, values).at_key(key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
max_age = 2.0
mortality = { constant = 0.1 }
birth = { quadratic = 2.0 }
yield = { constant = 1.0 }
d_min = 0.5
d_max = 1.5
initial = { equilibrium = 1.0 }

[trajectory]
kind = "constant"
value = 1.0

[controller]
gamma = 2.0
l1 = 4.0
l2 = 8.0
z0 = [0.0, 0.5]

[numerics]
basis_size = 6
horizon = 1.0
"#;

    #[test]
    fn minimal_config_parses() {
        let loaded = parse_config(MINIMAL).unwrap();
        assert_eq!(loaded.config.routes, Routes::Both);
        assert_eq!(loaded.config.numerics.age_nodes, DEFAULT_AGE_NODES);
        assert_eq!(loaded.hash.len(), 64);
        assert!((loaded.config.time_step() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(parse_config(""), Err(ScenarioError::Parse(_))));
        assert!(matches!(
            parse_config("# nothing\n"),
            Err(ScenarioError::Parse(_))
        ));
        assert!(matches!(
            parse_config("[model\n"),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = MINIMAL.replace("gamma = 2.0", "gamma = 2.0\ngama = 1.0");
        match parse_config(&text) {
            Err(ScenarioError::Validation { key, .. }) => assert_eq!(key, "controller.gama"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("value = 1.0", "value = 1.0\nslope = 2.0");
        match parse_config(&text) {
            Err(ScenarioError::Validation { key, .. }) => {
                assert!(key.starts_with("trajectory"), "{key}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn odd_basis_rejected() {
        let text = MINIMAL.replace("basis_size = 6", "basis_size = 7");
        match parse_config(&text) {
            Err(ScenarioError::Validation { key, .. }) => assert_eq!(key, "numerics.basis_size"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn horizon_and_step_checked() {
        let text = MINIMAL.replace("horizon = 1.0", "horizon = 0.0");
        assert!(
            matches!(parse_config(&text), Err(ScenarioError::Validation { key, .. }) if key == "numerics.horizon")
        );
        let text = MINIMAL.replace("horizon = 1.0", "horizon = 1.0\ndt = 0.3");
        assert!(
            matches!(parse_config(&text), Err(ScenarioError::Validation { key, .. }) if key == "numerics.dt")
        );
        let text = MINIMAL.replace("horizon = 1.0", "horizon = 1.0\ndt = 0.01");
        assert!(
            matches!(parse_config(&text), Err(ScenarioError::Validation { key, .. }) if key == "numerics.dt")
        );
    }

    #[test]
    fn missing_block_rejected() {
        let cut = MINIMAL.split("[numerics]").next().unwrap();
        assert!(matches!(
            parse_config(cut),
            Err(ScenarioError::Validation { .. })
        ));
    }

    #[test]
    fn bad_trajectory_values_rejected() {
        let text = MINIMAL.replace("value = 1.0", "value = -1.0");
        assert!(
            matches!(parse_config(&text), Err(ScenarioError::Validation { key, .. }) if key == "trajectory")
        );
    }

    #[test]
    fn calibration_hits_target() {
        let text = MINIMAL.replace("initial =", "calibrate_d_star = 1.0\ninitial =");
        let loaded = parse_config(&text).unwrap();
        let grid = loaded.config.grid().unwrap();
        let (params, scale) = loaded.config.model_on(grid, None).unwrap();
        assert!((scale - 1.0002).abs() < 1e-3);
        let eq = loaded.config.equilibrium(&params).unwrap();
        assert!((eq.d_star - 1.0).abs() < 1e-10);
    }
}
