//! TOML run configuration.

use std::path::{Path, PathBuf};

use pendular_core::forceqp::{ConeModel, SolverOptions};
use pendular_core::harness::{self, Axis, KinkConfig, OcpSweepConfig, PrefactorConfig, QpSweepConfig, Scenario, Sinusoid};
use pendular_core::model::{StanceConfig, Vec2, Vec3, DEFAULT_GRAVITY};
use pendular_core::ocp::OcpOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Read { path: PathBuf, reason: String },
    Parse(String),
    Field { field: &'static str, reason: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read { path, reason } => write!(f, "cannot read {}: {reason}", path.display()),
            ConfigError::Parse(msg) => write!(f, "{msg}"),
            ConfigError::Field { field, reason } => write!(f, "field `{field}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<pendular_core::Error> for ConfigError {
    fn from(e: pendular_core::Error) -> Self {
        ConfigError::Parse(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Robot {
    pub name: String,
    pub mass: f64,
    /// Half fore–aft foot span, m.
    pub lx: f64,
    /// Half lateral foot span, m.
    pub ly: f64,
    /// Nominal CoM height above the feet, m.
    pub h: f64,
    pub mu: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    /// Vertical-acceleration weight used by `test-e`.
    pub beta_pivot: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Angular-momentum-rate target, N·m.
    pub task: [f64; 3],
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 1.0,
            beta_pivot: 1000.0,
            gamma: 1.0,
            lambda: 0.0,
            task: [0.5, -0.3, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBlock {
    pub lateral_amplitude: f64,
    pub lateral_frequency: f64,
    pub foreaft_amplitude: f64,
    pub foreaft_frequency: f64,
    /// Defaults to one lateral period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub sample_rate: f64,
    /// Window for the analytic scaling constant, s.
    pub long_window: f64,
    /// Rest-to-rest CoM shift for the trajectory problems, m.
    pub offset: [f64; 2],
    pub horizon: f64,
    pub knots: usize,
    /// Horizontal CoM acceleration for `qp-solve`, m/s².
    pub accel: [f64; 2],
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        Self {
            lateral_amplitude: 0.08,
            lateral_frequency: 0.3,
            foreaft_amplitude: 0.05,
            foreaft_frequency: 0.22,
            duration: None,
            sample_rate: 60.0,
            long_window: 300.0,
            offset: [0.0, 0.05],
            horizon: 3.0,
            knots: 60,
            accel: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solver {
    pub tol: f64,
    pub max_iter: usize,
    pub cone_model: ConeModel,
    pub ocp_tol: f64,
    pub bc_tol: f64,
    pub max_outer: usize,
}

impl Default for Solver {
    fn default() -> Self {
        let qp = SolverOptions::default();
        let ocp = OcpOptions::default();
        Self {
            tol: qp.tol,
            max_iter: qp.max_iter,
            cone_model: qp.cone_model,
            ocp_tol: ocp.tol,
            bc_tol: ocp.bc_tol,
            max_outer: ocp.max_outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub test_a: Vec<f64>,
    pub test_b: Vec<f64>,
    pub test_c: Vec<f64>,
    pub test_e: Vec<f64>,
    /// λ/α values for `prefactor`.
    pub prefactor: Vec<f64>,
    pub kink_start: f64,
    pub kink_stop: f64,
    pub kink_step: f64,
    pub kink_mu: Vec<f64>,
    /// Fore–aft acceleration held fixed in the μ sweep.
    pub kink_mu_accel: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            test_a: vec![1.0, 5.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0],
            test_b: harness::log_grid(1.0, 1000.0, 3),
            test_c: harness::log_grid(1.0, 1e5, 1),
            test_e: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
            prefactor: harness::log_grid(0.01, 100.0, 2),
            kink_start: 3.0,
            kink_stop: 5.8,
            kink_step: 0.02,
            kink_mu: (0..=20).map(|k| 0.6 + 0.03 * k as f64).collect(),
            kink_mu_accel: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub robot: Robot,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub grids: Grids,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Field {
            field,
            reason: format!("must be > 0, got {v}"),
        })
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Field {
            field,
            reason: format!("must be ≥ 0, got {v}"),
        })
    }
}

fn positive_grid(field: &'static str, g: &[f64]) -> Result<(), ConfigError> {
    if g.is_empty() {
        return Err(ConfigError::Field {
            field,
            reason: "must not be empty".into(),
        });
    }
    g.iter().try_for_each(|&v| positive(field, v))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.robot;
        positive("robot.mass", r.mass)?;
        positive("robot.lx", r.lx)?;
        positive("robot.ly", r.ly)?;
        positive("robot.h", r.h)?;
        positive("robot.mu", r.mu)?;
        positive("robot.gravity", r.gravity)?;
        let w = &self.weights;
        non_negative("weights.alpha", w.alpha)?;
        non_negative("weights.beta", w.beta)?;
        non_negative("weights.beta_pivot", w.beta_pivot)?;
        positive("weights.gamma", w.gamma)?;
        non_negative("weights.lambda", w.lambda)?;
        let s = &self.scenario;
        non_negative("scenario.lateral_amplitude", s.lateral_amplitude)?;
        non_negative("scenario.foreaft_amplitude", s.foreaft_amplitude)?;
        positive("scenario.lateral_frequency", s.lateral_frequency)?;
        positive("scenario.foreaft_frequency", s.foreaft_frequency)?;
        if let Some(d) = s.duration {
            positive("scenario.duration", d)?;
        }
        positive("scenario.sample_rate", s.sample_rate)?;
        positive("scenario.long_window", s.long_window)?;
        positive("scenario.horizon", s.horizon)?;
        if s.knots < 2 {
            return Err(ConfigError::Field {
                field: "scenario.knots",
                reason: format!("must be ≥ 2, got {}", s.knots),
            });
        }
        let sv = &self.solver;
        positive("solver.tol", sv.tol)?;
        positive("solver.ocp_tol", sv.ocp_tol)?;
        positive("solver.bc_tol", sv.bc_tol)?;
        let g = &self.grids;
        positive_grid("grids.test_a", &g.test_a)?;
        positive_grid("grids.test_b", &g.test_b)?;
        positive_grid("grids.test_c", &g.test_c)?;
        positive_grid("grids.test_e", &g.test_e)?;
        positive_grid("grids.prefactor", &g.prefactor)?;
        positive_grid("grids.kink_mu", &g.kink_mu)?;
        positive("grids.kink_step", g.kink_step)?;
        if g.kink_stop <= g.kink_start {
            return Err(ConfigError::Field {
                field: "grids.kink_stop",
                reason: "must exceed grids.kink_start".into(),
            });
        }
        Ok(())
    }

    pub fn stance(&self) -> Result<StanceConfig, ConfigError> {
        let r = &self.robot;
        let s = StanceConfig::rectangle(r.lx, r.ly, r.mass, r.mu)?;
        Ok(StanceConfig::with_gravity(s.contacts, r.mass, r.gravity)?)
    }

    pub fn two_foot_stance(&self) -> Result<StanceConfig, ConfigError> {
        let r = &self.robot;
        let s = StanceConfig::diagonal_pair(r.lx, r.ly, r.mass, r.mu)?;
        Ok(StanceConfig::with_gravity(s.contacts, r.mass, r.gravity)?)
    }

    pub fn com(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.robot.h)
    }

    pub fn qp_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            cone_model: self.solver.cone_model,
            ..SolverOptions::default()
        }
    }

    pub fn ocp_options(&self) -> OcpOptions {
        OcpOptions {
            tol: self.solver.ocp_tol,
            bc_tol: self.solver.bc_tol,
            max_outer: self.solver.max_outer,
            ..OcpOptions::default()
        }
    }

    fn scenario(&self, stance: StanceConfig) -> Result<Scenario, ConfigError> {
        let s = &self.scenario;
        Ok(Scenario::new(
            "sway",
            stance,
            self.com(),
            vec![
                Sinusoid {
                    axis: Axis::Y,
                    amplitude: s.lateral_amplitude,
                    frequency: s.lateral_frequency,
                },
                Sinusoid {
                    axis: Axis::X,
                    amplitude: s.foreaft_amplitude,
                    frequency: s.foreaft_frequency,
                },
            ],
            s.duration.unwrap_or(1.0 / s.lateral_frequency),
            s.sample_rate,
        )?)
    }

    pub fn test_b(&self) -> Result<QpSweepConfig, ConfigError> {
        Ok(QpSweepConfig {
            scenario: self.scenario(self.stance()?)?,
            gamma: self.weights.gamma,
            alphas: self.grids.test_b.clone(),
            solver: self.qp_options(),
            long_window: self.scenario.long_window,
            seed: self.seed,
        })
    }

    pub fn test_c(&self) -> Result<QpSweepConfig, ConfigError> {
        Ok(QpSweepConfig {
            scenario: self.scenario(self.two_foot_stance()?)?,
            alphas: self.grids.test_c.clone(),
            ..self.test_b()?
        })
    }

    pub fn test_a(&self) -> Result<OcpSweepConfig, ConfigError> {
        let s = &self.scenario;
        Ok(OcpSweepConfig {
            stance: self.stance()?,
            height: self.robot.h,
            offset: Vec2::new(s.offset[0], s.offset[1]),
            horizon: s.horizon,
            knots: s.knots,
            beta: self.weights.beta,
            gamma: self.weights.gamma,
            lambda: self.weights.lambda,
            alphas: self.grids.test_a.clone(),
            options: self.ocp_options(),
            seed: self.seed,
        })
    }

    pub fn test_e(&self) -> Result<OcpSweepConfig, ConfigError> {
        Ok(OcpSweepConfig {
            beta: self.weights.beta_pivot,
            alphas: self.grids.test_e.clone(),
            ..self.test_a()?
        })
    }

    pub fn kink(&self) -> Result<KinkConfig, ConfigError> {
        let g = &self.grids;
        let n = ((g.kink_stop - g.kink_start) / g.kink_step).round() as usize;
        Ok(KinkConfig {
            stance: self.two_foot_stance()?,
            height: self.robot.h,
            mu: self.robot.mu,
            accel_grid: (0..=n).map(|k| g.kink_start + g.kink_step * k as f64).collect(),
            mu_grid: g.kink_mu.clone(),
            mu_sweep_accel: g.kink_mu_accel,
        })
    }

    pub fn prefactor(&self) -> Result<PrefactorConfig, ConfigError> {
        let t = self.weights.task;
        Ok(PrefactorConfig {
            stance: self.stance()?,
            height: self.robot.h,
            alpha: if self.weights.alpha > 0.0 { self.weights.alpha } else { 1.0 },
            gamma: 1e-9,
            lambda_over_alpha: self.grids.prefactor.clone(),
            task: Vec3::new(t[0], t[1], t[2]),
            solver: self.qp_options(),
        })
    }
}
