//! Experiment spec files.

use eigenscape::measurement::{ModelConfig, ModelKind};
use eigenscape::optimize::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SPEC_SCHEMA: u32 = 1;

/// Default number of trials per sweep point.
pub const DEFAULT_TRIALS: usize = 20;

/// Default `m` grid for sensing, phase retrieval and quadratic sensing.
pub const DEFAULT_M_GRID: [f64; 4] = [2000.0, 4000.0, 8000.0, 16000.0];

/// Default `p` grid for completion.
pub const DEFAULT_P_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    LandscapeScan,
    Scaling,
    Probe,
    VerifyExpectation,
    Correspond,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::LandscapeScan => "landscape-scan",
            Command::Scaling => "scaling",
            Command::Probe => "probe",
            Command::VerifyExpectation => "verify-expectation",
            Command::Correspond => "correspond",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[value(name = "sign_aligned")]
    SignAligned,
    #[value(name = "procrustes")]
    Procrustes,
}

impl DistanceKind {
    /// Sign alignment up to `r = 3`, Procrustes beyond.
    pub fn default_for(r: usize) -> Self {
        if r <= 3 {
            DistanceKind::SignAligned
        } else {
            DistanceKind::Procrustes
        }
    }

    pub fn other(self) -> Self {
        match self {
            DistanceKind::SignAligned => DistanceKind::Procrustes,
            DistanceKind::Procrustes => DistanceKind::SignAligned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub theta: usize,
    pub phi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { theta: 181, phi: 361 }
    }
}

/// Probe target and optional overrides of the default constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Ground-truth string for the probed matrix, e.g. `diag:[3,2,1,0]`.
    pub matrix: String,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_critical_point: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Master seed; falls back to the model seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Values of `m` (or `p` for completion).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
    /// Also solve every scaling trial by gradient descent.
    #[serde(default)]
    pub rgd: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

fn default_schema() -> u32 {
    SPEC_SCHEMA
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

/// Command-line overrides applied on top of a spec file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub distance: Option<DistanceKind>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Spec(format!("cannot parse spec: {e}")))
    }

    /// Applies overrides, fixes the command, resolves the master seed into
    /// the model and validates the result.
    pub fn resolve(mut self, command: Command, overrides: Overrides) -> Result<Self, CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Spec(format!(
                    "spec is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        if overrides.seed.is_some() {
            self.seed = overrides.seed;
        }
        if let Some(t) = overrides.trials {
            self.trials = t;
        }
        if overrides.distance.is_some() {
            self.distance = overrides.distance;
        }
        let master = self.seed.or(self.model.as_ref().map(|m| m.seed)).unwrap_or(0);
        self.seed = Some(master);
        if let Some(m) = self.model.as_mut() {
            m.seed = master;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn command(&self) -> Command {
        self.command.unwrap_or(Command::Scaling)
    }

    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Spec(format!("`{}` needs a model", self.command().name())))
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
            .unwrap_or_else(|| DistanceKind::default_for(self.model.as_ref().map_or(1, |m| m.r)))
    }

    /// The sweep grid, or the default grid for the model kind.
    pub fn sweep_values(&self) -> Result<Vec<f64>, CliError> {
        let kind = self.model()?.kind;
        Ok(match &self.sweep {
            Some(v) => v.clone(),
            None if kind == ModelKind::MatrixCompletion => DEFAULT_P_GRID.to_vec(),
            None => DEFAULT_M_GRID.to_vec(),
        })
    }

    /// The model with `m` (or `p` for completion) set to a sweep value.
    pub fn model_at(&self, value: f64) -> Result<ModelConfig, CliError> {
        let mut cfg = self.model()?.clone();
        cfg.keep_raw = false;
        if cfg.kind == ModelKind::MatrixCompletion {
            cfg.p = Some(value);
        } else {
            cfg.m = Some(value as usize);
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema != SPEC_SCHEMA {
            return Err(CliError::Spec(format!("unsupported spec schema {}", self.schema)));
        }
        if self.trials == 0 {
            return Err(CliError::Spec("trials must be at least 1".into()));
        }
        if let (Some(m), false) = (&self.model, self.command() == Command::Scaling) {
            m.model()?;
        }
        match self.command() {
            Command::LandscapeScan => {
                let m = self.model()?;
                if m.n != 3 {
                    return Err(CliError::Spec(format!(
                        "landscape grids need n = 3, got n = {}",
                        m.n
                    )));
                }
                let g = self.grid.unwrap_or_default();
                if g.theta < 2 || g.phi < 1 {
                    return Err(CliError::Spec("grid needs theta ≥ 2 and phi ≥ 1".into()));
                }
            }
            Command::Scaling => {
                let kind = self.model()?.kind;
                let values = self.sweep_values()?;
                if values.len() < 2 {
                    return Err(CliError::Spec("sweep needs at least two values".into()));
                }
                if values.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(CliError::Spec("sweep values must be strictly increasing".into()));
                }
                for &v in &values {
                    let ok = if kind == ModelKind::MatrixCompletion {
                        v > 0.0 && v <= 1.0
                    } else {
                        v >= 1.0 && v.fract() == 0.0
                    };
                    if !ok {
                        return Err(CliError::Spec(format!("invalid sweep value {v}")));
                    }
                    self.model_at(v)?.model()?;
                }
            }
            Command::Probe => {
                let p = self
                    .probe
                    .as_ref()
                    .ok_or_else(|| CliError::Spec("`probe` needs a probe section".into()))?;
                if p.r == 0 {
                    return Err(CliError::Spec("probe rank must be at least 1".into()));
                }
            }
            Command::VerifyExpectation => {
                self.model()?;
                if self.trials < eigenscape::measurement::MIN_EXPECTATION_TRIALS {
                    return Err(CliError::Spec(format!(
                        "verify-expectation needs at least {} trials",
                        eigenscape::measurement::MIN_EXPECTATION_TRIALS
                    )));
                }
            }
            Command::Correspond => {
                self.model()?;
            }
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        Ok(())
    }
}
