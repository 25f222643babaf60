//! Run configuration: a TOML document, unknown keys rejected.
//!
//! ```toml
//! k = 5
//! h = 0.2
//! horizon = 2000
//! seed = 42
//!
//! [hierarchy]
//! preset = "chain"            # "chain", "star", or "explicit" with
//!                             # leaders = [[], [1], [1, 2]]  (L(1), L(2), ...)
//! [model]
//! kind = "bernoulli_failure"  # deterministic_cs | power_law | bernoulli_failure
//! p = 0.5                     # | scaled_random | random_environment
//! alpha = 0.5
//!
//! [initial]
//! mode = "sampled"            # or "explicit" with positions/velocities
//! box_side = 1.0
//! speed = 0.5
//!
//! [detection]                 # optional
//! epsilon_v = 1e-6
//! window = 50
//!
//! [ensemble]                  # optional
//! replicas = 200
//! product_windows = [{ bird = 2, tau = 0, t = 4 }]
//! speed_bound_times = [1, 10, 100]
//!
//! [output]                    # optional
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::max_timestep;
use crate::ensemble::{Detection, EnsembleSpec, ProductWindow, StatisticSet, DEFAULT_SE_MARGIN};
use crate::hierarchy::Hierarchy;
use crate::interactions::{InteractionKind, InteractionModel};
use crate::simulation::{InitialCondition, Scenario};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum HierarchySpec {
    Chain,
    Star,
    /// `leaders[i - 1] = L(i)`, 1-based labels.
    Explicit { leaders: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Explicit { positions: Vec<[f64; 3]>, velocities: Vec<[f64; 3]> },
    Sampled { box_side: f64, speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub product_windows: Vec<ProductWindow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub speed_bound_times: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistics: Option<StatisticSet>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub k: usize,
    pub h: f64,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    pub hierarchy: HierarchySpec,
    pub model: InteractionKind,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

pub const DEFAULT_REPLICAS: usize = 100;

impl SimConfig {
    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types always serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario().map(|_| ())?;
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be >= 1".into()));
        }
        if let Some(d) = &self.detection {
            if !(d.epsilon_v > 0.0) || d.window == 0 {
                return Err(ConfigError::Invalid("detection needs epsilon_v > 0 and window >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> Result<Hierarchy, ConfigError> {
        let h = match &self.hierarchy {
            HierarchySpec::Chain => Hierarchy::chain(self.k),
            HierarchySpec::Star => Hierarchy::star(self.k),
            HierarchySpec::Explicit { leaders } => {
                if leaders.len() != self.k {
                    return Err(ConfigError::Invalid(format!(
                        "hierarchy lists {} leader sets for k = {}",
                        leaders.len(),
                        self.k
                    )));
                }
                Hierarchy::from_leader_sets(leaders.clone())
            }
        };
        h.map_err(|v| ConfigError::Invalid(format!("hierarchy: {v}")))
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let hierarchy = self.hierarchy()?;
        if !(self.h > 0.0 && self.h <= max_timestep(self.k)) {
            return Err(ConfigError::Invalid(format!(
                "h = {} violates 0 < h <= 1/(k-1) = {}",
                self.h,
                max_timestep(self.k)
            )));
        }
        let model = InteractionModel::new(self.model).map_err(|e| ConfigError::Invalid(format!("model: {e}")))?;
        let initial = match &self.initial {
            InitialSpec::Explicit { positions, velocities } => {
                if positions.len() != self.k || velocities.len() != self.k {
                    return Err(ConfigError::Invalid(format!(
                        "explicit initial conditions need k = {} positions and velocities (got {}, {})",
                        self.k,
                        positions.len(),
                        velocities.len()
                    )));
                }
                if !positions.iter().chain(velocities).flatten().all(|c| c.is_finite()) {
                    return Err(ConfigError::Invalid("initial conditions must be finite".into()));
                }
                InitialCondition::Explicit {
                    positions: positions.iter().map(|&p| Vec3(p)).collect(),
                    velocities: velocities.iter().map(|&v| Vec3(v)).collect(),
                }
            }
            &InitialSpec::Sampled { box_side, speed } => {
                if !(box_side >= 0.0 && box_side.is_finite() && speed >= 0.0 && speed.is_finite()) {
                    return Err(ConfigError::Invalid("sampled box_side and speed must be finite and >= 0".into()));
                }
                InitialCondition::Sampled { box_side, speed }
            }
        };
        Scenario::new(hierarchy, model, self.h, initial).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn detection(&self) -> Detection {
        self.detection.unwrap_or_default()
    }

    /// Ensemble spec from the `[ensemble]` section, with optional overrides.
    pub fn ensemble_spec(&self, replicas: Option<usize>, horizon: Option<u64>) -> Result<EnsembleSpec, ConfigError> {
        let section = self.ensemble.clone().unwrap_or_default();
        let replicas = replicas.or(section.replicas).unwrap_or(DEFAULT_REPLICAS);
        let horizon = horizon.unwrap_or(self.horizon);
        let mut spec = EnsembleSpec::new(self.scenario()?, replicas, horizon, self.seed);
        spec.product_windows = section.product_windows;
        spec.speed_bound_times = section.speed_bound_times;
        spec.se_margin = section.se_margin.unwrap_or(DEFAULT_SE_MARGIN);
        spec.statistics = section.statistics.unwrap_or_default();
        spec.detection = self.detection();
        Ok(spec)
    }

    /// Copy with one named parameter replaced. Names: `p`, `alpha`, `h`,
    /// `speed`, `box_side`, `seed`.
    pub fn with_param(&self, name: &str, value: f64) -> Result<SimConfig, ConfigError> {
        let mut cfg = self.clone();
        let unsupported = || ConfigError::Invalid(format!("parameter {name:?} does not apply to this config"));
        match name {
            "h" => cfg.h = value,
            "seed" => cfg.seed = value as u64,
            "p" => match &mut cfg.model {
                InteractionKind::BernoulliFailure { p, .. }
                | InteractionKind::ScaledRandom { p, .. }
                | InteractionKind::RandomEnvironment { p, .. } => *p = value,
                _ => return Err(unsupported()),
            },
            "alpha" => match &mut cfg.model {
                InteractionKind::PowerLaw { alpha }
                | InteractionKind::BernoulliFailure { alpha, .. }
                | InteractionKind::ScaledRandom { alpha, .. }
                | InteractionKind::RandomEnvironment { alpha, .. } => *alpha = value,
                _ => return Err(unsupported()),
            },
            "speed" | "box_side" => match &mut cfg.initial {
                InitialSpec::Sampled { box_side, speed } => {
                    if name == "speed" {
                        *speed = value
                    } else {
                        *box_side = value
                    }
                }
                _ => return Err(unsupported()),
            },
            _ => return Err(ConfigError::Invalid(format!("unknown sweep parameter {name:?}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
