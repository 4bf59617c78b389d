use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::learner::{preset_neurons, LearnerGains, WarmupSpec, DEFAULT_INIT_SCALE};
use crate::plant::{forward_shape_unchecked, plant_feature, DisturbanceEvent, PlantConfig, SensorModel};

/// Desired shape: either pose the plant at `q` and extract the feature, or give the
/// feature explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Pose {
        q: Vec<f64>,
        /// Permit `q` outside the actuator limits, producing an unreachable shape.
        #[serde(default)]
        allow_beyond_limits: bool,
    },
    Feature {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Plant preset: `racs2` or `scm6`.
    pub plant: String,
    pub feature: FeatureKind,
    pub target: Target,
    /// Starting actuator positions; the preset home when absent.
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    /// Neurons per network; the preset value when absent.
    #[serde(default)]
    pub neurons: Option<usize>,
    #[serde(default)]
    pub init_scale: Option<f64>,
    #[serde(default)]
    pub learner_gains: Option<LearnerGains>,
    #[serde(default)]
    pub controller_gains: Option<ControllerGains>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceEvent>,
    /// The sensor seed is mixed with the scenario seed.
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default = "default_loop_rate")]
    pub loop_rate_hz: f64,
    pub max_duration_s: f64,
    pub seed: u64,
    /// Bank JSON to start from instead of a fresh initialization.
    #[serde(default)]
    pub warm_start_bank: Option<PathBuf>,
    #[serde(default)]
    pub warmup: Option<WarmupSpec>,
    #[serde(default = "default_true")]
    pub stop_on_convergence: bool,
    /// Keep the weight vector in every telemetry record (needed for Lyapunov analysis).
    #[serde(default)]
    pub record_weights: bool,
}

fn default_loop_rate() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a scenario; a relative `warm_start_bank` resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(bank), Some(dir)) = (&cfg.warm_start_bank, path.parent()) {
            if bank.is_relative() {
                cfg.warm_start_bank = Some(dir.join(bank));
            }
        }
        Ok(cfg)
    }

    pub fn plant_config(&self) -> Result<PlantConfig> {
        PlantConfig::preset(&self.plant)
    }

    pub fn learner(&self) -> Result<LearnerGains> {
        match &self.learner_gains {
            Some(g) => Ok(g.clone()),
            None => LearnerGains::preset(&self.plant),
        }
    }

    pub fn controller(&self) -> Result<ControllerGains> {
        match &self.controller_gains {
            Some(g) => Ok(g.clone()),
            None => ControllerGains::preset(&self.plant),
        }
    }

    pub fn neuron_count(&self) -> Result<usize> {
        match self.neurons {
            Some(k) => Ok(k),
            None => preset_neurons(&self.plant),
        }
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(DEFAULT_INIT_SCALE)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.loop_rate_hz
    }

    pub fn max_steps(&self) -> usize {
        (self.max_duration_s * self.loop_rate_hz).round() as usize
    }

    pub fn initial_q(&self, plant: &PlantConfig) -> Result<DVector<f64>> {
        let q = match &self.initial_q {
            Some(q) => DVector::from_column_slice(q),
            None => plant.home.clone(),
        };
        if q.len() != plant.n() {
            return Err(Error::DimensionMismatch { what: "initial_q", expected: plant.n(), got: q.len() });
        }
        plant.check_limits(&q)?;
        Ok(q)
    }

    /// Effective sensor model with the scenario seed mixed in.
    pub fn sensor_model(&self) -> SensorModel {
        SensorModel { seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ self.sensor.seed, ..self.sensor }
    }

    /// Resolves the desired feature vector.
    pub fn desired_feature(&self, plant: &PlantConfig) -> Result<DVector<f64>> {
        let m = self.feature.dim();
        match &self.target {
            Target::Pose { q, allow_beyond_limits } => {
                let q = DVector::from_column_slice(q);
                if q.len() != plant.n() {
                    return Err(Error::DimensionMismatch { what: "target q", expected: plant.n(), got: q.len() });
                }
                if *allow_beyond_limits {
                    let pts = forward_shape_unchecked(plant, &q)?;
                    Ok(crate::features::extract_feature(self.feature, &pts, &plant.markers)?.values)
                } else {
                    plant_feature(plant, &q, self.feature)
                }
            }
            Target::Feature { values } => {
                if values.len() != m {
                    return Err(Error::DimensionMismatch { what: "target feature", expected: m, got: values.len() });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("target feature"));
                }
                Ok(DVector::from_column_slice(values))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.name.is_empty() {
            return bad("scenario name must be non-empty".into());
        }
        let plant = self.plant_config()?;
        if !(self.loop_rate_hz > 0.0) || !(self.max_duration_s > 0.0) {
            return bad("loop rate and max duration must be positive".into());
        }
        if plant.markers.junction.is_none() && self.feature == FeatureKind::DepBta {
            return bad(format!("feature dep_bta needs a two-section plant, {} has one", plant.name));
        }
        let k = self.neuron_count()?;
        let learner = self.learner()?;
        learner.validate(Some(k * self.feature.dim() * plant.n()))?;
        let controller = self.controller()?;
        controller.validate()?;
        if controller.qdot_max > plant.qdot_max {
            return bad(format!("controller qdot_max {} exceeds plant limit {}", controller.qdot_max, plant.qdot_max));
        }
        if !(self.init_scale() >= 0.0) {
            return bad("init_scale must be >= 0".into());
        }
        if let Some(w) = &self.warmup {
            if !(w.duration_s >= 0.0 && w.amplitude >= 0.0 && w.base_freq_hz > 0.0) {
                return bad("warmup needs duration >= 0, amplitude >= 0, frequency > 0".into());
            }
        }
        self.sensor.validate()?;
        self.disturbances.iter().try_for_each(DisturbanceEvent::validate)?;
        self.initial_q(&plant)?;
        self.desired_feature(&plant)?;
        Ok(())
    }
}
