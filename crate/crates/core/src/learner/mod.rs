//! Online estimation of the combined deformation Jacobian.
//!
//! `m` RBF networks, one per feature row, each map the actuator position to a row of
//! the estimated Jacobian. A shape-flow predictor integrates the estimated flow and the
//! composite adaptation law tunes the weights from the control error, the estimation
//! error and the filtered estimation error.

mod adapt;
mod predictor;
mod rbf;
mod warmup;

pub use adapt::adapt_weights;
pub use predictor::{predict_flow, PredictorState, PredictorStep};
pub use rbf::{
    build_parameterization, estimate_jacobian, init_bank, rbf_activation, BankDims, BankDocument, RbfBank, RbfNetwork,
    DEFAULT_INIT_SCALE,
};
pub use warmup::{warmup, WarmupReport, WarmupSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Γ_W⁻¹ as a positive diagonal. A bare number in JSON means scalar × identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainDiagonal {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl GainDiagonal {
    pub fn get(&self, index: usize) -> f64 {
        match self {
            GainDiagonal::Scalar(s) => *s,
            GainDiagonal::Diagonal(d) => d[index],
        }
    }

    fn validate(&self, len: Option<usize>) -> Result<()> {
        let ok = match self {
            GainDiagonal::Scalar(s) => *s > 0.0,
            GainDiagonal::Diagonal(d) => d.iter().all(|v| *v > 0.0) && len.is_none_or(|l| l == d.len()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("gamma_w_inv must be positive with kmn entries".into()))
        }
    }
}

/// Assumed bounds on the combined perturbation and its rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationBounds {
    pub b_delta1: f64,
    pub b_delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerGains {
    pub alpha_x: f64,
    pub beta_x: f64,
    pub k_e: f64,
    pub k_x: f64,
    pub k_r: f64,
    pub gamma_w_inv: GainDiagonal,
    /// Boundary-layer width of sat(x̃), feature units.
    #[serde(default = "default_eps_sat")]
    pub eps_sat: f64,
    /// Box bound on every weight.
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    /// When absent, estimated during warmup.
    #[serde(default)]
    pub perturbation_bounds: Option<PerturbationBounds>,
}

fn default_eps_sat() -> f64 {
    0.5
}

fn default_w_max() -> f64 {
    100.0
}

impl LearnerGains {
    pub fn racs2() -> Self {
        Self {
            alpha_x: 0.3,
            beta_x: 0.04,
            k_e: 0.01,
            k_x: 0.01,
            k_r: 0.2,
            gamma_w_inv: GainDiagonal::Scalar(0.1),
            eps_sat: default_eps_sat(),
            w_max: default_w_max(),
            perturbation_bounds: None,
        }
    }

    pub fn scm6() -> Self {
        Self { alpha_x: 0.6, beta_x: 0.12, gamma_w_inv: GainDiagonal::Scalar(1.0), ..Self::racs2() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "racs2" => Ok(Self::racs2()),
            "scm6" => Ok(Self::scm6()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self, weight_count: Option<usize>) -> Result<()> {
        let positive = [self.alpha_x, self.beta_x, self.k_e, self.k_x, self.k_r, self.eps_sat, self.w_max];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("learner gains must be strictly positive".into()));
        }
        if let Some(b) = self.perturbation_bounds {
            if !(b.b_delta1 >= 0.0 && b.b_delta2 >= 0.0) {
                return Err(Error::InvalidConfig("perturbation bounds must be >= 0".into()));
            }
        }
        self.gamma_w_inv.validate(weight_count)
    }
}

/// Neuron count used by the shipped presets.
pub fn preset_neurons(name: &str) -> Result<usize> {
    match name {
        "racs2" => Ok(9),
        "scm6" => Ok(13),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}
