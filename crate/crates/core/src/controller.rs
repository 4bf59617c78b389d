//! Saturated pseudo-inverse velocity controller and its safety monitors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{LearnerGains, PerturbationBounds};
use crate::sat::sat_vec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub k_c: f64,
    pub k_s: f64,
    #[serde(default = "default_eps_sat_e")]
    pub eps_sat_e: f64,
    /// Actuator units per second.
    #[serde(default = "default_qdot_max")]
    pub qdot_max: f64,
    #[serde(default = "default_sigma_ratio")]
    pub sigma_min_ratio: f64,
    /// Convergence threshold on ‖e‖; derived from ‖e(0)‖ when absent.
    #[serde(default)]
    pub eps_e: Option<f64>,
}

fn default_eps_sat_e() -> f64 {
    0.5
}

fn default_qdot_max() -> f64 {
    20.0
}

fn default_sigma_ratio() -> f64 {
    1e-4
}

impl ControllerGains {
    pub fn racs2() -> Self {
        Self {
            k_c: 0.32,
            k_s: 0.04,
            eps_sat_e: default_eps_sat_e(),
            qdot_max: default_qdot_max(),
            sigma_min_ratio: default_sigma_ratio(),
            eps_e: None,
        }
    }

    pub fn scm6() -> Self {
        Self { k_c: 0.02, k_s: 0.01, ..Self::racs2() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "racs2" => Ok(Self::racs2()),
            "scm6" => Ok(Self::scm6()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.k_c, self.k_s, self.eps_sat_e, self.qdot_max, self.sigma_min_ratio];
        if positive.iter().any(|v| !(*v > 0.0)) || self.eps_e.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::InvalidConfig("controller gains must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    /// Rank of `Ĵ Ĵ⁺` after truncation.
    pub jacobian_rank: usize,
    /// Smallest singular value kept by the pseudo-inverse (0 when rank is 0).
    pub min_singular_value: f64,
    pub velocity_clamped: bool,
    pub nan_detected: bool,
}

/// Truncated SVD pseudo-inverse; singular values below `ratio · σ_max` are dropped.
/// Returns the `n × m` inverse, the effective rank and the smallest kept singular value.
pub fn pseudo_inverse(jac: &DMatrix<f64>, sigma_min_ratio: f64) -> Result<(DMatrix<f64>, usize, f64)> {
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jacobian"));
    }
    let (m, n) = jac.shape();
    let svd = jac.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.max();
    if sigma_max <= 0.0 {
        return Ok((DMatrix::zeros(n, m), 0, 0.0));
    }
    let cutoff = sigma_min_ratio * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    let mut min_kept = f64::INFINITY;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            min_kept = min_kept.min(s);
            pinv += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    Ok((pinv, rank, min_kept))
}

/// `q̇ = −k_c Ĵ⁺ e − k_s Ĵ⁺ sat(e)`, clamped componentwise to `±qdot_max`.
pub fn control(jac: &DMatrix<f64>, e: &DVector<f64>, gains: &ControllerGains) -> Result<(DVector<f64>, SafetyReport)> {
    if e.len() != jac.nrows() {
        return Err(Error::DimensionMismatch { what: "e", expected: jac.nrows(), got: e.len() });
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("control error"));
    }
    let (pinv, rank, min_sv) = pseudo_inverse(jac, gains.sigma_min_ratio)?;
    let raw = -(&pinv * (e * gains.k_c + sat_vec(e, gains.eps_sat_e) * gains.k_s));
    let nan_detected = raw.iter().any(|v| !v.is_finite());
    if nan_detected {
        return Err(Error::NonFinite("actuator velocity"));
    }
    let velocity_clamped = raw.amax() > gains.qdot_max;
    let qdot = raw.map(|v| v.clamp(-gains.qdot_max, gains.qdot_max));
    Ok((qdot, SafetyReport { jacobian_rank: rank, min_singular_value: min_sv, velocity_clamped, nan_detected }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; non-negative when satisfied.
    pub margin: f64,
    pub pass: bool,
}

impl Inequality {
    fn at_least(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, margin: lhs - rhs, pass: lhs >= rhs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConditionReport {
    pub bounds: PerturbationBounds,
    /// `k_s ≥ b_δ1`
    pub switching_gain: Inequality,
    /// `β_x ≥ b_δ1 + b_δ2 / α_x`
    pub predictor_gain: Inequality,
}

impl GainConditionReport {
    pub fn pass(&self) -> bool {
        self.switching_gain.pass && self.predictor_gain.pass
    }
}

/// Sufficient gain conditions for the stability argument, given perturbation bounds.
pub fn check_gain_conditions(
    gains: &ControllerGains,
    learner: &LearnerGains,
    bounds: PerturbationBounds,
) -> GainConditionReport {
    GainConditionReport {
        bounds,
        switching_gain: Inequality::at_least(gains.k_s, bounds.b_delta1),
        predictor_gain: Inequality::at_least(learner.beta_x, bounds.b_delta1 + bounds.b_delta2 / learner.alpha_x),
    }
}
