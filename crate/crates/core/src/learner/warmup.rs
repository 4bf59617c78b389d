use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapt::adapt_weights;
use super::predictor::PredictorState;
use super::rbf::{estimate_jacobian, RbfBank};
use super::{LearnerGains, PerturbationBounds};
use crate::error::Result;
use crate::features::{extract_feature, FeatureKind};
use crate::plant::Plant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupSpec {
    pub duration_s: f64,
    /// Peak actuator excursion around the starting configuration, actuator units.
    pub amplitude: f64,
    #[serde(default = "default_base_freq")]
    pub base_freq_hz: f64,
}

fn default_base_freq() -> f64 {
    0.1
}

impl Default for WarmupSpec {
    fn default() -> Self {
        Self { duration_s: 30.0, amplitude: 10.0, base_freq_hz: default_base_freq() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupReport {
    pub steps: usize,
    /// Three times the largest observed perturbation proxy and its rate over the
    /// second half of the warmup.
    pub perturbation_bounds: PerturbationBounds,
}

/// Slow sinusoidal excitation around the current configuration with the controller
/// disabled (`e ≡ 0`): the predictor and the adaptation law run as in servoing.
///
/// Actuator `i` follows `q_i(t) = q_i(0) + A sin(ω_i t)`, with distinct, seed-jittered
/// frequencies for excitation richness.
#[allow(clippy::too_many_arguments)]
pub fn warmup(
    plant: &mut Plant,
    kind: FeatureKind,
    bank: &mut RbfBank,
    predictor: &mut PredictorState,
    gains: &LearnerGains,
    spec: &WarmupSpec,
    dt: f64,
    seed: u64,
) -> Result<WarmupReport> {
    let n = plant.config().n();
    let markers = plant.config().markers;
    let qdot_max = plant.config().qdot_max;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omegas: Vec<f64> = (0..n)
        .map(|i| 2.0 * std::f64::consts::PI * spec.base_freq_hz * (1.0 + 0.37 * i as f64 + rng.gen_range(0.0..0.1)))
        .collect();
    let steps = (spec.duration_s / dt).round().max(0.0) as usize;
    let zero_e = DVector::zeros(kind.dim());
    let mut prev_q = plant.q().clone();
    let mut prev_qdot = DVector::zeros(n);
    let mut max_delta: f64 = 0.0;
    let mut max_rate: f64 = 0.0;
    let mut last_delta: Option<DVector<f64>> = None;
    for step in 0..=steps {
        let t = step as f64 * dt;
        if step > 0 {
            let x = extract_feature(kind, plant.measure().0, &markers)?.values;
            let jac_prev = estimate_jacobian(bank, &prev_q);
            let out = predictor.advance(bank, &prev_q, &prev_qdot, &x, dt, gains);
            let delta = &out.flow_meas - jac_prev * &prev_qdot;
            if step >= steps / 2 {
                max_delta = max_delta.max(delta.norm());
                if let Some(last) = &last_delta {
                    max_rate = max_rate.max((&delta - last).norm() / dt);
                }
                last_delta = Some(delta);
            }
            let q = plant.q().clone();
            adapt_weights(bank, &q, &prev_qdot, &zero_e, &predictor.x_tilde, &out.r_x, gains, dt)?;
        }
        if step == steps {
            break;
        }
        let qdot = DVector::from_iterator(
            n,
            omegas.iter().map(|w| (spec.amplitude * w * (w * t).cos()).clamp(-qdot_max, qdot_max)),
        );
        prev_q = plant.q().clone();
        plant.step(&qdot, dt)?;
        prev_qdot = qdot;
    }
    Ok(WarmupReport {
        steps,
        perturbation_bounds: PerturbationBounds { b_delta1: 3.0 * max_delta, b_delta2: 3.0 * max_rate },
    })
}
