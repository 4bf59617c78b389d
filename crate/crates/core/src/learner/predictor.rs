use nalgebra::DVector;

use super::rbf::{estimate_jacobian, RbfBank};
use super::LearnerGains;
use crate::sat::sat_vec;

/// Predicted shape flow `Ĵ_c(q) q̇ + α_x x̃ + β_x sat(x̃)`.
pub fn predict_flow(
    bank: &RbfBank,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    x_tilde: &DVector<f64>,
    gains: &LearnerGains,
) -> DVector<f64> {
    estimate_jacobian(bank, q) * qdot + x_tilde * gains.alpha_x + sat_vec(x_tilde, gains.eps_sat) * gains.beta_x
}

/// Shape-flow predictor state. `x_tilde == last_x - x_hat` holds between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub x_hat: DVector<f64>,
    pub x_tilde: DVector<f64>,
    pub last_x: DVector<f64>,
    pub t: f64,
}

/// Quantities produced by one predictor step.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorStep {
    /// Shape flow error `x̃̇`.
    pub x_tilde_dot: DVector<f64>,
    /// Filtered estimation error `r_x = x̃̇ + α_x x̃`.
    pub r_x: DVector<f64>,
    /// Predictor output used for the step.
    pub flow_pred: DVector<f64>,
    /// Backward-difference measured flow.
    pub flow_meas: DVector<f64>,
}

impl PredictorState {
    /// Zero initial estimate, so `x̃(0) = x(0)`.
    pub fn new(x0: &DVector<f64>) -> Self {
        Self { x_hat: DVector::zeros(x0.len()), x_tilde: x0.clone(), last_x: x0.clone(), t: 0.0 }
    }

    /// Integrates the predictor over one interval during which `qdot` was applied
    /// starting from `q`, then compares with the new measurement.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        bank: &RbfBank,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        x_meas: &DVector<f64>,
        dt: f64,
        gains: &LearnerGains,
    ) -> PredictorStep {
        debug_assert!(dt > 0.0);
        let flow_pred = predict_flow(bank, q, qdot, &self.x_tilde, gains);
        self.x_hat += &flow_pred * dt;
        self.x_tilde = x_meas - &self.x_hat;
        let flow_meas = (x_meas - &self.last_x) / dt;
        let x_tilde_dot = &flow_meas - &flow_pred;
        let r_x = &x_tilde_dot + &self.x_tilde * gains.alpha_x;
        self.last_x = x_meas.clone();
        self.t += dt;
        PredictorStep { x_tilde_dot, r_x, flow_pred, flow_meas }
    }
}
