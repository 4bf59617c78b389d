use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::runner::{run_scenario, LoopObserver, RunReport, RunStatus};
use super::scenario::ScenarioConfig;
use super::telemetry::TelemetryRecord;
use crate::diagnostics::{
    delta_proxy, fit_oracle_weights, monotonicity_check, tensor_grid, LyapunovTrace, MonotonicityReport, OracleWeights,
};
use crate::error::{Error, Result};
use crate::learner::{LearnerGains, PerturbationBounds, RbfBank};
use crate::plant::PlantConfig;

/// Allowed per-step increase of `V`, relative to `V(0)`.
pub const MONOTONE_TOL: f64 = 1e-3;
/// Allowed negative excursion of `R`, relative to `V(0)`.
pub const R_TOL: f64 = 1e-6;
/// Minimum fraction of non-increasing steps.
pub const MIN_COMPLIANCE: f64 = 0.99;

/// Bounding box of the visited actuator positions, widened by `margin` per side and
/// kept inside the actuator limits.
pub fn visited_region(records: &[TelemetryRecord], plant: &PlantConfig, margin: f64) -> (DVector<f64>, DVector<f64>) {
    let n = plant.n();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for r in records {
        for i in 0..n {
            lo[i] = lo[i].min(r.q[i]);
            hi[i] = hi[i].max(r.q[i]);
        }
    }
    for i in 0..n {
        if !lo[i].is_finite() {
            lo[i] = plant.home[i];
            hi[i] = plant.home[i];
        }
        lo[i] = (lo[i] - margin).max(plant.q_min[i]);
        hi[i] = (hi[i] + margin).min(plant.q_max[i]);
    }
    (lo, hi)
}

/// Oracle weights on the basis of `bank`, fitted over the visited region.
pub fn oracle_for_run(report: &RunReport, per_dim: usize, margin: f64) -> Result<OracleWeights> {
    let plant = report.session.plant.config();
    let (lo, hi) = visited_region(&report.records, plant, margin);
    let grid = tensor_grid(&lo, &hi, per_dim);
    fit_oracle_weights(plant, report.session.kind, &report.session.bank, &grid)
}

/// Rebuilds the Lyapunov trace from telemetry recorded with weights.
/// Step `k` uses the measured flow over `[t_{k−1}, t_k]` and `(q, q̇)` of record `k − 1`.
pub fn lyapunov_from_telemetry(
    records: &[TelemetryRecord],
    oracle: &OracleWeights,
    gains: &LearnerGains,
    dt: f64,
) -> Result<LyapunovTrace> {
    let mut trace = LyapunovTrace::new();
    for w in records.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let weights = cur.weights.as_ref().ok_or_else(|| Error::InvalidConfig("telemetry lacks weights".into()))?;
        let flow = (&cur.x - &prev.x) / dt;
        let delta = delta_proxy(&flow, &prev.q, &prev.qdot, oracle)?;
        trace.push(cur.t, dt, &cur.e, &cur.x_tilde, &cur.r_x, &delta, weights, oracle, gains)?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub oracle_fit_residual: f64,
    /// Largest `‖δ‖` and `‖Δδ‖/dt` measured against the oracle weights.
    pub observed_bounds: PerturbationBounds,
    pub monotonicity: Option<MonotonicityReport>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Runs the scenario with weight recording, fits oracle weights over the visited
/// region and checks convergence, the gain conditions, that the assumed perturbation
/// bounds cover the observed ones, and the Lyapunov decrease.
pub fn verify_scenario(
    cfg: &ScenarioConfig,
    obs: &mut dyn LoopObserver,
) -> Result<(RunReport, OracleWeights, LyapunovTrace, VerifyReport)> {
    let mut cfg = cfg.clone();
    cfg.record_weights = true;
    let report = run_scenario(&cfg, obs)?;
    let per_dim = if report.session.plant.config().n() <= 2 { 15 } else { 3 };
    let oracle = oracle_for_run(&report, per_dim, 2.0)?;
    let trace = lyapunov_from_telemetry(&report.records, &oracle, &report.session.learner, report.session.dt)?;
    let mut failures = Vec::new();
    match &report.summary.status {
        RunStatus::Converged => {}
        RunStatus::MaxDuration => failures.push("did not converge".to_string()),
        RunStatus::Aborted { reason } => failures.push(format!("aborted: {reason}")),
    }
    match &report.summary.gain_conditions {
        Some(g) if g.pass() => {}
        Some(_) => failures.push("gain conditions fail".to_string()),
        None => failures.push("gain conditions not evaluated".to_string()),
    }
    let observed = trace.observed_bounds();
    if let Some(b) = report.summary.perturbation_bounds {
        if b.b_delta1 < observed.b_delta1 || b.b_delta2 < observed.b_delta2 {
            failures.push(format!(
                "assumed bounds ({:.4}, {:.4}) do not cover the observed ({:.4}, {:.4})",
                b.b_delta1, b.b_delta2, observed.b_delta1, observed.b_delta2
            ));
        }
    }
    let monotonicity = match trace.records.first() {
        Some(first) => {
            let v0 = first.terms.total;
            let rep = monotonicity_check(&trace.records, MONOTONE_TOL * v0)?;
            if rep.compliance < MIN_COMPLIANCE {
                failures.push(format!("lyapunov compliance {:.4} < {MIN_COMPLIANCE}", rep.compliance));
            }
            if rep.min_r < -R_TOL * v0 {
                failures.push(format!("R reached {:.3e}", rep.min_r));
            }
            Some(rep)
        }
        None => {
            failures.push("empty lyapunov trace".to_string());
            None
        }
    };
    let verdict = VerifyReport {
        oracle_fit_residual: oracle.fit_residual,
        observed_bounds: observed,
        monotonicity,
        pass: failures.is_empty(),
        failures,
    };
    Ok((report, oracle, trace, verdict))
}

/// Frobenius error of `bank` against the plant Jacobian, averaged over `qs`.
pub fn mean_jacobian_error(
    bank: &RbfBank,
    plant: &PlantConfig,
    kind: crate::features::FeatureKind,
    qs: &[DVector<f64>],
) -> Result<f64> {
    if qs.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let total = qs.iter().try_fold(0.0, |acc, q| {
        let j = crate::plant::plant_jacobian_fd(plant, q, kind)?;
        Ok::<_, Error>(acc + (crate::learner::estimate_jacobian(bank, q) - j).norm())
    })?;
    Ok(total / qs.len() as f64)
}
