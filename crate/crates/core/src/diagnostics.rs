//! Simulation-only diagnostics: least-squares ideal weights for the simulated plant,
//! the Lyapunov candidate with its auxiliary integral, and convergence metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::learner::{build_parameterization, rbf_activation, LearnerGains, PerturbationBounds, RbfBank};
use crate::plant::{plant_jacobian_fd, PlantConfig};
use crate::sat::sat_vec;

/// Fits are rejected above this Gram-matrix condition number.
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Least-squares ideal weights on a fixed RBF basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleWeights {
    pub weights: DVector<f64>,
    /// Largest row-wise Jacobian approximation error over the fit grid.
    pub fit_residual: f64,
    /// Largest Gram-matrix condition number among the per-row fits.
    pub condition: f64,
    /// The basis with `weights` loaded.
    pub bank: RbfBank,
}

impl OracleWeights {
    pub fn to_json(&self) -> Result<String> {
        let mut doc = self.bank.to_document(true);
        doc.fit_residual = Some(self.fit_residual);
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Sum over the grid of squared Frobenius errors.
    pub fn sse<F>(&self, grid: &[DVector<f64>], jacobian: F) -> Result<f64>
    where
        F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
    {
        grid.iter().try_fold(0.0, |acc, q| {
            let err = crate::learner::estimate_jacobian(&self.bank, q) - jacobian(q)?;
            Ok(acc + err.norm_squared())
        })
    }
}

/// Fits every network of `basis` to the rows of `jacobian` sampled on `grid`.
/// Minimum-norm solution via the SVD pseudo-inverse, so an underdetermined grid
/// interpolates exactly.
pub fn fit_oracle_weights_with<F>(basis: &RbfBank, grid: &[DVector<f64>], jacobian: F) -> Result<OracleWeights>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let dims = basis.dims();
    if grid.is_empty() {
        return Err(Error::InvalidConfig("oracle grid is empty".into()));
    }
    let jacs = grid.iter().map(&jacobian).collect::<Result<Vec<_>>>()?;
    for j in &jacs {
        if j.shape() != (dims.m, dims.n) {
            return Err(Error::DimensionMismatch { what: "oracle jacobian", expected: dims.m * dims.n, got: j.len() });
        }
    }
    let g = grid.len();
    let mut bank = basis.clone();
    let mut condition: f64 = 1.0;
    let mut residual: f64 = 0.0;
    for (i, net) in bank.nets_mut().iter_mut().enumerate() {
        let mut phi = DMatrix::zeros(g, dims.k);
        let mut target = DMatrix::zeros(g, dims.n);
        for (r, (q, j)) in grid.iter().zip(&jacs).enumerate() {
            phi.set_row(r, &rbf_activation(net, q).transpose());
            target.set_row(r, &j.row(i));
        }
        let svd = phi.clone().svd(true, true);
        let kept = g.min(dims.k);
        let sv = &svd.singular_values;
        let smax = sv.max();
        let smin = sv.iter().take(kept).copied().fold(f64::INFINITY, f64::min);
        let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(cond <= MAX_FIT_CONDITION) {
            return Err(Error::IllConditionedFit(cond));
        }
        condition = condition.max(cond);
        let w_t = svd.solve(&target, 0.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let fitted = &phi * &w_t;
        for r in 0..g {
            residual = residual.max((fitted.row(r) - target.row(r)).norm());
        }
        net.weights = w_t.transpose();
    }
    let weights = bank.vectorize();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("oracle weights"));
    }
    Ok(OracleWeights { weights, fit_residual: residual, condition, bank })
}

/// Oracle fit against the central-difference Jacobian of the simulated plant.
/// Grid points where the feature is undefined (straight robot, undefined twist) are skipped.
pub fn fit_oracle_weights(
    cfg: &PlantConfig,
    kind: FeatureKind,
    basis: &RbfBank,
    grid: &[DVector<f64>],
) -> Result<OracleWeights> {
    let usable: Vec<DVector<f64>> = grid
        .iter()
        .filter(|q| !matches!(plant_jacobian_fd(cfg, q, kind), Err(Error::DegenerateTwist(_))))
        .cloned()
        .collect();
    fit_oracle_weights_with(basis, &usable, |q| plant_jacobian_fd(cfg, q, kind))
}

/// Tensor grid with `per_dim` points per actuator between `lo` and `hi` inclusive.
pub fn tensor_grid(lo: &DVector<f64>, hi: &DVector<f64>, per_dim: usize) -> Vec<DVector<f64>> {
    let n = lo.len();
    let per_dim = per_dim.max(1);
    let axis = |d: usize, i: usize| {
        if per_dim == 1 {
            0.5 * (lo[d] + hi[d])
        } else {
            lo[d] + (hi[d] - lo[d]) * i as f64 / (per_dim - 1) as f64
        }
    };
    let total = per_dim.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_iterator(
                n,
                (0..n).map(|d| {
                    let i = idx % per_dim;
                    idx /= per_dim;
                    axis(d, i)
                }),
            )
        })
        .collect()
}

/// Perturbation proxy `δ̂ = ẋ − M(q, q̇) W̄`.
pub fn delta_proxy(
    flow: &DVector<f64>,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    oracle: &OracleWeights,
) -> Result<DVector<f64>> {
    let reg = build_parameterization(&oracle.bank, q, qdot)?;
    if flow.len() != reg.nrows() {
        return Err(Error::DimensionMismatch { what: "flow", expected: reg.nrows(), got: flow.len() });
    }
    Ok(flow - reg * &oracle.weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LyapunovTerms {
    /// `½ k_e eᵀe`
    pub control: f64,
    /// `½ k_x x̃ᵀx̃`
    pub estimation: f64,
    /// `½ W̃ᵀ Γ_W W̃` with `W̃ = W̄ − Ŵ`
    pub weights: f64,
    /// `k_r R`
    pub filtered: f64,
    pub total: f64,
}

pub fn lyapunov_value(
    e: &DVector<f64>,
    x_tilde: &DVector<f64>,
    w_hat: &DVector<f64>,
    w_bar: &DVector<f64>,
    gains: &LearnerGains,
    r: f64,
) -> LyapunovTerms {
    let control = 0.5 * gains.k_e * e.norm_squared();
    let estimation = 0.5 * gains.k_x * x_tilde.norm_squared();
    let weights = 0.5 * (w_bar - w_hat).iter().enumerate().map(|(c, w)| w * w / gains.gamma_w_inv.get(c)).sum::<f64>();
    let filtered = gains.k_r * r;
    LyapunovTerms { control, estimation, weights, filtered, total: control + estimation + weights + filtered }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    pub t: f64,
    pub terms: LyapunovTerms,
    pub r: f64,
    pub h: f64,
    pub delta_norm: f64,
}

/// Integrates `Ḣ = r_xᵀ(δ − β_x sat(x̃))` and records `V` per step.
#[derive(Debug, Clone, Default)]
pub struct LyapunovTrace {
    pub records: Vec<LyapunovRecord>,
    r0: Option<f64>,
    h: f64,
    last_delta: Option<DVector<f64>>,
    observed: PerturbationBounds,
}

impl LyapunovTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Largest `‖δ‖` and `‖Δδ‖/dt` seen so far.
    pub fn observed_bounds(&self) -> PerturbationBounds {
        self.observed
    }

    /// Appends one sample. The first call fixes `R(0) = β_x Σ|x̃_i(0)| − x̃(0)ᵀδ(0)`
    /// and `H(0) = 0`; later calls integrate `H` over the preceding `dt`.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        t: f64,
        dt: f64,
        e: &DVector<f64>,
        x_tilde: &DVector<f64>,
        r_x: &DVector<f64>,
        delta: &DVector<f64>,
        w_hat: &DVector<f64>,
        oracle: &OracleWeights,
        gains: &LearnerGains,
    ) -> Result<LyapunovRecord> {
        if let Some(last) = self.records.last() {
            if !(t > last.t) {
                return Err(Error::InvalidConfig("lyapunov trace times must increase".into()));
            }
        }
        let r0 = match self.r0 {
            Some(r0) => {
                let hdot = r_x.dot(&(delta - sat_vec(x_tilde, gains.eps_sat) * gains.beta_x));
                self.h += dt * hdot;
                r0
            }
            None => {
                let r0 = gains.beta_x * x_tilde.lp_norm(1) - x_tilde.dot(delta);
                self.r0 = Some(r0);
                r0
            }
        };
        self.observed.b_delta1 = self.observed.b_delta1.max(delta.norm());
        if let Some(prev) = &self.last_delta {
            self.observed.b_delta2 = self.observed.b_delta2.max((delta - prev).norm() / dt);
        }
        self.last_delta = Some(delta.clone());
        let r = r0 - self.h;
        let terms = lyapunov_value(e, x_tilde, w_hat, &oracle.weights, gains, r);
        let rec = LyapunovRecord { t, terms, r, h: self.h, delta_norm: delta.norm() };
        self.records.push(rec);
        Ok(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub transitions: usize,
    pub compliant: usize,
    pub compliance: f64,
    /// Largest `V(t+dt) − V(t)` over all transitions (may be negative).
    pub worst_increase: f64,
    pub worst_time: f64,
    pub v0: f64,
    pub min_r: f64,
}

/// Fraction of steps with `V(t+dt) ≤ V(t) + tol`.
pub fn monotonicity_check(records: &[LyapunovRecord], tol: f64) -> Result<MonotonicityReport> {
    let first = records.first().ok_or(Error::EmptyTrace)?;
    let mut compliant = 0;
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_time = first.t;
    for w in records.windows(2) {
        let inc = w[1].terms.total - w[0].terms.total;
        if inc <= tol {
            compliant += 1;
        }
        if inc > worst_increase {
            worst_increase = inc;
            worst_time = w[1].t;
        }
    }
    let transitions = records.len() - 1;
    Ok(MonotonicityReport {
        transitions,
        compliant,
        compliance: if transitions == 0 { 1.0 } else { compliant as f64 / transitions as f64 },
        worst_increase: if transitions == 0 { 0.0 } else { worst_increase },
        worst_time,
        v0: first.terms.total,
        min_r: records.iter().map(|r| r.r).fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    /// First time after which `‖e‖ ≤ ε_e` held for the hold window.
    pub time_to_threshold: Option<f64>,
    pub never_converged: bool,
    pub eps_e: f64,
    /// Last recorded norms; absent for empty telemetry.
    pub final_norm_e: Option<f64>,
    pub final_norm_xtilde: Option<f64>,
    pub final_norm_xtildedot: Option<f64>,
}

/// Metrics over recorded series of equal length.
pub fn convergence_metrics(
    times: &[f64],
    norm_e: &[f64],
    norm_xtilde: &[f64],
    norm_xtildedot: &[f64],
    eps_e: f64,
) -> ConvergenceMetrics {
    let time = time_to_threshold(times, norm_e, eps_e, CONVERGENCE_HOLD_S);
    ConvergenceMetrics {
        time_to_threshold: time,
        never_converged: time.is_none(),
        eps_e,
        final_norm_e: norm_e.last().copied(),
        final_norm_xtilde: norm_xtilde.last().copied(),
        final_norm_xtildedot: norm_xtildedot.last().copied(),
    }
}

/// Seconds for which the threshold must hold.
pub const CONVERGENCE_HOLD_S: f64 = 1.0;

/// Tracks when `‖e‖ ≤ ε_e` first held for `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceTracker {
    pub eps_e: f64,
    pub hold: f64,
    below_since: Option<f64>,
    converged_at: Option<f64>,
}

impl ConvergenceTracker {
    pub fn new(eps_e: f64, hold: f64) -> Self {
        Self { eps_e, hold, below_since: None, converged_at: None }
    }

    /// Returns true once the hold window has been satisfied.
    pub fn update(&mut self, t: f64, norm_e: f64) -> bool {
        if self.converged_at.is_some() {
            return true;
        }
        if norm_e <= self.eps_e {
            let since = *self.below_since.get_or_insert(t);
            if t - since >= self.hold - 1e-9 {
                self.converged_at = Some(since);
            }
        } else {
            self.below_since = None;
        }
        self.converged_at.is_some()
    }

    pub fn converged_at(&self) -> Option<f64> {
        self.converged_at
    }
}

/// Convergence time over a recorded `(t, ‖e‖)` series.
pub fn time_to_threshold(times: &[f64], norm_e: &[f64], eps_e: f64, hold: f64) -> Option<f64> {
    let mut tracker = ConvergenceTracker::new(eps_e, hold);
    times.iter().zip(norm_e).find_map(|(t, e)| tracker.update(*t, *e).then(|| tracker.converged_at()).flatten())
}

/// Mean convergence time of runs `2..N` divided by that of run 1.
pub fn warm_start_speedup(times: &[f64]) -> Option<f64> {
    let (first, rest) = times.split_first()?;
    if rest.is_empty() || !(*first > 0.0) {
        return None;
    }
    Some(rest.iter().sum::<f64>() / rest.len() as f64 / first)
}
