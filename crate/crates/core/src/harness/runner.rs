use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioConfig;
use super::telemetry::TelemetryRecord;
use crate::controller::{check_gain_conditions, control, ControllerGains, GainConditionReport};
use crate::diagnostics::{
    convergence_metrics, warm_start_speedup, ConvergenceMetrics, ConvergenceTracker, CONVERGENCE_HOLD_S,
};
use crate::error::{Error, Result};
use crate::features::{extract_feature, FeatureKind};
use crate::learner::{
    adapt_weights, estimate_jacobian, init_bank, warmup, LearnerGains, PerturbationBounds, PredictorState, RbfBank,
    WarmupReport, WarmupSpec,
};
use crate::plant::Plant;

/// Absolute floor on the default convergence threshold, feature units.
pub const EPS_E_FLOOR: f64 = 0.5;
/// Default threshold as a fraction of `‖e(0)‖`.
pub const EPS_E_FRACTION: f64 = 0.01;

/// Sub-steps of one control-loop iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Predict,
    ReadQ,
    Adapt,
    Jacobian,
    Control,
    Command,
    Measure,
    Error,
}

pub trait LoopObserver {
    fn on_phase(&mut self, step: usize, phase: Phase);
}

pub struct NoObserver;

impl LoopObserver for NoObserver {
    fn on_phase(&mut self, _: usize, _: Phase) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxDuration,
    Aborted { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoOptions {
    pub max_steps: usize,
    pub stop_on_convergence: bool,
    /// Convergence threshold; `max(1% ‖e(0)‖, 0.5)` when absent.
    pub eps_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoOutcome {
    pub records: Vec<TelemetryRecord>,
    pub status: RunStatus,
    pub eps_e: f64,
}

/// Closed-loop state carried across servo phases: the plant, the learned bank and
/// the shape-flow predictor.
#[derive(Debug, Clone)]
pub struct ServoSession {
    pub plant: Plant,
    pub bank: RbfBank,
    pub predictor: PredictorState,
    pub learner: LearnerGains,
    pub controller: ControllerGains,
    pub kind: FeatureKind,
    pub dt: f64,
    pub record_weights: bool,
    x: DVector<f64>,
    /// Interval commanded but not yet consumed by the predictor: `(q, q̇)` at its start.
    pending: Option<(DVector<f64>, DVector<f64>)>,
}

impl ServoSession {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let pcfg = cfg.plant_config()?;
        let q0 = cfg.initial_q(&pcfg)?;
        let m = cfg.feature.dim();
        let bank = match &cfg.warm_start_bank {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let bank = RbfBank::from_json(&text)?;
                let d = bank.dims();
                if d.m != m || d.n != pcfg.n() {
                    return Err(Error::DimensionMismatch {
                        what: "warm-start bank",
                        expected: m * pcfg.n(),
                        got: d.m * d.n,
                    });
                }
                bank
            }
            None => init_bank(m, cfg.neuron_count()?, &pcfg.q_min, &pcfg.q_max, cfg.init_scale(), cfg.seed)?,
        };
        let mut plant = Plant::new(pcfg, q0, cfg.sensor_model())?;
        plant.set_disturbances(cfg.disturbances.clone())?;
        let x = extract_feature(cfg.feature, plant.measure().0, &plant.config().markers)?.values;
        Ok(Self {
            predictor: PredictorState::new(&x),
            plant,
            bank,
            learner: cfg.learner()?,
            controller: cfg.controller()?,
            kind: cfg.feature,
            dt: cfg.dt(),
            record_weights: cfg.record_weights,
            x,
            pending: None,
        })
    }

    /// Latest measured feature.
    pub fn feature(&self) -> &DVector<f64> {
        &self.x
    }

    /// Open-loop excitation with adaptation active; see [`warmup`].
    pub fn run_warmup(&mut self, spec: &WarmupSpec, seed: u64) -> Result<WarmupReport> {
        if let Some((q, qdot)) = self.pending.take() {
            self.predictor.advance(&self.bank, &q, &qdot, &self.x, self.dt, &self.learner);
        }
        let report = warmup(
            &mut self.plant,
            self.kind,
            &mut self.bank,
            &mut self.predictor,
            &self.learner,
            spec,
            self.dt,
            seed,
        )?;
        self.x = self.predictor.last_x.clone();
        Ok(report)
    }

    /// Servoes toward `x_d`. Failures inside the loop end the phase with
    /// [`RunStatus::Aborted`] and keep every record produced so far.
    pub fn servo(
        &mut self,
        x_d: &DVector<f64>,
        opts: &ServoOptions,
        obs: &mut dyn LoopObserver,
    ) -> Result<ServoOutcome> {
        if x_d.len() != self.kind.dim() {
            return Err(Error::DimensionMismatch { what: "x_d", expected: self.kind.dim(), got: x_d.len() });
        }
        let mut e = &self.x - x_d;
        let eps_e = opts.eps_e.unwrap_or_else(|| (EPS_E_FRACTION * e.norm()).max(EPS_E_FLOOR));
        let mut tracker = ConvergenceTracker::new(eps_e, CONVERGENCE_HOLD_S);
        let mut records = Vec::with_capacity(opts.max_steps.min(1 << 16));
        let mut status = RunStatus::MaxDuration;
        for k in 0..opts.max_steps {
            match self.step(k, x_d, &mut e, &mut tracker, opts.stop_on_convergence, &mut records, obs) {
                Ok(true) => {
                    status = RunStatus::Converged;
                    break;
                }
                Ok(false) => {}
                Err(err) => {
                    status = RunStatus::Aborted { reason: err.to_string() };
                    break;
                }
            }
        }
        if status == RunStatus::MaxDuration && tracker.converged_at().is_some() {
            status = RunStatus::Converged;
        }
        Ok(ServoOutcome { records, status, eps_e })
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        k: usize,
        x_d: &DVector<f64>,
        e: &mut DVector<f64>,
        tracker: &mut ConvergenceTracker,
        stop_on_convergence: bool,
        records: &mut Vec<TelemetryRecord>,
        obs: &mut dyn LoopObserver,
    ) -> Result<bool> {
        let m = self.kind.dim();
        obs.on_phase(k, Phase::Predict);
        let flow = match self.pending.take() {
            Some((q_prev, qdot_prev)) => {
                let out = self.predictor.advance(&self.bank, &q_prev, &qdot_prev, &self.x, self.dt, &self.learner);
                Some((out, qdot_prev))
            }
            None => None,
        };
        if self.predictor.x_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shape estimation error"));
        }

        obs.on_phase(k, Phase::ReadQ);
        let q = self.plant.q().clone();

        obs.on_phase(k, Phase::Adapt);
        if let Some((out, qdot_prev)) = &flow {
            adapt_weights(&mut self.bank, &q, qdot_prev, e, &self.predictor.x_tilde, &out.r_x, &self.learner, self.dt)?;
        }

        obs.on_phase(k, Phase::Jacobian);
        let jac = estimate_jacobian(&self.bank, &q);

        obs.on_phase(k, Phase::Control);
        let (qdot, report) = control(&jac, e, &self.controller)?;

        let t = k as f64 * self.dt;
        let (x_tilde_dot, r_x) = match flow {
            Some((out, _)) => (out.x_tilde_dot, out.r_x),
            None => (DVector::zeros(m), DVector::zeros(m)),
        };
        let rec = TelemetryRecord {
            t,
            q: q.clone(),
            qdot: qdot.clone(),
            x: self.x.clone(),
            x_hat: self.predictor.x_hat.clone(),
            e: e.clone(),
            x_tilde: self.predictor.x_tilde.clone(),
            norm_e: e.norm(),
            norm_xtilde: self.predictor.x_tilde.norm(),
            norm_xtildedot: x_tilde_dot.norm(),
            x_tilde_dot,
            r_x,
            rank: report.jacobian_rank,
            min_sv: report.min_singular_value,
            clamped: report.velocity_clamped,
            disturbance: self.plant.disturbance_flags(),
            weights: self.record_weights.then(|| self.bank.vectorize()),
        };
        let norm_e = rec.norm_e;
        records.push(rec);
        if tracker.update(t, norm_e) && stop_on_convergence {
            return Ok(true);
        }

        obs.on_phase(k, Phase::Command);
        self.plant.step(&qdot, self.dt)?;
        self.pending = Some((q, qdot));

        obs.on_phase(k, Phase::Measure);
        self.x = extract_feature(self.kind, self.plant.measure().0, &self.plant.config().markers)?.values;

        obs.on_phase(k, Phase::Error);
        *e = &self.x - x_d;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control error"));
        }
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps: usize,
    pub duration_s: f64,
    pub initial_norm_e: Option<f64>,
    pub initial_norm_xtilde: Option<f64>,
    pub peak_norm_xtildedot: f64,
    pub convergence: ConvergenceMetrics,
    pub clamped_steps: usize,
    pub max_consecutive_clamped: usize,
    pub min_rank: Option<usize>,
    pub nan_detected: bool,
    pub perturbation_bounds: Option<PerturbationBounds>,
    pub gain_conditions: Option<GainConditionReport>,
    pub warnings: Vec<String>,
    pub config: ScenarioConfig,
}

impl RunSummary {
    pub fn new(
        cfg: &ScenarioConfig,
        outcome: &ServoOutcome,
        dt: f64,
        bounds: Option<PerturbationBounds>,
        controller: &ControllerGains,
        learner: &LearnerGains,
    ) -> Self {
        let recs = &outcome.records;
        let col = |f: fn(&TelemetryRecord) -> f64| recs.iter().map(f).collect::<Vec<_>>();
        let times = col(|r| r.t);
        let convergence = convergence_metrics(
            &times,
            &col(|r| r.norm_e),
            &col(|r| r.norm_xtilde),
            &col(|r| r.norm_xtildedot),
            outcome.eps_e,
        );
        let mut run = 0;
        let mut max_run = 0;
        for r in recs {
            run = if r.clamped { run + 1 } else { 0 };
            max_run = max_run.max(run);
        }
        let mut warnings = Vec::new();
        let gain_conditions = bounds.map(|b| check_gain_conditions(controller, learner, b));
        match &gain_conditions {
            None => warnings.push("gain conditions not evaluated: no perturbation bounds".to_string()),
            Some(g) if !g.pass() => warnings.push(format!(
                "gain conditions fail: k_s margin {:.4}, beta_x margin {:.4}",
                g.switching_gain.margin, g.predictor_gain.margin
            )),
            _ => {}
        }
        let nan_detected = matches!(&outcome.status, RunStatus::Aborted { reason } if reason.contains("non-finite"));
        Self {
            name: cfg.name.clone(),
            seed: cfg.seed,
            status: outcome.status.clone(),
            steps: recs.len(),
            duration_s: recs.len() as f64 * dt,
            initial_norm_e: recs.first().map(|r| r.norm_e),
            initial_norm_xtilde: recs.first().map(|r| r.norm_xtilde),
            peak_norm_xtildedot: recs.iter().map(|r| r.norm_xtildedot).fold(0.0, f64::max),
            convergence,
            clamped_steps: recs.iter().filter(|r| r.clamped).count(),
            max_consecutive_clamped: max_run,
            min_rank: recs.iter().map(|r| r.rank).min(),
            nan_detected,
            perturbation_bounds: bounds,
            gain_conditions,
            warnings,
            config: cfg.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<TelemetryRecord>,
    pub summary: RunSummary,
    pub warmup: Option<WarmupReport>,
    pub session: ServoSession,
}

fn prepare(cfg: &ScenarioConfig) -> Result<(ServoSession, Option<WarmupReport>, Option<PerturbationBounds>)> {
    let mut session = ServoSession::from_config(cfg)?;
    let warm = match &cfg.warmup {
        Some(spec) => Some(session.run_warmup(spec, cfg.seed.wrapping_add(1))?),
        None => None,
    };
    let bounds = session.learner.perturbation_bounds.or(warm.as_ref().map(|w| w.perturbation_bounds));
    Ok((session, warm, bounds))
}

/// Runs one scenario: optional warmup, then servoing until convergence or max duration.
pub fn run_scenario(cfg: &ScenarioConfig, obs: &mut dyn LoopObserver) -> Result<RunReport> {
    let (mut session, warm, bounds) = prepare(cfg)?;
    let x_d = cfg.desired_feature(session.plant.config())?;
    session.plant.start_servo_clock();
    let opts = ServoOptions {
        max_steps: cfg.max_steps(),
        stop_on_convergence: cfg.stop_on_convergence,
        eps_e: session.controller.eps_e,
    };
    let outcome = session.servo(&x_d, &opts, obs)?;
    let summary = RunSummary::new(cfg, &outcome, session.dt, bounds, &session.controller, &session.learner);
    Ok(RunReport { records: outcome.records, summary, warmup: warm, session })
}

#[derive(Debug, Clone)]
pub struct RepeatRun {
    pub records: Vec<TelemetryRecord>,
    pub summary: RunSummary,
    /// Drive back to the initial shape after the run, adaptation active.
    pub return_records: Vec<TelemetryRecord>,
    pub return_status: RunStatus,
    /// Bank persisted after the return phase, as reloaded by the next run.
    pub bank_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub convergence_times: Vec<Option<f64>>,
    /// Mean convergence time of runs 2..N over run 1.
    pub warm_start_speedup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RepeatReport {
    pub runs: Vec<RepeatRun>,
    pub summary: RepeatSummary,
}

/// Repeats the scenario, driving back to the initial shape between runs and
/// round-tripping the bank through JSON. Each run stops at convergence.
pub fn run_repeat(cfg: &ScenarioConfig, repeats: usize, obs: &mut dyn LoopObserver) -> Result<RepeatReport> {
    if repeats < 2 {
        return Err(Error::InvalidConfig(format!("repeat needs at least 2 runs, got {repeats}")));
    }
    let (mut session, _, bounds) = prepare(cfg)?;
    let x_init = session.feature().clone();
    let x_d = cfg.desired_feature(session.plant.config())?;
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        session.plant.start_servo_clock();
        let opts =
            ServoOptions { max_steps: cfg.max_steps(), stop_on_convergence: true, eps_e: session.controller.eps_e };
        let outcome = session.servo(&x_d, &opts, obs)?;
        let summary = RunSummary::new(cfg, &outcome, session.dt, bounds, &session.controller, &session.learner);
        let back = ServoOptions { eps_e: Some(outcome.eps_e), ..opts };
        let ret = session.servo(&x_init, &back, obs)?;
        let bank_json = session.bank.to_json()?;
        session.bank = RbfBank::from_json(&bank_json)?;
        let aborted =
            matches!(outcome.status, RunStatus::Aborted { .. }) || matches!(ret.status, RunStatus::Aborted { .. });
        runs.push(RepeatRun {
            records: outcome.records,
            summary,
            return_records: ret.records,
            return_status: ret.status,
            bank_json,
        });
        if aborted {
            break;
        }
    }
    let times: Vec<Option<f64>> = runs.iter().map(|r| r.summary.convergence.time_to_threshold).collect();
    let speedup = times.iter().copied().collect::<Option<Vec<f64>>>().and_then(|t| warm_start_speedup(&t));
    Ok(RepeatReport { runs, summary: RepeatSummary { convergence_times: times, warm_start_speedup: speedup } })
}
