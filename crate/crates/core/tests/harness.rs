mod common;

use common::*;
use nalgebra::DVector;
use shapeflow::diagnostics::convergence_metrics;
use shapeflow::harness::{
    axis_range, csv_header, emit_outputs, mean_jacobian_error, run_repeat, run_scenario, telemetry_csv, LoopObserver,
    NoObserver, Phase, ScenarioConfig, ServoSession,
};
use shapeflow::learner::{estimate_jacobian, RbfBank, WarmupSpec};
use shapeflow::plant::plant_jacobian_fd;

#[derive(Default)]
struct Trace(Vec<(usize, Phase)>);

impl LoopObserver for Trace {
    fn on_phase(&mut self, step: usize, phase: Phase) {
        self.0.push((step, phase));
    }
}

const ORDER: [Phase; 8] = [
    Phase::Predict,
    Phase::ReadQ,
    Phase::Adapt,
    Phase::Jacobian,
    Phase::Control,
    Phase::Command,
    Phase::Measure,
    Phase::Error,
];

fn short(mut cfg: ScenarioConfig, seconds: f64) -> ScenarioConfig {
    cfg.max_duration_s = seconds;
    cfg
}

#[test]
fn loop_phases_run_in_order() {
    let cfg = scenario("racs2_repeat");
    let mut trace = Trace::default();
    let report = run_scenario(&cfg, &mut trace).unwrap();
    let steps = report.records.len();
    assert!(steps > 10);
    for (k, chunk) in trace.0.chunks(ORDER.len()).enumerate() {
        assert!(chunk.iter().all(|(s, _)| *s == k));
        let phases: Vec<Phase> = chunk.iter().map(|(_, p)| *p).collect();
        if k + 1 < steps {
            assert_eq!(phases, ORDER, "step {k}");
        } else {
            assert_eq!(phases, &ORDER[..phases.len()], "last step {k}");
        }
    }
    let last = trace.0.last().unwrap();
    assert_eq!(last.0, steps - 1);
    // The run stopped on convergence, so the last step never commands the plant.
    assert_eq!(last.1, Phase::Control);
}

#[test]
fn same_seed_gives_identical_csv() {
    for name in ["racs2_noisy_payload", "scm6_dep_bta"] {
        let cfg = short(scenario(name), 15.0);
        let a = run_scenario(&cfg, &mut NoObserver).unwrap();
        let b = run_scenario(&cfg, &mut NoObserver).unwrap();
        let (n, m) = (cfg.plant_config().unwrap().n(), cfg.feature.dim());
        assert_eq!(telemetry_csv(&a.records, n, m), telemetry_csv(&b.records, n, m), "{name}");
        let mut other = cfg.clone();
        other.seed += 1;
        let c = run_scenario(&other, &mut NoObserver).unwrap();
        assert_ne!(telemetry_csv(&a.records, n, m), telemetry_csv(&c.records, n, m), "{name}");
    }
}

#[test]
fn empty_telemetry_is_header_only() {
    let csv = telemetry_csv(&[], 2, 2);
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(csv.trim_end(), csv_header(2, 2).trim_end());
    let metrics = convergence_metrics(&[], &[], &[], &[], 0.5);
    assert!(metrics.never_converged);
    assert_eq!(metrics.time_to_threshold, None);
    assert_eq!(metrics.final_norm_e, None);

    let dir = scratch_dir("empty");
    let files = emit_outputs(&[], &serde_json::json!({"empty": true}), 2, 2, &dir, true).unwrap();
    assert_eq!(files.len(), 5);
    assert_eq!(std::fs::read_to_string(dir.join("telemetry.csv")).unwrap(), csv);
    std::fs::remove_dir_all(dir).unwrap();
}

fn svg_attr(svg: &str, name: &str) -> f64 {
    let key = format!("{name}=\"");
    let start = svg.find(&key).unwrap() + key.len();
    let end = start + svg[start..].find('"').unwrap();
    svg[start..end].parse().unwrap()
}

#[test]
fn plots_span_the_data_with_margin() {
    let cfg = short(scenario("racs2_two_points"), 10.0);
    let report = run_scenario(&cfg, &mut NoObserver).unwrap();
    let dir = scratch_dir("svg");
    emit_outputs(&report.records, &report.summary, 2, 6, &dir, true).unwrap();
    let norm_e = norms(&report.records, |r| r.norm_e);
    let (lo, hi) = norm_e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let svg = std::fs::read_to_string(dir.join("norm_e.svg")).unwrap();
    let span = hi - lo;
    assert!((svg_attr(&svg, "data-y-min") - (lo - 0.05 * span)).abs() < 1e-9 * span);
    assert!((svg_attr(&svg, "data-y-max") - (hi + 0.05 * span)).abs() < 1e-9 * span);
    let t_last = report.records.last().unwrap().t;
    assert!((svg_attr(&svg, "data-x-max") - 1.05 * t_last).abs() < 1e-9);
    assert_eq!(axis_range(norm_e.iter().copied()), (svg_attr(&svg, "data-y-min"), svg_attr(&svg, "data-y-max")));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn warmup_improves_jacobian_at_rest() {
    let cfg = scenario("racs2_warmup");
    let mut session = ServoSession::from_config(&cfg).unwrap();
    let rest = session.plant.config().home.clone();
    let truth = plant_jacobian_fd(session.plant.config(), &rest, cfg.feature).unwrap();
    let before = (estimate_jacobian(&session.bank, &rest) - &truth).norm();
    session.run_warmup(&WarmupSpec { duration_s: 30.0, amplitude: 10.0, base_freq_hz: 0.1 }, 1).unwrap();
    let after = (estimate_jacobian(&session.bank, &rest) - &truth).norm();
    assert!(after < before, "before {before}, after {after}");
}

#[test]
fn zero_amplitude_warmup_leaves_bank_unchanged() {
    let cfg = scenario("racs2_warmup");
    let mut session = ServoSession::from_config(&cfg).unwrap();
    let start = session.bank.clone();
    session.run_warmup(&WarmupSpec { duration_s: 5.0, amplitude: 0.0, base_freq_hz: 0.1 }, 1).unwrap();
    assert_eq!(session.bank, start);
}

#[test]
fn warm_started_second_run_is_faster() {
    let cfg = scenario("racs2_repeat");
    let report = run_repeat(&cfg, 2, &mut NoObserver).unwrap();
    let times = &report.summary.convergence_times;
    let (t1, t2) = (times[0].unwrap(), times[1].unwrap());
    assert!(t2 < t1, "first {t1}, second {t2}");
    // The persisted bank is exactly what the second run started from.
    let reloaded = RbfBank::from_json(&report.runs[0].bank_json).unwrap();
    assert_eq!(reloaded.to_json().unwrap(), report.runs[0].bank_json);
}

#[test]
fn warm_start_bank_file_is_loaded() {
    let cfg = scenario("racs2_repeat");
    let first = run_scenario(&cfg, &mut NoObserver).unwrap();
    let dir = scratch_dir("bank");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bank.json");
    std::fs::write(&path, first.session.bank.to_json().unwrap()).unwrap();
    let mut warm = cfg.clone();
    warm.warm_start_bank = Some(path);
    let session = ServoSession::from_config(&warm).unwrap();
    assert_eq!(session.bank, first.session.bank);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn learning_reduces_jacobian_error_along_trajectory() {
    let cfg = scenario("racs2_warmup");
    let fresh = ServoSession::from_config(&cfg).unwrap().bank;
    let report = run_scenario(&cfg, &mut NoObserver).unwrap();
    let qs: Vec<DVector<f64>> = report.records.iter().map(|r| r.q.clone()).collect();
    let plant = report.session.plant.config();
    let before = mean_jacobian_error(&fresh, plant, cfg.feature, &qs).unwrap();
    let after = mean_jacobian_error(&report.session.bank, plant, cfg.feature, &qs).unwrap();
    assert!(after < before, "before {before}, after {after}");
}
