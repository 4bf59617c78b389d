//! Closed-loop scenario harness: configuration, the per-step servo loop, repeated
//! runs with weight persistence, Lyapunov verification and file outputs.

mod output;
mod runner;
mod scenario;
mod telemetry;
mod verify;

pub use output::{axis_range, emit_outputs, line_plot_svg, AXIS_MARGIN};
pub use runner::{
    run_repeat, run_scenario, LoopObserver, NoObserver, Phase, RepeatReport, RepeatRun, RepeatSummary, RunReport,
    RunStatus, RunSummary, ServoOptions, ServoOutcome, ServoSession, EPS_E_FLOOR, EPS_E_FRACTION,
};
pub use scenario::{ScenarioConfig, Target};
pub use telemetry::{csv_header, csv_row, telemetry_csv, TelemetryRecord};
pub use verify::{
    lyapunov_from_telemetry, mean_jacobian_error, oracle_for_run, verify_scenario, visited_region, VerifyReport,
    MIN_COMPLIANCE, MONOTONE_TOL, R_TOL,
};
