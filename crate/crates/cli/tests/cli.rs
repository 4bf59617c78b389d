use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shapeflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn shapeflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeflow")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

#[test]
fn run_writes_telemetry_summary_and_bank() {
    let out = scratch("run");
    let scenario = scenarios().join("racs2_two_points.json");
    let result = shapeflow(&out, &["run", scenario.to_str().unwrap(), "--no-plots"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let dir = out.join("racs2_two_points");
    for file in ["telemetry.csv", "summary.json", "bank.json"] {
        assert!(dir.join(file).is_file(), "{file}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["name"], "racs2_two_points");
    assert!(String::from_utf8_lossy(&result.stdout).contains("time to threshold"));
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn seed_override_changes_noisy_output() {
    let scenario = scenarios().join("racs2_noisy_payload.json");
    let csv = |seed: &str, tag: &str| {
        let out = scratch(tag);
        let result = shapeflow(&out, &["run", scenario.to_str().unwrap(), "--no-plots", "--seed", seed]);
        assert!(result.status.success());
        let text = std::fs::read_to_string(out.join("racs2_noisy_payload/telemetry.csv")).unwrap();
        std::fs::remove_dir_all(out).unwrap();
        text
    };
    assert_eq!(csv("3", "seed-a"), csv("3", "seed-b"));
    assert_ne!(csv("3", "seed-c"), csv("4", "seed-d"));
}

#[test]
fn verify_passes_on_the_lyapunov_scenario() {
    let out = scratch("verify");
    let scenario = scenarios().join("racs2_lyapunov.json");
    let result = shapeflow(&out, &["verify", scenario.to_str().unwrap(), "--no-plots"]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "{stdout}");
    assert!(stdout.contains("observed perturbation bounds"));
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn missing_scenario_exits_with_error() {
    let out = scratch("missing");
    let result = shapeflow(&out, &["run", "/nonexistent/scenario.json"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("loading"));
}
