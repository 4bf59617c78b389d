use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use shapeflow::diagnostics::tensor_grid;
use shapeflow::harness::{
    emit_outputs, oracle_for_run, run_repeat, run_scenario, verify_scenario, NoObserver, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "shapeflow", version, about = "Adaptive shape-control simulation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run { scenario: PathBuf },
    /// Repeat a scenario with weights carried over between runs.
    Repeat {
        scenario: PathBuf,
        #[arg(long, default_value_t = 4)]
        times: usize,
    },
    /// Run every scenario in a directory in parallel.
    Sweep { dir: PathBuf },
    /// Fit and persist oracle weights over the region a run visits.
    Oracle {
        scenario: PathBuf,
        /// Grid points per actuator; fits over the actuator limits instead of the visited region.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Run with Lyapunov diagnostics and the gain-condition report.
    Verify { scenario: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dims(cfg: &ScenarioConfig) -> Result<(usize, usize)> {
    Ok((cfg.plant_config()?.n(), cfg.feature.dim()))
}

fn cmd_run(cfg: &ScenarioConfig, out: &Path, plots: bool) -> Result<()> {
    let report = run_scenario(cfg, &mut NoObserver)?;
    let (n, m) = dims(cfg)?;
    let dir = out.join(&cfg.name);
    emit_outputs(&report.records, &report.summary, n, m, &dir, plots)?;
    std::fs::write(dir.join("bank.json"), report.session.bank.to_json()?)?;
    for w in &report.summary.warnings {
        eprintln!("warning [{}]: {w}", cfg.name);
    }
    let c = &report.summary.convergence;
    println!(
        "{}: {:?} after {} steps, time to threshold {}",
        cfg.name,
        report.summary.status,
        report.summary.steps,
        c.time_to_threshold.map_or("never".into(), |t| format!("{t:.2} s"))
    );
    Ok(())
}

fn cmd_repeat(cfg: &ScenarioConfig, times: usize, out: &Path, plots: bool) -> Result<()> {
    let report = run_repeat(cfg, times, &mut NoObserver)?;
    let (n, m) = dims(cfg)?;
    let base = out.join(&cfg.name);
    for (i, run) in report.runs.iter().enumerate() {
        let dir = base.join(format!("run{}", i + 1));
        emit_outputs(&run.records, &run.summary, n, m, &dir, plots)?;
        std::fs::write(dir.join("bank.json"), &run.bank_json)?;
    }
    std::fs::write(base.join("repeat.json"), serde_json::to_string_pretty(&report.summary)?)?;
    for (i, t) in report.summary.convergence_times.iter().enumerate() {
        println!("run {}: {}", i + 1, t.map_or("never converged".into(), |t| format!("{t:.2} s")));
    }
    match report.summary.warm_start_speedup {
        Some(s) => println!("warm-start ratio (runs 2..N / run 1): {s:.3}"),
        None => println!("warm-start ratio unavailable"),
    }
    Ok(())
}

fn cmd_sweep(dir: &Path, seed: Option<u64>, out: &Path, plots: bool) -> Result<bool> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let results: Vec<(PathBuf, Result<()>)> = std::thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| s.spawn(move || (f.clone(), load(f, seed).and_then(|cfg| cmd_run(&cfg, out, plots)))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut ok = true;
    for (f, r) in results {
        if let Err(e) = r {
            ok = false;
            eprintln!("{}: {e:#}", f.display());
        }
    }
    Ok(ok)
}

fn cmd_oracle(cfg: &ScenarioConfig, grid: Option<usize>, out: &Path) -> Result<()> {
    let report = run_scenario(cfg, &mut NoObserver)?;
    let oracle = match grid {
        Some(per_dim) => {
            let plant = cfg.plant_config()?;
            let g = tensor_grid(&plant.q_min, &plant.q_max, per_dim);
            shapeflow::diagnostics::fit_oracle_weights(&plant, cfg.feature, &report.session.bank, &g)?
        }
        None => oracle_for_run(&report, if report.session.plant.config().n() <= 2 { 15 } else { 3 }, 2.0)?,
    };
    let dir = out.join(&cfg.name);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("oracle.json");
    std::fs::write(&path, oracle.to_json()?)?;
    println!(
        "{}: fit residual {:.4e}, condition {:.3e} -> {}",
        cfg.name,
        oracle.fit_residual,
        oracle.condition,
        path.display()
    );
    Ok(())
}

fn cmd_verify(cfg: &ScenarioConfig, out: &Path, plots: bool) -> Result<bool> {
    let (report, oracle, trace, verdict) = verify_scenario(cfg, &mut NoObserver)?;
    let (n, m) = dims(cfg)?;
    let dir = out.join(&cfg.name);
    emit_outputs(&report.records, &report.summary, n, m, &dir, plots)?;
    std::fs::write(dir.join("oracle.json"), oracle.to_json()?)?;
    let mut lyap = String::from("t,v,control,estimation,weights,filtered,r,h,delta_norm\n");
    for r in &trace.records {
        lyap.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.terms.total,
            r.terms.control,
            r.terms.estimation,
            r.terms.weights,
            r.terms.filtered,
            r.r,
            r.h,
            r.delta_norm
        ));
    }
    std::fs::write(dir.join("lyapunov.csv"), lyap)?;
    let doc = json!({
        "verify": verdict,
        "gain_conditions": report.summary.gain_conditions,
        "perturbation_bounds": report.summary.perturbation_bounds,
    });
    std::fs::write(dir.join("verify.json"), serde_json::to_string_pretty(&doc)?)?;
    if let Some(mono) = &verdict.monotonicity {
        println!("lyapunov compliance {:.4}, min R {:.3e}, V(0) {:.3e}", mono.compliance, mono.min_r, mono.v0);
    }
    let ob = verdict.observed_bounds;
    println!("observed perturbation bounds: b_delta1 {:.4}, b_delta2 {:.4}", ob.b_delta1, ob.b_delta2);
    if let Some(g) = &report.summary.gain_conditions {
        println!(
            "gain conditions: k_s margin {:.4} ({}), beta_x margin {:.4} ({})",
            g.switching_gain.margin,
            pass_word(g.switching_gain.pass),
            g.predictor_gain.margin,
            pass_word(g.predictor_gain.pass)
        );
    }
    for f in &verdict.failures {
        println!("FAIL: {f}");
    }
    println!("{}: {}", cfg.name, pass_word(verdict.pass));
    Ok(verdict.pass)
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let plots = !cli.no_plots;
    let result = match &cli.command {
        Command::Run { scenario } => load(scenario, cli.seed).and_then(|c| cmd_run(&c, &cli.out, plots)).map(|_| true),
        Command::Repeat { scenario, times } => {
            load(scenario, cli.seed).and_then(|c| cmd_repeat(&c, *times, &cli.out, plots)).map(|_| true)
        }
        Command::Sweep { dir } => cmd_sweep(dir, cli.seed, &cli.out, plots),
        Command::Oracle { scenario, grid } => {
            load(scenario, cli.seed).and_then(|c| cmd_oracle(&c, *grid, &cli.out)).map(|_| true)
        }
        Command::Verify { scenario } => load(scenario, cli.seed).and_then(|c| cmd_verify(&c, &cli.out, plots)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
