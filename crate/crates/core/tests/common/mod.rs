#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeflow::features::{extract_feature, feature_jacobian, BackbonePoints, FeatureKind};
use shapeflow::harness::{ScenarioConfig, TelemetryRecord};
use shapeflow::learner::RbfBank;
use shapeflow::plant::{forward_shape, PlantConfig};
use shapeflow::Error;

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shapeflow-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Uniform sample inside the actuator limits.
pub fn random_q(cfg: &PlantConfig, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(cfg.n(), |i, _| rng.gen_range(cfg.q_min[i]..cfg.q_max[i]))
}

/// Central differences of `extract_feature` over every point coordinate.
pub fn feature_jacobian_fd(kind: FeatureKind, pts: &BackbonePoints, cfg: &PlantConfig, h: f64) -> DMatrix<f64> {
    let base = pts.stacked();
    let mut jac = DMatrix::zeros(kind.dim(), base.len());
    for c in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[c] += h;
        minus[c] -= h;
        let fp = extract_feature(kind, &BackbonePoints::from_stacked(&plus).unwrap(), &cfg.markers).unwrap().values;
        let fm = extract_feature(kind, &BackbonePoints::from_stacked(&minus).unwrap(), &cfg.markers).unwrap().values;
        jac.set_column(c, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Worst relative error of the analytic feature Jacobian against central differences
/// over `count` random plant configurations. Singular configurations are skipped.
pub fn feature_fd_worst(cfg: &PlantConfig, kind: FeatureKind, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < count {
        let q = random_q(cfg, &mut rng);
        let pts = forward_shape(cfg, &q).unwrap();
        let analytic = match feature_jacobian(kind, &pts, &cfg.markers) {
            Ok(j) => j,
            Err(Error::NearSingularFeature(_)) | Err(Error::DegenerateTwist(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        let fd = feature_jacobian_fd(kind, &pts, cfg, 1e-5);
        worst = worst.max((&analytic - &fd).norm() / analytic.norm());
        done += 1;
    }
    worst
}

/// Random `rows × cols` matrix with full rank.
pub fn full_rank_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-10.0..10.0));
        let sv = a.singular_values();
        if sv.min() > 1e-3 * sv.max() {
            return a;
        }
    }
}

/// Largest violation of the four Penrose conditions.
pub fn penrose_residual(a: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let ap = a * p;
    let pa = p * a;
    [(&ap * a - a).amax(), (&pa * p - p).amax(), (ap.transpose() - &ap).amax(), (pa.transpose() - &pa).amax()]
        .into_iter()
        .fold(0.0, f64::max)
}

/// `Θᵀ(q) Qᵀ(q̇)` formed explicitly: `Θ = blockdiag(θ_1 … θ_m)` (`km × m`) and
/// `Q = I_km ⊗ q̇ᵀ` (`km × kmn`).
pub fn explicit_regressor(bank: &RbfBank, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
    let d = bank.dims();
    let mut theta = DMatrix::zeros(d.k * d.m, d.m);
    for (i, net) in bank.nets().iter().enumerate() {
        let t = shapeflow::learner::rbf_activation(net, q);
        theta.view_mut((i * d.k, i), (d.k, 1)).copy_from(&t);
    }
    let q_block = DMatrix::<f64>::identity(d.k * d.m, d.k * d.m).kronecker(&qdot.transpose());
    theta.transpose() * q_block
}

pub fn norms(records: &[TelemetryRecord], f: fn(&TelemetryRecord) -> f64) -> Vec<f64> {
    records.iter().map(f).collect()
}

/// First time from which `series` stays below `threshold` until the end.
pub fn settles_below(times: &[f64], series: &[f64], threshold: f64) -> Option<f64> {
    match series.iter().rposition(|v| *v >= threshold) {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

pub fn v3(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    println!("criterion {id:>2} [{}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
}
