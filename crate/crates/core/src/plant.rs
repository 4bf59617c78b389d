//! Ground-truth continuum robot used as a black-box plant.
//!
//! The kinematics are piecewise constant curvature: each section is a circular arc
//! whose curvature vector and length change (mm) are affine in the actuator positions
//! through the cable gain matrix. The bend rows are scaled to radians at rest length. The learner and controller never
//! look inside; they only see noisy sampled backbone points.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_feature, BackbonePoints, FeatureKind, SectionMarkers};

/// Half-range of the racs2 actuator coordinates (dial-degree-like units).
pub const ACTUATOR_RANGE: f64 = 100.0;
/// Half-range of the scm6 actuator coordinates (cable displacement, mm-like units).
pub const SCM6_RANGE: f64 = 20.0;
/// scm6 actuator speed limit, units per second.
pub const SCM6_QDOT_MAX: f64 = 2.0;
/// Finite-difference step for [`plant_jacobian_fd`], actuator units.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub rest_length: f64,
    pub extensible: bool,
    pub cable_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub name: String,
    /// Base section first.
    pub sections: Vec<SectionSpec>,
    /// Arc samples per section; `l = sections * segments_per_section + 1`.
    pub segments_per_section: usize,
    /// `3 * sections × n`: rows `[b_y, b_z, Δlength]` per section, base section first.
    /// The bend rows give radians at rest length; the angle scales with the actual length.
    pub cable_gain_matrix: DMatrix<f64>,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    /// Hard actuator speed limit, actuator units per second.
    pub qdot_max: f64,
    pub home: DVector<f64>,
    pub markers: SectionMarkers,
}

impl PlantConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "racs2" => Ok(Self::racs2()),
            "scm6" => Ok(Self::scm6()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// Two-DOF, 120 mm single-section colonoscope-like mechanism.
    pub fn racs2() -> Self {
        let s = 1.0 / ACTUATOR_RANGE;
        #[rustfmt::skip]
        let gains = DMatrix::from_row_slice(3, 2, &[
            2.40 * s,  0.30 * s,
           -0.20 * s,  2.20 * s,
            0.0,       0.0,
        ]);
        Self {
            name: "racs2".into(),
            sections: vec![SectionSpec { rest_length: 120.0, extensible: false, cable_count: 2 }],
            segments_per_section: 12,
            cable_gain_matrix: gains,
            q_min: DVector::from_element(2, -ACTUATOR_RANGE),
            q_max: DVector::from_element(2, ACTUATOR_RANGE),
            qdot_max: 20.0,
            home: DVector::from_column_slice(&[20.0, 10.0]),
            markers: SectionMarkers { tip: 0, mid: 6, base: 12, junction: None, proximal_mid: None },
        }
    }

    /// Six-DOF soft manipulator: two extensible 90 mm sections, three cables each.
    pub fn scm6() -> Self {
        let s = 1.0 / SCM6_RANGE;
        let bend = 1.0 * s;
        let stretch = 6.0 * s;
        let coupling = 0.15;
        let mut g = DMatrix::zeros(6, 6);
        for sec in 0..2 {
            let offset = if sec == 0 { 0.0 } else { std::f64::consts::FRAC_PI_3 };
            for c in 0..3 {
                let psi = offset + c as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
                let col = 3 * sec + c;
                g[(3 * sec, col)] = bend * psi.cos();
                g[(3 * sec + 1, col)] = bend * psi.sin();
                g[(3 * sec + 2, col)] = stretch;
                if sec == 1 {
                    // distal cables run through the proximal section
                    g[(0, col)] = coupling * bend * psi.cos();
                    g[(1, col)] = coupling * bend * psi.sin();
                }
            }
        }
        Self {
            name: "scm6".into(),
            sections: vec![
                SectionSpec { rest_length: 90.0, extensible: true, cable_count: 3 },
                SectionSpec { rest_length: 90.0, extensible: true, cable_count: 3 },
            ],
            segments_per_section: 8,
            cable_gain_matrix: g,
            q_min: DVector::from_element(6, -SCM6_RANGE),
            q_max: DVector::from_element(6, SCM6_RANGE),
            qdot_max: SCM6_QDOT_MAX,
            home: DVector::from_column_slice(&[25.0, -5.0, -5.0, 20.0, -10.0, 5.0]) * (SCM6_RANGE / 100.0),
            markers: SectionMarkers { tip: 0, mid: 4, base: 16, junction: Some(8), proximal_mid: Some(12) },
        }
    }

    pub fn n(&self) -> usize {
        self.cable_gain_matrix.ncols()
    }

    pub fn sample_count(&self) -> usize {
        self.sections.len() * self.segments_per_section + 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.cable_gain_matrix.nrows() != 3 * self.sections.len() {
            return Err(Error::DimensionMismatch {
                what: "cable gain rows",
                expected: 3 * self.sections.len(),
                got: self.cable_gain_matrix.nrows(),
            });
        }
        for (what, v) in [("q_min", &self.q_min), ("q_max", &self.q_max), ("home", &self.home)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { what, expected: n, got: v.len() });
            }
        }
        if self.q_min.iter().zip(self.q_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::BadRange("q_min must be below q_max".into()));
        }
        if self.sections.iter().any(|s| !(s.rest_length > 0.0)) || self.segments_per_section == 0 {
            return Err(Error::InvalidConfig("section lengths and sampling must be positive".into()));
        }
        if self.sample_count() < 5 {
            return Err(Error::InvalidConfig("need at least 5 backbone samples".into()));
        }
        let rank = self.cable_gain_matrix.clone().svd(false, false).rank(1e-12);
        if rank < n {
            return Err(Error::InvalidConfig(format!("cable gain matrix has rank {rank} < {n} actuators")));
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.n() {
            return Err(Error::DimensionMismatch { what: "q", expected: self.n(), got: q.len() });
        }
        for i in 0..q.len() {
            if !q[i].is_finite() {
                return Err(Error::NonFinite("q"));
            }
            if q[i] < self.q_min[i] || q[i] > self.q_max[i] {
                return Err(Error::OutOfRange { index: i, value: q[i], min: self.q_min[i], max: self.q_max[i] });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(q.len(), q.iter().enumerate().map(|(i, v)| v.clamp(self.q_min[i], self.q_max[i])))
    }
}

/// sin(a)/a
fn sinc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        1.0 - a * a / 6.0
    } else {
        a.sin() / a
    }
}

/// (1 - cos a)/a²
fn versc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        0.5 - a * a / 24.0
    } else {
        (1.0 - a.cos()) / (a * a)
    }
}

/// Backbone points for actuator positions `q`, distal endpoint first.
pub fn forward_shape(cfg: &PlantConfig, q: &DVector<f64>) -> Result<BackbonePoints> {
    cfg.check_limits(q)?;
    forward_shape_unchecked(cfg, q)
}

/// [`forward_shape`] without the actuator-limit check, for authoring deliberately
/// unreachable targets by extrapolating the kinematic map.
pub fn forward_shape_unchecked(cfg: &PlantConfig, q: &DVector<f64>) -> Result<BackbonePoints> {
    if q.len() != cfg.n() {
        return Err(Error::DimensionMismatch { what: "q", expected: cfg.n(), got: q.len() });
    }
    let params = &cfg.cable_gain_matrix * q;
    let seg = cfg.segments_per_section;
    let mut rot = Rotation3::identity();
    let mut origin = Vector3::zeros();
    let mut pts = Vec::with_capacity(cfg.sample_count());
    pts.push(origin);
    for (s_idx, sec) in cfg.sections.iter().enumerate() {
        let len = if sec.extensible {
            (sec.rest_length + params[3 * s_idx + 2]).max(0.05 * sec.rest_length)
        } else {
            sec.rest_length
        };
        // curvature is affine in q, so the bend angle grows with the section length
        let stretch = len / sec.rest_length;
        let (by, bz) = (params[3 * s_idx] * stretch, params[3 * s_idx + 1] * stretch);
        let theta = by.hypot(bz);
        for j in 1..=seg {
            let s = len * j as f64 / seg as f64;
            let a = theta * s / len;
            let w = s * s / len * versc(a);
            let local = Vector3::new(s * sinc(a), w * by, w * bz);
            pts.push(origin + rot * local);
        }
        origin = *pts.last().unwrap();
        rot *= Rotation3::new(Vector3::new(0.0, -bz, by));
    }
    pts.reverse();
    BackbonePoints::new(pts)
}

/// Feature of the undisturbed plant at `q`.
pub fn plant_feature(cfg: &PlantConfig, q: &DVector<f64>, kind: FeatureKind) -> Result<DVector<f64>> {
    Ok(extract_feature(kind, &forward_shape(cfg, q)?, &cfg.markers)?.values)
}

/// Central finite-difference combined Jacobian `m × n`, one-sided at the actuator limits. Oracle only.
pub fn plant_jacobian_fd(cfg: &PlantConfig, q: &DVector<f64>, kind: FeatureKind) -> Result<DMatrix<f64>> {
    plant_jacobian_fd_step(cfg, q, kind, FD_STEP)
}

pub fn plant_jacobian_fd_step(cfg: &PlantConfig, q: &DVector<f64>, kind: FeatureKind, h: f64) -> Result<DMatrix<f64>> {
    let n = cfg.n();
    let mut jac = DMatrix::zeros(kind.dim(), n);
    for c in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[c] = (q[c] + h).min(cfg.q_max[c]);
        qm[c] = (q[c] - h).max(cfg.q_min[c]);
        let col = (plant_feature(cfg, &qp, kind)? - plant_feature(cfg, &qm, kind)?) / (qp[c] - qm[c]);
        jac.set_column(c, &col);
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceKind {
    /// Offset (mm) added to the distal points, weighted linearly from base (0) to tip (1),
    /// decaying linearly to zero over `decay_s`.
    Impulse {
        offset: [f64; 3],
        #[serde(default = "default_decay")]
        decay_s: f64,
    },
    /// Kinematic sag along `gravity`: point weight² × tip moment arm × `gain`.
    TipPayload {
        gain: f64,
        #[serde(default = "default_gravity")]
        gravity: [f64; 3],
    },
    /// Elastic plane: penetrating points are pushed back by `stiffness / (1 + stiffness)`
    /// of their penetration depth.
    ContactSpring { point: [f64; 3], normal: [f64; 3], stiffness: f64 },
    /// Gaussian perturbation (actuator units) of the integrated actuator positions.
    ActuationNoise { std: f64 },
}

fn default_decay() -> f64 {
    0.5
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}

/// Unknown keys are rejected by the flattened `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    /// Seconds after the start of servoing.
    pub onset: f64,
    #[serde(flatten)]
    pub kind: DisturbanceKind,
}

impl DisturbanceEvent {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("disturbance: {m}")));
        if !(self.onset >= 0.0) {
            return bad("onset must be >= 0");
        }
        match &self.kind {
            DisturbanceKind::Impulse { decay_s, .. } if !(*decay_s > 0.0) => bad("decay must be > 0"),
            DisturbanceKind::ContactSpring { stiffness, normal, .. } => {
                if !(*stiffness >= 0.0) {
                    bad("stiffness must be >= 0")
                } else if Vector3::from(*normal).norm() < 1e-12 {
                    bad("contact normal must be nonzero")
                } else {
                    Ok(())
                }
            }
            DisturbanceKind::ActuationNoise { std } if !(*std >= 0.0) => bad("noise std must be >= 0"),
            DisturbanceKind::TipPayload { gravity, .. } if Vector3::from(*gravity).norm() < 1e-12 => {
                bad("gravity direction must be nonzero")
            }
            _ => Ok(()),
        }
    }

    /// Whether the event influences the measurement at servo time `t`.
    pub fn is_active(&self, t: f64) -> bool {
        match self.kind {
            DisturbanceKind::Impulse { decay_s, .. } => t >= self.onset && t < self.onset + decay_s,
            _ => t >= self.onset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    #[serde(default = "default_noise")]
    pub position_noise_std: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_rate() -> f64 {
    25.0
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { position_noise_std: default_noise(), rate_hz: default_rate(), seed: 0 }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_noise_std >= 0.0) || !(self.rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sensor needs std >= 0 and rate > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: DVector<f64>,
    pub t: f64,
    pub active_disturbances: Vec<DisturbanceEvent>,
}

/// Stateful simulated robot: integrates actuator velocities, applies disturbances and
/// samples the backbone through a zero-order-hold sensor.
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    sensor: SensorModel,
    q: DVector<f64>,
    t: f64,
    /// Plant time at which servoing started; disturbance onsets are relative to it.
    epoch: Option<f64>,
    disturbances: Vec<DisturbanceEvent>,
    next_sample: u64,
    last_sample_time: f64,
    last_sample: BackbonePoints,
    sensor_rng: ChaCha8Rng,
    actuation_rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(cfg: PlantConfig, q0: DVector<f64>, sensor: SensorModel) -> Result<Self> {
        cfg.validate()?;
        sensor.validate()?;
        cfg.check_limits(&q0)?;
        let mut plant = Self {
            sensor,
            last_sample: forward_shape(&cfg, &q0)?,
            cfg,
            q: q0,
            t: 0.0,
            epoch: None,
            disturbances: Vec::new(),
            next_sample: 0,
            last_sample_time: 0.0,
            sensor_rng: ChaCha8Rng::seed_from_u64(sensor.seed),
            actuation_rng: ChaCha8Rng::seed_from_u64(sensor.seed ^ 0x05ee_dac7u64),
        };
        let q0 = plant.q.clone();
        plant.take_samples(&q0, &q0, 0.0, 0.0)?;
        Ok(plant)
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn set_disturbances(&mut self, events: Vec<DisturbanceEvent>) -> Result<()> {
        events.iter().try_for_each(DisturbanceEvent::validate)?;
        self.disturbances = events;
        Ok(())
    }

    /// Marks the current plant time as servo time zero.
    pub fn start_servo_clock(&mut self) {
        self.epoch = Some(self.t);
    }

    fn servo_time(&self, t: f64) -> Option<f64> {
        self.epoch.map(|e| t - e)
    }

    pub fn state(&self) -> PlantState {
        let st = self.servo_time(self.t);
        PlantState {
            q: self.q.clone(),
            t: self.t,
            active_disturbances: self
                .disturbances
                .iter()
                .filter(|d| st.is_some_and(|s| d.is_active(s)))
                .cloned()
                .collect(),
        }
    }

    /// Bit `i` set when disturbance `i` is active at the current time.
    pub fn disturbance_flags(&self) -> u64 {
        let Some(st) = self.servo_time(self.t) else { return 0 };
        self.disturbances
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_active(st))
            .fold(0, |acc, (i, _)| acc | (1u64 << i.min(63)))
    }

    /// Latest sensor sample (zero-order hold) and its timestamp.
    pub fn measure(&self) -> (&BackbonePoints, f64) {
        (&self.last_sample, self.last_sample_time)
    }

    pub fn step(&mut self, qdot: &DVector<f64>, dt: f64) -> Result<BackbonePoints> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        if qdot.len() != self.cfg.n() {
            return Err(Error::DimensionMismatch { what: "qdot", expected: self.cfg.n(), got: qdot.len() });
        }
        if qdot.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("qdot"));
        }
        let peak = qdot.amax();
        if peak > self.cfg.qdot_max * (1.0 + 1e-9) {
            return Err(Error::VelocityLimit { value: peak, limit: self.cfg.qdot_max });
        }
        let q_start = self.q.clone();
        let mut q_end = &q_start + qdot * dt;
        let t_end = self.t + dt;
        if let Some(st) = self.servo_time(t_end) {
            for d in &self.disturbances {
                if let DisturbanceKind::ActuationNoise { std } = d.kind {
                    if d.is_active(st) && std > 0.0 {
                        let normal = Normal::new(0.0, std).expect("std validated");
                        for v in q_end.iter_mut() {
                            *v += normal.sample(&mut self.actuation_rng);
                        }
                    }
                }
            }
        }
        let q_end = self.cfg.clamp(&q_end);
        self.take_samples(&q_start, &q_end, self.t, t_end)?;
        self.q = q_end;
        self.t = t_end;
        Ok(self.last_sample.clone())
    }

    /// Emits every sensor sample falling in `(t0, t1]` (or at `t0 = t1 = 0` initially).
    fn take_samples(&mut self, q0: &DVector<f64>, q1: &DVector<f64>, t0: f64, t1: f64) -> Result<()> {
        loop {
            let ts = self.next_sample as f64 / self.sensor.rate_hz;
            if ts > t1 + 1e-12 {
                return Ok(());
            }
            let frac = if t1 > t0 { ((ts - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
            let q = q0 + (q1 - q0) * frac;
            self.last_sample = self.sample_at(&q, ts)?;
            self.last_sample_time = ts;
            self.next_sample += 1;
        }
    }

    fn sample_at(&mut self, q: &DVector<f64>, ts: f64) -> Result<BackbonePoints> {
        let mut pts = forward_shape(&self.cfg, q)?;
        if let Some(st) = self.servo_time(ts) {
            apply_disturbances(&mut pts, &self.disturbances, st);
        }
        if self.sensor.position_noise_std > 0.0 {
            let normal = Normal::new(0.0, self.sensor.position_noise_std).expect("std validated");
            for p in pts.points_mut() {
                for c in p.iter_mut() {
                    *c += normal.sample(&mut self.sensor_rng);
                }
            }
        }
        Ok(pts)
    }
}

/// Applies the shape-level disturbances active at servo time `t`, in list order.
pub fn apply_disturbances(pts: &mut BackbonePoints, events: &[DisturbanceEvent], t: f64) {
    let l = pts.len();
    let weight = |i: usize| (l - 1 - i) as f64 / (l - 1) as f64;
    for ev in events.iter().filter(|e| e.is_active(t)) {
        match &ev.kind {
            DisturbanceKind::Impulse { offset, decay_s } => {
                let scale = 1.0 - (t - ev.onset) / decay_s;
                let off = Vector3::from(*offset) * scale;
                for (i, p) in pts.points_mut().iter_mut().enumerate() {
                    *p += off * weight(i);
                }
            }
            DisturbanceKind::TipPayload { gain, gravity } => {
                let g = Vector3::from(*gravity).normalize();
                let reach = pts.points()[0] - pts.points()[l - 1];
                let arm = (reach - g * reach.dot(&g)).norm();
                for (i, p) in pts.points_mut().iter_mut().enumerate() {
                    let w = weight(i);
                    *p += g * (gain * arm * w * w);
                }
            }
            DisturbanceKind::ContactSpring { point, normal, stiffness } => {
                let nrm = Vector3::from(*normal).normalize();
                let origin = Vector3::from(*point);
                for p in pts.points_mut().iter_mut() {
                    let depth = -(*p - origin).dot(&nrm);
                    if depth > 0.0 {
                        *p += nrm * (depth * stiffness / (1.0 + stiffness));
                    }
                }
            }
            DisturbanceKind::ActuationNoise { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    fn noiseless() -> SensorModel {
        SensorModel { position_noise_std: 0.0, rate_hz: 25.0, seed: 3 }
    }

    #[test]
    fn disturbance_json_round_trip() {
        let ev: DisturbanceEvent =
            serde_json::from_str(r#"{"onset": 3.0, "kind": "impulse", "offset": [0, 1, 2]}"#).unwrap();
        assert_eq!(ev.kind, DisturbanceKind::Impulse { offset: [0.0, 1.0, 2.0], decay_s: 0.5 });
        let back: DisturbanceEvent = serde_json::from_str(&serde_json::to_string(&ev).unwrap()).unwrap();
        assert_eq!(back, ev);
        let bad = r#"{"onset": 3.0, "kind": "actuation_noise", "std": 1.0, "extra": 1}"#;
        assert!(serde_json::from_str::<DisturbanceEvent>(bad).is_err());
    }

    #[test]
    fn presets_validate() {
        PlantConfig::racs2().validate().unwrap();
        PlantConfig::scm6().validate().unwrap();
        assert!(matches!(PlantConfig::preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn zero_actuation_is_straight() {
        let cfg = PlantConfig::racs2();
        let r = forward_shape(&cfg, &q2(0.0, 0.0)).unwrap();
        assert_eq!(r.len(), 13);
        let spacing = 120.0 / 12.0;
        for (i, p) in r.points().iter().enumerate() {
            let expect = (12 - i) as f64 * spacing;
            assert!((p.x - expect).abs() < 1e-12 && p.y.abs() < 1e-15 && p.z.abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_bend_matches_closed_form_arc() {
        let mut cfg = PlantConfig::racs2();
        cfg.cable_gain_matrix = DMatrix::from_row_slice(3, 2, &[0.02, 0.0, 0.0, 0.02, 0.0, 0.0]);
        let theta = std::f64::consts::FRAC_PI_2;
        let r = forward_shape(&cfg, &q2(theta / 0.02, 0.0)).unwrap();
        let l = 120.0;
        let tip = r.points()[0];
        assert!((tip.x - l / theta * theta.sin()).abs() < 1e-9);
        assert!((tip.y - l / theta * (1.0 - theta.cos())).abs() < 1e-9);
        assert!(tip.z.abs() < 1e-12);
    }

    #[test]
    fn mirrored_actuation_reflects_backbone() {
        let cfg = PlantConfig::racs2();
        let a = forward_shape(&cfg, &q2(40.0, 25.0)).unwrap();
        let b = forward_shape(&cfg, &q2(-40.0, -25.0)).unwrap();
        for (p, m) in a.points().iter().zip(b.points()) {
            assert!((p.x - m.x).abs() < 1e-9 && (p.y + m.y).abs() < 1e-9 && (p.z + m.z).abs() < 1e-9);
        }
        // planar bend in x-y: sign flip is a reflection across the x-z plane
        let mut planar = cfg.clone();
        planar.cable_gain_matrix = DMatrix::from_row_slice(3, 2, &[0.02, 0.0, 0.0, 0.02, 0.0, 0.0]);
        let a = forward_shape(&planar, &q2(50.0, 0.0)).unwrap();
        let b = forward_shape(&planar, &q2(-50.0, 0.0)).unwrap();
        for (p, m) in a.points().iter().zip(b.points()) {
            assert!((p.x - m.x).abs() < 1e-12 && (p.y + m.y).abs() < 1e-12 && p.z == 0.0 && m.z == 0.0);
        }
    }

    #[test]
    fn limits_are_enforced() {
        let cfg = PlantConfig::racs2();
        assert!(matches!(forward_shape(&cfg, &q2(101.0, 0.0)), Err(Error::OutOfRange { index: 0, .. })));
        assert!(forward_shape_unchecked(&cfg, &q2(130.0, 0.0)).is_ok());
    }

    #[test]
    fn fd_jacobian_central_vs_forward() {
        let cfg = PlantConfig::racs2();
        let q = q2(0.0, 0.0);
        let central = plant_jacobian_fd(&cfg, &q, FeatureKind::TwoPoints).unwrap();
        let f0 = plant_feature(&cfg, &q, FeatureKind::TwoPoints).unwrap();
        let h = 1e-4;
        let mut forward = DMatrix::zeros(6, 2);
        for c in 0..2 {
            let mut qp = q.clone();
            qp[c] += h;
            forward.set_column(c, &((plant_feature(&cfg, &qp, FeatureKind::TwoPoints).unwrap() - &f0) / h));
        }
        let rel = (&central - &forward).norm() / central.norm();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn identical_cables_give_identical_columns() {
        let mut cfg = PlantConfig::racs2();
        cfg.cable_gain_matrix = DMatrix::from_row_slice(3, 2, &[0.02, 0.02, 0.01, 0.01, 0.0, 0.0]);
        let j = plant_jacobian_fd(&cfg, &q2(10.0, 5.0), FeatureKind::TwoPoints).unwrap();
        assert!((j.column(0) - j.column(1)).amax() < 1e-6);
    }

    #[test]
    fn doubling_gains_doubles_jacobian_at_rest() {
        let cfg = PlantConfig::racs2();
        let mut doubled = cfg.clone();
        doubled.cable_gain_matrix *= 2.0;
        let q = q2(0.0, 0.0);
        let j1 = plant_jacobian_fd(&cfg, &q, FeatureKind::TwoPoints).unwrap();
        let j2 = plant_jacobian_fd(&doubled, &q, FeatureKind::TwoPoints).unwrap();
        assert!((j2 - &j1 * 2.0).norm() / j1.norm() < 1e-6);
    }

    #[test]
    fn static_noiseless_plant_measures_forward_shape() {
        let cfg = PlantConfig::scm6();
        let q0 = cfg.home.clone();
        let mut plant = Plant::new(cfg.clone(), q0.clone(), noiseless()).unwrap();
        plant.start_servo_clock();
        for _ in 0..10 {
            let r = plant.step(&DVector::zeros(6), 0.05).unwrap();
            assert_eq!(r, forward_shape(&cfg, &q0).unwrap());
        }
    }

    #[test]
    fn impulse_moves_tip_at_onset() {
        let cfg = PlantConfig::racs2();
        let mut plant = Plant::new(cfg.clone(), cfg.home.clone(), noiseless()).unwrap();
        plant.start_servo_clock();
        plant
            .set_disturbances(vec![DisturbanceEvent {
                onset: 0.2,
                kind: DisturbanceKind::Impulse { offset: [0.0, 0.0, 5.0], decay_s: 0.5 },
            }])
            .unwrap();
        let base = forward_shape(&cfg, &cfg.home).unwrap();
        let zero = DVector::zeros(2);
        for _ in 0..3 {
            plant.step(&zero, 0.05).unwrap();
        }
        assert_eq!(plant.disturbance_flags(), 0);
        let r = plant.step(&zero, 0.05).unwrap(); // t = 0.2, sample at 0.2
        assert!((r.points()[0].z - base.points()[0].z - 5.0).abs() < 1e-12);
        assert_eq!(r.points()[12], base.points()[12]);
        assert_eq!(plant.disturbance_flags(), 1);
        for _ in 0..12 {
            plant.step(&zero, 0.05).unwrap();
        }
        assert_eq!(plant.measure().0, &base);
    }

    #[test]
    fn contact_spring_bounds_penetration() {
        let cfg = PlantConfig::racs2();
        let mut pts = forward_shape(&cfg, &q2(60.0, 0.0)).unwrap();
        let before = pts.clone();
        let plane_y = 10.0;
        let k = 4.0;
        let ev = DisturbanceEvent {
            onset: 0.0,
            kind: DisturbanceKind::ContactSpring { point: [0.0, plane_y, 0.0], normal: [0.0, -1.0, 0.0], stiffness: k },
        };
        apply_disturbances(&mut pts, &[ev], 1.0);
        for (p, b) in pts.points().iter().zip(before.points()) {
            let force = (b.y - plane_y).max(0.0);
            let beyond = (p.y - plane_y).max(0.0);
            assert!(beyond <= force / k + 1e-12);
        }
        assert!(pts.points()[0].y < before.points()[0].y);
    }

    #[test]
    fn velocity_limit_is_an_error() {
        let cfg = PlantConfig::racs2();
        let mut plant = Plant::new(cfg.clone(), cfg.home.clone(), noiseless()).unwrap();
        let fast = DVector::from_element(2, cfg.qdot_max * 2.0);
        assert!(matches!(plant.step(&fast, 0.05), Err(Error::VelocityLimit { .. })));
    }

    #[test]
    fn same_seed_same_measurements() {
        let cfg = PlantConfig::racs2();
        let sensor = SensorModel { position_noise_std: 0.1, rate_hz: 25.0, seed: 11 };
        let run = || {
            let mut plant = Plant::new(cfg.clone(), cfg.home.clone(), sensor).unwrap();
            plant.start_servo_clock();
            plant
                .set_disturbances(vec![DisturbanceEvent {
                    onset: 0.0,
                    kind: DisturbanceKind::ActuationNoise { std: 0.3 },
                }])
                .unwrap();
            (0..40)
                .map(|k| plant.step(&q2((k as f64 * 0.3).sin() * 5.0, 2.0), 0.05).unwrap().stacked())
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .all(|(u, v)| u.to_bits() == v.to_bits())));
    }

    #[test]
    fn tip_payload_sags_along_gravity() {
        let cfg = PlantConfig::racs2();
        let mut pts = forward_shape(&cfg, &q2(0.0, 0.0)).unwrap();
        let ev = DisturbanceEvent {
            onset: 0.0,
            kind: DisturbanceKind::TipPayload { gain: 0.05, gravity: [0.0, 0.0, -1.0] },
        };
        apply_disturbances(&mut pts, &[ev], 0.0);
        assert!((pts.points()[0].z + 0.05 * 120.0).abs() < 1e-9);
        assert_eq!(pts.points()[12].z, 0.0);
    }
}
