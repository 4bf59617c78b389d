//! Configuration-space shape features computed from sampled backbone points.
//!
//! Three feature kinds are supported:
//!
//! * [`FeatureKind::TwoPoints`]: distal endpoint stacked with a middle point (m = 6, mm).
//! * [`FeatureKind::Bta`]: bending angle of a section plus the twist of its endpoint (m = 2, deg).
//! * [`FeatureKind::DepBta`]: distal endpoint, two section bending angles and the
//!   proximal twist (m = 6, mm and deg).
//!
//! Angles are reported in degrees. The analytic [`feature_jacobian`] exists for test
//! oracles; the controller only ever consumes feature values.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segments shorter than this (mm) are treated as coincident points.
pub const COINCIDENT_TOL_MM: f64 = 1e-9;
/// Twist is undefined when the endpoint is this close (mm²) to the base x-axis.
pub const TWIST_TOL_MM2: f64 = 1e-18;
/// Bending angles within this distance (deg) of 0° or 180° make the gradient unbounded.
pub const SINGULAR_BEND_TOL_DEG: f64 = 0.01;

/// Stacked Cartesian positions of `l` points sampled along the robot, base frame, mm.
///
/// Index 0 is the distal endpoint; the last index is the base attachment.
#[derive(Debug, Clone, PartialEq)]
pub struct BackbonePoints {
    points: Vec<Vector3<f64>>,
}

impl BackbonePoints {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidBackbone(format!("need at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("backbone points"));
        }
        Ok(Self { points })
    }

    /// Builds from a stacked vector `[x_1 y_1 z_1 x_2 ...]`.
    pub fn from_stacked(r: &DVector<f64>) -> Result<Self> {
        if !r.len().is_multiple_of(3) {
            return Err(Error::InvalidBackbone(format!("stacked length {} is not a multiple of 3", r.len())));
        }
        let points = r.as_slice().chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        Self::new(points)
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(3 * self.points.len(), self.points.iter().flat_map(|p| p.iter().copied()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.points
    }

    pub fn point(&self, index: usize) -> Result<&Vector3<f64>> {
        self.points.get(index).ok_or(Error::BadMarkers { index, len: self.points.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TwoPoints,
    Bta,
    DepBta,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::TwoPoints | FeatureKind::DepBta => 6,
            FeatureKind::Bta => 2,
        }
    }
}

/// Indices of the reference points used by the feature extractors.
///
/// * `tip`: distal endpoint.
/// * `mid`: middle point of the distal section (TwoPoints middle point, BTA vertex,
///   distal vertex of DEP-BTA).
/// * `base`: base attachment.
/// * `junction`, `proximal_mid`: section junction and middle of the proximal section,
///   required by DEP-BTA only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionMarkers {
    pub tip: usize,
    pub mid: usize,
    pub base: usize,
    #[serde(default)]
    pub junction: Option<usize>,
    #[serde(default)]
    pub proximal_mid: Option<usize>,
}

impl SectionMarkers {
    fn check(&self, kind: FeatureKind, len: usize) -> Result<()> {
        let mut idx = vec![self.tip, self.mid, self.base];
        if kind == FeatureKind::DepBta {
            idx.push(self.junction.ok_or(Error::BadMarkers { index: usize::MAX, len })?);
            idx.push(self.proximal_mid.ok_or(Error::BadMarkers { index: usize::MAX, len })?);
        }
        match idx.into_iter().find(|&i| i >= len) {
            Some(index) => Err(Error::BadMarkers { index, len }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFeature {
    pub kind: FeatureKind,
    pub values: DVector<f64>,
}

/// Angle at `r2` between the legs towards `r1` and `r3`, in degrees.
pub fn bending_angle(r1: &Vector3<f64>, r2: &Vector3<f64>, r3: &Vector3<f64>) -> Result<f64> {
    let a = r1 - r2;
    let b = r3 - r2;
    let (na, nb) = (a.norm(), b.norm());
    if na < COINCIDENT_TOL_MM || nb < COINCIDENT_TOL_MM {
        return Err(Error::CoincidentPoints(na.min(nb)));
    }
    let c = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Rotation of the endpoint about the base x-axis, in degrees, range (-180, 180].
pub fn twist_angle(r_e: &Vector3<f64>) -> Result<f64> {
    let rho2 = r_e.y * r_e.y + r_e.z * r_e.z;
    if rho2 < TWIST_TOL_MM2 {
        return Err(Error::DegenerateTwist(rho2));
    }
    let phi = r_e.z.atan2(r_e.y).to_degrees();
    // atan2 returns -180 for (y<0, z=-0.0); fold onto the closed end of the range.
    Ok(if phi <= -180.0 { phi + 360.0 } else { phi })
}

pub fn extract_feature(kind: FeatureKind, r: &BackbonePoints, markers: &SectionMarkers) -> Result<ShapeFeature> {
    markers.check(kind, r.len())?;
    let p = |i: usize| r.point(i);
    let values = match kind {
        FeatureKind::TwoPoints => {
            let (a, b) = (p(markers.tip)?, p(markers.mid)?);
            DVector::from_column_slice(&[a.x, a.y, a.z, b.x, b.y, b.z])
        }
        FeatureKind::Bta => {
            let tip = p(markers.tip)?;
            let kappa = bending_angle(tip, p(markers.mid)?, p(markers.base)?)?;
            let phi = twist_angle(tip)?;
            DVector::from_column_slice(&[kappa, phi])
        }
        FeatureKind::DepBta => {
            let tip = p(markers.tip)?;
            let junction = p(markers.junction.unwrap_or_default())?;
            let prox_mid = p(markers.proximal_mid.unwrap_or_default())?;
            let k1 = bending_angle(tip, p(markers.mid)?, junction)?;
            let k2 = bending_angle(junction, prox_mid, p(markers.base)?)?;
            let phi = twist_angle(junction)?;
            DVector::from_column_slice(&[tip.x, tip.y, tip.z, k1, k2, phi])
        }
    };
    Ok(ShapeFeature { kind, values })
}

/// Gradient of [`bending_angle`] w.r.t. (r1, r2, r3), in degrees per mm.
fn bending_gradient(r1: &Vector3<f64>, r2: &Vector3<f64>, r3: &Vector3<f64>) -> Result<[Vector3<f64>; 3]> {
    let kappa = bending_angle(r1, r2, r3)?;
    if !(SINGULAR_BEND_TOL_DEG..=180.0 - SINGULAR_BEND_TOL_DEG).contains(&kappa) {
        return Err(Error::NearSingularFeature(kappa));
    }
    let a = r1 - r2;
    let b = r3 - r2;
    let (na, nb) = (a.norm(), b.norm());
    let c = a.dot(&b) / (na * nb);
    let dc_da = b / (na * nb) - a * (c / (na * na));
    let dc_db = a / (na * nb) - b * (c / (nb * nb));
    let dk_dc = -(1.0 - c * c).sqrt().recip() * 180.0 / std::f64::consts::PI;
    let g1 = dc_da * dk_dc;
    let g3 = dc_db * dk_dc;
    Ok([g1, -(g1 + g3), g3])
}

fn twist_gradient(r_e: &Vector3<f64>) -> Result<Vector3<f64>> {
    twist_angle(r_e)?;
    let rho2 = r_e.y * r_e.y + r_e.z * r_e.z;
    let s = 180.0 / std::f64::consts::PI / rho2;
    Ok(Vector3::new(0.0, -r_e.z * s, r_e.y * s))
}

/// Analytic Jacobian of [`extract_feature`] w.r.t. the stacked points, `m × 3l`.
pub fn feature_jacobian(kind: FeatureKind, r: &BackbonePoints, markers: &SectionMarkers) -> Result<DMatrix<f64>> {
    markers.check(kind, r.len())?;
    let mut jac = DMatrix::zeros(kind.dim(), 3 * r.len());
    let mut put = |row: usize, point: usize, g: &Vector3<f64>| {
        for c in 0..3 {
            jac[(row, 3 * point + c)] += g[c];
        }
    };
    let select = |row: usize, point: usize, put: &mut dyn FnMut(usize, usize, &Vector3<f64>)| {
        for c in 0..3 {
            let mut unit = Vector3::zeros();
            unit[c] = 1.0;
            put(row + c, point, &unit);
        }
    };
    match kind {
        FeatureKind::TwoPoints => {
            select(0, markers.tip, &mut put);
            select(3, markers.mid, &mut put);
        }
        FeatureKind::Bta => {
            let ids = [markers.tip, markers.mid, markers.base];
            let g = bending_gradient(r.point(ids[0])?, r.point(ids[1])?, r.point(ids[2])?)?;
            for (id, gi) in ids.iter().zip(g.iter()) {
                put(0, *id, gi);
            }
            put(1, markers.tip, &twist_gradient(r.point(markers.tip)?)?);
        }
        FeatureKind::DepBta => {
            let junction = markers.junction.unwrap_or_default();
            let prox_mid = markers.proximal_mid.unwrap_or_default();
            select(0, markers.tip, &mut put);
            let ids1 = [markers.tip, markers.mid, junction];
            let g1 = bending_gradient(r.point(ids1[0])?, r.point(ids1[1])?, r.point(ids1[2])?)?;
            for (id, gi) in ids1.iter().zip(g1.iter()) {
                put(3, *id, gi);
            }
            let ids2 = [junction, prox_mid, markers.base];
            let g2 = bending_gradient(r.point(ids2[0])?, r.point(ids2[1])?, r.point(ids2[2])?)?;
            for (id, gi) in ids2.iter().zip(g2.iter()) {
                put(4, *id, gi);
            }
            put(5, junction, &twist_gradient(r.point(junction)?)?);
        }
    }
    Ok(jac)
}
