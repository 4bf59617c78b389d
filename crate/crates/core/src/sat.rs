//! Boundary-layer saturation shared by the predictor and the controller.

use nalgebra::DVector;

/// Piecewise-linear saturation: `v / width` inside `|v| <= width`, `sign(v)` outside.
pub fn sat(v: f64, width: f64) -> f64 {
    if v.abs() <= width {
        v / width
    } else {
        v.signum()
    }
}

pub fn sat_vec(v: &DVector<f64>, width: f64) -> DVector<f64> {
    v.map(|x| sat(x, width))
}
