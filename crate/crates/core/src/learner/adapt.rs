use nalgebra::DVector;

use super::rbf::{build_parameterization, RbfBank};
use super::LearnerGains;
use crate::error::Result;

/// One Euler step of the composite adaptation law
/// `Ŵ̇ = Γ_W⁻¹ proj{ Mᵀ (k_e e + k_x x̃ + k_r r_x) }`.
///
/// `proj` zeroes drive components that push a weight already on the `±w_max` box
/// outward; the Euler step is then clipped to the box. Components with a zero
/// increment are left untouched, so `q̇ = 0` leaves the bank bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn adapt_weights(
    bank: &mut RbfBank,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    e: &DVector<f64>,
    x_tilde: &DVector<f64>,
    r_x: &DVector<f64>,
    gains: &LearnerGains,
    dt: f64,
) -> Result<()> {
    let reg = build_parameterization(bank, q, qdot)?;
    let error = e * gains.k_e + x_tilde * gains.k_x + r_x * gains.k_r;
    let drive = reg.tr_mul(&error);
    let mut w = bank.vectorize();
    let bound = gains.w_max;
    for (c, (wc, d)) in w.iter_mut().zip(drive.iter()).enumerate() {
        let outward = (*wc >= bound && *d > 0.0) || (*wc <= -bound && *d < 0.0);
        let inc = if outward { 0.0 } else { dt * gains.gamma_w_inv.get(c) * d };
        if inc != 0.0 {
            *wc = (*wc + inc).clamp(-bound, bound);
        }
    }
    bank.set_weights(&w)
}
