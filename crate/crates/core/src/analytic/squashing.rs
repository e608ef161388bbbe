//! In-loop heterodyne spectrum in the unresolved-sideband limit: the measured
//! displacement sideband plus two negative Lorentzians of identical shape
//! (the squashing terms) on a flat `n_add + 1/2` floor.
//!
//! Frequencies follow the rotating-frame convention `e^{-iωt}`: the upper
//! (anti-Stokes) sideband sits at `+ω_eff`, the lower one at `−ω_eff`.

use num_complex::Complex64;

use crate::analytic::EffectiveParams;
use crate::model::{NoiseBudget, OpmDevice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashingParts {
    /// `(8G²/κ) S_x`
    pub s_out_x: f64,
    /// Squashing Lorentzian centred on the lower sideband.
    pub s_minus: f64,
    /// Squashing Lorentzian centred on the upper sideband.
    pub s_plus: f64,
    pub background: f64,
    pub total: f64,
}

/// Closed-loop displacement spectrum seen through the heterodyne output in
/// the bad-cavity limit, including the zero-point asymmetry between the two
/// sidebands. Built from Lorentzian effective parameters.
pub fn badcavity_displacement_spectrum(
    omega: f64,
    device: &OpmDevice,
    coupling: f64,
    gain: f64,
    noise: &NoiseBudget,
    eff: &EffectiveParams,
) -> f64 {
    let (k, wm) = (device.kappa, device.omega_m);
    let s_in = noise.cavity_input_density();
    let chi = (Complex64::new(eff.omega_eff * eff.omega_eff - omega * omega, -omega * eff.gamma_eff)).inv();
    let s_th = noise.thermal_force_density(device);
    let s_ba = 16.0 * coupling * coupling * wm * wm * s_in / k;
    let s_fb = wm * wm * gain * gain * (noise.amplifier_noise + s_in) / k;
    chi.norm_sqr() * (s_th + s_ba + s_fb) - 2.0 * wm * s_in * chi.im
}

/// One squashing Lorentzian as a function of the offset from its sideband.
/// Both sidebands share this exact expression.
pub fn squashing_term(offset: f64, device: &OpmDevice, coupling: f64, gain: f64, noise: &NoiseBudget, gamma_eff: f64) -> f64 {
    let depth = coupling * gain * gamma_eff * (noise.amplifier_noise + noise.cavity_input_density()) / device.kappa;
    -depth / (offset * offset + 0.25 * gamma_eff * gamma_eff)
}

/// Heterodyne output spectrum, bad-cavity limit, optimal phase π/2.
/// `s_x` supplies the displacement spectrum entering the measured sideband.
pub fn squashed_spectrum_badcavity(
    omega: f64,
    device: &OpmDevice,
    coupling: f64,
    gain: f64,
    noise: &NoiseBudget,
    eff: &EffectiveParams,
    s_x: &dyn Fn(f64) -> f64,
) -> SquashingParts {
    let s_out_x = 8.0 * coupling * coupling / device.kappa * s_x(omega);
    let s_minus = squashing_term(omega + eff.omega_eff, device, coupling, gain, noise, eff.gamma_eff);
    let s_plus = squashing_term(omega - eff.omega_eff, device, coupling, gain, noise, eff.gamma_eff);
    let background = noise.amplifier_noise + noise.cavity_input_density();
    SquashingParts { s_out_x, s_minus, s_plus, background, total: s_out_x + s_minus + s_plus + background }
}
