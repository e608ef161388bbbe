use crate::model::{FeedbackFilter, OpmDevice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlueSidebandRates {
    /// Optomechanical anti-damping.
    pub gamma_opt: f64,
    /// Net damping including feedback; negative means unstable.
    pub gamma_eff: f64,
}

/// Anti-damping from a probe on the blue sideband, `(4G²/κ)/(1+(κ/4ω_m)²)`.
pub fn gamma_opt(device: &OpmDevice, coupling: f64) -> f64 {
    let r = device.kappa / (4.0 * device.omega_m);
    4.0 * coupling * coupling / device.kappa / (1.0 + r * r)
}

fn blue_denominator(device: &OpmDevice) -> f64 {
    let (k, wm) = (device.kappa, device.omega_m);
    k * k * k + 16.0 * k * wm * wm
}

/// Feedback damping at the blue-sideband optimal phase.
pub fn gamma_fb_blue(device: &OpmDevice, coupling: f64, gain: f64) -> f64 {
    let (k, wm) = (device.kappa, device.omega_m);
    let root = (k.powi(4) + 20.0 * k * k * wm * wm + 64.0 * wm.powi(4)).sqrt();
    4.0 * gain * coupling * root / blue_denominator(device)
}

/// Phase maximizing the feedback damping with the probe on the blue sideband.
pub fn optimal_phase_blue(device: &OpmDevice) -> f64 {
    let (k, wm) = (device.kappa, device.omega_m);
    (k * k + 8.0 * wm * wm).atan2(-2.0 * k * wm)
}

pub fn blue_sideband_rates(device: &OpmDevice, coupling: f64, filter: &FeedbackFilter) -> BlueSidebandRates {
    let (k, wm) = (device.kappa, device.omega_m);
    let (s, c) = filter.phase.sin_cos();
    let gopt = gamma_opt(device, coupling);
    let fb = 4.0 * coupling * filter.gain * ((k * k + 8.0 * wm * wm) * s - 2.0 * k * wm * c) / blue_denominator(device);
    BlueSidebandRates { gamma_opt: gopt, gamma_eff: device.gamma - gopt + fb }
}

/// Gain at which the optimally phased feedback just cancels the net
/// anti-damping. Zero when the probe alone leaves the oscillator stable.
pub fn critical_gain_blue(device: &OpmDevice, coupling: f64) -> f64 {
    let deficit = gamma_opt(device, coupling) - device.gamma;
    if deficit <= 0.0 {
        return 0.0;
    }
    deficit / gamma_fb_blue(device, coupling, 1.0)
}
