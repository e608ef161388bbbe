use crate::model::ClassicalOscillator;

/// Position spectral density of a thermally driven oscillator with velocity
/// feedback of relative gain `fb_gain`, in m²/(rad/s). `fb_gain = 0` is the
/// free oscillator.
pub fn classical_spectrum(omega: f64, osc: &ClassicalOscillator, omega_m: f64, gamma: f64, fb_gain: f64) -> f64 {
    let detune = omega_m * omega_m - omega * omega;
    let damp = gamma * (1.0 + fb_gain) * omega;
    2.0 * osc.boltzmann() * osc.temperature * gamma / (osc.mass * (detune * detune + damp * damp))
}

/// Closed-form variance `∫ S_x dω/2π = k_B T / (M ω_m² (1+g))`.
pub fn classical_variance(osc: &ClassicalOscillator, omega_m: f64, fb_gain: f64) -> f64 {
    osc.boltzmann() * osc.temperature / (osc.mass * omega_m * omega_m * (1.0 + fb_gain))
}
