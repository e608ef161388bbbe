//! Conversions between the user-facing units (Hz, degrees) and the internal
//! ones (rad/s, rad). Every rate crosses this boundary exactly once.

use std::f64::consts::{PI, TAU};

#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    TAU * f_hz
}

#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / TAU
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg * PI / 180.0
}

#[inline]
pub fn rad_to_deg(rad: f64) -> f64 {
    rad * 180.0 / PI
}

/// Phase reduced to [0, 2π).
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Phase in degrees reduced to [0°, 360°), the reporting convention.
pub fn phase_deg_reported(phi: f64) -> f64 {
    rad_to_deg(wrap_phase(phi))
}

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
