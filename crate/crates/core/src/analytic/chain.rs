//! Reduction of the phase-modulated feedback tone to a filter gain and phase.
//!
//! The two modulation sidebands of the feedback triplet each beat with the
//! carrier and give a force proportional to a phase-shifted copy of the
//! position. Their sum is again a phase-shifted copy, with an amplitude set by
//! how constructively the two interfere.

use std::f64::consts::FRAC_PI_2;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{FeedbackChain, FeedbackFilter, OpmDevice};

/// `D` below this fraction of `A + B` counts as complete cancellation.
pub const VANISHING_FORCE_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainReduction {
    pub gain: f64,
    pub phase: f64,
    /// Interference factor `D = √(A² + B² + 2AB cos(ϕ − ϕ'))`.
    pub interference: f64,
    /// Cavity phase at the mechanical frequency, `arctan(2ω_m/κ)`.
    pub phi0: f64,
    /// Cavity phase on the carrier.
    pub phi1: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
    /// Relative amplitude of the force from the upper triplet sideband.
    pub amp_upper: f64,
    /// Relative amplitude of the force from the lower triplet sideband.
    pub amp_lower: f64,
    /// Phase shift carried by the upper-sideband force contribution.
    pub shift_upper: f64,
    /// Phase shift carried by the lower-sideband force contribution.
    pub shift_lower: f64,
}

impl ChainReduction {
    /// `ϕ − ϕ'`, the relative phase of the two force contributions.
    pub fn relative_phase(&self) -> f64 {
        self.shift_upper - self.shift_lower
    }

    /// Phase imparted by the cavity on the feedback carrier.
    pub fn carrier_phase_shift(&self) -> f64 {
        self.phi1
    }

    pub fn filter(&self) -> FeedbackFilter {
        FeedbackFilter::new(self.gain, self.phase).expect("reduced gain is non-negative")
    }
}

pub fn feedback_chain_reduce(device: &OpmDevice, chain: &FeedbackChain) -> Result<ChainReduction> {
    let (k, wm, df) = (device.kappa, device.omega_m, chain.detuning_f);
    for w in chain.warnings(device) {
        warn!("{w}");
    }
    let phi_tau = chain.delay_phase(wm);
    if chain.loop_delay * device.gamma > 0.01 {
        warn!(
            "loop delay {:.3e} s is not small against the mechanical decay time; the phase-shift picture degrades",
            chain.loop_delay
        );
    }
    let phi0 = (2.0 * wm).atan2(k);
    let phi1 = (2.0 * df).atan2(k);
    let phi_plus = (2.0 * (df + wm)).atan2(k);
    let phi_minus = (2.0 * (df - wm)).atan2(k);
    let amp_upper = k / (0.25 * k * k + (df + wm).powi(2)).sqrt();
    let amp_lower = k / (0.25 * k * k + (df - wm).powi(2)).sqrt();
    let shift_upper = phi_tau + phi_plus - phi1 - FRAC_PI_2 + chain.extra_line_phase.0;
    let shift_lower = phi_tau - phi_minus + phi1 + FRAC_PI_2 + chain.extra_line_phase.1;

    let (su, cu) = shift_upper.sin_cos();
    let (sl, cl) = shift_lower.sin_cos();
    let d2 = amp_upper * amp_upper
        + amp_lower * amp_lower
        + 2.0 * amp_upper * amp_lower * (shift_upper - shift_lower).cos();
    let interference = d2.max(0.0).sqrt();
    if interference <= VANISHING_FORCE_RATIO * (amp_upper + amp_lower) {
        return Err(Error::FeedbackVanishes { d: interference });
    }
    let combined = (amp_upper * su + amp_lower * sl).atan2(amp_upper * cu + amp_lower * cl);
    let phase = phi0 + combined;
    let gain = device.g0 * k.sqrt() * chain.carrier_amplitude.powi(2) * chain.electronic_gain * interference
        / (0.25 * k * k + df * df).sqrt();

    Ok(ChainReduction {
        gain,
        phase,
        interference,
        phi0,
        phi1,
        phi_plus,
        phi_minus,
        amp_upper,
        amp_lower,
        shift_upper,
        shift_lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_device;
    use crate::units::{hz_to_rad, rad_to_deg};

    fn chain(df_hz: f64) -> FeedbackChain {
        FeedbackChain {
            detuning_f: hz_to_rad(df_hz),
            carrier_amplitude: 1.0,
            electronic_gain: 1.0,
            loop_delay: 0.0,
            extra_line_phase: (0.0, 0.0),
        }
    }

    #[test]
    fn reference_chain_relative_phase() {
        let d = reference_device();
        let r = feedback_chain_reduce(&d, &chain(-20e6)).unwrap();
        let rel = rad_to_deg(r.relative_phase());
        // φ₊ + φ₋ − 2φ₁ − 180° evaluated independently: −175.690°
        assert!((rel + 175.690_286).abs() < 1e-5, "{rel}");
        assert!(r.amp_upper / r.amp_lower > 2.0);
        assert!((r.amp_upper / r.amp_lower - 2.258_930_8).abs() < 1e-6);
    }

    #[test]
    fn carrier_phase_shift_estimate() {
        let d = reference_device();
        let r = feedback_chain_reduce(&d, &chain(-20e6)).unwrap();
        // arctan(2·(−20)/8.5) = −78.003°
        assert!((rad_to_deg(r.carrier_phase_shift()) + 78.003_101).abs() < 1e-5);
    }

    #[test]
    fn degenerate_bad_cavity_cancels() {
        let mut d = reference_device();
        d.omega_m = 1e-12 * d.kappa;
        d.gamma = 1e-3 * d.omega_m;
        let r = feedback_chain_reduce(&d, &chain(0.0));
        assert!(matches!(r, Err(Error::FeedbackVanishes { .. })), "{r:?}");
    }

    #[test]
    fn gain_is_linear_in_electronic_gain() {
        let d = reference_device();
        let mut c = chain(-20e6);
        let a = feedback_chain_reduce(&d, &c).unwrap();
        c.electronic_gain = 3.0;
        let b = feedback_chain_reduce(&d, &c).unwrap();
        assert!((b.gain / a.gain - 3.0).abs() < 1e-12);
        assert_eq!(a.phase, b.phase);
    }

    #[test]
    fn line_phase_changes_interference() {
        let d = reference_device();
        let mut c = chain(-20e6);
        let base = feedback_chain_reduce(&d, &c).unwrap();
        // aligning the two contributions maximizes D = A + B
        c.extra_line_phase = (0.0, base.relative_phase());
        let aligned = feedback_chain_reduce(&d, &c).unwrap();
        assert!((aligned.interference - (aligned.amp_upper + aligned.amp_lower)).abs() < 1e-12);
        assert!(aligned.interference > base.interference);
    }

    #[test]
    fn delay_shifts_phase_one_for_one() {
        let d = reference_device();
        let mut c = chain(-20e6);
        let a = feedback_chain_reduce(&d, &c).unwrap();
        c.loop_delay = 0.3 / d.omega_m;
        let b = feedback_chain_reduce(&d, &c).unwrap();
        assert!(((b.phase - a.phase) - 0.3).abs() < 1e-12);
        assert!((b.interference - a.interference).abs() < 1e-15);
    }
}
