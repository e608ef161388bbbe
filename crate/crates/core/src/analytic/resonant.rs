use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{FeedbackFilter, NoiseBudget, OpmDevice};

/// Feedback-modified mechanical frequency and damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub omega_eff: f64,
    pub gamma_eff: f64,
    pub stable: bool,
}

impl EffectiveParams {
    pub fn new(omega_eff: f64, gamma_eff: f64) -> Self {
        EffectiveParams { omega_eff, gamma_eff, stable: gamma_eff > 0.0 }
    }
}

/// Occupation budget under resonant probing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationBreakdown {
    /// Cooled thermal plus zero-point contribution.
    pub n_t: f64,
    /// Measurement backaction.
    pub n_qba: f64,
    /// Re-injected vacuum and amplifier noise.
    pub n_fb: f64,
    /// Total phonon occupation, `n_m + 1/2 = n_t + n_qba + n_fb`.
    pub n_m: f64,
    pub c_eff: f64,
    /// False when the closed forms were applied away from the optimal phase.
    pub at_optimal_phase: bool,
}

/// Optimal feedback phase at resonant probing, in (π/2, π).
pub fn optimal_phase(kappa: f64, omega_m: f64) -> f64 {
    (-kappa / (2.0 * omega_m)).atan() + PI
}

/// Feedback-induced damping at the optimal phase, `4GA₀/√(κ²+4ω_m²)`.
pub fn gamma_fb(coupling: f64, gain: f64, kappa: f64, omega_m: f64) -> f64 {
    4.0 * coupling * gain / (kappa * kappa + 4.0 * omega_m * omega_m).sqrt()
}

/// High-Q effective frequency and damping for a probe on cavity resonance.
pub fn effective_params_resonant(device: &OpmDevice, coupling: f64, filter: &FeedbackFilter) -> EffectiveParams {
    let (k, wm) = (device.kappa, device.omega_m);
    let norm = k * k + 4.0 * wm * wm;
    let (s, c) = filter.phase.sin_cos();
    let ga = coupling * filter.gain;
    let omega_eff = wm + 2.0 * ga * (k * c + 2.0 * wm * s) / norm;
    let gamma_eff = device.gamma + 4.0 * ga * (k * s - 2.0 * wm * c) / norm;
    EffectiveParams::new(omega_eff, gamma_eff)
}

const PHASE_TOLERANCE: f64 = 1e-6;

/// Occupation budget at resonant probing. Exact at the optimal phase; away
/// from it the same closed forms are applied with the phase-dependent
/// `γ_eff`, and the result is flagged.
pub fn occupation_resonant(
    device: &OpmDevice,
    coupling: f64,
    filter: &FeedbackFilter,
    noise: &NoiseBudget,
) -> Result<OccupationBreakdown> {
    let eff = effective_params_resonant(device, coupling, filter);
    if !eff.stable {
        return Err(Error::Unstable { gamma_eff: eff.gamma_eff });
    }
    let phi_m = optimal_phase(device.kappa, device.omega_m);
    let dphi = (filter.phase - phi_m).rem_euclid(2.0 * PI);
    let at_optimal_phase = filter.gain == 0.0 || dphi.min(2.0 * PI - dphi) < PHASE_TOLERANCE;
    if !at_optimal_phase {
        warn!(
            "occupation budget evaluated at phase {:.3} rad away from the optimum {:.3} rad; use the numerical solver for exact values",
            filter.phase, phi_m
        );
    }
    let (k, wm, g) = (device.kappa, device.omega_m, device.gamma);
    let ge = eff.gamma_eff;
    let n_t = g / ge * (noise.bath_occupation + 0.5);
    let c_eff = 4.0 * coupling * coupling / (k * ge);
    // backaction scales with the cavity input density (1/2 in vacuum)
    let n_qba = c_eff * k * k / (k * k + 4.0 * wm * wm) * 2.0 * noise.cavity_input_density();
    let n_fb = filter.gain * filter.gain * (noise.amplifier_noise + noise.cavity_input_density()) / (2.0 * k * ge);
    let n_m = n_t + n_qba + n_fb - 0.5;
    Ok(OccupationBreakdown { n_t, n_qba, n_fb, n_m, c_eff, at_optimal_phase })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub gain: f64,
    pub n_m_min: f64,
}

/// Gain balancing backaction against re-injected noise, and the occupation
/// it reaches when the thermal part is negligible.
pub fn optimal_operating_point(device: &OpmDevice, noise: &NoiseBudget, coupling: f64) -> Result<OperatingPoint> {
    if !(coupling > 0.0) {
        return Err(Error::InvalidParameters(vec!["coupling must be positive".into()]));
    }
    let root = (1.0 + 2.0 * noise.amplifier_noise).sqrt();
    let ratio = 0.25 * root * device.sideband_norm() / device.kappa;
    Ok(OperatingPoint { gain: coupling / ratio, n_m_min: 0.5 * root - 0.5 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_device;
    use crate::units::{hz_to_rad, rad_to_deg, rad_to_hz};

    #[test]
    fn optimal_phase_limits() {
        assert!((optimal_phase(1e9, 1.0) - PI / 2.0).abs() < 1e-6);
        assert!((optimal_phase(1e-6, 1.0) - PI).abs() < 1e-6);
        let d = reference_device();
        let phi = rad_to_deg(optimal_phase(d.kappa, d.omega_m));
        // atan(-8.5/16.28) + 180°
        assert!((phi - 152.430_352).abs() < 1e-5, "{phi}");
        assert!(phi > 90.0 && phi < 180.0);
    }

    #[test]
    fn open_loop_params() {
        let d = reference_device();
        let e = effective_params_resonant(&d, hz_to_rad(427e3), &FeedbackFilter::off());
        assert_eq!(e.omega_eff, d.omega_m);
        assert_eq!(e.gamma_eff, d.gamma);
        assert!(e.stable);
    }

    #[test]
    fn optimal_phase_gives_pure_damping() {
        let d = reference_device();
        let g = hz_to_rad(427e3);
        let a0 = hz_to_rad(206e3);
        let f = FeedbackFilter::new(a0, optimal_phase(d.kappa, d.omega_m)).unwrap();
        let e = effective_params_resonant(&d, g, &f);
        let gfb = gamma_fb(g, a0, d.kappa, d.omega_m);
        assert!((e.omega_eff - d.omega_m).abs() < 1e-9 * gfb);
        assert!(((e.gamma_eff - d.gamma) / gfb - 1.0).abs() < 1e-12);
        // 4·427k·206k/√(8.5²+4·8.14²) MHz
        assert!((rad_to_hz(gfb) - 19_158.19).abs() < 0.05, "{}", rad_to_hz(gfb));
    }

    #[test]
    fn gamma_fb_scaling() {
        assert_eq!(gamma_fb(0.0, 5.0, 1.0, 1.0), 0.0);
        let a = gamma_fb(1.0, 2.0, 3.0, 4.0);
        let b = gamma_fb(2.0, 4.0, 3.0, 4.0);
        assert!((b / a - 4.0).abs() < 1e-14);
    }

    #[test]
    fn unstable_phase_rejected() {
        let d = reference_device();
        let phi = optimal_phase(d.kappa, d.omega_m) + PI;
        let f = FeedbackFilter::new(hz_to_rad(100e3), phi).unwrap();
        let n = NoiseBudget::new(205.0, 13.0).unwrap();
        assert!(matches!(occupation_resonant(&d, hz_to_rad(427e3), &f, &n), Err(Error::Unstable { .. })));
    }

    #[test]
    fn no_drive_no_feedback_is_thermal() {
        let d = reference_device();
        let n = NoiseBudget::new(205.0, 13.0).unwrap();
        let b = occupation_resonant(&d, 0.0, &FeedbackFilter::off(), &n).unwrap();
        assert!((b.n_m - 205.0).abs() < 1e-9);
        assert_eq!(b.n_qba, 0.0);
        assert_eq!(b.n_fb, 0.0);
    }

    #[test]
    fn budget_sums() {
        let d = reference_device();
        let n = NoiseBudget::new(370.0, 13.0).unwrap();
        let f = FeedbackFilter::new(hz_to_rad(206e3), optimal_phase(d.kappa, d.omega_m)).unwrap();
        let b = occupation_resonant(&d, hz_to_rad(427e3), &f, &n).unwrap();
        assert!(((b.n_m + 0.5) - (b.n_t + b.n_qba + b.n_fb)).abs() < 1e-9 * (b.n_m + 0.5));
        assert!(b.at_optimal_phase);
        // independent evaluation of the three terms (Python, double precision)
        assert!((b.n_t - 1.463_955_9).abs() < 1e-6);
        assert!((b.n_qba - 0.955_563_3).abs() < 1e-6);
        assert!((b.n_fb - 1.752_045_9).abs() < 1e-6);
    }

    #[test]
    fn off_optimum_is_flagged() {
        let d = reference_device();
        let n = NoiseBudget::new(205.0, 13.0).unwrap();
        let f = FeedbackFilter::new(hz_to_rad(50e3), optimal_phase(d.kappa, d.omega_m) - 0.2).unwrap();
        let b = occupation_resonant(&d, hz_to_rad(427e3), &f, &n).unwrap();
        assert!(!b.at_optimal_phase);
    }

    #[test]
    fn operating_point_thresholds() {
        let d = reference_device();
        let g = hz_to_rad(427e3);
        let op = optimal_operating_point(&d, &NoiseBudget::new(0.0, 0.0).unwrap(), g).unwrap();
        assert!(op.n_m_min.abs() < 1e-15);
        let op = optimal_operating_point(&d, &NoiseBudget::new(0.0, 4.0).unwrap(), g).unwrap();
        assert!((op.n_m_min - 1.0).abs() < 1e-15);
        let op = optimal_operating_point(&d, &NoiseBudget::new(0.0, 13.0).unwrap(), g).unwrap();
        assert!((op.n_m_min - 2.098_076_2).abs() < 1e-6);
    }

    /// Brute-force scan of the budget over gain; the minimum must coincide
    /// with the closed-form optimum once the thermal part is negligible.
    #[test]
    fn budget_minimum_matches_operating_point() {
        let d = reference_device();
        let noise = NoiseBudget::new(0.0, 13.0).unwrap();
        let g = hz_to_rad(2.0e6);
        let phi = optimal_phase(d.kappa, d.omega_m);
        let op = optimal_operating_point(&d, &noise, g).unwrap();
        let eval = |a0: f64| occupation_resonant(&d, g, &FeedbackFilter::new(a0, phi).unwrap(), &noise).unwrap().n_m;
        let gains: Vec<f64> = (1..=4000).map(|k| op.gain * 3.0 * k as f64 / 4000.0).collect();
        let values: Vec<f64> = gains.iter().map(|&a| eval(a)).collect();
        let (imin, &vmin) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        // unimodal: strictly decreasing before, increasing after
        assert!(values[..imin].windows(2).all(|w| w[1] < w[0]));
        assert!(values[imin..].windows(2).all(|w| w[1] > w[0]));
        assert!((vmin / op.n_m_min - 1.0).abs() < 1e-3, "{vmin} vs {}", op.n_m_min);
    }
}
