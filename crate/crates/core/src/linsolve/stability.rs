use num_complex::Complex64;

use super::transfer::{system, Input};
use crate::error::{Error, Result};
use crate::model::{FeedbackFilter, OpmDevice, ProbeTone};

const MAX_NEWTON: usize = 100;
const MAX_BISECTION: usize = 200;

/// Closed-loop mechanical pole `ω_eff − iγ_eff/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalPole {
    pub pole: Complex64,
    pub omega_eff: f64,
    /// `−2·Im(pole)`; positive means damped.
    pub gamma_eff: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    pub gamma_eff: f64,
    pub omega_eff: f64,
}

/// `1/X_f` by Cramer's rule, finite at the pole itself.
fn inverse_response(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, w: Complex64) -> Result<Complex64> {
    let (m, b) = system(device, probe, filter, w);
    let mut replaced = m;
    replaced.set_column(2, &b.column(Input::Thermal as usize));
    let den = replaced.determinant();
    if den.norm() == 0.0 {
        return Err(Error::PoleSearch(format!("thermal response vanishes at omega = {w}")));
    }
    Ok(m.determinant() / den)
}

/// Newton search for the zero of `1/X_f` starting from `seed`.
pub(crate) fn find_pole_from(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, seed: Complex64) -> Result<MechanicalPole> {
    let h = 1e-6 * device.omega_m;
    let tol = 1e-7 * device.gamma;
    let max_step = 0.1 * device.omega_m;
    let mut w = seed;
    for it in 1..=MAX_NEWTON {
        let g = inverse_response(device, probe, filter, w)?;
        let gp = (inverse_response(device, probe, filter, w + h)? - inverse_response(device, probe, filter, w - h)?) / (2.0 * h);
        if gp.norm() == 0.0 || !gp.re.is_finite() {
            return Err(Error::PoleSearch(format!("vanishing derivative at omega = {w}")));
        }
        let mut step = g / gp;
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        w -= step;
        if step.norm() < tol {
            return Ok(MechanicalPole { pole: w, omega_eff: w.re, gamma_eff: -2.0 * w.im, iterations: it });
        }
    }
    Err(Error::PoleSearch(format!(
        "no convergence after {MAX_NEWTON} Newton steps from seed {seed}; last iterate {w}"
    )))
}

/// Locate the mechanical pole, seeded at the bare resonance.
pub fn find_mechanical_pole(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter) -> Result<MechanicalPole> {
    let seed = Complex64::new(device.omega_m, -0.5 * device.gamma);
    find_pole_from(device, probe, filter, seed)
}

pub fn stability(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter) -> Result<StabilityReport> {
    let p = find_mechanical_pole(device, probe, filter)?;
    Ok(StabilityReport { stable: p.gamma_eff > 0.0, gamma_eff: p.gamma_eff, omega_eff: p.omega_eff })
}

/// Phase maximizing the closed-loop damping at the given gain: a scan of
/// `scan_points` phases refined by golden-section search.
pub fn optimal_phase_numeric(device: &OpmDevice, probe: &ProbeTone, gain: f64, scan_points: usize) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::InvalidParameters(vec!["optimal phase needs a positive gain".into()]));
    }
    let n = scan_points.max(8);
    let damping = |phi: f64| -> Result<f64> {
        Ok(find_mechanical_pole(device, probe, &FeedbackFilter::new(gain, phi)?)?.gamma_eff)
    };
    let step = std::f64::consts::TAU / n as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..n {
        let phi = k as f64 * step;
        let g = damping(phi)?;
        if g > best.1 {
            best = (phi, g);
        }
    }
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (damping(c)?, damping(d)?);
    while b - a > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = damping(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = damping(d)?;
        }
    }
    Ok((0.5 * (a + b)).rem_euclid(std::f64::consts::TAU))
}

/// Gain at which the mechanical damping crosses zero for a linear-phase
/// filter of the given phase. The bracket ends must differ in stability.
pub fn find_stability_boundary(device: &OpmDevice, probe: &ProbeTone, phase: f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let filter = FeedbackFilter::new(lo.max(0.0), phase)?;
    let at = |gain: f64, seed: Complex64| find_pole_from(device, probe, &filter.with_gain(gain), seed);
    let p_lo = find_mechanical_pole(device, probe, &filter.with_gain(lo))?;
    let p_hi = find_mechanical_pole(device, probe, &filter.with_gain(hi))?;
    if (p_lo.gamma_eff > 0.0) == (p_hi.gamma_eff > 0.0) {
        return Err(Error::NoSignChange { lo, hi });
    }
    let lo_stable = p_lo.gamma_eff > 0.0;
    let mut seed = p_lo.pole;
    let target = 1e-3 * device.gamma;
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        let p = at(mid, seed)?;
        seed = p.pole;
        if p.gamma_eff.abs() < target {
            return Ok(mid);
        }
        if (p.gamma_eff > 0.0) == lo_stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::PoleSearch(format!("bisection stalled in [{lo:.6e}, {hi:.6e}]")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{effective_params_resonant, optimal_phase};
    use crate::model::reference_device;
    use crate::units::hz_to_rad;
    use std::f64::consts::PI;

    #[test]
    fn bare_pole() {
        let d = reference_device();
        let p = find_mechanical_pole(&d, &ProbeTone::resonant(0.0).unwrap(), &FeedbackFilter::off()).unwrap();
        let exact = Complex64::new((d.omega_m.powi(2) - d.gamma.powi(2) / 4.0).sqrt(), -d.gamma / 2.0);
        assert!((p.pole - exact).norm() < 1e-6 * d.gamma);
    }

    #[test]
    fn resonant_probe_without_feedback_adds_no_damping() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        let r = stability(&d, &probe, &FeedbackFilter::off()).unwrap();
        assert!(r.stable);
        assert!((r.gamma_eff / d.gamma - 1.0).abs() < 1e-6);
    }

    #[test]
    fn resonant_damping_matches_closed_form() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        // the linear-phase filter continued to the pole scales the gain by
        // exp(−φγ_eff/2ω_m), so agreement degrades as γ_eff/ω_m grows
        for (a_hz, tol) in [(50e3, 1e-3), (206e3, 5e-3)] {
            let f = FeedbackFilter::new(hz_to_rad(a_hz), optimal_phase(d.kappa, d.omega_m)).unwrap();
            let r = stability(&d, &probe, &f).unwrap();
            let eff = effective_params_resonant(&d, probe.coupling, &f);
            assert!((r.gamma_eff / eff.gamma_eff - 1.0).abs() < tol, "{} vs {}", r.gamma_eff, eff.gamma_eff);
        }
    }

    #[test]
    fn numeric_optimum_matches_closed_form() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(420e3)).unwrap();
        let phi = optimal_phase_numeric(&d, &probe, hz_to_rad(2.8e3), 72).unwrap();
        assert!((phi - optimal_phase(d.kappa, d.omega_m)).abs() < 1e-4, "{phi}");
    }

    #[test]
    fn optimal_phase_has_no_boundary() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        let e = find_stability_boundary(&d, &probe, optimal_phase(d.kappa, d.omega_m), (0.0, hz_to_rad(1e6)));
        assert!(matches!(e, Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn anti_damping_boundary() {
        let d = reference_device();
        let g = hz_to_rad(427e3);
        let probe = ProbeTone::resonant(g).unwrap();
        let phase = optimal_phase(d.kappa, d.omega_m) + PI;
        let a = find_stability_boundary(&d, &probe, phase, (0.0, hz_to_rad(10e3))).unwrap();
        let expected = d.gamma * d.sideband_norm() / (4.0 * g);
        assert!((a / expected - 1.0).abs() < 1e-2, "{a} vs {expected}");
    }
}
