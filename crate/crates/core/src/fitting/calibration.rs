use serde::{Deserialize, Serialize};

use crate::analytic::gamma_opt;
use crate::error::{Error, Result};
use crate::model::OpmDevice;

/// Linear fit through the origin: slope and its standard error.
fn slope_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let k = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - k * a).powi(2)).sum();
    let dof = (x.len() as f64 - 1.0).max(1.0);
    (k, (rss / dof / sxx).sqrt())
}

/// Coupling under red-sideband probing from the measured optical damping,
/// `G_rsb = ½√(𝒫Pκ[1 + (κ/4ω_m)²])`.
pub fn g_rsb(device: &OpmDevice, p_coeff: f64, power: f64) -> f64 {
    let r = device.kappa / (4.0 * device.omega_m);
    0.5 * (p_coeff * power * device.kappa * (1.0 + r * r)).sqrt()
}

/// Coupling at detuning `Δ` for the power that gives `G_rsb` on the red
/// sideband; the intracavity field follows `|χ_c(Δ)| = 1/√(κ²/4 + Δ²)`.
pub fn detuning_transfer(device: &OpmDevice, g_rsb: f64, detuning: f64) -> f64 {
    let chi = |d: f64| 1.0 / (0.25 * device.kappa * device.kappa + d * d).sqrt();
    chi(detuning) / chi(-device.omega_m) * g_rsb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    /// `𝒫`, optical damping per unit generator power.
    pub p_coeff: f64,
    pub p_coeff_err: f64,
    pub powers: Vec<f64>,
    /// `G_rsb` at each calibration power.
    pub g_rsb: Vec<f64>,
}

impl PowerCalibration {
    pub fn coupling_at(&self, device: &OpmDevice, power: f64, detuning: f64) -> f64 {
        detuning_transfer(device, g_rsb(device, self.p_coeff, power), detuning)
    }
}

/// `γ_opt = 𝒫P` fitted through the origin.
pub fn calibrate_power(device: &OpmDevice, powers: &[f64], gamma_opt_measured: &[f64]) -> Result<PowerCalibration> {
    if powers.len() != gamma_opt_measured.len() {
        return Err(Error::InvalidParameters(vec!["powers and damping rates differ in length".into()]));
    }
    if powers.len() < 3 {
        return Err(Error::InsufficientData(format!("power calibration needs at least 3 points, got {}", powers.len())));
    }
    let (p_coeff, p_coeff_err) = slope_through_origin(powers, gamma_opt_measured);
    if !(p_coeff > 0.0) {
        return Err(Error::Fit(format!("non-positive power slope {p_coeff:e}")));
    }
    let g = powers.iter().map(|&p| g_rsb(device, p_coeff, p)).collect();
    Ok(PowerCalibration { p_coeff, p_coeff_err, powers: powers.to_vec(), g_rsb: g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeRegime {
    Resonant,
    BlueSideband,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCalibration {
    /// `ℒ`, feedback damping per unit electronic gain.
    pub l_coeff: f64,
    pub l_coeff_err: f64,
    pub coupling: f64,
    pub regime: ProbeRegime,
}

impl GainCalibration {
    /// Damping rate per unit filter gain at the optimal phase.
    fn rate_per_gain(&self, device: &OpmDevice) -> f64 {
        let (k, wm, g) = (device.kappa, device.omega_m, self.coupling);
        match self.regime {
            ProbeRegime::Resonant => 4.0 * g / device.sideband_norm(),
            ProbeRegime::BlueSideband => {
                let root = (k.powi(4) + 20.0 * k * k * wm * wm + 64.0 * wm.powi(4)).sqrt();
                4.0 * g * root / (k * k * k + 16.0 * k * wm * wm)
            }
        }
    }

    /// Filter gain `A₀` produced by electronic gain `g`.
    pub fn filter_gain(&self, device: &OpmDevice, g: f64) -> f64 {
        self.l_coeff * g / self.rate_per_gain(device)
    }

    /// Electronic gain at which the blue-sideband loop becomes stable; zero
    /// when the probe alone leaves it stable.
    pub fn critical_electronic_gain(&self, device: &OpmDevice) -> f64 {
        match self.regime {
            ProbeRegime::Resonant => 0.0,
            ProbeRegime::BlueSideband => ((gamma_opt(device, self.coupling) - device.gamma) / self.l_coeff).max(0.0),
        }
    }
}

/// `γ_eff − γ (+ γ_opt on the blue sideband) = ℒg`, fitted through the origin
/// so that `g = 0` returns the intrinsic damping. Only weak-feedback,
/// optimal-phase points belong in the input.
pub fn calibrate_gain(
    device: &OpmDevice,
    coupling: f64,
    regime: ProbeRegime,
    gains: &[f64],
    linewidths: &[f64],
) -> Result<GainCalibration> {
    if gains.len() != linewidths.len() {
        return Err(Error::InvalidParameters(vec!["gains and linewidths differ in length".into()]));
    }
    let valid: Vec<(f64, f64)> = gains.iter().zip(linewidths).filter(|(g, w)| **g > 0.0 && w.is_finite()).map(|(g, w)| (*g, *w)).collect();
    if valid.len() < 2 {
        return Err(Error::InsufficientData(format!("gain calibration needs at least 2 points with g > 0, got {}", valid.len())));
    }
    let offset = match regime {
        ProbeRegime::Resonant => device.gamma,
        ProbeRegime::BlueSideband => device.gamma - gamma_opt(device, coupling),
    };
    let (g, fb): (Vec<f64>, Vec<f64>) = valid.iter().map(|(g, w)| (*g, w - offset)).unzip();
    let (l_coeff, l_coeff_err) = slope_through_origin(&g, &fb);
    if !(l_coeff > 0.0) {
        return Err(Error::Fit(format!("non-positive gain slope {l_coeff:e}")));
    }
    Ok(GainCalibration { l_coeff, l_coeff_err, coupling, regime })
}

/// Both calibrations of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub power: PowerCalibration,
    pub gain: GainCalibration,
}
