//! Domain types shared by every solver: the device, the probe tone, the
//! feedback filter and the hardware chain behind it, and the noise budget.
//!
//! All rates are angular frequencies (rad/s). Conversion from the Hz values
//! found in configuration files happens in [`crate::config`].

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::BOLTZMANN;

/// Static parameters of a single-mode electromechanical device.
///
/// The cavity has no internal loss: `kappa` is entirely external coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpmDevice {
    pub omega_m: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub omega_c: f64,
    pub g0: f64,
}

impl OpmDevice {
    pub fn new(omega_m: f64, gamma: f64, kappa: f64, omega_c: f64, g0: f64) -> Result<Self> {
        validate_device(OpmDevice { omega_m, gamma, kappa, omega_c, g0 })
    }

    /// `√(κ² + 4ω_m²)`, which shows up in most resonant-probing formulas.
    pub fn sideband_norm(&self) -> f64 {
        (self.kappa * self.kappa + 4.0 * self.omega_m * self.omega_m).sqrt()
    }

    /// Cavity susceptibility `χ_c = 1/(κ/2 − iω)`, continued to complex ω.
    pub fn cavity_susceptibility(&self, omega: Complex64) -> Complex64 {
        (Complex64::new(0.5 * self.kappa, 0.0) - Complex64::i() * omega).inv()
    }
}

/// Checks every device invariant and reports all violations at once.
pub fn validate_device(device: OpmDevice) -> Result<OpmDevice> {
    let mut problems = Vec::new();
    let fields = [
        ("omega_m", device.omega_m),
        ("gamma", device.gamma),
        ("kappa", device.kappa),
        ("omega_c", device.omega_c),
        ("g0", device.g0),
    ];
    for (name, v) in fields {
        if !v.is_finite() || v <= 0.0 {
            problems.push(format!("{name} must be positive"));
        }
    }
    if device.gamma > 0.0 && device.omega_m > 0.0 && device.gamma >= device.omega_m / 10.0 {
        problems.push("gamma < omega_m/10 violated".to_string());
    }
    if problems.is_empty() {
        Ok(device)
    } else {
        Err(Error::InvalidParameters(problems))
    }
}

/// `G = g₀ √n_c`.
pub fn effective_coupling(g0: f64, photon_number: f64) -> Result<f64> {
    if !(photon_number >= 0.0) {
        return Err(Error::InvalidParameters(vec![
            "photon number must be non-negative".into(),
        ]));
    }
    if !(g0 > 0.0) {
        return Err(Error::InvalidParameters(vec!["g0 must be positive".into()]));
    }
    Ok(g0 * photon_number.sqrt())
}

/// Inverse of [`effective_coupling`]: `n_c = (G/g₀)²`.
pub fn photon_number_for(g0: f64, coupling: f64) -> f64 {
    let r = coupling / g0;
    r * r
}

/// The strong probe tone: detuning from the cavity and the coupling it induces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeTone {
    pub detuning: f64,
    pub coupling: f64,
    pub photon_number: Option<f64>,
}

impl ProbeTone {
    pub fn new(detuning: f64, coupling: f64) -> Result<Self> {
        if !(coupling >= 0.0) || !detuning.is_finite() {
            return Err(Error::InvalidParameters(vec![
                "probe coupling must be non-negative and detuning finite".into(),
            ]));
        }
        Ok(ProbeTone { detuning, coupling, photon_number: None })
    }

    pub fn from_photon_number(device: &OpmDevice, detuning: f64, photon_number: f64) -> Result<Self> {
        let coupling = effective_coupling(device.g0, photon_number)?;
        Ok(ProbeTone { detuning, coupling, photon_number: Some(photon_number) })
    }

    pub fn resonant(coupling: f64) -> Result<Self> {
        Self::new(0.0, coupling)
    }

    pub fn blue_sideband(device: &OpmDevice, coupling: f64) -> Result<Self> {
        Self::new(device.omega_m, coupling)
    }

    /// Probe frequency in the laboratory frame.
    pub fn probe_frequency(&self, device: &OpmDevice) -> f64 {
        device.omega_c + self.detuning
    }
}

/// How the phase-shift-and-gain filter is realized across frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterShape {
    /// `A[ω] = A₀ exp(−iφω/ω_m)`, the constant-magnitude linear-phase filter.
    #[default]
    LinearPhase,
    /// A causal pure delay `τ` with `ω_m τ = (−φ mod 2π) + 2π·extra_periods`.
    /// Identical to `LinearPhase` at ±ω_m; this is what a delay line does.
    Delay { extra_periods: u32 },
}

/// Filter-level description of the feedback: gain `A₀` and phase `φ` at ω_m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackFilter {
    pub gain: f64,
    pub phase: f64,
    #[serde(default)]
    pub shape: FilterShape,
}

impl FeedbackFilter {
    pub fn new(gain: f64, phase: f64) -> Result<Self> {
        if !(gain >= 0.0) || !phase.is_finite() {
            return Err(Error::InvalidParameters(vec![
                "feedback gain must be non-negative and phase finite".into(),
            ]));
        }
        Ok(FeedbackFilter { gain, phase, shape: FilterShape::LinearPhase })
    }

    pub fn off() -> Self {
        FeedbackFilter { gain: 0.0, phase: 0.0, shape: FilterShape::LinearPhase }
    }

    pub fn with_shape(mut self, shape: FilterShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    /// Loop delay realizing this filter as a pure delay.
    pub fn delay(&self, omega_m: f64) -> f64 {
        let extra = match self.shape {
            FilterShape::Delay { extra_periods } => extra_periods as f64,
            FilterShape::LinearPhase => 0.0,
        };
        ((-self.phase).rem_euclid(TAU) + TAU * extra) / omega_m
    }

    /// Complex filter response, valid for complex frequencies as well.
    pub fn response(&self, omega: Complex64, omega_m: f64) -> Complex64 {
        let i = Complex64::i();
        match self.shape {
            FilterShape::LinearPhase => self.gain * (-i * self.phase * omega / omega_m).exp(),
            FilterShape::Delay { .. } => self.gain * (i * omega * self.delay(omega_m)).exp(),
        }
    }
}

/// Hardware parameters of the feedback chain: a phase-modulated feedback tone
/// whose triplet drives the cavity. Reduced to a [`FeedbackFilter`] by
/// [`crate::analytic::feedback_chain_reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackChain {
    /// Feedback tone detuning Δ_f from the cavity, rad/s (may be negative).
    pub detuning_f: f64,
    /// Carrier amplitude α₀; only the product α₀²𝒢 matters.
    pub carrier_amplitude: f64,
    /// Electronic gain 𝒢 including mixer conversion.
    pub electronic_gain: f64,
    /// Loop delay τ, seconds.
    pub loop_delay: f64,
    /// Extra propagation phase of the upper / lower triplet sideband, rad.
    #[serde(default)]
    pub extra_line_phase: (f64, f64),
}

impl FeedbackChain {
    /// Delay phase `φ_τ = ω_m τ`.
    pub fn delay_phase(&self, omega_m: f64) -> f64 {
        omega_m * self.loop_delay
    }

    /// Non-fatal advisories about the chain configuration.
    pub fn warnings(&self, device: &OpmDevice) -> Vec<String> {
        let mut w = Vec::new();
        if self.detuning_f.abs() <= 2.0 * device.omega_m {
            w.push(format!(
                "|detuning_f| = {:.4e} rad/s does not exceed 2*omega_m; stray feedback components may enter the measurement",
                self.detuning_f.abs()
            ));
        }
        w
    }
}

/// Occupations of the baths feeding the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub bath_occupation: f64,
    pub amplifier_noise: f64,
    #[serde(default)]
    pub cavity_occupation: f64,
}

impl NoiseBudget {
    pub fn new(bath_occupation: f64, amplifier_noise: f64) -> Result<Self> {
        Self::with_cavity(bath_occupation, amplifier_noise, 0.0)
    }

    pub fn with_cavity(bath_occupation: f64, amplifier_noise: f64, cavity_occupation: f64) -> Result<Self> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("bath_occupation", bath_occupation),
            ("amplifier_noise", amplifier_noise),
            ("cavity_occupation", cavity_occupation),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be non-negative"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParameters(problems));
        }
        Ok(NoiseBudget { bath_occupation, amplifier_noise, cavity_occupation })
    }

    /// Symmetrized density of each cavity input quadrature.
    pub fn cavity_input_density(&self) -> f64 {
        0.5 + self.cavity_occupation
    }

    /// White density of the scaled thermal force `f_th`, fixed by requiring
    /// the free oscillator to hold `n_m^T + 1/2` quanta.
    pub fn thermal_force_density(&self, device: &OpmDevice) -> f64 {
        2.0 * device.gamma * device.omega_m * device.omega_m * (self.bath_occupation + 0.5)
    }
}

/// A classical oscillator in SI units, for the textbook cold-damping spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOscillator {
    /// kg
    pub mass: f64,
    /// K
    pub temperature: f64,
    /// m
    pub x_zpf: f64,
}

impl ClassicalOscillator {
    pub fn new(mass: f64, temperature: f64, x_zpf: f64) -> Result<Self> {
        let mut problems = Vec::new();
        for (name, v) in [("mass", mass), ("temperature", temperature), ("x_zpf", x_zpf)] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be positive"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParameters(problems));
        }
        Ok(ClassicalOscillator { mass, temperature, x_zpf })
    }

    pub fn boltzmann(&self) -> f64 {
        BOLTZMANN
    }

    /// Classical thermal force density `2 k_B T M γ`, N²/(rad/s).
    pub fn thermal_force_density(&self, gamma: f64) -> f64 {
        2.0 * BOLTZMANN * self.temperature * self.mass * gamma
    }

    /// Force scaled into the dimensionless equations: `f = ω_m F/(M x_zpf)`.
    pub fn scaled_force(&self, force: f64, omega_m: f64) -> f64 {
        omega_m * force / (self.mass * self.x_zpf)
    }
}

/// Default device used throughout the examples and the `paper-defaults` config:
/// an 8.14 MHz aluminium drum coupled to a 5.35 GHz overcoupled cavity.
pub fn reference_device() -> OpmDevice {
    use crate::units::hz_to_rad;
    OpmDevice {
        omega_m: hz_to_rad(8.14e6),
        gamma: hz_to_rad(76.0),
        kappa: hz_to_rad(8.5e6),
        omega_c: hz_to_rad(5.35e9),
        g0: hz_to_rad(130.0),
    }
}
