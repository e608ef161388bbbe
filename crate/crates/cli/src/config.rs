//! TOML run configuration in laboratory units (Hz, degrees, watts). Values
//! are kept as written and converted to angular units once, in
//! [`Config::resolve`], so a parsed file serializes back to the same values.

use std::path::Path;

use optofb_core::analytic::{feedback_chain_reduce, optimal_phase, optimal_phase_blue, ChainReduction};
use optofb_core::fitting::ProbeRegime;
use optofb_core::linsolve::optimal_phase_numeric;
use optofb_core::units::{deg_to_rad, hz_to_rad, rad_to_deg, wrap_phase};
use optofb_core::{Error, FeedbackChain, FeedbackFilter, FilterShape, GridSettings, NoiseBudget, OpmDevice, ProbeTone, Result};
use serde::{Deserialize, Serialize};

/// Name accepted by `--config` for the built-in reference configuration.
pub const PAPER_DEFAULTS: &str = "paper-defaults";
pub const PAPER_DEFAULTS_TOML: &str = include_str!("../../../configs/paper-defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub device: DeviceConfig,
    pub probe: ProbeConfig,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_map: Option<StabilityMapConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub omega_m_hz: f64,
    pub gamma_hz: f64,
    pub kappa_hz: f64,
    pub omega_c_hz: f64,
    pub g0_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub detuning_hz: f64,
    /// Exactly one of `coupling_hz` and `photon_number` is required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_number: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeConfig {
    #[default]
    LinearPhase,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_hz: Option<f64>,
    /// Omitted means the damping-optimal phase for the probe detuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_deg: Option<f64>,
    #[serde(default)]
    pub shape: ShapeConfig,
    #[serde(default)]
    pub extra_periods: u32,
    /// Hardware chain; when present it sets gain and phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub detuning_f_hz: f64,
    pub carrier_amplitude: f64,
    pub electronic_gain: f64,
    pub loop_delay_s: f64,
    #[serde(default)]
    pub extra_line_phase_deg: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub bath_occupation: f64,
    #[serde(default)]
    pub amplifier_noise: f64,
    #[serde(default)]
    pub cavity_occupation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub halfwidth_linewidths: f64,
    pub points_per_linewidth: f64,
    pub background_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_halfspan_hz: Option<f64>,
    pub growth: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSettings::default();
        GridConfig {
            halfwidth_linewidths: g.halfwidth_linewidths,
            points_per_linewidth: g.points_per_linewidth,
            background_points: g.background_points,
            background_halfspan_hz: None,
            growth: g.growth,
        }
    }
}

fn default_fit_halfwidth() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Gain ladder; one pair of files per entry.
    pub gains_hz: Vec<f64>,
    /// Half-width of the Lorentzian fit window, in linewidths.
    #[serde(default = "default_fit_halfwidth")]
    pub fit_halfwidth_linewidths: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Degrees.
    Phase,
    /// Filter gain, Hz.
    Gain,
    /// Probe detuning, Hz.
    Detuning,
    /// Generator power, W; needs the power calibration.
    Power,
    /// Feedback tone detuning, Hz; needs `[feedback.chain]`.
    FeedbackDetuning,
}

impl SweepVariable {
    pub fn column(&self) -> &'static str {
        match self {
            SweepVariable::Phase => "phase_deg",
            SweepVariable::Gain => "gain_hz",
            SweepVariable::Detuning => "detuning_hz",
            SweepVariable::Power => "power_w",
            SweepVariable::FeedbackDetuning => "feedback_detuning_hz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    /// Repeat the sweep once per filter gain, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_gains_hz: Option<Vec<f64>>,
    /// Overrides the probe coupling for this sweep, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_hz: Option<f64>,
    /// `[gain_hz, n_bath]` pairs, interpolated linearly in gain, for a bath
    /// that heats with the feedback gain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath_profile: Option<Vec<[f64; 2]>>,
    /// Optical damping per watt for power sweeps, Hz/W; taken from the power
    /// calibration when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_coeff_hz_per_w: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.steps < 2 {
            p.push("sweep.steps must be at least 2".to_string());
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            p.push("sweep range must be finite".into());
        }
        if let Some(profile) = &self.bath_profile {
            if profile.is_empty() || profile.windows(2).any(|w| w[1][0] <= w[0][0]) {
                p.push("sweep.bath_profile needs gains in increasing order".into());
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// Sweep values; a zero-width range gives a single point.
    pub fn values(&self) -> Vec<f64> {
        if self.start == self.stop {
            return vec![self.start];
        }
        let n = self.steps;
        (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect()
    }
}

/// Bath occupation at filter gain `gain_hz` from a heating profile.
pub fn interpolate_profile(profile: &[[f64; 2]], gain_hz: f64) -> f64 {
    let i = profile.partition_point(|p| p[0] <= gain_hz);
    if i == 0 {
        return profile[0][1];
    }
    if i == profile.len() {
        return profile[i - 1][1];
    }
    let (a, b) = (profile[i - 1], profile[i]);
    a[1] + (b[1] - a[1]) * (gain_hz - a[0]) / (b[0] - a[0])
}

fn default_gamma_t() -> f64 {
    1e5
}
fn default_tolerance() -> f64 {
    0.05
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Recorded run length in closed-loop damping times.
    #[serde(default = "default_gamma_t")]
    pub gamma_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Test hook: scales the simulated thermal force density.
    #[serde(default = "one")]
    pub thermal_noise_scale: f64,
    /// Also write the recorded time series.
    #[serde(default)]
    pub dump_series: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            gamma_t: default_gamma_t(),
            seed: 0,
            dt_s: None,
            tolerance: default_tolerance(),
            thermal_noise_scale: 1.0,
            dump_series: false,
        }
    }
}

fn default_regime() -> ProbeRegime {
    ProbeRegime::Resonant
}

fn default_max_bath() -> f64 {
    1e5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Generator powers, W, and the optical damping measured at each, Hz.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub powers_w: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma_opt_hz: Vec<f64>,
    /// Electronic gains and the linewidths measured at each, Hz.
    #[serde(default = "default_regime")]
    pub regime: ProbeRegime,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gains: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linewidths_hz: Vec<f64>,
    /// Heterodyne spectrum CSV whose bath occupation is fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_spectrum: Option<String>,
    #[serde(default = "default_max_bath")]
    pub max_bath_occupation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_offset_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityMapConfig {
    pub phase_start_deg: f64,
    pub phase_stop_deg: f64,
    pub phase_steps: usize,
    pub gain_start_hz: f64,
    pub gain_stop_hz: f64,
    pub gain_steps: usize,
}

/// A configuration converted to model types in angular units.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub device: OpmDevice,
    pub probe: ProbeTone,
    pub filter: FeedbackFilter,
    pub noise: NoiseBudget,
    pub grid: GridSettings,
    pub chain: Option<ChainReduction>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// A file path, or [`PAPER_DEFAULTS`] for the built-in configuration.
    pub fn load(path: &str) -> Result<Self> {
        if path == PAPER_DEFAULTS {
            return Self::parse(PAPER_DEFAULTS_TOML);
        }
        let text = std::fs::read_to_string(Path::new(path)).map_err(|e| Error::Config(format!("{path}: {e}")))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{path}: {m}")),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn device(&self) -> Result<OpmDevice> {
        let d = &self.device;
        OpmDevice::new(hz_to_rad(d.omega_m_hz), hz_to_rad(d.gamma_hz), hz_to_rad(d.kappa_hz), hz_to_rad(d.omega_c_hz), hz_to_rad(d.g0_hz))
            .map_err(config_error)
    }

    pub fn probe(&self, device: &OpmDevice) -> Result<ProbeTone> {
        let p = &self.probe;
        let detuning = hz_to_rad(p.detuning_hz);
        match (p.coupling_hz, p.photon_number) {
            (Some(g), None) => ProbeTone::new(detuning, hz_to_rad(g)),
            (None, Some(n)) => ProbeTone::from_photon_number(device, detuning, n),
            _ => Err(Error::Config("probe: set exactly one of coupling_hz and photon_number".into())),
        }
        .map_err(config_error)
    }

    pub fn noise(&self) -> Result<NoiseBudget> {
        let n = &self.noise;
        NoiseBudget::with_cavity(n.bath_occupation, n.amplifier_noise, n.cavity_occupation).map_err(config_error)
    }

    pub fn grid(&self) -> GridSettings {
        let g = &self.grid;
        GridSettings {
            halfwidth_linewidths: g.halfwidth_linewidths,
            points_per_linewidth: g.points_per_linewidth,
            background_points: g.background_points,
            background_halfspan: g.background_halfspan_hz.map(hz_to_rad),
            growth: g.growth,
        }
    }

    pub fn shape(&self) -> FilterShape {
        match self.feedback.shape {
            ShapeConfig::LinearPhase => FilterShape::LinearPhase,
            ShapeConfig::Delay => FilterShape::Delay { extra_periods: self.feedback.extra_periods },
        }
    }

    pub fn chain(&self) -> Option<FeedbackChain> {
        self.feedback.chain.map(|c| FeedbackChain {
            detuning_f: hz_to_rad(c.detuning_f_hz),
            carrier_amplitude: c.carrier_amplitude,
            electronic_gain: c.electronic_gain,
            loop_delay: c.loop_delay_s,
            extra_line_phase: (deg_to_rad(c.extra_line_phase_deg[0]), deg_to_rad(c.extra_line_phase_deg[1])),
        })
    }

    /// Filter at `gain` (rad/s) with the configured phase, or the optimal one.
    pub fn filter_at(&self, device: &OpmDevice, probe: &ProbeTone, gain: f64) -> Result<FeedbackFilter> {
        let phase = match self.feedback.phase_deg {
            Some(p) => deg_to_rad(p),
            None => default_phase(device, probe, gain)?,
        };
        Ok(FeedbackFilter::new(gain, phase).map_err(config_error)?.with_shape(self.shape()))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let device = self.device()?;
        let probe = self.probe(&device)?;
        let noise = self.noise()?;
        let (filter, chain) = match self.chain() {
            Some(c) => {
                if self.feedback.gain_hz.is_some() || self.feedback.phase_deg.is_some() {
                    return Err(Error::Config("feedback: gain_hz/phase_deg conflict with [feedback.chain]".into()));
                }
                let r = feedback_chain_reduce(&device, &c)?;
                (r.filter().with_shape(self.shape()), Some(r))
            }
            None => (self.filter_at(&device, &probe, hz_to_rad(self.feedback.gain_hz.unwrap_or(0.0)))?, None),
        };
        Ok(Resolved { device, probe, filter, noise, grid: self.grid(), chain })
    }

    /// The configuration with derived values written out: the phase actually
    /// used, and the coupling when given as a photon number.
    pub fn resolved_config(&self) -> Result<Config> {
        let r = self.resolve()?;
        let mut c = self.clone();
        if c.feedback.chain.is_none() {
            c.feedback.phase_deg = Some(rad_to_deg(r.filter.phase));
        }
        Ok(c)
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameters(v) => Error::Config(v.join("; ")),
        other => other,
    }
}

/// Damping-optimal phase: closed forms on resonance and on the blue
/// sideband, a numerical search elsewhere.
pub fn default_phase(device: &OpmDevice, probe: &ProbeTone, gain: f64) -> Result<f64> {
    let d = probe.detuning;
    if d == 0.0 || gain == 0.0 {
        Ok(optimal_phase(device.kappa, device.omega_m))
    } else if (d - device.omega_m).abs() <= 1e-12 * device.omega_m {
        Ok(optimal_phase_blue(device))
    } else {
        Ok(wrap_phase(optimal_phase_numeric(device, probe, gain, 72)?))
    }
}
