use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::FrequencyGrid;
use super::stability::MechanicalPole;
use super::transfer::{ClosedLoopTransfer, Input, TransferPoint};
use crate::error::{Error, Result};
use crate::model::{NoiseBudget, OpmDevice};

/// Half-width, in linewidths, of the window whose spacing must resolve a peak.
const RESOLVE_HALFWIDTH: f64 = 5.0;
/// Required spacing relative to the linewidth.
const RESOLUTION: f64 = 0.1;
/// Integration span beyond each peak, in linewidths.
const SPAN_LINEWIDTHS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Displacement,
    Momentum,
    HeterodyneOutput,
    OutputQuadratureX,
    OutputQuadratureY,
    /// Estimated from a sampled series or read from disk.
    Measured,
}

/// Symmetrized two-sided density on a frequency grid, so that a variance is
/// `∫ S dω/2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    /// Mechanical pole of the configuration that produced the spectrum.
    pub peak: Option<MechanicalPole>,
    /// Values on `ω ≥ 0` carry the weight of both signs, so a variance is
    /// `∫₀^∞ S dω/2π`.
    pub one_sided: bool,
}

impl Spectrum {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>, kind: SpectrumKind) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidParameters(vec![format!(
                "spectrum has {} values for {} grid points",
                values.len(),
                grid.len()
            )]));
        }
        Ok(Spectrum { grid, values, kind, peak: None, one_sided: false })
    }

    pub fn frequencies(&self) -> &[f64] {
        self.grid.points()
    }

    /// `∫ S dω/2π` over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(self.grid.points(), &self.values) / std::f64::consts::TAU
    }

    /// `∫ S dω/2π` restricted to `[lo, hi]`.
    pub fn integral_between(&self, lo: f64, hi: f64) -> f64 {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .grid
            .points()
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, s)| (*w, *s))
            .unzip();
        trapezoid(&x, &y) / std::f64::consts::TAU
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, omega: f64) -> Option<f64> {
        let p = self.grid.points();
        if omega < p[0] || omega > p[p.len() - 1] {
            return None;
        }
        let i = p.partition_point(|&w| w <= omega).clamp(1, p.len() - 1);
        let t = (omega - p[i - 1]) / (p[i] - p[i - 1]);
        Some(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }

    /// The points lying in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.grid.points().iter().zip(&self.values).filter(|(w, _)| **w >= lo && **w <= hi).map(|(w, s)| (*w, *s)).unzip()
    }
}

/// Trapezoidal rule on a possibly nonuniform abscissa.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Input densities in [`super::Input`] order.
fn input_densities(device: &OpmDevice, noise: &NoiseBudget) -> [f64; 5] {
    let s_in = noise.cavity_input_density();
    [s_in, s_in, noise.thermal_force_density(device), noise.amplifier_noise, noise.amplifier_noise]
}

fn check_resolution(grid: &FrequencyGrid, pole: &MechanicalPole) -> Result<()> {
    let g = pole.gamma_eff;
    if !(g > 0.0) {
        return Err(Error::Unstable { gamma_eff: g });
    }
    let required = RESOLUTION * g;
    for c in [-pole.omega_eff, pole.omega_eff] {
        let lo = c - RESOLVE_HALFWIDTH * g;
        let hi = c + RESOLVE_HALFWIDTH * g;
        match grid.max_spacing_within(lo, hi) {
            Some(actual) if actual <= required * (1.0 + 1e-9) => {}
            Some(actual) => return Err(Error::UnderResolved { required, actual }),
            None => return Err(Error::UnderResolved { required, actual: f64::INFINITY }),
        }
    }
    Ok(())
}

fn build(
    transfer: &ClosedLoopTransfer,
    noise: &NoiseBudget,
    kind: SpectrumKind,
    density: impl Fn(&TransferPoint, &[f64; 5]) -> f64,
) -> Result<Spectrum> {
    match &transfer.pole {
        Some(p) => check_resolution(&transfer.grid, p)?,
        None => log::warn!("mechanical pole unknown; spectrum resolution not checked"),
    }
    let s = input_densities(&transfer.device, noise);
    let values = transfer.points.iter().map(|t| density(t, &s)).collect();
    Ok(Spectrum { grid: transfer.grid.clone(), values, kind, peak: transfer.pole, one_sided: false })
}

fn row_density(t: &TransferPoint, row: usize, s: &[f64; 5]) -> f64 {
    (0..5).map(|k| t.state[(row, k)].norm_sqr() * s[k]).sum()
}

pub fn displacement_spectrum(transfer: &ClosedLoopTransfer, noise: &NoiseBudget) -> Result<Spectrum> {
    build(transfer, noise, SpectrumKind::Displacement, |t, s| row_density(t, 2, s))
}

pub fn momentum_spectrum(transfer: &ClosedLoopTransfer, noise: &NoiseBudget) -> Result<Spectrum> {
    build(transfer, noise, SpectrumKind::Momentum, |t, s| row_density(t, 3, s))
}

fn heterodyne_density(t: &TransferPoint, s: &[f64; 5]) -> f64 {
    let i = Complex64::i();
    (0..5).map(|k| 0.5 * (t.output[(0, k)] + i * t.output[(1, k)]).norm_sqr() * s[k]).sum()
}

/// Heterodyne spectrum of `a_out = (x_det + i y_det)/√2`, background
/// `n_add + 1/2 + n_c^T`.
pub fn output_spectrum(transfer: &ClosedLoopTransfer, noise: &NoiseBudget) -> Result<Spectrum> {
    build(transfer, noise, SpectrumKind::HeterodyneOutput, heterodyne_density)
}

/// Heterodyne density at each transfer point, without the resolution check.
pub(crate) fn output_values(transfer: &ClosedLoopTransfer, noise: &NoiseBudget) -> Vec<f64> {
    let s = input_densities(&transfer.device, noise);
    transfer.points.iter().map(|t| heterodyne_density(t, &s)).collect()
}

/// Spectrum of one detected quadrature: `x` when `y_quadrature` is false.
pub fn output_quadrature_spectrum(transfer: &ClosedLoopTransfer, noise: &NoiseBudget, y_quadrature: bool) -> Result<Spectrum> {
    let (row, kind) = if y_quadrature {
        (1, SpectrumKind::OutputQuadratureY)
    } else {
        (0, SpectrumKind::OutputQuadratureX)
    };
    build(transfer, noise, kind, |t, s| (0..5).map(|k| t.output[(row, k)].norm_sqr() * s[k]).sum())
}

/// Occupation split by noise source. The parts sum to `n_m + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericBreakdown {
    pub n_m: f64,
    /// Thermal force, including its share of the zero-point motion.
    pub thermal: f64,
    /// Amplitude-quadrature cavity input (measurement backaction).
    pub backaction: f64,
    /// Phase-quadrature cavity input and amplifier noise fed back by the loop.
    pub feedback: f64,
}

/// Numerical counterpart of the analytic occupation budget.
pub fn occupation_breakdown(transfer: &ClosedLoopTransfer, noise: &NoiseBudget) -> Result<NumericBreakdown> {
    let pole = transfer
        .pole
        .ok_or_else(|| Error::PoleSearch("closed-loop transfer has no mechanical pole".into()))?;
    check_span(&transfer.grid, &pole)?;
    check_resolution(&transfer.grid, &pole)?;
    let s = input_densities(&transfer.device, noise);
    let part = |inputs: &[Input]| -> f64 {
        let v: Vec<f64> = transfer
            .points
            .iter()
            .map(|t| {
                inputs
                    .iter()
                    .map(|&k| 0.5 * (t.state[(2, k as usize)].norm_sqr() + t.state[(3, k as usize)].norm_sqr()) * s[k as usize])
                    .sum()
            })
            .collect();
        trapezoid(transfer.grid.points(), &v) / std::f64::consts::TAU
    };
    let thermal = part(&[Input::Thermal]);
    let backaction = part(&[Input::CavityX]);
    let feedback = part(&[Input::CavityY, Input::AmplifierY]);
    Ok(NumericBreakdown { n_m: thermal + backaction + feedback - 0.5, thermal, backaction, feedback })
}

fn check_span(grid: &FrequencyGrid, pole: &MechanicalPole) -> Result<()> {
    if !(pole.gamma_eff > 0.0) {
        return Err(Error::Unstable { gamma_eff: pole.gamma_eff });
    }
    let need = pole.omega_eff.abs() + SPAN_LINEWIDTHS * pole.gamma_eff;
    if grid.lo() > -need || grid.hi() < need {
        return Err(Error::GridSpan { lo: grid.lo(), hi: grid.hi(), need_lo: -need, need_hi: need });
    }
    Ok(())
}

/// `n_m = ∫(S_x + S_p)/2 dω/2π − 1/2`.
pub fn occupation_numeric(s_x: &Spectrum, s_p: &Spectrum) -> Result<f64> {
    if s_x.grid != s_p.grid {
        return Err(Error::InvalidParameters(vec!["position and momentum spectra must share a grid".into()]));
    }
    let pole = s_x
        .peak
        .or(s_p.peak)
        .ok_or_else(|| Error::InvalidParameters(vec!["spectra carry no mechanical pole".into()]))?;
    check_span(&s_x.grid, &pole)?;
    let sum: Vec<f64> = s_x.values.iter().zip(&s_p.values).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(trapezoid(s_x.grid.points(), &sum) / std::f64::consts::TAU - 0.5)
}
