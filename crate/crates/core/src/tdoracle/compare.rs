use serde::Serialize;

use super::periodogram::periodogram;
use super::sim::{simulate, SimConfig};
use crate::error::{Error, Result};
use crate::fitting::fit_lorentzian;
use crate::linsolve::{default_grid, displacement_spectrum, momentum_spectrum, occupation_numeric, solve_closed_loop, GridSettings, MechanicalPole};
use crate::model::{FeedbackFilter, FilterShape, NoiseBudget, OpmDevice, ProbeTone};

/// Fit window half-width and periodogram segment length, in linewidths.
const FIT_HALFWIDTH: f64 = 10.0;
const SEGMENT_LINEWIDTHS: f64 = 200.0;

/// Damping times `γ_eff·T` needed for a 3σ statistical error on the
/// occupation below `tolerance`; the relative standard error of a
/// time-averaged energy is `√(2/γ_eff T)`.
pub fn required_gamma_t(tolerance: f64) -> f64 {
    18.0 / (tolerance * tolerance)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub observable: String,
    pub linsolve: f64,
    pub tdoracle: f64,
    /// One standard error of the time-domain estimate.
    pub tdoracle_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    fn new(observable: &str, linsolve: f64, tdoracle: f64, tdoracle_err: f64, tolerance: f64) -> Self {
        let pass = ((tdoracle - linsolve) / linsolve).abs() <= tolerance;
        Comparison { observable: observable.to_string(), linsolve, tdoracle, tdoracle_err, tolerance, pass }
    }

    pub fn relative_deviation(&self) -> f64 {
        (self.tdoracle - self.linsolve) / self.linsolve
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub pole: MechanicalPole,
    pub rows: Vec<Comparison>,
    pub sim_steps: usize,
    pub delay_taps: usize,
}

impl CrossValidation {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.pass).map(|r| r.observable.as_str()).collect()
    }
}

/// Occupation, linewidth and peak area of the displacement from both
/// solvers. A linear-phase filter is compared in its delay-line form, which
/// is what the time-domain loop realizes.
pub fn cross_validate(
    device: &OpmDevice,
    probe: &ProbeTone,
    filter: &FeedbackFilter,
    noise: &NoiseBudget,
    cfg: &SimConfig,
    tolerance: f64,
) -> Result<CrossValidation> {
    let filter = match filter.shape {
        FilterShape::LinearPhase => filter.with_shape(FilterShape::Delay { extra_periods: 0 }),
        FilterShape::Delay { .. } => *filter,
    };
    let grid = default_grid(device, probe, &filter, &GridSettings::default())?;
    let transfer = solve_closed_loop(device, probe, &filter, &grid)?;
    let pole = transfer.pole.ok_or_else(|| Error::PoleSearch("no mechanical pole".into()))?;
    let g = pole.gamma_eff;
    let recorded = cfg.duration - cfg.burn_in;
    let need = required_gamma_t(tolerance);
    if g * recorded < need {
        return Err(Error::InsufficientData(format!(
            "oracle run too short for tolerance {tolerance}: need a recorded duration of at least {:.4e} s ({need:.0} damping times), have {recorded:.4e} s",
            need / g
        )));
    }
    cfg.validate(device, probe, Some(g))?;
    let s_x = displacement_spectrum(&transfer, noise)?;
    let s_p = momentum_spectrum(&transfer, noise)?;
    let n_fd = occupation_numeric(&s_x, &s_p)?;

    let out = simulate(device, probe, &filter, noise, cfg)?;
    let lo = (pole.omega_eff - FIT_HALFWIDTH * g).max(0.5 * pole.omega_eff);
    let hi = pole.omega_eff + FIT_HALFWIDTH * g;
    let fit_fd = fit_lorentzian(&s_x, (lo, hi))?;
    let seg = ((SEGMENT_LINEWIDTHS / g) / out.sample_dt).round() as usize;
    let seg = seg.next_power_of_two().min(out.x.len());
    let pg = periodogram(&out.x, out.sample_dt, seg, 0.5)?;
    let fit_td = fit_lorentzian(&pg, (lo, hi))?;

    let rows = vec![
        Comparison::new("occupation", n_fd, out.occupation, out.occupation_err, tolerance),
        Comparison::new("linewidth", fit_fd.fwhm, fit_td.fwhm, fit_td.errors[1], tolerance),
        // the periodogram is one-sided and carries both signs of frequency
        Comparison::new("peak_area", fit_fd.area, 0.5 * fit_td.area, 0.5 * fit_td.errors[2], tolerance),
    ];
    Ok(CrossValidation { pole, rows, sim_steps: cfg.steps(), delay_taps: out.delay_taps })
}
