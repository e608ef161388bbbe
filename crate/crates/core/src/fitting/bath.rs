use crate::error::{Error, Result};
use crate::linsolve::{output_values, solve_closed_loop, FrequencyGrid, Spectrum, SpectrumKind};
use crate::model::{FeedbackFilter, NoiseBudget, OpmDevice, ProbeTone};

const GOLDEN_ITER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathFitOptions {
    /// Upper end of the search interval for `n_m^T`; the lower end is 0.
    pub max_occupation: f64,
    /// When set, also fit a frequency offset `δ` with `|δ| ≤` this value,
    /// comparing the measured point at `ω` with the model at `ω + δ`.
    pub frequency_offset: Option<f64>,
}

impl Default for BathFitOptions {
    fn default() -> Self {
        BathFitOptions { max_occupation: 1e5, frequency_offset: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathFit {
    pub bath_occupation: f64,
    /// One standard error from the residual scatter.
    pub bath_occupation_err: f64,
    pub frequency_offset: f64,
    /// RMS residual, quanta.
    pub rms_residual: f64,
}

/// Output spectrum at `n_m^T = 0` and its derivative with respect to `n_m^T`;
/// the spectrum is affine in the bath occupation.
fn affine_model(
    points: &[f64],
    offset: f64,
    device: &OpmDevice,
    probe: &ProbeTone,
    filter: &FeedbackFilter,
    noise: &NoiseBudget,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = FrequencyGrid::new(points.iter().map(|w| w + offset).collect())?;
    let t = solve_closed_loop(device, probe, filter, &grid)?;
    let s0 = output_values(&t, &NoiseBudget { bath_occupation: 0.0, ..*noise });
    let s1 = output_values(&t, &NoiseBudget { bath_occupation: 1.0, ..*noise });
    let slope = s1.iter().zip(&s0).map(|(a, b)| a - b).collect();
    Ok((s0, slope))
}

/// Closed-form least squares in `n` for a fixed offset: `(n, rss, n_err)`.
fn solve_linear(measured: &[f64], s0: &[f64], slope: &[f64]) -> (f64, f64, f64) {
    let num: f64 = measured.iter().zip(s0).zip(slope).map(|((m, a), d)| (m - a) * d).sum();
    let den: f64 = slope.iter().map(|d| d * d).sum();
    let n = num / den;
    let rss: f64 = measured.iter().zip(s0).zip(slope).map(|((m, a), d)| (m - a - n * d).powi(2)).sum();
    let dof = (measured.len() as f64 - 1.0).max(1.0);
    (n, rss, (rss / dof / den).sqrt())
}

/// Least-squares bath occupation reproducing a measured heterodyne spectrum,
/// with every other parameter fixed. `noise.bath_occupation` is ignored.
pub fn fit_bath_occupation(
    measured: &Spectrum,
    device: &OpmDevice,
    probe: &ProbeTone,
    filter: &FeedbackFilter,
    noise: &NoiseBudget,
    options: &BathFitOptions,
) -> Result<BathFit> {
    if measured.one_sided {
        return Err(Error::InvalidParameters(vec!["bath fit needs a two-sided heterodyne spectrum".into()]));
    }
    if !matches!(measured.kind, SpectrumKind::HeterodyneOutput | SpectrumKind::Measured) {
        log::warn!("fitting the bath occupation to a {:?} spectrum as if it were heterodyne output", measured.kind);
    }
    let points = measured.frequencies();
    let eval = |offset: f64| -> Result<(f64, f64, f64)> {
        let (s0, slope) = affine_model(points, offset, device, probe, filter, noise)?;
        if slope.iter().all(|d| *d == 0.0) {
            return Err(Error::Fit("spectrum does not depend on the bath occupation".into()));
        }
        Ok(solve_linear(&measured.values, &s0, &slope))
    };

    let (offset, (n, rss, n_err)) = match options.frequency_offset {
        None => (0.0, eval(0.0)?),
        Some(max) => {
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (-max, max);
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let mut fc = eval(c)?;
            let mut fd = eval(d)?;
            for _ in 0..GOLDEN_ITER {
                if fc.1 < fd.1 {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = eval(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = eval(d)?;
                }
            }
            let best = 0.5 * (a + b);
            if max - best.abs() < 1e-6 * max {
                return Err(Error::Fit(format!("frequency offset {best:e} at the search boundary ±{max:e}")));
            }
            (best, eval(best)?)
        }
    };
    if !(n > 0.0 && n < options.max_occupation) {
        return Err(Error::Fit(format!(
            "best bath occupation {n:e} lies at or beyond the search interval [0, {:e}]",
            options.max_occupation
        )));
    }
    Ok(BathFit {
        bath_occupation: n,
        bath_occupation_err: n_err,
        frequency_offset: offset,
        rms_residual: (rss / points.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::optimal_phase;
    use crate::linsolve::{default_grid, output_spectrum, GridSettings};
    use crate::model::reference_device;
    use crate::units::hz_to_rad;

    fn setup(n: f64) -> (OpmDevice, ProbeTone, FeedbackFilter, NoiseBudget, Spectrum) {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        let f = FeedbackFilter::new(hz_to_rad(28e3), optimal_phase(d.kappa, d.omega_m)).unwrap();
        let noise = NoiseBudget::new(n, 13.0).unwrap();
        let grid = default_grid(&d, &probe, &f, &GridSettings::default()).unwrap();
        let t = solve_closed_loop(&d, &probe, &f, &grid).unwrap();
        let s = output_spectrum(&t, &noise).unwrap();
        (d, probe, f, noise, s)
    }

    #[test]
    fn inverse_crime() {
        let (d, probe, f, noise, s) = setup(205.0);
        let fit = fit_bath_occupation(&s, &d, &probe, &f, &noise, &BathFitOptions::default()).unwrap();
        assert!((fit.bath_occupation / 205.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_offset() {
        let (d, probe, f, noise, s) = setup(205.0);
        let shift = 0.3 * d.gamma;
        let moved = Spectrum::new(
            FrequencyGrid::new(s.frequencies().iter().map(|w| w - shift).collect()).unwrap(),
            s.values.clone(),
            SpectrumKind::HeterodyneOutput,
        )
        .unwrap();
        let opts = BathFitOptions { frequency_offset: Some(5.0 * d.gamma), ..Default::default() };
        let fit = fit_bath_occupation(&moved, &d, &probe, &f, &noise, &opts).unwrap();
        assert!((fit.frequency_offset - shift).abs() < 1e-3 * d.gamma, "{}", fit.frequency_offset);
        assert!((fit.bath_occupation / 205.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn boundary_is_an_error() {
        let (d, probe, f, noise, s) = setup(205.0);
        let opts = BathFitOptions { max_occupation: 100.0, frequency_offset: None };
        assert!(matches!(fit_bath_occupation(&s, &d, &probe, &f, &noise, &opts), Err(Error::Fit(_))));
    }
}
