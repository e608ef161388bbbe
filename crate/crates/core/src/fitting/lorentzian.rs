use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::linsolve::Spectrum;

/// Squashing-dip depth, relative to the peak height, above which a peak is
/// flagged as distorted.
pub const DISTORTION_LIMIT: f64 = 0.05;
const MAX_ITER: usize = 500;
const MIN_POINTS_PER_WIDTH: f64 = 3.0;

/// `baseline + (area/π)·(fwhm/2)/((ω − center)² + (fwhm/2)²)`
pub fn lorentzian(omega: f64, center: f64, fwhm: f64, area: f64, baseline: f64) -> f64 {
    let h = 0.5 * fwhm;
    baseline + area / std::f64::consts::PI * h / ((omega - center).powi(2) + h * h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    /// Integral above the baseline, `∫ dω`; negative for a dip.
    pub area: f64,
    pub baseline: f64,
    /// One standard error of center, fwhm, area, baseline.
    pub errors: [f64; 4],
    /// Largest absolute residual relative to the fitted peak height.
    pub goodness: f64,
    /// Set when the data dip below the baseline by more than
    /// [`DISTORTION_LIMIT`] of the peak height, or the residual is that large.
    pub distorted: bool,
}

impl LorentzianFit {
    pub fn height(&self) -> f64 {
        2.0 * self.area / (std::f64::consts::PI * self.fwhm)
    }
}

pub fn fit_lorentzian(spec: &Spectrum, window: (f64, f64)) -> Result<LorentzianFit> {
    let (x, y) = spec.window(window.0, window.1);
    fit_lorentzian_points(&x, &y)
}

fn initial_guess(x: &[f64], y: &[f64]) -> [f64; 4] {
    let n = x.len();
    let edge = (n / 10).max(1);
    let mut edges: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    edges.sort_by(|a, b| a.total_cmp(b));
    let base = edges[edges.len() / 2];
    let (imax, _) = y.iter().enumerate().max_by(|a, b| (a.1 - base).abs().total_cmp(&(b.1 - base).abs())).unwrap();
    let height = y[imax] - base;
    let half = base + 0.5 * height;
    let above = |v: f64| if height > 0.0 { v >= half } else { v <= half };
    let mut l = imax;
    while l > 0 && above(y[l - 1]) {
        l -= 1;
    }
    let mut r = imax;
    while r + 1 < n && above(y[r + 1]) {
        r += 1;
    }
    let lo = if l > 0 { l - 1 } else { l };
    let hi = if r + 1 < n { r + 1 } else { r };
    let fwhm = (x[hi] - x[lo]).max(x[1] - x[0]);
    [x[imax], fwhm, 0.5 * std::f64::consts::PI * height * fwhm, base]
}

/// Levenberg–Marquardt fit on scaled coordinates, `u = (ω − ω₀)/s`.
pub fn fit_lorentzian_points(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    if x.len() != y.len() || x.len() < 6 {
        return Err(Error::InsufficientData(format!("Lorentzian fit needs at least 6 points, got {}", x.len())));
    }
    let g = initial_guess(x, y);
    let (x0, s) = (g[0], g[1]);
    let ys = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = x.iter().map(|w| (w - x0) / s).collect();
    let v: Vec<f64> = y.iter().map(|w| w / ys).collect();
    // parameters: center, fwhm, area, baseline in scaled units
    let mut p = Vector4::new(0.0, 1.0, g[2] / (s * ys), g[3] / ys);

    let model = |p: &Vector4<f64>, u: f64| -> (f64, Vector4<f64>) {
        let h = 0.5 * p[1];
        let d = (u - p[0]).powi(2) + h * h;
        let pi = std::f64::consts::PI;
        let f = p[3] + p[2] / pi * h / d;
        let j = Vector4::new(
            p[2] / pi * h * 2.0 * (u - p[0]) / (d * d),
            p[2] / (2.0 * pi) * (d - 2.0 * h * h) / (d * d),
            h / (pi * d),
            1.0,
        );
        (f, j)
    };
    let normal = |p: &Vector4<f64>| -> (Matrix4<f64>, Vector4<f64>, f64) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        let mut rss = 0.0;
        for (ui, vi) in u.iter().zip(&v) {
            let (f, j) = model(p, *ui);
            let r = vi - f;
            jtj += j * j.transpose();
            jtr += j * r;
            rss += r * r;
        }
        (jtj, jtr, rss)
    };

    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut rss) = normal(&p);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut a = jtj;
        for k in 0..4 {
            a[(k, k)] *= 1.0 + lambda;
        }
        let Some(step) = a.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        if !(trial[1] > 0.0) {
            lambda *= 10.0;
            continue;
        }
        let (tjtj, tjtr, trss) = normal(&trial);
        if trss <= rss {
            let small = step.iter().zip(trial.iter()).all(|(d, q)| d.abs() <= 1e-13 * (1.0 + q.abs()));
            p = trial;
            jtj = tjtj;
            jtr = tjtr;
            let drop = rss - trss;
            rss = trss;
            lambda = (lambda * 0.3).max(1e-15);
            if small || drop <= 1e-28 * (1.0 + rss) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit(format!("Levenberg-Marquardt did not converge in {MAX_ITER} iterations")));
    }

    let n = u.len() as f64;
    let dof = (n - 4.0).max(1.0);
    let cov = jtj.try_inverse().map(|c| c * (rss / dof));
    let sd = |k: usize| cov.map_or(f64::NAN, |c| c[(k, k)].max(0.0).sqrt());
    let center = x0 + s * p[0];
    let fwhm = s * p[1];
    let area = s * ys * p[2];
    let baseline = ys * p[3];
    let errors = [s * sd(0), s * sd(1), s * ys * sd(2), ys * sd(3)];

    let spacing = local_spacing(x, center);
    if fwhm < MIN_POINTS_PER_WIDTH * spacing {
        return Err(Error::Fit(format!("peak width {fwhm:e} is narrower than {MIN_POINTS_PER_WIDTH} grid steps of {spacing:e}")));
    }
    let height = 2.0 * area / (std::f64::consts::PI * fwhm);
    let worst = u.iter().zip(&v).map(|(ui, vi)| (vi - model(&p, *ui).0).abs()).fold(0.0f64, f64::max);
    let goodness = worst * ys / height.abs();
    let overshoot = y.iter().map(|yi| if height > 0.0 { baseline - yi } else { yi - baseline }).fold(0.0f64, f64::max);
    let distorted = overshoot > DISTORTION_LIMIT * height.abs() || goodness > DISTORTION_LIMIT;
    Ok(LorentzianFit { center, fwhm, area, baseline, errors, goodness, distorted })
}

fn local_spacing(x: &[f64], c: f64) -> f64 {
    let i = x.partition_point(|&w| w < c).clamp(1, x.len() - 1);
    x[i] - x[i - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synth(c: f64, w: f64, a: f64, b: f64, n: usize, span: f64) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|k| c - span + 2.0 * span * k as f64 / (n - 1) as f64).collect();
        let y = x.iter().map(|&o| lorentzian(o, c, w, a, b)).collect();
        (x, y)
    }

    #[test]
    fn recovers_exact_peak() {
        let (c, w, a, b) = (5.1e7, 480.0, 3.0e4, 13.5);
        let (x, y) = synth(c + 37.0, w, a, b, 801, 20.0 * w);
        let f = fit_lorentzian_points(&x, &y).unwrap();
        assert!(((f.center - c - 37.0) / w).abs() < 1e-6);
        assert!((f.fwhm / w - 1.0).abs() < 1e-6);
        assert!((f.area / a - 1.0).abs() < 1e-6);
        assert!((f.baseline / b - 1.0).abs() < 1e-6);
        assert!(!f.distorted);
    }

    #[test]
    fn fits_dips() {
        let (x, y) = synth(2.0, 0.1, -0.05, 1.0, 401, 2.0);
        let f = fit_lorentzian_points(&x, &y).unwrap();
        assert!((f.area / -0.05 - 1.0).abs() < 1e-6);
        assert!((f.fwhm / 0.1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn under_resolved_peak_rejected() {
        let (x, y) = synth(0.0, 0.01, 1.0, 0.0, 101, 1.0);
        assert!(fit_lorentzian_points(&x, &y).is_err());
    }

    #[test]
    fn squashed_peak_is_flagged() {
        let (x, mut y) = synth(0.0, 1.0, 10.0, 5.0, 401, 20.0);
        for (xi, yi) in x.iter().zip(y.iter_mut()) {
            *yi -= lorentzian(*xi, 0.0, 0.3, 2.0, 0.0);
        }
        let f = fit_lorentzian_points(&x, &y).unwrap();
        assert!(f.distorted);
    }

    proptest! {
        #[test]
        fn self_consistent(c in -10.0f64..10.0, w in 0.05f64..2.0, a in 0.1f64..100.0, b in -5.0f64..5.0) {
            let (x, y) = synth(c, w, a, b, 601, 25.0 * w);
            let f = fit_lorentzian_points(&x, &y).unwrap();
            prop_assert!(((f.center - c) / w).abs() < 1e-6);
            prop_assert!((f.fwhm / w - 1.0).abs() < 1e-6);
            prop_assert!((f.area / a - 1.0).abs() < 1e-6);
        }
    }
}
