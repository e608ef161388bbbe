use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linsolve::{FrequencyGrid, Spectrum, SpectrumKind};

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()).collect()
}

/// Welch average of `|Σ w_n z_n e^{iωt_n}|² · dt/Σw²` over Hann-windowed
/// segments, indexed by `ω_k = 2πk/(L·dt)` for `k` in `[−L/2, L/2)`.
fn welch(series: &[Complex64], dt: f64, segment_len: usize, overlap: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameters(vec!["sample interval must be positive".into()]));
    }
    if segment_len < 4 || !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidParameters(vec!["segment length >= 4 and overlap in [0, 1) required".into()]));
    }
    if series.len() < segment_len {
        return Err(Error::InsufficientData(format!(
            "series of {} samples is shorter than one segment of {segment_len}",
            series.len()
        )));
    }
    let hop = (((1.0 - overlap) * segment_len as f64).round() as usize).max(1);
    let w = hann(segment_len);
    let norm = dt / w.iter().map(|v| v * v).sum::<f64>();
    let fft = FftPlanner::new().plan_fft_inverse(segment_len);
    let mut acc = vec![0.0; segment_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment_len <= series.len() {
        for (b, (z, wi)) in buf.iter_mut().zip(series[start..start + segment_len].iter().zip(&w)) {
            *b = z * wi;
        }
        // the inverse transform carries e^{+iωt}, matching the e^{-iωt} convention
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let half = segment_len / 2;
    let scale = norm / count as f64;
    Ok((0..segment_len).map(|j| acc[(j + segment_len - half) % segment_len] * scale).collect())
}

fn frequencies(segment_len: usize, dt: f64) -> Vec<f64> {
    let half = segment_len as i64 / 2;
    (0..segment_len as i64).map(|j| TAU * (j - half) as f64 / (segment_len as f64 * dt)).collect()
}

/// One-sided Welch periodogram of a real series: values on `0 ≤ ω ≤ π/dt`
/// with positive frequencies doubled, so a variance is `∫₀^∞ S dω/2π`.
pub fn periodogram(series: &[f64], dt: f64, segment_len: usize, overlap: f64) -> Result<Spectrum> {
    let z: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let two_sided = welch(&z, dt, segment_len, overlap)?;
    let freqs = frequencies(segment_len, dt);
    let half = segment_len / 2;
    let mut w = Vec::with_capacity(half + 1);
    let mut s = Vec::with_capacity(half + 1);
    for j in half..segment_len {
        w.push(freqs[j]);
        s.push(if j == half { two_sided[j] } else { 2.0 * two_sided[j] });
    }
    // Nyquist bin sits at index 0 of the centred layout
    w.push(PI / dt);
    s.push(two_sided[0]);
    let mut spec = Spectrum::new(FrequencyGrid::new(w)?, s, SpectrumKind::Measured)?;
    spec.one_sided = true;
    Ok(spec)
}

/// Two-sided Welch periodogram of a complex series such as the heterodyne
/// field `(x_det + i y_det)/√2`.
pub fn periodogram_complex(series: &[Complex64], dt: f64, segment_len: usize, overlap: f64) -> Result<Spectrum> {
    let values = welch(series, dt, segment_len, overlap)?;
    Spectrum::new(FrequencyGrid::new(frequencies(segment_len, dt))?, values, SpectrumKind::Measured)
}
