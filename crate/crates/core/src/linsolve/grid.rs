use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing set of angular frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

/// Layout of the default peak-resolving grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    /// Half-width of each fine window, in linewidths.
    pub halfwidth_linewidths: f64,
    /// Fine spacing is `linewidth / points_per_linewidth`.
    pub points_per_linewidth: f64,
    /// Points of the uniform background grid.
    pub background_points: usize,
    /// Half-span of the background grid, rad/s. `None` picks one from the device.
    pub background_halfspan: Option<f64>,
    /// Spacing growth factor between the fine windows and the background.
    pub growth: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            halfwidth_linewidths: 40.0,
            points_per_linewidth: 50.0,
            background_points: 4001,
            background_halfspan: None,
            growth: 1.05,
        }
    }
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameters(vec!["grid needs at least two points".into()]));
        }
        if points.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameters(vec!["grid points must be finite".into()]));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameters(vec!["grid must be strictly increasing".into()]));
        }
        Ok(FrequencyGrid { points })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidParameters(vec!["uniform grid needs n >= 2 and hi > lo".into()]));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Self::new((0..n).map(|k| lo + step * k as f64).collect())
    }

    /// Fine windows around each centre, geometric transition, uniform background.
    pub fn around_peaks(centers: &[f64], span_width: f64, resolution_width: f64, settings: &GridSettings, background_halfspan: f64) -> Result<Self> {
        if !(span_width > 0.0) || !(resolution_width > 0.0) {
            return Err(Error::InvalidParameters(vec!["peak widths must be positive".into()]));
        }
        let half = settings.halfwidth_linewidths * span_width;
        let step = resolution_width / settings.points_per_linewidth;
        let n_bg = settings.background_points.max(2);
        let bg_step = 2.0 * background_halfspan / (n_bg - 1) as f64;
        let mut pts: Vec<f64> = (0..n_bg).map(|k| -background_halfspan + bg_step * k as f64).collect();
        for &c in centers {
            let n = (2.0 * half / step).ceil() as usize;
            let h = 2.0 * half / n as f64;
            pts.extend((0..=n).map(|k| c - half + h * k as f64));
            let mut s = h;
            let mut off = half;
            while s < bg_step && off < 2.0 * background_halfspan {
                s *= settings.growth;
                off += s;
                pts.push(c + off);
                pts.push(c - off);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min_gap = 1e-3 * step;
        let mut out: Vec<f64> = Vec::with_capacity(pts.len());
        for w in pts {
            if out.last().is_none_or(|&l| w - l > min_gap) {
                out.push(w);
            }
        }
        Self::new(out)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn span(&self) -> f64 {
        self.hi() - self.lo()
    }

    /// Largest spacing among intervals touching `[lo, hi]`; `None` when the
    /// window lies outside the grid.
    pub fn max_spacing_within(&self, lo: f64, hi: f64) -> Option<f64> {
        if hi < self.lo() || lo > self.hi() {
            return None;
        }
        let p = &self.points;
        let start = p.partition_point(|&w| w < lo).saturating_sub(1);
        let end = p.partition_point(|&w| w <= hi).min(p.len() - 1);
        (start..end.max(start + 1)).filter(|&i| i + 1 < p.len()).map(|i| p[i + 1] - p[i]).reduce(f64::max)
    }
}
