use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{SMatrix, Vector4};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{FeedbackFilter, NoiseBudget, OpmDevice, ProbeTone};

type M4 = SMatrix<f64, 4, 4>;
type M12 = SMatrix<f64, 12, 12>;

const DIVERGENCE: f64 = 1e6;
const BATCHES: usize = 64;
/// Steps per shortest period (`2π/max(ω_m, κ, |Δ|)`), at least.
const STEPS_PER_PERIOD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Total simulated time including burn-in, s.
    pub duration: f64,
    pub seed: u64,
    /// Initial transient discarded from statistics and records, s.
    pub burn_in: f64,
    /// Delay line length in steps; derived from the filter when absent.
    #[serde(default)]
    pub delay_taps: Option<usize>,
    /// Steps per recorded sample.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Keep the series instead of failing when the motion blows up.
    #[serde(default)]
    pub allow_unstable: bool,
    /// Scales the thermal force density; 1 is the physical value.
    #[serde(default = "unit")]
    pub thermal_noise_scale: f64,
}

fn default_stride() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// Largest admissible step for a device and probe.
pub(crate) fn max_step(device: &OpmDevice, probe: &ProbeTone) -> f64 {
    TAU / (STEPS_PER_PERIOD * device.omega_m.max(device.kappa).max(probe.detuning.abs()))
}

impl SimConfig {
    /// A run of `gamma_t` damping times of `gamma_eff` after a burn-in of 20,
    /// at the largest admissible step, sampling ten times per period.
    pub fn for_linewidth(device: &OpmDevice, probe: &ProbeTone, gamma_eff: f64, gamma_t: f64, seed: u64) -> Self {
        let dt = max_step(device, probe);
        let burn_in = 20.0 / gamma_eff;
        let stride = ((TAU / (10.0 * device.omega_m)) / dt).floor().max(1.0) as usize;
        SimConfig {
            dt,
            duration: burn_in + gamma_t.max(100.0) / gamma_eff,
            seed,
            burn_in,
            delay_taps: None,
            stride,
            allow_unstable: false,
            thermal_noise_scale: 1.0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self, device: &OpmDevice, probe: &ProbeTone, gamma_eff_expected: Option<f64>) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0) {
            problems.push("dt must be positive".to_string());
        } else if self.dt > max_step(device, probe) * (1.0 + 1e-12) {
            problems.push(format!("dt = {:e} s exceeds 2π/(50·max(ω_m, κ, |Δ|)) = {:e} s", self.dt, max_step(device, probe)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.duration) {
            problems.push("burn_in must lie in [0, duration)".into());
        }
        if self.stride == 0 {
            problems.push("stride must be at least 1".into());
        }
        if !(self.thermal_noise_scale >= 0.0) {
            problems.push("thermal_noise_scale must be non-negative".into());
        }
        if let Some(g) = gamma_eff_expected {
            if g > 0.0 && self.duration - self.burn_in < 100.0 / g {
                problems.push(format!(
                    "recorded duration {:e} s is shorter than 100/γ_eff = {:e} s",
                    self.duration - self.burn_in,
                    100.0 / g
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameters(problems))
        }
    }

    /// Delay line length realizing the filter delay to within `dt/2`.
    pub fn taps_for(&self, device: &OpmDevice, filter: &FeedbackFilter) -> Result<usize> {
        if let Some(k) = self.delay_taps {
            return Ok(k.max(1));
        }
        let tau = filter.delay(device.omega_m);
        let k = (tau / self.dt).round() as usize;
        if k == 0 && filter.gain > 0.0 {
            return Err(Error::InvalidParameters(vec![format!(
                "filter delay {tau:e} s is shorter than half a step; use a delay shape with an extra period"
            )]));
        }
        Ok(k.max(1))
    }
}

/// Recorded series and occupation statistics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub sample_dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Detected quadratures averaged over each sample interval.
    pub x_det: Vec<f64>,
    pub y_det: Vec<f64>,
    /// `⟨(x² + p²)/2⟩ − 1/2` over every post-burn-in step.
    pub occupation: f64,
    /// One standard error of `occupation` from batch means.
    pub occupation_err: f64,
    pub delay_taps: usize,
    pub seed: u64,
    pub diverged: bool,
}

impl SimOutput {
    /// Time-series dump: `#` metadata carrying the SHA-256 of `config_text`
    /// and the seed, then `t,x,p,x_det,y_det` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, config_text: &str) -> Result<()> {
        let hash = Sha256::digest(config_text.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        writeln!(w, "# config_sha256: {hex}")?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# sample_dt: {:e}", self.sample_dt)?;
        writeln!(w, "# delay_taps: {}", self.delay_taps)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "x", "p", "x_det", "y_det"])?;
        for i in 0..self.t.len() {
            csv.write_record(
                [self.t[i], self.x[i], self.p[i], self.x_det[i], self.y_det[i]].iter().map(|v| format!("{v:e}")),
            )?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn drift(device: &OpmDevice, probe: &ProbeTone) -> M4 {
    let (k, wm, g, d, gc) = (device.kappa, device.omega_m, device.gamma, probe.detuning, probe.coupling);
    #[rustfmt::skip]
    let m = M4::new(
        -0.5 * k,   -d,       0.0,        0.0,
        d,          -0.5 * k, -2.0 * gc,  0.0,
        0.0,        0.0,      0.0,        wm,
        -2.0 * gc,  0.0,      -wm,        -g,
    );
    m
}

/// `(Φ, Ψ, Γ)`: state map, held-input map, and the held-input map of the
/// step integral.
fn zoh(m: &M4, dt: f64) -> (M4, M4, M4) {
    let mut a = M12::zeros();
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(m);
    a.fixed_view_mut::<4, 4>(0, 4).copy_from(&M4::identity());
    a.fixed_view_mut::<4, 4>(4, 8).copy_from(&M4::identity());
    let e = (a * dt).exp();
    (e.fixed_view::<4, 4>(0, 0).into(), e.fixed_view::<4, 4>(0, 4).into(), e.fixed_view::<4, 4>(0, 8).into())
}

pub fn simulate(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, noise: &NoiseBudget, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate(device, probe, None)?;
    let taps = cfg.taps_for(device, filter)?;
    let dt = cfg.dt;
    let (phi, psi, gam) = zoh(&drift(device, probe), dt);
    let avg_s = psi / dt;
    let avg_u = gam / dt;

    let sk = device.kappa.sqrt();
    let s_in = noise.cavity_input_density();
    let sd_in = (s_in / dt).sqrt();
    let sd_th = (cfg.thermal_noise_scale * noise.thermal_force_density(device) / dt).sqrt() / device.omega_m;
    let sd_add = (noise.amplifier_noise / dt).sqrt();
    let fb = filter.gain / sk;

    let steps = cfg.steps();
    let burn = (cfg.burn_in / dt).round() as usize;
    let stride = cfg.stride;
    let n_rec = steps.saturating_sub(burn) / stride;
    let mut out = SimOutput {
        sample_dt: stride as f64 * dt,
        t: Vec::with_capacity(n_rec),
        x: Vec::with_capacity(n_rec),
        p: Vec::with_capacity(n_rec),
        x_det: Vec::with_capacity(n_rec),
        y_det: Vec::with_capacity(n_rec),
        occupation: f64::NAN,
        occupation_err: f64::NAN,
        delay_taps: taps,
        seed: cfg.seed,
        diverged: false,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    // ring buffer of detected y; slot n % taps holds step n
    let mut line = vec![0.0; taps];
    let mut s = Vector4::<f64>::zeros();
    let counted = steps.saturating_sub(burn);
    let batch_len = (counted / BATCHES).max(1);
    let mut batch_sums = Vec::with_capacity(BATCHES + 1);
    let (mut batch_acc, mut batch_n) = (0.0, 0usize);
    let (mut acc_x, mut acc_y) = (0.0, 0.0);

    for n in 0..steps {
        let x_in = sd_in * normal();
        let y_in = sd_in * normal();
        let f_th = sd_th * normal();
        let y_add = sd_add * normal();
        let x_add = sd_add * normal();
        let slot = n % taps;
        let u = Vector4::new(sk * x_in, sk * y_in, 0.0, f_th + fb * line[slot]);
        let mean = avg_s * s + avg_u * u;
        line[slot] = sk * mean[1] - y_in + y_add;

        if n >= burn {
            let e = 0.5 * (s[2] * s[2] + s[3] * s[3]);
            batch_acc += e;
            batch_n += 1;
            if batch_n == batch_len {
                batch_sums.push(batch_acc / batch_n as f64);
                batch_acc = 0.0;
                batch_n = 0;
            }
            let k = n - burn;
            if k.is_multiple_of(stride) {
                out.t.push(n as f64 * dt);
                out.x.push(s[2]);
                out.p.push(s[3]);
            }
            acc_x += sk * mean[0] - x_in + x_add;
            acc_y += line[slot];
            if k % stride == stride - 1 {
                out.x_det.push(acc_x / stride as f64);
                out.y_det.push(acc_y / stride as f64);
                acc_x = 0.0;
                acc_y = 0.0;
            }
        }

        s = phi * s + psi * u;
        if !(s[2].abs() <= DIVERGENCE) {
            if !cfg.allow_unstable {
                return Err(Error::Diverged { t: (n + 1) as f64 * dt, x: s[2].abs() });
            }
            out.diverged = true;
            break;
        }
    }
    let len = out.x_det.len();
    out.t.truncate(len);
    out.x.truncate(len);
    out.p.truncate(len);

    if batch_sums.len() >= 2 {
        let m = batch_sums.len() as f64;
        let mean = batch_sums.iter().sum::<f64>() / m;
        let var = batch_sums.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0);
        out.occupation = mean - 0.5;
        out.occupation_err = (var / m).sqrt();
    }
    Ok(out)
}
