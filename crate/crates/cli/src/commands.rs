use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use log::{info, warn};
use optofb_core::analytic::{
    effective_params_resonant, feedback_chain_reduce, occupation_resonant, optimal_operating_point,
};
use optofb_core::fitting::{
    calibrate_gain, calibrate_power, fit_bath_occupation, fit_lorentzian, g_rsb, detuning_transfer, BathFitOptions,
};
use optofb_core::io::{fmt_f64, read_spectrum_csv, write_spectrum_csv, Table};
use optofb_core::linsolve::{
    default_grid, displacement_spectrum, find_mechanical_pole, occupation_breakdown, output_spectrum,
    solve_closed_loop, stability,
};
use optofb_core::tdoracle::{cross_validate, simulate, CrossValidation};
use optofb_core::units::{deg_to_rad, hz_to_rad, phase_deg_reported, rad_to_hz};
use optofb_core::{
    Error, FeedbackFilter, FilterShape, GridSettings, NoiseBudget, OpmDevice, ProbeTone, Result, SimConfig, Spectrum,
};
use rayon::prelude::*;

use crate::config::{interpolate_profile, Config, OracleConfig, SweepSpec, SweepVariable};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: Config,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub timestamp: bool,
}

/// Columns of the per-point summary written by `spectrum` and `sweep`.
pub const SUMMARY_COLUMNS: [&str; 17] = [
    "variable",
    "value",
    "gain_hz",
    "phase_deg",
    "detuning_hz",
    "coupling_hz",
    "n_bath",
    "omega_eff_hz",
    "gamma_eff_hz",
    "stable",
    "n_m",
    "n_thermal",
    "n_backaction",
    "n_feedback",
    "fwhm_fit_hz",
    "area_lower",
    "area_upper",
];

/// Closed-loop observables at one operating point. Everything after the
/// stability flag is NaN when the point is unstable. Sideband areas are
/// Lorentzian-fit areas of the heterodyne output in quanta per second, and
/// negative for a squashing dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResult {
    pub omega_eff: f64,
    pub gamma_eff: f64,
    pub stable: bool,
    pub n_m: f64,
    pub n_thermal: f64,
    pub n_backaction: f64,
    pub n_feedback: f64,
    pub fwhm_fit: f64,
    pub area_lower: f64,
    pub area_upper: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OperatingPoint {
    pub device: OpmDevice,
    pub probe: ProbeTone,
    pub filter: FeedbackFilter,
    pub noise: NoiseBudget,
}

pub struct PointSpectra {
    pub output: Spectrum,
    pub displacement: Spectrum,
}

fn fit_area(spec: &Spectrum, center: f64, halfwidth: f64) -> f64 {
    let lo = center - halfwidth;
    let hi = center + halfwidth;
    match fit_lorentzian(spec, (lo, hi)) {
        // per-hertz density integrated over angular frequency
        Ok(f) => f.area / std::f64::consts::TAU,
        Err(e) => {
            warn!("sideband fit at {:.6e} Hz failed: {e}", rad_to_hz(center));
            f64::NAN
        }
    }
}

/// Solve one operating point; spectra are returned only for stable points.
pub fn evaluate(
    p: &OperatingPoint,
    settings: &GridSettings,
    fit_halfwidth: f64,
) -> Result<(PointResult, Option<PointSpectra>)> {
    let report = stability(&p.device, &p.probe, &p.filter)?;
    let nan = f64::NAN;
    let mut r = PointResult {
        omega_eff: report.omega_eff,
        gamma_eff: report.gamma_eff,
        stable: report.stable,
        n_m: nan,
        n_thermal: nan,
        n_backaction: nan,
        n_feedback: nan,
        fwhm_fit: nan,
        area_lower: nan,
        area_upper: nan,
    };
    if !report.stable {
        return Ok((r, None));
    }
    let grid = default_grid(&p.device, &p.probe, &p.filter, settings)?;
    let t = solve_closed_loop(&p.device, &p.probe, &p.filter, &grid)?;
    let b = occupation_breakdown(&t, &p.noise)?;
    r.n_m = b.n_m;
    r.n_thermal = b.thermal;
    r.n_backaction = b.backaction;
    r.n_feedback = b.feedback;
    let (w, g) = t.pole.map(|q| (q.omega_eff, q.gamma_eff)).unwrap_or((report.omega_eff, report.gamma_eff));
    let half = fit_halfwidth * g;
    let disp = displacement_spectrum(&t, &p.noise)?;
    r.fwhm_fit = match fit_lorentzian(&disp, ((w - half).max(0.5 * w), w + half)) {
        Ok(f) => f.fwhm,
        Err(e) => {
            warn!("linewidth fit failed: {e}");
            nan
        }
    };
    let out = output_spectrum(&t, &p.noise)?;
    r.area_lower = fit_area(&out, -w, half.min(0.5 * w));
    r.area_upper = fit_area(&out, w, half.min(0.5 * w));
    Ok((r, Some(PointSpectra { output: out, displacement: disp })))
}

fn summary_row(variable: &str, value: f64, p: &OperatingPoint, r: &PointResult) -> Vec<String> {
    let f = |v: f64| fmt_f64(v);
    vec![
        variable.to_string(),
        f(value),
        f(rad_to_hz(p.filter.gain)),
        f(phase_deg_reported(p.filter.phase)),
        f(rad_to_hz(p.probe.detuning)),
        f(rad_to_hz(p.probe.coupling)),
        f(p.noise.bath_occupation),
        f(rad_to_hz(r.omega_eff)),
        f(rad_to_hz(r.gamma_eff)),
        r.stable.to_string(),
        f(r.n_m),
        f(r.n_thermal),
        f(r.n_backaction),
        f(r.n_feedback),
        f(rad_to_hz(r.fwhm_fit)),
        f(r.area_lower),
        f(r.area_upper),
    ]
}

impl RunContext {
    fn metadata(&self, command: &str) -> Result<Vec<(String, String)>> {
        let mut m = vec![
            ("generator".to_string(), format!("optofb {}", env!("CARGO_PKG_VERSION"))),
            ("command".to_string(), command.to_string()),
        ];
        if let Some(seed) = self.seed {
            m.push(("seed".into(), seed.to_string()));
        }
        if self.timestamp {
            m.push(("timestamp".into(), chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)));
        }
        m.push(("config".into(), self.config.resolved_config()?.to_toml()));
        Ok(m)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        info!("writing {}", path.display());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn write_table(&self, name: &str, command: &str, mut table: Table) -> Result<PathBuf> {
        let mut meta = self.metadata(command)?;
        meta.append(&mut table.metadata);
        table.metadata = meta;
        let mut w = self.create(name)?;
        table.write(&mut w)?;
        w.flush()?;
        Ok(self.out.join(name))
    }

    fn base_point(&self) -> Result<OperatingPoint> {
        let r = self.config.resolve()?;
        Ok(OperatingPoint { device: r.device, probe: r.probe, filter: r.filter, noise: r.noise })
    }
}

/// Spectra for every gain of the ladder (or the configured gain), plus a
/// summary table. Refuses unstable operating points.
pub fn cmd_spectrum(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let base = ctx.base_point()?;
    let fit_halfwidth = cfg.spectrum.as_ref().map(|s| s.fit_halfwidth_linewidths).unwrap_or(10.0);
    let ladder: Vec<(f64, OperatingPoint)> = match (&cfg.spectrum, cfg.feedback.chain) {
        (Some(s), None) if !s.gains_hz.is_empty() => s
            .gains_hz
            .iter()
            .map(|&g| Ok((g, OperatingPoint { filter: cfg.filter_at(&base.device, &base.probe, hz_to_rad(g))?, ..base })))
            .collect::<Result<_>>()?,
        (Some(s), Some(_)) if !s.gains_hz.is_empty() => {
            return Err(Error::Config("spectrum.gains_hz cannot be combined with [feedback.chain]".into()))
        }
        _ => vec![(cfg.feedback.gain_hz.unwrap_or_else(|| rad_to_hz(base.filter.gain)), base)],
    };
    let points: Vec<OperatingPoint> = ladder.iter().map(|(_, p)| *p).collect();
    for p in &points {
        let s = stability(&p.device, &p.probe, &p.filter)?;
        if !s.stable {
            return Err(Error::Unstable { gamma_eff: s.gamma_eff });
        }
    }
    let settings = cfg.grid();
    let results: Vec<(PointResult, Option<PointSpectra>)> =
        points.par_iter().map(|p| evaluate(p, &settings, fit_halfwidth)).collect::<Result<_>>()?;

    let mut written = Vec::new();
    let mut summary = Table::new(SUMMARY_COLUMNS);
    for (k, ((value, p), (r, spectra))) in ladder.iter().zip(&results).enumerate() {
        let spectra = spectra.as_ref().expect("stable points carry spectra");
        let mut meta = ctx.metadata("spectrum")?;
        meta.push(("gain_hz".into(), fmt_f64(rad_to_hz(p.filter.gain))));
        meta.push(("phase_deg".into(), fmt_f64(phase_deg_reported(p.filter.phase))));
        for (stem, spec) in [("output", &spectra.output), ("displacement", &spectra.displacement)] {
            let name = format!("{stem}_{k:02}.csv");
            let mut w = ctx.create(&name)?;
            write_spectrum_csv(&mut w, spec, &meta)?;
            w.flush()?;
            written.push(ctx.out.join(name));
        }
        summary.push(summary_row("gain", *value, p, r));
    }
    written.push(ctx.write_table("summary.csv", "spectrum", summary)?);
    Ok(written)
}

/// Operating points of a sweep, in sweep order.
pub fn sweep_points(cfg: &Config, spec: &SweepSpec) -> Result<Vec<(f64, OperatingPoint)>> {
    spec.validate()?;
    let r = cfg.resolve()?;
    let mut probe = r.probe;
    if let Some(g) = spec.coupling_hz {
        probe = ProbeTone::new(probe.detuning, hz_to_rad(g))?;
    }
    let base = OperatingPoint { device: r.device, probe, filter: r.filter, noise: r.noise };
    let gains: Vec<f64> = match (&spec.series_gains_hz, spec.variable) {
        (Some(_), SweepVariable::Gain | SweepVariable::FeedbackDetuning) => {
            return Err(Error::Config("sweep.series_gains_hz does not apply to this sweep variable".into()))
        }
        (Some(g), _) => g.iter().map(|g| hz_to_rad(*g)).collect(),
        (None, _) => vec![base.filter.gain],
    };
    let p_coeff = match spec.variable {
        SweepVariable::Power => Some(power_coefficient(cfg, spec, &base.device)?),
        _ => None,
    };
    let mut points = Vec::new();
    for &gain in &gains {
        for value in spec.values() {
            let mut p = base;
            let filter_for = |p: &OperatingPoint, gain: f64| cfg.filter_at(&p.device, &p.probe, gain);
            match spec.variable {
                SweepVariable::Phase => {
                    p.filter = FeedbackFilter::new(gain, deg_to_rad(value))?.with_shape(cfg.shape());
                }
                SweepVariable::Gain => {
                    p.filter = filter_for(&p, hz_to_rad(value))?;
                }
                SweepVariable::Detuning => {
                    p.probe = ProbeTone::new(hz_to_rad(value), p.probe.coupling)?;
                    p.filter = filter_for(&p, gain)?;
                }
                SweepVariable::Power => {
                    let g = detuning_transfer(&p.device, g_rsb(&p.device, p_coeff.unwrap(), value), p.probe.detuning);
                    p.probe = ProbeTone::new(p.probe.detuning, g)?;
                    p.filter = filter_for(&p, gain)?;
                }
                SweepVariable::FeedbackDetuning => {
                    let mut chain = cfg
                        .chain()
                        .ok_or_else(|| Error::Config("feedback_detuning sweeps need [feedback.chain]".into()))?;
                    chain.detuning_f = hz_to_rad(value);
                    p.filter = feedback_chain_reduce(&p.device, &chain)?.filter().with_shape(cfg.shape());
                }
            }
            if let Some(profile) = &spec.bath_profile {
                p.noise.bath_occupation = interpolate_profile(profile, rad_to_hz(p.filter.gain));
            }
            points.push((value, p));
        }
    }
    Ok(points)
}

fn power_coefficient(cfg: &Config, spec: &SweepSpec, device: &OpmDevice) -> Result<f64> {
    if let Some(p) = spec.p_coeff_hz_per_w {
        return Ok(hz_to_rad(p));
    }
    let c = cfg
        .calibration
        .as_ref()
        .filter(|c| !c.powers_w.is_empty())
        .ok_or_else(|| Error::Config("power sweeps need sweep.p_coeff_hz_per_w or calibration.powers_w".into()))?;
    let rates: Vec<f64> = c.gamma_opt_hz.iter().map(|g| hz_to_rad(*g)).collect();
    Ok(calibrate_power(device, &c.powers_w, &rates)?.p_coeff)
}

pub fn cmd_sweep(ctx: &RunContext) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::Config("sweep needs a [sweep] table".into()))?;
    let points = sweep_points(cfg, spec)?;
    let fit_halfwidth = cfg.spectrum.as_ref().map(|s| s.fit_halfwidth_linewidths).unwrap_or(10.0);
    let settings = cfg.grid();
    let results: Vec<PointResult> =
        points.par_iter().map(|(_, p)| evaluate(p, &settings, fit_halfwidth).map(|r| r.0)).collect::<Result<_>>()?;
    let name = variable_name(spec.variable);
    let mut table = Table::new(SUMMARY_COLUMNS);
    let mut unstable = 0;
    for ((value, p), r) in points.iter().zip(&results) {
        unstable += usize::from(!r.stable);
        table.push(summary_row(name, *value, p, r));
    }
    if unstable > 0 {
        warn!("{unstable} of {} sweep points are unstable; their occupations are NaN", results.len());
    }
    table.metadata.push(("value_unit".into(), spec.variable.column().into()));
    ctx.write_table("sweep.csv", "sweep", table)
}

fn variable_name(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::Phase => "phase",
        SweepVariable::Gain => "gain",
        SweepVariable::Detuning => "detuning",
        SweepVariable::Power => "power",
        SweepVariable::FeedbackDetuning => "feedback_detuning",
    }
}

/// Occupation budget at the configured point from the numerical solver and,
/// for a probe on cavity resonance, from the closed forms.
pub fn cmd_occupation(ctx: &RunContext) -> Result<PathBuf> {
    let p = ctx.base_point()?;
    let (r, _) = evaluate(&p, &ctx.config.grid(), 10.0)?;
    if !r.stable {
        return Err(Error::Unstable { gamma_eff: r.gamma_eff });
    }
    let mut table = Table::new(["source", "n_m", "n_thermal", "n_backaction", "n_feedback", "gamma_eff_hz", "gain_hz"]);
    let f = |v: f64| fmt_f64(v);
    table.push(vec![
        "numeric".into(),
        f(r.n_m),
        f(r.n_thermal),
        f(r.n_backaction),
        f(r.n_feedback),
        f(rad_to_hz(r.gamma_eff)),
        f(rad_to_hz(p.filter.gain)),
    ]);
    if p.probe.detuning == 0.0 {
        let a = occupation_resonant(&p.device, p.probe.coupling, &p.filter, &p.noise)?;
        let ge = effective_params_resonant(&p.device, p.probe.coupling, &p.filter).gamma_eff;
        table.push(vec![
            "analytic".into(),
            f(a.n_m),
            f(a.n_t),
            f(a.n_qba),
            f(a.n_fb),
            f(rad_to_hz(ge)),
            f(rad_to_hz(p.filter.gain)),
        ]);
        let opt = optimal_operating_point(&p.device, &p.noise, p.probe.coupling)?;
        table.push(vec![
            "analytic-optimum".into(),
            f(opt.n_m_min),
            f(f64::NAN),
            f(f64::NAN),
            f(f64::NAN),
            f(f64::NAN),
            f(rad_to_hz(opt.gain)),
        ]);
    }
    ctx.write_table("occupation.csv", "occupation", table)
}

/// Closed-loop damping over a phase × gain grid.
pub fn cmd_stability_map(ctx: &RunContext) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let m = cfg.stability_map.ok_or_else(|| Error::Config("stability-map needs a [stability_map] table".into()))?;
    if m.phase_steps < 2 || m.gain_steps < 2 {
        return Err(Error::Config("stability_map steps must be at least 2".into()));
    }
    let base = ctx.base_point()?;
    let lin = |a: f64, b: f64, n: usize, k: usize| a + (b - a) * k as f64 / (n - 1) as f64;
    let cells: Vec<(f64, f64)> = (0..m.gain_steps)
        .flat_map(|j| {
            (0..m.phase_steps).map(move |i| {
                (lin(m.phase_start_deg, m.phase_stop_deg, m.phase_steps, i), lin(m.gain_start_hz, m.gain_stop_hz, m.gain_steps, j))
            })
        })
        .collect();
    let shape = cfg.shape();
    let reports: Vec<_> = cells
        .par_iter()
        .map(|&(ph, g)| {
            let f = FeedbackFilter::new(hz_to_rad(g), deg_to_rad(ph))?.with_shape(shape);
            stability(&base.device, &base.probe, &f)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(["phase_deg", "gain_hz", "omega_eff_hz", "gamma_eff_hz", "stable"]);
    for ((ph, g), s) in cells.iter().zip(&reports) {
        table.push(vec![
            fmt_f64(*ph),
            fmt_f64(*g),
            fmt_f64(rad_to_hz(s.omega_eff)),
            fmt_f64(rad_to_hz(s.gamma_eff)),
            s.stable.to_string(),
        ]);
    }
    ctx.write_table("stability_map.csv", "stability-map", table)
}

/// Power, gain and bath-occupation calibrations from the `[calibration]`
/// data, as `quantity,value,error,unit` rows.
pub fn cmd_calibrate(ctx: &RunContext) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let c = cfg.calibration.as_ref().ok_or_else(|| Error::Config("calibrate needs a [calibration] table".into()))?;
    let base = ctx.base_point()?;
    let d = base.device;
    let mut table = Table::new(["quantity", "value", "error", "unit"]);
    let mut row = |q: &str, v: f64, e: f64, u: &str| table.push(vec![q.into(), fmt_f64(v), fmt_f64(e), u.into()]);
    let mut any = false;
    if !c.powers_w.is_empty() {
        let rates: Vec<f64> = c.gamma_opt_hz.iter().map(|g| hz_to_rad(*g)).collect();
        let pc = calibrate_power(&d, &c.powers_w, &rates)?;
        row("p_coeff", rad_to_hz(pc.p_coeff), rad_to_hz(pc.p_coeff_err), "Hz/W");
        for (p, g) in pc.powers.iter().zip(&pc.g_rsb) {
            row(&format!("g_rsb@{}W", fmt_f64(*p)), rad_to_hz(*g), f64::NAN, "Hz");
        }
        any = true;
    }
    if !c.gains.is_empty() {
        let widths: Vec<f64> = c.linewidths_hz.iter().map(|g| hz_to_rad(*g)).collect();
        let gc = calibrate_gain(&d, base.probe.coupling, c.regime, &c.gains, &widths)?;
        row("l_coeff", rad_to_hz(gc.l_coeff), rad_to_hz(gc.l_coeff_err), "Hz/gain");
        row("critical_electronic_gain", gc.critical_electronic_gain(&d), f64::NAN, "gain");
        any = true;
    }
    if let Some(path) = &c.measured_spectrum {
        let file = File::open(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
        let (measured, _) = read_spectrum_csv(BufReader::new(file))?;
        let opts = BathFitOptions { max_occupation: c.max_bath_occupation, frequency_offset: c.frequency_offset_hz.map(hz_to_rad) };
        let fit = fit_bath_occupation(&measured, &d, &base.probe, &base.filter, &base.noise, &opts)?;
        row("bath_occupation", fit.bath_occupation, fit.bath_occupation_err, "quanta");
        row("frequency_offset", rad_to_hz(fit.frequency_offset), f64::NAN, "Hz");
        row("rms_residual", fit.rms_residual, f64::NAN, "quanta");
        any = true;
    }
    if !any {
        return Err(Error::Config("[calibration] holds no data: set powers_w, gains or measured_spectrum".into()));
    }
    ctx.write_table("calibration.csv", "calibrate", table)
}

/// Outcome of `oracle-compare`; the table is written either way.
pub struct OracleReport {
    pub path: PathBuf,
    pub validation: CrossValidation,
}

/// Simulation settings for an oracle run of the configured point.
pub fn oracle_sim_config(ctx: &RunContext, o: &OracleConfig) -> Result<(OperatingPoint, SimConfig)> {
    let mut p = ctx.base_point()?;
    if p.filter.shape == FilterShape::LinearPhase {
        p.filter = p.filter.with_shape(FilterShape::Delay { extra_periods: 0 });
    }
    let pole = find_mechanical_pole(&p.device, &p.probe, &p.filter)?;
    if !(pole.gamma_eff > 0.0) {
        return Err(Error::Unstable { gamma_eff: pole.gamma_eff });
    }
    let seed = ctx.seed.unwrap_or(o.seed);
    let mut sim = SimConfig::for_linewidth(&p.device, &p.probe, pole.gamma_eff, o.gamma_t, seed);
    if let Some(dt) = o.dt_s {
        sim.stride = ((sim.dt * sim.stride as f64) / dt).round().max(1.0) as usize;
        sim.dt = dt;
    }
    sim.thermal_noise_scale = o.thermal_noise_scale;
    Ok((p, sim))
}

pub fn cmd_oracle_compare(ctx: &RunContext) -> Result<OracleReport> {
    let o = ctx.config.oracle.unwrap_or_default();
    let (p, sim) = oracle_sim_config(ctx, &o)?;
    info!("oracle run: {} steps of {:.3e} s", sim.steps(), sim.dt);
    let v = cross_validate(&p.device, &p.probe, &p.filter, &p.noise, &sim, o.tolerance)?;
    let mut table = Table::new(["observable", "linsolve", "tdoracle", "tdoracle_err", "relative_deviation", "tolerance", "pass"]);
    for r in &v.rows {
        table.push(vec![
            r.observable.clone(),
            fmt_f64(r.linsolve),
            fmt_f64(r.tdoracle),
            fmt_f64(r.tdoracle_err),
            fmt_f64(r.relative_deviation()),
            fmt_f64(r.tolerance),
            r.pass.to_string(),
        ]);
    }
    table.metadata.push(("sim_steps".into(), v.sim_steps.to_string()));
    table.metadata.push(("delay_taps".into(), v.delay_taps.to_string()));
    table.metadata.push(("oracle_seed".into(), sim.seed.to_string()));
    let path = ctx.write_table("oracle_compare.csv", "oracle-compare", table)?;
    if o.dump_series {
        let out = simulate(&p.device, &p.probe, &p.filter, &p.noise, &sim)?;
        let mut w = ctx.create("timeseries.csv")?;
        out.write_csv(&mut w, &ctx.config.to_toml())?;
        w.flush()?;
    }
    Ok(OracleReport { path, validation: v })
}
