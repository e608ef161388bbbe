//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N PASS|FAIL` line to stderr before asserting.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use optofb_core::analytic::{
    badcavity_displacement_spectrum, critical_gain_blue, effective_params_resonant, feedback_chain_reduce, gamma_fb,
    gamma_fb_blue, gamma_opt, occupation_resonant, optimal_operating_point, optimal_phase, optimal_phase_blue,
    squashed_spectrum_badcavity,
};
use optofb_core::fitting::{calibrate_gain, calibrate_power, ProbeRegime};
use optofb_core::linsolve::{
    default_grid, displacement_spectrum, find_mechanical_pole, find_stability_boundary, momentum_spectrum,
    occupation_numeric, optimal_phase_numeric, output_spectrum, solve_closed_loop, stability,
};
use optofb_core::tdoracle::{cross_validate, CrossValidation};
use optofb_core::units::{deg_to_rad, hz_to_rad, rad_to_deg, rad_to_hz};
use optofb_core::{
    reference_device, FeedbackChain, FeedbackFilter, FilterShape, GridSettings, NoiseBudget, OpmDevice, ProbeTone,
    SimConfig,
};

// written past the test harness capture so every line shows in a plain run
fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n} {}: {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn numeric_occupation(d: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, noise: &NoiseBudget) -> f64 {
    let grid = default_grid(d, probe, filter, &GridSettings::default()).unwrap();
    let t = solve_closed_loop(d, probe, filter, &grid).unwrap();
    occupation_numeric(&displacement_spectrum(&t, noise).unwrap(), &momentum_spectrum(&t, noise).unwrap()).unwrap()
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn budget_minimum(d: &OpmDevice, g: f64, noise: &NoiseBudget) -> (f64, f64) {
    let phi = optimal_phase(d.kappa, d.omega_m);
    let n_of = |a0: f64| occupation_resonant(d, g, &FeedbackFilter::new(a0, phi).unwrap(), noise).unwrap().n_m;
    let a_best = golden_min(n_of, hz_to_rad(1e3), hz_to_rad(2e6), hz_to_rad(1e-3));
    (n_of(a_best), a_best)
}

#[test]
fn criterion_1_optimum_cooling() {
    let d = reference_device();
    let g = hz_to_rad(427e3);
    // the optimum neglects the thermal contribution
    let noise = NoiseBudget::new(0.0, 13.0).unwrap();
    let (n_min, a_best) = budget_minimum(&d, g, &noise);
    let closed = optimal_operating_point(&d, &noise, g).unwrap();
    // same device with γ → 0, where γ_eff = γ_fb holds exactly
    let (n_limit, _) = budget_minimum(&OpmDevice { gamma: 1e-4 * d.gamma, ..d }, g, &noise);
    let pass = (n_min - 2.098).abs() <= 0.01;
    report(
        1,
        "optimum cooling",
        pass,
        &format!(
            "min n_m = {n_min:.4} at A0/2pi = {:.1} kHz; closed form {:.4} at {:.1} kHz; min with gamma/1e4 {n_limit:.4}; target 2.098 +- 0.01",
            rad_to_hz(a_best) / 1e3,
            closed.n_m_min,
            rad_to_hz(closed.gain) / 1e3
        ),
    );
    assert!(pass, "n_m,min = {n_min}");
}

#[test]
fn criterion_2_reported_endpoint() {
    let d = reference_device();
    let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
    let noise = NoiseBudget::new(370.0, 13.0).unwrap();
    let a0 = hz_to_rad(206e3);
    let best = FeedbackFilter::new(a0, optimal_phase(d.kappa, d.omega_m)).unwrap();
    let n = numeric_occupation(&d, &probe, &best, &noise);
    let at_143 = numeric_occupation(&d, &probe, &best.with_phase(deg_to_rad(143.0)), &noise);
    let pass = (n - 2.9).abs() <= 0.3;
    report(
        2,
        "endpoint occupation",
        pass,
        &format!("n_m = {n:.3} at the optimal phase ({at_143:.3} at 143 deg); target 2.9 +- 0.3"),
    );
    assert!(pass, "n_m = {n}");
}

#[test]
fn criterion_3_optimal_phase() {
    let d = reference_device();
    let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
    let phi_m = optimal_phase(d.kappa, d.omega_m);
    let a0 = hz_to_rad(28e3);
    let gamma_at = |deg: f64| {
        find_mechanical_pole(&d, &probe, &FeedbackFilter::new(a0, deg_to_rad(deg)).unwrap()).unwrap().gamma_eff
    };
    let (mut best_deg, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..720 {
        let deg = 0.5 * k as f64;
        let g = gamma_at(deg);
        if g > best {
            (best_deg, best) = (deg, g);
        }
    }
    let refined = rad_to_deg(optimal_phase_numeric(&d, &probe, a0, 72).unwrap());
    let scan_ok = (best_deg - rad_to_deg(phi_m)).abs() <= 0.5;

    let mut worst_shift: f64 = 0.0;
    for a_hz in [10e3, 28e3, 76e3, 125e3, 206e3] {
        let f = FeedbackFilter::new(hz_to_rad(a_hz), phi_m).unwrap();
        let p = find_mechanical_pole(&d, &probe, &f).unwrap();
        let g_fb = gamma_fb(probe.coupling, f.gain, d.kappa, d.omega_m);
        worst_shift = worst_shift.max((p.omega_eff - d.omega_m).abs() / g_fb);
    }
    let pass = scan_ok && worst_shift < 0.01;
    report(
        3,
        "optimal phase",
        pass,
        &format!(
            "scan argmax {best_deg:.1} deg, refined {refined:.4} deg, closed form {:.4} deg; worst |w_eff - w_m|/gamma_fb = {worst_shift:.2e}",
            rad_to_deg(phi_m)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_blue_sideband_stabilization() {
    let d = reference_device();
    let g = hz_to_rad(104e3);
    let probe = ProbeTone::blue_sideband(&d, g).unwrap();
    let phase = optimal_phase_blue(&d);
    let boundary = find_stability_boundary(&d, &probe, phase, (0.0, hz_to_rad(378e3))).unwrap();
    let inversion = critical_gain_blue(&d, g);
    let boundary_err = (boundary / inversion - 1.0).abs();
    let f = |a: f64| FeedbackFilter::new(a, phase).unwrap();
    let below = stability(&d, &probe, &f(0.99 * boundary)).unwrap();
    let above = stability(&d, &probe, &f(1.01 * boundary)).unwrap();
    let open = stability(&d, &probe, &FeedbackFilter::off()).unwrap();
    let top = stability(&d, &probe, &f(hz_to_rad(378e3))).unwrap();
    let g_top = rad_to_hz(top.gamma_eff);
    let pass = !open.stable
        && !below.stable
        && above.stable
        && boundary_err < 1e-3
        && (g_top / 5e3 - 1.0).abs() <= 0.3;
    report(
        4,
        "blue-sideband stabilization",
        pass,
        &format!(
            "boundary A0/2pi = {:.3} kHz vs inversion {:.3} kHz (rel {boundary_err:.1e}); open-loop gamma_eff/2pi = {:.1} Hz; gamma_eff/2pi at 378 kHz = {g_top:.1} Hz",
            rad_to_hz(boundary) / 1e3,
            rad_to_hz(inversion) / 1e3,
            rad_to_hz(open.gamma_eff)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_squashing() {
    // κ = 100 ω_m; γ small enough for the high-Q closed form
    let d = OpmDevice::new(1.0, 1e-5, 100.0, 1e3, 1e-5).unwrap();
    let g = 0.5;
    let probe = ProbeTone::resonant(g).unwrap();
    let noise = NoiseBudget::new(20.0, 3.0).unwrap();
    let gain = 100.0 * d.gamma * d.sideband_norm() / (4.0 * g);
    let filter = FeedbackFilter::new(gain, FRAC_PI_2).unwrap();
    let grid = default_grid(&d, &probe, &filter, &GridSettings::default()).unwrap();
    let t = solve_closed_loop(&d, &probe, &filter, &grid).unwrap();
    let s = output_spectrum(&t, &noise).unwrap();
    let eff = effective_params_resonant(&d, g, &filter);
    let sx = |w: f64| badcavity_displacement_spectrum(w, &d, g, gain, &noise, &eff);
    let closed = |w: f64| squashed_spectrum_badcavity(w, &d, g, gain, &noise, &eff, &sx);

    let mut worst: f64 = 0.0;
    let mut weights = [0.0; 2];
    for (i, c) in [-eff.omega_eff, eff.omega_eff].into_iter().enumerate() {
        let (w, v) = s.window(c - 10.0 * eff.gamma_eff, c + 10.0 * eff.gamma_eff);
        for (w, v) in w.iter().zip(&v) {
            worst = worst.max((v / closed(*w).total - 1.0).abs());
        }
        let bg = noise.amplifier_noise + noise.cavity_input_density();
        let excess: Vec<f64> = v.iter().map(|v| v - bg).collect();
        weights[i] = optofb_core::linsolve::trapezoid(&w, &excess);
    }
    // the two squashing Lorentzians, read off at mirrored offsets
    let mut asym: f64 = 0.0;
    for k in -50..=50 {
        let delta = 0.1 * k as f64 * eff.gamma_eff;
        let lo = closed(-eff.omega_eff + delta).s_minus;
        let up = closed(eff.omega_eff + delta).s_plus;
        asym = asym.max((lo - up).abs() / lo.abs());
    }
    let weights_differ = (weights[0] - weights[1]).abs() > 1e-3 * weights[0].abs();
    let pass = worst < 0.01 && asym < 1e-12 && weights_differ;
    report(
        5,
        "bad-cavity squashing",
        pass,
        &format!(
            "worst pointwise deviation {worst:.2e}; dip asymmetry {asym:.1e}; sideband weights lower {:.4e}, upper {:.4e}",
            weights[0], weights[1]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_feedback_chain() {
    let d = reference_device();
    let chain = FeedbackChain {
        detuning_f: hz_to_rad(-20e6),
        carrier_amplitude: 1.0,
        electronic_gain: 1.0,
        loop_delay: 0.0,
        extra_line_phase: (0.0, 0.0),
    };
    let r = feedback_chain_reduce(&d, &chain).unwrap();
    let rel = rad_to_deg(r.relative_phase());
    let ratio = r.amp_upper / r.amp_lower;
    let pass = (rel + 176.0).abs() <= 1.0 && ratio > 2.0;
    report(6, "feedback chain", pass, &format!("phase difference {rel:.3} deg; amplitude ratio {ratio:.4}"));
    assert!(pass);
}

struct Canonical {
    name: &'static str,
    device: OpmDevice,
    probe: ProbeTone,
    filter: FeedbackFilter,
}

fn canonical() -> Vec<Canonical> {
    let dev = |kappa: f64| OpmDevice::new(1.0, 0.01, kappa, 100.0, 1e-4).unwrap();
    let resonant = |kappa: f64, g: f64, gamma_fb: f64| {
        let d = dev(kappa);
        let a0 = gamma_fb * d.sideband_norm() / (4.0 * g);
        (d, ProbeTone::resonant(g).unwrap(), FeedbackFilter::new(a0, optimal_phase(d.kappa, d.omega_m)).unwrap())
    };
    let mut out = Vec::new();
    for (name, kappa, g, gamma_fb) in
        [("open loop", 1.0, 0.01, 0.0), ("weak feedback", 1.0, 0.05, 0.05), ("strong feedback", 1.0, 0.05, 0.2), ("bad cavity", 20.0, 0.2, 0.05)]
    {
        let (device, probe, filter) = resonant(kappa, g, gamma_fb);
        out.push(Canonical { name, device, probe, filter });
    }
    let d = dev(0.5);
    out.push(Canonical {
        name: "blue sideband",
        device: d,
        probe: ProbeTone::blue_sideband(&d, 0.04).unwrap(),
        filter: FeedbackFilter::new(0.3, optimal_phase_blue(&d)).unwrap(),
    });
    out
}

fn validate(c: &Canonical, seed: u64) -> CrossValidation {
    let noise = NoiseBudget::new(20.0, 2.0).unwrap();
    let f = c.filter.with_shape(FilterShape::Delay { extra_periods: 0 });
    let pole = find_mechanical_pole(&c.device, &c.probe, &f).unwrap();
    let cfg = SimConfig::for_linewidth(&c.device, &c.probe, pole.gamma_eff, 1e5, seed);
    cross_validate(&c.device, &c.probe, &c.filter, &noise, &cfg, 0.05).unwrap()
}

#[test]
fn criterion_7_cross_validation() {
    let mut details = Vec::new();
    let mut pass = true;
    let configs = canonical();
    for (k, c) in configs.iter().enumerate() {
        let v = validate(c, 100 + k as u64);
        let dev = |name: &str| v.rows.iter().find(|r| r.observable == name).unwrap();
        let (n, w) = (dev("occupation"), dev("linewidth"));
        pass &= n.pass && w.pass;
        details.push(format!(
            "{}: n {:+.2}%, width {:+.2}%",
            c.name,
            100.0 * n.relative_deviation(),
            100.0 * w.relative_deviation()
        ));
    }
    let again = validate(&configs[2], 102);
    let first = validate(&configs[2], 102);
    let deterministic = again.rows == first.rows;
    pass &= deterministic;
    details.push(format!("rerun identical: {deterministic}"));
    report(7, "time/frequency cross-validation", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_8_normalization() {
    let d = reference_device();
    let probe = ProbeTone::resonant(0.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for n_t in [0.0, 1.0, 205.0, 5000.0] {
        let noise = NoiseBudget::new(n_t, 13.0).unwrap();
        let n = numeric_occupation(&d, &probe, &FeedbackFilter::off(), &noise);
        let rel = (n + 0.5) / (n_t + 0.5) - 1.0;
        worst = worst.max(rel.abs());
        details.push(format!("{n_t}: {rel:+.2e}"));
    }
    let pass = worst < 5e-3;
    report(8, "normalization sum rule", pass, &format!("relative error by bath occupation {}", details.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_9_calibration_round_trips() {
    let d = reference_device();
    // power: red-sideband optical damping from the solver, G = g₀√(cP)
    let photons_per_watt: f64 = 1.5e9;
    let powers = [2e-5, 5e-5, 1e-4, 2e-4, 4e-4];
    let rates: Vec<f64> = powers
        .iter()
        .map(|p| {
            let probe = ProbeTone::new(-d.omega_m, d.g0 * (photons_per_watt * p).sqrt()).unwrap();
            find_mechanical_pole(&d, &probe, &FeedbackFilter::off()).unwrap().gamma_eff - d.gamma
        })
        .collect();
    let pc = calibrate_power(&d, &powers, &rates).unwrap();
    let p_true = gamma_opt(&d, d.g0 * photons_per_watt.sqrt());
    let p_err = (pc.p_coeff / p_true - 1.0).abs();

    // gain, resonant probe: A₀ = k·g and linewidths from the solver
    let k = hz_to_rad(10e3);
    let g_res = hz_to_rad(427e3);
    let probe = ProbeTone::resonant(g_res).unwrap();
    let phi = optimal_phase(d.kappa, d.omega_m);
    let gains = [0.5, 1.0, 2.0, 3.0, 5.0];
    let widths: Vec<f64> = gains
        .iter()
        .map(|x| find_mechanical_pole(&d, &probe, &FeedbackFilter::new(k * x, phi).unwrap()).unwrap().gamma_eff)
        .collect();
    let gc = calibrate_gain(&d, g_res, ProbeRegime::Resonant, &gains, &widths).unwrap();
    let l_true = gamma_fb(g_res, k, d.kappa, d.omega_m);
    let l_err = (gc.l_coeff / l_true - 1.0).abs();

    // gain, blue sideband: the calibrated critical gain against the boundary
    let g_blue = hz_to_rad(104e3);
    let blue = ProbeTone::blue_sideband(&d, g_blue).unwrap();
    let phi_b = optimal_phase_blue(&d);
    let k_b = hz_to_rad(100e3);
    let gains_b = [2.0, 2.5, 3.0, 3.5, 4.0];
    let widths_b: Vec<f64> = gains_b
        .iter()
        .map(|x| find_mechanical_pole(&d, &blue, &FeedbackFilter::new(k_b * x, phi_b).unwrap()).unwrap().gamma_eff)
        .collect();
    let gb = calibrate_gain(&d, g_blue, ProbeRegime::BlueSideband, &gains_b, &widths_b).unwrap();
    let a_crit = k_b * gb.critical_electronic_gain(&d);
    let boundary = find_stability_boundary(&d, &blue, phi_b, (0.0, hz_to_rad(400e3))).unwrap();
    let b_err = (a_crit / boundary - 1.0).abs();
    let l_blue_err = (gb.l_coeff / gamma_fb_blue(&d, g_blue, k_b) - 1.0).abs();

    let pass = p_err < 5e-3 && l_err < 5e-3 && b_err < 0.01;
    report(
        9,
        "calibration round trips",
        pass,
        &format!(
            "P rel err {p_err:.1e}; L rel err {l_err:.1e}; blue L rel err {l_blue_err:.1e}; critical A0/2pi {:.2} kHz vs boundary {:.2} kHz (rel {b_err:.1e})",
            rad_to_hz(a_crit) / 1e3,
            rad_to_hz(boundary) / 1e3
        ),
    );
    assert!(pass);
}
