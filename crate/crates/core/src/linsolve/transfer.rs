use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::{FrequencyGrid, GridSettings};
use super::stability::{find_mechanical_pole, MechanicalPole};
use crate::error::{Error, Result};
use crate::model::{FeedbackFilter, OpmDevice, ProbeTone};

/// Noise inputs driving the loop, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    CavityX = 0,
    CavityY = 1,
    Thermal = 2,
    AmplifierY = 3,
    AmplifierX = 4,
}

pub const INPUTS: [Input; 5] = [Input::CavityX, Input::CavityY, Input::Thermal, Input::AmplifierY, Input::AmplifierX];

const SINGULAR_RATIO: f64 = 1e-15;

type Coeffs = SMatrix<Complex64, 4, 5>;

/// Coefficients of every internal and detected variable against the inputs
/// at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPoint {
    pub omega: f64,
    /// Rows `x_c, y_c, x, p`; columns follow [`Input`].
    pub state: Coeffs,
    /// Rows `x_det, y_det`; columns follow [`Input`].
    pub output: SMatrix<Complex64, 2, 5>,
}

impl TransferPoint {
    #[inline]
    fn s(&self, row: usize, input: Input) -> Complex64 {
        self.state[(row, input as usize)]
    }
    pub fn x_cx(&self) -> Complex64 {
        self.s(0, Input::CavityX)
    }
    pub fn y_cy(&self) -> Complex64 {
        self.s(1, Input::CavityY)
    }
    pub fn y_x(&self) -> Complex64 {
        self.s(1, Input::CavityX)
    }
    pub fn y_f(&self) -> Complex64 {
        self.s(1, Input::Thermal)
    }
    pub fn y_n(&self) -> Complex64 {
        self.s(1, Input::AmplifierY)
    }
    pub fn x_f(&self) -> Complex64 {
        self.s(2, Input::Thermal)
    }
    /// Measurement backaction onto the position.
    pub fn x_bax(&self) -> Complex64 {
        self.s(2, Input::CavityX)
    }
    /// Cavity vacuum re-injected through the loop.
    pub fn x_inj(&self) -> Complex64 {
        self.s(2, Input::CavityY)
    }
    /// Amplifier noise injected through the loop.
    pub fn x_n(&self) -> Complex64 {
        self.s(2, Input::AmplifierY)
    }
    pub fn p_f(&self) -> Complex64 {
        self.s(3, Input::Thermal)
    }
    pub fn p_bax(&self) -> Complex64 {
        self.s(3, Input::CavityX)
    }
    pub fn p_inj(&self) -> Complex64 {
        self.s(3, Input::CavityY)
    }
    pub fn p_n(&self) -> Complex64 {
        self.s(3, Input::AmplifierY)
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTransfer {
    pub device: OpmDevice,
    pub probe: ProbeTone,
    pub filter: FeedbackFilter,
    pub grid: FrequencyGrid,
    pub points: Vec<TransferPoint>,
    /// Mechanical pole of the closed loop, when the search converged.
    pub pole: Option<MechanicalPole>,
}

pub(crate) fn system(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, omega: Complex64) -> (Matrix4<Complex64>, Coeffs) {
    let i = Complex64::i();
    let c = |v: f64| Complex64::new(v, 0.0);
    let zero = c(0.0);
    let (k, wm, g, d, gc) = (device.kappa, device.omega_m, device.gamma, probe.detuning, probe.coupling);
    let cav = c(0.5 * k) - i * omega;
    let a = filter.response(omega, wm);
    let sk = k.sqrt();
    #[rustfmt::skip]
    let m = Matrix4::new(
        cav,        c(d),  zero,        zero,
        c(-d),      cav,   c(2.0 * gc), zero,
        zero,       zero,  -i * omega,  c(-wm),
        c(2.0 * gc), -a,   c(wm),       c(g) - i * omega,
    );
    #[rustfmt::skip]
    let b = Coeffs::from_row_slice(&[
        c(sk), zero,    zero,         zero,   zero,
        zero,  c(sk),   zero,         zero,   zero,
        zero,  zero,    zero,         zero,   zero,
        zero,  -a / sk, c(1.0 / wm),  a / sk, zero,
    ]);
    (m, b)
}

fn state_coefficients(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, omega: Complex64) -> Result<Coeffs> {
    let (m, b) = system(device, probe, filter, omega);
    let lu = m.lu();
    let sol = lu.solve(&b).ok_or(Error::Singular { omega: omega.re })?;
    if sol.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular { omega: omega.re });
    }
    Ok(sol)
}

/// Solve the loop at a single real frequency.
pub fn solve_at(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, omega: f64) -> Result<TransferPoint> {
    let w = Complex64::new(omega, 0.0);
    let (m, _) = system(device, probe, filter, w);
    // a pole on the real axis leaves the determinant at rounding level
    let scale: f64 = m.row_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).product();
    if !(m.determinant().norm() > SINGULAR_RATIO * scale) {
        return Err(Error::Singular { omega });
    }
    let state = state_coefficients(device, probe, filter, w)?;
    let sk = device.kappa.sqrt();
    let mut output = SMatrix::<Complex64, 2, 5>::zeros();
    for col in 0..5 {
        output[(0, col)] = state[(0, col)] * sk;
        output[(1, col)] = state[(1, col)] * sk;
    }
    let one = Complex64::new(1.0, 0.0);
    output[(0, Input::CavityX as usize)] -= one;
    output[(1, Input::CavityY as usize)] -= one;
    output[(0, Input::AmplifierX as usize)] += one;
    output[(1, Input::AmplifierY as usize)] += one;
    Ok(TransferPoint { omega, state, output })
}

pub fn solve_closed_loop(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, grid: &FrequencyGrid) -> Result<ClosedLoopTransfer> {
    let points = grid
        .points()
        .par_iter()
        .map(|&w| solve_at(device, probe, filter, w))
        .collect::<Result<Vec<_>>>()?;
    let pole = find_mechanical_pole(device, probe, filter).ok();
    Ok(ClosedLoopTransfer { device: *device, probe: *probe, filter: *filter, grid: grid.clone(), points, pole })
}

/// Peak-resolving grid for a configuration, centred on its mechanical pole.
pub fn default_grid(device: &OpmDevice, probe: &ProbeTone, filter: &FeedbackFilter, settings: &GridSettings) -> Result<FrequencyGrid> {
    let pole = find_mechanical_pole(device, probe, filter)?;
    if !(pole.gamma_eff > 0.0) {
        return Err(Error::Unstable { gamma_eff: pole.gamma_eff });
    }
    let span_width = pole.gamma_eff.max(device.gamma);
    let halfspan = settings.background_halfspan.unwrap_or_else(|| {
        3.0 * device.omega_m.max(probe.detuning.abs()) + 2.0 * device.kappa
    });
    FrequencyGrid::around_peaks(&[-pole.omega_eff, pole.omega_eff], span_width, pole.gamma_eff, settings, halfspan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::optimal_phase;
    use crate::model::reference_device;
    use crate::units::hz_to_rad;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bare_chi(d: &OpmDevice, w: f64) -> Complex64 {
        Complex64::new(d.omega_m * d.omega_m - w * w, -w * d.gamma).inv()
    }

    #[test]
    fn decoupled_system() {
        let d = reference_device();
        let probe = ProbeTone::resonant(0.0).unwrap();
        for w in [0.5 * d.omega_m, d.omega_m, d.omega_m + 3.0 * d.gamma] {
            let t = solve_at(&d, &probe, &FeedbackFilter::off(), w).unwrap();
            let chi = bare_chi(&d, w);
            assert!((t.x_f() - chi).norm() < 1e-9 * chi.norm());
            assert_eq!(t.x_bax(), Complex64::new(0.0, 0.0));
            assert_eq!(t.x_inj(), Complex64::new(0.0, 0.0));
            assert_eq!(t.x_n(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn resonant_open_loop_matches_closed_forms() {
        let d = reference_device();
        let g = hz_to_rad(427e3);
        let probe = ProbeTone::resonant(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let w = d.omega_m + (rng.random::<f64>() - 0.5) * 200.0 * d.gamma;
            let t = solve_at(&d, &probe, &FeedbackFilter::off(), w).unwrap();
            let chi = bare_chi(&d, w);
            assert!((t.x_f() - chi).norm() <= 1e-9 * chi.norm());
            // backaction column: −4Gω_m√κ/(κ − 2iω) · χ
            let bax = -4.0 * g * d.omega_m * d.kappa.sqrt() / Complex64::new(d.kappa, -2.0 * w) * chi;
            assert!((t.x_bax() - bax).norm() <= 1e-9 * bax.norm(), "{} vs {}", t.x_bax(), bax);
            assert_eq!(t.x_inj(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn injection_columns_have_equal_weight() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        let f = FeedbackFilter::new(hz_to_rad(100e3), optimal_phase(d.kappa, d.omega_m)).unwrap();
        for k in -20..=20 {
            let w = d.omega_m + k as f64 * 10.0 * d.gamma;
            let t = solve_at(&d, &probe, &f, w).unwrap();
            // the cavity path only adds the all-pass factor (κχ_c − 1)
            let allpass = d.kappa * d.cavity_susceptibility(Complex64::new(w, 0.0)) - 1.0;
            assert!((t.x_inj() - allpass * t.x_n()).norm() <= 1e-9 * t.x_n().norm());
            assert!((t.x_inj().norm() / t.x_n().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_map_is_input_output_relation() {
        let d = reference_device();
        let probe = ProbeTone::resonant(hz_to_rad(427e3)).unwrap();
        let t = solve_at(&d, &probe, &FeedbackFilter::off(), d.omega_m).unwrap();
        let sk = d.kappa.sqrt();
        let y = t.output[(1, Input::CavityY as usize)];
        assert!((y - (sk * t.y_cy() - 1.0)).norm() < 1e-12);
        assert_eq!(t.output[(1, Input::AmplifierY as usize)], Complex64::new(1.0, 0.0));
        assert_eq!(t.output[(0, Input::AmplifierY as usize)], Complex64::new(0.0, 0.0));
    }
}
