//! Lorentzian peak fits, the linear calibrations that map generator power to
//! coupling and electronic gain to filter gain, and the one-parameter fit of
//! the bath occupation to a measured output spectrum.

mod bath;
mod calibration;
mod lorentzian;

pub use bath::{fit_bath_occupation, BathFit, BathFitOptions};
pub use calibration::{
    calibrate_gain, calibrate_power, detuning_transfer, g_rsb, CalibrationModel, GainCalibration,
    PowerCalibration, ProbeRegime,
};
pub use lorentzian::{fit_lorentzian, fit_lorentzian_points, lorentzian, LorentzianFit, DISTORTION_LIMIT};
