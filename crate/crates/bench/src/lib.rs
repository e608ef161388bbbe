//! Operating points shared by the benchmarks.

use optofb_core::analytic::optimal_phase;
use optofb_core::units::hz_to_rad;
use optofb_core::{reference_device, FeedbackFilter, NoiseBudget, OpmDevice, ProbeTone};

pub struct OperatingPoint {
    pub device: OpmDevice,
    pub probe: ProbeTone,
    pub filter: FeedbackFilter,
    pub noise: NoiseBudget,
}

/// Reference device under resonant probing at the given feedback gain, Hz.
pub fn resonant(gain_hz: f64) -> OperatingPoint {
    let device = reference_device();
    OperatingPoint {
        probe: ProbeTone::resonant(hz_to_rad(427e3)).unwrap(),
        filter: FeedbackFilter::new(hz_to_rad(gain_hz), optimal_phase(device.kappa, device.omega_m)).unwrap(),
        noise: NoiseBudget::new(205.0, 13.0).unwrap(),
        device,
    }
}

/// Scaled device with `ω_m = 1` that the time-domain oracle integrates quickly.
pub fn scaled() -> OperatingPoint {
    let device = OpmDevice::new(1.0, 0.01, 1.0, 100.0, 1e-4).unwrap();
    let g = 0.05;
    let gain = 0.05 * device.sideband_norm() / (4.0 * g);
    OperatingPoint {
        probe: ProbeTone::resonant(g).unwrap(),
        filter: FeedbackFilter::new(gain, optimal_phase(device.kappa, device.omega_m)).unwrap(),
        noise: NoiseBudget::new(20.0, 2.0).unwrap(),
        device,
    }
}
