//! Linear quantum-noise model of measurement-based feedback cooling of a
//! mechanical oscillator read out by a microwave optomechanical cavity.
//!
//! * [`model`]: device, probe, filter and noise parameters.
//! * [`analytic`]: closed-form rates, occupations and spectra.
//! * [`linsolve`]: exact frequency-domain solution of the closed loop.
//! * [`tdoracle`]: seeded time-domain simulation of the same loop.
//! * [`fitting`]: calibration and spectrum fits.
//! * [`io`]: the spectrum CSV format.
//!
//! Frequencies are angular (rad/s) throughout; [`units`] converts.

pub mod analytic;
pub mod error;
pub mod fitting;
pub mod io;
pub mod linsolve;
pub mod model;
pub mod tdoracle;
pub mod units;

pub use error::{Error, Result};
pub use fitting::{BathFit, CalibrationModel, LorentzianFit};
pub use linsolve::{ClosedLoopTransfer, FrequencyGrid, GridSettings, MechanicalPole, Spectrum, SpectrumKind};
pub use model::{
    effective_coupling, photon_number_for, reference_device, ClassicalOscillator, FeedbackChain, FeedbackFilter,
    FilterShape, NoiseBudget, OpmDevice, ProbeTone,
};
pub use tdoracle::{SimConfig, SimOutput};
