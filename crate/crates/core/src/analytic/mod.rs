//! Closed-form results: classical cold-damping spectra, resonant-probing
//! effective parameters and occupation budget, blue-sideband rates, the
//! bad-cavity squashing spectrum, and the reduction of the feedback-tone
//! hardware chain to a filter gain and phase.
//!
//! These are fast evaluation paths and the reference for the numerical
//! solver in [`crate::linsolve`].

mod blue;
mod chain;
mod classical;
mod resonant;
mod squashing;

pub use blue::{
    blue_sideband_rates, critical_gain_blue, gamma_fb_blue, gamma_opt, optimal_phase_blue, BlueSidebandRates,
};
pub use chain::{feedback_chain_reduce, ChainReduction, VANISHING_FORCE_RATIO};
pub use classical::{classical_spectrum, classical_variance};
pub use resonant::{
    effective_params_resonant, gamma_fb, occupation_resonant, optimal_operating_point, optimal_phase,
    EffectiveParams, OccupationBreakdown, OperatingPoint,
};
pub use squashing::{
    badcavity_displacement_spectrum, squashed_spectrum_badcavity, squashing_term, SquashingParts,
};
