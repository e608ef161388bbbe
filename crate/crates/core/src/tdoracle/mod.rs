//! Seeded time-domain simulation of the closed loop, used as an independent
//! check of [`crate::linsolve`].
//!
//! The linear dynamics are discretized exactly for inputs held constant over
//! each step (zero-order hold): `s_{n+1} = Φ s_n + Ψ u_n`, with `Φ` and `Ψ`
//! taken from the exponential of an augmented matrix. White inputs of
//! symmetrized density `S` become independent samples of variance `S/dt`.
//! The feedback filter is a delay line of whole steps acting on the
//! step-averaged detected quadrature.

mod compare;
mod periodogram;
mod sim;

pub use compare::{cross_validate, required_gamma_t, Comparison, CrossValidation};
pub use periodogram::{periodogram, periodogram_complex};
pub use sim::{simulate, SimConfig, SimOutput};
