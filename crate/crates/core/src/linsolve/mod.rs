//! Frequency-domain solution of the closed feedback loop for arbitrary probe
//! detuning.
//!
//! At every frequency the four unknowns `(x_c, y_c, x, p)` solve
//!
//! ```text
//! (κ/2 − iω) x_c + Δ y_c                         = √κ x_in
//! −Δ x_c + (κ/2 − iω) y_c + 2G x                  = √κ y_in
//! −iω x − ω_m p                                   = 0
//! 2G x_c − A[ω] y_c + ω_m x + (γ − iω) p          = f_th/ω_m + (A[ω]/√κ)(y_add − y_in)
//! ```
//!
//! i.e. the feedback force is `(A[ω]/√κ)(y_out + y_add)` with
//! `y_out = √κ y_c − y_in`. The detected output quadratures add the
//! amplifier noise: `x_det = √κ x_c − x_in + x_add`, `y_det = y_out + y_add`.
//!
//! Fourier convention is `e^{-iωt}`: stable poles sit in the lower half plane
//! and the upper mechanical sideband of the output is at `ω > 0`.
//!
//! Spectral densities are symmetrized and two-sided in angular frequency, so
//! a variance is `∫ S(ω) dω/2π` over the whole real line. Input densities:
//! cavity quadratures `1/2 + n_c^T`, amplifier quadratures `n_add`, thermal
//! force `2γω_m²(n_m^T + 1/2)`.

mod grid;
mod spectrum;
mod stability;
mod transfer;

pub use grid::{FrequencyGrid, GridSettings};
pub use spectrum::{
    displacement_spectrum, momentum_spectrum, occupation_breakdown, occupation_numeric, output_quadrature_spectrum, output_spectrum,
    trapezoid, NumericBreakdown, Spectrum, SpectrumKind,
};
pub(crate) use spectrum::output_values;
pub use stability::{find_mechanical_pole, find_stability_boundary, optimal_phase_numeric, stability, MechanicalPole, StabilityReport};
pub use transfer::{default_grid, solve_at, solve_closed_loop, ClosedLoopTransfer, Input, TransferPoint, INPUTS};
