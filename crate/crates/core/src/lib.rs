//! Gradient flows of the KL divergence on the periodic interval `[-π, π)`.
//!
//! The crate simulates three flows towards a target `π ∝ e^{-V}`:
//!
//! | flow | PDE | integrator |
//! |------|-----|------------|
//! | Wasserstein (W) | `∂ρ = ∇·(ρ(∇log ρ + ∇V))` | explicit Euler on `log ρ` |
//! | Fisher-Rao (FR) | `∂ρ = -(log ρ + V - ⟨log ρ + V⟩_ρ) ρ` | mirror descent in log-space |
//! | WFR | sum of both | both updates combined |
//!
//! The FR flow also has a closed form, the geometric annealing path
//! `ρ_t ∝ ρ₀^{e^{-t}} π^{1-e^{-t}}`, which makes `KL(ρ_t‖π)` a function of the
//! cumulant generating function of `Y = log(ρ₀/π)` under `π`. The
//! [`cumulant`] module evaluates that function and its power series
//! `KL(ρ_t‖π) = (κ₂/2) e^{-2t} + O(e^{-3t})`; [`analysis`] compares it with
//! simulated traces.
//!
//! ```
//! use gradflow::{Grid, LogDensity, Potential, Builtin, CumulantTable, fr_exact, kl};
//!
//! let grid = Grid::new(2000).unwrap();
//! let pi = LogDensity::from_potential(&Potential::builtin(Builtin::V2), &grid).unwrap();
//! let rho0 = LogDensity::uniform(&grid);
//! let table = CumulantTable::build(&rho0, &pi, 8).unwrap();
//!
//! let rho_t = fr_exact(&rho0, &pi, 6.0).unwrap();
//! let lead = table.kappa(2) / 2.0 * (-12.0f64).exp();
//! assert!((kl(&rho_t, &pi).unwrap() / lead - 1.0).abs() < 0.02);
//! ```

pub mod analysis;
pub mod cumulant;
pub mod error;
pub mod flow;
pub mod grid;
pub mod measure;
pub mod potential;

#[cfg(test)]
mod testutil;

pub use analysis::{
    slope, slope_additivity_report, theory_residual, AdditivityReport, FlowTrace, ResidualReport,
    SlopeEntry, SlopeEstimate, TraceMeta, TraceRow,
};
pub use cumulant::CumulantTable;
pub use error::{Error, Result};
pub use flow::{annealing_path, fr_exact, run, FlowFailure, FlowKind, FlowState, RunConfig, TargetFields};
pub use grid::Grid;
pub use measure::{check_assumptions, chi2, kl, log_normalizer, renyi, AssumptionReport, LogDensity};
pub use potential::{Builtin, Potential, PotentialSpec, TrigKind, TrigTerm};
