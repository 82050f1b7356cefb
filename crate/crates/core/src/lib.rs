//! Solver and estimate laboratory for the ε-regularized degenerate/singular
//! chemotaxis–Navier–Stokes system with logistic source.
//!
//! The approximate system advanced here is
//!
//! ```text
//! n_t + u·∇n = Δ(n+ε)^m − χ ∇·( n/(1+εn) ∇c ) + κ n − μ n²
//! c_t + u·∇c = Δc − c log(1+εn)/ε
//! u_t + (Y_ε u·∇)u = Δu + ∇P + n∇Φ,   ∇·u = 0
//! ```
//!
//! on a box with Neumann walls for `n`, `c` and no-slip walls for `u`, where
//! `Y_ε = (1+εA)^{-1}` is the Stokes resolvent.

pub mod error;
pub mod grid;
pub mod linsolve;
pub mod regularization;
pub mod state;
pub mod scalar;
pub mod flow;
pub mod diagnostics;
pub mod harness;
pub mod config;
pub mod output;
pub mod cli;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, VectorField};
pub use regularization::{DiffusionVariant, FaceAverage, FluidVariant, ModelParams, PotentialGradient};
pub use scalar::StepControls;
pub use state::{InitialData, State};
