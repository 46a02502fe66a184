//! Operator-splitting solvers for reaction-diffusion-advection equations in
//! unbalanced optimal-transport metrics.
//!
//! Each outer time step composes a Wasserstein JKO step (transport and
//! diffusion, solved by an augmented-Lagrangian method on the dynamic
//! transport formulation) with a Fisher-Rao proximal step (reaction, solved
//! cell by cell). Model drivers cover scalar equations, interacting
//! two-species systems and two degenerate tumor-growth models.

pub mod energy;
pub mod error;
pub mod frstep;
pub mod grid;
pub mod models;
pub mod oracle;
pub mod wstep;

pub mod config;
pub mod io;

pub use energy::{energy_value, pressure, prox_internal, EnergySide, EnergySpec, Nonlinearity, PressureField};
pub use error::{Result, WfrError};
pub use frstep::{fisher_rao_step, fr_distance, fr_step_nutrient_c, ReactionSpec};
pub use grid::{
    cell_inner, convolve, divergence, gradient, total_variation, CellField, DensityField, Grid,
    VectorField,
};
pub use models::{Diagnostics, ModelConfig, Trajectory};
pub use wstep::{dynamic_w2, wasserstein_jko_step, WStepConfig, WStepReport};
