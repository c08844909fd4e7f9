//! Periodic grids, Fourier differentiation and explicit time stepping.

pub mod cg;
pub mod grid;
pub mod integrate;
pub mod random;
pub mod spectral;

pub use cg::conjugate_gradient;
pub use grid::{max_abs, PeriodicGrid};
pub use integrate::{linear_fit, rk4_fixed, rk4_step, StepControl, StepRecord, Stepper, System};
pub use spectral::Spectral;
