//! Numerical laboratory for the anomaly flow and its reductions.

pub mod calculus;
pub mod cmat;
pub mod error;
pub mod fuyau;
pub mod lieflow;
pub mod maflow;
pub mod numerics;
pub mod surfflow;

pub use error::{CoreError, Result};
