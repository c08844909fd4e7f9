//! The anomaly flow for left-invariant metrics on three-dimensional unimodular
//! complex Lie groups, where it reduces to an ODE on 3x3 Hermitian matrices.

pub mod algebra;
pub mod exterior;
mod flow;

pub use algebra::{tau, Constants, GauduchonParam, Group, LieAlgebra, ALGEBRA_TOL};
pub use flow::{
    classify, connection, curvature_forms, diag, dual, evolve, form_rate, frobenius, linearization_spectrum,
    metric_rate, omega_form, pack, rhs_general, rhs_printed, stationary_points, torsion_form, trace_rm_rm,
    trace_rm_rm_unitary, trailing_fit, unpack, Classification, EvolveOptions, LieSample, LieSystem, Mat3,
    PrintedConvention, SolvableFamily, StationarySet, Trajectory, CONVERGED_TOL, JACOBIAN_STEP, LINEARIZATION_BASE_TOL,
    LINEAR_RATE_VARIANCE, STATIONARY_TOL,
};
