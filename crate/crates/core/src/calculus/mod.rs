//! Complex-geometry oracle on periodic grids: connections, torsion, curvature,
//! (2,2)-forms and the right-hand sides of the metric flows.

mod field;
mod form22;
mod rhs;
mod tensors;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use field::{norm_omega, norm_omega_matrix, HermitianField, MetricField, Pointwise, DET_FLOOR};
pub use form22::{
    conformal_volume_form, eps3, i_ddbar_11, metric_rate_from_form_rate, michelsohn_root, trace_rm_rm, Form22,
};
pub use rhs::{anomaly_form_rate, anomaly_rhs_forms, anomaly_rhs_metric, balanced_rhs_metric_n4, SOURCE_CLOSED_TOL};
pub use tensors::{inf, sup, Curvature, Frames, Geometry, Slot, TensorField, CURVATURE_SLOTS, TORSION_SLOTS};

use crate::error::Result;
use crate::numerics::Spectral;

/// Sup norm of `d(||Omega|| omega^{n-1})`, via the divergence of
/// `det(g)^{1/2} g^{-1}`.
pub fn balanced_residual(sp: &Spectral, g: &MetricField) -> Result<f64> {
    let pw = Pointwise::new(g)?;
    let n = g.n();
    let fact: f64 = (1..n).map(|i| i as f64).product();
    let p = HermitianField::from_points(n, g.grid(), |x| {
        let s = fact * pw.det[x].sqrt();
        pw.ginv.iter().map(|c| c[x] * s).collect()
    })?;
    Ok(form22::divergence_sup(sp, &p))
}

/// The monitored quantities of the blow-up criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityNorms {
    pub rm_sup: f64,
    pub dt_sup: f64,
    pub t2_sup: f64,
    pub omega_inf: f64,
}

/// `(sup|Rm|, sup|DT|, sup|T|^2, inf ||Omega||)` measured in the metric itself.
pub fn singularity_norms(sp: &Spectral, g: &MetricField) -> Result<SingularityNorms> {
    let geo = Geometry::new(sp, g)?;
    let frames = Frames::new(g)?;
    let curv = geo.curvature(sp);
    let rm = frames.norm_sq(&curv.rm, &CURVATURE_SLOTS);
    let t = geo.torsion();
    let t2 = frames.norm_sq(&t, &TORSION_SLOTS);
    let dh = frames.norm_sq(
        &geo.holomorphic_derivative(sp, &t),
        &[Slot::Lower, Slot::Bar, Slot::Lower, Slot::Lower],
    );
    let da = frames.norm_sq(
        &geo.antiholomorphic_derivative(sp, &t),
        &[Slot::Bar, Slot::Bar, Slot::Lower, Slot::Lower],
    );
    let dt: Vec<f64> = dh.iter().zip(&da).map(|(a, b)| (a + b).sqrt()).collect();
    Ok(SingularityNorms {
        rm_sup: sup(&rm).sqrt(),
        dt_sup: sup(&dt),
        t2_sup: sup(&t2),
        omega_inf: geo.pw.det.iter().fold(f64::INFINITY, |m, d| m.min(d.powf(-0.5))),
    })
}

/// `sup |alpha' Rm|`; the flow is guaranteed to start when this is below 1/2.
pub fn parabolicity_margin(sp: &Spectral, g: &MetricField, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let geo = Geometry::new(sp, g)?;
    let frames = Frames::new(g)?;
    let curv = geo.curvature(sp);
    Ok(alpha.abs() * sup(&frames.norm_sq(&curv.rm, &CURVATURE_SLOTS)).sqrt())
}

/// Threshold of the short-time existence condition.
pub const PARABOLICITY_THRESHOLD: f64 = 0.5;

/// Conformally balanced metric `det(chi)^{1/(n-2)} chi` built from a Kahler
/// metric `chi = I + i ddbar psi` (`n >= 3`).
pub fn conformally_balanced(sp: &Spectral, n: usize, psi: &[f64]) -> Result<MetricField> {
    let chi = HermitianField::flat(n, sp.grid())?.plus_hessian(sp, psi)?;
    let e = 1.0 / (n as f64 - 2.0);
    chi.map_points(|_, m| {
        let d = crate::cmat::det(n, m).re.max(0.0).powf(e);
        m.iter().map(|v| v * d).collect::<Vec<C64>>()
    })
}
