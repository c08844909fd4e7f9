use num_complex::Complex64 as C64;

use super::field::{HermitianField, MetricField};
use super::form22::{self, Form22};
use super::tensors::{Curvature, Frames, Geometry, TensorField, TORSION_SLOTS};
use crate::error::{CoreError, Result};
use crate::numerics::Spectral;

/// Relative tolerance for the closedness check on a source form.
pub const SOURCE_CLOSED_TOL: f64 = 1e-8;

fn check_source(sp: &Spectral, phi: Option<&Form22>) -> Result<()> {
    if let Some(phi) = phi {
        let res = phi.closedness_residual(sp);
        let scale = phi.q.max_abs().max(1.0);
        if res > SOURCE_CLOSED_TOL * scale {
            return Err(CoreError::Contract(format!(
                "source form is not closed (residual {res:.3e})"
            )));
        }
    }
    Ok(())
}

/// Metric rate of the anomaly flow from the curvature formula
///
/// `(1/(2||Omega||)) { -Rtilde + g^{s rbar} g^{p qbar} T_{qbar s j} conj(T_{pbar r k})
///   - (alpha'/4) g^{s rbar} (R_{[kbar s} R_{rbar j]} - Phi_{kbar s rbar j}) }`.
///
/// Valid along the flow, where the metric stays conformally balanced. Requires `n = 3`.
pub fn anomaly_rhs_metric(sp: &Spectral, g: &MetricField, alpha: f64, phi: Option<&Form22>) -> Result<MetricField> {
    if g.n() != 3 {
        return Err(CoreError::Contract("anomaly_rhs_metric needs n = 3".into()));
    }
    check_source(sp, phi)?;
    let geo = Geometry::new(sp, g)?;
    let curv = geo.curvature(sp);
    let t = geo.torsion();
    let phic = phi.map(Form22::components);
    Ok(assemble_af(&geo, &curv, &t, alpha, phic.as_ref()))
}

fn assemble_af(
    geo: &Geometry,
    curv: &Curvature,
    t: &TensorField,
    alpha: f64,
    phic: Option<&TensorField>,
) -> MetricField {
    let n = geo.n;
    let np = geo.len();
    let ti = |k: usize, j: usize, m: usize| (k * n + j) * n + m;
    let mut out = HermitianField::zeros(n, geo.g.grid()).expect("shape");
    for x in 0..np {
        let no = geo.pw.det[x].powf(-0.5);
        for k in 0..n {
            for j in 0..n {
                let mut v = -curv.ric_tilde[k * n + j][x];
                for s in 0..n {
                    for r in 0..n {
                        let gsr = geo.ginv(s, r, x);
                        let mut tt = C64::default();
                        for p in 0..n {
                            for q in 0..n {
                                tt += geo.ginv(p, q, x) * t[ti(q, s, j)][x] * t[ti(p, r, k)][x].conj();
                            }
                        }
                        v += gsr * tt;
                        if alpha != 0.0 || phic.is_some() {
                            let b = 2.0 * (curv.trace_product(k, s, r, j, x) - curv.trace_product(r, s, k, j, x));
                            let ph = phic.map_or(C64::default(), |c| c[((k * n + s) * n + r) * n + j][x]);
                            v -= 0.25 * alpha * gsr * (b - ph);
                        }
                    }
                }
                out.comp_mut(k, j)[x] = v * (0.5 / no);
            }
        }
    }
    symmetrize(&mut out);
    out
}

/// Metric rate of the anomaly flow computed at the level of (2,2)-forms:
/// `d/dt (||Omega|| omega^2) = i ddbar omega - (alpha'/4)(Tr Rm^Rm - Phi)`, then
/// converted to a metric rate. Requires `n = 3`.
pub fn anomaly_rhs_forms(sp: &Spectral, g: &MetricField, alpha: f64, phi: Option<&Form22>) -> Result<MetricField> {
    let qdot = anomaly_form_rate(sp, g, alpha, phi)?;
    form22::metric_rate_from_form_rate(g, &qdot)
}

/// Right-hand side of the flow of (2,2)-forms.
pub fn anomaly_form_rate(sp: &Spectral, g: &MetricField, alpha: f64, phi: Option<&Form22>) -> Result<Form22> {
    if g.n() != 3 {
        return Err(CoreError::Contract("anomaly flow of forms needs n = 3".into()));
    }
    check_source(sp, phi)?;
    let mut q = form22::i_ddbar_11(sp, g)?;
    if alpha != 0.0 {
        let geo = Geometry::new(sp, g)?;
        let curv = geo.curvature(sp);
        let trr = form22::trace_rm_rm(&curv, g.grid())?;
        q = q.axpy(-0.25 * alpha, &trr);
    }
    if let Some(phi) = phi {
        q = q.axpy(0.25 * alpha, phi);
    }
    Ok(q)
}

/// Metric rate of the balanced flow in dimension `n >= 4` for a conformally
/// balanced metric.
pub fn balanced_rhs_metric_n4(sp: &Spectral, g: &MetricField) -> Result<MetricField> {
    let n = g.n();
    if n < 4 {
        return Err(CoreError::Contract(format!(
            "balanced_rhs_metric_n4 needs n >= 4, got {n}"
        )));
    }
    let geo = Geometry::new(sp, g)?;
    let curv = geo.curvature(sp);
    let t = geo.torsion();
    let tau = geo.torsion_trace(&t);
    let frames = Frames::new(g)?;
    let t2 = frames.norm_sq(&t, &TORSION_SLOTS);
    let tau2 = tau_norm_sq(&geo, &tau);
    let np = g.len();
    let nf = n as f64;
    let ti = |k: usize, j: usize, m: usize| (k * n + j) * n + m;
    let mut out = HermitianField::zeros(n, g.grid())?;
    for x in 0..np {
        let no = geo.pw.det[x].powf(-0.5);
        let iso = (t2[x] - 2.0 * tau2[x]) / (2.0 * (nf - 2.0));
        for k in 0..n {
            for j in 0..n {
                let mut v = -curv.ric_tilde[k * n + j][x] + geo.gmat(k, j, x) * iso;
                let mut quad = C64::default();
                let mut mixed = C64::default();
                for s in 0..n {
                    for r in 0..n {
                        let gsr = geo.ginv(s, r, x);
                        for q in 0..n {
                            for p in 0..n {
                                quad += geo.ginv(q, p, x) * gsr * t[ti(k, q, s)][x] * t[ti(j, p, r)][x].conj();
                            }
                        }
                        mixed += gsr * (t[ti(k, j, s)][x] * tau[r][x].conj() + tau[s][x] * t[ti(j, k, r)][x].conj());
                    }
                }
                v += -0.5 * quad + mixed + tau[j][x] * tau[k][x].conj();
                out.comp_mut(k, j)[x] = v / ((nf - 1.0) * no);
            }
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

/// `|tau|^2 = g^{j kbar} tau_j conj(tau_k)`.
pub(crate) fn tau_norm_sq(geo: &Geometry, tau: &TensorField) -> Vec<f64> {
    let n = geo.n;
    (0..geo.len())
        .map(|x| {
            let mut s = C64::default();
            for j in 0..n {
                for k in 0..n {
                    s += geo.ginv(j, k, x) * tau[j][x] * tau[k][x].conj();
                }
            }
            s.re
        })
        .collect()
}

/// Replaces a nearly Hermitian field by its Hermitian part.
fn symmetrize(h: &mut HermitianField) {
    let n = h.n();
    for k in 0..n {
        for j in k..n {
            for x in 0..h.len() {
                let a = h.comp(k, j)[x];
                let b = h.comp(j, k)[x];
                let m = 0.5 * (a + b.conj());
                h.comp_mut(k, j)[x] = m;
                h.comp_mut(j, k)[x] = m.conj();
            }
        }
    }
}
