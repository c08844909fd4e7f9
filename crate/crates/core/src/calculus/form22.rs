//! Real (2,2)-forms in complex dimension three, stored through their dual matrix.
//!
//! A (2,2)-form `Psi` is identified with the Hermitian matrix field `Q` defined by
//! `Psi ^ (i dz^c ^ dzbar^d) = Q[c][d] dV`, where `dV = prod_k (i dz^k ^ dzbar^k)`.
//! With this convention `||Omega|| omega^2` corresponds to `2 det(g)^{1/2} g^{-1}`.

use num_complex::Complex64 as C64;

use super::field::{HermitianField, MetricField, Pointwise};
use super::tensors::{Curvature, TensorField};
use crate::cmat;
use crate::error::{CoreError, Result};
use crate::numerics::Spectral;

/// Levi-Civita symbol on three letters.
pub fn eps3(a: usize, b: usize, c: usize) -> f64 {
    if a == b || b == c || a == c {
        return 0.0;
    }
    // even permutations of (0,1,2)
    if (a, b, c) == (0, 1, 2) || (a, b, c) == (1, 2, 0) || (a, b, c) == (2, 0, 1) {
        1.0
    } else {
        -1.0
    }
}

/// A (2,2)-form on a grid with `n = 3`, stored as its dual matrix field.
#[derive(Debug, Clone, PartialEq)]
pub struct Form22 {
    pub q: HermitianField,
}

fn require_three(n: usize) -> Result<()> {
    if n != 3 {
        return Err(CoreError::Contract(format!(
            "(2,2)-form duality is implemented for n = 3, got {n}"
        )));
    }
    Ok(())
}

impl Form22 {
    pub fn from_dual(q: HermitianField) -> Result<Self> {
        require_three(q.n())?;
        Ok(Self { q })
    }

    pub fn zero(g: &MetricField) -> Result<Self> {
        require_three(g.n())?;
        Ok(Self {
            q: HermitianField::zeros(3, g.grid())?,
        })
    }

    /// `Psi = sum C_{skjr} dz^s ^ dzbar^k ^ dz^j ^ dzbar^r`, with
    /// `c[((s*3 + k)*3 + j)*3 + r]`.
    pub fn from_coefficients(grid: &crate::numerics::PeriodicGrid, c: &TensorField) -> Result<Self> {
        let np = grid.len();
        let mut q = vec![vec![C64::default(); np]; 9];
        for cc in 0..3 {
            for d in 0..3 {
                let out = &mut q[cc * 3 + d];
                for s in 0..3 {
                    for j in 0..3 {
                        let e1 = eps3(s, j, cc);
                        if e1 == 0.0 {
                            continue;
                        }
                        for k in 0..3 {
                            for r in 0..3 {
                                let e2 = eps3(k, r, d);
                                if e2 == 0.0 {
                                    continue;
                                }
                                let coef = -e1 * e2;
                                let src = &c[((s * 3 + k) * 3 + j) * 3 + r];
                                for x in 0..np {
                                    out[x] += coef * src[x];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            q: HermitianField::new(3, grid, q)?,
        })
    }

    /// Antisymmetrized components `Phi_{kbar s rbar j}` normalized so that
    /// `Phi = 1/4 Phi_{kbar s rbar j} dz^s ^ dzbar^k ^ dz^j ^ dzbar^r`,
    /// index `((k*3 + s)*3 + r)*3 + j`.
    pub fn components(&self) -> TensorField {
        let np = self.q.len();
        let mut out = vec![vec![C64::default(); np]; 81];
        for k in 0..3 {
            for s in 0..3 {
                for r in 0..3 {
                    for j in 0..3 {
                        let o = &mut out[((k * 3 + s) * 3 + r) * 3 + j];
                        for c in 0..3 {
                            let e1 = eps3(s, j, c);
                            if e1 == 0.0 {
                                continue;
                            }
                            for d in 0..3 {
                                let e2 = eps3(k, r, d);
                                if e2 == 0.0 {
                                    continue;
                                }
                                let src = self.q.comp(c, d);
                                for x in 0..np {
                                    o[x] -= e1 * e2 * src[x];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Sup norm of `d Psi`, i.e. of `sum_j d_j Q[j][k]` over `k` and the grid.
    pub fn closedness_residual(&self, sp: &Spectral) -> f64 {
        divergence_sup(sp, &self.q)
    }

    /// Smallest eigenvalue of the dual matrix over the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.q.len())
            .map(|x| cmat::hermitian_eigenvalues(3, &self.q.at(x))[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            q: self.q.axpy(a, &other.q),
        }
    }
}

/// `sup_{k,x} |sum_j d_j P[j][k]|`.
pub(crate) fn divergence_sup(sp: &Spectral, p: &HermitianField) -> f64 {
    let n = p.n();
    let mut worst = 0.0_f64;
    for k in 0..n {
        let mut acc = vec![C64::default(); p.len()];
        for j in 0..n {
            let d = sp.dz(p.comp(j, k), j);
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
        }
        worst = acc.iter().fold(worst, |m, v| m.max(v.norm()));
    }
    worst
}

/// Dual of `i ddbar beta` for a (1,1)-form `beta = i beta_{kbar j} dz^j ^ dzbar^k`:
/// `Q[c][d] = sum eps_{ajc} eps_{bkd} d_a dbar_b beta_{kbar j}`.
pub fn i_ddbar_11(sp: &Spectral, beta: &HermitianField) -> Result<Form22> {
    require_three(beta.n())?;
    let np = beta.len();
    let mut q = vec![vec![C64::default(); np]; 9];
    for k in 0..3 {
        for j in 0..3 {
            let spec = sp.forward(beta.comp(k, j));
            for a in 0..3 {
                for b in 0..3 {
                    let mut pairs = Vec::new();
                    for c in 0..3 {
                        for d in 0..3 {
                            let e = eps3(a, j, c) * eps3(b, k, d);
                            if e != 0.0 {
                                pairs.push((c, d, e));
                            }
                        }
                    }
                    if pairs.is_empty() {
                        continue;
                    }
                    let h = sp.ddbar_spec(&spec, a, b);
                    for (c, d, e) in pairs {
                        for (o, v) in q[c * 3 + d].iter_mut().zip(&h) {
                            *o += e * v;
                        }
                    }
                }
            }
        }
    }
    Ok(Form22 {
        q: HermitianField::new(3, beta.grid(), q)?,
    })
}

/// `Tr(Rm ^ Rm)` for the Chern curvature, as a (2,2)-form.
pub fn trace_rm_rm(curv: &Curvature, grid: &crate::numerics::PeriodicGrid) -> Result<Form22> {
    require_three(curv.n)?;
    let np = grid.len();
    let mut c = vec![vec![C64::default(); np]; 81];
    for s in 0..3 {
        for k in 0..3 {
            for j in 0..3 {
                for r in 0..3 {
                    let out = &mut c[((s * 3 + k) * 3 + j) * 3 + r];
                    for (x, o) in out.iter_mut().enumerate() {
                        *o = curv.trace_product(k, s, r, j, x);
                    }
                }
            }
        }
    }
    Form22::from_coefficients(grid, &c)
}

/// `||Omega||_omega omega^2` for a metric field (`n = 3`).
pub fn conformal_volume_form(g: &MetricField) -> Result<Form22> {
    require_three(g.n())?;
    let pw = Pointwise::new(g)?;
    let q = HermitianField::from_points(3, g.grid(), |x| {
        let s = 2.0 * pw.det[x].sqrt();
        pw.ginv.iter().map(|c| c[x] * s).collect()
    })?;
    Ok(Form22 { q })
}

/// Inverts `omega -> ||Omega||_omega omega^2` (`n = 3`).
///
/// With `P = Q/2 = det(g)^{1/2} g^{-1}` the unique preimage is `g = det(P) P^{-1}`.
pub fn michelsohn_root(psi: &Form22) -> Result<MetricField> {
    let q = &psi.q;
    q.map_points(|x, m| {
        let p: Vec<C64> = m.iter().map(|v| v * 0.5).collect();
        if cmat::cholesky(3, &p).is_none() {
            return vec![C64::new(f64::NAN, 0.0); 9];
        }
        let (d, inv) = cmat::det_inv(3, &p).unwrap_or((C64::default(), vec![C64::default(); 9]));
        let _ = x;
        inv.into_iter().map(|v| v * d.re).collect()
    })
    .and_then(|g| {
        if g.comps().iter().flatten().any(|v| !v.re.is_finite()) {
            Err(CoreError::Domain("(2,2)-form is not strictly positive".into()))
        } else {
            Ok(g)
        }
    })
}

/// Metric rate induced by a rate `Qdot` of the dual of `||Omega|| omega^2`:
/// `gdot = ||Omega|| (tr(G Pdot) G - G Pdot G)` with `Pdot = Qdot / 2`.
pub fn metric_rate_from_form_rate(g: &MetricField, qdot: &Form22) -> Result<MetricField> {
    require_three(g.n())?;
    let pw = Pointwise::new(g)?;
    let mut out = HermitianField::zeros(3, g.grid())?;
    for x in 0..g.len() {
        let gm = g.at(x);
        let pd: Vec<C64> = qdot.q.at(x).iter().map(|v| v * 0.5).collect();
        let gp = cmat::mul(3, &gm, &pd);
        let tr = cmat::trace(3, &gp);
        let gpg = cmat::mul(3, &gp, &gm);
        let no = pw.det[x].powf(-0.5);
        let r: Vec<C64> = gm.iter().zip(&gpg).map(|(a, b)| (tr * a - b) * no).collect();
        out.set_at(x, &r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PeriodicGrid;

    fn random_positive(grid: &PeriodicGrid) -> MetricField {
        HermitianField::from_fn(3, grid, |x| {
            let a = C64::new(0.2 * x[0].cos(), 0.1 * x[1].sin());
            let b = C64::new(-0.1, 0.15 * (x[0] + x[2]).cos());
            let c = C64::new(0.05 * x[3].sin(), 0.1);
            vec![
                C64::new(1.5 + 0.3 * x[0].sin(), 0.0),
                a,
                b,
                a.conj(),
                C64::new(1.0, 0.0),
                c,
                b.conj(),
                c.conj(),
                C64::new(2.0 + 0.2 * x[1].cos(), 0.0),
            ]
        })
        .unwrap()
    }

    #[test]
    fn michelsohn_round_trip() {
        let grid = PeriodicGrid::torus_shape(&[4, 4, 4, 4, 1, 1]).unwrap();
        let g = random_positive(&grid);
        let psi = conformal_volume_form(&g).unwrap();
        let back = michelsohn_root(&psi).unwrap();
        assert!(back.max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn components_round_trip() {
        let grid = PeriodicGrid::torus_shape(&[4, 1, 1, 1, 1, 1]).unwrap();
        let g = random_positive(&grid);
        let psi = conformal_volume_form(&g).unwrap();
        let comps = psi.components();
        // Phi = 1/4 Phi_{kbar s rbar j} dz^s dzbar^k dz^j dzbar^r
        let mut c = vec![vec![C64::default(); grid.len()]; 81];
        for s in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    for r in 0..3 {
                        c[((s * 3 + k) * 3 + j) * 3 + r] =
                            comps[((k * 3 + s) * 3 + r) * 3 + j].iter().map(|v| v * 0.25).collect();
                    }
                }
            }
        }
        let back = Form22::from_coefficients(&grid, &c).unwrap();
        assert!(back.q.max_abs_diff(&psi.q) < 1e-14);
    }

    #[test]
    fn non_positive_rejected() {
        let grid = PeriodicGrid::torus_shape(&[1, 1, 1, 1, 1, 1]).unwrap();
        let q = HermitianField::flat(3, &grid).unwrap().scaled(-1.0);
        assert!(michelsohn_root(&Form22::from_dual(q).unwrap()).is_err());
    }
}
