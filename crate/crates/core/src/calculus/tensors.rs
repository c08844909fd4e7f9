use num_complex::Complex64 as C64;

use super::field::{MetricField, Pointwise};
use crate::cmat;
use crate::error::Result;
use crate::numerics::Spectral;

/// A tensor field stored as one grid array per multi-index (row-major).
pub type TensorField = Vec<Vec<C64>>;

/// Derived data shared by all coordinate-frame tensor computations.
pub struct Geometry {
    pub n: usize,
    pub g: MetricField,
    pub pw: Pointwise,
    /// `dg[(m*n + k)*n + j] = d_m g_{kbar j}`.
    pub dg: TensorField,
    /// `gamma[(p*n + j)*n + q] = Gamma^p_{jq} = g^{p mbar} d_j g_{mbar q}`.
    pub gamma: TensorField,
}

impl Geometry {
    pub fn new(sp: &Spectral, g: &MetricField) -> Result<Self> {
        let n = g.n();
        let np = g.len();
        let pw = Pointwise::new(g)?;
        let mut dg = vec![Vec::new(); n * n * n];
        for k in 0..n {
            for j in 0..n {
                let spec = sp.forward(g.comp(k, j));
                for m in 0..n {
                    dg[(m * n + k) * n + j] = sp.apply(&spec, |p| sp.sym_dz(m, p));
                }
            }
        }
        let mut gamma = vec![vec![C64::default(); np]; n * n * n];
        for p in 0..n {
            for j in 0..n {
                for q in 0..n {
                    let out = &mut gamma[(p * n + j) * n + q];
                    for m in 0..n {
                        let gi = &pw.ginv[p * n + m];
                        let d = &dg[(j * n + m) * n + q];
                        for x in 0..np {
                            out[x] += gi[x] * d[x];
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            g: g.clone(),
            pw,
            dg,
            gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `g^{j kbar}` at point `x`.
    #[inline]
    pub fn ginv(&self, j: usize, k: usize, x: usize) -> C64 {
        self.pw.ginv[j * self.n + k][x]
    }

    #[inline]
    pub fn gmat(&self, k: usize, j: usize, x: usize) -> C64 {
        self.g.comp(k, j)[x]
    }

    /// Torsion `T_{kbar j m} = d_j g_{kbar m} - d_m g_{kbar j}`, index `(k*n + j)*n + m`.
    pub fn torsion(&self) -> TensorField {
        let n = self.n;
        let mut t = vec![Vec::new(); n * n * n];
        for k in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let a = &self.dg[(j * n + k) * n + m];
                    let b = &self.dg[(m * n + k) * n + j];
                    t[(k * n + j) * n + m] = a.iter().zip(b).map(|(x, y)| x - y).collect();
                }
            }
        }
        t
    }

    /// Torsion trace `T_l = g^{j kbar} T_{kbar j l}`.
    pub fn torsion_trace(&self, t: &TensorField) -> TensorField {
        let n = self.n;
        let np = self.len();
        (0..n)
            .map(|l| {
                (0..np)
                    .map(|x| {
                        let mut s = C64::default();
                        for j in 0..n {
                            for k in 0..n {
                                s += self.ginv(j, k, x) * t[(k * n + j) * n + l][x];
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    /// `nabla^m T_{kbar j m} = g^{m sbar} nabla_{sbar} T_{kbar j m}`, index `k*n + j`.
    pub fn torsion_divergence(&self, sp: &Spectral, t: &TensorField) -> TensorField {
        let n = self.n;
        let np = self.len();
        let nb = self.antiholomorphic_derivative(sp, t);
        let mut out = vec![vec![C64::default(); np]; n * n];
        for k in 0..n {
            for j in 0..n {
                let o = &mut out[k * n + j];
                for m in 0..n {
                    for s in 0..n {
                        let d = &nb[((s * n + k) * n + j) * n + m];
                        for x in 0..np {
                            o[x] += self.ginv(m, s, x) * d[x];
                        }
                    }
                }
            }
        }
        out
    }

    /// `nabla_{sbar} T_{kbar j m} = dbar_s T_{kbar j m} - conj(Gamma^r_{sk}) T_{rbar j m}`,
    /// index `((s*n + k)*n + j)*n + m`.
    pub fn antiholomorphic_derivative(&self, sp: &Spectral, t: &TensorField) -> TensorField {
        let n = self.n;
        let np = self.len();
        let mut out = vec![Vec::new(); n * n * n * n];
        for k in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let spec = sp.forward(&t[(k * n + j) * n + m]);
                    for s in 0..n {
                        let mut d = sp.apply(&spec, |p| sp.sym_dzbar(s, p));
                        for r in 0..n {
                            let gam = &self.gamma[(r * n + s) * n + k];
                            let tr = &t[(r * n + j) * n + m];
                            for x in 0..np {
                                d[x] -= gam[x].conj() * tr[x];
                            }
                        }
                        out[((s * n + k) * n + j) * n + m] = d;
                    }
                }
            }
        }
        out
    }

    /// `nabla_s T_{kbar j m} = d_s T - Gamma^r_{sj} T_{kbar r m} - Gamma^r_{sm} T_{kbar j r}`,
    /// index `((s*n + k)*n + j)*n + m`.
    pub fn holomorphic_derivative(&self, sp: &Spectral, t: &TensorField) -> TensorField {
        let n = self.n;
        let np = self.len();
        let mut out = vec![Vec::new(); n * n * n * n];
        for k in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let spec = sp.forward(&t[(k * n + j) * n + m]);
                    for s in 0..n {
                        let mut d = sp.apply(&spec, |p| sp.sym_dz(s, p));
                        for r in 0..n {
                            let g1 = &self.gamma[(r * n + s) * n + j];
                            let t1 = &t[(k * n + r) * n + m];
                            let g2 = &self.gamma[(r * n + s) * n + m];
                            let t2 = &t[(k * n + j) * n + r];
                            for x in 0..np {
                                d[x] -= g1[x] * t1[x] + g2[x] * t2[x];
                            }
                        }
                        out[((s * n + k) * n + j) * n + m] = d;
                    }
                }
            }
        }
        out
    }

    /// Chern curvature `R_{kbar j}^p_q = -dbar_k Gamma^p_{jq}` with its contractions.
    pub fn curvature(&self, sp: &Spectral) -> Curvature {
        let n = self.n;
        let np = self.len();
        let mut rm = vec![Vec::new(); n * n * n * n];
        for p in 0..n {
            for j in 0..n {
                for q in 0..n {
                    let spec = sp.forward(&self.gamma[(p * n + j) * n + q]);
                    for k in 0..n {
                        rm[((k * n + j) * n + p) * n + q] = sp.apply(&spec, |i| -sp.sym_dzbar(k, i));
                    }
                }
            }
        }
        let idx = |k: usize, j: usize, p: usize, q: usize| ((k * n + j) * n + p) * n + q;
        let zero = || vec![vec![C64::default(); np]; n * n];
        let (mut ric, mut rt, mut rp, mut rpp) = (zero(), zero(), zero(), zero());
        for k in 0..n {
            for j in 0..n {
                for x in 0..np {
                    let mut a = C64::default();
                    let mut c = C64::default();
                    for m in 0..n {
                        a += rm[idx(k, j, m, m)][x];
                        c += rm[idx(k, m, m, j)][x];
                    }
                    let mut b = C64::default();
                    let mut d = C64::default();
                    for p in 0..n {
                        for q in 0..n {
                            let gi = self.ginv(p, q, x);
                            for r in 0..n {
                                let w = gi * self.gmat(k, r, x);
                                b += w * rm[idx(q, p, r, j)][x];
                                d += w * rm[idx(q, j, r, p)][x];
                            }
                        }
                    }
                    ric[k * n + j][x] = a;
                    rp[k * n + j][x] = c;
                    rt[k * n + j][x] = b;
                    rpp[k * n + j][x] = d;
                }
            }
        }
        let scalar = |t: &TensorField| -> Vec<f64> {
            (0..np)
                .map(|x| {
                    let mut s = C64::default();
                    for j in 0..n {
                        for k in 0..n {
                            s += self.ginv(j, k, x) * t[k * n + j][x];
                        }
                    }
                    s.re
                })
                .collect()
        };
        let scalar_r = scalar(&ric);
        let scalar_rtilde = scalar(&rt);
        Curvature {
            n,
            rm,
            ric,
            ric_tilde: rt,
            ric_prime: rp,
            ric_dprime: rpp,
            scalar_r,
            scalar_rtilde,
        }
    }
}

/// Chern curvature tensor with the four Ricci contractions.
#[derive(Debug, Clone)]
pub struct Curvature {
    pub n: usize,
    /// `rm[((k*n + j)*n + p)*n + q] = R_{kbar j}^p_q`.
    pub rm: TensorField,
    /// `R_{kbar j} = R_{kbar j}^p_p`.
    pub ric: TensorField,
    /// `Rtilde_{kbar j} = g^{p qbar} R_{qbar p kbar j}`.
    pub ric_tilde: TensorField,
    /// `R'_{kbar j} = R_{kbar m}^m_j`.
    pub ric_prime: TensorField,
    /// `R''_{kbar j} = g^{p qbar} R_{qbar j kbar p}`.
    pub ric_dprime: TensorField,
    pub scalar_r: Vec<f64>,
    pub scalar_rtilde: Vec<f64>,
}

impl Curvature {
    #[inline]
    pub fn at(&self, k: usize, j: usize, p: usize, q: usize, x: usize) -> C64 {
        let n = self.n;
        self.rm[((k * n + j) * n + p) * n + q][x]
    }

    /// `A(k,s,r,j) = R_{kbar s}^a_b R_{rbar j}^b_a` at one point.
    pub fn trace_product(&self, k: usize, s: usize, r: usize, j: usize, x: usize) -> C64 {
        let n = self.n;
        let mut acc = C64::default();
        for a in 0..n {
            for b in 0..n {
                acc += self.at(k, s, a, b, x) * self.at(r, j, b, a, x);
            }
        }
        acc
    }
}

/// Role of a tensor index for frame norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Lower unbarred index.
    Lower,
    /// Lower barred index.
    Bar,
    /// Upper unbarred index.
    Upper,
}

/// Unitary frames `E = L^{-H}` (with `g = L L^H`) at every point.
pub struct Frames {
    n: usize,
    e: Vec<Vec<C64>>,
    einv: Vec<Vec<C64>>,
}

impl Frames {
    pub fn new(g: &MetricField) -> Result<Self> {
        let n = g.n();
        let mut e = Vec::with_capacity(g.len());
        let mut einv = Vec::with_capacity(g.len());
        for x in 0..g.len() {
            let l = cmat::cholesky(n, &g.at(x))
                .ok_or_else(|| crate::error::CoreError::Domain(format!("metric not positive-definite at {x}")))?;
            let li = cmat::lower_inverse(n, &l);
            e.push(cmat::adjoint(n, &li));
            einv.push(cmat::adjoint(n, &l));
        }
        Ok(Self { n, e, einv })
    }

    /// Pointwise squared norm `|T|^2_g` of a tensor with the given index slots.
    pub fn norm_sq(&self, t: &TensorField, slots: &[Slot]) -> Vec<f64> {
        let n = self.n;
        let rank = slots.len();
        let size = n.pow(rank as u32);
        debug_assert_eq!(t.len(), size);
        let np = self.e.len();
        let mut buf = vec![C64::default(); size];
        let mut tmp = vec![C64::default(); size];
        (0..np)
            .map(|x| {
                for (b, c) in buf.iter_mut().zip(t) {
                    *b = c[x];
                }
                let e = &self.e[x];
                let ei = &self.einv[x];
                for (ax, slot) in slots.iter().enumerate() {
                    let inner = n.pow((rank - ax - 1) as u32);
                    let outer = size / (inner * n);
                    for o in 0..outer {
                        for i in 0..inner {
                            for a in 0..n {
                                let mut s = C64::default();
                                for j in 0..n {
                                    let m = match slot {
                                        Slot::Lower => e[j * n + a],
                                        Slot::Bar => e[j * n + a].conj(),
                                        Slot::Upper => ei[a * n + j],
                                    };
                                    s += m * buf[(o * n + j) * inner + i];
                                }
                                tmp[(o * n + a) * inner + i] = s;
                            }
                        }
                    }
                    std::mem::swap(&mut buf, &mut tmp);
                }
                buf.iter().map(|v| v.norm_sqr()).sum()
            })
            .collect()
    }
}

pub const TORSION_SLOTS: [Slot; 3] = [Slot::Bar, Slot::Lower, Slot::Lower];
pub const CURVATURE_SLOTS: [Slot; 4] = [Slot::Bar, Slot::Lower, Slot::Upper, Slot::Lower];

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

pub fn inf(v: &[f64]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, &x| m.min(x))
}
