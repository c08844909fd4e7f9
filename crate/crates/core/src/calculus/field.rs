use num_complex::Complex64 as C64;

use crate::cmat;
use crate::error::{CoreError, Result};
use crate::numerics::{PeriodicGrid, Spectral};

/// Degeneracy floor for `det g`.
pub const DET_FLOOR: f64 = 1e-13;

/// Field of `n x n` Hermitian matrices on a periodic grid.
///
/// Component `(k, j)` stores `g_{kbar j}` at every grid point; the associated
/// form is `omega = i g_{kbar j} dz^j ^ dzbar^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    n: usize,
    grid: PeriodicGrid,
    comps: Vec<Vec<C64>>,
}

/// A Hermitian field used as a metric.
pub type MetricField = HermitianField;

impl HermitianField {
    pub fn new(n: usize, grid: &PeriodicGrid, comps: Vec<Vec<C64>>) -> Result<Self> {
        if n == 0 || n > grid.complex_dim() {
            return Err(CoreError::Contract(format!(
                "matrix size {n} does not fit complex dimension {}",
                grid.complex_dim()
            )));
        }
        if comps.len() != n * n || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(CoreError::Contract("component array has wrong shape".into()));
        }
        Ok(Self {
            n,
            grid: grid.clone(),
            comps,
        })
    }

    pub fn zeros(n: usize, grid: &PeriodicGrid) -> Result<Self> {
        Self::new(n, grid, vec![vec![C64::default(); grid.len()]; n * n])
    }

    pub fn constant(n: usize, grid: &PeriodicGrid, m: &[C64]) -> Result<Self> {
        Self::new(n, grid, m.iter().map(|&v| vec![v; grid.len()]).collect())
    }

    pub fn flat(n: usize, grid: &PeriodicGrid) -> Result<Self> {
        Self::constant(n, grid, &cmat::identity(n))
    }

    /// Builds a field from a per-point matrix function of the grid coordinates.
    pub fn from_fn<F: Fn(&[f64]) -> Vec<C64>>(n: usize, grid: &PeriodicGrid, f: F) -> Result<Self> {
        Self::from_points(n, grid, |p| f(&grid.coords(p)))
    }

    /// Builds a field from a per-point matrix function of the flat index.
    pub fn from_points<F: FnMut(usize) -> Vec<C64>>(n: usize, grid: &PeriodicGrid, mut f: F) -> Result<Self> {
        let mut comps = vec![vec![C64::default(); grid.len()]; n * n];
        for p in 0..grid.len() {
            let m = f(p);
            for (c, v) in comps.iter_mut().zip(m) {
                c[p] = v;
            }
        }
        Self::new(n, grid, comps)
    }

    /// Conformal field `e^{phi} * identity`.
    pub fn conformal(n: usize, grid: &PeriodicGrid, phi: &[f64]) -> Result<Self> {
        Self::from_points(n, grid, |p| {
            let mut m = cmat::identity(n);
            m.iter_mut().for_each(|v| *v *= phi[p].exp());
            m
        })
    }

    /// `base + i ddbar phi` in matrix form.
    pub fn plus_hessian(&self, sp: &Spectral, phi: &[f64]) -> Result<Self> {
        let h = sp.complex_hessian(phi);
        let n = self.n;
        let nc = sp.grid().complex_dim();
        let mut out = self.clone();
        for k in 0..n {
            for j in 0..n {
                for (o, v) in out.comps[k * n + j].iter_mut().zip(&h[k * nc + j]) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn comp(&self, k: usize, j: usize) -> &[C64] {
        &self.comps[k * self.n + j]
    }

    pub fn comp_mut(&mut self, k: usize, j: usize) -> &mut Vec<C64> {
        &mut self.comps[k * self.n + j]
    }

    pub fn comps(&self) -> &[Vec<C64>] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<Vec<C64>> {
        self.comps
    }

    pub fn at(&self, p: usize) -> Vec<C64> {
        self.comps.iter().map(|c| c[p]).collect()
    }

    pub fn set_at(&mut self, p: usize, m: &[C64]) {
        for (c, &v) in self.comps.iter_mut().zip(m) {
            c[p] = v;
        }
    }

    /// Applies a per-point matrix map.
    pub fn map_points<F: FnMut(usize, &[C64]) -> Vec<C64>>(&self, mut f: F) -> Result<Self> {
        let mut buf = vec![C64::default(); self.n * self.n];
        Self::from_points(self.n, &self.grid, |p| {
            for (b, c) in buf.iter_mut().zip(&self.comps) {
                *b = c[p];
            }
            f(p, &buf)
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for (o, c) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in o.iter_mut().zip(c) {
                *x += a * y;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| cmat::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    /// Largest violation of `g_{kbar j} = conj(g_{jbar k})`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut d = 0.0_f64;
        for k in 0..n {
            for j in 0..n {
                for (a, b) in self.comp(k, j).iter().zip(self.comp(j, k)) {
                    d = d.max((a - b.conj()).norm());
                }
            }
        }
        d
    }

    /// Packs the independent real parameters: diagonal entries, then real and
    /// imaginary parts of the upper triangle.
    pub fn to_real(&self) -> Vec<f64> {
        let n = self.n;
        let np = self.len();
        let mut out = Vec::with_capacity(n * n * np);
        for i in 0..n {
            out.extend(self.comp(i, i).iter().map(|v| v.re));
        }
        for i in 0..n {
            for j in i + 1..n {
                out.extend(self.comp(i, j).iter().map(|v| v.re));
                out.extend(self.comp(i, j).iter().map(|v| v.im));
            }
        }
        out
    }

    pub fn from_real(n: usize, grid: &PeriodicGrid, y: &[f64]) -> Result<Self> {
        let np = grid.len();
        if y.len() != n * n * np {
            return Err(CoreError::Contract("packed Hermitian field has wrong length".into()));
        }
        let mut comps = vec![vec![C64::default(); np]; n * n];
        for i in 0..n {
            for p in 0..np {
                comps[i * n + i][p] = C64::new(y[i * np + p], 0.0);
            }
        }
        let mut off = n * np;
        for i in 0..n {
            for j in i + 1..n {
                for p in 0..np {
                    let v = C64::new(y[off + p], y[off + np + p]);
                    comps[i * n + j][p] = v;
                    comps[j * n + i][p] = v.conj();
                }
                off += 2 * np;
            }
        }
        Self::new(n, grid, comps)
    }
}

/// Pointwise determinant and inverse of a metric field.
#[derive(Debug, Clone)]
pub struct Pointwise {
    /// `det g` (real for Hermitian input).
    pub det: Vec<f64>,
    /// `ginv[j*n + k] = g^{j kbar}`.
    pub ginv: Vec<Vec<C64>>,
}

impl Pointwise {
    pub fn new(g: &MetricField) -> Result<Self> {
        let n = g.n();
        let np = g.len();
        let mut det = vec![0.0; np];
        let mut ginv = vec![vec![C64::default(); np]; n * n];
        let mut m = vec![C64::default(); n * n];
        for p in 0..np {
            for (mv, c) in m.iter_mut().zip(g.comps()) {
                *mv = c[p];
            }
            let (d, inv) = cmat::det_inv(n, &m).ok_or(CoreError::Degenerate {
                quantity: "det g",
                value: 0.0,
                index: p,
            })?;
            if !(d.re > DET_FLOOR) {
                return Err(CoreError::Degenerate {
                    quantity: "det g",
                    value: d.re,
                    index: p,
                });
            }
            det[p] = d.re;
            for (gi, v) in ginv.iter_mut().zip(inv) {
                gi[p] = v;
            }
        }
        Ok(Self { det, ginv })
    }
}

/// `||Omega||_omega = det(g)^{-1/2}` for the unit-coefficient holomorphic volume form.
///
/// Fails with a domain error when `g` is not positive-definite at some point.
pub fn norm_omega(g: &MetricField) -> Result<Vec<f64>> {
    let n = g.n();
    (0..g.len())
        .map(|p| {
            let m = g.at(p);
            if cmat::cholesky(n, &m).is_none() {
                return Err(CoreError::Domain(format!(
                    "metric not positive-definite at grid point {p}"
                )));
            }
            let d = cmat::det(n, &m).re;
            if d <= DET_FLOOR {
                return Err(CoreError::Degenerate {
                    quantity: "det g",
                    value: d,
                    index: p,
                });
            }
            Ok(d.powf(-0.5))
        })
        .collect()
}

/// Pointwise `||Omega||` of a single matrix.
pub fn norm_omega_matrix(n: usize, m: &[C64]) -> Result<f64> {
    if cmat::cholesky(n, m).is_none() {
        return Err(CoreError::Domain("metric not positive-definite".into()));
    }
    Ok(cmat::det(n, m).re.powf(-0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_round_trip() {
        let grid = PeriodicGrid::torus(6, 2).unwrap();
        let g = HermitianField::from_fn(3, &grid, |x| {
            let a = C64::new(x[0].cos() * 0.1, x[1].sin() * 0.2);
            vec![
                C64::new(2.0, 0.0),
                a,
                C64::new(0.0, 0.1),
                a.conj(),
                C64::new(1.0, 0.0),
                C64::default(),
                C64::new(0.0, -0.1),
                C64::default(),
                C64::new(3.0, 0.0),
            ]
        })
        .unwrap();
        let back = HermitianField::from_real(3, &grid, &g.to_real()).unwrap();
        assert_eq!(back, g);
        assert_eq!(g.hermitian_defect(), 0.0);
    }

    #[test]
    fn norm_omega_scaling() {
        let grid = PeriodicGrid::torus(6, 1).unwrap();
        let lam = 2.5;
        let g = HermitianField::flat(3, &grid).unwrap().scaled(lam);
        let v = norm_omega(&g).unwrap();
        assert!((v[0] - lam.powf(-1.5)).abs() < 1e-15);
        let flat = HermitianField::flat(3, &grid).unwrap();
        assert_eq!(norm_omega(&flat).unwrap()[0], 1.0);
        assert!(norm_omega(&flat.scaled(-1.0)).is_err());
    }
}
