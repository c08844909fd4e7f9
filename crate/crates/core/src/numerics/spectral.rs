use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, OnceLock};

use super::grid::PeriodicGrid;

type Plan = Arc<dyn Fft<f64>>;

/// Multidimensional complex FFT built from per-axis 1-D plans.
struct FftNd {
    shape: Vec<usize>,
    len: usize,
    plans: Vec<Option<(Plan, Plan)>>,
}

impl FftNd {
    fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = shape
            .iter()
            .map(|&n| (n > 1).then(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))))
            .collect();
        Self {
            shape: shape.to_vec(),
            len: shape.iter().product(),
            plans,
        }
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len);
        let mut buf = Vec::new();
        let mut scratch = Vec::new();
        for (a, plan) in self.plans.iter().enumerate() {
            let Some((fwd, inv)) = plan else { continue };
            let plan = if inverse { inv } else { fwd };
            let n = self.shape[a];
            let s: usize = self.shape[a + 1..].iter().product();
            scratch.resize(plan.get_inplace_scratch_len(), C64::default());
            if s == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = self.len / (n * s);
            buf.resize(self.len, C64::default());
            for o in 0..outer {
                for i in 0..s {
                    let base = o * n * s + i;
                    let line = (o * s + i) * n;
                    for m in 0..n {
                        buf[line + m] = data[base + m * s];
                    }
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for o in 0..outer {
                for i in 0..s {
                    let base = o * n * s + i;
                    let line = (o * s + i) * n;
                    for m in 0..n {
                        data[base + m * s] = buf[line + m];
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / self.len as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Fourier differentiation on a [`PeriodicGrid`].
///
/// `dz(j)` has symbol `(i k_x + k_y)/2` and `dzbar(j)` has symbol
/// `(i k_x - k_y)/2`, where `(x, y)` are the real axes `(2j, 2j+1)`.
/// Second derivatives are products of first-derivative symbols, so the
/// Nyquist mode is discarded consistently everywhere.
pub struct Spectral {
    grid: PeriodicGrid,
    fft: FftNd,
    kd: Vec<Vec<f64>>,
    /// `kflat[a][p]`: derivative wavenumber along axis `a` at flat index `p`.
    kflat: Vec<Vec<f64>>,
    padded: OnceLock<(FftNd, Vec<Option<usize>>)>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let kd: Vec<Vec<f64>> = (0..grid.dim())
            .map(|a| (0..grid.shape()[a]).map(|i| grid.deriv_wavenumber(a, i)).collect())
            .collect();
        let kflat = (0..grid.dim())
            .map(|a| (0..grid.len()).map(|p| kd[a][grid.axis_index(p, a)]).collect())
            .collect();
        Self {
            grid: grid.clone(),
            fft: FftNd::new(grid.shape()),
            kd,
            kflat,
            padded: OnceLock::new(),
        }
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

    pub fn forward(&self, f: &[C64]) -> Vec<C64> {
        let mut s = f.to_vec();
        self.fft.transform(&mut s, false);
        s
    }

    pub fn forward_real(&self, f: &[f64]) -> Vec<C64> {
        let mut s: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fft.transform(&mut s, false);
        s
    }

    pub fn inverse(&self, mut s: Vec<C64>) -> Vec<C64> {
        self.fft.transform(&mut s, true);
        s
    }

    pub fn inverse_real(&self, s: Vec<C64>) -> Vec<f64> {
        self.inverse(s).into_iter().map(|v| v.re).collect()
    }

    /// Derivative wavenumber along real axis `axis` at spectral index `flat`.
    pub fn k(&self, axis: usize, flat: usize) -> f64 {
        if axis >= self.grid.dim() {
            return 0.0;
        }
        self.kflat[axis][flat]
    }

    pub fn sym_dz(&self, j: usize, flat: usize) -> C64 {
        C64::new(0.5 * self.k(2 * j + 1, flat), 0.5 * self.k(2 * j, flat))
    }

    pub fn sym_dzbar(&self, j: usize, flat: usize) -> C64 {
        C64::new(-0.5 * self.k(2 * j + 1, flat), 0.5 * self.k(2 * j, flat))
    }

    /// Multiplies a spectrum by a symbol and returns the physical field.
    pub fn apply<F: Fn(usize) -> C64>(&self, spec: &[C64], sym: F) -> Vec<C64> {
        let s = spec.iter().enumerate().map(|(p, &v)| v * sym(p)).collect();
        self.inverse(s)
    }

    pub fn dz(&self, f: &[C64], j: usize) -> Vec<C64> {
        let s = self.forward(f);
        self.apply(&s, |p| self.sym_dz(j, p))
    }

    pub fn dzbar(&self, f: &[C64], j: usize) -> Vec<C64> {
        let s = self.forward(f);
        self.apply(&s, |p| self.sym_dzbar(j, p))
    }

    /// `d_j dbar_k f` from a precomputed spectrum.
    pub fn ddbar_spec(&self, spec: &[C64], j: usize, k: usize) -> Vec<C64> {
        self.apply(spec, |p| self.sym_dz(j, p) * self.sym_dzbar(k, p))
    }

    /// Complex Hessian `H[k*n + j] = d_j dbar_k f` of a real field, `n = complex_dim`.
    ///
    /// This is the coefficient matrix of `i ddbar f`, laid out like a metric `g_{kbar j}`.
    pub fn complex_hessian(&self, f: &[f64]) -> Vec<Vec<C64>> {
        let n = self.grid.complex_dim();
        let spec = self.forward_real(f);
        let mut out = vec![Vec::new(); n * n];
        for k in 0..n {
            for j in 0..n {
                if j < k {
                    out[k * n + j] = out[j * n + k].iter().map(|v: &C64| v.conj()).collect();
                } else {
                    let mut h = self.ddbar_spec(&spec, j, k);
                    if j == k {
                        h.iter_mut().for_each(|v| v.im = 0.0);
                    }
                    out[k * n + j] = h;
                }
            }
        }
        out
    }

    /// Real derivative along one axis.
    pub fn dx(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let s = self.forward_real(f);
        let v = self.apply(&s, |p| C64::new(0.0, self.k(axis, p)));
        v.into_iter().map(|c| c.re).collect()
    }

    /// Euclidean Laplacian `sum_a d_a^2`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let s = self.forward_real(f);
        let d = self.grid.dim();
        let v = self.apply(&s, |p| {
            let k2: f64 = (0..d).map(|a| self.k(a, p).powi(2)).sum();
            C64::new(-k2, 0.0)
        });
        v.into_iter().map(|c| c.re).collect()
    }

    /// Largest `|k|^2` over the grid, the spectral radius of `-laplacian`.
    pub fn laplacian_radius(&self) -> f64 {
        self.kd
            .iter()
            .map(|ks| ks.iter().fold(0.0_f64, |m, k| m.max(k * k)))
            .sum()
    }

    /// Complex Laplacian `sum_j d_j dbar_j`, one quarter of the Euclidean one.
    pub fn complex_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut l = self.laplacian(f);
        l.iter_mut().for_each(|v| *v *= 0.25);
        l
    }

    fn padded(&self) -> &(FftNd, Vec<Option<usize>>) {
        self.padded.get_or_init(|| {
            let g = &self.grid;
            let pshape: Vec<usize> = g.shape().iter().map(|&n| if n > 1 { 3 * n / 2 } else { 1 }).collect();
            let map = (0..g.len())
                .map(|p| {
                    let mut q = 0usize;
                    for a in 0..g.dim() {
                        let n = g.shape()[a];
                        let i = g.axis_index(p, a);
                        if n > 1 && 2 * i == n {
                            return None;
                        }
                        let m = g.mode(a, i);
                        let pm = if m >= 0 {
                            m as usize
                        } else {
                            (pshape[a] as i64 + m) as usize
                        };
                        q = q * pshape[a] + pm;
                    }
                    Some(q)
                })
                .collect();
            (FftNd::new(&pshape), map)
        })
    }

    /// Product of two real fields with 3/2-rule zero padding.
    pub fn dealiased_product(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (pfft, map) = self.padded();
        let ratio = pfft.len as f64 / self.len() as f64;
        let lift = |f: &[f64]| {
            let s = self.forward_real(f);
            let mut big = vec![C64::default(); pfft.len];
            for (p, q) in map.iter().enumerate() {
                if let Some(q) = q {
                    big[*q] = s[p] * ratio;
                }
            }
            pfft.transform(&mut big, true);
            big
        };
        let fa = lift(a);
        let fb = lift(b);
        let mut prod: Vec<C64> = fa.iter().zip(&fb).map(|(x, y)| C64::new(x.re * y.re, 0.0)).collect();
        pfft.transform(&mut prod, false);
        let mut small = vec![C64::default(); self.len()];
        for (p, q) in map.iter().enumerate() {
            if let Some(q) = q {
                small[p] = prod[*q] / ratio;
            }
        }
        self.inverse_real(small)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::max_abs;

    #[test]
    fn fft_round_trip() {
        let g = PeriodicGrid::torus_shape(&[4, 1, 8]).unwrap();
        let sp = Spectral::new(&g);
        let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = sp.inverse_real(sp.forward_real(&f));
        let err = f.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn dz_of_single_mode() {
        let g = PeriodicGrid::torus(2, 8).unwrap();
        let sp = Spectral::new(&g);
        let f: Vec<C64> = (0..g.len())
            .map(|p| {
                let x = g.coords(p);
                C64::new(0.0, x[0] + x[1]).exp()
            })
            .collect();
        let d = sp.dz(&f, 0);
        let factor = C64::new(0.5, 0.5);
        let err = d
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - factor * b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn dzbar_ignores_other_coordinate() {
        let g = PeriodicGrid::torus(4, 8).unwrap();
        let sp = Spectral::new(&g);
        let f: Vec<C64> = (0..g.len())
            .map(|p| {
                let x = g.coords(p);
                C64::new((x[2] - 2.0 * x[3]).cos(), x[3].sin())
            })
            .collect();
        let d = sp.dzbar(&f, 0);
        assert!(d.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn mixed_symbol_is_quarter_laplacian() {
        let g = PeriodicGrid::torus(2, 8).unwrap();
        let sp = Spectral::new(&g);
        for p in 0..g.len() {
            let kx = sp.k(0, p);
            let ky = sp.k(1, p);
            let s = sp.sym_dz(0, p) * sp.sym_dzbar(0, p);
            assert!((s + C64::new(0.25 * (kx * kx + ky * ky), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = PeriodicGrid::torus(2, 16).unwrap();
        let sp = Spectral::new(&g);
        let f = g.sample(|x| (2.0 * x[0] + 3.0 * x[1]).cos());
        let l = sp.laplacian(&f);
        let err: Vec<f64> = l.iter().zip(&f).map(|(a, b)| a + 13.0 * b).collect();
        assert!(max_abs(&err) < 1e-11);
    }

    #[test]
    fn dealiased_product_exact_for_resolved_modes() {
        let g = PeriodicGrid::torus(2, 16).unwrap();
        let sp = Spectral::new(&g);
        let a = g.sample(|x| x[0].cos() + 0.5 * (2.0 * x[1]).sin());
        let b = g.sample(|x| (3.0 * x[0] - x[1]).cos());
        let p = sp.dealiased_product(&a, &b);
        let exact: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let err: Vec<f64> = p.iter().zip(&exact).map(|(x, y)| x - y).collect();
        assert!(max_abs(&err) < 1e-12);
    }
}
