use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CoreError, Result};

/// Uniform periodic grid on a real torus of dimension `d`.
///
/// Real axes are paired into complex coordinates as `z_k = x_{2k} + i x_{2k+1}`.
/// Storage is row-major with the last axis fastest. An axis may carry a single
/// point, which makes fields independent of that coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    shape: Vec<usize>,
    lengths: Vec<f64>,
}

impl PeriodicGrid {
    pub const MAX_DIM: usize = 8;

    pub fn new(shape: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > Self::MAX_DIM {
            return Err(CoreError::InvalidGrid(format!(
                "dimension {} outside 1..={}",
                shape.len(),
                Self::MAX_DIM
            )));
        }
        if shape.len() != lengths.len() {
            return Err(CoreError::InvalidGrid("shape and lengths differ in length".into()));
        }
        for (&n, &l) in shape.iter().zip(&lengths) {
            if n == 0 || !n.is_power_of_two() {
                return Err(CoreError::InvalidGrid(format!(
                    "points per axis must be a power of two, got {n}"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(CoreError::InvalidGrid(format!("bad period length {l}")));
            }
        }
        Ok(Self { shape, lengths })
    }

    /// Square torus `[0, 2pi)^d` with `n` points per axis.
    pub fn torus(dim: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; dim], vec![2.0 * PI; dim])
    }

    /// Torus `[0, 2pi)^d` with an explicit shape.
    pub fn torus_shape(shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), vec![2.0 * PI; shape.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Number of complex coordinates; an odd trailing axis pairs with a phantom axis.
    pub fn complex_dim(&self) -> usize {
        self.shape.len().div_ceil(2)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.shape[axis]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lengths[axis] * i as f64 / self.shape[axis] as f64
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.coord(a, self.axis_index(flat, a)))
            .collect()
    }

    /// Signed mode number along `axis` for array index `i`.
    pub fn mode(&self, axis: usize, i: usize) -> i64 {
        let n = self.shape[axis];
        if i < n.div_ceil(2) {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Wavenumber used in first derivatives; the Nyquist mode is dropped.
    pub fn deriv_wavenumber(&self, axis: usize, i: usize) -> f64 {
        let n = self.shape[axis];
        if n > 1 && 2 * i == n {
            return 0.0;
        }
        2.0 * PI / self.lengths[axis] * self.mode(axis, i) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.shape
            .iter()
            .zip(&self.lengths)
            .map(|(&n, &l)| l / n as f64)
            .product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Lebesgue integral over the torus (exact for trigonometric polynomials
    /// resolved by the grid).
    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    /// Samples `f` at every grid point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|p| {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = self.coord(a, self.axis_index(p, a));
                }
                f(&x)
            })
            .collect()
    }

    /// Same torus with `factor` times as many points on every non-trivial axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let shape = self.shape.iter().map(|&n| if n > 1 { n * factor } else { 1 }).collect();
        Self::new(shape, self.lengths.clone())
    }
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(PeriodicGrid::new(vec![6], vec![1.0]).is_err());
        assert!(PeriodicGrid::new(vec![8, 8], vec![1.0]).is_err());
        assert!(PeriodicGrid::new(vec![8], vec![-1.0]).is_err());
        assert!(PeriodicGrid::new(vec![8, 1], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn flat_index_round_trip() {
        let g = PeriodicGrid::torus_shape(&[4, 2, 8]).unwrap();
        let p = 3 * 16 + 1 * 8 + 5;
        assert_eq!(g.axis_index(p, 0), 3);
        assert_eq!(g.axis_index(p, 1), 1);
        assert_eq!(g.axis_index(p, 2), 5);
        assert_eq!(g.complex_dim(), 2);
    }

    #[test]
    fn nyquist_dropped() {
        let g = PeriodicGrid::torus(1, 8).unwrap();
        assert_eq!(g.deriv_wavenumber(0, 4), 0.0);
        assert_eq!(g.deriv_wavenumber(0, 7), -1.0);
        assert_eq!(g.deriv_wavenumber(0, 3), 3.0);
    }

    #[test]
    fn integral_of_constant_is_volume() {
        let g = PeriodicGrid::torus(2, 8).unwrap();
        let f = vec![1.0; g.len()];
        assert!((g.integral(&f) - g.volume()).abs() < 1e-12);
    }
}
