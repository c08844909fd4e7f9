//! Small dense complex matrices stored row-major in slices of length `n*n`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub fn identity(n: usize) -> Vec<C64> {
    let mut m = vec![C64::default(); n * n];
    for i in 0..n {
        m[i * n + i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn mul(n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut c = vec![C64::default(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn trace(n: usize, a: &[C64]) -> C64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

pub fn adjoint(n: usize, a: &[C64]) -> Vec<C64> {
    let mut b = vec![C64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            b[j * n + i] = a[i * n + j].conj();
        }
    }
    b
}

/// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` for a numerically singular matrix.
pub fn det_inv(n: usize, a: &[C64]) -> Option<(C64, Vec<C64>)> {
    let mut m = a.to_vec();
    let mut inv = identity(n);
    let mut det = C64::new(1.0, 0.0);
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.norm()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].norm().total_cmp(&m[j * n + col].norm()))
            .unwrap();
        if m[piv * n + col].norm() <= 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        let pinv = p.inv();
        for j in 0..n {
            m[col * n + j] *= pinv;
            inv[col * n + j] *= pinv;
        }
        for i in 0..n {
            if i != col {
                let f = m[i * n + col];
                if f != C64::default() {
                    for j in 0..n {
                        let mj = m[col * n + j];
                        let ij = inv[col * n + j];
                        m[i * n + j] -= f * mj;
                        inv[i * n + j] -= f * ij;
                    }
                }
            }
        }
    }
    Some((det, inv))
}

pub fn det(n: usize, a: &[C64]) -> C64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => det_inv(n, a).map(|(d, _)| d).unwrap_or_default(),
    }
}

/// Cholesky factor `L` (lower triangular) with `A = L L^H`, or `None` if `A`
/// is not numerically positive-definite.
pub fn cholesky(n: usize, a: &[C64]) -> Option<Vec<C64>> {
    let mut l = vec![C64::default(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(n: usize, l: &[C64]) -> Vec<C64> {
    let mut x = vec![C64::default(); n * n];
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { C64::new(1.0, 0.0) } else { C64::default() };
            for k in c..i {
                s -= l[i * n + k] * x[k * n + c];
            }
            x[i * n + c] = s / l[i * n + i];
        }
    }
    x
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(n: usize, a: &[C64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}
