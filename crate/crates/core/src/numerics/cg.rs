use crate::error::{CoreError, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive-definite operator.
///
/// Stops when `|r| <= tol * |b|`; returns the solution and the iteration count.
pub fn conjugate_gradient<A: Fn(&[f64]) -> Vec<f64>>(
    apply: A,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * dot(b, b).sqrt();
    for it in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok((x, it));
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        Ok((x, max_iter))
    } else {
        Err(CoreError::NoConvergence {
            iterations: max_iter,
            residual: rr.sqrt(),
        })
    }
}
