//! Exterior algebra on the six generators `e^1, e^2, e^3, ebar^1, ebar^2, ebar^3`
//! of left-invariant complex forms on a three-dimensional complex Lie group.
//!
//! A form is a coefficient array indexed by the bit mask of its generators
//! (bits 0..2 for `e^k`, bits 3..5 for `ebar^k`), monomials written in
//! increasing generator order.

use num_complex::Complex64 as C64;

use super::algebra::Constants;

pub type Form = [C64; 64];

pub const ZERO: Form = [C64::new(0.0, 0.0); 64];

/// Mask of the full top-degree monomial.
pub const TOP: usize = 63;

pub fn generator(i: usize) -> Form {
    let mut f = ZERO;
    f[1 << i] = C64::new(1.0, 0.0);
    f
}

/// `(p, q)` bidegree of a monomial.
pub fn bidegree(mask: usize) -> (u32, u32) {
    ((mask & 7).count_ones(), (mask >> 3).count_ones())
}

/// Sign of reordering `a ^ b` into increasing order (disjoint masks).
fn reorder_sign(a: usize, b: usize) -> f64 {
    let mut s = 0;
    for i in 0..6 {
        if a >> i & 1 == 1 {
            s += (b & ((1 << i) - 1)).count_ones();
        }
    }
    if s % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

pub fn wedge(a: &Form, b: &Form) -> Form {
    let mut out = ZERO;
    for (ma, ca) in a.iter().enumerate() {
        if *ca == C64::default() {
            continue;
        }
        for (mb, cb) in b.iter().enumerate() {
            if ma & mb != 0 || *cb == C64::default() {
                continue;
            }
            out[ma | mb] += reorder_sign(ma, mb) * ca * cb;
        }
    }
    out
}

pub fn axpy(out: &mut Form, a: C64, x: &Form) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

pub fn scale(f: &Form, a: C64) -> Form {
    let mut out = *f;
    out.iter_mut().for_each(|v| *v *= a);
    out
}

/// Projection onto the `(p, q)` component.
pub fn part(f: &Form, p: u32, q: u32) -> Form {
    let mut out = ZERO;
    for (m, v) in f.iter().enumerate() {
        if bidegree(m) == (p, q) {
            out[m] = *v;
        }
    }
    out
}

pub fn max_abs(f: &Form) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Exterior derivative of left-invariant forms determined by the structure
/// constants through `de^d = -1/2 c^d_{ab} e^a ^ e^b`.
#[derive(Debug, Clone)]
pub struct Exterior {
    dgen: [Form; 6],
}

impl Exterior {
    pub fn new(c: &Constants) -> Self {
        let mut dgen = [ZERO; 6];
        for d in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let v = c[d][a][b];
                    if v == C64::default() {
                        continue;
                    }
                    let w = wedge(&generator(a), &generator(b));
                    axpy(&mut dgen[d], -0.5 * v, &w);
                    let wb = wedge(&generator(3 + a), &generator(3 + b));
                    axpy(&mut dgen[3 + d], -0.5 * v.conj(), &wb);
                }
            }
        }
        Self { dgen }
    }

    pub fn d(&self, f: &Form) -> Form {
        let mut out = ZERO;
        for (m, cf) in f.iter().enumerate() {
            if *cf == C64::default() {
                continue;
            }
            let gens: Vec<usize> = (0..6).filter(|i| m >> i & 1 == 1).collect();
            for (pos, &g) in gens.iter().enumerate() {
                let left: usize = gens[..pos].iter().map(|h| 1 << h).sum();
                let right: usize = gens[pos + 1..].iter().map(|h| 1 << h).sum();
                let mut lf = ZERO;
                lf[left] = C64::new(1.0, 0.0);
                let mut rf = ZERO;
                rf[right] = C64::new(1.0, 0.0);
                let term = wedge(&wedge(&lf, &self.dgen[g]), &rf);
                let sign = if pos % 2 == 1 { -1.0 } else { 1.0 };
                axpy(&mut out, cf * sign, &term);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedge_is_graded_commutative() {
        let a = generator(0);
        let b = generator(4);
        let ab = wedge(&a, &b);
        let ba = wedge(&b, &a);
        assert_eq!(ab[17], -ba[17]);
        assert_eq!(wedge(&a, &a), ZERO);
    }

    #[test]
    fn d_squared_vanishes_for_heisenberg() {
        let mut c = [[[C64::default(); 3]; 3]; 3];
        c[2][0][1] = C64::new(1.0, 0.0);
        c[2][1][0] = C64::new(-1.0, 0.0);
        let ext = Exterior::new(&c);
        for i in 0..6 {
            let dd = ext.d(&ext.d(&generator(i)));
            assert!(max_abs(&dd) < 1e-15);
        }
    }
}
