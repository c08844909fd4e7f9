use num_complex::Complex64 as C64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::PeriodicGrid;
use super::spectral::Spectral;

/// Counter-based generator: `(seed, stream)` fully determines the sequence.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform sample in `[0, 1)` with 53 random bits.
pub fn uniform(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_in(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(r)
}

/// Standard normal sample (Box-Muller).
pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform(r).max(f64::MIN_POSITIVE);
    let u2 = uniform(r);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Smooth real random field with Fourier support `|m_a| <= kmax` on every
/// axis, zero mean, and sup norm scaled to `amplitude`.
///
/// `kmax = None` uses the default band limit `N/4`.
pub fn band_limited_field(
    grid: &PeriodicGrid,
    seed: u64,
    stream: u64,
    amplitude: f64,
    kmax: Option<usize>,
) -> Vec<f64> {
    let sp = Spectral::new(grid);
    let mut r = rng(seed, stream);
    let mut spec = vec![C64::default(); grid.len()];
    for (p, s) in spec.iter_mut().enumerate() {
        let mut inside = true;
        let mut zero = true;
        for a in 0..grid.dim() {
            let n = grid.shape()[a];
            let km = kmax.unwrap_or(n / 4) as i64;
            let m = grid.mode(a, grid.axis_index(p, a));
            if m.abs() > km || (n > 1 && 2 * grid.axis_index(p, a) == n) {
                inside = false;
            }
            if m != 0 {
                zero = false;
            }
        }
        // Draw for every mode so the sequence does not depend on the band limit.
        let v = C64::new(normal(&mut r), normal(&mut r));
        if inside && !zero {
            *s = v;
        }
    }
    let mut f = sp.inverse_real(spec);
    let m = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        f.iter_mut().for_each(|v| *v *= amplitude / m);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_band_limited() {
        let g = PeriodicGrid::torus(2, 16).unwrap();
        let a = band_limited_field(&g, 7, 0, 0.3, None);
        let b = band_limited_field(&g, 7, 0, 0.3, None);
        let c = band_limited_field(&g, 7, 1, 0.3, None);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let m = a.iter().fold(0.0_f64, |x, v| x.max(v.abs()));
        assert!((m - 0.3).abs() < 1e-14);
        assert!(g.mean(&a).abs() < 1e-14);
        let sp = Spectral::new(&g);
        let s = sp.forward_real(&a);
        for (p, v) in s.iter().enumerate() {
            let m0 = g.mode(0, g.axis_index(p, 0)).abs();
            let m1 = g.mode(1, g.axis_index(p, 1)).abs();
            if m0 > 4 || m1 > 4 {
                assert!(v.norm() < 1e-10);
            }
        }
    }
}
