//! Browser bindings for three small experiments: a Lie-group trajectory, the
//! linearization at a stationary metric, and surface-flow collapse.

use anomaly_core::lieflow::{self, EvolveOptions, GauduchonParam, Group, LieAlgebra, StationarySet};
use anomaly_core::numerics::PeriodicGrid;
use anomaly_core::surfflow::{self, SurfaceOptions, SurfaceScenario};
use anomaly_core::CoreError;
use num_complex::Complex64 as C64;
use wasm_bindgen::prelude::*;

fn js(e: CoreError) -> JsError {
    JsError::new(&e.to_string())
}

fn param(alpha_tau: f64) -> Result<GauduchonParam, JsError> {
    GauduchonParam::with_alpha_tau(1.0, alpha_tau).map_err(js)
}

/// Sampled Lie-flow trajectory from a diagonal start.
#[wasm_bindgen]
pub struct LieRun {
    samples: Vec<f64>,
    classification: String,
}

#[wasm_bindgen]
impl LieRun {
    /// Flat rows of `[t, lambda1, lambda2, lambda3, |rhs|]`.
    pub fn samples(&self) -> Vec<f64> {
        self.samples.clone()
    }

    pub fn classification(&self) -> String {
        self.classification.clone()
    }
}

#[wasm_bindgen]
pub fn lie_flow(group: &str, alpha_tau: f64, diag: Vec<f64>, t_end: f64) -> Result<LieRun, JsError> {
    let group: Group = group.parse().map_err(js)?;
    let [a, b, c] = <[f64; 3]>::try_from(diag).map_err(|_| JsError::new("need three diagonal entries"))?;
    let opts = EvolveOptions {
        t_end,
        sample_dt: t_end / 200.0,
        ..Default::default()
    };
    let traj = lieflow::evolve(
        &lieflow::diag([a, b, c]),
        &LieAlgebra::standard(group),
        param(alpha_tau)?,
        &opts,
    )
    .map_err(js)?;
    let samples = traj
        .samples
        .iter()
        .flat_map(|s| [s.t, s.eigenvalues[0], s.eigenvalues[1], s.eigenvalues[2], s.rhs_norm])
        .collect();
    Ok(LieRun {
        samples,
        classification: format!("{:?}", traj.classification),
    })
}

/// Jacobian eigenvalues `[re0, im0, re1, im1, ...]` at a stationary metric
/// of `group` (for the solvable family, the member with unit g11 and g22).
#[wasm_bindgen]
pub fn linearize(group: &str, alpha_tau: f64) -> Result<Vec<f64>, JsError> {
    let group: Group = group.parse().map_err(js)?;
    let g = match lieflow::stationary_points(group, alpha_tau) {
        StationarySet::Point(g) => g,
        StationarySet::Family(f) => f.member(1.0, 1.0, C64::default(), C64::default()).map_err(js)?,
        StationarySet::Cone => lieflow::diag([1.0; 3]),
        StationarySet::Empty { reason } => return Err(JsError::new(&reason)),
    };
    let ev = lieflow::linearization_spectrum(&g, &LieAlgebra::standard(group), param(alpha_tau)?).map_err(js)?;
    Ok(ev.iter().flat_map(|z| [z.re, z.im]).collect())
}

/// Surface flow on an `n x n` torus with `kappa = -k (1 + amp cos x cos y)`
/// and constant start `e^f = ef0`. Returns `[t_final, collapse time or NaN,
/// closed-form collapse time for amp = 0 or NaN]`.
#[wasm_bindgen]
pub fn surface_collapse(
    n: usize,
    k: f64,
    amp: f64,
    alpha_prime: f64,
    ef0: f64,
    t_end: f64,
) -> Result<Vec<f64>, JsError> {
    let grid = PeriodicGrid::torus(2, n).map_err(js)?;
    let sc = SurfaceScenario::bump(&grid, k, amp, alpha_prime).map_err(js)?;
    let opts = SurfaceOptions {
        t_end,
        ..Default::default()
    };
    let run = surfflow::evolve(&sc, &vec![ef0; grid.len()], &opts).map_err(js)?;
    let closed = surfflow::collapse_time(k, alpha_prime, ef0).filter(|_| amp == 0.0);
    Ok(vec![
        run.t_final,
        run.collapse_time.unwrap_or(f64::NAN),
        closed.unwrap_or(f64::NAN),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_surface_collapse_matches_closed_form() {
        let r = surface_collapse(8, 1.0, 0.0, 1.0, 0.5, 2.0).unwrap();
        let expect = 2f64.ln();
        assert!((r[1] - expect).abs() < 1e-2 * expect, "{r:?}");
        assert_eq!(r[2], expect);
    }

    #[test]
    fn sl2c_spectrum_has_both_signs() {
        let ev = linearize("sl2c", 2.0).unwrap();
        let re: Vec<f64> = ev.chunks(2).map(|p| p[0]).collect();
        assert!(re.iter().any(|&x| x > 1e-8) && re.iter().any(|&x| x < -1e-8));
    }

    #[test]
    fn heisenberg_trajectory_is_sampled() {
        let run = lie_flow("nilpotent", 1.0, vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let s = run.samples();
        assert_eq!(s.len() % 5, 0);
        assert!(s.len() / 5 > 100);
        assert_eq!(s[0], 0.0);
    }
}
