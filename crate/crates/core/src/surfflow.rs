//! Reduction of the anomaly flow on fibrations over a Riemann surface to a
//! scalar flow for `e^f`, posed on a periodic grid with prescribed curvature.
//!
//! `Lap` below is the Laplacian of the background metric `ghat |dx|^2`,
//! `Lap = ghat^{-1} (d_x^2 + d_y^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::integrate::snap;
use crate::numerics::{conjugate_gradient, PeriodicGrid, Spectral, StepControl, Stepper, System};

/// Collapse is declared when `sup e^{-2f}` exceeds this value...
pub const COLLAPSE_SUP: f64 = 1e6;
/// ...or the mass drops below this fraction of its initial value.
pub const COLLAPSE_MASS_FRACTION: f64 = 1e-8;
/// Tolerance on `|v|^2 - 1` for the unit vector field.
pub const UNIT_VECTOR_TOL: f64 = 1e-12;

/// Background data: grid, conformal factor `ghat`, curvature `kappa <= 0`,
/// slope `alpha' > 0` and an optional unit vector field `(a, b, c)`.
#[derive(Debug)]
pub struct SurfaceScenario {
    sp: Spectral,
    pub ghat: Vec<f64>,
    pub kappa: Vec<f64>,
    pub alpha: f64,
    pub vector: Option<[Vec<f64>; 3]>,
}

impl SurfaceScenario {
    pub fn new(
        grid: &PeriodicGrid,
        ghat: Vec<f64>,
        kappa: Vec<f64>,
        alpha: f64,
        vector: Option<[Vec<f64>; 3]>,
    ) -> Result<Self> {
        if grid.dim() > 2 {
            return Err(CoreError::InvalidGrid("surface flow needs a 1-d or 2-d grid".into()));
        }
        let n = grid.len();
        if ghat.len() != n || kappa.len() != n {
            return Err(CoreError::Contract("field length does not match grid".into()));
        }
        if !(alpha > 0.0) {
            return Err(CoreError::Contract(format!("alpha' must be positive, got {alpha}")));
        }
        if let Some(i) = ghat.iter().position(|&g| !(g > 0.0)) {
            return Err(CoreError::Contract(format!("background factor not positive at {i}")));
        }
        if let Some(i) = kappa.iter().position(|&k| !(k <= 0.0)) {
            return Err(CoreError::Contract(format!("curvature positive at grid point {i}")));
        }
        if let Some(v) = &vector {
            if v.iter().any(|c| c.len() != n) {
                return Err(CoreError::Contract("vector field has wrong length".into()));
            }
            for i in 0..n {
                let s = v[0][i].powi(2) + v[1][i].powi(2) + v[2][i].powi(2);
                if (s - 1.0).abs() > UNIT_VECTOR_TOL {
                    return Err(CoreError::Contract(format!("vector field not unit at {i}")));
                }
            }
        }
        Ok(Self {
            sp: Spectral::new(grid),
            ghat,
            kappa,
            alpha,
            vector,
        })
    }

    /// Flat background with constant curvature `-k`.
    pub fn uniform(grid: &PeriodicGrid, k: f64, alpha: f64) -> Result<Self> {
        Self::new(grid, vec![1.0; grid.len()], vec![-k; grid.len()], alpha, None)
    }

    /// Flat background with `kappa = -k0 (1 + amp prod_a cos x_a)`, `0 <= amp < 1`.
    pub fn bump(grid: &PeriodicGrid, k0: f64, amp: f64, alpha: f64) -> Result<Self> {
        let kappa = grid.sample(|x| -k0 * (1.0 + amp * x.iter().map(|v| v.cos()).product::<f64>()));
        Self::new(grid, vec![1.0; grid.len()], kappa, alpha, None)
    }

    /// Compatible datum `(cos m x, sin m x, 0)` with `kappa = -m^2`.
    pub fn trigonometric(grid: &PeriodicGrid, m: f64, alpha: f64) -> Result<Self> {
        let a = grid.sample(|x| (m * x[0]).cos());
        let b = grid.sample(|x| (m * x[0]).sin());
        let n = grid.len();
        Self::new(grid, vec![1.0; n], vec![-m * m; n], alpha, Some([a, b, vec![0.0; n]]))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.sp.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    /// `Lap v = ghat^{-1} Delta v`.
    pub fn laplacian(&self, v: &[f64]) -> Vec<f64> {
        let mut l = self.sp.laplacian(v);
        for (x, g) in l.iter_mut().zip(&self.ghat) {
            *x /= g;
        }
        l
    }

    /// Integral against the background area form.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        let w: Vec<f64> = v.iter().zip(&self.ghat).map(|(a, g)| a * g).collect();
        self.grid().integral(&w)
    }

    /// `sup |Lap c - kappa c|` for each component of the vector field.
    pub fn compatibility_residuals(&self) -> Option<[f64; 3]> {
        let v = self.vector.as_ref()?;
        let mut out = [0.0; 3];
        for (o, c) in out.iter_mut().zip(v) {
            let l = self.laplacian(c);
            *o = l
                .iter()
                .zip(c)
                .zip(&self.kappa)
                .fold(0.0_f64, |m, ((l, c), k)| m.max((l - k * c).abs()));
        }
        Some(out)
    }

    /// `u = e^f + (alpha'/2) kappa e^{-f}`.
    pub fn u_of(&self, ef: &[f64]) -> Vec<f64> {
        ef.iter()
            .zip(&self.kappa)
            .map(|(e, k)| e + 0.5 * self.alpha * k / e)
            .collect()
    }

    /// Inverse substitution `2 e^f = u + sqrt(u^2 - 2 alpha' kappa)`.
    pub fn ef_of_u(&self, u: &[f64]) -> Result<Vec<f64>> {
        u.iter()
            .zip(&self.kappa)
            .enumerate()
            .map(|(i, (u, k))| {
                let disc = u * u - 2.0 * self.alpha * k;
                if disc < 0.0 {
                    return Err(CoreError::Domain(format!("u^2 - 2 alpha' kappa < 0 at {i}")));
                }
                let ef = 0.5 * (u + disc.sqrt());
                if !(ef > 0.0) {
                    return Err(CoreError::PositivityLost { min_eig: ef, index: i });
                }
                Ok(ef)
            })
            .collect()
    }

    fn check_positive(&self, ef: &[f64]) -> Result<()> {
        match ef.iter().enumerate().find(|(_, &e)| !(e > 0.0)) {
            Some((i, &e)) => Err(CoreError::PositivityLost { min_eig: e, index: i }),
            None => Ok(()),
        }
    }

    /// Rate of `e^f`: `1/2 (Lap u - kappa u)`.
    pub fn rhs_f(&self, ef: &[f64]) -> Result<Vec<f64>> {
        self.check_positive(ef)?;
        let u = self.u_of(ef);
        let l = self.laplacian(&u);
        Ok(l.iter()
            .zip(&u)
            .zip(&self.kappa)
            .map(|((l, u), k)| 0.5 * (l - k * u))
            .collect())
    }

    /// Rate of `u`: `1/2 (1 - (alpha'/2) kappa e^{-2f}) (Lap u - kappa u)`.
    pub fn rhs_u(&self, u: &[f64]) -> Result<Vec<f64>> {
        let ef = self.ef_of_u(u)?;
        let l = self.laplacian(u);
        Ok((0..u.len())
            .map(|i| {
                let w = 1.0 - 0.5 * self.alpha * self.kappa[i] / (ef[i] * ef[i]);
                0.5 * w * (l[i] - self.kappa[i] * u[i])
            })
            .collect())
    }

    /// Spectral radius bound of the linearized rate.
    fn stiffness_of(&self, ef: &[f64]) -> f64 {
        let mut d = 0.0_f64;
        for i in 0..ef.len() {
            let w = 1.0 - 0.5 * self.alpha * self.kappa[i] / (ef[i] * ef[i]);
            d = d.max(0.5 * w / self.ghat[i]);
        }
        let kmax = self.kappa.iter().fold(0.0_f64, |m, k| m.max(-k));
        d * self.sp.laplacian_radius() + kmax
    }

    /// `I(u) = int |grad u|^2 + int kappa u^2 ghat`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let l = self.sp.laplacian(u);
        let grad2: Vec<f64> = u.iter().zip(&l).map(|(u, l)| -u * l).collect();
        let pot: Vec<f64> = u.iter().zip(&self.kappa).map(|(u, k)| k * u * u).collect();
        self.grid().integral(&grad2) + self.integrate(&pot)
    }

    pub fn diagnostics(&self, ef: &[f64]) -> Diagnostics {
        let mass = self.integrate(ef);
        let v = self.vector.as_ref().map(|v| {
            let mut out = [0.0; 3];
            for (o, c) in out.iter_mut().zip(v) {
                let w: Vec<f64> = ef.iter().zip(c).map(|(e, c)| e * c).collect();
                *o = self.integrate(&w);
            }
            out
        });
        Diagnostics {
            mass,
            energy: self.energy(&self.u_of(ef)),
            v,
            sup_e_minus_2f: ef.iter().fold(0.0_f64, |m, e| m.max(1.0 / (e * e))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `int e^f ghat`.
    pub mass: f64,
    pub energy: f64,
    pub v: Option<[f64; 3]>,
    pub sup_e_minus_2f: f64,
}

impl Diagnostics {
    pub fn v_norm(&self) -> Option<f64> {
        self.v.map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
    }
}

/// The flow for `e^f`.
pub struct FSystem<'a>(pub &'a SurfaceScenario);

impl System for FSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy.copy_from_slice(&self.0.rhs_f(y)?);
        Ok(())
    }

    fn admissible(&self, y: &[f64]) -> bool {
        y.iter().all(|&e| e > 0.0)
    }

    fn stiffness(&self, y: &[f64]) -> Option<f64> {
        Some(self.0.stiffness_of(y))
    }
}

/// The same flow written for `u`.
pub struct USystem<'a>(pub &'a SurfaceScenario);

impl System for USystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy.copy_from_slice(&self.0.rhs_u(y)?);
        Ok(())
    }

    fn stiffness(&self, y: &[f64]) -> Option<f64> {
        self.0.ef_of_u(y).ok().map(|ef| self.0.stiffness_of(&ef))
    }
}

/// Closed-form collapse time for constant data `e^{f0}` under `kappa = -k`,
/// or `None` at or above the threshold `e^{2f} = alpha' k / 2`.
pub fn collapse_time(k: f64, alpha: f64, ef0: f64) -> Option<f64> {
    let a = 0.5 * alpha * k;
    let s0 = ef0 * ef0;
    (s0 < a && k > 0.0).then(|| (a / (a - s0)).ln() / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    /// `d/dt int e^f ghat` evaluated from the right-hand side.
    pub mass_rate: f64,
    pub energy: f64,
    pub v: Option<[f64; 3]>,
    pub sup_e_minus_2f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Extended,
    Collapsed,
    LargeDataConverging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceOptions {
    pub t_end: f64,
    pub control: StepControl,
    /// Fraction of the run after which the profile is compared with the final one.
    pub profile_window: f64,
    /// Cosine-similarity gap under which the profile counts as stabilized.
    pub profile_tol: f64,
    /// Start time, for resumed runs.
    pub t0: f64,
    pub max_steps: Option<usize>,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            control: StepControl {
                rtol: 1e-9,
                atol: 1e-12,
                ..StepControl::default()
            },
            profile_window: 0.9,
            profile_tol: 1e-6,
            t0: 0.0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRun {
    pub records: Vec<SurfaceRecord>,
    pub regime: Regime,
    pub final_ef: Vec<f64>,
    pub t_final: f64,
    pub collapse_time: Option<f64>,
    /// Step size proposed for the next step.
    pub next_dt: f64,
}

fn record(sc: &SurfaceScenario, t: f64, dt: f64, ef: &[f64]) -> Result<SurfaceRecord> {
    let d = sc.diagnostics(ef);
    Ok(SurfaceRecord {
        t,
        dt,
        mass: d.mass,
        mass_rate: sc.integrate(&sc.rhs_f(ef)?),
        energy: d.energy,
        v: d.v,
        sup_e_minus_2f: d.sup_e_minus_2f,
    })
}

/// Normalized profile `e^{2f} / int e^{2f} ghat`.
pub fn profile(sc: &SurfaceScenario, ef: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = ef.iter().map(|e| e * e).collect();
    let m = sc.integrate(&s);
    s.into_iter().map(|v| v / m).collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Integrates the flow for `e^f`, recording diagnostics at every accepted step.
pub fn evolve(sc: &SurfaceScenario, ef0: &[f64], opts: &SurfaceOptions) -> Result<SurfaceRun> {
    sc.check_positive(ef0)?;
    let sys = FSystem(sc);
    let mut y = ef0.to_vec();
    let mut t = opts.t0;
    let mut records = vec![record(sc, t, 0.0, &y)?];
    let mass0 = records[0].mass;
    let mut stepper = Stepper::new(opts.control);
    let mut collapsed = None;
    let t_window = opts.t0 + opts.profile_window * (opts.t_end - opts.t0);
    let mut window_profile = None;
    while t < opts.t_end {
        if opts.max_steps.is_some_and(|m| records.len() > m) {
            break;
        }
        match stepper.step(&sys, t, &mut y, opts.t_end) {
            Ok(rec) => {
                t = snap(rec.t, opts.t_end);
                let r = record(sc, t, rec.dt, &y)?;
                let done = r.sup_e_minus_2f > COLLAPSE_SUP || r.mass < COLLAPSE_MASS_FRACTION * mass0;
                records.push(r);
                if done {
                    collapsed = Some(t);
                    break;
                }
                if window_profile.is_none() && t >= t_window {
                    window_profile = Some(profile(sc, &y));
                }
            }
            Err(CoreError::StepUnderflow { t: tu, .. }) => {
                collapsed = Some(tu);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let regime = if collapsed.is_some() {
        Regime::Collapsed
    } else {
        let stable = window_profile
            .map(|p| 1.0 - cosine_similarity(&p, &profile(sc, &y)) < opts.profile_tol)
            .unwrap_or(false);
        let grew = records.last().unwrap().mass > mass0;
        if stable && grew {
            Regime::LargeDataConverging
        } else {
            Regime::Extended
        }
    };
    Ok(SurfaceRun {
        records,
        regime,
        final_ef: y,
        t_final: t,
        collapse_time: collapsed,
        next_dt: stepper.dt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Smallest `bound - d/dt mass` over the records.
    pub worst_margin: f64,
    /// The bound carries no information when `kappa = 0`.
    pub vacuous: bool,
}

/// Checks `d/dt M <= (|kappa|_inf / 2) M - (alpha'/4) (int -kappa)^2 / M` on each record.
pub fn ode_bound_check(sc: &SurfaceScenario, records: &[SurfaceRecord]) -> BoundReport {
    let kinf = sc.kappa.iter().fold(0.0_f64, |m, k| m.max(k.abs()));
    let neg: Vec<f64> = sc.kappa.iter().map(|k| -k).collect();
    let ik = sc.integrate(&neg);
    let worst = records
        .iter()
        .map(|r| 0.5 * kinf * r.mass - 0.25 * sc.alpha * ik * ik / r.mass - r.mass_rate)
        .fold(f64::INFINITY, f64::min);
    BoundReport {
        worst_margin: worst,
        vacuous: kinf == 0.0,
    }
}

/// Largest `Delta I` between consecutive records (non-positive for a monotone run).
pub fn max_energy_increase(records: &[SurfaceRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    /// Positive eigenfunction with `int q^2 ghat = 1`.
    pub q: Vec<f64>,
    pub lambda: f64,
    /// `sup |(-Lap + kappa) q - lambda q|` with the potential in place of `-kappa`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

/// Lowest eigenpair of `-Lap - |grad phi|^2`, with `|grad phi|^2 = -kappa`
/// unless `potential` overrides it, by shifted inverse iteration.
pub fn principal_eigenpair(sc: &SurfaceScenario, potential: Option<&[f64]>, opts: &EigenOptions) -> Result<Eigenpair> {
    let n = sc.grid().len();
    let v: Vec<f64> = match potential {
        Some(p) => p.iter().map(|p| -p).collect(),
        None => sc.kappa.clone(),
    };
    let sigma = v.iter().fold(f64::INFINITY, |m, &x| m.min(x)) - 1.0;
    let shifted: Vec<f64> = v.iter().zip(&sc.ghat).map(|(v, g)| g * (v - sigma)).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let l = sc.sp.laplacian(x);
        (0..n).map(|i| -l[i] + shifted[i] * x[i]).collect()
    };
    let normalize = |q: &mut Vec<f64>| {
        let sq: Vec<f64> = q.iter().map(|x| x * x).collect();
        let s = sc.integrate(&sq).sqrt();
        let sign = if q.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        q.iter_mut().for_each(|x| *x *= sign / s);
    };
    let mut q = vec![1.0; n];
    normalize(&mut q);
    let mut x = q.clone();
    let mut last = (0.0, f64::INFINITY);
    for it in 1..=opts.max_iter {
        let b: Vec<f64> = q.iter().zip(&sc.ghat).map(|(q, g)| q * g).collect();
        let (sol, _) = conjugate_gradient(&apply, &b, &x, 1e-14, 10 * n)?;
        x = sol;
        q = x.clone();
        normalize(&mut q);
        let lq = sc.laplacian(&q);
        let op: Vec<f64> = (0..n).map(|i| -lq[i] + v[i] * q[i]).collect();
        let num: Vec<f64> = op.iter().zip(&q).map(|(a, b)| a * b).collect();
        let lambda = sc.integrate(&num);
        let residual = op
            .iter()
            .zip(&q)
            .fold(0.0_f64, |m, (a, b)| m.max((a - lambda * b).abs()));
        last = (lambda, residual);
        if residual < opts.tol {
            return Ok(Eigenpair {
                q,
                lambda,
                residual,
                iterations: it,
            });
        }
    }
    Err(CoreError::NoConvergence {
        iterations: opts.max_iter,
        residual: last.1,
    })
}
