//! Anomaly flow on toric fibrations over a flat complex 2-torus, reduced to a
//! scalar flow for the conformal factor `e^u` of the base metric.
//!
//! Densities are taken relative to `omega_hat^2`; integrals use the Lebesgue
//! measure of the grid.

use std::cell::Cell;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::calculus::{Frames, Geometry, HermitianField, MetricField, TORSION_SLOTS};
use crate::error::{CoreError, Result};
use crate::numerics::integrate::snap;
use crate::numerics::random::band_limited_field;
use crate::numerics::{PeriodicGrid, Spectral, StepControl, Stepper, System};

/// Convergence certificate thresholds.
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const RATE_TOL: f64 = 1e-8;
/// Sources with `|int mu| / vol` below this count as integrable.
pub const INTEGRABILITY_TOL: f64 = 1e-12;
/// Largest admissible `|u|` before a run is reported as blown up.
pub const U_OVERFLOW: f64 = 700.0;

/// Data of the reduced flow: `rho` is a real (1,1)-form stored like a metric,
/// `mu` the density of the (2,2)-form source and `m` the initial scale.
#[derive(Debug)]
pub struct FuYauScenario {
    sp: Spectral,
    pub alpha: f64,
    pub rho: HermitianField,
    pub mu: Vec<f64>,
    pub m: f64,
}

impl FuYauScenario {
    pub fn new(grid: &PeriodicGrid, alpha: f64, rho: HermitianField, mu: Vec<f64>, m: f64) -> Result<Self> {
        if grid.dim() != 4 {
            return Err(CoreError::InvalidGrid("the reduced flow lives on a 4-d grid".into()));
        }
        if rho.n() != 2 || rho.grid() != grid {
            return Err(CoreError::Contract("rho must be a 2x2 field on the grid".into()));
        }
        if rho.hermitian_defect() > 1e-12 {
            return Err(CoreError::Contract("rho is not Hermitian".into()));
        }
        if mu.len() != grid.len() {
            return Err(CoreError::Contract("mu has wrong length".into()));
        }
        if !(m > 0.0) || !alpha.is_finite() {
            return Err(CoreError::Contract(format!(
                "need M > 0 and finite alpha', got {m}, {alpha}"
            )));
        }
        Ok(Self {
            sp: Spectral::new(grid),
            alpha,
            rho,
            mu,
            m,
        })
    }

    /// Smooth seeded data: band-limited `rho` of size `rho_amp`, and `mu` of
    /// size `mu_amp` with zero mean (so the integrability condition holds).
    pub fn smooth(grid: &PeriodicGrid, alpha: f64, m: f64, rho_amp: f64, mu_amp: f64, seed: u64) -> Result<Self> {
        let kmax = Some(2);
        let a = band_limited_field(grid, seed, 1, rho_amp, kmax);
        let b = band_limited_field(grid, seed, 2, rho_amp, kmax);
        let c = band_limited_field(grid, seed, 3, rho_amp, kmax);
        let d = band_limited_field(grid, seed, 4, rho_amp, kmax);
        let rho = HermitianField::from_points(2, grid, |x| {
            let off = C64::new(c[x], d[x]);
            vec![C64::new(a[x], 0.0), off, off.conj(), C64::new(b[x], 0.0)]
        })?;
        let mu = band_limited_field(grid, seed, 5, mu_amp, kmax);
        Self::new(grid, alpha, rho, mu, m)
    }

    /// The `alpha' = 0`, `rho = 0` specialization with source density
    /// `(|omega_1|^2 + |omega_2|^2) / 2`.
    pub fn heat(grid: &PeriodicGrid, source_sq: &[f64], m: f64) -> Result<Self> {
        let mu = source_sq.iter().map(|s| 0.5 * s).collect();
        Self::new(grid, 0.0, HermitianField::zeros(2, grid)?, mu, m)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.sp.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    /// `int mu` over the torus; zero is the integrability condition.
    pub fn source_integral(&self) -> f64 {
        self.grid().integral(&self.mu)
    }

    pub fn is_integrable(&self) -> bool {
        self.source_integral().abs() <= INTEGRABILITY_TOL * self.grid().volume()
    }

    pub fn initial_u(&self) -> Vec<f64> {
        vec![self.m.ln(); self.grid().len()]
    }

    /// Rate of `w = e^u`.
    pub fn rhs_w(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.rates(w)?.0)
    }

    /// Rate of `w` together with `sup |i ddbar u|` (for the stiffness estimate).
    fn rates(&self, w: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_w(w)?;
        let sp = &self.sp;
        let np = w.len();
        let u: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let su = sp.forward_real(&u);
        let h00 = sp.inverse_real(mul_sym(&su, |p| sp.sym_dz(0, p) * sp.sym_dzbar(0, p)));
        let h11 = sp.inverse_real(mul_sym(&su, |p| sp.sym_dz(1, p) * sp.sym_dzbar(1, p)));
        let h01 = sp.inverse(mul_sym(&su, |p| sp.sym_dz(1, p) * sp.sym_dzbar(0, p)));
        // Linear terms are assembled in Fourier space and share one inverse transform.
        let sw = sp.forward_real(w);
        let mut lin: Vec<C64> = (0..np)
            .map(|p| {
                let lap = sp.sym_dz(0, p) * sp.sym_dzbar(0, p) + sp.sym_dz(1, p) * sp.sym_dzbar(1, p);
                0.5 * lap * sw[p]
            })
            .collect();
        if self.alpha != 0.0 {
            let b = |k: usize, j: usize| -> Vec<C64> {
                let c: Vec<C64> = self.rho.comp(k, j).iter().zip(w).map(|(r, w)| r / w).collect();
                sp.forward(&c)
            };
            let (b00, b11, b01, b10) = (b(0, 0), b(1, 1), b(0, 1), b(1, 0));
            for (p, l) in lin.iter_mut().enumerate() {
                let d = sp.sym_dz(0, p) * sp.sym_dzbar(0, p) * b11[p] + sp.sym_dz(1, p) * sp.sym_dzbar(1, p) * b00[p]
                    - sp.sym_dz(0, p) * sp.sym_dzbar(1, p) * b01[p]
                    - sp.sym_dz(1, p) * sp.sym_dzbar(0, p) * b10[p];
                *l -= 0.5 * self.alpha * d;
            }
        }
        let lin = sp.inverse_real(lin);
        let mut hsup = 0.0_f64;
        let out = (0..np)
            .map(|x| {
                hsup = hsup.max(h00[x].abs().max(h11[x].abs()).max(h01[x].norm()));
                let s2 = h00[x] * h11[x] - h01[x].norm_sqr();
                lin[x] + 0.5 * self.alpha * s2 + self.mu[x]
            })
            .collect();
        Ok((out, hsup))
    }

    /// Rate of `u`.
    pub fn rhs_scalar(&self, u: &[f64]) -> Result<Vec<f64>> {
        let w = exp_checked(u)?;
        let r = self.rhs_w(&w)?;
        Ok(r.iter().zip(&w).map(|(r, w)| r / w).collect())
    }

    /// Density of the stationary equation relative to `omega_hat^2`, in the
    /// normalization the flow settles to; it equals `e^u d/dt u` pointwise.
    pub fn residual_density(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.rhs_w(&exp_checked(u)?)
    }

    pub fn stationary_residual(&self, u: &[f64]) -> Result<f64> {
        Ok(sup_abs(&self.residual_density(u)?))
    }

    /// The rate of `u` read off the metric form of the flow on the base,
    /// with `R`, `|T|^2` and `Ric` from the calculus oracle.
    pub fn metric_form_rate(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = MetricField::conformal(2, self.grid(), u)?;
        let geo = Geometry::new(&self.sp, &g)?;
        let curv = geo.curvature(&self.sp);
        let t2 = Frames::new(&g)?.norm_sq(&geo.torsion(), &TORSION_SLOTS);
        let w = exp_checked(u)?;
        let scaled = self.rho.map_points(|x, m| m.iter().map(|v| v / w[x]).collect())?;
        let d = ddbar_density(&self.sp, &scaled);
        Ok((0..u.len())
            .map(|x| {
                let ric = [curv.ric[0][x], curv.ric[1][x], curv.ric[2][x], curv.ric[3][x]];
                let det_ric = (ric[0] * ric[3] - ric[1] * ric[2]).re;
                let det_g = geo.pw.det[x];
                let sigma2 = det_ric / det_g;
                // omega^2 = det(g) omega_hat^2 for n = 2.
                let bracket = 0.5 * curv.scalar_r[x] - 0.5 * t2[x] - 0.25 * self.alpha * sigma2
                    + 2.0 * self.alpha * d[x] / det_g
                    - 2.0 * self.mu[x] / det_g;
                // ||Omega|| = e^{-u}; d/dt omega = u_t omega.
                -0.5 * w[x] * bracket
            })
            .collect())
    }

    /// Normalized monitors `(sup e^u / M, M sup e^{-u}, M sup|T|^2, M^{1/2} sup|alpha' Ric|)`.
    pub fn monitors(&self, u: &[f64]) -> Result<BoundMonitors> {
        let g = MetricField::conformal(2, self.grid(), u)?;
        let geo = Geometry::new(&self.sp, &g)?;
        let t2 = Frames::new(&g)?.norm_sq(&geo.torsion(), &TORSION_SLOTS);
        let h = self.sp.complex_hessian(u);
        let mut ric = 0.0_f64;
        for x in 0..u.len() {
            let fro: f64 = h.iter().map(|c| c[x].norm_sqr()).sum::<f64>().sqrt();
            // Chern-Ricci of e^u omega_hat is -2 i ddbar u; two inverse metrics give e^{-u}.
            ric = ric.max(2.0 * fro * (-u[x]).exp());
        }
        let umax = u.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let umin = u.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        Ok(BoundMonitors {
            sup_eu_over_m: umax.exp() / self.m,
            m_sup_e_minus_u: self.m * (-umin).exp(),
            m_sup_t2: self.m * t2.iter().fold(0.0_f64, |a, &b| a.max(b)),
            sqrt_m_sup_ric: self.m.sqrt() * self.alpha.abs() * ric,
        })
    }

    fn stiffness_of(&self, w: &[f64], hess: f64) -> f64 {
        let wmin = w.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let rho = self.rho.max_abs();
        let a = self.alpha.abs();
        0.25 * self.sp.laplacian_radius() * (0.5 + 2.0 * a * hess / wmin + 2.0 * a * rho / (wmin * wmin))
    }
}

fn check_w(w: &[f64]) -> Result<()> {
    match w.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        Some((i, &v)) => Err(CoreError::PositivityLost { min_eig: v, index: i }),
        None => Ok(()),
    }
}

fn exp_checked(u: &[f64]) -> Result<Vec<f64>> {
    if u.iter().any(|v| !v.is_finite() || v.abs() > U_OVERFLOW) {
        return Err(CoreError::NonFinite("e^u overflow"));
    }
    Ok(u.iter().map(|v| v.exp()).collect())
}

fn mul_sym<F: Fn(usize) -> C64>(spec: &[C64], sym: F) -> Vec<C64> {
    spec.iter().enumerate().map(|(p, v)| v * sym(p)).collect()
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

/// `sigma_2(i ddbar u)` relative to the flat metric: `u_{1 1bar} u_{2 2bar} - |u_{1 2bar}|^2`.
pub fn sigma2_hat(sp: &Spectral, u: &[f64]) -> Vec<f64> {
    let h = sp.complex_hessian(u);
    let nc = sp.grid().complex_dim();
    (0..u.len())
        .map(|x| h[0][x].re * h[nc + 1][x].re - h[1][x].norm_sqr())
        .collect()
}

/// `i ddbar beta / omega_hat^2` for a real (1,1)-form `beta` in complex dimension 2.
pub fn ddbar_density(sp: &Spectral, beta: &HermitianField) -> Vec<f64> {
    let term =
        |k: usize, j: usize, a: usize, b: usize| -> Vec<C64> { sp.ddbar_spec(&sp.forward(beta.comp(k, j)), a, b) };
    let t1 = term(1, 1, 0, 0);
    let t2 = term(0, 0, 1, 1);
    let t3 = term(0, 1, 0, 1);
    let t4 = term(1, 0, 1, 0);
    (0..t1.len())
        .map(|x| 0.5 * (t1[x] + t2[x] - t3[x] - t4[x]).re)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundMonitors {
    pub sup_eu_over_m: f64,
    pub m_sup_e_minus_u: f64,
    pub m_sup_t2: f64,
    pub sqrt_m_sup_ric: f64,
}

impl BoundMonitors {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.sup_eu_over_m,
            self.m_sup_e_minus_u,
            self.m_sup_t2,
            self.sqrt_m_sup_ric,
        ]
    }
}

/// The flow for `w = e^u`.
///
/// The stiffness estimate reuses the Hessian bound of the latest right-hand
/// side evaluation, which with first-same-as-last stepping is the current state.
pub struct WSystem<'a> {
    sc: &'a FuYauScenario,
    hess: Cell<f64>,
}

impl<'a> WSystem<'a> {
    pub fn new(sc: &'a FuYauScenario) -> Self {
        Self {
            sc,
            hess: Cell::new(0.0),
        }
    }
}

impl System for WSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (r, h) = self.sc.rates(y)?;
        self.hess.set(h);
        dy.copy_from_slice(&r);
        Ok(())
    }

    fn admissible(&self, y: &[f64]) -> bool {
        check_w(y).is_ok()
    }

    fn stiffness(&self, y: &[f64]) -> Option<f64> {
        Some(self.sc.stiffness_of(y, self.hess.get()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuYauRecord {
    pub t: f64,
    pub dt: f64,
    /// `int e^u`.
    pub mass: f64,
    /// `d/dt int e^u` evaluated from the right-hand side.
    pub mass_slope: f64,
    pub residual: f64,
    /// `sup |d/dt u|`.
    pub rate_sup: f64,
    /// `J = int (d/dt e^u)^2`.
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuYauRegime {
    Converged,
    Drifting,
    BlownUp,
    /// Reached `t_end` with an integrable source but no convergence certificate.
    Unsettled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuYauOptions {
    pub t_end: f64,
    pub control: StepControl,
    /// Monitors are evaluated every this many accepted steps and at the end.
    pub monitor_every: usize,
    /// Stop as soon as the convergence certificate holds.
    pub stop_on_convergence: bool,
    pub t0: f64,
    pub max_steps: Option<usize>,
}

impl Default for FuYauOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            control: StepControl {
                rtol: 1e-10,
                atol: 1e-12,
                ..StepControl::default()
            },
            monitor_every: 25,
            stop_on_convergence: true,
            t0: 0.0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuYauRun {
    pub records: Vec<FuYauRecord>,
    pub monitors: Vec<(f64, BoundMonitors)>,
    pub regime: FuYauRegime,
    pub final_u: Vec<f64>,
    /// `e^u`, the evolved variable.
    pub final_w: Vec<f64>,
    pub t_final: f64,
    pub next_dt: f64,
}

fn record(sc: &FuYauScenario, t: f64, dt: f64, w: &[f64], rate: &[f64]) -> Result<FuYauRecord> {
    let g = sc.grid();
    let sq: Vec<f64> = rate.iter().map(|r| r * r).collect();
    Ok(FuYauRecord {
        t,
        dt,
        mass: g.integral(w),
        mass_slope: g.integral(rate),
        residual: sup_abs(rate),
        rate_sup: rate.iter().zip(w).fold(0.0_f64, |a, (r, w)| a.max((r / w).abs())),
        j: g.integral(&sq),
    })
}

impl FuYauRecord {
    pub fn is_converged(&self) -> bool {
        self.residual < RESIDUAL_TOL && self.rate_sup < RATE_TOL
    }
}

/// Integrates the flow from `u0` (usually `log M`).
pub fn evolve(sc: &FuYauScenario, u0: &[f64], opts: &FuYauOptions) -> Result<FuYauRun> {
    evolve_w(sc, exp_checked(u0)?, opts)
}

/// Integrates the flow from `w0 = e^{u0}`; used to resume runs bit for bit.
pub fn evolve_w(sc: &FuYauScenario, w0: Vec<f64>, opts: &FuYauOptions) -> Result<FuYauRun> {
    check_w(&w0)?;
    let sys = WSystem::new(sc);
    let mut w = w0;
    let mut t = opts.t0;
    let first = record(sc, t, 0.0, &w, &sc.rhs_w(&w)?)?;
    let mut records = vec![first];
    let u0: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let mut monitors = vec![(t, sc.monitors(&u0)?)];
    let mut stepper = Stepper::new(opts.control);
    let mut blown = false;
    let mut steps = 0usize;
    while t < opts.t_end {
        if opts.stop_on_convergence && records.last().unwrap().is_converged() {
            break;
        }
        if opts.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        match stepper.step(&sys, t, &mut w, opts.t_end) {
            Ok(rec) => {
                t = snap(rec.t, opts.t_end);
                steps += 1;
                let rate = stepper.cached_rate().expect("accepted step caches its rate");
                records.push(record(sc, t, rec.dt, &w, rate)?);
                if opts.monitor_every > 0 && steps % opts.monitor_every == 0 {
                    let u: Vec<f64> = w.iter().map(|v| v.ln()).collect();
                    monitors.push((t, sc.monitors(&u)?));
                }
            }
            Err(CoreError::StepUnderflow { .. }) | Err(CoreError::NonFinite(_)) => {
                blown = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let final_u: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    if !blown && monitors.last().map(|m| m.0) != Some(t) {
        monitors.push((t, sc.monitors(&final_u)?));
    }
    let regime = if blown {
        FuYauRegime::BlownUp
    } else if !sc.is_integrable() {
        FuYauRegime::Drifting
    } else if records.last().unwrap().is_converged() {
        FuYauRegime::Converged
    } else {
        FuYauRegime::Unsettled
    };
    Ok(FuYauRun {
        records,
        monitors,
        regime,
        final_u,
        final_w: w,
        t_final: t,
        next_dt: stepper.dt(),
    })
}

/// Largest gap between the recorded mass slope and `int mu`, relative to the
/// larger of `|int mu|` and `sup|mu| vol`.
pub fn mass_slope_defect(sc: &FuYauScenario, records: &[FuYauRecord]) -> f64 {
    let s = sc.source_integral();
    let scale = s.abs().max(sup_abs(&sc.mu) * sc.grid().volume());
    if scale == 0.0 {
        return records.iter().map(|r| r.mass_slope.abs()).fold(0.0, f64::max);
    }
    records
        .iter()
        .map(|r| (r.mass_slope - s).abs() / scale)
        .fold(0.0, f64::max)
}
