//! The balanced flow at `alpha' = 0` on flat complex tori, in its scalar
//! Monge-Ampere form `d/dt phi = e^{-f} det(chi_hat + i ddbar phi) / det(chi_hat)`,
//! and the source-term variant on (2,2)-forms.
//!
//! The reference metric is `chi_hat = I + i ddbar psi`. With the unit holomorphic
//! volume form `||Omega||_chi_hat^{-2} = det(chi_hat)`, so `e^{-f} = det(chi_hat)/(n-1)`
//! and the rate reduces to `det(chi)/(n-1)`.

use std::cell::Cell;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::calculus::{conformal_volume_form, i_ddbar_11, michelsohn_root, Form22, HermitianField, MetricField};
use crate::cmat;
use crate::error::{CoreError, Result};
use crate::numerics::integrate::snap;
use crate::numerics::random::band_limited_field;
use crate::numerics::{PeriodicGrid, Spectral, StepControl, Stepper, System};

/// Smallest admissible eigenvalue of `chi`.
pub const POSITIVITY_FLOOR: f64 = 1e-10;
/// Slack of the two-sided bound on `d/dt phi`.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-8;
/// Convergence threshold for `sup |chi - I|`.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Stationarity threshold of the source flow.
pub const STATIONARY_TOL: f64 = 1e-8;

#[derive(Debug)]
pub struct MAScenario {
    sp: Spectral,
    n: usize,
    pub psi: Vec<f64>,
    chi_hat: HermitianField,
    det_hat: Vec<f64>,
    /// `e^{-f}`, derived from `chi_hat`.
    pub e_minus_f: Vec<f64>,
    /// Potential `beta` of the source `Upsilon = i ddbar beta` (`n = 3`).
    pub upsilon_potential: Option<HermitianField>,
}

impl MAScenario {
    pub fn new(grid: &PeriodicGrid, psi: Vec<f64>, upsilon_potential: Option<HermitianField>) -> Result<Self> {
        if grid.dim() % 2 != 0 {
            return Err(CoreError::InvalidGrid("grid dimension must be even".into()));
        }
        let n = grid.complex_dim();
        if !(n == 2 || n == 3) {
            return Err(CoreError::InvalidGrid(format!(
                "complex dimension must be 2 or 3, got {n}"
            )));
        }
        if psi.len() != grid.len() {
            return Err(CoreError::Contract("psi has wrong length".into()));
        }
        if let Some(b) = &upsilon_potential {
            if n != 3 || b.n() != 3 || b.grid() != grid {
                return Err(CoreError::Contract(
                    "the source needs n = 3 and a 3x3 potential on the grid".into(),
                ));
            }
        }
        let sp = Spectral::new(grid);
        let chi_hat = HermitianField::flat(n, grid)?.plus_hessian(&sp, &psi)?;
        let det_hat = positive_dets(&chi_hat)?;
        let e_minus_f = det_hat.iter().map(|d| d / (n as f64 - 1.0)).collect();
        Ok(Self {
            sp,
            n,
            psi,
            chi_hat,
            det_hat,
            e_minus_f,
            upsilon_potential,
        })
    }

    pub fn flat(grid: &PeriodicGrid) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.len()], None)
    }

    /// `chi_hat = I + i ddbar psi` with a band-limited random `psi` of the given amplitude.
    pub fn perturbed(grid: &PeriodicGrid, amp: f64, kmax: usize, seed: u64) -> Result<Self> {
        let psi = band_limited_field(grid, seed, 0, amp, Some(kmax));
        Self::new(grid, psi, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.sp.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn chi_hat(&self) -> &HermitianField {
        &self.chi_hat
    }

    /// `chi = chi_hat + i ddbar phi`.
    pub fn chi(&self, phi: &[f64]) -> Result<HermitianField> {
        self.chi_hat.plus_hessian(&self.sp, phi)
    }

    /// Pointwise `e^{-f} chi^n / chi_hat^n`.
    pub fn rhs_phi(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let chi = self.chi(phi)?;
        let det = positive_dets(&chi)?;
        Ok(self.rate_from_dets(&det))
    }

    fn rate_from_dets(&self, det: &[f64]) -> Vec<f64> {
        det.iter()
            .zip(&self.det_hat)
            .zip(&self.e_minus_f)
            .map(|((d, h), e)| e * d / h)
            .collect()
    }

    /// `int chi^n`, normalized as `int det(chi) dx`.
    pub fn ma_mass(&self, phi: &[f64]) -> Result<f64> {
        let chi = self.chi(phi)?;
        Ok(self.grid().integral(&dets(&chi)))
    }

    pub fn reference_mass(&self) -> f64 {
        self.grid().integral(&self.det_hat)
    }

    /// `sup |chi - I|` over components and grid points.
    pub fn flat_residual(&self, phi: &[f64]) -> Result<f64> {
        let chi = self.chi(phi)?;
        Ok(chi.max_abs_diff(&HermitianField::flat(self.n, self.grid())?))
    }

    /// `M(omega) = int ||Omega||_omega det(omega) dx` for the ansatz metric of `chi`.
    pub fn dilaton(&self, phi: &[f64]) -> Result<f64> {
        let omega = ansatz_metric(&self.chi(phi)?)?;
        Ok(dilaton_m(&omega))
    }

    /// The source `Upsilon = i ddbar beta`, or zero.
    pub fn upsilon(&self) -> Result<Form22> {
        match &self.upsilon_potential {
            Some(b) => i_ddbar_11(&self.sp, b),
            None => Ok(Form22::from_dual(HermitianField::zeros(3, self.grid())?)?),
        }
    }
}

fn dets(chi: &HermitianField) -> Vec<f64> {
    let n = chi.n();
    (0..chi.len()).map(|p| cmat::det(n, &chi.at(p)).re).collect()
}

/// Determinants, failing with the location of the smallest eigenvalue when
/// `chi` is not positive-definite.
fn positive_dets(chi: &HermitianField) -> Result<Vec<f64>> {
    let n = chi.n();
    let mut out = Vec::with_capacity(chi.len());
    let mut worst: Option<(f64, usize)> = None;
    for p in 0..chi.len() {
        let m = chi.at(p);
        let ok = cmat::cholesky(n, &m)
            .is_some_and(|l| (0..n).all(|i| l[i * n + i].re * l[i * n + i].re >= POSITIVITY_FLOOR));
        if !ok {
            let e = cmat::hermitian_eigenvalues(n, &m)[0];
            if e < POSITIVITY_FLOOR && worst.is_none_or(|(w, _)| e < w) {
                worst = Some((e, p));
            }
        }
        out.push(cmat::det(n, &m).re);
    }
    match worst {
        Some((min_eig, index)) => Err(CoreError::PositivityLost { min_eig, index }),
        None => Ok(out),
    }
}

/// `sup_x det(chi) / lambda_min(chi)`, the factor in front of the Laplacian
/// symbol in the linearized rate.
fn ellipticity(chi: &HermitianField) -> f64 {
    let n = chi.n();
    (0..chi.len())
        .map(|p| {
            let m = chi.at(p);
            let ev = cmat::hermitian_eigenvalues(n, &m);
            ev.iter().product::<f64>() / ev[0]
        })
        .fold(0.0, f64::max)
}

/// `omega = ||Omega||_chi^{-2/(n-2)} chi = det(chi)^{1/(n-2)} chi`.
///
/// Undefined for `n = 2`.
pub fn ansatz_metric(chi: &HermitianField) -> Result<MetricField> {
    let n = chi.n();
    if n < 3 {
        return Err(CoreError::Contract("the ansatz metric needs n >= 3".into()));
    }
    let e = 1.0 / (n as f64 - 2.0);
    chi.map_points(|_, m| {
        let s = cmat::det(n, m).re.powf(e);
        m.iter().map(|v| v * s).collect()
    })
}

/// Time derivative of the ansatz metric along a rate `chi_dot` of `chi`:
/// `det(chi)^{1/(n-2)} ((1/(n-2)) tr(chi^{-1} chi_dot) chi + chi_dot)`.
pub fn ansatz_rate(chi: &HermitianField, chi_dot: &HermitianField) -> Result<MetricField> {
    let n = chi.n();
    if n < 3 {
        return Err(CoreError::Contract("the ansatz metric needs n >= 3".into()));
    }
    let e = 1.0 / (n as f64 - 2.0);
    chi.map_points(|p, m| {
        let (d, inv) = cmat::det_inv(n, m).unwrap_or((C64::default(), vec![C64::default(); n * n]));
        let cd = chi_dot.at(p);
        let tr = cmat::trace(n, &cmat::mul(n, &inv, &cd)).re;
        let s = d.re.powf(e);
        m.iter().zip(&cd).map(|(c, dc)| (c * (e * tr) + dc) * s).collect()
    })
}

/// Sup-norm defect of `||Omega||_omega omega^2 = chi^2` (`n = 3`), compared
/// through the dual matrices `conformal_volume_form(omega)` and `2 adj(chi)`.
pub fn ansatz_defect(chi: &HermitianField, omega: &MetricField) -> Result<f64> {
    let lhs = conformal_volume_form(omega)?;
    let n = chi.n();
    let rhs = chi.map_points(|_, m| {
        let (d, inv) = cmat::det_inv(n, m).unwrap_or((C64::default(), vec![C64::default(); n * n]));
        inv.iter().map(|v| v * d * 2.0).collect()
    })?;
    Ok(lhs.q.max_abs_diff(&rhs))
}

/// `int ||Omega||_omega det(omega) dx = int det(omega)^{1/2} dx`.
///
/// The combinatorial factor of `omega^n` is dropped, so flat data give the volume.
pub fn dilaton_m(omega: &MetricField) -> f64 {
    let n = omega.n();
    let v: Vec<f64> = (0..omega.len())
        .map(|p| cmat::det(n, &omega.at(p)).re.max(0.0).sqrt())
        .collect();
    omega.grid().integral(&v)
}

pub struct PhiSystem<'a> {
    sc: &'a MAScenario,
    ellipticity: Cell<f64>,
}

impl<'a> PhiSystem<'a> {
    pub fn new(sc: &'a MAScenario) -> Self {
        Self {
            sc,
            ellipticity: Cell::new(1.0),
        }
    }
}

impl System for PhiSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let chi = self.sc.chi(y)?;
        let det = positive_dets(&chi)?;
        dy.copy_from_slice(&self.sc.rate_from_dets(&det));
        Ok(())
    }

    fn stiffness(&self, y: &[f64]) -> Option<f64> {
        // Linearization: (det chi / (n-1)) chi^{j kbar} d_j dbar_k, with d dbar = Lap/4.
        if let Ok(chi) = self.sc.chi(y) {
            self.ellipticity.set(ellipticity(&chi));
        }
        let n = self.sc.n as f64;
        Some(self.ellipticity.get() * self.sc.sp.laplacian_radius() / (4.0 * (n - 1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MARecord {
    pub t: f64,
    pub dt: f64,
    pub sup_rate: f64,
    pub inf_rate: f64,
    /// `sup phi - inf phi`.
    pub oscillation: f64,
    /// `|int chi^n - int chi_hat^n| / int chi_hat^n`.
    pub ma_mass_drift: f64,
    /// `M(omega)` of the ansatz metric; `None` for `n = 2`.
    pub dilaton: Option<f64>,
    /// `sup |chi - I|`.
    pub residual: f64,
}

impl MARecord {
    pub fn rate_spread(&self) -> f64 {
        self.sup_rate - self.inf_rate
    }
}

/// Diagnostics of a state with its rate.
pub fn record(sc: &MAScenario, t: f64, dt: f64, phi: &[f64], rate: &[f64]) -> Result<MARecord> {
    let chi = sc.chi(phi)?;
    let mass = sc.grid().integral(&dets(&chi));
    let reference = sc.reference_mass();
    let dilaton = if sc.n >= 3 {
        Some(dilaton_m(&ansatz_metric(&chi)?))
    } else {
        None
    };
    Ok(MARecord {
        t,
        dt,
        sup_rate: rate.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        inf_rate: rate.iter().copied().fold(f64::INFINITY, f64::min),
        oscillation: phi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - phi.iter().copied().fold(f64::INFINITY, f64::min),
        ma_mass_drift: (mass - reference).abs() / reference,
        dilaton,
        residual: chi.max_abs_diff(&HermitianField::flat(sc.n, sc.grid())?),
    })
}

/// Margins of `inf phidot(0) <= phidot(t) <= sup phidot(0)` over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    /// Largest `sup phidot(t) - sup phidot(0)`.
    pub upper_excess: f64,
    /// Largest `inf phidot(0) - inf phidot(t)`.
    pub lower_excess: f64,
    pub max_oscillation: f64,
    pub holds: bool,
}

pub fn maximum_principle_monitor(records: &[MARecord]) -> MaxPrincipleReport {
    let Some(first) = records.first() else {
        return MaxPrincipleReport {
            upper_excess: 0.0,
            lower_excess: 0.0,
            max_oscillation: 0.0,
            holds: true,
        };
    };
    let upper = records.iter().map(|r| r.sup_rate - first.sup_rate).fold(0.0, f64::max);
    let lower = records.iter().map(|r| first.inf_rate - r.inf_rate).fold(0.0, f64::max);
    MaxPrincipleReport {
        upper_excess: upper,
        lower_excess: lower,
        max_oscillation: records.iter().map(|r| r.oscillation).fold(0.0, f64::max),
        holds: upper <= MAX_PRINCIPLE_SLACK && lower <= MAX_PRINCIPLE_SLACK,
    }
}

/// Largest per-step increase of the dilaton functional (0 if it never grows).
pub fn dilaton_increase(records: &[MARecord]) -> f64 {
    records
        .windows(2)
        .filter_map(|w| Some(w[1].dilaton? - w[0].dilaton?))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MARegime {
    Converged,
    /// Reached `t_end` without the convergence certificate.
    Running,
    PositivityLost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MAOptions {
    pub t_end: f64,
    pub control: StepControl,
    pub stop_on_convergence: bool,
    pub t0: f64,
    pub max_steps: Option<usize>,
}

impl Default for MAOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            control: StepControl {
                rtol: 1e-10,
                atol: 1e-12,
                ..StepControl::default()
            },
            stop_on_convergence: false,
            t0: 0.0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MARun {
    pub records: Vec<MARecord>,
    pub regime: MARegime,
    pub final_phi: Vec<f64>,
    pub t_final: f64,
    /// Mean and spread of `||Omega||_chi` at the final time.
    pub limit_norm_omega: f64,
    pub limit_norm_spread: f64,
    pub next_dt: f64,
}

pub fn evolve(sc: &MAScenario, phi0: &[f64], opts: &MAOptions) -> Result<MARun> {
    let sys = PhiSystem::new(sc);
    let mut phi = phi0.to_vec();
    let mut t = opts.t0;
    let mut records = vec![record(sc, t, 0.0, &phi, &sc.rhs_phi(&phi)?)?];
    let mut stepper = Stepper::new(opts.control);
    let mut lost = false;
    while t < opts.t_end {
        if opts.stop_on_convergence && records.last().unwrap().residual < RESIDUAL_TOL {
            break;
        }
        if opts.max_steps.is_some_and(|m| records.len() > m) {
            break;
        }
        match stepper.step(&sys, t, &mut phi, opts.t_end) {
            Ok(rec) => {
                t = snap(rec.t, opts.t_end);
                let rate = stepper.cached_rate().expect("accepted step caches its rate");
                records.push(record(sc, t, rec.dt, &phi, rate)?);
            }
            Err(CoreError::StepUnderflow { .. }) | Err(CoreError::PositivityLost { .. }) => {
                lost = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let norms: Vec<f64> = dets(&sc.chi(&phi)?).iter().map(|d| d.max(0.0).powf(-0.5)).collect();
    let mean = sc.grid().mean(&norms);
    let spread = norms.iter().fold(0.0_f64, |m, v| m.max((v - mean).abs()));
    let regime = if lost {
        MARegime::PositivityLost
    } else if records.last().unwrap().residual < RESIDUAL_TOL {
        MARegime::Converged
    } else {
        MARegime::Running
    };
    Ok(MARun {
        records,
        regime,
        final_phi: phi,
        t_final: t,
        limit_norm_omega: mean,
        limit_norm_spread: spread,
        next_dt: stepper.dt(),
    })
}

/// Rate of the source flow on `Psi = ||Omega||_omega omega^2`:
/// `d/dt Psi = i ddbar omega - Upsilon`, with `omega` recovered from `Psi`.
pub fn source_rate(sp: &Spectral, psi: &Form22, upsilon: &Form22) -> Result<Form22> {
    let omega = michelsohn_root(psi)?;
    Ok(i_ddbar_11(sp, &omega)?.axpy(-1.0, upsilon))
}

/// The source flow on the packed dual matrix of `Psi`.
pub struct SourceSystem<'a> {
    sp: &'a Spectral,
    upsilon: &'a Form22,
}

impl<'a> SourceSystem<'a> {
    pub fn new(sp: &'a Spectral, upsilon: &'a Form22) -> Self {
        Self { sp, upsilon }
    }

    fn unpack(&self, y: &[f64]) -> Result<Form22> {
        Form22::from_dual(HermitianField::from_real(3, self.sp.grid(), y)?)
    }
}

impl System for SourceSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let rate = source_rate(self.sp, &self.unpack(y)?, self.upsilon)?;
        dy.copy_from_slice(&rate.q.to_real());
        Ok(())
    }

    fn admissible(&self, y: &[f64]) -> bool {
        self.unpack(y).and_then(|p| michelsohn_root(&p)).is_ok()
    }
}

/// One classical Runge-Kutta step of the source flow, returning the new metric.
pub fn source_flow_step(sp: &Spectral, omega: &MetricField, upsilon: &Form22, dt: f64) -> Result<MetricField> {
    let psi = conformal_volume_form(omega)?;
    let sys = SourceSystem::new(sp, upsilon);
    let y = crate::numerics::rk4_step(&sys, 0.0, &psi.q.to_real(), dt)?;
    michelsohn_root(&sys.unpack(&y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub t: f64,
    pub dt: f64,
    /// `sup |i ddbar omega - Upsilon|` on the dual matrix.
    pub residual: f64,
    /// `sup |mean(Q) - mean(Q_0)|`: drift of the cohomology class pairing.
    pub class_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceRegime {
    Stationary,
    Running,
    BlownUp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRun {
    pub records: Vec<SourceRecord>,
    pub regime: SourceRegime,
    pub final_omega: MetricField,
    pub final_psi: Form22,
    pub t_final: f64,
    pub next_dt: f64,
}

fn dual_means(q: &HermitianField) -> Vec<C64> {
    let np = q.len() as f64;
    q.comps().iter().map(|c| c.iter().sum::<C64>() / np).collect()
}

/// Integrates the source flow from `omega0` with the scenario's `Upsilon`.
pub fn evolve_source(sc: &MAScenario, omega0: &MetricField, opts: &MAOptions) -> Result<SourceRun> {
    let psi0 = conformal_volume_form(omega0)?;
    evolve_source_from(sc, &psi0, &psi0, opts)
}

/// Integrates the source flow from `Psi_0 = ||Omega|| omega_0^2`; class drift
/// is measured against `class_ref` (the start of the original run when resuming).
pub fn evolve_source_from(sc: &MAScenario, psi0: &Form22, class_ref: &Form22, opts: &MAOptions) -> Result<SourceRun> {
    let upsilon = sc.upsilon()?;
    let sys = SourceSystem::new(&sc.sp, &upsilon);
    let means0 = dual_means(&class_ref.q);
    let mut y = psi0.q.to_real();
    let mut t = opts.t0;
    let observe = |t: f64, dt: f64, y: &[f64], rate: &[f64]| -> Result<SourceRecord> {
        let psi = sys.unpack(y)?;
        let r = HermitianField::from_real(3, sc.grid(), rate)?;
        let drift = dual_means(&psi.q)
            .iter()
            .zip(&means0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        Ok(SourceRecord {
            t,
            dt,
            residual: r.max_abs(),
            class_drift: drift,
            min_eigenvalue: psi.min_eigenvalue(),
        })
    };
    let mut rate0 = vec![0.0; y.len()];
    sys.rhs(0.0, &y, &mut rate0)?;
    let mut records = vec![observe(t, 0.0, &y, &rate0)?];
    let mut stepper = Stepper::new(opts.control);
    let mut blown = false;
    while t < opts.t_end {
        if records.last().unwrap().residual < STATIONARY_TOL {
            break;
        }
        if opts.max_steps.is_some_and(|m| records.len() > m) {
            break;
        }
        match stepper.step(&sys, t, &mut y, opts.t_end) {
            Ok(rec) => {
                t = snap(rec.t, opts.t_end);
                let rate = stepper.cached_rate().expect("accepted step caches its rate");
                records.push(observe(t, rec.dt, &y, rate)?);
            }
            Err(CoreError::StepUnderflow { .. }) | Err(CoreError::NonFinite(_)) => {
                blown = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let regime = if blown {
        SourceRegime::BlownUp
    } else if records.last().unwrap().residual < STATIONARY_TOL {
        SourceRegime::Stationary
    } else {
        SourceRegime::Running
    };
    Ok(SourceRun {
        records,
        regime,
        final_omega: michelsohn_root(&sys.unpack(&y)?)?,
        final_psi: sys.unpack(&y)?,
        t_final: t,
        next_dt: stepper.dt(),
    })
}
