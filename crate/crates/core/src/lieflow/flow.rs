use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::algebra::{GauduchonParam, Group, LieAlgebra};
use super::exterior::{self as ext, Exterior, Form, TOP, ZERO};
use crate::cmat;
use crate::error::{CoreError, Result};
use crate::numerics::{linear_fit, StepControl, Stepper, System};

/// Left-invariant Hermitian metric, `g[a*3 + b] = g_{abar b}`.
pub type Mat3 = [C64; 9];

const I: C64 = C64::new(0.0, 1.0);

pub fn diag(l: [f64; 3]) -> Mat3 {
    let mut g = [C64::default(); 9];
    for k in 0..3 {
        g[4 * k] = C64::new(l[k], 0.0);
    }
    g
}

fn check_positive(g: &Mat3) -> Result<()> {
    if cmat::cholesky(3, g).is_none() {
        return Err(CoreError::Domain(
            "left-invariant metric is not positive-definite".into(),
        ));
    }
    Ok(())
}

/// `omega = i g_{abar b} e^b ^ ebar^a`.
pub fn omega_form(g: &Mat3) -> Form {
    let mut f = ZERO;
    for a in 0..3 {
        for b in 0..3 {
            let w = ext::wedge(&ext::generator(b), &ext::generator(3 + a));
            ext::axpy(&mut f, I * g[a * 3 + b], &w);
        }
    }
    f
}

fn volume_coefficient() -> C64 {
    let mut f = ZERO;
    f[0] = C64::new(1.0, 0.0);
    for k in 0..3 {
        let w = ext::wedge(&ext::generator(k), &ext::generator(3 + k));
        f = ext::wedge(&f, &ext::scale(&w, I));
    }
    f[TOP]
}

/// Dual matrix `Q` of a (2,2)-form: `Psi ^ (i e^c ^ ebar^d) = Q[c][d] dV`.
pub fn dual(psi: &Form) -> Mat3 {
    let dv = volume_coefficient();
    let mut q = [C64::default(); 9];
    for c in 0..3 {
        for d in 0..3 {
            let w = ext::scale(&ext::wedge(&ext::generator(c), &ext::generator(3 + d)), I);
            q[c * 3 + d] = ext::wedge(psi, &w)[TOP] / dv;
        }
    }
    q
}

/// Connection one-forms `theta^p_a` of the Gauduchon connection with parameter `kappa`.
pub fn connection(alg: &LieAlgebra, g: &Mat3, kappa: f64) -> Result<[[Form; 3]; 3]> {
    let c = alg.constants();
    let (_, gi) = cmat::det_inv(3, g).ok_or_else(|| CoreError::Domain("singular left-invariant metric".into()))?;
    let mut th = [[ZERO; 3]; 3];
    for p in 0..3 {
        for a in 0..3 {
            for j in 0..3 {
                let g1 = kappa * c[p][j][a];
                let mut g2 = C64::default();
                for b in 0..3 {
                    for k in 0..3 {
                        g2 += gi[p * 3 + b] * c[k][j][b].conj() * g[k * 3 + a];
                    }
                }
                th[p][a][1 << j] += g1;
                th[p][a][1 << (3 + j)] -= kappa * g2;
            }
        }
    }
    Ok(th)
}

/// Curvature two-forms `Omega^p_a = d theta^p_a + theta^p_q ^ theta^q_a`.
pub fn curvature_forms(ext_d: &Exterior, alg: &LieAlgebra, g: &Mat3, kappa: f64) -> Result<[[Form; 3]; 3]> {
    let th = connection(alg, g, kappa)?;
    let mut om = [[ZERO; 3]; 3];
    for p in 0..3 {
        for a in 0..3 {
            let mut f = ext_d.d(&th[p][a]);
            for q in 0..3 {
                let w = ext::wedge(&th[p][q], &th[q][a]);
                ext::axpy(&mut f, C64::new(1.0, 0.0), &w);
            }
            om[p][a] = f;
        }
    }
    Ok(om)
}

/// `Tr(Rm ^ Rm)` of the Gauduchon connection, computed from the curvature forms.
pub fn trace_rm_rm(alg: &LieAlgebra, g: &Mat3, kappa: f64) -> Result<Form> {
    let ext_d = Exterior::new(alg.constants());
    trace_rm_rm_with(&ext_d, alg, g, kappa)
}

fn trace_rm_rm_with(ext_d: &Exterior, alg: &LieAlgebra, g: &Mat3, kappa: f64) -> Result<Form> {
    let om = curvature_forms(ext_d, alg, g, kappa)?;
    let mut f = ZERO;
    for p in 0..3 {
        for a in 0..3 {
            let w = ext::wedge(&om[p][a], &om[a][p]);
            ext::axpy(&mut f, C64::new(1.0, 0.0), &w);
        }
    }
    Ok(f)
}

/// Closed form in a unitary frame (`g = identity`):
/// `Tr(Rm^Rm) = 1/4 sum tau conj(c^r_{kl} c^s_{rp}) c^q_{ij} c^s_{qp} e^i^e^j^ebar^k^ebar^l`.
pub fn trace_rm_rm_unitary(alg: &LieAlgebra, kappa: f64) -> Form {
    let c = alg.constants();
    let tau = super::algebra::tau(kappa);
    let mut f = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut v = C64::default();
                    for r in 0..3 {
                        for s in 0..3 {
                            for p in 0..3 {
                                for q in 0..3 {
                                    v += (c[r][k][l] * c[s][r][p]).conj() * c[q][i][j] * c[s][q][p];
                                }
                            }
                        }
                    }
                    if v == C64::default() {
                        continue;
                    }
                    let mono = ext::wedge(
                        &ext::wedge(&ext::generator(i), &ext::generator(j)),
                        &ext::wedge(&ext::generator(3 + k), &ext::generator(3 + l)),
                    );
                    ext::axpy(&mut f, 0.25 * tau * v, &mono);
                }
            }
        }
    }
    f
}

/// Torsion three-form `T = i d^{(1,0)} omega`.
pub fn torsion_form(alg: &LieAlgebra, g: &Mat3) -> Form {
    let ext_d = Exterior::new(alg.constants());
    ext::scale(&ext::part(&ext_d.d(&omega_form(g)), 2, 1), I)
}

/// Right-hand side `i ddbar omega - (alpha'/4) Tr(Rm ^ Rm)` of the flow of (2,2)-forms.
pub fn form_rate(alg: &LieAlgebra, g: &Mat3, param: GauduchonParam) -> Result<Form> {
    let ext_d = Exterior::new(alg.constants());
    form_rate_with(&ext_d, alg, g, param)
}

fn form_rate_with(ext_d: &Exterior, alg: &LieAlgebra, g: &Mat3, param: GauduchonParam) -> Result<Form> {
    let w = omega_form(g);
    let dbar_w = ext::part(&ext_d.d(&w), 1, 2);
    let mut f = ext::part(&ext::scale(&ext_d.d(&dbar_w), I), 2, 2);
    if param.alpha != 0.0 {
        let trr = trace_rm_rm_with(ext_d, alg, g, param.kappa)?;
        ext::axpy(&mut f, C64::new(-0.25 * param.alpha, 0.0), &ext::part(&trr, 2, 2));
    }
    Ok(f)
}

/// Metric rate from the rate `Qdot` of the dual of `||Omega|| omega^2`.
pub fn metric_rate(g: &Mat3, qdot: &Mat3) -> Mat3 {
    let det = cmat::det(3, g).re;
    let p: Vec<C64> = qdot.iter().map(|v| v * 0.5).collect();
    let gp = cmat::mul(3, g, &p);
    let tr = cmat::trace(3, &gp);
    let gpg = cmat::mul(3, &gp, g);
    let s = det.powf(-0.5);
    let mut out = [C64::default(); 9];
    for i in 0..9 {
        out[i] = (tr * g[i] - gpg[i]) * s;
    }
    hermitize(&mut out);
    out
}

fn hermitize(m: &mut Mat3) {
    for a in 0..3 {
        for b in a..3 {
            let v = 0.5 * (m[a * 3 + b] + m[b * 3 + a].conj());
            m[a * 3 + b] = v;
            m[b * 3 + a] = v.conj();
        }
    }
}

/// First-principles metric rate of the anomaly flow for a left-invariant metric.
pub fn rhs_general(g: &Mat3, alg: &LieAlgebra, param: GauduchonParam) -> Result<Mat3> {
    check_positive(g)?;
    let ext_d = Exterior::new(alg.constants());
    let f = form_rate_with(&ext_d, alg, g, param)?;
    Ok(metric_rate(g, &dual(&f)))
}

/// How the constant in front of `alpha' tau` is read in the printed equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrintedConvention {
    /// `alpha' tau / 4` as displayed in the ODEs; stationary at `alpha' tau g^{3bar3} = 4`.
    #[default]
    Quarter,
    /// `alpha' tau` without the quarter; stationary at `alpha' tau g^{3bar3} = 1`.
    Unit,
}

impl PrintedConvention {
    fn factor(self, alpha_tau: f64) -> f64 {
        match self {
            PrintedConvention::Quarter => alpha_tau / 4.0,
            PrintedConvention::Unit => alpha_tau,
        }
    }
}

fn diagonal_entries(g: &Mat3) -> Result<[f64; 3]> {
    let scale = (0..3).map(|k| g[4 * k].norm()).fold(0.0, f64::max);
    for a in 0..3 {
        for b in 0..3 {
            if a != b && g[a * 3 + b].norm() > 1e-12 * scale {
                return Err(CoreError::Contract("printed equations need a diagonal metric".into()));
            }
        }
    }
    Ok([g[0].re, g[4].re, g[8].re])
}

/// The explicit ODEs for diagonal metrics on the solvable group and on `SL(2,C)`.
///
/// For the solvable group the `g_{3bar3}` equation, left implicit in the
/// printed system, is `(1/||Omega||)(1 - f g^{3bar3})` with `f` the convention factor.
pub fn rhs_printed(g: &Mat3, group: Group, alpha_tau: f64, conv: PrintedConvention) -> Result<Mat3> {
    let f = conv.factor(alpha_tau);
    match group {
        Group::Abelian => Ok([C64::default(); 9]),
        Group::Nilpotent => Err(CoreError::Contract(
            "no printed equations for the nilpotent group".into(),
        )),
        Group::Solvable => {
            let l = diagonal_entries(g)?;
            check_positive(g)?;
            let no = (l[0] * l[1] * l[2]).powf(-0.5);
            let s = 1.0 / l[2];
            let fac = 1.0 - f * s;
            Ok(diag([
                s * l[0] * fac / (2.0 * no),
                s * l[1] * fac / (2.0 * no),
                fac / no,
            ]))
        }
        Group::Sl2c => {
            let l = diagonal_entries(g)?;
            check_positive(g)?;
            let p = (l[0] * l[1] * l[2]).sqrt();
            let rate = |a: f64, b: f64, c: f64| 0.5 * p * (f * (2.0 / a + a / (b * b) + a / (c * c)) - b / c - c / b);
            Ok(diag([
                rate(l[0], l[1], l[2]),
                rate(l[1], l[2], l[0]),
                rate(l[2], l[0], l[1]),
            ]))
        }
    }
}

pub fn frobenius(m: &Mat3) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Stationary metrics of the first-principles flow.
#[derive(Debug, Clone, PartialEq)]
pub enum StationarySet {
    Empty {
        reason: String,
    },
    /// Every metric is stationary.
    Cone,
    Point(Mat3),
    Family(SolvableFamily),
}

/// `{ g_{1bar2} = 0, alpha' tau g^{3bar3} = 4 }` on the solvable group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvableFamily {
    pub alpha_tau: f64,
}

impl SolvableFamily {
    /// Prescribed value of `g^{3bar3}`.
    pub fn inverse_g33(&self) -> f64 {
        4.0 / self.alpha_tau
    }

    /// Member with the given free entries; `g_{3bar3}` is solved for.
    pub fn member(&self, g11: f64, g22: f64, g13: C64, g23: C64) -> Result<Mat3> {
        let mut g = [C64::default(); 9];
        g[0] = C64::new(g11, 0.0);
        g[4] = C64::new(g22, 0.0);
        g[2] = g13;
        g[6] = g13.conj();
        g[5] = g23;
        g[7] = g23.conj();
        // det is affine in g33 with slope g11 g22; g^{33} = g11 g22 / det.
        let rest = cmat::det(3, &g).re;
        let target = g11 * g22 / self.inverse_g33();
        g[8] = C64::new((target - rest) / (g11 * g22), 0.0);
        check_positive(&g)?;
        Ok(g)
    }

    pub fn contains(&self, g: &Mat3, tol: f64) -> bool {
        match cmat::det_inv(3, g) {
            Some((_, gi)) => g[1].norm() <= tol && (gi[8].re - self.inverse_g33()).abs() <= tol,
            None => false,
        }
    }
}

pub fn stationary_points(group: Group, alpha_tau: f64) -> StationarySet {
    if group == Group::Abelian {
        return StationarySet::Cone;
    }
    if !(alpha_tau > 0.0) {
        return StationarySet::Empty {
            reason: format!("alpha' tau = {alpha_tau} is not positive"),
        };
    }
    match group {
        Group::Abelian => StationarySet::Cone,
        Group::Nilpotent => StationarySet::Empty {
            reason: "the nilpotent flow has no stationary point".into(),
        },
        Group::Solvable => StationarySet::Family(SolvableFamily { alpha_tau }),
        Group::Sl2c => StationarySet::Point(diag([alpha_tau / 2.0; 3])),
    }
}

/// Packs a Hermitian 3x3 matrix into nine reals: diagonal, then real and
/// imaginary parts of `g_{1bar2}, g_{1bar3}, g_{2bar3}`.
pub fn pack(g: &Mat3) -> [f64; 9] {
    [
        g[0].re, g[4].re, g[8].re, g[1].re, g[1].im, g[2].re, g[2].im, g[5].re, g[5].im,
    ]
}

pub fn unpack(y: &[f64]) -> Mat3 {
    let mut g = diag([y[0], y[1], y[2]]);
    for (k, (a, b)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let v = C64::new(y[3 + 2 * k], y[4 + 2 * k]);
        g[a * 3 + b] = v;
        g[b * 3 + a] = v.conj();
    }
    g
}

/// Tolerance on `||rhs||` for treating a point as stationary.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Residual required before a Jacobian is taken.
pub const LINEARIZATION_BASE_TOL: f64 = 1e-8;
/// Relative central-difference step.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Eigenvalues of the Jacobian of the packed nine-dimensional system at a
/// stationary point, sorted by real part.
pub fn linearization_spectrum(g_star: &Mat3, alg: &LieAlgebra, param: GauduchonParam) -> Result<Vec<C64>> {
    let res = frobenius(&rhs_general(g_star, alg, param)?);
    if res >= LINEARIZATION_BASE_TOL {
        return Err(CoreError::Contract(format!(
            "base point is not stationary (residual {res:e})"
        )));
    }
    let y0 = pack(g_star);
    let scale = y0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut jac = DMatrix::<f64>::zeros(9, 9);
    for i in 0..9 {
        let h = JACOBIAN_STEP * y0[i].abs().max(scale);
        let mut yp = y0;
        let mut ym = y0;
        yp[i] += h;
        ym[i] -= h;
        let fp = pack(&rhs_general(&unpack(&yp), alg, param)?);
        let fm = pack(&rhs_general(&unpack(&ym), alg, param)?);
        for r in 0..9 {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    let mut ev: Vec<C64> = jac.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// The flow as a system on the packed state.
pub struct LieSystem<'a> {
    pub alg: &'a LieAlgebra,
    pub param: GauduchonParam,
    ext_d: Exterior,
}

impl<'a> LieSystem<'a> {
    pub fn new(alg: &'a LieAlgebra, param: GauduchonParam) -> Self {
        Self {
            alg,
            param,
            ext_d: Exterior::new(alg.constants()),
        }
    }

    pub fn rate(&self, g: &Mat3) -> Result<Mat3> {
        check_positive(g)?;
        let f = form_rate_with(&self.ext_d, self.alg, g, self.param)?;
        Ok(metric_rate(g, &dual(&f)))
    }
}

impl System for LieSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let r = pack(&self.rate(&unpack(y))?);
        dy.copy_from_slice(&r);
        Ok(())
    }

    fn admissible(&self, y: &[f64]) -> bool {
        cmat::cholesky(3, &unpack(y)).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Spacing of recorded samples.
    pub sample_dt: f64,
    pub control: StepControl,
    pub t0: f64,
    pub max_steps: Option<usize>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            sample_dt: 0.05,
            control: StepControl::default(),
            t0: 0.0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieSample {
    pub t: f64,
    pub g: [f64; 9],
    pub eigenvalues: [f64; 3],
    pub rhs_norm: f64,
    pub det: f64,
}

impl LieSample {
    pub fn metric(&self) -> Mat3 {
        unpack(&self.g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Stationary,
    Converging,
    DivergingLinear,
    DivergingOther,
    LostPositivity,
}

/// Tolerance on the final `||rhs||` for a converging run.
pub const CONVERGED_TOL: f64 = 1e-8;
/// Bound on the variance of the top eigenvalue's rate for linear divergence.
pub const LINEAR_RATE_VARIANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<LieSample>,
    pub classification: Classification,
    /// Error that truncated the run, if any.
    pub stopped_by: Option<CoreError>,
    pub next_dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &LieSample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// Diagonal index whose entry drifted least (the conserved direction).
    pub fn conserved_index(&self) -> (usize, f64) {
        let first = &self.samples[0].g;
        (0..3)
            .map(|k| {
                let d = self
                    .samples
                    .iter()
                    .map(|s| (s.g[k] - first[k]).abs())
                    .fold(0.0, f64::max);
                (k, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }
}

fn sample(t: f64, y: &[f64], sys: &LieSystem) -> Result<LieSample> {
    let g = unpack(y);
    let ev = cmat::hermitian_eigenvalues(3, &g);
    Ok(LieSample {
        t,
        g: pack(&g),
        eigenvalues: [ev[0], ev[1], ev[2]],
        rhs_norm: frobenius(&sys.rate(&g)?),
        det: cmat::det(3, &g).re,
    })
}

pub fn classify(samples: &[LieSample], stopped: bool) -> Classification {
    if stopped {
        return Classification::LostPositivity;
    }
    if samples[0].rhs_norm < STATIONARY_TOL {
        return Classification::Stationary;
    }
    let last = samples.last().unwrap();
    if last.rhs_norm < CONVERGED_TOL {
        return Classification::Converging;
    }
    let half = &samples[samples.len() / 2..];
    if half.len() >= 3 {
        let rates: Vec<f64> = half
            .windows(2)
            .map(|w| (w[1].eigenvalues[2] - w[0].eigenvalues[2]) / (w[1].t - w[0].t))
            .collect();
        let m = rates.iter().sum::<f64>() / rates.len() as f64;
        let var = rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rates.len() as f64;
        if m > 0.0 && var < LINEAR_RATE_VARIANCE {
            return Classification::DivergingLinear;
        }
    }
    Classification::DivergingOther
}

/// Integrates the flow from `g0`, recording samples every `sample_dt`.
pub fn evolve(g0: &Mat3, alg: &LieAlgebra, param: GauduchonParam, opts: &EvolveOptions) -> Result<Trajectory> {
    check_positive(g0)?;
    let sys = LieSystem::new(alg, param);
    let mut y = pack(g0).to_vec();
    let mut t = opts.t0;
    let mut samples = vec![sample(t, &y, &sys)?];
    let mut stepper = Stepper::new(opts.control);
    let mut stopped_by = None;
    let mut steps = 0usize;
    let mut next = (t + opts.sample_dt).min(opts.t_end);
    'outer: while t < opts.t_end {
        while t < next {
            if opts.max_steps.is_some_and(|m| steps >= m) {
                break 'outer;
            }
            match stepper.step(&sys, t, &mut y, next) {
                Ok(rec) => {
                    t = crate::numerics::integrate::snap(rec.t, next);
                    steps += 1;
                }
                Err(e) => {
                    stopped_by = Some(e);
                    break 'outer;
                }
            }
        }
        match sample(t, &y, &sys) {
            Ok(s) => samples.push(s),
            Err(e) => {
                stopped_by = Some(e);
                break;
            }
        }
        next = (next + opts.sample_dt).min(opts.t_end);
    }
    if stopped_by.is_none() && samples.last().is_some_and(|s| s.t < t) {
        samples.push(sample(t, &y, &sys)?);
    }
    let classification = classify(&samples, stopped_by.is_some());
    Ok(Trajectory {
        samples,
        classification,
        stopped_by,
        next_dt: stepper.dt(),
    })
}

/// Least-squares fit of one diagonal entry against time over the trailing half.
pub fn trailing_fit(traj: &Trajectory, index: usize) -> (f64, f64, f64) {
    let half = &traj.samples[traj.samples.len() / 2..];
    let ts: Vec<f64> = half.iter().map(|s| s.t).collect();
    let vs: Vec<f64> = half.iter().map(|s| s.g[index]).collect();
    linear_fit(&ts, &vs)
}
