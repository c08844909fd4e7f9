use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Autonomous or time-dependent ODE system on a flat real state vector.
pub trait System {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Rejects states outside the domain (e.g. loss of positivity).
    fn admissible(&self, _y: &[f64]) -> bool {
        true
    }

    /// Upper estimate of the spectral radius of the linearized right-hand side,
    /// used to clamp explicit steps below the stability bound.
    fn stiffness(&self, _y: &[f64]) -> Option<f64> {
        None
    }
}

impl<F> System for F
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

fn axpy(out: &mut [f64], y: &[f64], dt: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + dt * acc;
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite("right-hand side"))
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<S: System + ?Sized>(sys: &S, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    sys.rhs(t, y, &mut k1)?;
    axpy(&mut tmp, y, 0.5 * dt, &[(1.0, &k1)]);
    sys.rhs(t + 0.5 * dt, &tmp, &mut k2)?;
    axpy(&mut tmp, y, 0.5 * dt, &[(1.0, &k2)]);
    sys.rhs(t + 0.5 * dt, &tmp, &mut k3)?;
    axpy(&mut tmp, y, dt, &[(1.0, &k3)]);
    sys.rhs(t + dt, &tmp, &mut k4)?;
    let mut out = vec![0.0; n];
    axpy(&mut out, y, dt / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
    check_finite(&out)?;
    Ok(out)
}

/// Integrates with fixed RK4 steps from `t0` to `t1` using `steps` steps.
pub fn rk4_fixed<S: System + ?Sized>(sys: &S, t0: f64, t1: f64, y0: &[f64], steps: usize) -> Result<Vec<f64>> {
    let dt = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    for i in 0..steps {
        y = rk4_step(sys, t0 + i as f64 * dt, &y, dt)?;
    }
    Ok(y)
}

/// Settings of the adaptive Dormand-Prince 5(4) stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub dt0: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub safety: f64,
    /// Steps are clamped to `stability_constant / stiffness`.
    pub stability_constant: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            dt0: 1e-3,
            dt_max: f64::INFINITY,
            dt_min: 1e-12,
            safety: 0.9,
            stability_constant: 2.9,
        }
    }
}

/// Diagnostic record of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub error: f64,
    pub rejected: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince 5(4) integrator with first-same-as-last reuse.
///
/// Rejected steps halve `dt`; a step below `dt_min` is reported as
/// [`CoreError::StepUnderflow`], which flows translate into a blow-up report.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub control: StepControl,
    dt: f64,
    k1: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(control: StepControl) -> Self {
        Self {
            dt: control.dt0,
            control,
            k1: None,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
    }

    /// Right-hand side at the current state, cached from the last accepted step.
    pub fn cached_rate(&self) -> Option<&[f64]> {
        self.k1.as_deref()
    }

    /// Drops the cached first stage; call after modifying the state externally.
    pub fn reset(&mut self) {
        self.k1 = None;
    }

    /// Advances `y` by one accepted step, never stepping past `t_stop`.
    pub fn step<S: System + ?Sized>(&mut self, sys: &S, t: f64, y: &mut Vec<f64>, t_stop: f64) -> Result<StepRecord> {
        let c = self.control;
        let n = y.len();
        let k1 = match self.k1.take() {
            Some(k) => k,
            None => {
                let mut k = vec![0.0; n];
                sys.rhs(t, y, &mut k)?;
                check_finite(&k)?;
                k
            }
        };
        let mut k = vec![vec![0.0; n]; 6];
        let mut tmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut rejected = 0;
        loop {
            let mut dt = self.dt.min(c.dt_max).min(t_stop - t);
            if let Some(lam) = sys.stiffness(y) {
                if lam > 0.0 {
                    dt = dt.min(c.stability_constant / lam);
                }
            }
            if dt < c.dt_min && t_stop - t > c.dt_min {
                return Err(CoreError::StepUnderflow { t, dt });
            }
            let (k2, rest) = k.split_at_mut(1);
            let (k3, rest) = rest.split_at_mut(1);
            let (k4, rest) = rest.split_at_mut(1);
            let (k5, rest) = rest.split_at_mut(1);
            let (k6, k7) = rest.split_at_mut(1);
            let (k2, k3, k4, k5, k6, k7) = (&mut k2[0], &mut k3[0], &mut k4[0], &mut k5[0], &mut k6[0], &mut k7[0]);
            let stages = (|| -> Result<()> {
                axpy(&mut tmp, y, dt, &[(A21, &k1)]);
                sys.rhs(t + dt / 5.0, &tmp, k2)?;
                axpy(&mut tmp, y, dt, &[(A31, &k1), (A32, k2)]);
                sys.rhs(t + 0.3 * dt, &tmp, k3)?;
                axpy(&mut tmp, y, dt, &[(A41, &k1), (A42, k2), (A43, k3)]);
                sys.rhs(t + 0.8 * dt, &tmp, k4)?;
                axpy(&mut tmp, y, dt, &[(A51, &k1), (A52, k2), (A53, k3), (A54, k4)]);
                sys.rhs(t + 8.0 / 9.0 * dt, &tmp, k5)?;
                axpy(
                    &mut tmp,
                    y,
                    dt,
                    &[(A61, &k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
                );
                sys.rhs(t + dt, &tmp, k6)?;
                axpy(&mut ynew, y, dt, &[(B1, &k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
                sys.rhs(t + dt, &ynew, k7)?;
                Ok(())
            })();
            let ok = match stages {
                Ok(()) => ynew.iter().chain(k7.iter()).all(|v| v.is_finite()),
                Err(CoreError::Domain(_)) | Err(CoreError::PositivityLost { .. }) => false,
                Err(CoreError::Degenerate { .. }) | Err(CoreError::NonFinite(_)) => false,
                Err(e) => return Err(e),
            };
            let mut err = f64::INFINITY;
            if ok && sys.admissible(&ynew) {
                err = 0.0;
                for i in 0..n {
                    let e = dt * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = c.atol + c.rtol * y[i].abs().max(ynew[i].abs());
                    err = err.max((e / sc).abs());
                }
            }
            if err <= 1.0 {
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (c.safety * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // Only grow the proposal when the full step was used.
                if dt >= self.dt.min(c.dt_max) * 0.999 || fac < 1.0 {
                    self.dt = (dt * fac).min(c.dt_max);
                }
                std::mem::swap(y, &mut ynew);
                self.k1 = Some(std::mem::take(k7));
                return Ok(StepRecord {
                    t: t + dt,
                    dt,
                    error: err,
                    rejected,
                });
            }
            rejected += 1;
            let fac = if err.is_finite() {
                (c.safety * err.powf(-0.2)).clamp(0.1, 0.5)
            } else {
                0.5
            };
            self.dt = dt * fac;
        }
    }
}

/// Snaps a time that landed within rounding of the target onto it.
pub fn snap(t: f64, target: f64) -> f64 {
    if (target - t).abs() <= 1e-12 * target.abs().max(1.0) {
        target
    } else {
        t
    }
}

/// Least-squares slope of `log(err)` against `log(dt)`.
pub fn convergence_order(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    linear_fit(&xs, &ys).0
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -y[0];
        Ok(())
    }

    #[test]
    fn rk4_is_fourth_order() {
        let dts = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let steps = (2.0 / dt) as usize;
                let y = rk4_fixed(&decay, 0.0, 2.0, &[1.0], steps).unwrap();
                (y[0] - (-2.0_f64).exp()).abs()
            })
            .collect();
        let p = convergence_order(&dts, &errs);
        assert!((p - 4.0).abs() < 0.2, "order {p}");
    }

    #[test]
    fn adaptive_hits_tolerance() {
        let mut st = Stepper::new(StepControl {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        });
        let mut y = vec![1.0];
        let mut t = 0.0;
        while t < 3.0 {
            t = st.step(&decay, t, &mut y, 3.0).unwrap().t;
        }
        assert!((t - 3.0).abs() < 1e-14);
        assert!((y[0] - (-3.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_rhs_leaves_state() {
        let zero = |_t: f64, _y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy.iter_mut().for_each(|v| *v = 0.0);
            Ok(())
        };
        let mut st = Stepper::new(StepControl::default());
        let mut y = vec![1.5, -2.0];
        let r = st.step(&zero, 0.0, &mut y, 1.0).unwrap();
        assert_eq!(y, vec![1.5, -2.0]);
        assert!(r.t > 0.0);
    }

    struct Stiff;
    impl System for Stiff {
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -1e3 * y[0];
            Ok(())
        }
        fn stiffness(&self, _y: &[f64]) -> Option<f64> {
            Some(1e3)
        }
    }

    #[test]
    fn stiffness_clamps_step() {
        let mut st = Stepper::new(StepControl {
            dt0: 1.0,
            rtol: 1.0,
            atol: 1.0,
            ..Default::default()
        });
        let mut y = vec![1.0];
        let r = st.step(&Stiff, 0.0, &mut y, 10.0).unwrap();
        assert!(r.dt <= 2.9e-3 + 1e-15);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
