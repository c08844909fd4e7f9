//! Invariant suites behind `anomaly check`. Each check reports its measured
//! value against a pinned threshold.

use std::fmt;

use anomaly_core::calculus::{self, conformal_volume_form, michelsohn_root, HermitianField, MetricField};
use anomaly_core::fuyau::{self, sigma2_hat, FuYauOptions, FuYauRegime, FuYauScenario};
use anomaly_core::lieflow::{
    self, diag, frobenius, rhs_general, rhs_printed, EvolveOptions, GauduchonParam, Group, LieAlgebra,
    PrintedConvention, StationarySet,
};
use anomaly_core::maflow::{self, ansatz_metric, ansatz_rate, MAOptions, MARecord, MAScenario};
use anomaly_core::numerics::integrate::convergence_order;
use anomaly_core::numerics::random::{band_limited_field, rng, uniform_in};
use anomaly_core::numerics::{rk4_fixed, PeriodicGrid, Spectral};
use anomaly_core::surfflow::{
    self, collapse_time, cosine_similarity, EigenOptions, Regime, SurfaceOptions, SurfaceScenario,
};
use num_complex::Complex64 as C64;

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};
use crate::run::execute;

pub const SUITES: [&str; 6] = [
    "calculus-identities",
    "lie-theorem4",
    "surface",
    "fuyau",
    "ma",
    "numerics",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Below,
    AtMost,
    Above,
    AtLeast,
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion the check belongs to.
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

impl Check {
    pub fn new(criterion: u8, name: &str, measured: f64, cmp: Cmp, threshold: f64) -> Self {
        let pass = match cmp {
            Cmp::Below => measured < threshold,
            Cmp::AtMost => measured <= threshold,
            Cmp::Above => measured > threshold,
            Cmp::AtLeast => measured >= threshold,
            Cmp::Equal => measured == threshold,
        };
        Self {
            criterion,
            name: name.to_string(),
            measured,
            threshold,
            cmp,
            pass,
        }
    }

    /// A yes/no property, reported as 1 or 0.
    pub fn flag(criterion: u8, name: &str, holds: bool) -> Self {
        Self::new(criterion, name, if holds { 1.0 } else { 0.0 }, Cmp::Equal, 1.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Cmp::Below => "<",
            Cmp::AtMost => "<=",
            Cmp::Above => ">",
            Cmp::AtLeast => ">=",
            Cmp::Equal => "==",
        };
        write!(
            f,
            "{:<58} {:>13.6e} {:>2} {:<12.3e} {}",
            self.name,
            self.measured,
            op,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

pub fn table(checks: &[Check]) -> String {
    let mut s = format!(
        "{:<58} {:>13} {:>2} {:<12} {}\n",
        "invariant", "measured", "", "threshold", "result"
    );
    for c in checks {
        s.push_str(&c.to_string());
        s.push('\n');
    }
    s
}

pub fn run_suite(name: &str) -> Result<Vec<Check>> {
    match name {
        "calculus-identities" => calculus_identities(),
        "lie-theorem4" => lie_theorem4(),
        "surface" => surface(),
        "fuyau" => fuyau_suite(),
        "ma" => ma(),
        "numerics" => numerics(),
        other => Err(CliError::Config(format!(
            "unknown suite '{other}' (expected one of {})",
            SUITES.join(", ")
        ))),
    }
}

fn max_diff(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn balanced_fixture(shape: &[usize]) -> Result<(Spectral, MetricField)> {
    let grid = PeriodicGrid::torus_shape(shape)?;
    let sp = Spectral::new(&grid);
    let psi = grid.sample(|x| 0.12 * (x[0] + x[2]).cos() + 0.08 * x[1].sin() + 0.05 * (x[0] - x[3]).cos());
    let g = calculus::conformally_balanced(&sp, 3, &psi)?;
    Ok((sp, g))
}

/// Sup difference of two metric fields at the points shared by an `N` grid
/// and its `2N` refinement.
fn coarse_gap(coarse: &MetricField, fine: &MetricField) -> f64 {
    let gc = coarse.grid();
    let gf = fine.grid();
    let mut worst = 0.0_f64;
    for p in 0..gc.len() {
        let q: usize = (0..gc.dim())
            .map(|a| gc.axis_index(p, a) * (gf.shape()[a] / gc.shape()[a]) * gf.stride(a))
            .sum();
        for (cc, cf) in coarse.comps().iter().zip(fine.comps()) {
            worst = worst.max((cc[p] - cf[q]).norm());
        }
    }
    worst
}

fn calculus_identities() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (sp, g) = balanced_fixture(&[16, 16, 16, 16, 1, 1])?;
    out.push(Check::new(
        6,
        "balanced fixture residual",
        calculus::balanced_residual(&sp, &g)?,
        Cmp::Below,
        1e-10,
    ));
    let geo = calculus::Geometry::new(&sp, &g)?;
    let curv = geo.curvature(&sp);
    let half: Vec<Vec<C64>> = curv.ric.iter().map(|c| c.iter().map(|v| v * 0.5).collect()).collect();
    out.push(Check::new(
        6,
        "balanced: |R' - R/2|",
        max_diff(&curv.ric_prime, &half),
        Cmp::Below,
        1e-8,
    ));
    out.push(Check::new(
        6,
        "balanced: |R'' - R/2|",
        max_diff(&curv.ric_dprime, &half),
        Cmp::Below,
        1e-8,
    ));
    let t = geo.torsion();
    let div = geo.torsion_divergence(&sp, &t);
    let lhs: Vec<Vec<C64>> = curv
        .ric_tilde
        .iter()
        .zip(&half)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    out.push(Check::new(
        6,
        "balanced: |R~ - R/2 - div T|",
        max_diff(&lhs, &div),
        Cmp::Below,
        1e-8,
    ));

    // Kahler: chi = I + i ddbar psi.
    let grid = PeriodicGrid::torus_shape(&[16, 16, 16, 16, 1, 1])?;
    let sp = Spectral::new(&grid);
    let psi = grid.sample(|x| 0.15 * (x[0] + x[3]).cos() + 0.1 * x[1].sin() * x[2].cos());
    let chi = HermitianField::flat(3, &grid)?.plus_hessian(&sp, &psi)?;
    let geo = calculus::Geometry::new(&sp, &chi)?;
    let torsion = geo.torsion().iter().flatten().fold(0.0_f64, |m, v| m.max(v.norm()));
    out.push(Check::new(6, "kahler: sup |T|", torsion, Cmp::Below, 1e-8));
    let curv = geo.curvature(&sp);
    let ricci_gap = [&curv.ric_prime, &curv.ric_dprime, &curv.ric_tilde]
        .iter()
        .map(|r| max_diff(r, &curv.ric))
        .fold(0.0, f64::max);
    out.push(Check::new(
        6,
        "kahler: Ricci notions coincide",
        ricci_gap,
        Cmp::Below,
        1e-8,
    ));

    // michelsohn_root inverts the conformal volume form.
    let grid = PeriodicGrid::torus_shape(&[8, 8, 8, 8, 1, 1])?;
    let a = band_limited_field(&grid, 1, 0, 0.2, Some(2));
    let b = band_limited_field(&grid, 1, 1, 0.2, Some(2));
    let c = band_limited_field(&grid, 1, 2, 0.3, Some(2));
    let g = HermitianField::from_points(3, &grid, |p| {
        let z = C64::new(a[p], b[p]);
        let w = C64::new(0.5 * b[p], -0.1);
        vec![
            C64::new(1.5 + c[p], 0.0),
            z,
            w,
            z.conj(),
            C64::new(1.0, 0.0),
            C64::new(0.05, a[p]),
            w.conj(),
            C64::new(0.05, -a[p]),
            C64::new(2.0 - c[p], 0.0),
        ]
    })?;
    let back = michelsohn_root(&conformal_volume_form(&g)?)?;
    out.push(Check::new(
        6,
        "michelsohn_root round trip",
        back.max_abs_diff(&g),
        Cmp::Below,
        1e-10,
    ));

    // Spectral accuracy: the flow right-hand side on N, 2N, 4N grids.
    let rhs = |n: usize| -> Result<MetricField> {
        let (sp, g) = balanced_fixture(&[n, n, n, 1, 1, 1])?;
        Ok(calculus::anomaly_rhs_metric(&sp, &g, 0.3, None)?)
    };
    let (r8, r16, r32) = (rhs(8)?, rhs(16)?, rhs(32)?);
    let e8 = coarse_gap(&r8, &r16);
    let e16 = coarse_gap(&r16, &r32);
    out.push(Check::new(
        6,
        "refinement: gap(8,16) / gap(16,32)",
        e8 / e16.max(f64::MIN_POSITIVE),
        Cmp::Above,
        16.0,
    ));
    out.push(Check::new(6, "refinement: gap(16,32)", e16, Cmp::Below, 1e-8));
    Ok(out)
}

fn random_metric(r: &mut rand_chacha::ChaCha8Rng) -> lieflow::Mat3 {
    let mut a = [C64::default(); 9];
    for v in a.iter_mut() {
        *v = C64::new(uniform_in(r, -1.0, 1.0), uniform_in(r, -1.0, 1.0));
    }
    let mut g = [C64::default(); 9];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                g[i * 3 + j] += a[i * 3 + k] * a[j * 3 + k].conj();
            }
        }
        g[i * 4] += 0.5;
    }
    g
}

/// Off-diagonal `g_{1bar2}` of the solvable start; the rest is generic.
pub fn solvable_start() -> lieflow::Mat3 {
    let mut g = diag([1.0, 1.5, 0.3]);
    g[2] = C64::new(0.05, 0.02);
    g[6] = g[2].conj();
    g
}

fn lie_theorem4() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut r = rng(7, 0);
    let abelian = LieAlgebra::standard(Group::Abelian);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let rate = rhs_general(&random_metric(&mut r), &abelian, GauduchonParam::new(1.0, 0.7))?;
        worst = worst.max(rate.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    out.push(Check::new(
        1,
        "abelian: sup |rhs| on 10 random metrics",
        worst,
        Cmp::Equal,
        0.0,
    ));

    let nil = LieAlgebra::standard(Group::Nilpotent);
    let opts = EvolveOptions {
        t_end: 10.0,
        sample_dt: 0.1,
        ..Default::default()
    };
    let traj = lieflow::evolve(&diag([1.0, 2.0, 3.0]), &nil, GauduchonParam::new(1.0, 0.5), &opts)?;
    let (idx, drift) = traj.conserved_index();
    out.push(Check::flag(1, "heisenberg: conserved entry is the center", idx == 2));
    out.push(Check::new(
        1,
        "heisenberg: conserved eigenvalue drift",
        drift,
        Cmp::Below,
        1e-8,
    ));
    let r2 = (0..3)
        .filter(|k| *k != idx)
        .map(|k| {
            let (slope, _, r2) = lieflow::trailing_fit(&traj, k);
            if slope > 0.0 {
                r2
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min);
    out.push(Check::new(1, "heisenberg: min growth-fit R^2", r2, Cmp::Above, 0.999));

    let sol = LieAlgebra::standard(Group::Solvable);
    let p_sol = GauduchonParam::with_alpha_tau(1.0, 1.0)?;
    let traj = lieflow::evolve(&solvable_start(), &sol, p_sol, &opts)?;
    let off = traj
        .samples
        .iter()
        .map(|s| s.g[3].abs().max(s.g[4].abs()))
        .fold(0.0, f64::max);
    out.push(Check::new(1, "solvable: sup |g_{1bar2}|", off, Cmp::Below, 1e-12));
    out.push(Check::new(
        1,
        "solvable: final |rhs| (convergence)",
        traj.last().rhs_norm,
        Cmp::Below,
        1e-8,
    ));
    let StationarySet::Family(fam) = lieflow::stationary_points(Group::Solvable, p_sol.alpha_tau()) else {
        return Err(CliError::Config("solvable stationary set is not a family".into()));
    };
    let member = fam.member(1.0, 1.0, C64::default(), C64::default())?;
    let ev = lieflow::linearization_spectrum(&member, &sol, p_sol)?;
    let top = ev.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::new(
        1,
        "solvable: top linearization eigenvalue",
        top,
        Cmp::Above,
        1e-8,
    ));

    let sl = LieAlgebra::standard(Group::Sl2c);
    let at = 2.0;
    let p_sl = GauduchonParam::with_alpha_tau(1.0, at)?;
    let g_star = diag([at / 2.0; 3]);
    out.push(Check::new(
        1,
        "sl2c: |rhs| at (alpha' tau / 2) id",
        frobenius(&rhs_general(&g_star, &sl, p_sl)?),
        Cmp::Below,
        1e-12,
    ));
    let ev = lieflow::linearization_spectrum(&g_star, &sl, p_sl)?;
    let pos = ev.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    let neg = ev.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    out.push(Check::new(
        1,
        "sl2c: min(top eig, -bottom eig)",
        pos.min(-neg),
        Cmp::Above,
        1e-8,
    ));
    let escape = sl2c_escape(&sl, p_sl, &g_star)?;
    out.push(Check::new(
        1,
        "sl2c: perturbed run distance decrease",
        escape.0,
        Cmp::AtMost,
        0.0,
    ));
    out.push(Check::new(
        1,
        "sl2c: perturbed run final distance",
        escape.1,
        Cmp::Above,
        1e-2,
    ));

    // Oracle against the printed ODE.
    let mut r = rng(11, 2);
    for (group, name, expect) in [(Group::Solvable, "solvable", 1.0), (Group::Sl2c, "sl2c", -1.0)] {
        let alg = LieAlgebra::standard(group);
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let l = [
                uniform_in(&mut r, 0.3, 3.0),
                uniform_in(&mut r, 0.3, 3.0),
                uniform_in(&mut r, 0.3, 3.0),
            ];
            let kappa = uniform_in(&mut r, 0.6, 1.5);
            let param = GauduchonParam::with_alpha_tau(kappa, uniform_in(&mut r, 0.2, 3.0))?;
            let g = diag(l);
            let a = rhs_general(&g, &alg, param)?;
            let b = rhs_printed(&g, group, param.alpha_tau(), PrintedConvention::Quarter)?;
            for k in 0..3 {
                if b[4 * k].re.abs() > 1e-6 {
                    ratios.push(a[4 * k].re / b[4 * k].re);
                }
            }
        }
        let m = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let var = ratios.iter().map(|x| (x - m).powi(2)).sum::<f64>() / ratios.len() as f64;
        out.push(Check::new(
            2,
            &format!("{name}: |constant - ({expect:+})|"),
            (m - expect).abs(),
            Cmp::Below,
            1e-10,
        ));
        out.push(Check::new(
            2,
            &format!("{name}: variance of the constant"),
            var,
            Cmp::Below,
            1e-10,
        ));
    }
    // Stationary normalization: alpha' tau g^{3bar3} = 4, not 1.
    let mut g = diag([1.0, 1.0, 1.0]);
    g[8] = C64::new(p_sol.alpha_tau() / 4.0, 0.0);
    out.push(Check::new(
        2,
        "solvable: |rhs| on alpha' tau g^33 = 4",
        frobenius(&rhs_general(&g, &sol, p_sol)?),
        Cmp::Below,
        1e-10,
    ));
    g[8] = C64::new(p_sol.alpha_tau(), 0.0);
    out.push(Check::new(
        2,
        "solvable: |rhs| on alpha' tau g^33 = 1",
        frobenius(&rhs_general(&g, &sol, p_sol)?),
        Cmp::Above,
        1e-3,
    ));
    Ok(out)
}

/// Largest decrease of `|g - g*|` between samples of a run started at
/// `(1 + eps) g*`, and the final distance.
pub fn sl2c_escape(alg: &LieAlgebra, param: GauduchonParam, g_star: &lieflow::Mat3) -> Result<(f64, f64)> {
    let g0: lieflow::Mat3 = g_star.map(|v| v * 1.01);
    let opts = EvolveOptions {
        t_end: 10.0,
        sample_dt: 0.1,
        ..Default::default()
    };
    let traj = lieflow::evolve(&g0, alg, param, &opts)?;
    let y_star = lieflow::pack(g_star);
    let dist: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| {
            s.g.iter()
                .zip(&y_star)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let decrease = dist.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    Ok((decrease.max(0.0), *dist.last().unwrap()))
}

fn surface() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = PeriodicGrid::torus(2, 64)?;
    let n = g.len();
    let (k, alpha, ef0) = (1.0, 1.0, 0.5);
    let sc = SurfaceScenario::uniform(&g, k, alpha)?;
    let expect = collapse_time(k, alpha, ef0).expect("below threshold");
    let run = surfflow::evolve(
        &sc,
        &vec![ef0; n],
        &SurfaceOptions {
            t_end: 3.0,
            ..Default::default()
        },
    )?;
    let t = run.collapse_time.unwrap_or(f64::INFINITY);
    out.push(Check::flag(
        3,
        "constant data below threshold collapses",
        run.regime == Regime::Collapsed,
    ));
    out.push(Check::new(
        3,
        "collapse time relative error",
        (t - expect).abs() / expect,
        Cmp::Below,
        0.01,
    ));

    // Extension: bounded sup e^{-2f} implies the run reaches t_end.
    let bump = SurfaceScenario::bump(&g, 1.0, 0.5, 1.0)?;
    let mut extension_ok = true;
    for (scn, ef) in [
        (&sc, vec![0.8; n]),
        (
            &bump,
            band_limited_field(&g, 21, 0, 0.3, Some(4))
                .iter()
                .map(|v| 1.2 * v.exp())
                .collect(),
        ),
    ] {
        let t_end = 2.0;
        let run = surfflow::evolve(
            scn,
            &ef,
            &SurfaceOptions {
                t_end,
                ..Default::default()
            },
        )?;
        let sup = run.records.iter().map(|r| r.sup_e_minus_2f).fold(0.0, f64::max);
        extension_ok &= sup.is_finite() && sup < 1e6 && run.t_final == t_end && run.regime != Regime::Collapsed;
    }
    out.push(Check::flag(3, "bounded sup e^(-2f) runs reach t_end", extension_ok));

    let mut inc = f64::NEG_INFINITY;
    for seed in 0..10 {
        let ef: Vec<f64> = band_limited_field(&g, seed, 0, 0.5, Some(4))
            .iter()
            .map(|v| 0.9 * v.exp())
            .collect();
        let run = surfflow::evolve(
            &bump,
            &ef,
            &SurfaceOptions {
                t_end: 0.5,
                ..Default::default()
            },
        )?;
        inc = inc.max(surfflow::max_energy_increase(&run.records));
    }
    out.push(Check::new(
        3,
        "I(u) max per-step increase, 10 seeds",
        inc,
        Cmp::AtMost,
        1e-8,
    ));

    let trig = SurfaceScenario::trigonometric(&g, 1.0, 1.0)?;
    let ef: Vec<f64> = band_limited_field(&g, 4, 0, 0.3, Some(4))
        .iter()
        .map(|v| 1.5 * v.exp())
        .collect();
    let run = surfflow::evolve(
        &trig,
        &ef,
        &SurfaceOptions {
            t_end: 0.5,
            ..Default::default()
        },
    )?;
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let v0 = run.records[0].v.expect("vector tracked");
    let mut drift = 0.0_f64;
    let mut margin = f64::INFINITY;
    for r in &run.records {
        let v = r.v.expect("vector tracked");
        drift = drift.max(norm([v[0] - v0[0], v[1] - v0[1], v[2] - v0[2]]) / norm(v0));
        margin = margin.min(r.mass - norm(v));
    }
    out.push(Check::new(
        3,
        "V relative drift, trigonometric datum",
        drift,
        Cmp::Below,
        1e-6,
    ));
    out.push(Check::new(3, "min (mass - |V|)", margin, Cmp::AtLeast, 0.0));

    let run = surfflow::evolve(
        &bump,
        &vec![100.0; n],
        &SurfaceOptions {
            t_end: 10.0,
            ..Default::default()
        },
    )?;
    let e = surfflow::principal_eigenpair(&bump, None, &EigenOptions::default())?;
    let q2: Vec<f64> = e.q.iter().map(|q| q * q).collect();
    let cos = cosine_similarity(&surfflow::profile(&bump, &run.final_ef), &q2);
    out.push(Check::new(
        3,
        "large data: cosine(profile, q1^2)",
        cos,
        Cmp::Above,
        0.999,
    ));
    Ok(out)
}

/// Whether a monitor series diverges: its last quarter is strictly
/// increasing and ends above twice its start.
pub fn monotone_divergence(series: &[f64]) -> bool {
    let tail = &series[series.len() - series.len().div_ceil(4)..];
    tail.len() >= 2 && tail.windows(2).all(|w| w[1] > w[0]) && tail[tail.len() - 1] > 2.0 * tail[0]
}

fn fuyau_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g8 = PeriodicGrid::torus(4, 8)?;
    let sp8 = Spectral::new(&g8);
    let mut worst = 0.0_f64;
    for seed in 0..5 {
        let u = band_limited_field(&g8, seed, 0, 2.0, None);
        let s = sigma2_hat(&sp8, &u);
        let scale = g8.integral(&s.iter().map(|v| v.abs()).collect::<Vec<_>>()).max(1.0);
        worst = worst.max(g8.integral(&s).abs() / scale);
    }
    out.push(Check::new(
        4,
        "int sigma2_hat / int |sigma2_hat|, 5 seeds",
        worst,
        Cmp::Below,
        1e-10,
    ));

    let mut drift = FuYauScenario::smooth(&g8, 0.3, 20.0, 0.4, 0.5, 11)?;
    drift.mu.iter_mut().for_each(|m| *m += 0.2);
    let run = fuyau::evolve(
        &drift,
        &drift.initial_u(),
        &FuYauOptions {
            t_end: 2.0,
            ..Default::default()
        },
    )?;
    out.push(Check::new(
        4,
        "mass-slope defect, int mu != 0",
        fuyau::mass_slope_defect(&drift, &run.records),
        Cmp::Below,
        1e-8,
    ));

    let g = PeriodicGrid::torus(4, 16)?;
    let sc = FuYauScenario::smooth(&g, 0.5, 1000.0, 0.5, 1.0, 3)?;
    out.push(Check::new(
        4,
        "16^4 fixture: |int mu|",
        sc.source_integral().abs(),
        Cmp::Below,
        1e-12,
    ));
    let run = fuyau::evolve(
        &sc,
        &sc.initial_u(),
        &FuYauOptions {
            t_end: 200.0,
            ..Default::default()
        },
    )?;
    let last = run.records.last().expect("records");
    out.push(Check::new(
        4,
        "16^4, M = 1e3: mass-slope defect",
        fuyau::mass_slope_defect(&sc, &run.records),
        Cmp::Below,
        1e-8,
    ));
    out.push(Check::flag(
        4,
        "16^4, M = 1e3: regime converged",
        run.regime == FuYauRegime::Converged,
    ));
    out.push(Check::new(
        4,
        "16^4, M = 1e3: stationary residual",
        sc.stationary_residual(&run.final_u)?,
        Cmp::Below,
        1e-6,
    ));
    out.push(Check::new(
        4,
        "16^4, M = 1e3: sup |du/dt|",
        last.rate_sup,
        Cmp::Below,
        1e-8,
    ));
    for (k, name) in ["sup e^u / M", "M sup e^-u", "M sup |T|^2"].iter().enumerate() {
        let series: Vec<f64> = run.monitors.iter().map(|(_, m)| m.as_array()[k]).collect();
        let bounded = series.iter().all(|v| v.is_finite()) && !monotone_divergence(&series);
        out.push(Check::flag(4, &format!("monitor {name} bounded"), bounded));
    }
    Ok(out)
}

fn ma() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let drift = |records: &[MARecord]| records.iter().map(|r| r.ma_mass_drift).fold(0.0, f64::max);
    let g8 = PeriodicGrid::torus(4, 8)?;
    let mut excess = 0.0_f64;
    let mut mass = 0.0_f64;
    for seed in 0..10 {
        let sc = MAScenario::perturbed(&g8, 0.3, 2, seed)?;
        let phi0 = band_limited_field(&g8, 100 + seed, 0, 0.3, Some(2));
        let run = maflow::evolve(
            &sc,
            &phi0,
            &MAOptions {
                t_end: 2.0,
                ..Default::default()
            },
        )?;
        let rep = maflow::maximum_principle_monitor(&run.records);
        excess = excess.max(rep.upper_excess).max(rep.lower_excess);
        mass = mass.max(drift(&run.records));
    }

    let thin = PeriodicGrid::torus_shape(&[8, 8, 8, 8, 1, 1])?;
    let sc = MAScenario::perturbed(&thin, 0.3, 2, 9)?;
    let run = maflow::evolve(
        &sc,
        &vec![0.0; thin.len()],
        &MAOptions {
            t_end: 20.0,
            ..Default::default()
        },
    )?;
    mass = mass.max(drift(&run.records));
    let rep = maflow::maximum_principle_monitor(&run.records);
    excess = excess.max(rep.upper_excess).max(rep.lower_excess);
    let m: Vec<f64> = run.records.iter().map(|r| r.dilaton.unwrap_or(f64::NAN)).collect();
    let slope = |i: usize| (m[i + 1] - m[i]) / (run.records[i + 1].t - run.records[i].t);
    let dilaton_inc = maflow::dilaton_increase(&run.records);
    let slope_ratio = (slope(m.len() - 2) / slope(0)).abs();

    let g16 = PeriodicGrid::torus(4, 16)?;
    let sc = MAScenario::perturbed(&g16, 0.2, 1, 4)?;
    let conv = maflow::evolve(
        &sc,
        &vec![0.0; g16.len()],
        &MAOptions {
            t_end: 50.0,
            ..Default::default()
        },
    )?;
    let rep = maflow::maximum_principle_monitor(&conv.records);
    excess = excess.max(rep.upper_excess).max(rep.lower_excess);
    mass = mass.max(drift(&conv.records));

    out.push(Check::new(
        5,
        "max-principle excess over all runs",
        excess,
        Cmp::AtMost,
        maflow::MAX_PRINCIPLE_SLACK,
    ));
    out.push(Check::new(
        5,
        "MA-mass relative drift over all runs",
        mass,
        Cmp::Below,
        1e-10,
    ));
    out.push(Check::new(
        5,
        "M(omega) max per-step increase",
        dilaton_inc,
        Cmp::AtMost,
        1e-8,
    ));
    out.push(Check::new(5, "|dM/dt| final / initial", slope_ratio, Cmp::Below, 1e-3));
    out.push(Check::new(
        5,
        "16^4, t = 50: final residual",
        conv.records.last().expect("records").residual,
        Cmp::Below,
        1e-6,
    ));

    let thin16 = PeriodicGrid::torus_shape(&[16, 16, 16, 16, 1, 1])?;
    let sc = MAScenario::perturbed(&thin16, 0.2, 1, 7)?;
    let phi = band_limited_field(&thin16, 8, 0, 0.1, Some(1));
    let chi = sc.chi(&phi)?;
    let rate = sc.rhs_phi(&phi)?;
    let chi_dot = HermitianField::zeros(3, &thin16)?.plus_hessian(sc.spectral(), &rate)?;
    let via_scalar = ansatz_rate(&chi, &chi_dot)?;
    let via_metric = calculus::anomaly_rhs_metric(sc.spectral(), &ansatz_metric(&chi)?, 0.0, None)?;
    out.push(Check::new(
        5,
        "ansatz chain rule: scalar vs metric rate",
        via_scalar.max_abs_diff(&via_metric),
        Cmp::Below,
        1e-8,
    ));

    let sc = MAScenario::perturbed(&thin16, 0.2, 1, 3)?;
    let omega0 = ansatz_metric(sc.chi_hat())?;
    let opts = MAOptions {
        t_end: 0.5,
        ..Default::default()
    };
    let src = maflow::evolve_source(&sc, &omega0, &opts)?;
    let scalar = maflow::evolve(&sc, &vec![0.0; thin16.len()], &opts)?;
    let omega_scalar = ansatz_metric(&sc.chi(&scalar.final_phi)?)?;
    out.push(Check::new(
        5,
        "source flow (Upsilon = 0) vs scalar path",
        src.final_omega.max_abs_diff(&omega_scalar),
        Cmp::Below,
        1e-8,
    ));
    Ok(out)
}

/// Global RK4 errors on the heat mode `cos(k x)`, whose exact decay is
/// `exp(-k^2 t)`, for halving step sizes.
pub fn heat_mode_errors(dts: &[f64]) -> Result<Vec<f64>> {
    let grid = PeriodicGrid::torus(1, 16)?;
    let sp = Spectral::new(&grid);
    let k = 2.0;
    let u0 = grid.sample(|x| (k * x[0]).cos());
    let t_end = 0.5;
    let heat = |_t: f64, y: &[f64], dy: &mut [f64]| -> anomaly_core::Result<()> {
        dy.copy_from_slice(&sp.laplacian(y));
        Ok(())
    };
    let exact: Vec<f64> = u0.iter().map(|u| u * (-k * k * t_end).exp()).collect();
    dts.iter()
        .map(|dt| {
            let steps = (t_end / dt).round() as usize;
            let y = rk4_fixed(&heat, 0.0, t_end, &u0, steps)?;
            Ok(sup_diff(&y, &exact))
        })
        .collect()
}

const DETERMINISM_CONFIGS: [&str; 2] = [
    r#"
flow = "surface"
seed = 3
[integrator]
t_end = 0.3
[surface]
grid = 16
kappa = { bump = 1.0, amplitude = 0.5 }
alpha_prime = 1.0
f0 = { amplitude = 0.3, kmax = 2 }
"#,
    r#"
flow = "lie"
seed = 5
[integrator]
t_end = 2.0
[lie]
group = "sl2c"
kappa = 1.0
alpha_tau = 2.0
start = "stationary"
perturbation = 1e-3
"#,
];

fn numerics() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let dts = [0.05, 0.025, 0.0125, 0.00625];
    let errs = heat_mode_errors(&dts)?;
    out.push(Check::new(
        7,
        "RK4 order on the heat mode: |slope - 4|",
        (convergence_order(&dts, &errs) - 4.0).abs(),
        Cmp::AtMost,
        0.2,
    ));
    let mut identical = true;
    for text in DETERMINISM_CONFIGS {
        let cfg = ScenarioConfig::from_toml(text)?;
        let a = execute(&cfg, None)?;
        let b = execute(&cfg, None)?;
        identical &= a.csv == b.csv && a.state.to_npy()? == b.state.to_npy()?;
    }
    out.push(Check::flag(7, "in-memory reruns byte-identical", identical));
    Ok(out)
}
