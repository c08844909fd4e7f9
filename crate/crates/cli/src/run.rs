//! Executing one scenario and persisting its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anomaly_core::calculus::{Form22, HermitianField};
use anomaly_core::fuyau::{self, FuYauOptions, FuYauRegime, FuYauScenario};
use anomaly_core::lieflow::{self, Classification, EvolveOptions, GauduchonParam, LieAlgebra, StationarySet};
use anomaly_core::maflow::{self, MAOptions, MARegime, MAScenario, SourceRegime};
use anomaly_core::numerics::random::{band_limited_field, rng, uniform_in};
use anomaly_core::numerics::PeriodicGrid;
use anomaly_core::surfflow::{self, Regime, SurfaceOptions, SurfaceScenario};
use ndarray::{ArrayD, IxDyn};
use ndarray_npy::{ReadNpyExt, WriteNpyExt};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::config::{FieldSpec, Flow, GridSpec, KappaSpec, LieStart, ScenarioConfig, UpsilonKind, UpsilonSpec};
use crate::error::{CliError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;

pub const CSV_FILE: &str = "timeseries.csv";
pub const STATE_FILE: &str = "final_state.npy";
pub const RECORD_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Final state of a run: a flat array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDump {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl StateDump {
    pub fn to_npy(&self) -> Result<Vec<u8>> {
        let a =
            ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.clone()).map_err(|e| CliError::Npy(e.to_string()))?;
        let mut buf = Vec::new();
        a.write_npy(&mut buf).map_err(|e| CliError::Npy(e.to_string()))?;
        Ok(buf)
    }

    pub fn from_npy(bytes: &[u8]) -> Result<Self> {
        let a = ArrayD::<f64>::read_npy(bytes).map_err(|e| CliError::Npy(e.to_string()))?;
        Ok(Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        })
    }
}

/// Where a resumed run starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumePoint {
    pub t: f64,
    pub dt: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub flow: Flow,
    pub regime: String,
    pub exit_code: i32,
    pub t_final: f64,
    pub next_dt: f64,
    pub records: usize,
    pub summary: BTreeMap<String, f64>,
    /// Human-readable blow-up or gating report.
    pub report: Option<String>,
    pub csv: Vec<u8>,
    pub state: StateDump,
}

/// Persisted metadata of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config_hash: String,
    pub flow: Flow,
    pub seed: u64,
    pub regime: String,
    pub exit_code: i32,
    pub t_final: f64,
    pub next_dt: f64,
    pub records: usize,
    pub summary: BTreeMap<String, f64>,
    pub report: Option<String>,
}

fn csv_bytes<R: Serialize>(rows: &[R], cadence: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let last = rows.len().saturating_sub(1);
    for (i, r) in rows.iter().enumerate() {
        if i % cadence == 0 || i == last {
            w.serialize(r)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

fn grid_shape(g: &PeriodicGrid) -> Vec<usize> {
    g.shape().to_vec()
}

fn field(grid: &PeriodicGrid, spec: &FieldSpec, seed: u64, stream: u64) -> Vec<f64> {
    match spec {
        FieldSpec::Constant(c) => vec![*c; grid.len()],
        FieldSpec::Random(r) => band_limited_field(grid, seed, stream, r.amplitude, Some(r.kmax))
            .into_iter()
            .map(|v| v + r.mean)
            .collect(),
    }
}

fn check_resume_len(resume: Option<&ResumePoint>, len: usize) -> Result<()> {
    if let Some(r) = resume {
        if r.state.len() != len {
            return Err(CliError::Resume(format!(
                "state dump has {} values, the scenario needs {len}",
                r.state.len()
            )));
        }
    }
    Ok(())
}

fn finite(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    if v.is_finite() {
        // Adding zero turns -0 into 0.
        map.insert(key.to_string(), v + 0.0);
    }
}

/// Runs a validated scenario, optionally continuing from a resume point.
pub fn execute(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    match cfg.flow {
        Flow::Lie => run_lie(cfg, resume),
        Flow::Surface => run_surface(cfg, resume),
        Flow::Fuyau => run_fuyau(cfg, resume),
        Flow::Ma => run_ma(cfg, resume),
        Flow::Source => run_source(cfg, resume),
    }
}

#[derive(Serialize)]
struct LieRow {
    t: f64,
    g11: f64,
    g22: f64,
    g33: f64,
    re_g12: f64,
    im_g12: f64,
    re_g13: f64,
    im_g13: f64,
    re_g23: f64,
    im_g23: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    rhs_norm: f64,
    det: f64,
}

/// Algebra, parameters and unperturbed initial metric of a Lie scenario;
/// the metric is `None` when the stationary start is gated off by `alpha' tau <= 0`.
pub fn lie_setup(cfg: &ScenarioConfig) -> Result<(LieAlgebra, GauduchonParam, Option<lieflow::Mat3>)> {
    let l = cfg.lie.as_ref().expect("validated");
    let alg = LieAlgebra::standard(l.group);
    let param = match (l.alpha_prime, l.alpha_tau) {
        (Some(a), _) => GauduchonParam::new(l.kappa, a),
        (None, Some(at)) => GauduchonParam::with_alpha_tau(l.kappa, at)?,
        _ => unreachable!("validated"),
    };
    let base = match (l.g0, l.start) {
        (Some(d), _) => Some(lieflow::diag(d)),
        (None, Some(LieStart::Stationary)) => match lieflow::stationary_points(l.group, param.alpha_tau()) {
            StationarySet::Point(g) => Some(g),
            StationarySet::Family(f) => Some(f.member(1.0, 1.0, C64::default(), C64::default())?),
            StationarySet::Cone => Some(lieflow::diag([1.0; 3])),
            StationarySet::Empty { reason } => {
                if param.is_admissible() {
                    return Err(CliError::Config(format!("lie: no stationary start: {reason}")));
                }
                None
            }
        },
        _ => unreachable!("validated"),
    };
    Ok((alg, param, base))
}

/// Adds the seeded Hermitian perturbation of the config to `g`.
fn perturb(cfg: &ScenarioConfig, g: lieflow::Mat3) -> lieflow::Mat3 {
    let size = cfg.lie.as_ref().map_or(0.0, |l| l.perturbation);
    if size == 0.0 {
        return g;
    }
    let mut r = rng(cfg.seed, 0);
    let mut y = lieflow::pack(&g);
    for v in y.iter_mut() {
        *v += size * uniform_in(&mut r, -1.0, 1.0);
    }
    lieflow::unpack(&y)
}

/// Jacobian spectrum of the Lie flow at the (unperturbed) initial metric,
/// which must be stationary.
pub fn linearize(cfg: &ScenarioConfig) -> Result<(lieflow::Mat3, Vec<C64>)> {
    if cfg.flow != Flow::Lie {
        return Err(CliError::Config(format!(
            "linearize needs flow 'lie', got '{}'",
            cfg.flow.name()
        )));
    }
    let (alg, param, base) = lie_setup(cfg)?;
    let g = base.ok_or_else(|| {
        CliError::Config(format!(
            "alpha' tau = {} <= 0: no stationary point to linearize at",
            param.alpha_tau()
        ))
    })?;
    let ev = lieflow::linearization_spectrum(&g, &alg, param)?;
    Ok((g, ev))
}

fn run_lie(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    let l = cfg.lie.as_ref().expect("validated");
    let (alg, param, g0) = lie_setup(cfg)?;
    let mut summary = BTreeMap::new();
    finite(&mut summary, "tau", param.tau());
    finite(&mut summary, "alpha_tau", param.alpha_tau());
    let Some(mut g0) = g0.map(|g| perturb(cfg, g)) else {
        return Ok(Outcome {
            flow: Flow::Lie,
            regime: "gated".into(),
            exit_code: EXIT_OK,
            t_final: 0.0,
            next_dt: 0.0,
            records: 0,
            summary,
            report: Some(format!(
                "alpha' tau = {} <= 0: the stationary-point classification does not apply",
                param.alpha_tau()
            )),
            csv: csv_bytes::<LieRow>(&[], 1)?,
            state: StateDump {
                shape: vec![0],
                data: vec![],
            },
        });
    };
    check_resume_len(resume, 9)?;
    let mut opts = EvolveOptions {
        t_end: cfg.integrator.t_end,
        sample_dt: l.sample_dt,
        control: cfg.integrator.control(EvolveOptions::default().control),
        max_steps: cfg.integrator.max_steps,
        ..Default::default()
    };
    if let Some(r) = resume {
        g0 = lieflow::unpack(&r.state);
        opts.t0 = r.t;
        opts.control.dt0 = r.dt;
    }
    let traj = lieflow::evolve(&g0, &alg, param, &opts)?;
    let rows: Vec<LieRow> = traj
        .samples
        .iter()
        .map(|s| LieRow {
            t: s.t,
            g11: s.g[0],
            g22: s.g[1],
            g33: s.g[2],
            re_g12: s.g[3],
            im_g12: s.g[4],
            re_g13: s.g[5],
            im_g13: s.g[6],
            re_g23: s.g[7],
            im_g23: s.g[8],
            lambda1: s.eigenvalues[0],
            lambda2: s.eigenvalues[1],
            lambda3: s.eigenvalues[2],
            rhs_norm: s.rhs_norm,
            det: s.det,
        })
        .collect();
    let last = traj.last();
    finite(&mut summary, "rhs_norm", last.rhs_norm);
    finite(&mut summary, "lambda_min", last.eigenvalues[0]);
    finite(&mut summary, "lambda_max", last.eigenvalues[2]);
    let lost = traj.classification == Classification::LostPositivity;
    let regime = serde_json::to_value(traj.classification)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok(Outcome {
        flow: Flow::Lie,
        regime,
        exit_code: if lost { EXIT_BLOWUP } else { EXIT_OK },
        t_final: last.t,
        next_dt: traj.next_dt,
        records: rows.len(),
        summary,
        report: traj
            .stopped_by
            .as_ref()
            .map(|e| format!("run stopped at t = {}: {e}", last.t)),
        csv: csv_bytes(&rows, cfg.output.cadence)?,
        state: StateDump {
            shape: vec![9],
            data: last.g.to_vec(),
        },
    })
}

#[derive(Serialize)]
struct SurfaceRow {
    t: f64,
    mass: f64,
    energy: f64,
    v_norm: Option<f64>,
    sup_e_minus_2f: f64,
    dt: f64,
}

/// Scenario and initial `e^f` of a surface config.
pub fn surface_setup(cfg: &ScenarioConfig) -> Result<(SurfaceScenario, Vec<f64>)> {
    let s = cfg.surface.as_ref().expect("validated");
    let grid = PeriodicGrid::torus(2, s.grid)?;
    let mut sc = match &s.kappa {
        KappaSpec::Constant(k) => SurfaceScenario::uniform(&grid, -k, s.alpha_prime)?,
        KappaSpec::Bump(b) => SurfaceScenario::bump(&grid, b.bump, b.amplitude, s.alpha_prime)?,
        KappaSpec::Trigonometric(t) => SurfaceScenario::trigonometric(&grid, t.trigonometric, s.alpha_prime)?,
    };
    if !s.vector_field {
        sc.vector = None;
    } else if sc.vector.is_none() {
        return Err(CliError::Config(
            "surface: vector_field needs the trigonometric kappa".into(),
        ));
    }
    let ef0: Vec<f64> = field(&grid, &s.f0, cfg.seed, 0).iter().map(|f| f.exp()).collect();
    Ok((sc, ef0))
}

fn run_surface(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    let s = cfg.surface.as_ref().expect("validated");
    let (sc, mut ef0) = surface_setup(cfg)?;
    check_resume_len(resume, ef0.len())?;
    let mut opts = SurfaceOptions {
        t_end: cfg.integrator.t_end,
        control: cfg.integrator.control(SurfaceOptions::default().control),
        max_steps: cfg.integrator.max_steps,
        ..Default::default()
    };
    if let Some(r) = resume {
        ef0 = r.state.clone();
        opts.t0 = r.t;
        opts.control.dt0 = r.dt;
    }
    let run = surfflow::evolve(&sc, &ef0, &opts)?;
    let rows: Vec<SurfaceRow> = run
        .records
        .iter()
        .map(|r| SurfaceRow {
            t: r.t,
            mass: r.mass,
            energy: r.energy,
            v_norm: r.v.map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()),
            sup_e_minus_2f: r.sup_e_minus_2f,
            dt: r.dt,
        })
        .collect();
    let last = run.records.last().expect("initial record");
    let mut summary = BTreeMap::new();
    finite(&mut summary, "mass", last.mass);
    finite(&mut summary, "energy", last.energy);
    finite(&mut summary, "sup_e_minus_2f", last.sup_e_minus_2f);
    finite(
        &mut summary,
        "energy_increase",
        surfflow::max_energy_increase(&run.records),
    );
    let closed = match (&s.kappa, &s.f0) {
        (KappaSpec::Constant(k), FieldSpec::Constant(f)) if resume.is_none() => {
            surfflow::collapse_time(-k, s.alpha_prime, f.exp())
        }
        _ => None,
    };
    if let Some(c) = closed {
        finite(&mut summary, "closed_form_collapse_time", c);
    }
    if let Some(c) = run.collapse_time {
        finite(&mut summary, "collapse_time", c);
    }
    let collapsed = run.regime == Regime::Collapsed;
    let report = collapsed.then(|| {
        let mut m = format!(
            "collapse at t = {}: sup e^(-2f) = {:e}, mass = {:e}",
            run.collapse_time.unwrap_or(run.t_final),
            last.sup_e_minus_2f,
            last.mass
        );
        if let Some(c) = closed {
            m.push_str(&format!("; closed-form collapse time {c}"));
        }
        m
    });
    Ok(Outcome {
        flow: Flow::Surface,
        regime: match run.regime {
            Regime::Extended => "extended",
            Regime::Collapsed => "collapsed",
            Regime::LargeDataConverging => "large-data-converging",
        }
        .into(),
        exit_code: if collapsed { EXIT_BLOWUP } else { EXIT_OK },
        t_final: run.t_final,
        next_dt: run.next_dt,
        records: rows.len(),
        summary,
        report,
        csv: csv_bytes(&rows, cfg.output.cadence)?,
        state: StateDump {
            shape: grid_shape(sc.grid()),
            data: run.final_ef,
        },
    })
}

#[derive(Serialize)]
struct FuYauRow {
    t: f64,
    mass: f64,
    mass_slope: f64,
    residual: f64,
    rate_sup: f64,
    sup_eu_over_m: Option<f64>,
    m_sup_e_minus_u: Option<f64>,
    m_sup_t2: Option<f64>,
    sqrt_m_sup_ric: Option<f64>,
    dt: f64,
}

pub fn fuyau_setup(cfg: &ScenarioConfig) -> Result<FuYauScenario> {
    let f = cfg.fuyau.as_ref().expect("validated");
    let grid = PeriodicGrid::torus(4, f.n)?;
    let mut sc = FuYauScenario::smooth(&grid, f.alpha_prime, f.m, f.rho, f.mu, cfg.seed)?;
    sc.mu.iter_mut().for_each(|m| *m += f.mu_offset);
    Ok(sc)
}

fn run_fuyau(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    let f = cfg.fuyau.as_ref().expect("validated");
    let sc = fuyau_setup(cfg)?;
    check_resume_len(resume, sc.grid().len())?;
    let mut opts = FuYauOptions {
        t_end: cfg.integrator.t_end,
        control: cfg.integrator.control(FuYauOptions::default().control),
        monitor_every: f.monitor_every.unwrap_or(cfg.output.cadence),
        max_steps: cfg.integrator.max_steps,
        ..Default::default()
    };
    let w0 = match resume {
        Some(r) => {
            opts.t0 = r.t;
            opts.control.dt0 = r.dt;
            r.state.clone()
        }
        None => sc.initial_u().iter().map(|u| u.exp()).collect(),
    };
    let run = fuyau::evolve_w(&sc, w0, &opts)?;
    let mon: BTreeMap<u64, [f64; 4]> = run.monitors.iter().map(|(t, m)| (t.to_bits(), m.as_array())).collect();
    let rows: Vec<FuYauRow> = run
        .records
        .iter()
        .map(|r| {
            let m = mon.get(&r.t.to_bits());
            FuYauRow {
                t: r.t,
                mass: r.mass,
                mass_slope: r.mass_slope,
                residual: r.residual,
                rate_sup: r.rate_sup,
                sup_eu_over_m: m.map(|a| a[0]),
                m_sup_e_minus_u: m.map(|a| a[1]),
                m_sup_t2: m.map(|a| a[2]),
                sqrt_m_sup_ric: m.map(|a| a[3]),
                dt: r.dt,
            }
        })
        .collect();
    let last = run.records.last().expect("initial record");
    let mut summary = BTreeMap::new();
    finite(&mut summary, "residual", last.residual);
    finite(&mut summary, "rate_sup", last.rate_sup);
    finite(
        &mut summary,
        "mass_slope_defect",
        fuyau::mass_slope_defect(&sc, &run.records),
    );
    if let Some((_, m)) = run.monitors.last() {
        for (k, v) in ["sup_eu_over_m", "m_sup_e_minus_u", "m_sup_t2", "sqrt_m_sup_ric"]
            .iter()
            .zip(m.as_array())
        {
            finite(&mut summary, k, v);
        }
    }
    let blown = run.regime == FuYauRegime::BlownUp;
    Ok(Outcome {
        flow: Flow::Fuyau,
        regime: match run.regime {
            FuYauRegime::Converged => "converged",
            FuYauRegime::Drifting => "drifting",
            FuYauRegime::BlownUp => "blown-up",
            FuYauRegime::Unsettled => "unsettled",
        }
        .into(),
        exit_code: if blown { EXIT_BLOWUP } else { EXIT_OK },
        t_final: run.t_final,
        next_dt: run.next_dt,
        records: rows.len(),
        summary,
        report: blown.then(|| format!("blow-up at t = {}: residual {:e}", run.t_final, last.residual)),
        csv: csv_bytes(&rows, cfg.output.cadence)?,
        state: StateDump {
            shape: grid_shape(sc.grid()),
            data: run.final_w,
        },
    })
}

fn ma_grid(cfg: &ScenarioConfig) -> Result<PeriodicGrid> {
    let m = cfg.ma.as_ref().expect("validated");
    Ok(match &m.grid {
        GridSpec::Points(p) => PeriodicGrid::torus(2 * m.n, *p)?,
        GridSpec::Shape(s) => PeriodicGrid::torus_shape(s)?,
    })
}

pub fn ma_setup(cfg: &ScenarioConfig) -> Result<MAScenario> {
    let m = cfg.ma.as_ref().expect("validated");
    let grid = ma_grid(cfg)?;
    let psi = field(&grid, &m.psi, cfg.seed, 0);
    let sc = MAScenario::new(&grid, psi.clone(), None)?;
    let beta = match &m.upsilon_potential {
        None | Some(UpsilonSpec::Kind(UpsilonKind::Zero)) => None,
        Some(UpsilonSpec::Kind(UpsilonKind::Initial)) => Some(maflow::ansatz_metric(sc.chi_hat())?),
        Some(UpsilonSpec::Conformal(r)) => {
            let h: Vec<f64> = band_limited_field(&grid, cfg.seed, 1, r.amplitude, Some(r.kmax))
                .into_iter()
                .map(|v| v + r.mean)
                .collect();
            Some(HermitianField::from_points(3, &grid, |p| {
                let mut id = anomaly_core::cmat::identity(3);
                id.iter_mut().for_each(|v| *v *= h[p]);
                id
            })?)
        }
    };
    if beta.is_none() {
        return Ok(sc);
    }
    Ok(MAScenario::new(&grid, psi, beta)?)
}

#[derive(Serialize)]
struct MARow {
    t: f64,
    sup_rate: f64,
    inf_rate: f64,
    oscillation: f64,
    ma_mass_drift: f64,
    dilaton: Option<f64>,
    residual: f64,
    rate_spread: f64,
    dt: f64,
}

fn run_ma(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    let sc = ma_setup(cfg)?;
    check_resume_len(resume, sc.grid().len())?;
    let mut opts = MAOptions {
        t_end: cfg.integrator.t_end,
        control: cfg.integrator.control(MAOptions::default().control),
        max_steps: cfg.integrator.max_steps,
        ..Default::default()
    };
    let phi0 = match resume {
        Some(r) => {
            opts.t0 = r.t;
            opts.control.dt0 = r.dt;
            r.state.clone()
        }
        None => vec![0.0; sc.grid().len()],
    };
    let run = maflow::evolve(&sc, &phi0, &opts)?;
    let rows: Vec<MARow> = run
        .records
        .iter()
        .map(|r| MARow {
            t: r.t,
            sup_rate: r.sup_rate,
            inf_rate: r.inf_rate,
            oscillation: r.oscillation,
            ma_mass_drift: r.ma_mass_drift,
            dilaton: r.dilaton,
            residual: r.residual,
            rate_spread: r.rate_spread(),
            dt: r.dt,
        })
        .collect();
    let last = run.records.last().expect("initial record");
    let mp = maflow::maximum_principle_monitor(&run.records);
    let mut summary = BTreeMap::new();
    finite(&mut summary, "residual", last.residual);
    finite(&mut summary, "rate_spread", last.rate_spread());
    finite(&mut summary, "max_principle_upper_excess", mp.upper_excess);
    finite(&mut summary, "max_principle_lower_excess", mp.lower_excess);
    finite(&mut summary, "max_oscillation", mp.max_oscillation);
    finite(
        &mut summary,
        "ma_mass_drift",
        run.records.iter().map(|r| r.ma_mass_drift).fold(0.0, f64::max),
    );
    if let Some(d) = last.dilaton {
        finite(&mut summary, "dilaton", d);
        finite(&mut summary, "dilaton_increase", maflow::dilaton_increase(&run.records));
    }
    finite(&mut summary, "limit_norm_omega", run.limit_norm_omega);
    finite(&mut summary, "limit_norm_spread", run.limit_norm_spread);
    let lost = run.regime == MARegime::PositivityLost;
    Ok(Outcome {
        flow: Flow::Ma,
        regime: match run.regime {
            MARegime::Converged => "converged",
            MARegime::Running => "running",
            MARegime::PositivityLost => "positivity-lost",
        }
        .into(),
        exit_code: if lost { EXIT_BLOWUP } else { EXIT_OK },
        t_final: run.t_final,
        next_dt: run.next_dt,
        records: rows.len(),
        summary,
        report: lost.then(|| format!("positivity of chi lost at t = {}", run.t_final)),
        csv: csv_bytes(&rows, cfg.output.cadence)?,
        state: StateDump {
            shape: grid_shape(sc.grid()),
            data: run.final_phi,
        },
    })
}

#[derive(Serialize)]
struct SourceRow {
    t: f64,
    residual: f64,
    class_drift: f64,
    min_eigenvalue: f64,
    dt: f64,
}

fn run_source(cfg: &ScenarioConfig, resume: Option<&ResumePoint>) -> Result<Outcome> {
    let sc = ma_setup(cfg)?;
    let np = sc.grid().len();
    check_resume_len(resume, 9 * np)?;
    let mut opts = MAOptions {
        t_end: cfg.integrator.t_end,
        control: cfg.integrator.control(MAOptions::default().control),
        max_steps: cfg.integrator.max_steps,
        ..Default::default()
    };
    let initial = anomaly_core::calculus::conformal_volume_form(&maflow::ansatz_metric(sc.chi_hat())?)?;
    let run = match resume {
        Some(r) => {
            opts.t0 = r.t;
            opts.control.dt0 = r.dt;
            let psi = Form22::from_dual(HermitianField::from_real(3, sc.grid(), &r.state)?)?;
            maflow::evolve_source_from(&sc, &psi, &initial, &opts)?
        }
        None => maflow::evolve_source_from(&sc, &initial, &initial, &opts)?,
    };
    let rows: Vec<SourceRow> = run
        .records
        .iter()
        .map(|r| SourceRow {
            t: r.t,
            residual: r.residual,
            class_drift: r.class_drift,
            min_eigenvalue: r.min_eigenvalue,
            dt: r.dt,
        })
        .collect();
    let last = run.records.last().expect("initial record");
    let mut summary = BTreeMap::new();
    finite(&mut summary, "residual", last.residual);
    finite(&mut summary, "min_eigenvalue", last.min_eigenvalue);
    finite(
        &mut summary,
        "class_drift",
        run.records.iter().map(|r| r.class_drift).fold(0.0, f64::max),
    );
    let blown = run.regime == SourceRegime::BlownUp;
    let mut shape = vec![9];
    shape.extend(grid_shape(sc.grid()));
    Ok(Outcome {
        flow: Flow::Source,
        regime: match run.regime {
            SourceRegime::Stationary => "stationary",
            SourceRegime::Running => "running",
            SourceRegime::BlownUp => "blown-up",
        }
        .into(),
        exit_code: if blown { EXIT_BLOWUP } else { EXIT_OK },
        t_final: run.t_final,
        next_dt: run.next_dt,
        records: rows.len(),
        summary,
        report: blown.then(|| format!("(2,2)-form lost positivity at t = {}", run.t_final)),
        csv: csv_bytes(&rows, cfg.output.cadence)?,
        state: StateDump {
            shape,
            data: run.final_psi.q.to_real(),
        },
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn record_of(cfg: &ScenarioConfig, o: &Outcome, records: usize) -> RunRecord {
    RunRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.physics_hash(),
        flow: o.flow,
        seed: cfg.seed,
        regime: o.regime.clone(),
        exit_code: o.exit_code,
        t_final: o.t_final,
        next_dt: o.next_dt,
        records,
        summary: o.summary.clone(),
        report: o.report.clone(),
    }
}

/// Whether two CSV rows agree byte for byte in every column but `dt`, which
/// a resumed run cannot know for its initial row.
fn same_state_row(header: &str, a: &str, b: &str) -> bool {
    let skip = header.split(',').position(|h| h == "dt");
    let (fa, fb): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
    fa.len() == fb.len()
        && fa
            .iter()
            .zip(&fb)
            .enumerate()
            .all(|(i, (x, y))| Some(i) == skip || x == y)
}

/// Runs a scenario and writes its artifacts into `dir`.
///
/// With `resume`, the run continues from the state stored in `dir`; the first
/// diagnostic row of the continuation must reproduce the stored last row byte
/// for byte, and the new rows are appended.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path, resume: bool) -> Result<(Outcome, RunRecord)> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if !resume {
        let o = execute(cfg, None)?;
        let rec = record_of(cfg, &o, o.records);
        write(&dir.join(CSV_FILE), &o.csv)?;
        write(&dir.join(STATE_FILE), &o.state.to_npy()?)?;
        write(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
        write(
            &dir.join(RECORD_FILE),
            serde_json::to_string_pretty(&rec)
                .expect("record serializes")
                .as_bytes(),
        )?;
        return Ok((o, rec));
    }
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| CliError::io(&p, e))
    };
    let prev: RunRecord =
        serde_json::from_slice(&read(RECORD_FILE)?).map_err(|e| CliError::Resume(format!("{RECORD_FILE}: {e}")))?;
    if prev.config_hash != cfg.physics_hash() {
        return Err(CliError::Resume(
            "config differs from the stored run beyond t_end and output".into(),
        ));
    }
    if prev.exit_code != EXIT_OK {
        return Err(CliError::Resume(format!(
            "stored run ended in regime '{}'",
            prev.regime
        )));
    }
    let state = StateDump::from_npy(&read(STATE_FILE)?)?;
    let point = ResumePoint {
        t: prev.t_final,
        dt: prev.next_dt,
        state: state.data,
    };
    let o = execute(cfg, Some(&point))?;
    let old_csv = read(CSV_FILE)?;
    let old_text = String::from_utf8_lossy(&old_csv);
    let new_text = String::from_utf8_lossy(&o.csv);
    let mut new_lines = new_text.lines();
    let header = new_lines.next().unwrap_or_default();
    let first = new_lines.next().unwrap_or_default();
    let mut old_lines = old_text.lines();
    if old_lines.next() != Some(header) {
        return Err(CliError::Resume("CSV header changed".into()));
    }
    let old_last = old_text.lines().last().unwrap_or_default();
    if !same_state_row(header, old_last, first) {
        return Err(CliError::Resume(format!(
            "diagnostics are not continuous: stored '{old_last}', recomputed '{first}'"
        )));
    }
    let mut merged = old_csv.clone();
    let appended: Vec<&str> = new_lines.collect();
    for line in &appended {
        merged.extend_from_slice(line.as_bytes());
        merged.push(b'\n');
    }
    let rec = record_of(cfg, &o, prev.records + o.records.saturating_sub(1));
    write(&dir.join(CSV_FILE), &merged)?;
    write(&dir.join(STATE_FILE), &o.state.to_npy()?)?;
    write(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    write(
        &dir.join(RECORD_FILE),
        serde_json::to_string_pretty(&rec)
            .expect("record serializes")
            .as_bytes(),
    )?;
    Ok((o, rec))
}

/// The output directory: `--out` wins over `output.directory`.
pub fn output_dir(cfg: &ScenarioConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.directory.clone())
}
