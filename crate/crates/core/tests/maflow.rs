use anomaly_core::calculus::{anomaly_rhs_metric, HermitianField};
use anomaly_core::maflow::{
    self, ansatz_defect, ansatz_metric, ansatz_rate, dilaton_m, MAOptions, MARegime, MAScenario, PhiSystem,
    SourceRegime,
};
use anomaly_core::numerics::random::band_limited_field;
use anomaly_core::numerics::{PeriodicGrid, StepControl, Stepper, System};
use anomaly_core::{CoreError, Result};

fn torus(n: usize) -> PeriodicGrid {
    PeriodicGrid::torus(4, n).unwrap()
}

/// A complex 3-torus whose third factor carries a single point.
fn thin3(n: usize) -> PeriodicGrid {
    PeriodicGrid::torus_shape(&[n, n, n, n, 1, 1]).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn flat_reference_gives_unit_rate() {
    let g = torus(8);
    let sc = MAScenario::flat(&g).unwrap();
    assert!(sc.e_minus_f.iter().all(|v| *v == 1.0));
    assert!(sc
        .rhs_phi(&vec![0.0; g.len()])
        .unwrap()
        .iter()
        .all(|v| (v - 1.0).abs() < 1e-15));
    let sc3 = MAScenario::flat(&thin3(4)).unwrap();
    assert!(sc3
        .rhs_phi(&vec![0.0; 256])
        .unwrap()
        .iter()
        .all(|v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn rate_matches_hand_expansion() {
    // phi = eps (cos x0 + cos x2): d_1 dbar_1 phi = -eps cos x0 / 4, and likewise for z_2,
    // so det chi = (1 - eps cos x0 / 4)(1 - eps cos x2 / 4) exactly.
    let g = torus(8);
    let sc = MAScenario::flat(&g).unwrap();
    for eps in [1e-3, 0.1, 1.0] {
        let phi = g.sample(|x| eps * (x[0].cos() + x[2].cos()));
        let expect = g.sample(|x| (1.0 - eps * x[0].cos() / 4.0) * (1.0 - eps * x[2].cos() / 4.0));
        assert!(sup_diff(&sc.rhs_phi(&phi).unwrap(), &expect) < 1e-14);
    }
}

#[test]
fn log_rate_is_log_measure_ratio() {
    let g = torus(8);
    let sc = MAScenario::perturbed(&g, 0.3, 2, 1).unwrap();
    let phi = band_limited_field(&g, 2, 0, 0.3, Some(2));
    let rate = sc.rhs_phi(&phi).unwrap();
    let chi = sc.chi(&phi).unwrap();
    for p in 0..g.len() {
        let d = anomaly_core::cmat::det(2, &chi.at(p)).re;
        let dh = anomaly_core::cmat::det(2, &sc.chi_hat().at(p)).re;
        assert!(((rate[p] / sc.e_minus_f[p]).ln() - (d / dh).ln()).abs() < 1e-12);
    }
}

#[test]
fn ma_mass_is_cohomological() {
    for (g, seed) in [(torus(16), 3), (thin3(8), 4)] {
        let sc = MAScenario::perturbed(&g, 0.3, 3, seed).unwrap();
        let phi = band_limited_field(&g, seed + 10, 0, 0.4, Some(3));
        let m = sc.ma_mass(&phi).unwrap();
        let m0 = sc.reference_mass();
        assert!((m - m0).abs() < 1e-10 * m0, "{m} vs {m0}");
        assert!((m0 - g.volume()).abs() < 1e-10 * m0);
    }
}

#[test]
fn positivity_loss_names_location() {
    let g = torus(8);
    let sc = MAScenario::flat(&g).unwrap();
    // chi_{1 1bar} = 1 + 2 cos x0 fails where cos x0 = -1.
    let phi = g.sample(|x| -8.0 * x[0].cos());
    match sc.rhs_phi(&phi) {
        Err(CoreError::PositivityLost { min_eig, index }) => {
            assert!((min_eig + 1.0).abs() < 1e-12);
            assert!((g.coords(index)[0] - std::f64::consts::PI).abs() < 1e-12);
        }
        other => panic!("expected positivity loss, got {other:?}"),
    }
    assert!(MAScenario::new(&g, phi, None).is_err());
}

#[test]
fn ansatz_metric_examples() {
    let g = thin3(4);
    let flat = HermitianField::flat(3, &g).unwrap();
    assert_eq!(ansatz_metric(&flat).unwrap(), flat);
    let c = 1.7;
    let scaled = flat.scaled(c);
    // ||Omega||_chi = c^{-3/2}, so omega = c^3 chi = c^4 I.
    let omega = ansatz_metric(&scaled).unwrap();
    assert!(omega.max_abs_diff(&flat.scaled(c.powi(4))) < 1e-12);
    assert!(ansatz_defect(&scaled, &omega).unwrap() < 1e-10);
    let sc = MAScenario::perturbed(&thin3(8), 0.4, 2, 5).unwrap();
    let chi = sc.chi_hat();
    assert!(ansatz_defect(chi, &ansatz_metric(chi).unwrap()).unwrap() < 1e-10);
    assert!(ansatz_metric(&HermitianField::flat(2, &torus(4)).unwrap()).is_err());
}

#[test]
fn ansatz_chain_rule_matches_metric_flow() {
    let g = thin3(16);
    let sc = MAScenario::perturbed(&g, 0.2, 1, 7).unwrap();
    let phi = band_limited_field(&g, 8, 0, 0.1, Some(1));
    let chi = sc.chi(&phi).unwrap();
    let rate = sc.rhs_phi(&phi).unwrap();
    let chi_dot = HermitianField::zeros(3, &g)
        .unwrap()
        .plus_hessian(sc.spectral(), &rate)
        .unwrap();
    let via_scalar = ansatz_rate(&chi, &chi_dot).unwrap();
    let omega = ansatz_metric(&chi).unwrap();
    let via_metric = anomaly_rhs_metric(sc.spectral(), &omega, 0.0, None).unwrap();
    let gap = via_scalar.max_abs_diff(&via_metric);
    assert!(gap < 1e-8, "gap {gap}");
}

#[test]
fn flat_reference_gives_linear_potential() {
    let g = torus(8);
    let sc = MAScenario::flat(&g).unwrap();
    let run = maflow::evolve(
        &sc,
        &vec![0.0; g.len()],
        &MAOptions {
            t_end: 3.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.t_final, 3.0);
    assert!(run.final_phi.iter().all(|p| (p - 3.0).abs() < 1e-12));
    assert_eq!(run.regime, MARegime::Converged);
    assert!((run.limit_norm_omega - 1.0).abs() < 1e-14);
    let sc3 = MAScenario::flat(&thin3(4)).unwrap();
    let run = maflow::evolve(
        &sc3,
        &vec![0.0; 256],
        &MAOptions {
            t_end: 2.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(run
        .records
        .iter()
        .all(|r| (r.dilaton.unwrap() - sc3.grid().volume()).abs() < 1e-12));
}

#[test]
fn maximum_principle_holds_on_seeded_runs() {
    let g = torus(8);
    for seed in 0..10 {
        let sc = MAScenario::perturbed(&g, 0.3, 2, seed).unwrap();
        let phi0 = band_limited_field(&g, 100 + seed, 0, 0.3, Some(2));
        let run = maflow::evolve(
            &sc,
            &phi0,
            &MAOptions {
                t_end: 2.0,
                ..Default::default()
            },
        )
        .unwrap();
        let rep = maflow::maximum_principle_monitor(&run.records);
        assert!(rep.holds, "seed {seed}: {rep:?}");
        assert!(run.records.iter().all(|r| r.ma_mass_drift < 1e-10));
    }
}

/// The flow plus a forcing that pushes the rate above its initial maximum.
struct Forced<'a>(PhiSystem<'a>, Vec<f64>);

impl System for Forced<'_> {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.0.rhs(t, y, dy)?;
        dy.iter_mut().zip(&self.1).for_each(|(d, b)| *d += t * b);
        Ok(())
    }
}

#[test]
fn maximum_principle_monitor_flags_injected_violation() {
    let g = torus(8);
    let sc = MAScenario::perturbed(&g, 0.5, 2, 1).unwrap();
    let bump = g.sample(|x| 1.0 + x[0].cos());
    let sys = Forced(PhiSystem::new(&sc), bump);
    let mut phi = vec![0.0; g.len()];
    let mut rate = vec![0.0; g.len()];
    sys.rhs(0.0, &phi, &mut rate).unwrap();
    let mut records = vec![maflow::record(&sc, 0.0, 0.0, &phi, &rate).unwrap()];
    let mut stepper = Stepper::new(StepControl::default());
    let mut t = 0.0;
    while t < 1.0 {
        let rec = stepper.step(&sys, t, &mut phi, 1.0).unwrap();
        t = rec.t;
        records.push(maflow::record(&sc, t, rec.dt, &phi, stepper.cached_rate().unwrap()).unwrap());
    }
    let rep = maflow::maximum_principle_monitor(&records);
    assert!(!rep.holds && rep.upper_excess > 1e-3, "{rep:?}");
}

#[test]
fn dilaton_decreases_and_settles() {
    let g = thin3(8);
    let sc = MAScenario::perturbed(&g, 0.3, 2, 9).unwrap();
    let run = maflow::evolve(
        &sc,
        &vec![0.0; g.len()],
        &MAOptions {
            t_end: 20.0,
            ..Default::default()
        },
    )
    .unwrap();
    let inc = maflow::dilaton_increase(&run.records);
    assert!(inc <= 1e-8, "increase {inc}");
    let m: Vec<f64> = run.records.iter().map(|r| r.dilaton.unwrap()).collect();
    assert!(m[0] - m[m.len() - 1] > 1e-6);
    // dM/dt at the end is far below its initial size.
    let slope = |i: usize| (m[i + 1] - m[i]) / (run.records[i + 1].t - run.records[i].t);
    assert!(slope(m.len() - 2).abs() < 1e-3 * slope(0).abs());
    assert!(run.records.iter().all(|r| r.ma_mass_drift < 1e-10));
}

#[test]
fn perturbed_class_converges_to_flat() {
    let g = torus(8);
    let sc = MAScenario::perturbed(&g, 0.2, 1, 4).unwrap();
    let run = maflow::evolve(
        &sc,
        &vec![0.0; g.len()],
        &MAOptions {
            t_end: 50.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.regime, MARegime::Converged);
    assert!(run.records.last().unwrap().residual < maflow::RESIDUAL_TOL);
    assert!((run.limit_norm_omega - 1.0).abs() < 1e-6 && run.limit_norm_spread < 1e-6);
    assert!(maflow::maximum_principle_monitor(&run.records).holds);
}

#[test]
fn source_designed_fixed_point_is_stationary() {
    let g = thin3(8);
    let base = MAScenario::perturbed(&g, 0.3, 2, 2).unwrap();
    let omega0 = ansatz_metric(base.chi_hat()).unwrap();
    let sc = MAScenario::new(&g, base.psi.clone(), Some(omega0.clone())).unwrap();
    let run = maflow::evolve_source(&sc, &omega0, &MAOptions::default()).unwrap();
    assert_eq!(run.regime, SourceRegime::Stationary);
    assert_eq!(run.records.len(), 1);
}

#[test]
fn source_free_flow_matches_scalar_path() {
    let g = thin3(16);
    let sc = MAScenario::perturbed(&g, 0.2, 1, 3).unwrap();
    let omega0 = ansatz_metric(sc.chi_hat()).unwrap();
    let t_end = 0.5;
    let opts = MAOptions {
        t_end,
        ..Default::default()
    };
    let src = maflow::evolve_source(&sc, &omega0, &opts).unwrap();
    assert_eq!(src.regime, SourceRegime::Running);
    assert_eq!(src.t_final, t_end);
    let scalar = maflow::evolve(&sc, &vec![0.0; g.len()], &opts).unwrap();
    let omega_scalar = ansatz_metric(&sc.chi(&scalar.final_phi).unwrap()).unwrap();
    let gap = src.final_omega.max_abs_diff(&omega_scalar);
    assert!(gap < 1e-8, "gap {gap}");
    let drift = src.records.iter().map(|r| r.class_drift).fold(0.0, f64::max);
    assert!(drift < 1e-8, "class drift {drift}");
}

#[test]
fn source_flow_step_round_trips() {
    let g = thin3(8);
    let sc = MAScenario::perturbed(&g, 0.3, 2, 6).unwrap();
    let omega = ansatz_metric(sc.chi_hat()).unwrap();
    let upsilon = sc.upsilon().unwrap();
    let next = maflow::source_flow_step(sc.spectral(), &omega, &upsilon, 0.0).unwrap();
    assert!(next.max_abs_diff(&omega) < 1e-12);
    let stepped = maflow::source_flow_step(sc.spectral(), &omega, &upsilon, 1e-3).unwrap();
    assert!(stepped.max_abs_diff(&omega) > 0.0);
    assert!((dilaton_m(&omega) - sc.dilaton(&vec![0.0; g.len()]).unwrap()).abs() < 1e-14);
}

#[test]
fn rejects_bad_scenarios() {
    let odd = PeriodicGrid::torus(3, 4).unwrap();
    assert!(MAScenario::flat(&odd).is_err());
    let big = PeriodicGrid::torus(8, 2).unwrap();
    assert!(MAScenario::flat(&big).is_err());
    let g = torus(4);
    let beta = HermitianField::flat(3, &thin3(4)).unwrap();
    assert!(MAScenario::new(&g, vec![0.0; g.len()], Some(beta)).is_err());
}
