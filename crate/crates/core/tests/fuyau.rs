use anomaly_core::calculus::HermitianField;
use anomaly_core::fuyau::{self, ddbar_density, sigma2_hat, FuYauOptions, FuYauRegime, FuYauScenario};
use anomaly_core::numerics::random::band_limited_field;
use anomaly_core::numerics::{PeriodicGrid, Spectral};
use num_complex::Complex64 as C64;

fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::torus(4, n).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn sigma2_closed_forms() {
    let g = grid(8);
    let sp = Spectral::new(&g);
    assert!(sigma2_hat(&sp, &vec![3.0; g.len()]).iter().all(|v| v.abs() < 1e-14));
    // z1 = x0 + i x1, z2 = x2 + i x3; u_{1 1bar} = Lap_{01} u / 4.
    let (a, b) = (0.7, -1.3);
    let u = g.sample(|x| a * x[0].cos() + b * x[2].cos());
    let expect = g.sample(|x| a * b / 16.0 * x[0].cos() * x[2].cos());
    assert!(sup_diff(&sigma2_hat(&sp, &u), &expect) < 1e-13);
    // u = cos(x0 + x2): u_{1 1bar} = u_{2 2bar} = u_{1 2bar} = -cos/4, so sigma_2 = 0.
    let u = g.sample(|x| (x[0] + x[2]).cos());
    assert!(sigma2_hat(&sp, &u).iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn sigma2_integrates_to_zero() {
    let g = grid(8);
    let sp = Spectral::new(&g);
    for seed in 0..5 {
        let u = band_limited_field(&g, seed, 0, 2.0, None);
        let s = sigma2_hat(&sp, &u);
        let scale = g.integral(&s.iter().map(|v| v.abs()).collect::<Vec<_>>());
        assert!(g.integral(&s).abs() < 1e-10 * scale.max(1.0), "seed {seed}");
    }
}

#[test]
fn ddbar_density_of_conformal_form() {
    let g = grid(8);
    let sp = Spectral::new(&g);
    let f = band_limited_field(&g, 2, 0, 1.0, Some(2));
    let beta = HermitianField::from_points(2, &g, |x| {
        vec![C64::new(f[x], 0.0), C64::default(), C64::default(), C64::new(f[x], 0.0)]
    })
    .unwrap();
    let d = ddbar_density(&sp, &beta);
    let half_lap: Vec<f64> = sp.complex_laplacian(&f).iter().map(|v| 0.5 * v).collect();
    assert!(sup_diff(&d, &half_lap) < 1e-12);
    let sc = FuYauScenario::smooth(&g, 1.0, 1.0, 1.0, 0.0, 4).unwrap();
    assert!(g.integral(&ddbar_density(&sp, &sc.rho)).abs() < 1e-10);
}

#[test]
fn zero_data_constant_state_is_stationary() {
    let g = grid(8);
    let sc = FuYauScenario::new(&g, 0.0, HermitianField::zeros(2, &g).unwrap(), vec![0.0; g.len()], 5.0).unwrap();
    let u = sc.initial_u();
    assert!(sc.rhs_scalar(&u).unwrap().iter().all(|v| v.abs() < 1e-15));
    assert_eq!(sc.stationary_residual(&u).unwrap(), 0.0);
}

#[test]
fn heat_specialization() {
    let g = grid(8);
    let sp = Spectral::new(&g);
    let src: Vec<f64> = band_limited_field(&g, 6, 0, 0.5, Some(2))
        .iter()
        .map(|v| 1.0 + v)
        .collect();
    let sc = FuYauScenario::heat(&g, &src, 2.0).unwrap();
    let w: Vec<f64> = band_limited_field(&g, 8, 0, 0.3, Some(2))
        .iter()
        .map(|v| 2.0 * v.exp())
        .collect();
    let lap = sp.complex_laplacian(&w);
    let expect: Vec<f64> = (0..g.len()).map(|i| 0.5 * (lap[i] + src[i])).collect();
    assert!(sup_diff(&sc.rhs_w(&w).unwrap(), &expect) < 1e-12);
    let run = fuyau::evolve(
        &sc,
        &sc.initial_u(),
        &FuYauOptions {
            t_end: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.regime, FuYauRegime::Drifting);
    let slope = 0.5 * g.integral(&src);
    assert!(slope > 0.0);
    for r in &run.records {
        assert!((r.mass_slope - slope).abs() < 1e-10 * slope);
    }
}

#[test]
fn mass_slope_law_with_nonzero_source() {
    let g = grid(8);
    let mut sc = FuYauScenario::smooth(&g, 0.3, 20.0, 0.4, 0.5, 11).unwrap();
    sc.mu.iter_mut().for_each(|m| *m += 0.2);
    assert!(!sc.is_integrable());
    let run = fuyau::evolve(
        &sc,
        &sc.initial_u(),
        &FuYauOptions {
            t_end: 2.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.regime, FuYauRegime::Drifting);
    assert!(fuyau::mass_slope_defect(&sc, &run.records) < 1e-8);
    // The stepped mass grows at the same rate.
    let (first, last) = (run.records[0], *run.records.last().unwrap());
    let measured = (last.mass - first.mass) / (last.t - first.t);
    assert!((measured - sc.source_integral()).abs() < 1e-8 * sc.source_integral());
}

#[test]
fn residual_matches_scaled_rate() {
    let g = grid(8);
    let sc = FuYauScenario::smooth(&g, 0.5, 3.0, 0.4, 0.5, 2).unwrap();
    let u: Vec<f64> = band_limited_field(&g, 3, 0, 0.2, Some(2))
        .iter()
        .map(|v| v + 1.0)
        .collect();
    let dens = sc.residual_density(&u).unwrap();
    let rate = sc.rhs_scalar(&u).unwrap();
    for i in 0..u.len() {
        let via_rate = rate[i] * u[i].exp();
        assert!((dens[i] - via_rate).abs() < 1e-10 * (1.0 + dens[i].abs()));
    }
}

#[test]
fn metric_form_agrees_with_scalar_form() {
    let g = grid(16);
    let sc = FuYauScenario::smooth(&g, 0.4, 1.0, 0.3, 0.5, 2).unwrap();
    let u: Vec<f64> = band_limited_field(&g, 7, 0, 0.1, Some(1))
        .iter()
        .map(|v| v + 0.5)
        .collect();
    let a = sc.rhs_scalar(&u).unwrap();
    let b = sc.metric_form_rate(&u).unwrap();
    let gap = sup_diff(&a, &b);
    assert!(gap < 1e-8, "gap {gap}");
}

#[test]
fn monitors_at_constant_state() {
    let g = grid(8);
    let m = 40.0;
    let sc = FuYauScenario::smooth(&g, 0.5, m, 0.4, 0.5, 1).unwrap();
    let mon = sc.monitors(&sc.initial_u()).unwrap().as_array();
    assert!((mon[0] - 1.0).abs() < 1e-14 && (mon[1] - 1.0).abs() < 1e-14);
    assert!(mon[2] == 0.0 && mon[3] == 0.0);
}

#[test]
fn large_m_converges_with_bounded_monitors() {
    let g = grid(8);
    let sc = FuYauScenario::smooth(&g, 0.5, 1000.0, 0.5, 1.0, 3).unwrap();
    assert!(sc.is_integrable());
    let run = fuyau::evolve(
        &sc,
        &sc.initial_u(),
        &FuYauOptions {
            t_end: 200.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.regime, FuYauRegime::Converged);
    assert!(sc.stationary_residual(&run.final_u).unwrap() < fuyau::RESIDUAL_TOL);
    for (_, m) in &run.monitors {
        let a = m.as_array();
        assert!(a[0] < 1.1 && a[1] < 1.1 && a[2] < 1.0 && a[3] < 1.0, "{a:?}");
    }
    // J decreases along the tail of the run.
    let tail = &run.records[run.records.len() / 2..];
    assert!(tail.windows(2).all(|w| w[1].j <= w[0].j));
    assert!(fuyau::mass_slope_defect(&sc, &run.records) < 1e-8);
}

#[test]
fn torsion_plateau_follows_linearized_scaling() {
    // At large M the steady state is w = M + phi with phi = O(1), so
    // |T|^2 = 2 e^{-u} |du|^2 ~ 2 |d phi|^2 / M^3 and M^3 sup|T|^2 tends to a constant.
    let g = grid(8);
    let plateau = |m: f64| {
        let sc = FuYauScenario::smooth(&g, 0.5, m, 0.5, 1.0, 3).unwrap();
        let run = fuyau::evolve(
            &sc,
            &sc.initial_u(),
            &FuYauOptions {
                t_end: 200.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(run.regime, FuYauRegime::Converged);
        run.monitors.last().unwrap().1.m_sup_t2 * m * m
    };
    let (a, b) = (plateau(250.0), plateau(1000.0));
    assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
}

#[test]
fn heat_flow_without_source_relaxes_to_mean() {
    let g = grid(8);
    let sc = FuYauScenario::heat(&g, &vec![0.0; g.len()], 1.0).unwrap();
    // Band-limit w itself: the Nyquist mode carries no Laplacian and would not relax.
    let w0: Vec<f64> = band_limited_field(&g, 5, 0, 0.3, Some(2))
        .iter()
        .map(|v| 1.0 + v)
        .collect();
    let u0: Vec<f64> = w0.iter().map(|w| w.ln()).collect();
    let mean = g.mean(&w0);
    let run = fuyau::evolve(
        &sc,
        &u0,
        &FuYauOptions {
            t_end: 300.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.regime, FuYauRegime::Converged);
    let dev = run.final_u.iter().fold(0.0_f64, |m, u| m.max((u.exp() - mean).abs()));
    // The slowest mode decays at rate 1/8, so the deviation is at most 8x the residual.
    assert!(dev < 8.0 * fuyau::RESIDUAL_TOL, "deviation {dev}");
}

#[test]
fn rejects_bad_scenarios() {
    let g2 = PeriodicGrid::torus(2, 8).unwrap();
    let z = HermitianField::zeros(1, &g2).unwrap();
    assert!(FuYauScenario::new(&g2, 0.0, z, vec![0.0; 64], 1.0).is_err());
    let g = grid(4);
    let z = HermitianField::zeros(2, &g).unwrap();
    assert!(FuYauScenario::new(&g, 0.0, z, vec![0.0; g.len()], -1.0).is_err());
}
