use anomaly_core::lieflow::{
    self, diag, exterior, frobenius, rhs_general, rhs_printed, Classification, EvolveOptions, GauduchonParam, Group,
    LieAlgebra, PrintedConvention, StationarySet,
};
use anomaly_core::numerics::random::{rng, uniform_in};
use num_complex::Complex64 as C64;

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

#[test]
fn abelian_rate_is_exactly_zero() {
    let alg = LieAlgebra::standard(Group::Abelian);
    let mut r = rng(7, 0);
    for _ in 0..10 {
        let g = random_metric(&mut r);
        let rate = rhs_general(&g, &alg, GauduchonParam::new(1.0, 0.7)).unwrap();
        assert!(rate.iter().all(|v| *v == C64::default()));
    }
}

#[test]
fn trace_rm_rm_matches_closed_form_in_unitary_frame() {
    let id = diag([1.0; 3]);
    for group in Group::ALL {
        let alg = LieAlgebra::standard(group);
        for kappa in [1.0, 0.3, -0.7] {
            let a = lieflow::trace_rm_rm(&alg, &id, kappa).unwrap();
            let b = lieflow::trace_rm_rm_unitary(&alg, kappa);
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d < 1e-12, "{group:?} kappa {kappa}: {d}");
        }
        let lich = lieflow::trace_rm_rm(&alg, &random_metric(&mut rng(1, 1)), 0.5).unwrap();
        assert!(exterior::max_abs(&lich) < 1e-12);
    }
}

#[test]
fn torsion_vanishes_only_for_abelian() {
    let g = random_metric(&mut rng(3, 0));
    assert_eq!(
        exterior::max_abs(&lieflow::torsion_form(&LieAlgebra::standard(Group::Abelian), &g)),
        0.0
    );
    for group in [Group::Nilpotent, Group::Solvable, Group::Sl2c] {
        let t = lieflow::torsion_form(&LieAlgebra::standard(group), &g);
        assert!(exterior::max_abs(&t) > 1e-3);
    }
}

#[test]
fn printed_sl2c_examples() {
    let r = rhs_printed(&diag([1.0; 3]), Group::Sl2c, 4.0, PrintedConvention::Quarter).unwrap();
    assert!((r[0].re - 1.0).abs() < 1e-15);
    let at = 1.3;
    let r = rhs_printed(&diag([at / 2.0; 3]), Group::Sl2c, at, PrintedConvention::Quarter).unwrap();
    assert!(frobenius(&r) < 1e-15);
    let mut g = diag([1.0; 3]);
    g[1] = C64::new(0.1, 0.0);
    assert!(rhs_printed(&g, Group::Sl2c, at, PrintedConvention::Quarter).is_err());
}

#[test]
fn oracle_ratio_is_constant_per_group() {
    let mut r = rng(11, 2);
    for (group, expected) in [(Group::Solvable, 1.0), (Group::Sl2c, -1.0)] {
        let alg = LieAlgebra::standard(group);
        for _ in 0..20 {
            let l = [
                uniform_in(&mut r, 0.3, 3.0),
                uniform_in(&mut r, 0.3, 3.0),
                uniform_in(&mut r, 0.3, 3.0),
            ];
            let kappa = uniform_in(&mut r, 0.6, 1.5);
            let param = GauduchonParam::with_alpha_tau(kappa, uniform_in(&mut r, 0.2, 3.0)).unwrap();
            let g = diag(l);
            let a = rhs_general(&g, &alg, param).unwrap();
            let b = rhs_printed(&g, group, param.alpha_tau(), PrintedConvention::Quarter).unwrap();
            for k in 0..3 {
                let (x, y) = (a[4 * k].re, b[4 * k].re);
                assert!(
                    (x - expected * y).abs() < 1e-12 * (1.0 + y.abs()),
                    "{group:?}: {x} vs {y}"
                );
            }
        }
    }
}

#[test]
fn solvable_family_is_stationary() {
    let alg = LieAlgebra::standard(Group::Solvable);
    let param = GauduchonParam::with_alpha_tau(1.0, 1.0).unwrap();
    let StationarySet::Family(fam) = lieflow::stationary_points(Group::Solvable, 1.0) else {
        panic!("expected a family");
    };
    let mut r = rng(5, 0);
    for _ in 0..20 {
        let g = fam
            .member(
                uniform_in(&mut r, 0.5, 2.0),
                uniform_in(&mut r, 0.5, 2.0),
                C64::new(uniform_in(&mut r, -0.1, 0.1), uniform_in(&mut r, -0.1, 0.1)),
                C64::new(uniform_in(&mut r, -0.1, 0.1), uniform_in(&mut r, -0.1, 0.1)),
            )
            .unwrap();
        assert!(fam.contains(&g, 1e-12));
        assert!(frobenius(&rhs_general(&g, &alg, param).unwrap()) < 1e-10);
    }
}

#[test]
fn nilpotent_and_non_admissible_have_no_stationary_points() {
    assert!(matches!(
        lieflow::stationary_points(Group::Nilpotent, 1.0),
        StationarySet::Empty { .. }
    ));
    assert!(matches!(
        lieflow::stationary_points(Group::Sl2c, -1.0),
        StationarySet::Empty { .. }
    ));
    assert_eq!(lieflow::stationary_points(Group::Abelian, 1.0), StationarySet::Cone);
}

#[test]
fn heisenberg_center_is_conserved_and_others_grow_linearly() {
    let alg = LieAlgebra::standard(Group::Nilpotent);
    let param = GauduchonParam::new(1.0, 0.5);
    let opts = EvolveOptions {
        t_end: 10.0,
        sample_dt: 0.1,
        ..Default::default()
    };
    let traj = lieflow::evolve(&diag([1.0, 2.0, 3.0]), &alg, param, &opts).unwrap();
    let (idx, drift) = traj.conserved_index();
    assert_eq!(idx, 2);
    assert!(drift < 1e-8, "drift {drift}");
    for k in 0..2 {
        let (slope, _, r2) = lieflow::trailing_fit(&traj, k);
        assert!(slope > 0.0 && r2 > 0.999, "entry {k}: slope {slope}, r2 {r2}");
    }
    assert_eq!(traj.classification, Classification::DivergingLinear);
    for s in &traj.samples {
        assert!(s.g[3..].iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn sl2c_fixed_point_is_a_saddle() {
    let alg = LieAlgebra::standard(Group::Sl2c);
    let param = GauduchonParam::with_alpha_tau(1.0, 2.0).unwrap();
    let StationarySet::Point(g) = lieflow::stationary_points(Group::Sl2c, 2.0) else {
        panic!("expected a point");
    };
    assert!(frobenius(&rhs_general(&g, &alg, param).unwrap()) < 1e-12);
    let ev = lieflow::linearization_spectrum(&g, &alg, param).unwrap();
    assert!(ev.iter().any(|v| v.re > 1e-8));
    assert!(ev.iter().any(|v| v.re < -1e-8));
}

#[test]
fn solvable_keeps_g12_zero() {
    let alg = LieAlgebra::standard(Group::Solvable);
    let param = GauduchonParam::with_alpha_tau(1.0, 1.0).unwrap();
    let mut g = diag([1.0, 1.5, 0.3]);
    g[2] = C64::new(0.05, 0.02);
    g[6] = g[2].conj();
    let opts = EvolveOptions {
        t_end: 2.0,
        sample_dt: 0.1,
        ..Default::default()
    };
    let traj = lieflow::evolve(&g, &alg, param, &opts).unwrap();
    for s in &traj.samples {
        assert!(s.g[3].abs() < 1e-12 && s.g[4].abs() < 1e-12);
    }
}

#[test]
fn linearization_requires_stationary_base() {
    let alg = LieAlgebra::standard(Group::Sl2c);
    let param = GauduchonParam::with_alpha_tau(1.0, 2.0).unwrap();
    assert!(lieflow::linearization_spectrum(&diag([1.0, 2.0, 3.0]), &alg, param).is_err());
}
