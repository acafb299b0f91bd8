use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::loop_algebra::{sampling, LoopClass, LoopKind};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn omega() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / 3.0)
}

fn umbilic_rotational() -> (MeromorphicPotential, Automorphism) {
    let xi = MeromorphicPotential::new(RationalFunction::z_pow(2), RationalFunction::z_pow(1))
        .with_domain(Domain::Disk)
        .with_base_point(c(0.5, 0.0));
    (
        xi,
        Automorphism::Moebius(MoebiusMap::rotation(2.0 * PI / 3.0)),
    )
}

fn umbilic_points() -> Vec<Complex64> {
    (0..5)
        .map(|k| c(0.5, 0.0) + Complex64::from_polar(0.15, 2.0 * PI * k as f64 / 5.0))
        .collect()
}

fn cylinder_points() -> Vec<Complex64> {
    vec![c(0.0, 0.0), c(0.3, 0.2), c(-0.4, 0.1), c(0.2, -0.5)]
}

fn exp_sigma1(tau: Complex64) -> MatrixLoop {
    let mut terms = vec![(0, Mat2::IDENTITY)];
    let mut coef = c(1.0, 0.0);
    for k in 1..=DEFAULT_TRUNCATION {
        coef = coef * tau / k as f64;
        let m = if k % 2 == 1 {
            Mat2::SIGMA1
        } else {
            Mat2::IDENTITY
        };
        terms.push((-k, m.scale(coef)));
    }
    MatrixLoop::from_terms(&terms).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng) -> MoebiusMap {
    let b = Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0 * PI));
    let a = Complex64::from_polar((1.0 + b.norm_sqr()).sqrt(), rng.gen_range(0.0..2.0 * PI));
    MoebiusMap::normalized(a, b).unwrap()
}

#[test]
fn moebius_examples() {
    let id = MoebiusMap::identity();
    assert_eq!(id.eval(c(0.3, -0.2)), c(0.3, -0.2));
    assert!(id.fixed_point_in_disk());
    let r = MoebiusMap::rotation(0.7);
    assert!(r.fixed_point_in_disk());
    assert!((r.eval(c(0.5, 0.0)) - Complex64::from_polar(0.5, 0.7)).norm() < 1e-15);
    let h = MoebiusMap::new(c(2f64.sqrt(), 0.0), c(1.0, 0.0)).unwrap();
    assert!(!h.fixed_point_in_disk());
    // z² − 1 = 0: both fixed points sit on the boundary.
    assert!(h.interior_fixed_points().is_empty());
    for z in [c(1.0, 0.0), c(-1.0, 0.0)] {
        assert!((h.eval(z) - z).norm() < 1e-12);
    }
}

#[test]
fn elliptic_map_off_origin_has_interior_fixed_point() {
    let m = MoebiusMap::new(c(0.0, 2f64.sqrt()), c(1.0, 0.0)).unwrap();
    assert!(!m.fixed_point_in_disk());
    let fp = m.interior_fixed_points();
    assert_eq!(fp.len(), 1);
    assert!((fp[0] - c(0.0, 2f64.sqrt() - 1.0)).norm() < 1e-12);
    assert!((m.eval(fp[0]) - fp[0]).norm() < 1e-12);
}

#[test]
fn invalid_maps_are_rejected() {
    assert!(matches!(
        MoebiusMap::new(c(1.0, 0.0), c(0.5, 0.0)),
        Err(Error::InvalidMoebius(_))
    ));
    assert!(MoebiusMap::normalized(c(0.5, 0.0), c(1.0, 0.0)).is_err());
    let bad: std::result::Result<MoebiusMap, _> = serde_json::from_str(r#"{"a":[1,0],"b":[1,0]}"#);
    assert!(bad.is_err());
    let ok: MoebiusMap = serde_json::from_str(r#"{"a":[1,0],"b":[0,0]}"#).unwrap();
    assert_eq!(ok, MoebiusMap::identity());
}

#[test]
fn automorphism_json_round_trip() {
    let a = Automorphism::Moebius(MoebiusMap::rotation(1.0));
    let s = serde_json::to_string(&a).unwrap();
    assert!(s.contains("\"kind\":\"moebius\""));
    assert_eq!(serde_json::from_str::<Automorphism>(&s).unwrap(), a);
    let t: Automorphism =
        serde_json::from_str(r#"{"kind":"affine","alpha":[1,0],"tau":[0.5,0]}"#).unwrap();
    assert_eq!(t, Automorphism::translation(c(0.5, 0.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_with_inverse_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_map(&mut rng);
        let id = m.compose(&m.inverse()).unwrap();
        prop_assert!((id.a() - 1.0).norm() < 1e-12 && id.b().norm() < 1e-12);
        prop_assert!(id.normalization_defect() <= MOEBIUS_TOLERANCE);
    }

    #[test]
    fn composition_acts_pointwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m1, m2) = (random_map(&mut rng), random_map(&mut rng));
        let m = m1.compose(&m2).unwrap();
        let z = Complex64::from_polar(rng.gen_range(0.0..0.9), rng.gen_range(0.0..2.0 * PI));
        let want = m1.eval(m2.eval(z));
        prop_assert!((m.eval(z) - want).norm() < 1e-10 * (1.0 + want.norm()));
        prop_assert!(m.eval(z).norm() < 1.0);
    }

    #[test]
    fn algebraic_criterion_matches_its_statement(seed in any::<u64>(), rotate in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = if rotate { MoebiusMap::rotation(rng.gen_range(0.0..2.0 * PI)) } else { random_map(&mut rng) };
        let algebraic = (m.a().norm() - 1.0).abs() <= 1e-12 && m.b().norm() <= 1e-12;
        prop_assert_eq!(m.fixed_point_in_disk(), algebraic);
        if algebraic {
            prop_assert!(m.interior_fixed_points().iter().any(|z| z.norm() < 1e-12));
        }
    }
}

#[test]
fn obstruction_examples() {
    let rot = MoebiusMap::rotation(1.3);
    let r = constant_f_obstruction(1.0, &rot).unwrap();
    assert!(r.admissible);
    assert!(r.derived.b_zero);
    assert!((r.derived.c_value - 1.0).abs() < 1e-12);
    assert!((r.derived.a_modulus - 1.0).abs() < 1e-12);
    assert!(r.unitarity_defect < 1e-12);

    let m = MoebiusMap::new(c(1.25f64.sqrt(), 0.0), c(0.5, 0.0)).unwrap();
    let r = constant_f_obstruction(1.0, &m).unwrap();
    assert!(!r.admissible);
    assert!(r.residuals.eq5_prime > 0.1 && r.residuals.q_condition > 0.1);
    assert!(r.residuals.eq3 < 1e-12);

    let r = constant_f_obstruction(2.0, &rot).unwrap();
    assert!(!r.admissible);
    assert!((r.residuals.eq5_prime - 1.0).abs() < 1e-12);
    assert!(r.residuals.q_condition < 1e-12);
    assert!(constant_f_obstruction(0.0, &rot).is_err());
}

#[test]
fn autodress_matches_pullback_only_for_unit_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let m = random_map(&mut rng);
        assert!(constant_f_obstruction(1.0, &m).unwrap().autodress_residual < 1e-10);
        let r = constant_f_obstruction(2.0, &m).unwrap();
        // C² − C = 2 over |b̄z + ā|², which is at most (|a| + |b|)².
        let bound = 2.0 / (m.a().norm() + m.b().norm()).powi(2);
        assert!(r.autodress_residual >= bound * 0.99);
    }
}

#[test]
fn obstruction_sweep_admits_only_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut admitted = 0;
    for k in 0..1000 {
        let m = if k % 10 == 0 {
            MoebiusMap::rotation(rng.gen_range(0.0..2.0 * PI))
        } else {
            random_map(&mut rng)
        };
        let cval = if k % 3 == 0 {
            1.0
        } else {
            rng.gen_range(0.1..4.0)
        };
        let r = constant_f_obstruction(cval, &m).unwrap();
        let rotation_family = m.b().norm() <= 1e-12 && (cval - 1.0).abs() <= 1e-12;
        assert_eq!(
            r.admissible,
            rotation_family,
            "C = {cval}, a = {}, b = {}",
            m.a(),
            m.b()
        );
        if r.admissible {
            admitted += 1;
            let res = &r.residuals;
            assert!([res.eq3, res.eq4, res.eq5_prime, res.q_condition]
                .iter()
                .all(|x| *x <= 1e-8));
        }
    }
    assert!(admitted > 0);
}

#[test]
fn derived_c_solves_eq5_prime() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let m = random_map(&mut rng);
        let r = constant_f_obstruction(1.0, &m).unwrap();
        let cv = r.derived.c_value;
        let g = cv - m.b().norm_sqr() / (cv * cv) - m.a().norm_sqr();
        assert!(g.abs() < 1e-9 * (1.0 + m.a().norm_sqr()));
    }
}

#[test]
fn automorphic_examples() {
    let cyl = MeromorphicPotential::cylinder();
    let r = automorphic_check(&cyl, &Automorphism::translation(c(0.5, 0.25))).unwrap();
    assert!(r.holds && r.exact);

    let (xi, rot) = umbilic_rotational();
    let r = automorphic_check(&xi, &rot).unwrap();
    assert!(r.holds);
    assert!(r.f_residual <= 1e-10 && r.e_residual <= 1e-10);

    let bad = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1))
        .with_domain(Domain::Disk)
        .with_base_point(c(0.5, 0.0));
    assert!(!automorphic_check(&bad, &rot).unwrap().holds);

    let exact_rot = Automorphism::Affine {
        alpha: c(0.0, 1.0),
        tau: c(0.0, 0.0),
    };
    let quartic = MeromorphicPotential::new(RationalFunction::z_pow(3), RationalFunction::z_pow(6));
    let r = automorphic_check(&quartic, &exact_rot).unwrap();
    assert!(r.holds && r.exact);
}

#[test]
fn automorphy_of_plane_rotations_by_direct_substitution() {
    // f = z^{k−1}, E = z^{2k−2}·z^j is invariant under z ↦ ζz with ζ^k = 1 when ζ^j = 1.
    for k in 2..6 {
        let zeta = Complex64::from_polar(1.0, 2.0 * PI / k as f64);
        let xi = MeromorphicPotential::new(
            RationalFunction::z_pow(k - 1),
            RationalFunction::z_pow(2 * k - 2 + k),
        );
        let m = Automorphism::Affine {
            alpha: zeta,
            tau: c(0.0, 0.0),
        };
        assert!(automorphic_check(&xi, &m).unwrap().holds, "k = {k}");
        let xi = MeromorphicPotential::new(
            RationalFunction::z_pow(k - 1),
            RationalFunction::z_pow(2 * k - 1),
        );
        assert!(!automorphic_check(&xi, &m).unwrap().holds, "k = {k}");
    }
}

#[test]
fn cylinder_monodromy_is_exponential() {
    let tau = c(0.7, -0.2);
    let rec = monodromy_of_automorphic(
        &MeromorphicPotential::cylinder(),
        &Automorphism::translation(tau),
        &cylinder_points(),
        DEFAULT_TRUNCATION,
    )
    .unwrap();
    assert!(rec.rho_minus_0.distance(&exp_sigma1(tau)) < 1e-8);
    assert!(rec.spread < 1e-8);
    assert!(rec
        .rho_minus_0
        .check_class(&LoopClass::new(LoopKind::MinusBased)));
    assert!((rec.rho_minus_0.coeff(0) - Mat2::IDENTITY).max_norm() < 1e-14);
}

#[test]
fn identity_monodromy_is_trivial() {
    let (xi, _) = umbilic_rotational();
    let rec = monodromy_of_automorphic(
        &xi,
        &Automorphism::identity(),
        &umbilic_points(),
        DEFAULT_TRUNCATION,
    )
    .unwrap();
    assert!(rec.rho_minus_0.distance(&MatrixLoop::identity()) < 1e-15);
    assert!(rec.spread < 1e-14);
}

#[test]
fn umbilic_monodromy_is_base_point_independent() {
    let (xi, rot) = umbilic_rotational();
    let rec = monodromy_of_automorphic(&xi, &rot, &umbilic_points(), DEFAULT_TRUNCATION).unwrap();
    assert!(rec.spread <= 1e-8, "spread {}", rec.spread);
    assert!(rec.w_plus_residual <= 1e-8);
    assert!(rec
        .rho_minus_0
        .check_class(&LoopClass::new(LoopKind::MinusBased)));
    assert!(rec.rho_minus_0.distance(&MatrixLoop::identity()) > 1e-3);
    let json = serde_json::to_value(&rec).unwrap();
    assert!(json.get("rho_minus_0").is_some() && json.get("samples").is_none());
}

#[test]
fn non_automorphic_input_is_rejected() {
    let xi = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1))
        .with_domain(Domain::Disk)
        .with_base_point(c(0.5, 0.0));
    let (_, rot) = umbilic_rotational();
    assert!(matches!(
        monodromy_of_automorphic(&xi, &rot, &umbilic_points(), DEFAULT_TRUNCATION),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn tampered_samples_signal_inconsistency() {
    // Without automorphy the quotient depends on the sample point.
    let xi = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1));
    let m = Automorphism::translation(c(0.5, 0.0));
    assert!(!automorphic_check(&xi, &m).unwrap().holds);
    let it = Integrator::new(&xi, DEFAULT_TRUNCATION).unwrap();
    let path = connecting_path(&m, xi.base_point);
    let rho = transport(&it, &path).unwrap();
    let mut spread = 0.0f64;
    for z in cylinder_points() {
        let seg = [xi.base_point, z];
        let mut image = path.clone();
        image.push(m.eval(z));
        let q = minus_part(
            &transport(&it, &image)
                .unwrap()
                .multiply(&transport(&it, &seg).unwrap().adjugate()),
            DEFAULT_TRUNCATION,
        );
        spread = spread.max(q.distance(&rho));
    }
    assert!(spread > 1e-3);
}

#[test]
fn identity_dressing_leaves_monodromy() {
    let rec = monodromy_of_automorphic(
        &MeromorphicPotential::cylinder(),
        &Automorphism::translation(c(0.4, 0.1)),
        &cylinder_points(),
        DEFAULT_TRUNCATION,
    )
    .unwrap();
    let d = dressed_monodromy_law(&DressingElement::identity(), &rec).unwrap();
    assert!(d.rho.distance(&rec.rho_minus_0) < 1e-15);
    assert!(d.residual <= 1e-10, "residual {}", d.residual);
    assert!(d.w_plus_residual <= 1e-10);
}

#[test]
fn diagonal_dressing_of_cylinder_matches_conjugation() {
    let tau = c(0.6, 0.3);
    let t = c(1.3, -0.4);
    let rec = monodromy_of_automorphic(
        &MeromorphicPotential::cylinder(),
        &Automorphism::translation(tau),
        &cylinder_points(),
        DEFAULT_TRUNCATION,
    )
    .unwrap();
    let d = dressed_monodromy_law(&DressingElement::t_d(t).unwrap(), &rec).unwrap();
    assert!(d.residual <= 1e-8);
    let oracle = |l: Complex64| {
        let x = tau / l;
        Mat2::IDENTITY.scale(x.cosh()) + Mat2::antidiag(t * t, 1.0 / (t * t)).scale(x.sinh())
    };
    for s in &d.samples {
        assert!(circle_gap(|l| s.quotient_at(l), oracle) <= 1e-8);
    }
}

#[test]
fn random_dressing_of_umbilic_example() {
    let (xi, rot) = umbilic_rotational();
    let rec = monodromy_of_automorphic(&xi, &rot, &umbilic_points(), DEFAULT_TRUNCATION).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let h = DressingElement::random(&mut rng, 2, 0.5);
        let d = dressed_monodromy_law(&h, &rec).unwrap();
        assert!(d.residual <= 1e-8, "residual {}", d.residual);
        assert!(
            d.w_plus_residual <= 1e-8,
            "w residual {}",
            d.w_plus_residual
        );
        let r = sampling::random_minus_based(&mut rng, 2, 0.5);
        let perturbed = d.rho.multiply(&r);
        let defect = w_plus_defect(&perturbed, &d.samples, DEFAULT_TRUNCATION).unwrap();
        assert!(defect > 1e-4, "perturbed defect {defect}");
    }
}

#[test]
fn equivalence_examples() {
    let (xi, rot) = umbilic_rotational();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = DressingElement::random(&mut rng, 2, 0.5);

    let id =
        symmetry_equivalence_check(&xi, &Automorphism::identity(), &h, &umbilic_points()).unwrap();
    assert!(id.symmetric && id.g_minus_invariant && id.agree);

    let cyl = symmetry_equivalence_check(
        &MeromorphicPotential::cylinder(),
        &Automorphism::translation(c(0.5, 0.0)),
        &DressingElement::identity(),
        &cylinder_points(),
    )
    .unwrap();
    assert!(!cyl.symmetric && !cyl.g_minus_invariant && cyl.agree);
    assert!(cyl.trace_mode_max > 1e-3);

    let u = symmetry_equivalence_check(&xi, &rot, &h, &umbilic_points()).unwrap();
    assert!(!u.symmetric && !u.g_minus_invariant && u.agree);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dressed_law_and_equivalence_hold_on_umbilic_family(seed in any::<u64>(), full_turn in any::<bool>()) {
        let (xi, rot) = umbilic_rotational();
        let m = if full_turn { Automorphism::identity() } else { rot };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DressingElement::random(&mut rng, 2, 0.4);
        let rec = monodromy_of_automorphic(&xi, &m, &umbilic_points()[..3], DEFAULT_TRUNCATION).unwrap();
        let d = dressed_monodromy_law(&h, &rec).unwrap();
        prop_assert!(d.residual <= 1e-8);
        let e = symmetry_equivalence_check(&xi, &m, &h, &umbilic_points()[..3]).unwrap();
        prop_assert!(e.agree);
        prop_assert_eq!(e.symmetric, full_turn);
    }
}

#[test]
fn omega_cubed_is_one() {
    assert!((omega().powi(3) - 1.0).norm() < 1e-15);
    let (_, rot) = umbilic_rotational();
    assert!((rot.eval(c(1.0, 0.0)) - omega()).norm() < 1e-15);
}
