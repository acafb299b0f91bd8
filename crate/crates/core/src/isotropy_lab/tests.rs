use super::*;
use crate::meromorphic::Gq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn z(k: i32) -> RationalFunction {
    RationalFunction::z_pow(k)
}

fn one() -> RationalFunction {
    RationalFunction::one()
}

fn linear(root: (i64, i64), k: i32) -> RationalFunction {
    let r: Gq = gq(root.0, root.1) / gq(4, 0);
    RationalFunction::linear_pow(&r, k)
}

fn potential(f: RationalFunction, e: RationalFunction) -> MeromorphicPotential {
    MeromorphicPotential::new(f, e)
}

#[test]
fn leading_solution_examples() {
    let l = leading_solution(&one(), &one(), Which::B).unwrap();
    assert_eq!(l.solution.rational, one());
    assert!(l.solution.is_meromorphic());
    assert!(l.monodromy.is_empty());
    assert_eq!(l.meromorphic, Some(true));

    let l = leading_solution(&one(), &z(1), Which::B).unwrap();
    assert_eq!(l.solution.rational, one());
    assert_eq!(l.solution.radicand, z(-1));
    assert_eq!(l.monodromy.len(), 1);
    assert_eq!(l.monodromy[0].class, MonodromyClass::Nontrivial);
    assert!((l.monodromy[0].factor + 1.0).norm() < 1e-9);
    assert_eq!(l.meromorphic, Some(false));
    assert_eq!(l.solution.order_at(c(0.0, 0.0)).unwrap(), Some(-0.5));

    let l = leading_solution(&z(1), &z(2), Which::B).unwrap();
    let s = &l.solution;
    assert!(s.is_meromorphic());
    assert_eq!(s.rational.mul(&s.rational).mul(&s.radicand), one());
    assert_eq!(l.meromorphic, Some(true));
}

#[test]
fn leading_solution_rejects_zero_input() {
    assert!(leading_solution(&RationalFunction::zero(), &one(), Which::B).is_err());
}

#[test]
fn even_multiplicity_points_have_trivial_monodromy() {
    let e = linear((1, 1), 2).mul(&linear((-2, 0), 1));
    let l = leading_solution(&one(), &e, Which::B).unwrap();
    for m in &l.monodromy {
        let expect = if m.multiplicity % 2 == 0 {
            MonodromyClass::Trivial
        } else {
            MonodromyClass::Nontrivial
        };
        assert_eq!(m.class, expect, "{m:?}");
    }
}

#[test]
fn classify_dead_zone() {
    assert_eq!(classify_monodromy(c(0.95, 0.0)), MonodromyClass::Trivial);
    assert_eq!(
        classify_monodromy(c(-1.05, 0.02)),
        MonodromyClass::Nontrivial
    );
    assert_eq!(
        classify_monodromy(c(0.0, 1.0)),
        MonodromyClass::Inconclusive
    );
}

/// `s′/s` computed from the split `R√S` equals `w = φ′/φ − E′/(2E)`, i.e. `s`
/// solves `2Es′ + (E′ − 2(φ′/φ)E)s = 0`.
fn leading_equation_holds(f: &RationalFunction, e: &RationalFunction, which: Which) -> bool {
    let st = RecursionState::new(f, e, which, c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.2));
    let Ok(st) = st else { return true };
    let s = &st.leading;
    let from_split = s
        .rational
        .log_derivative()
        .unwrap()
        .add(&s.radicand.log_derivative().unwrap().mul(&half()));
    from_split == *st.log_derivative_of_leading()
}

#[test]
fn leading_c_solves_corrected_first_order_equation() {
    let f = z(1);
    let e = z(1).add(&RationalFunction::constant_exact(gq(2, 0)));
    assert!(leading_equation_holds(&f, &e, Which::C));
    let l = leading_solution(&f, &e, Which::C).unwrap();
    let s = &l.solution;
    let q = e.div(&f.mul(&f)).unwrap();
    assert_eq!(s.rational.mul(&s.rational).mul(&s.radicand), q);
    // 2Ec′ − (E′ − 2(f′/f)E)c = 0 gives c′/c = E′/(2E) − f′/f; dropping the
    // factor E on the f′/f term gives a different (wrong) rate.
    let lf = f.log_derivative().unwrap();
    let le = e.log_derivative().unwrap();
    let rate = s
        .rational
        .log_derivative()
        .unwrap()
        .add(&s.radicand.log_derivative().unwrap().mul(&half()));
    assert_eq!(rate, le.mul(&half()).sub(&lf));
    let dropped = e
        .derivative()
        .sub(&times(2, &lf))
        .div(&times(2, &e))
        .unwrap();
    assert_ne!(rate, dropped);
}

fn small_poly_rf() -> impl Strategy<Value = RationalFunction> {
    prop::collection::vec((-3i64..=3, -3i64..=3), 1..4).prop_filter_map("nonzero", |v| {
        let p =
            crate::meromorphic::Poly::from_coeffs(v.into_iter().map(|(a, b)| gq(a, b)).collect());
        (!p.is_zero()).then(|| RationalFunction::from_poly(p))
    })
}

fn small_rf() -> impl Strategy<Value = RationalFunction> {
    (small_poly_rf(), small_poly_rf()).prop_map(|(a, b)| a.div(&b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn leading_solves_first_order_equation(f in small_rf(), e in small_rf()) {
        prop_assert!(leading_equation_holds(&f, &e, Which::B));
        prop_assert!(leading_equation_holds(&f, &e, Which::C));
    }

    #[test]
    fn m_operator_matches_direct_l(g in small_poly_rf(), f in small_rf(), u in small_rf()) {
        // E = g² makes s rational, so L[s u] can be formed directly.
        let e = g.mul(&g);
        let lead = leading_solution(&f, &e, Which::B).unwrap();
        prop_assume!(lead.solution.is_meromorphic());
        let s = lead.solution.rational.clone();
        let lp = f.log_derivative().unwrap();
        let w = lp.sub(&e.log_derivative().unwrap().mul(&half()));
        prop_assert_eq!(s.log_derivative().unwrap(), w.clone());
        prop_assert_eq!(m_operator(&u, &w, &lp).mul(&s), apply_l(&s.mul(&u), &lp));
    }

    #[test]
    fn conjugation_swaps_b_and_c_equations(f in small_rf(), e in small_rf()) {
        let r = conjugation_symmetry_check(&f, &e).unwrap();
        prop_assert!(r.system_invariant);
        prop_assert!(r.ode_matches);
    }

    #[test]
    fn growth_check_agrees_with_degree_condition(k in -20i32..20, n_f in -6i32..6, m in 0i32..6) {
        let g = pole_growth_check(k, n_f, m);
        prop_assert_eq!(g.growth, degree_condition(k as i64, n_f as i64) != 0);
        if g.growth {
            prop_assert_eq!(g.k_next_lower_bound, Some(k + m + 2));
        }
    }
}

#[test]
fn pole_growth_examples() {
    assert_eq!(
        pole_growth_check(1, 0, 1),
        GrowthCheck {
            growth: true,
            k_next_lower_bound: Some(4)
        }
    );
    assert!(!pole_growth_check(2, -2, 1).growth);
    assert!(!pole_growth_check(1, -2, 1).growth);
}

#[test]
fn synthetic_growth_meets_bound() {
    for m in 1..=4 {
        for j in 1..=3 {
            let g = synthetic_growth(m, j).unwrap();
            assert!(g.k_next >= g.bound - 1e-12, "{g:?}");
        }
    }
}

#[test]
fn cylinder_recursion() {
    let st = RecursionState::new(
        &one(),
        &one(),
        Which::B,
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(0.0, 0.0),
    )
    .unwrap();
    let (st, obs) = run_recursion(st, 7);
    assert!(obs.is_none());
    assert_eq!(st.last_index(), 7);
    let b3 = st.coefficient(3).unwrap();
    assert!(b3.is_meromorphic() && b3.rational.is_constant() && !b3.is_zero());
    assert!(st.max_quadrature_residual < 1e-9);
    assert!(st.exact_consistent);
    for n in [2, 4, 6] {
        assert!(st.coefficient(n).unwrap().is_zero());
    }
    for n in [1, 3, 5, 7] {
        assert!(!st.coefficient(n).unwrap().is_zero());
    }
}

#[test]
fn zero_seed_gives_homogeneous_only() {
    let h = c(0.5, -0.25);
    let st = RecursionState::new(&one(), &one(), Which::B, c(0.0, 0.0), h, c(0.0, 0.0)).unwrap();
    assert!(st.coefficient(1).unwrap().is_zero());
    let st = recursion_step(&st, 3).unwrap();
    assert_eq!(
        st.coefficient(3).unwrap().rational,
        RationalFunction::constant(h).unwrap()
    );
}

#[test]
fn recursion_step_preconditions() {
    let st = RecursionState::new(
        &one(),
        &one(),
        Which::B,
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(0.0, 0.0),
    )
    .unwrap();
    assert!(recursion_step(&st, 2).is_err());
    assert!(recursion_step(&st, 5).is_err());
    assert!(recursion_step(&st, 1).is_err());
}

#[test]
fn planted_pole_orders_stay_bounded() {
    for j in [2, 3] {
        let f = z(-j);
        let e = z(2 * j - 4);
        let st =
            RecursionState::new(&f, &e, Which::B, c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0)).unwrap();
        let (st, obs) = run_recursion(st, 7);
        assert!(obs.is_none(), "{obs:?}");
        assert_eq!(st.last_index(), 7);
        for k in st.pole_orders_at(c(0.0, 0.0)).unwrap() {
            let k = k.unwrap();
            assert!(k <= 2.0 * (j as f64 - 1.0) + 1e-12, "j={j}, k={k}");
        }
    }
}

#[test]
fn pole_of_order_three_with_constant_e_grows() {
    // With E = 1 the candidate at a third-order pole exceeds 2(j − 1), so it
    // is not the coefficient of any meromorphic isotropy element.
    let st = RecursionState::new(
        &z(-3),
        &one(),
        Which::B,
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(0.5, 0.0),
    )
    .unwrap();
    let st = recursion_step(&st, 3).unwrap();
    let k = st.pole_orders_at(c(0.0, 0.0)).unwrap();
    assert_eq!(k[0], Some(3.0));
    assert!(k[1].unwrap() > 4.0);
}

/// `L[y]` by central differences on a locally single-valued `y`.
fn l_by_differences(
    y: &dyn Fn(Complex64) -> Complex64,
    lp: &RationalFunction,
    z0: Complex64,
) -> Complex64 {
    let h = 3e-3;
    let v = |k: f64| y(z0 + h * k);
    let d1 = (v(-2.0) - 8.0 * v(-1.0) + 8.0 * v(1.0) - v(2.0)) / (12.0 * h);
    let d2 = (-v(-2.0) + 16.0 * v(-1.0) - 30.0 * v(0.0) + 16.0 * v(1.0) - v(2.0)) / (12.0 * h * h);
    let d3 = (v(-3.0) - 8.0 * v(-2.0) + 13.0 * v(-1.0) - 13.0 * v(1.0) + 8.0 * v(2.0) - v(3.0))
        / (8.0 * h * h * h);
    let p = lp.eval(z0);
    let q = lp.derivative().eval(z0) - 2.0 * p * p;
    d3 - 3.0 * p * d2 - q * d1
}

#[test]
fn recursion_satisfies_original_equation_at_branch_point() {
    // E = z: b_n carries √z, so check the undivided recursion numerically
    // using the principal root away from the negative axis.
    let f = one();
    let e = z(1);
    let st = RecursionState::new(&f, &e, Which::B, c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.2)).unwrap();
    let (st, obs) = run_recursion(st, 5);
    assert!(obs.is_none(), "{obs:?}");
    let lp = f.log_derivative().unwrap();
    for n in [3usize, 5] {
        let prev = st.coefficient(n - 2).unwrap();
        let cur = st.coefficient(n).unwrap();
        let eval = |s: &SqrtRational, w: Complex64| s.eval_with_root(w, s.radicand.eval(w).sqrt());
        for z0 in [c(0.6, 0.1), c(0.4, 0.3), c(0.8, -0.2)] {
            let lhs = l_by_differences(&|w| eval(&prev, w), &lp, z0);
            let h = 1e-4;
            let db = (eval(&cur, z0 + h) - eval(&cur, z0 - h)) / (2.0 * h);
            let ev = e.eval(z0);
            let rhs = 4.0 * ev * db
                + 2.0 * (e.derivative().eval(z0) - 2.0 * lp.eval(z0) * ev) * eval(&cur, z0);
            assert!(
                (lhs - rhs).norm() <= 1e-5 * (1.0 + rhs.norm()),
                "n={n} z={z0}: {lhs} vs {rhs}"
            );
        }
    }
}

#[test]
fn quadrature_matches_exact_increments() {
    let f = z(1).add(&RationalFunction::constant_exact(gq(1, 1)));
    let e = linear((2, 2), 2).add(&one());
    let st = RecursionState::new(&f, &e, Which::B, c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)).unwrap();
    let (st, obs) = run_recursion(st, 5);
    if obs.is_none() {
        assert!(st.max_quadrature_residual < QUADRATURE_TOLERANCE);
        assert!(st.exact_consistent);
    }
}

#[test]
fn route_avoids_branch_points() {
    let p = route(c(-1.0, 0.0), c(1.0, 0.0), &[c(0.0, 0.0)]).unwrap();
    assert_eq!(p.len(), 3);
    assert!(path_clear(&p, &[c(0.0, 0.0)]));
    let walls: Vec<Complex64> = (-80..=80).map(|k| c(0.0, k as f64 * 0.01)).collect();
    assert!(route(c(-1.0, 0.0), c(1.0, 0.0), &walls).is_err());
}

#[test]
fn verdict_examples() {
    let r = isotropy_verdict(&potential(one(), z(1)), DEFAULT_N_MAX).unwrap();
    assert_eq!(r.verdict, Verdict::Trivial);
    assert!(!r.e_square_test);
    assert!(r
        .monodromy_factors
        .iter()
        .any(|m| m.class == MonodromyClass::Nontrivial));
    assert_eq!((r.n_f, r.m), (0, 1));

    let r = isotropy_verdict(&potential(one(), z(2)), DEFAULT_N_MAX).unwrap();
    assert_eq!(r.verdict, Verdict::Trivial);
    assert!(r.e_square_test);
    assert!(!r.growth.is_empty() && r.growth.iter().all(|g| g.satisfied));

    let r = isotropy_verdict(&MeromorphicPotential::cylinder(), DEFAULT_N_MAX).unwrap();
    assert_eq!(r.verdict, Verdict::PossiblyNontrivial);
    assert_eq!(r.recursion.nonzero_indices, vec![1, 3, 5, 7]);
    assert!(r.recursion.max_quadrature_residual < QUADRATURE_TOLERANCE);
}

#[test]
fn verdict_json_shape() {
    let r = isotropy_verdict(&potential(one(), z(1)), 5).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in [
        "verdict",
        "E_square_test",
        "monodromy_factors",
        "pole_table",
        "n_f",
        "m",
        "tolerances",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["verdict"], "trivial");
    assert!(v["monodromy_factors"][0].get("point").is_some());
    assert!(v["pole_table"][0].get("k_n").is_some());
    let cyl = serde_json::to_value(isotropy_verdict(&MeromorphicPotential::cylinder(), 3).unwrap())
        .unwrap();
    assert_eq!(cyl["verdict"], "possibly_nontrivial");
}

#[test]
fn case_records_at_umbilics_with_singular_f() {
    let xi = potential(z(-2), z(2)).with_base_point(c(0.5, 0.0));
    let r = isotropy_verdict(&xi, 3).unwrap();
    assert_eq!(r.verdict, Verdict::Trivial);
    let rec = &r.case_records[0];
    assert_eq!(rec.order_of_f, -2);
    assert_eq!(rec.reduction.as_ref().unwrap().f_hat_order, 0);

    let xi = potential(z(1), z(2)).with_base_point(c(0.5, 0.0));
    let r = isotropy_verdict(&xi, 3).unwrap();
    assert_eq!(r.verdict, Verdict::Trivial);
    assert_eq!(r.case_records[0].order_of_f, 1);
    assert!(r.case_records[0].reduction.is_none());
}

#[test]
fn b_zero_forces_identity() {
    let f = z(1).add(&one());
    let e = z(2).add(&RationalFunction::constant_exact(gq(0, 3)));
    let certs = b_zero_collapse(&f, &e, 4).unwrap();
    assert_eq!(certs.len(), 2);
    let signs: Vec<i32> = certs.iter().map(|c| c.branch).collect();
    assert_eq!(signs, vec![1, -1]);
    for cert in &certs {
        assert!(
            cert.a_equals_d
                && cert.a_is_unit_constant
                && cert.c_vanishes
                && cert.all_equations_hold
        );
        let a0 = cert.a[0].eval(c(0.3, 0.1));
        assert!((a0 - cert.branch as f64).norm() < 1e-15);
    }
}

#[test]
fn isotropy_transports_under_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let xi = MeromorphicPotential::cylinder();
    let h_plus = cylinder_isotropy_element(c(0.3, 0.1), 9).unwrap();
    let points = [c(0.2, 0.1), c(-0.3, 0.25), c(0.1, -0.4)];
    for _ in 0..3 {
        let h_hat = DressingElement::random(&mut rng, 2, 0.3);
        let t = transport_isotropy(&h_hat, &h_plus, &xi, &points, 24).unwrap();
        assert!(t.max_before < 1e-10, "{t:?}");
        assert!(t.max_after < 1e-6, "{t:?}");
        assert!(t.max_control > 1e-3, "{t:?}");
    }
}

fn planted_e(rng: &mut ChaCha8Rng) -> (RationalFunction, u32) {
    let root = (rng.gen_range(-4..=4), rng.gen_range(-4..=4));
    let order = rng.gen_range(1..=3u32);
    let extra = rng.gen_range(-3..=3);
    let e =
        linear(root, order as i32).mul(&z(1).add(&RationalFunction::constant_exact(gq(extra, 5))));
    (e, order)
}

#[test]
fn umbilics_always_trivial() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..12 {
        let (e, _) = planted_e(&mut rng);
        let f = match rng.gen_range(0..3) {
            0 => one(),
            1 => z(1).add(&RationalFunction::constant_exact(gq(
                rng.gen_range(2..5),
                1,
            ))),
            _ => linear((rng.gen_range(5..8), 0), -1),
        };
        let xi = potential(f, e).with_base_point(c(0.05, 0.6));
        let r = isotropy_verdict(&xi, 3).unwrap();
        assert_eq!(r.verdict, Verdict::Trivial);
        let odd = r.umbilics.iter().any(|u| u.order % 2 == 1);
        if odd {
            assert!(!r.e_square_test);
            assert!(r
                .monodromy_factors
                .iter()
                .any(|m| m.class == MonodromyClass::Nontrivial));
        }
    }
}

#[test]
fn monodromy_tracks_square_test() {
    // With f = 1 the radicand is 1/E: a nontrivial factor appears exactly
    // when E fails the square test.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..16 {
        let mut e = one();
        let mut used: Vec<(i64, i64)> = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let r = (rng.gen_range(-4..=4), rng.gen_range(-4..=4));
            if used.contains(&r) {
                continue;
            }
            used.push(r);
            e = e.mul(&linear(r, rng.gen_range(1..=3)));
        }
        let l = leading_solution(&one(), &e, Which::B).unwrap();
        let nontrivial = l
            .monodromy
            .iter()
            .any(|m| m.class == MonodromyClass::Nontrivial);
        assert_eq!(nontrivial, !square_test(&e).unwrap().is_square);
        for m in &l.monodromy {
            assert_eq!(
                m.class == MonodromyClass::Nontrivial,
                m.multiplicity % 2 != 0
            );
        }
    }
}
