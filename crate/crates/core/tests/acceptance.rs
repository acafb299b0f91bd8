//! Acceptance criteria 1–10. Each test prints one PASS/FAIL line to stderr
//! (uncaptured) and then asserts.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::time::Instant;

use dressing_forge::dpw_core::{
    build_frames, g_minus_at, sym_immersion, verify_cmc, Domain, GridSpec, MeromorphicPotential,
};
use dressing_forge::dressing_engine::{
    dress_point, dress_potential, t_dress_d, t_dress_u, DressingElement, ProbeGrid,
};
use dressing_forge::factorization::{birkhoff, iwasawa};
use dressing_forge::isotropy_lab::{
    b_zero_collapse, isotropy_verdict, run_recursion, synthetic_growth, RecursionState, Verdict,
    Which,
};
use dressing_forge::loop_algebra::{sampling, MatrixLoop, DEFAULT_TRUNCATION};
use dressing_forge::mat2::Mat2;
use dressing_forge::meromorphic::RationalFunction;
use dressing_forge::symmetry_lab::{
    constant_f_obstruction, dressed_monodromy_law, monodromy_of_automorphic,
    symmetry_equivalence_check, Automorphism, MoebiusMap,
};
use dressing_forge::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn line(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance {n:>2} {verdict} {name}: {detail}"
    );
}

#[test]
fn criterion_01_factorization_round_trip() {
    let start = Instant::now();
    let worst: (f64, f64) = (0..1000u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let degree = rng.gen_range(1..=4);
            let g = sampling::random_loop(&mut rng, degree, 0.5);
            let b = birkhoff(&g).residual;
            let i = iwasawa(&g).map(|r| r.residual).unwrap_or(f64::INFINITY);
            (b, i)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.0 <= 1e-9 && worst.1 <= 1e-9 && secs < 10.0;
    line(
        1,
        "factorization round-trip",
        pass,
        format!(
            "birkhoff {:.2e}, iwasawa {:.2e} (≤ 1e-9), {secs:.2} s (< 10 s)",
            worst.0, worst.1
        ),
    );
    assert!(pass);
}

fn cylinder_exact(z: Complex64) -> MatrixLoop {
    let mut terms = vec![(0, Mat2::IDENTITY)];
    let mut coef = c(1.0, 0.0);
    for k in 1..=DEFAULT_TRUNCATION {
        coef = coef * z / k as f64;
        let m = if k % 2 == 1 {
            Mat2::SIGMA1
        } else {
            Mat2::IDENTITY
        };
        terms.push((-k, m.scale(coef)));
    }
    MatrixLoop::from_terms(&terms).unwrap()
}

#[test]
fn criterion_02_cylinder_closed_form() {
    let xi = MeromorphicPotential::cylinder();
    let mut points = vec![c(0.0, 0.0)];
    for r in [0.25, 0.5, 0.75, 1.0] {
        for k in 0..12 {
            points.push(Complex64::from_polar(r, TAU * k as f64 / 12.0));
        }
    }
    let worst = points
        .iter()
        .map(|&z| {
            g_minus_at(&xi, z, DEFAULT_TRUNCATION)
                .unwrap()
                .distance(&cylinder_exact(z))
        })
        .fold(0.0, f64::max);
    let pass = worst <= 1e-8;
    line(
        2,
        "cylinder closed form",
        pass,
        format!(
            "max deviation {worst:.2e} (≤ 1e-8) over {} points with |z| ≤ 1",
            points.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_cmc_verification() {
    let cyl = MeromorphicPotential::cylinder();
    let ff = build_frames(&cyl, GridSpec::square(1.0, 64)).unwrap();
    let mesh = sym_immersion(&ff, c(1.0, 0.0), cyl.h).unwrap();
    let rc = verify_cmc(&mesh, cyl.h, 0.02);

    let umb = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1));
    let ff = build_frames(&umb, GridSpec::square(0.8, 64)).unwrap();
    let mesh = sym_immersion(&ff, c(1.0, 0.0), umb.h).unwrap();
    let ru = verify_cmc(&mesh, umb.h, 0.03);

    let pass = rc.passed && ru.passed && rc.checked_vertices > 0 && ru.checked_vertices > 0;
    line(
        3,
        "CMC verification",
        pass,
        format!(
            "cylinder 64×64 max |ΔH|/H {:.2e} (≤ 2%) on {} vertices; E = z max {:.2e} (≤ 3%) on {} vertices",
            rc.max_deviation, rc.checked_vertices, ru.max_deviation, ru.checked_vertices
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_dressing_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let umb = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1));
    let gs: Vec<MatrixLoop> = [c(0.3, 0.2), c(-0.4, 0.1), c(0.1, -0.5)]
        .iter()
        .map(|&z| g_minus_at(&umb, z, DEFAULT_TRUNCATION).unwrap())
        .collect();
    let mut action = 0.0f64;
    for _ in 0..20 {
        let h1 = DressingElement::random(&mut rng, 2, 0.5);
        let h2 = DressingElement::random(&mut rng, 2, 0.5);
        for g in &gs {
            let once = dress_point(&h1.compose(&h2), g, DEFAULT_TRUNCATION)
                .unwrap()
                .0;
            let inner = dress_point(&h2, g, DEFAULT_TRUNCATION).unwrap().0;
            let twice = dress_point(&h1, &inner, DEFAULT_TRUNCATION).unwrap().0;
            action = action.max(once.distance(&twice));
        }
    }

    let h = DressingElement::random(&mut rng, 2, 0.6);
    let probes = ProbeGrid::around(c(0.0, 0.0));
    let d = dress_potential(&h, &umb, &probes).unwrap();
    let hopf = d.max_hopf_residual;
    let hopf_fd = d.max_hopf_residual_fd;
    let all_probes = d.skipped.is_empty();

    let f = RationalFunction::from_coeffs(&[c(1.0, 0.0), c(0.5, 0.0)], &[c(2.0, 0.0), c(0.0, 1.0)])
        .unwrap();
    let xi = MeromorphicPotential::new(f.clone(), RationalFunction::z_pow(1));
    let t = c(0.8, -0.3);
    let closed_d = t_dress_d(t, &f).unwrap();
    let r = dress_potential(&DressingElement::t_d(t).unwrap(), &xi, &probes).unwrap();
    let mut closed = r
        .samples
        .iter()
        .map(|s| (s.f_hat_fd - closed_d.eval(s.z)).norm())
        .fold(0.0, f64::max);
    let t = c(0.4, 0.2);
    let closed_u = t_dress_u(t, &f, xi.base_point, &probes.points()).unwrap();
    let r = dress_potential(&DressingElement::t_u(t), &xi, &probes).unwrap();
    for s in &r.samples {
        let cl = closed_u.iter().find(|p| p.z == s.z).unwrap().value.unwrap();
        closed = closed.max((s.f_hat_fd - cl).norm());
    }

    let pass = action <= 1e-8 && hopf <= 1e-10 && all_probes && closed <= 1e-8;
    line(
        4,
        "dressing laws",
        pass,
        format!(
            "composition {action:.2e} (≤ 1e-8, 20 pairs); Hopf {hopf:.2e} (≤ 1e-10; differenced route {hopf_fd:.2e}); T_U/T_D closed forms {closed:.2e} (≤ 1e-8)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_component_odes() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let potentials = [
        MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1)),
        MeromorphicPotential::cylinder(),
        MeromorphicPotential::new(
            RationalFunction::from_coeffs(&[c(1.0, 0.0), c(0.0, 0.5)], &[c(1.0, 0.0)]).unwrap(),
            RationalFunction::z_pow(2),
        ),
    ];
    let mut probes_seen = 0;
    for xi in &potentials {
        for _ in 0..2 {
            let h = DressingElement::random(&mut rng, 2, 0.5);
            let d = dress_potential(&h, xi, &ProbeGrid::around(c(0.0, 0.0))).unwrap();
            probes_seen += d.samples.len();
            worst = worst.max(d.max_component_ode_residual);
        }
    }
    let pass = worst <= 1e-6 && probes_seen > 0;
    line(
        5,
        "component ODEs",
        pass,
        format!("max residual {worst:.2e} (≤ 1e-6) over {probes_seen} probes"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_isotropy_verdicts() {
    let e_z = isotropy_verdict(
        &MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1)),
        7,
    )
    .unwrap();
    let factor = e_z
        .monodromy_factors
        .iter()
        .find(|m| m.point.norm() < 1e-9)
        .map(|m| m.factor)
        .unwrap_or(c(f64::NAN, 0.0));
    let ok1 = e_z.verdict == Verdict::Trivial && (factor - c(-1.0, 0.0)).norm() <= 0.1;

    let e_z2 = isotropy_verdict(
        &MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(2)),
        7,
    )
    .unwrap();
    let ok2 = e_z2.verdict == Verdict::Trivial && e_z2.e_square_test;

    let cyl = isotropy_verdict(&MeromorphicPotential::cylinder(), 7).unwrap();
    let ok3 = cyl.verdict == Verdict::PossiblyNontrivial
        && cyl.recursion.nonzero_indices == vec![1, 3, 5, 7];

    let pass = ok1 && ok2 && ok3;
    line(
        6,
        "isotropy verdicts",
        pass,
        format!(
            "E = z: {:?}, factor {factor:.3}; E = z²: {:?}, square {}; E = 1: {:?}, nonzero b_n at {:?}",
            e_z.verdict, e_z2.verdict, e_z2.e_square_test, cyl.verdict, cyl.recursion.nonzero_indices
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_pole_order_bound() {
    let mut worst_margin = f64::INFINITY;
    let mut complete = true;
    for j in [2, 3] {
        let f = RationalFunction::z_pow(-j);
        let e = RationalFunction::z_pow(2 * j - 4);
        let st =
            RecursionState::new(&f, &e, Which::B, c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0)).unwrap();
        let (st, obs) = run_recursion(st, 7);
        complete &= obs.is_none() && st.last_index() == 7;
        for k in st.pole_orders_at(c(0.0, 0.0)).unwrap() {
            let k = k.unwrap_or(f64::INFINITY);
            worst_margin = worst_margin.min(2.0 * (j as f64 - 1.0) - k);
        }
    }
    let mut growth_margin = f64::INFINITY;
    for m in 1..=4 {
        for j in 1..=3 {
            let g = synthetic_growth(m, j).unwrap();
            growth_margin = growth_margin.min(g.k_next - (g.k_prev + m as f64 + 2.0));
        }
    }
    let pass = complete && worst_margin >= -1e-12 && growth_margin >= -1e-12;
    line(
        7,
        "pole-order bound",
        pass,
        format!(
            "min 2(j−1) − k_n = {worst_margin} for j ∈ {{2,3}}, n ≤ 7; min k_n − (k_{{n−2}} + m + 2) = {growth_margin} for m ≤ 4"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_symmetry_obstruction_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut mismatches = 0;
    let mut admitted = 0;
    for k in 0..1000 {
        let m = if k % 20 == 0 {
            MoebiusMap::rotation(rng.gen_range(0.0..TAU))
        } else {
            let b = Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..TAU));
            let a = Complex64::from_polar((1.0 + b.norm_sqr()).sqrt(), rng.gen_range(0.0..TAU));
            MoebiusMap::normalized(a, b).unwrap()
        };
        for cc in [0.5, 1.0, 2.0] {
            let r = constant_f_obstruction(cc, &m).unwrap();
            let expected = cc == 1.0 && m.b().norm() <= 1e-8 && (m.a().norm() - 1.0).abs() <= 1e-8;
            if r.admissible != expected {
                mismatches += 1;
            }
            if r.admissible {
                admitted += 1;
            }
        }
    }
    let pass = mismatches == 0 && admitted > 0;
    line(
        8,
        "symmetry obstruction sweep",
        pass,
        format!(
            "3000 cases, {admitted} admissible, {mismatches} outside {{C = 1, b = 0, |a| = 1}}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_monodromy_conjugation_law() {
    let xi = MeromorphicPotential::new(RationalFunction::z_pow(2), RationalFunction::z_pow(1))
        .with_domain(Domain::Disk)
        .with_base_point(c(0.5, 0.0));
    let rot = Automorphism::Moebius(MoebiusMap::rotation(TAU / 3.0));
    let points: Vec<Complex64> = (0..5)
        .map(|k| c(0.5, 0.0) + Complex64::from_polar(0.15, 2.0 * PI * k as f64 / 5.0))
        .collect();
    let record = monodromy_of_automorphic(&xi, &rot, &points, DEFAULT_TRUNCATION).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    let mut agree = true;
    for k in 0..10 {
        let h = DressingElement::random(&mut rng, 1 + k % 2, 0.5);
        let d = dressed_monodromy_law(&h, &record).unwrap();
        worst = worst.max(d.residual);
        for m in [rot, Automorphism::identity()] {
            agree &= symmetry_equivalence_check(&xi, &m, &h, &points)
                .unwrap()
                .agree;
        }
    }
    let cyl = symmetry_equivalence_check(
        &MeromorphicPotential::cylinder(),
        &Automorphism::translation(c(0.5, 0.0)),
        &DressingElement::identity(),
        &[c(0.0, 0.0), c(0.3, 0.2)],
    )
    .unwrap();
    agree &= cyl.agree;
    let pass = worst <= 1e-8 && agree;
    line(
        9,
        "monodromy conjugation law",
        pass,
        format!(
            "max ‖ρ − h₊ρ₋⁰h₊⁻¹‖∞ {worst:.2e} (≤ 1e-8) over 10 dressings; flags agree: {agree}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_b_zero_collapse() {
    let cases = [
        (RationalFunction::one(), RationalFunction::z_pow(1)),
        (
            RationalFunction::z_pow(1).add(&RationalFunction::one()),
            RationalFunction::z_pow(2),
        ),
        (RationalFunction::one(), RationalFunction::one()),
    ];
    let mut ok = true;
    let mut branches = 0;
    for (f, e) in &cases {
        let certs = b_zero_collapse(f, e, 4).unwrap();
        branches += certs.len();
        ok &= certs.len() == 2
            && certs.iter().all(|c| {
                c.a_equals_d && c.a_is_unit_constant && c.c_vanishes && c.all_equations_hold
            });
    }
    line(
        10,
        "b ≡ 0 collapse",
        ok,
        format!(
            "{branches} sign branches over {} potentials, each exact with p₊ = ±I",
            cases.len()
        ),
    );
    assert!(ok);
}
