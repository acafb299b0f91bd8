//! Dressing isotropy of an extended frame, read off from the potential.
//!
//! An isotropy element gives `p₊ = (a b; c d)` solving the system below with
//! `ĥ.f = f`. Expanding `b = Σ b_n λⁿ` (odd `n`) turns the third-order
//! equation for `b` into the recursion
//! `L[b_{n−2}] = 4E b_n′ + 2(E′ − 2(φ′/φ)E) b_n` with `φ = f`; the equation
//! for `c` is the same with `φ = E/f`.
//!
//! Writing `b_n = s·u_n` with `s = √(φ²/E)` the homogeneous solution, the
//! recursion becomes `u_n′ = M[u_{n−2}] / (4E)`, `M[u] = L[s u] / s`. Since
//! `w = s′/s` is rational, `M` maps rational functions to rational
//! functions and each step is an exact Hermite integration.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dpw_core::{g_minus_at, MeromorphicPotential};
use crate::dressing_engine::{dress_point, DressingElement};
use crate::error::{Error, Result};
use crate::loop_algebra::MatrixLoop;
use crate::mat2::Mat2;
use crate::meromorphic::{
    gq, gq_from_c64, gq_sqrt_exact, segment_integral, square_test, RationalFunction,
    ROOT_CLUSTER_TOL,
};

/// A monodromy factor within this distance of `±1` is classified.
pub const MONODROMY_THRESHOLD: f64 = 0.1;
pub const DEFAULT_N_MAX: usize = 7;
/// Integration paths keep this distance from branch points and poles.
pub const BRANCH_CLEARANCE: f64 = 1e-2;
/// Relative agreement required between exact and quadrature increments.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

const MONODROMY_STEPS: usize = 512;
const CONTINUATION_STEPS: usize = 64;
const QUADRATURE_PANELS: usize = 8;
const PROBE_RADIUS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    B,
    C,
}

fn half() -> RationalFunction {
    RationalFunction::constant_exact(gq_from_c64(Complex64::new(0.5, 0.0)).expect("finite"))
}

fn times(k: i64, r: &RationalFunction) -> RationalFunction {
    r.scale(&gq(k, 0))
}

/// `φ = f` for `b`, `φ = E/f` for `c`.
pub fn phi(f: &RationalFunction, e: &RationalFunction, which: Which) -> Result<RationalFunction> {
    match which {
        Which::B => Ok(f.clone()),
        Which::C => e.div(f),
    }
}

/// `rational · √radicand`, the root taken along a path from a base point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqrtRational {
    pub rational: RationalFunction,
    pub radicand: RationalFunction,
}

impl SqrtRational {
    pub fn is_meromorphic(&self) -> bool {
        self.radicand.is_constant()
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero()
    }

    /// Order at `z0`, half-integral at a branch point; `None` for zero.
    pub fn order_at(&self, z0: Complex64) -> Result<Option<f64>> {
        if self.rational.is_zero() {
            return Ok(None);
        }
        let r = self.rational.order_at(z0)? as f64;
        let s = self.radicand.order_at(z0)? as f64;
        Ok(Some(r + 0.5 * s))
    }

    pub fn times(&self, u: &RationalFunction) -> SqrtRational {
        SqrtRational {
            rational: self.rational.mul(u),
            radicand: self.radicand.clone(),
        }
    }

    /// Value with the square root fixed by `root` (a root of the radicand).
    pub fn eval_with_root(&self, z: Complex64, root: Complex64) -> Complex64 {
        self.rational.eval(z) * root
    }
}

/// `√(φ²/E) = R·√S` with `S` squarefree; constant `S` is folded into `R`.
pub fn sqrt_of(q: &RationalFunction) -> Result<SqrtRational> {
    if q.is_zero() {
        return Err(Error::Domain("square root of the zero function".into()));
    }
    let split = q.square_split();
    if split.radicand.is_constant() {
        let c = split.radicand.numerator().lead();
        let root = match gq_sqrt_exact(&c) {
            Some(r) => r,
            None => gq_from_c64(crate::meromorphic::gq_to_c64(&c).sqrt())?,
        };
        return Ok(SqrtRational {
            rational: split.root_part.scale(&root),
            radicand: RationalFunction::one(),
        });
    }
    Ok(SqrtRational {
        rational: split.root_part,
        radicand: split.radicand,
    })
}

/// Continues a root of `q` along `path` starting from `start`.
fn continue_root(q: &RationalFunction, path: &[Complex64], start: Complex64) -> Complex64 {
    let mut r = start;
    for seg in path.windows(2) {
        for k in 1..=CONTINUATION_STEPS {
            let z = seg[0] + (seg[1] - seg[0]) * (k as f64 / CONTINUATION_STEPS as f64);
            let v = q.eval(z).sqrt();
            r = if (v - r).norm() <= (v + r).norm() {
                v
            } else {
                -v
            };
        }
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MonodromyClass {
    Trivial,
    Nontrivial,
    Inconclusive,
}

pub fn classify_monodromy(factor: Complex64) -> MonodromyClass {
    if (factor - 1.0).norm() <= MONODROMY_THRESHOLD {
        MonodromyClass::Trivial
    } else if (factor + 1.0).norm() <= MONODROMY_THRESHOLD {
        MonodromyClass::Nontrivial
    } else {
        MonodromyClass::Inconclusive
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonodromyFactor {
    pub point: Complex64,
    /// Order of `φ²/E` at the point.
    pub multiplicity: i32,
    pub factor: Complex64,
    pub class: MonodromyClass,
}

/// Factor picked up by `√q` along a small circle about each zero and pole of `q`.
pub fn monodromy_factors(q: &RationalFunction) -> Vec<MonodromyFactor> {
    let mut pts: Vec<(Complex64, i32)> =
        q.zeros().into_iter().map(|(z, m)| (z, m as i32)).collect();
    pts.extend(q.poles().into_iter().map(|(z, m)| (z, -(m as i32))));
    pts.iter()
        .map(|&(p, mult)| {
            let nearest = pts
                .iter()
                .map(|(o, _)| (o - p).norm())
                .filter(|d| *d > ROOT_CLUSTER_TOL)
                .fold(f64::INFINITY, f64::min);
            let r = (0.4 * nearest).min(0.1);
            let circle: Vec<Complex64> = (0..=MONODROMY_STEPS)
                .map(|k| {
                    p + Complex64::from_polar(
                        r,
                        std::f64::consts::TAU * k as f64 / MONODROMY_STEPS as f64,
                    )
                })
                .collect();
            let start = q.eval(circle[0]).sqrt();
            let end = continue_root(q, &circle, start);
            let factor = end / start;
            MonodromyFactor {
                point: p,
                multiplicity: mult,
                factor,
                class: classify_monodromy(factor),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LeadingSolution {
    pub which: Which,
    pub solution: SqrtRational,
    pub monodromy: Vec<MonodromyFactor>,
    /// `None` when some factor is inconclusive.
    pub meromorphic: Option<bool>,
}

/// `√(f²/E)` for `b₁`, `√(E/f²)` for `c₁`, with monodromy about every zero
/// and pole of the radicand.
pub fn leading_solution(
    f: &RationalFunction,
    e: &RationalFunction,
    which: Which,
) -> Result<LeadingSolution> {
    if f.is_zero() || e.is_zero() {
        return Err(Error::Domain("f and E must not vanish identically".into()));
    }
    let p = phi(f, e, which)?;
    let q = p.mul(&p).div(e)?;
    let solution = sqrt_of(&q)?;
    let monodromy = monodromy_factors(&q);
    let meromorphic = if monodromy
        .iter()
        .any(|m| m.class == MonodromyClass::Inconclusive)
    {
        None
    } else {
        Some(monodromy.iter().all(|m| m.class == MonodromyClass::Trivial))
    };
    Ok(LeadingSolution {
        which,
        solution,
        monodromy,
        meromorphic,
    })
}

/// `L[y] = y‴ − 3(φ′/φ)y″ − ((φ′/φ)′ − 2(φ′/φ)²)y′`, with `lp = φ′/φ`.
pub fn apply_l(y: &RationalFunction, lp: &RationalFunction) -> RationalFunction {
    let y1 = y.derivative();
    let y2 = y1.derivative();
    let y3 = y2.derivative();
    let q1 = lp.derivative().sub(&times(2, &lp.mul(lp)));
    y3.sub(&times(3, &lp.mul(&y2))).sub(&q1.mul(&y1))
}

/// `M[u] = L[s u] / s` where `w = s′/s`.
pub fn m_operator(
    u: &RationalFunction,
    w: &RationalFunction,
    lp: &RationalFunction,
) -> RationalFunction {
    let u1 = u.derivative();
    let u2 = u1.derivative();
    let u3 = u2.derivative();
    let w1 = w.derivative();
    let w2 = w1.derivative();
    let ww = w.mul(w);
    let w1ww = w1.add(&ww);
    let y1 = u1.add(&w.mul(u));
    let y2 = u2.add(&times(2, &w.mul(&u1))).add(&w1ww.mul(u));
    let y3 = u3
        .add(&times(3, &w.mul(&u2)))
        .add(&times(3, &w1ww.mul(&u1)))
        .add(&w2.add(&times(3, &w.mul(&w1))).add(&ww.mul(w)).mul(u));
    let q1 = lp.derivative().sub(&times(2, &lp.mul(lp)));
    y3.sub(&times(3, &lp.mul(&y2))).sub(&q1.mul(&y1))
}

/// Coefficients of `λ²(y‴ + p₂y″ + p₁y′) = r₁y′ + r₀y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdeCoefficients {
    pub second: RationalFunction,
    pub first: RationalFunction,
    pub rhs_first: RationalFunction,
    pub rhs_zero: RationalFunction,
}

/// The third-order equation for `b` written with a generic `φ`.
pub fn ode_coefficients(
    f: &RationalFunction,
    e: &RationalFunction,
    which: Which,
) -> Result<OdeCoefficients> {
    let lp = phi(f, e, which)?.log_derivative()?;
    Ok(OdeCoefficients {
        second: times(-3, &lp),
        first: lp.derivative().sub(&times(2, &lp.mul(&lp))).neg(),
        rhs_first: times(4, e),
        rhs_zero: times(2, &e.derivative().sub(&times(2, &lp.mul(e)))),
    })
}

/// The equation for `c` with `f` and `E` spelled out, as obtained by the swap.
pub fn c_ode_explicit(f: &RationalFunction, e: &RationalFunction) -> Result<OdeCoefficients> {
    let lf = f.log_derivative()?;
    let g = e.log_derivative()?.sub(&lf);
    Ok(OdeCoefficients {
        second: times(-3, &g),
        first: g.derivative().sub(&times(2, &g.mul(&g))).neg(),
        rhs_first: times(4, e),
        rhs_zero: times(-2, &e.derivative().sub(&times(2, &lf.mul(e)))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Var {
    A,
    B,
    C,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Coef {
    F,
    EOverF,
}

type FirstOrderSystem = BTreeMap<Var, Vec<(i8, Coef, Var)>>;

/// `λX′ = Σ ± coef · Y` for the isotropy system (`ĥ.f = f`).
fn isotropy_system() -> FirstOrderSystem {
    use Coef::*;
    use Var::*;
    BTreeMap::from([
        (A, vec![(1, EOverF, B), (-1, F, C)]),
        (B, vec![(1, F, A), (-1, F, D)]),
        (C, vec![(1, EOverF, D), (-1, EOverF, A)]),
        (D, vec![(1, F, C), (-1, EOverF, B)]),
    ])
}

fn swap_system(s: &FirstOrderSystem) -> FirstOrderSystem {
    let v = |x: Var| match x {
        Var::A => Var::D,
        Var::B => Var::C,
        Var::C => Var::B,
        Var::D => Var::A,
    };
    let c = |x: Coef| match x {
        Coef::F => Coef::EOverF,
        Coef::EOverF => Coef::F,
    };
    s.iter()
        .map(|(k, terms)| {
            let mut t: Vec<_> = terms.iter().map(|&(sg, co, x)| (sg, c(co), v(x))).collect();
            t.sort();
            (v(*k), t)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugationSymmetry {
    /// The swap `f → E/f, a ↔ d, b ↔ c` maps the first-order system to itself.
    pub system_invariant: bool,
    /// The generic `φ = E/f` equation equals the explicit equation for `c`.
    pub ode_matches: bool,
}

pub fn conjugation_symmetry_check(
    f: &RationalFunction,
    e: &RationalFunction,
) -> Result<ConjugationSymmetry> {
    let mut sys = isotropy_system();
    for t in sys.values_mut() {
        t.sort();
    }
    Ok(ConjugationSymmetry {
        system_invariant: swap_system(&sys) == sys,
        ode_matches: ode_coefficients(f, e, Which::C)? == c_ode_explicit(f, e)?,
    })
}

/// Result of imposing `b ≡ 0` on the isotropy system, one sign branch.
#[derive(Clone, Debug, Serialize)]
pub struct CollapseCertificate {
    pub branch: i32,
    pub a: Vec<RationalFunction>,
    pub d: Vec<RationalFunction>,
    pub c: Vec<RationalFunction>,
    pub a_equals_d: bool,
    pub a_is_unit_constant: bool,
    pub c_vanishes: bool,
    pub all_equations_hold: bool,
}

/// Solves the isotropy system with `b ≡ 0` order by order in `λ` up to
/// `λ^{2·depth}` and records the forced values of `a`, `c`, `d`.
pub fn b_zero_collapse(
    f: &RationalFunction,
    e: &RationalFunction,
    depth: usize,
) -> Result<Vec<CollapseCertificate>> {
    if f.is_zero() || e.is_zero() {
        return Err(Error::Domain("f and E must not vanish identically".into()));
    }
    let depth = depth.max(1);
    let ef = e.div(f)?;
    let zero = RationalFunction::zero();
    let roots = square_test(&RationalFunction::one())?;
    let a0 = roots
        .sqrt
        .ok_or_else(|| Error::Domain("1 has no square root".into()))?;
    let mut out = Vec::new();
    for branch in [a0.clone(), a0.neg()] {
        // λb′ = (a − d) f at λ^{2k}: d_{2k} = a_{2k} − (λb′)_{2k}/f.
        // det p₊ = 1 at λ^{2k}: Σ a_{2i} d_{2k−2i} = δ_{k0}.
        let mut a = vec![branch.clone()];
        let mut d = vec![branch.sub(&zero.div(f)?)];
        for k in 1..depth {
            let mut acc = zero.clone();
            for i in 1..k {
                acc = acc.add(&a[i].mul(&d[k - i]));
            }
            let ak = acc.neg().div(&a[0].add(&d[0]))?;
            d.push(ak.sub(&zero.div(f)?));
            a.push(ak);
        }
        // λa′ = b E/f − f c at λ^{2k+1}: c_{2k+1} = (b_{2k+1} E/f − a_{2k}′)/f.
        let c: Vec<RationalFunction> = a
            .iter()
            .map(|ak| zero.mul(&ef).sub(&ak.derivative()).div(f))
            .collect::<Result<_>>()?;
        let a_equals_d = a.iter().zip(&d).all(|(x, y)| x == y);
        let a_is_unit_constant = a[0].mul(&a[0]) == RationalFunction::one()
            && a.iter().skip(1).all(RationalFunction::is_zero);
        let c_vanishes = c.iter().all(RationalFunction::is_zero);
        let mut ok = true;
        for k in 0..depth {
            // λd′ = c f − (E/f) b, λc′ = (d − a) E/f.
            ok &= d[k].derivative() == c[k].mul(f);
            if k + 1 < depth {
                ok &= c[k].derivative() == d[k + 1].sub(&a[k + 1]).mul(&ef);
            }
        }
        out.push(CollapseCertificate {
            branch: if branch == a0 { 1 } else { -1 },
            a,
            d,
            c,
            a_equals_d,
            a_is_unit_constant,
            c_vanishes,
            all_equations_hold: ok,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Coefficient {
    pub n: usize,
    /// `u_n = b_n / s`.
    pub u: RationalFunction,
    pub value: SqrtRational,
    /// Values at the probe points, root continued from the base point.
    pub samples: Vec<(Complex64, Complex64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoleEntry {
    pub point: Complex64,
    pub n: usize,
    /// Pole order of `b_n` (negative for a zero); `None` when `b_n ≡ 0`.
    pub k_n: Option<f64>,
}

/// Odd coefficients of `b` (or `c`) computed so far. Even ones vanish.
#[derive(Clone, Debug, Serialize)]
pub struct RecursionState {
    pub which: Which,
    pub leading: SqrtRational,
    /// `C_b` (or `C_c`).
    pub constant: Complex64,
    /// Integration constant added to each `u_n`, `n ≥ 3`.
    pub homogeneous: Complex64,
    pub coefficients: Vec<Coefficient>,
    pub base_point: Complex64,
    pub probes: Vec<Complex64>,
    pub marked_points: Vec<Complex64>,
    pub max_quadrature_residual: f64,
    pub exact_consistent: bool,
    #[serde(skip)]
    e: RationalFunction,
    #[serde(skip)]
    lp: RationalFunction,
    #[serde(skip)]
    w: RationalFunction,
    #[serde(skip)]
    obstacles: Vec<Complex64>,
    #[serde(skip)]
    base_root: Complex64,
}

fn distance_to_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

fn path_clear(path: &[Complex64], obstacles: &[Complex64]) -> bool {
    path.windows(2).all(|s| {
        obstacles
            .iter()
            .all(|&o| distance_to_segment(o, s[0], s[1]) > BRANCH_CLEARANCE)
    })
}

/// Straight path, or a two-segment detour when an obstacle is too close.
pub fn route(a: Complex64, b: Complex64, obstacles: &[Complex64]) -> Result<Vec<Complex64>> {
    let direct = vec![a, b];
    if path_clear(&direct, obstacles) {
        return Ok(direct);
    }
    let d = b - a;
    let normal = if d.norm() > 0.0 {
        Complex64::i() * d / d.norm()
    } else {
        Complex64::i()
    };
    for k in 1..=10 {
        for sign in [1.0, -1.0] {
            let mid = (a + b) * 0.5 + normal * (sign * 0.05 * k as f64);
            let path = vec![a, mid, b];
            if path_clear(&path, obstacles) {
                return Ok(path);
            }
        }
    }
    Err(Error::Integration(format!(
        "no path from {a} to {b} keeps {BRANCH_CLEARANCE} away from the branch points"
    )))
}

fn path_integral(g: &RationalFunction, path: &[Complex64]) -> Complex64 {
    path.windows(2)
        .map(|s| segment_integral(|z| g.eval(z), s[0], s[1], QUADRATURE_PANELS))
        .sum()
}

impl RecursionState {
    /// State holding `b₁ = C·√(φ²/E)`.
    pub fn new(
        f: &RationalFunction,
        e: &RationalFunction,
        which: Which,
        constant: Complex64,
        homogeneous: Complex64,
        base_point: Complex64,
    ) -> Result<Self> {
        let seed = RationalFunction::constant(constant)?;
        Self::with_seed(f, e, which, seed, constant, homogeneous, base_point)
    }

    /// State whose first coefficient is `s·u₁` for an arbitrary rational `u₁`.
    pub fn with_seed(
        f: &RationalFunction,
        e: &RationalFunction,
        which: Which,
        u1: RationalFunction,
        constant: Complex64,
        homogeneous: Complex64,
        base_point: Complex64,
    ) -> Result<Self> {
        let lead = leading_solution(f, e, which)?;
        let p = phi(f, e, which)?;
        let lp = p.log_derivative()?;
        let w = lp.sub(&e.log_derivative()?.mul(&half()));
        let mut obstacles: Vec<Complex64> = Vec::new();
        for r in [&p, e, f, &u1] {
            obstacles.extend(r.zeros().into_iter().chain(r.poles()).map(|(z, _)| z));
        }
        let mut marked: Vec<Complex64> = Vec::new();
        for r in [e, f] {
            for (z, _) in r.zeros().into_iter().chain(r.poles()) {
                if marked.iter().all(|m| (m - z).norm() > ROOT_CLUSTER_TOL) {
                    marked.push(z);
                }
            }
        }
        let candidates = [
            base_point,
            base_point + Complex64::new(0.1, 0.07),
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.3, 0.25),
            Complex64::new(0.15, -0.35),
            Complex64::new(0.55, 0.45),
        ];
        let base = candidates
            .into_iter()
            .find(|c| {
                obstacles
                    .iter()
                    .all(|o| (o - c).norm() > 5.0 * BRANCH_CLEARANCE)
            })
            .ok_or_else(|| Error::Integration("no base point clear of the branch points".into()))?;
        let probes: Vec<Complex64> = (0..6)
            .map(|k| {
                base + Complex64::from_polar(
                    PROBE_RADIUS,
                    std::f64::consts::PI * (2 * k + 1) as f64 / 6.0,
                )
            })
            .filter(|z| {
                obstacles
                    .iter()
                    .all(|o| (o - z).norm() > 5.0 * BRANCH_CLEARANCE)
            })
            .collect();
        let base_root = lead.solution.radicand.eval(base).sqrt();
        let mut state = RecursionState {
            which,
            leading: lead.solution,
            constant,
            homogeneous,
            coefficients: Vec::new(),
            base_point: base,
            probes,
            marked_points: marked,
            max_quadrature_residual: 0.0,
            exact_consistent: true,
            e: e.clone(),
            lp,
            w,
            obstacles,
            base_root,
        };
        let first = state.coefficient_from(1, u1)?;
        state.coefficients.push(first);
        Ok(state)
    }

    fn coefficient_from(&self, n: usize, u: RationalFunction) -> Result<Coefficient> {
        let value = self.leading.times(&u);
        let mut samples = Vec::with_capacity(self.probes.len());
        for &z in &self.probes {
            let path = route(self.base_point, z, &self.obstacles)?;
            let root = continue_root(&value.radicand, &path, self.base_root);
            samples.push((z, value.eval_with_root(z, root)));
        }
        Ok(Coefficient {
            n,
            u,
            value,
            samples,
        })
    }

    /// `b_n`; even indices are identically zero.
    pub fn coefficient(&self, n: usize) -> Option<SqrtRational> {
        if n % 2 == 0 {
            return Some(SqrtRational {
                rational: RationalFunction::zero(),
                radicand: self.leading.radicand.clone(),
            });
        }
        self.coefficients
            .iter()
            .find(|c| c.n == n)
            .map(|c| c.value.clone())
    }

    pub fn last_index(&self) -> usize {
        self.coefficients.last().map_or(0, |c| c.n)
    }

    /// `w = s′/s`.
    pub fn log_derivative_of_leading(&self) -> &RationalFunction {
        &self.w
    }

    /// Pole orders of every computed coefficient at every marked point.
    pub fn pole_table(&self) -> Result<Vec<PoleEntry>> {
        let mut out = Vec::new();
        for &p in &self.marked_points {
            for c in &self.coefficients {
                out.push(PoleEntry {
                    point: p,
                    n: c.n,
                    k_n: c.value.order_at(p)?.map(|o| -o),
                });
            }
        }
        Ok(out)
    }

    pub fn pole_orders_at(&self, p: Complex64) -> Result<Vec<Option<f64>>> {
        self.coefficients
            .iter()
            .map(|c| Ok(c.value.order_at(p)?.map(|o| -o)))
            .collect()
    }
}

/// Computes `b_n` from `b_{n−2}`. A logarithmic term in `∫M[u]/(4E)` means
/// no meromorphic candidate exists at this order and the step fails.
pub fn recursion_step(state: &RecursionState, n: usize) -> Result<RecursionState> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "recursion index must be odd and ≥ 3, got {n}"
        )));
    }
    if state.last_index() != n - 2 {
        return Err(Error::InvalidInput(format!(
            "b_{} is not known (last computed index {})",
            n - 2,
            state.last_index()
        )));
    }
    let prev = &state.coefficients.last().expect("nonempty").u;
    let mu = m_operator(prev, &state.w, &state.lp);
    let integrand = mu.div(&times(4, &state.e))?;
    let anti = integrand.integrate()?;
    if !anti.is_rational() {
        return Err(Error::Integration(format!(
            "index {n}: ∫M[u]/(4E) has logarithmic part {}; no meromorphic candidate",
            anti.log_part
        )));
    }
    let u = anti
        .rational
        .add(&RationalFunction::constant(state.homogeneous)?);
    let mut next = state.clone();
    next.exact_consistent &= times(4, &state.e).mul(&u.derivative()) == mu;
    let base_val = u.eval(state.base_point);
    let mut obstacles = state.obstacles.clone();
    obstacles.extend(integrand.poles().into_iter().map(|(z, _)| z));
    for &z in &state.probes {
        let path = route(state.base_point, z, &obstacles)?;
        let quad = path_integral(&integrand, &path);
        let exact = u.eval(z) - base_val;
        let res = (quad - exact).norm() / (1.0 + exact.norm());
        next.max_quadrature_residual = next.max_quadrature_residual.max(res);
    }
    next.obstacles = obstacles;
    let coeff = next.coefficient_from(n, u)?;
    next.coefficients.push(coeff);
    Ok(next)
}

/// Runs the recursion up to `n_max`; stops early at an obstruction.
pub fn run_recursion(mut state: RecursionState, n_max: usize) -> (RecursionState, Option<String>) {
    let mut n = state.last_index() + 2;
    while n <= n_max {
        match recursion_step(&state, n) {
            Ok(s) => state = s,
            Err(e) => return (state, Some(e.to_string())),
        }
        n += 2;
    }
    (state, None)
}

/// `(k+2)(k+1) + 3n_f(k+1) + n_f + 2n_f²`, the factor multiplying the
/// leading pole term of `L[b_{n−2}]`.
pub fn degree_condition(k: i64, n_f: i64) -> i64 {
    (k + 2) * (k + 1) + 3 * n_f * (k + 1) + n_f + 2 * n_f * n_f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GrowthCheck {
    pub growth: bool,
    pub k_next_lower_bound: Option<i32>,
}

/// `k_n ≥ k_{n−2} + m + 2` unless `k_{n−2} ∈ {−2(n_f+1), −(n_f+1)}`.
pub fn pole_growth_check(k_prev: i32, n_f: i32, m: i32) -> GrowthCheck {
    let growth = k_prev != -2 * (n_f + 1) && k_prev != -(n_f + 1);
    GrowthCheck {
        growth,
        k_next_lower_bound: growth.then_some(k_prev + m + 2),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SyntheticGrowth {
    pub m: u32,
    pub seed_order: i32,
    pub k_prev: f64,
    pub k_next: f64,
    pub bound: f64,
}

/// One recursion step for `f = 1`, `E = zᵐ`, `b₁ = s·z^{−j}`; measures the
/// pole order produced at the umbilic.
pub fn synthetic_growth(m: u32, j: i32) -> Result<SyntheticGrowth> {
    let e = RationalFunction::z_pow(m as i32);
    let f = RationalFunction::one();
    let one = Complex64::new(1.0, 0.0);
    let state = RecursionState::with_seed(
        &f,
        &e,
        Which::B,
        RationalFunction::z_pow(-j),
        one,
        Complex64::new(0.0, 0.0),
        Complex64::new(0.3, 0.2),
    )?;
    let next = recursion_step(&state, 3)?;
    let zero = Complex64::new(0.0, 0.0);
    let orders = next.pole_orders_at(zero)?;
    let k_prev = orders[0].ok_or_else(|| Error::Domain("seed vanished".into()))?;
    let k_next = orders[1].ok_or_else(|| Error::Domain("b₃ vanished".into()))?;
    Ok(SyntheticGrowth {
        m,
        seed_order: j,
        k_prev,
        k_next,
        bound: k_prev + m as f64 + 2.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trivial,
    PossiblyNontrivial,
}

#[derive(Clone, Debug, Serialize)]
pub struct Umbilic {
    pub point: Complex64,
    pub order: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthStep {
    pub n: usize,
    pub k_prev: f64,
    pub k_n: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Reduction {
    pub generator: &'static str,
    pub t: Complex64,
    /// Order of the dressed `f̂` at the umbilic.
    pub f_hat_order: i32,
}

/// An umbilic where `f` has a zero or pole.
#[derive(Clone, Debug, Serialize)]
pub struct CaseRecord {
    pub point: Complex64,
    pub order_of_f: i32,
    pub reduction: Option<Reduction>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionSummary {
    pub n_max: usize,
    pub computed_through: usize,
    pub nonzero_indices: Vec<usize>,
    pub obstruction: Option<String>,
    pub max_quadrature_residual: f64,
    pub exact_consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportTolerances {
    pub monodromy_threshold: f64,
    pub branch_clearance: f64,
    pub root_cluster: f64,
    pub quadrature: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotropyReport {
    pub verdict: Verdict,
    pub reason: String,
    #[serde(rename = "E_square_test")]
    pub e_square_test: bool,
    pub umbilics: Vec<Umbilic>,
    pub monodromy_factors: Vec<MonodromyFactor>,
    pub leading_meromorphic: Option<bool>,
    pub marked_point: Complex64,
    pub n_f: i32,
    pub m: i32,
    pub pole_table: Vec<PoleEntry>,
    pub growth: Vec<GrowthStep>,
    pub case_records: Vec<CaseRecord>,
    pub recursion: RecursionSummary,
    pub tolerances: ReportTolerances,
}

fn sort_points(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Tries `T_U(1)`, which sends `∫f` to `∫f/(1 + ∫f)`, to make `f̂` regular
/// and nonzero at `z0`.
fn case_record(xi: &MeromorphicPotential, z0: Complex64, order: i32) -> Result<CaseRecord> {
    let prim = xi.f.integrate()?;
    let note;
    let mut reduction = None;
    if order >= 1 {
        note = format!(
            "f vanishes to order {order}; T_U and T_D act on ∫f by Möbius maps, which keep its critical point"
        );
    } else if !prim.is_rational() && prim.log_part.order_at(z0)? < 0 {
        note = "∫f has a logarithmic term at the umbilic".to_string();
    } else if order <= -3 {
        note = format!(
            "∫f has a pole of order {}, ramified under every Möbius map",
            -order - 1
        );
    } else {
        let base = gq_from_c64(xi.base_point)?;
        let shift = prim
            .rational
            .eval_exact(&base)
            .ok_or_else(|| Error::Domain("∫f has a pole at the base point".into()))?;
        let big_f = prim.rational.sub(&RationalFunction::constant_exact(shift));
        let t = Complex64::new(1.0, 0.0);
        let den = RationalFunction::one().add(&big_f);
        let f_hat = xi.f.div(&den.mul(&den))?;
        let k = f_hat.order_at(z0)?;
        note = if k == 0 {
            "T_U(1) makes f̂ regular and nonzero at the umbilic".to_string()
        } else {
            format!("T_U(1) leaves f̂ with order {k}")
        };
        reduction = Some(Reduction {
            generator: "TU",
            t,
            f_hat_order: k,
        });
    }
    Ok(CaseRecord {
        point: z0,
        order_of_f: order,
        reduction,
        note,
    })
}

fn show(z: Complex64) -> String {
    Complex64::new(z.re + 0.0, z.im + 0.0).to_string()
}

/// Decides whether the dressing isotropy of the frame of `xi` is trivial.
pub fn isotropy_verdict(xi: &MeromorphicPotential, n_max: usize) -> Result<IsotropyReport> {
    xi.validate()?;
    let mut umbilics: Vec<Umbilic> =
        xi.e.zeros()
            .into_iter()
            .map(|(point, order)| Umbilic { point, order })
            .collect();
    umbilics.sort_by(|a, b| {
        a.point
            .norm()
            .partial_cmp(&b.point.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sq = square_test(&xi.e)?;
    let lead = leading_solution(&xi.f, &xi.e, Which::B)?;

    let marked_point = match umbilics.first() {
        Some(u) => u.point,
        None => {
            let mut pts: Vec<Complex64> =
                xi.f.zeros()
                    .into_iter()
                    .chain(xi.f.poles())
                    .map(|(z, _)| z)
                    .collect();
            sort_points(&mut pts);
            pts.first().copied().unwrap_or(xi.base_point)
        }
    };
    let n_f = xi.f.order_at(marked_point)?;
    let m = xi.e.order_at(marked_point)?;

    let one = Complex64::new(1.0, 0.0);
    let state = RecursionState::new(&xi.f, &xi.e, Which::B, one, one, xi.base_point)?;
    let (state, obstruction) = run_recursion(state, n_max);
    let pole_table = state.pole_table()?;

    let mut growth = Vec::new();
    if m > 0 {
        let orders = state.pole_orders_at(marked_point)?;
        for (i, pair) in orders.windows(2).enumerate() {
            if let (Some(kp), Some(kn)) = (pair[0], pair[1]) {
                let bound = kp + m as f64 + 2.0;
                growth.push(GrowthStep {
                    n: state.coefficients[i + 1].n,
                    k_prev: kp,
                    k_n: kn,
                    bound,
                    satisfied: kn >= bound - 1e-12,
                });
            }
        }
    }

    let mut case_records = Vec::new();
    for u in &umbilics {
        let order = xi.f.order_at(u.point)?;
        if order != 0 {
            case_records.push(case_record(xi, u.point, order)?);
        }
    }

    let odd: Vec<&Umbilic> = umbilics.iter().filter(|u| u.order % 2 == 1).collect();
    let (verdict, reason) = if let Some(u) = odd.first() {
        (
            Verdict::Trivial,
            format!(
                "E has a zero of odd order {} at {}; the leading solution changes sign around it and E is not a square",
                u.order,
                show(u.point)
            ),
        )
    } else if let Some(u) = umbilics.first() {
        let grows = !growth.is_empty() && growth.iter().all(|g| g.satisfied);
        let detail = if !case_records.is_empty() {
            "f has a zero or pole there; see the case records"
        } else if grows {
            "pole orders of b_n grow by at least m + 2 per step"
        } else {
            "pole growth not exhibited within the computed range"
        };
        (
            Verdict::Trivial,
            format!(
                "E has a zero of order {} at {}; {detail}",
                u.order,
                show(u.point)
            ),
        )
    } else {
        (
            Verdict::PossiblyNontrivial,
            format!(
                "E has no zeros; recursion produced candidates through n = {}",
                state.last_index()
            ),
        )
    };

    let nonzero_indices = state
        .coefficients
        .iter()
        .filter(|c| !c.value.is_zero())
        .map(|c| c.n)
        .collect();
    Ok(IsotropyReport {
        verdict,
        reason,
        e_square_test: sq.is_square,
        umbilics,
        monodromy_factors: lead.monodromy,
        leading_meromorphic: lead.meromorphic,
        marked_point,
        n_f,
        m,
        pole_table,
        growth,
        case_records,
        recursion: RecursionSummary {
            n_max,
            computed_through: state.last_index(),
            nonzero_indices,
            obstruction,
            max_quadrature_residual: state.max_quadrature_residual,
            exact_consistent: state.exact_consistent,
        },
        tolerances: ReportTolerances {
            monodromy_threshold: MONODROMY_THRESHOLD,
            branch_clearance: BRANCH_CLEARANCE,
            root_cluster: ROOT_CLUSTER_TOL,
            quadrature: QUADRATURE_TOLERANCE,
        },
    })
}

/// `exp(sλ·antidiag(1, 1))` truncated at `λ^degree`; it commutes with the
/// cylinder's `g₋ = exp(zλ⁻¹·antidiag(1, 1))`.
pub fn cylinder_isotropy_element(s: Complex64, degree: i32) -> Result<MatrixLoop> {
    let mut terms = Vec::new();
    let mut c = Complex64::new(1.0, 0.0);
    for k in 0..=degree.max(0) {
        if k > 0 {
            c *= s / k as f64;
        }
        let m = if k % 2 == 0 {
            Mat2::IDENTITY
        } else {
            Mat2::SIGMA1
        };
        terms.push((k, m.scale(c)));
    }
    MatrixLoop::from_terms(&terms)
}

fn negative_part_norm(l: &MatrixLoop) -> f64 {
    (l.n_min()..0)
        .map(|n| l.coeff(n).max_norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportCheck {
    pub points: usize,
    /// Largest negative-power part of `g₋⁻¹ h₊ g₋`.
    pub max_before: f64,
    /// Same for `ĝ₋⁻¹ (ĥh₊ĥ⁻¹) ĝ₋` with the dressed `ĝ₋`.
    pub max_after: f64,
    /// Same for the untransported `ĝ₋⁻¹ h₊ ĝ₋`.
    pub max_control: f64,
}

/// Transports an isotropy element of `xi` to the frame dressed by `h_hat`.
pub fn transport_isotropy(
    h_hat: &DressingElement,
    h_plus: &MatrixLoop,
    xi: &MeromorphicPotential,
    points: &[Complex64],
    truncation: i32,
) -> Result<TransportCheck> {
    let hh = h_hat.h_plus();
    let conj = hh.multiply(h_plus).multiply(&hh.adjugate());
    let mut out = TransportCheck {
        points: points.len(),
        max_before: 0.0,
        max_after: 0.0,
        max_control: 0.0,
    };
    for &z in points {
        let g = g_minus_at(xi, z, truncation)?;
        let before = g.adjugate().multiply(h_plus).multiply(&g);
        let (gh, _) = dress_point(h_hat, &g, truncation).ok_or(Error::OutsideBigCell {
            condition: f64::INFINITY,
        })?;
        let gi = gh.adjugate();
        let after = gi.multiply(&conj).multiply(&gh);
        let control = gi.multiply(h_plus).multiply(&gh);
        out.max_before = out.max_before.max(negative_part_norm(&before));
        out.max_after = out.max_after.max(negative_part_norm(&after));
        out.max_control = out.max_control.max(negative_part_norm(&control));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
