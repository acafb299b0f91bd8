//! Möbius automorphisms of the disk, the constant-`f` obstruction and the
//! monodromy of automorphic potentials.
//!
//! For an automorphism `γ` with `γ*ξ = ξ`, transport along a fixed path `Q`
//! from the base point to `γ(base)` gives `ρ₋⁰ = g₋⁰(Q)`, and
//! `g₋⁰(γ(z)) = ρ₋⁰ g₋⁰(z)` when `g₋⁰(γ(z))` is continued along `Q·γ(P)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dpw_core::{Domain, Integrator, MeromorphicPotential};
use crate::dressing_engine::{t_dress_d, t_dress_u, DressingElement};
use crate::error::{Error, Result};
use crate::factorization::{birkhoff_with, FactorizationOptions};
use crate::loop_algebra::{circle, MatrixLoop, DEFAULT_TRUNCATION};
use crate::mat2::Mat2;
use crate::meromorphic::{gq_from_c64, Gq, Poly, RationalFunction};

/// Normalization tolerance `||a|² − |b|² − 1|`.
pub const MOEBIUS_TOLERANCE: f64 = 1e-12;
/// Residual bound for admissibility in [`constant_f_obstruction`].
pub const ADMISSIBLE_TOLERANCE: f64 = 1e-8;
/// Sample tolerance for the automorphy laws.
pub const AUTOMORPHIC_TOLERANCE: f64 = 1e-10;
/// Tolerance for monodromy consistency, the dressed law and invariance.
pub const MONODROMY_TOLERANCE: f64 = 1e-8;
/// Points of `|λ| = 1` used for pointwise loop comparisons.
pub const LAMBDA_SAMPLES: usize = 64;

const PATH_SAMPLES: usize = 32;
const SPIRAL_SEGMENTS: usize = 64;
const BOUNDARY_PULL: f64 = 1e-9;

fn cz(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `z ↦ (az + b)/(b̄z + ā)` with `|a|² − |b|² = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMoebius")]
pub struct MoebiusMap {
    a: Complex64,
    b: Complex64,
}

#[derive(Deserialize)]
struct RawMoebius {
    a: Complex64,
    b: Complex64,
}

impl TryFrom<RawMoebius> for MoebiusMap {
    type Error = Error;
    fn try_from(r: RawMoebius) -> Result<Self> {
        MoebiusMap::new(r.a, r.b)
    }
}

impl MoebiusMap {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self> {
        let m = MoebiusMap { a, b };
        let dev = m.normalization_defect();
        if !(dev <= MOEBIUS_TOLERANCE) {
            return Err(Error::InvalidMoebius(format!("|a|² − |b|² − 1 = {dev:e}")));
        }
        if !m.maps_disk_into_disk() {
            return Err(Error::InvalidMoebius("map leaves the unit disk".into()));
        }
        Ok(m)
    }

    /// Scales `(a, b)` by a positive real so that `|a|² − |b|² = 1`.
    pub fn normalized(a: Complex64, b: Complex64) -> Result<Self> {
        let d = a.norm_sqr() - b.norm_sqr();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidMoebius(format!(
                "|a|² − |b|² = {d:e} is not positive"
            )));
        }
        let s = d.sqrt();
        Self::new(a / s, b / s)
    }

    pub fn identity() -> Self {
        MoebiusMap {
            a: cz(1.0),
            b: cz(0.0),
        }
    }

    /// `z ↦ e^{iθ} z`.
    pub fn rotation(theta: f64) -> Self {
        MoebiusMap {
            a: Complex64::from_polar(1.0, theta / 2.0),
            b: cz(0.0),
        }
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn b(&self) -> Complex64 {
        self.b
    }

    pub fn normalization_defect(&self) -> f64 {
        (self.a.norm_sqr() - self.b.norm_sqr() - 1.0).abs()
    }

    fn maps_disk_into_disk(&self) -> bool {
        circle(1.0 - BOUNDARY_PULL, 64).all(|z| self.eval(z).norm() < 1.0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.b.conj() * z + self.a.conj())
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let d = self.b.conj() * z + self.a.conj();
        1.0 / (d * d)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MoebiusMap) -> Result<MoebiusMap> {
        let a = self.a * other.a + self.b * other.b.conj();
        let b = self.a * other.b + self.b * other.a.conj();
        Self::normalized(a, b)
    }

    pub fn inverse(&self) -> MoebiusMap {
        MoebiusMap {
            a: self.a.conj(),
            b: -self.b,
        }
    }

    /// Algebraic criterion `|a| = 1`, `b = 0`. Elliptic maps with `b ≠ 0` are
    /// missed; [`Self::interior_fixed_points`] is the geometric answer.
    pub fn fixed_point_in_disk(&self) -> bool {
        (self.a.norm() - 1.0).abs() <= MOEBIUS_TOLERANCE && self.b.norm() <= MOEBIUS_TOLERANCE
    }

    /// Roots of `b̄z² + (ā − a)z − b = 0` inside the open disk. The identity
    /// reports only the origin.
    pub fn interior_fixed_points(&self) -> Vec<Complex64> {
        let (p, q, r) = (self.b.conj(), self.a.conj() - self.a, -self.b);
        let roots = if p.norm() <= MOEBIUS_TOLERANCE {
            if q.norm() <= MOEBIUS_TOLERANCE {
                return vec![cz(0.0)];
            }
            vec![-r / q]
        } else {
            let disc = (q * q - 4.0 * p * r).sqrt();
            vec![(-q + disc) / (2.0 * p), (-q - disc) / (2.0 * p)]
        };
        roots
            .into_iter()
            .filter(|z| z.norm() < 1.0 - MOEBIUS_TOLERANCE)
            .collect()
    }
}

/// An automorphism of a potential's domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Automorphism {
    /// `z ↦ αz + τ` on the plane.
    Affine { alpha: Complex64, tau: Complex64 },
    /// A disk automorphism.
    Moebius(MoebiusMap),
}

impl Automorphism {
    pub fn translation(tau: Complex64) -> Self {
        Automorphism::Affine {
            alpha: cz(1.0),
            tau,
        }
    }

    pub fn identity() -> Self {
        Self::translation(cz(0.0))
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            Automorphism::Affine { alpha, tau } => alpha * z + tau,
            Automorphism::Moebius(m) => m.eval(z),
        }
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        match self {
            Automorphism::Affine { alpha, .. } => *alpha,
            Automorphism::Moebius(m) => m.derivative(z),
        }
    }

    /// `(α, β, γ, δ)` with the map `z ↦ (αz + β)/(γz + δ)`.
    pub fn coefficients(&self) -> [Complex64; 4] {
        match *self {
            Automorphism::Affine { alpha, tau } => [alpha, tau, cz(0.0), cz(1.0)],
            Automorphism::Moebius(m) => [m.a, m.b, m.b.conj(), m.a.conj()],
        }
    }

    pub fn is_identity(&self) -> bool {
        let [a, b, c, d] = self.coefficients();
        (b.norm() + c.norm()) <= MOEBIUS_TOLERANCE
            && (a - d).norm() <= MOEBIUS_TOLERANCE * (1.0 + d.norm())
    }

    /// A fixed point inside the domain, if any.
    pub fn fixed_point(&self) -> Option<Complex64> {
        if self.is_identity() {
            return None;
        }
        match *self {
            Automorphism::Affine { alpha, tau } => {
                ((alpha - 1.0).norm() > MOEBIUS_TOLERANCE).then(|| tau / (1.0 - alpha))
            }
            Automorphism::Moebius(m) => m.interior_fixed_points().first().copied(),
        }
    }

    pub fn preserves(&self, domain: Domain) -> bool {
        match (self, domain) {
            (Automorphism::Moebius(_), Domain::Disk) => true,
            (Automorphism::Moebius(m), Domain::Plane) => m.b.norm() <= MOEBIUS_TOLERANCE,
            (Automorphism::Affine { alpha, tau }, Domain::Disk) => {
                (alpha.norm() - 1.0).abs() <= MOEBIUS_TOLERANCE && tau.norm() <= MOEBIUS_TOLERANCE
            }
            (Automorphism::Affine { alpha, .. }, Domain::Plane) => alpha.norm() > 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionResiduals {
    /// Off-diagonal unitarity defect of `χ` on `|λ| = 1`, zero iff `q = −b/(āC)`.
    pub eq3: f64,
    /// `|s/ā + b̄q/(Cs) − a/s|`.
    pub eq4: f64,
    /// `|C − |b|²/C² − |a|²|`.
    pub eq5_prime: f64,
    /// `|Cb/ā − q|`, the `λ⁻¹` monodromy condition.
    pub q_condition: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivedConstraints {
    /// The positive root of `C − |b|²/C² = |a|²`.
    #[serde(rename = "C_value")]
    pub c_value: f64,
    pub b_zero: bool,
    pub a_modulus: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub admissible: bool,
    #[serde(rename = "C")]
    pub c: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub q: Complex64,
    pub residuals: ObstructionResiduals,
    pub derived: DerivedConstraints,
    /// Largest `‖χ(λ)†χ(λ) − I‖` on `|λ| = 1`.
    pub unitarity_defect: f64,
    /// Largest gap between `T_D(s/ā) T_U(b̄/(Cā))` applied to `C` and
    /// `(f∘γ)γ′` on probe points; it equals `|C² − C|/|b̄z + ā|²`.
    pub autodress_residual: f64,
    pub tolerance: f64,
}

fn solve_c(a2: f64, b2: f64) -> f64 {
    if b2 == 0.0 {
        return a2;
    }
    let g = |c: f64| c - b2 / (c * c) - a2;
    let (mut lo, mut hi) = (1e-12f64, 1.0f64.max(a2 + b2 + 1.0));
    while g(lo) > 0.0 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `f ≡ C`, `γ = m`: evaluates the unitarity equations for
/// `χ = χ₋χ₊`, `χ₊ = [[s/ā, 0], [b̄λ/(Cs), ā/s]]`, `χ₋ = [[1, qλ⁻¹], [0, 1]]`, `s = √C`.
pub fn constant_f_obstruction(c: f64, m: &MoebiusMap) -> Result<SymmetryReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("C must be positive, got {c}")));
    }
    let (a, b) = (m.a, m.b);
    let s = c.sqrt();
    let q = -b / (a.conj() * c);
    let chi = |l: Complex64| {
        let p = Mat2::new(s / a.conj(), cz(0.0), b.conj() * l / (c * s), a.conj() / s);
        Mat2::new(cz(1.0), q / l, cz(0.0), cz(1.0)) * p
    };
    let mut eq3 = 0.0f64;
    let mut unitarity = 0.0f64;
    for l in circle(1.0, LAMBDA_SAMPLES) {
        let x = chi(l);
        eq3 = eq3.max((x.c() + x.b().conj()).norm());
        unitarity = unitarity.max((x * x.adjoint() - Mat2::IDENTITY).max_norm());
    }
    let eq4 = (s / a.conj() + b.conj() * q / (c * s) - a / s).norm();
    let eq5_prime = (c - b.norm_sqr() / (c * c) - a.norm_sqr()).abs();
    let q_condition = (c * b / a.conj() - q).norm();
    let admissible = [eq3, eq4, eq5_prime, q_condition]
        .iter()
        .all(|r| *r <= ADMISSIBLE_TOLERANCE);

    let f = RationalFunction::constant(cz(c))?;
    let probes: Vec<Complex64> = [0.0, 0.3, 0.6]
        .iter()
        .flat_map(|&r| (0..4).map(move |k| Complex64::from_polar(r, 1.0 + k as f64)))
        .collect();
    let tu = t_dress_u(b.conj() / (c * a.conj()), &f, cz(0.0), &probes)?;
    let t = Complex64::new(s, 0.0) / a.conj();
    let scale = t_dress_d(t, &RationalFunction::one())?.eval(cz(0.0));
    let autodress_residual = tu
        .iter()
        .filter_map(|p| p.value.map(|v| (p.z, v * scale)))
        .map(|(z, v)| (v - c * m.derivative(z)).norm())
        .fold(0.0, f64::max);

    Ok(SymmetryReport {
        admissible,
        c,
        a,
        b,
        q,
        residuals: ObstructionResiduals {
            eq3,
            eq4,
            eq5_prime,
            q_condition,
        },
        derived: DerivedConstraints {
            c_value: solve_c(a.norm_sqr(), b.norm_sqr()),
            b_zero: b.norm() <= ADMISSIBLE_TOLERANCE,
            a_modulus: a.norm(),
        },
        unitarity_defect: unitarity,
        autodress_residual,
        tolerance: ADMISSIBLE_TOLERANCE,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AutomorphicCheck {
    pub holds: bool,
    /// Both laws hold as exact rational identities for the coefficients as given.
    pub exact: bool,
    /// Largest relative defect of `(f∘γ)γ′ = f` on samples.
    pub f_residual: f64,
    /// Largest relative defect of `(E∘γ)γ′² = E` on samples.
    pub e_residual: f64,
    pub samples: usize,
    pub tolerance: f64,
}

/// `p((αz+β)/(γz+δ)) (γz+δ)^d` for `d ≥ deg p`.
fn homogenize(p: &Poly, d: usize, num: &Poly, den: &Poly) -> Poly {
    let mut acc = Poly::zero();
    for (k, ck) in p.coeffs().iter().enumerate() {
        let term = &(&num.pow(k as u32) * &den.pow((d - k) as u32)) * &Poly::constant(ck.clone());
        acc = &acc + &term;
    }
    acc
}

fn compose_exact(r: &RationalFunction, co: &[Gq; 4]) -> Result<RationalFunction> {
    let num = Poly::from_coeffs(vec![co[1].clone(), co[0].clone()]);
    let den = Poly::from_coeffs(vec![co[3].clone(), co[2].clone()]);
    let d = r
        .numerator()
        .degree()
        .unwrap_or(0)
        .max(r.denominator().degree().unwrap_or(0));
    RationalFunction::from_polys(
        homogenize(r.numerator(), d, &num, &den),
        homogenize(r.denominator(), d, &num, &den),
    )
}

fn exact_laws(xi: &MeromorphicPotential, m: &Automorphism) -> Result<bool> {
    let co: Vec<Gq> = m
        .coefficients()
        .iter()
        .map(|&x| gq_from_c64(x))
        .collect::<Result<_>>()?;
    let co: [Gq; 4] = co.try_into().expect("four coefficients");
    let det = &co[0] * &co[3] - &co[1] * &co[2];
    let den = Poly::from_coeffs(vec![co[3].clone(), co[2].clone()]);
    let dgamma = RationalFunction::from_polys(Poly::constant(det), &den * &den)?;
    let f_ok = compose_exact(&xi.f, &co)?.mul(&dgamma) == xi.f;
    let e_ok = compose_exact(&xi.e, &co)?.mul(&dgamma).mul(&dgamma) == xi.e;
    Ok(f_ok && e_ok)
}

fn sample_points(xi: &MeromorphicPotential) -> Vec<Complex64> {
    let radii: &[f64] = match xi.domain {
        Domain::Disk => &[0.25, 0.5, 0.75],
        Domain::Plane => &[0.5, 1.0, 1.5],
    };
    radii
        .iter()
        .enumerate()
        .flat_map(|(i, &r)| {
            (0..8).map(move |k| Complex64::from_polar(r, 0.37 * i as f64 + 0.785 * k as f64))
        })
        .collect()
}

/// Tests `E∘γ = γ′⁻²E` and `f∘γ = γ′⁻¹f`.
pub fn automorphic_check(xi: &MeromorphicPotential, m: &Automorphism) -> Result<AutomorphicCheck> {
    xi.validate()?;
    if !m.preserves(xi.domain) {
        return Err(Error::InvalidInput(
            "map is not an automorphism of the domain".into(),
        ));
    }
    let exact = exact_laws(xi, m)?;
    let mut f_residual = 0.0f64;
    let mut e_residual = 0.0f64;
    let mut samples = 0;
    for z in sample_points(xi) {
        let w = m.eval(z);
        let d = m.derivative(z);
        let (f, e, fw, ew) = (xi.f.eval(z), xi.e.eval(z), xi.f.eval(w), xi.e.eval(w));
        if ![f, e, fw, ew]
            .iter()
            .all(|v| v.is_finite() && v.norm() < 1e8)
        {
            continue;
        }
        samples += 1;
        f_residual = f_residual.max((fw * d - f).norm() / (1.0 + f.norm()));
        e_residual = e_residual.max((ew * d * d - e).norm() / (1.0 + e.norm()));
    }
    let holds = exact
        || (samples > 0
            && f_residual <= AUTOMORPHIC_TOLERANCE
            && e_residual <= AUTOMORPHIC_TOLERANCE);
    Ok(AutomorphicCheck {
        holds,
        exact,
        f_residual,
        e_residual,
        samples,
        tolerance: AUTOMORPHIC_TOLERANCE,
    })
}

/// `g₋⁰` data at one sample point.
#[derive(Clone, Debug)]
pub struct MonodromySample {
    pub z: Complex64,
    /// `g₋⁰(z)` along the segment from the base point.
    pub g: MatrixLoop,
    /// `g₋⁰(γ(z))` along `Q·γ(segment)`.
    pub g_gamma: MatrixLoop,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonodromyRecord {
    /// `g₋⁰` transported along the connecting path `Q`.
    pub rho_minus_0: MatrixLoop,
    /// `h₊ρ₋⁰h₊⁻¹`; equal to `rho_minus_0` before dressing.
    pub rho: MatrixLoop,
    /// Largest `‖(ρ⁻¹ g₋(γ(z)))₋ − g₋(z)‖` over the samples.
    pub w_plus_residual: f64,
    /// Largest deviation of `g₋⁰(γ(z₁))g₋⁰(z₁)⁻¹` from `rho_minus_0`.
    pub spread: f64,
    pub connecting_path: Vec<Complex64>,
    pub sample_points: Vec<Complex64>,
    pub truncation: i32,
    pub tolerance: f64,
    #[serde(skip)]
    pub samples: Vec<MonodromySample>,
}

/// Path from `base` to `γ(base)`: a spiral about an interior fixed point,
/// otherwise a segment.
pub fn connecting_path(m: &Automorphism, base: Complex64) -> Vec<Complex64> {
    if m.is_identity() {
        return vec![base];
    }
    let target = m.eval(base);
    match m.fixed_point() {
        Some(p) if (base - p).norm() > MOEBIUS_TOLERANCE => {
            let log_mu = ((target - p) / (base - p)).ln();
            (0..=SPIRAL_SEGMENTS)
                .map(|k| {
                    if k == SPIRAL_SEGMENTS {
                        target
                    } else {
                        p + (base - p) * (log_mu * (k as f64 / SPIRAL_SEGMENTS as f64)).exp()
                    }
                })
                .collect()
        }
        _ => vec![base, target],
    }
}

fn transport(it: &Integrator, path: &[Complex64]) -> Result<MatrixLoop> {
    let mut g = it.identity();
    it.along(&mut g, path)?;
    Ok(it.to_loop(&g))
}

fn minus_part(l: &MatrixLoop, k: i32) -> MatrixLoop {
    l.truncate(-k, 0).value
}

/// Distance on `|λ| = 1` between pointwise products.
fn circle_gap(x: impl Fn(Complex64) -> Mat2, y: impl Fn(Complex64) -> Mat2) -> f64 {
    circle(1.0, LAMBDA_SAMPLES)
        .map(|l| (x(l) - y(l)).max_norm())
        .fold(0.0, f64::max)
}

/// `ρ₋⁰` from `g₋⁰(γ(z₁))g₋⁰(z₁)⁻¹` at each of `points`, which must be
/// reachable from the base point by segments.
pub fn monodromy_of_automorphic(
    xi: &MeromorphicPotential,
    m: &Automorphism,
    points: &[Complex64],
    truncation: i32,
) -> Result<MonodromyRecord> {
    let check = automorphic_check(xi, m)?;
    if !check.holds {
        return Err(Error::InvalidInput(format!(
            "potential is not automorphic (f defect {:e}, E defect {:e})",
            check.f_residual, check.e_residual
        )));
    }
    let it = Integrator::new(xi, truncation)?;
    let base = xi.base_point;
    let q_path = connecting_path(m, base);
    let rho0 = transport(&it, &q_path)?;
    if (rho0.coeff(0) - Mat2::IDENTITY).max_norm() > MONODROMY_TOLERANCE || rho0.n_max() > 0 {
        return Err(Error::Integration(
            "transport left the minus-based class".into(),
        ));
    }
    let mut samples = Vec::with_capacity(points.len());
    let mut spread = 0.0f64;
    let mut w_plus_residual = 0.0f64;
    let rho0_inv = rho0.adjugate();
    for &z in points {
        let seg: Vec<Complex64> = (0..=PATH_SAMPLES)
            .map(|k| base + (z - base) * (k as f64 / PATH_SAMPLES as f64))
            .collect();
        let mut image = q_path.clone();
        image.extend(seg.iter().skip(1).map(|&w| m.eval(w)));
        let g = transport(&it, &seg)?;
        let g_gamma = transport(&it, &image)?;
        let quotient = minus_part(&g_gamma.multiply(&g.adjugate()), truncation);
        spread = spread.max(quotient.distance(&rho0));
        let w = minus_part(&rho0_inv.multiply(&g_gamma), truncation);
        w_plus_residual = w_plus_residual.max(w.distance(&g));
        samples.push(MonodromySample { z, g, g_gamma });
    }
    if !(spread <= MONODROMY_TOLERANCE) {
        return Err(Error::InconsistentMonodromy { spread });
    }
    Ok(MonodromyRecord {
        rho: rho0.clone(),
        rho_minus_0: rho0,
        w_plus_residual,
        spread,
        connecting_path: q_path,
        sample_points: points.to_vec(),
        truncation,
        tolerance: MONODROMY_TOLERANCE,
        samples,
    })
}

/// Dressed data at one sample: `h₊g₋⁰ = ĝ₋p₊` at `z` and at `γ(z)`.
#[derive(Clone, Debug)]
pub struct DressedSample {
    pub g_hat: MatrixLoop,
    pub p_plus: MatrixLoop,
    pub g_hat_gamma: MatrixLoop,
    pub p_plus_gamma: MatrixLoop,
}

impl DressedSample {
    /// `ĝ₋(γz) p₊(γz) p₊(z)⁻¹ ĝ₋(z)⁻¹` at `λ`.
    pub fn quotient_at(&self, l: Complex64) -> Mat2 {
        self.g_hat_gamma.evaluate_nonzero(l)
            * self.p_plus_gamma.evaluate_nonzero(l)
            * self.p_plus.evaluate_nonzero(l).adjugate()
            * self.g_hat.evaluate_nonzero(l).adjugate()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DressedMonodromy {
    /// `h₊ρ₋⁰h₊⁻¹`.
    pub rho: MatrixLoop,
    /// Largest sup-norm gap on `|λ| = 1` between the quotient and `rho`;
    /// it bounds every coefficient deviation.
    pub residual: f64,
    /// Largest gap between the minus factor of `ρ⁻¹ĝ₋(γz)` and `ĝ₋(z)`.
    pub w_plus_residual: f64,
    pub tolerance: f64,
    #[serde(skip)]
    pub samples: Vec<DressedSample>,
}

fn split(g: &MatrixLoop, truncation: i32) -> Result<(MatrixLoop, MatrixLoop)> {
    let opts = FactorizationOptions {
        truncation,
        ..FactorizationOptions::default()
    };
    let r = birkhoff_with(g, &opts);
    if !r.in_big_cell {
        return Err(Error::OutsideBigCell {
            condition: r.condition_estimate,
        });
    }
    Ok((r.g_minus, r.g_plus))
}

/// Largest gap between `ĝ₋(z)` and the minus factor of `ρ⁻¹ĝ₋(γz)`; small
/// exactly when `ĝ₋(z)⁻¹ρ⁻¹ĝ₋(γz)` is a plus loop.
pub fn w_plus_defect(rho: &MatrixLoop, samples: &[DressedSample], truncation: i32) -> Result<f64> {
    let inv = rho.adjugate();
    let mut worst = 0.0f64;
    for s in samples {
        let (x_minus, _) = split(&inv.multiply(&s.g_hat_gamma), truncation)?;
        worst = worst.max(x_minus.distance(&s.g_hat));
    }
    Ok(worst)
}

/// Dresses the record's samples by `h` and compares the quotient monodromy
/// with `h₊ρ₋⁰h₊⁻¹`.
pub fn dressed_monodromy_law(
    h: &DressingElement,
    record: &MonodromyRecord,
) -> Result<DressedMonodromy> {
    let hp = h.h_plus();
    let rho = hp.multiply(&record.rho_minus_0).multiply(&hp.adjugate());
    let k = record.truncation;
    let mut samples = Vec::with_capacity(record.samples.len());
    let mut residual = 0.0f64;
    for s in &record.samples {
        let (g_hat, p_plus) = split(&hp.multiply(&s.g), k)?;
        let (g_hat_gamma, p_plus_gamma) = split(&hp.multiply(&s.g_gamma), k)?;
        let d = DressedSample {
            g_hat,
            p_plus,
            g_hat_gamma,
            p_plus_gamma,
        };
        residual = residual.max(circle_gap(
            |l| d.quotient_at(l),
            |l| rho.evaluate_nonzero(l),
        ));
        samples.push(d);
    }
    let w_plus_residual = w_plus_defect(&rho, &samples, k)?;
    Ok(DressedMonodromy {
        rho,
        residual,
        w_plus_residual,
        tolerance: MONODROMY_TOLERANCE,
        samples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub symmetric: bool,
    pub g_minus_invariant: bool,
    pub agree: bool,
    /// Largest `‖ĝ₋(γz) − ĝ₋(z)‖` on `|λ| = 1`.
    pub invariance_deviation: f64,
    pub unitarity_deviation: f64,
    /// Largest `||μ| − 1|` over eigenvalues of `ρ` on `|λ| = 1`.
    pub eigenvalue_modulus_deviation: f64,
    /// Largest nonconstant Fourier mode of `tr ρ` on `|λ| = 1`.
    pub trace_mode_max: f64,
    /// Constant mode of `tr ρ`.
    pub trace_mean: Complex64,
    pub tolerance: f64,
}

/// Decides `g₋∘γ = g₋` directly, and separately whether `ρ` is unitary with
/// constant eigenvalues equal to those of `ρ₋⁰(∞) = I`.
pub fn symmetry_equivalence_check(
    xi: &MeromorphicPotential,
    m: &Automorphism,
    h: &DressingElement,
    points: &[Complex64],
) -> Result<EquivalenceReport> {
    let record = monodromy_of_automorphic(xi, m, points, DEFAULT_TRUNCATION)?;
    let dressed = dressed_monodromy_law(h, &record)?;
    let invariance_deviation = dressed
        .samples
        .iter()
        .map(|s| s.g_hat_gamma.distance(&s.g_hat))
        .fold(0.0, f64::max);
    let rho = &dressed.rho;
    let unitarity_deviation = rho.unitarity_deviation(LAMBDA_SAMPLES);
    let lambdas: Vec<Complex64> = circle(1.0, LAMBDA_SAMPLES).collect();
    let mut eigenvalue_modulus_deviation = 0.0f64;
    let traces: Vec<Complex64> = lambdas
        .iter()
        .map(|&l| {
            let r = rho.evaluate_nonzero(l);
            let (t, d) = (r.trace(), r.det());
            let root = (t * t / 4.0 - d).sqrt();
            for mu in [t / 2.0 + root, t / 2.0 - root] {
                eigenvalue_modulus_deviation =
                    eigenvalue_modulus_deviation.max((mu.norm() - 1.0).abs());
            }
            t
        })
        .collect();
    let n = LAMBDA_SAMPLES as f64;
    let mode = |j: i32| -> Complex64 {
        traces
            .iter()
            .zip(&lambdas)
            .map(|(t, l)| t * l.powi(-j))
            .sum::<Complex64>()
            / n
    };
    let trace_mean = mode(0);
    let half = LAMBDA_SAMPLES as i32 / 2;
    let trace_mode_max = (1..half)
        .flat_map(|j| [mode(j).norm(), mode(-j).norm()])
        .fold(0.0, f64::max);
    let tol = MONODROMY_TOLERANCE;
    let symmetric = unitarity_deviation <= tol
        && eigenvalue_modulus_deviation <= tol
        && trace_mode_max <= tol
        && (trace_mean - 2.0).norm() <= tol;
    let g_minus_invariant = invariance_deviation <= tol;
    Ok(EquivalenceReport {
        symmetric,
        g_minus_invariant,
        agree: symmetric == g_minus_invariant,
        invariance_deviation,
        unitarity_deviation,
        eigenvalue_modulus_deviation,
        trace_mode_max,
        trace_mean,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests;
