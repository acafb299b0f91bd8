//! Twisted 2×2 matrix Laurent loops `g(λ) = Σ cₙ λⁿ`.
//!
//! Twisting (`g(-λ) = σ₃ g(λ) σ₃`) means diagonal entries live on even powers
//! of λ and off-diagonal entries on odd powers. Every constructor enforces it,
//! so a `MatrixLoop` value is twisted by construction and arithmetic keeps it so.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// Exponents kept on each side of λ⁰ by default.
pub const DEFAULT_TRUNCATION: i32 = 16;
/// Tail monitor threshold for the two outermost retained coefficients.
pub const TAIL_THRESHOLD: f64 = 1e-10;
/// Determinant tolerance for group-valued loops.
pub const EPS_DET: f64 = 1e-9;
/// Unitarity tolerance on the unit circle.
pub const EPS_UNITARY: f64 = 1e-9;
/// Circle samples used by determinant and unitarity checks.
pub const CIRCLE_SAMPLES: usize = 64;
/// Coefficients below this max-norm count as absent in range checks.
pub const RANGE_ZERO: f64 = 1e-12;

fn parity_ok(n: i32, m: &Mat2) -> bool {
    if n.rem_euclid(2) == 0 {
        m.b() == Complex64::new(0.0, 0.0) && m.c() == Complex64::new(0.0, 0.0)
    } else {
        m.a() == Complex64::new(0.0, 0.0) && m.d() == Complex64::new(0.0, 0.0)
    }
}

fn project_parity(n: i32, m: Mat2) -> (Mat2, f64) {
    if n.rem_euclid(2) == 0 {
        (m.diagonal_part(), m.off_diagonal_part().max_norm())
    } else {
        (m.off_diagonal_part(), m.diagonal_part().max_norm())
    }
}

/// Truncated twisted matrix Laurent series.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixLoop {
    n_min: i32,
    coeffs: Vec<Mat2>,
}

impl MatrixLoop {
    pub fn identity() -> Self {
        MatrixLoop {
            n_min: 0,
            coeffs: vec![Mat2::IDENTITY],
        }
    }

    pub fn zero() -> Self {
        MatrixLoop {
            n_min: 0,
            coeffs: vec![Mat2::ZERO],
        }
    }

    /// λ-independent loop; twisting forces `m` to be diagonal.
    pub fn constant(m: Mat2) -> Result<Self> {
        Self::from_terms(&[(0, m)])
    }

    /// Builds a loop from `(exponent, coefficient)` pairs; repeated exponents add up.
    pub fn from_terms(terms: &[(i32, Mat2)]) -> Result<Self> {
        if terms.is_empty() {
            return Ok(Self::zero());
        }
        let lo = terms.iter().map(|t| t.0).min().unwrap();
        let hi = terms.iter().map(|t| t.0).max().unwrap();
        let mut coeffs = vec![Mat2::ZERO; (hi - lo + 1) as usize];
        for (n, m) in terms {
            coeffs[(n - lo) as usize] += *m;
        }
        Self::from_dense(lo, coeffs)
    }

    /// Builds a loop from consecutive coefficients starting at `n_min`.
    pub fn from_dense(n_min: i32, coeffs: Vec<Mat2>) -> Result<Self> {
        if coeffs.is_empty() {
            return Ok(Self::zero());
        }
        for (k, m) in coeffs.iter().enumerate() {
            let n = n_min + k as i32;
            if !parity_ok(n, m) {
                return Err(Error::Twisting {
                    exponent: n,
                    detail: if n.rem_euclid(2) == 0 {
                        "off-diagonal entry at even exponent"
                    } else {
                        "diagonal entry at odd exponent"
                    },
                });
            }
        }
        Ok(MatrixLoop { n_min, coeffs })
    }

    /// Drops wrong-parity entries; returns the loop and the largest entry removed.
    pub fn twisted_projection(n_min: i32, coeffs: Vec<Mat2>) -> (Self, f64) {
        let mut removed = 0.0f64;
        let coeffs = coeffs
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                let (p, r) = project_parity(n_min + k as i32, m);
                removed = removed.max(r);
                p
            })
            .collect::<Vec<_>>();
        let coeffs = if coeffs.is_empty() {
            vec![Mat2::ZERO]
        } else {
            coeffs
        };
        (MatrixLoop { n_min, coeffs }, removed)
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_min + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, n: i32) -> Mat2 {
        if n < self.n_min || n > self.n_max() {
            Mat2::ZERO
        } else {
            self.coeffs[(n - self.n_min) as usize]
        }
    }

    /// `(exponent, coefficient)` pairs in ascending order.
    pub fn terms(&self) -> impl Iterator<Item = (i32, Mat2)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, m)| (self.n_min + k as i32, *m))
    }

    /// Smallest and largest exponents whose coefficient exceeds `tol`.
    pub fn effective_range(&self, tol: f64) -> Option<(i32, i32)> {
        let mut it = self
            .terms()
            .filter(|(_, m)| m.max_norm() > tol)
            .map(|(n, _)| n);
        let first = it.next()?;
        let last = it.last().unwrap_or(first);
        Some((first, last))
    }

    /// Removes exactly-zero coefficients at both ends.
    pub fn trimmed(&self) -> Self {
        match self.effective_range(0.0) {
            None => Self::zero(),
            Some((lo, hi)) => MatrixLoop {
                n_min: lo,
                coeffs: (lo..=hi).map(|n| self.coeff(n)).collect(),
            },
        }
    }

    /// Cauchy product; exponent range is the Minkowski sum of the operand ranges.
    pub fn multiply(&self, other: &MatrixLoop) -> MatrixLoop {
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = vec![Mat2::ZERO; len];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.max_norm() == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += *a * *b;
            }
        }
        MatrixLoop {
            n_min: self.n_min + other.n_min,
            coeffs,
        }
    }

    pub fn add(&self, other: &MatrixLoop) -> MatrixLoop {
        let lo = self.n_min.min(other.n_min);
        let hi = self.n_max().max(other.n_max());
        MatrixLoop {
            n_min: lo,
            coeffs: (lo..=hi).map(|n| self.coeff(n) + other.coeff(n)).collect(),
        }
    }

    pub fn sub(&self, other: &MatrixLoop) -> MatrixLoop {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> MatrixLoop {
        MatrixLoop {
            n_min: self.n_min,
            coeffs: self.coeffs.iter().map(|m| m.scale(s)).collect(),
        }
    }

    /// `Σ cₙ λ₀ⁿ`.
    pub fn evaluate(&self, lambda: Complex64) -> Result<Mat2> {
        if lambda.norm() == 0.0 {
            if self.n_min < 0 && self.effective_range(0.0).map_or(false, |(lo, _)| lo < 0) {
                return Err(Error::Domain(
                    "evaluation at λ = 0 of a loop with negative exponents".into(),
                ));
            }
            return Ok(self.coeff(0));
        }
        Ok(self.evaluate_nonzero(lambda))
    }

    pub(crate) fn evaluate_nonzero(&self, lambda: Complex64) -> Mat2 {
        let mut power = lambda.powi(self.n_min);
        let mut acc = Mat2::ZERO;
        for m in &self.coeffs {
            acc += m.scale(power);
            power *= lambda;
        }
        acc
    }

    /// `∂_λ g` at `λ₀ ≠ 0`, exact on the truncated series.
    pub fn evaluate_lambda_derivative(&self, lambda: Complex64) -> Result<Mat2> {
        if lambda.norm() == 0.0 {
            return Err(Error::Domain("λ-derivative evaluated at λ = 0".into()));
        }
        let mut acc = Mat2::ZERO;
        let mut power = lambda.powi(self.n_min - 1);
        for (k, m) in self.coeffs.iter().enumerate() {
            let n = self.n_min + k as i32;
            acc += m.scale(power * n as f64);
            power *= lambda;
        }
        Ok(acc)
    }

    /// `g*(λ) = Σ cₙ† λ⁻ⁿ`; on `|λ| = 1` it evaluates to the conjugate transpose of `g(λ)`.
    pub fn loop_adjoint(&self) -> MatrixLoop {
        let coeffs: Vec<Mat2> = self.coeffs.iter().rev().map(|m| m.adjoint()).collect();
        MatrixLoop {
            n_min: -self.n_max(),
            coeffs,
        }
    }

    /// Coefficientwise adjugate; the inverse of a loop with `det ≡ 1`.
    pub fn adjugate(&self) -> MatrixLoop {
        MatrixLoop {
            n_min: self.n_min,
            coeffs: self.coeffs.iter().map(|m| m.adjugate()).collect(),
        }
    }

    /// Restricts to exponents in `[lo, hi]` and reports whether the cut looks unsafe.
    pub fn truncate(&self, lo: i32, hi: i32) -> Truncated {
        let mut suspect = false;
        let mut tail = 0.0f64;
        let dropped_low =
            (self.n_min..lo.min(self.n_max() + 1)).any(|n| self.coeff(n).max_norm() > 0.0);
        let dropped_high =
            ((hi + 1).max(self.n_min)..=self.n_max()).any(|n| self.coeff(n).max_norm() > 0.0);
        if dropped_low {
            let t = self.coeff(lo).max_norm().max(self.coeff(lo + 1).max_norm());
            tail = tail.max(t);
            suspect |= t > TAIL_THRESHOLD;
        }
        if dropped_high {
            let t = self.coeff(hi).max_norm().max(self.coeff(hi - 1).max_norm());
            tail = tail.max(t);
            suspect |= t > TAIL_THRESHOLD;
        }
        let lo_eff = lo.max(self.n_min);
        let hi_eff = hi.min(self.n_max());
        let value = if lo_eff > hi_eff {
            MatrixLoop::zero()
        } else {
            MatrixLoop {
                n_min: lo_eff,
                coeffs: (lo_eff..=hi_eff).map(|n| self.coeff(n)).collect(),
            }
        };
        Truncated {
            value,
            suspect,
            tail_norm: tail,
        }
    }

    /// Max-norm of the two outermost coefficients at each end.
    pub fn tail_norm(&self) -> f64 {
        let lo = self.n_min;
        let hi = self.n_max();
        [lo, lo + 1, hi - 1, hi]
            .iter()
            .map(|&n| self.coeff(n).max_norm())
            .fold(0.0, f64::max)
    }

    /// Coefficientwise max-norm distance.
    pub fn distance(&self, other: &MatrixLoop) -> f64 {
        let lo = self.n_min.min(other.n_min);
        let hi = self.n_max().max(other.n_max());
        (lo..=hi)
            .map(|n| (self.coeff(n) - other.coeff(n)).max_norm())
            .fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.coeffs.iter().map(Mat2::max_norm).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(Mat2::is_finite)
    }

    /// Largest `|det g(λ) - 1|` over `samples` points of the circle `|λ| = radius`.
    pub fn det_deviation(&self, radius: f64, samples: usize) -> f64 {
        circle(radius, samples)
            .map(|l| (self.evaluate_nonzero(l).det() - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `‖g(λ)†g(λ) - I‖` over the unit circle.
    pub fn unitarity_deviation(&self, samples: usize) -> f64 {
        circle(1.0, samples)
            .map(|l| {
                let g = self.evaluate_nonzero(l);
                (g.adjoint() * g - Mat2::IDENTITY).max_norm()
            })
            .fold(0.0, f64::max)
    }

    /// Membership test for a loop class within the module tolerances.
    pub fn check_class(&self, class: &LoopClass) -> bool {
        let radius = class.radius;
        if !(radius > 0.0 && radius <= 1.0) || !self.is_finite() {
            return false;
        }
        if self.det_deviation(radius, CIRCLE_SAMPLES) > EPS_DET {
            return false;
        }
        let range = self.effective_range(RANGE_ZERO);
        let c0 = self.coeff(0);
        match class.kind {
            LoopKind::General => true,
            LoopKind::Plus => range.map_or(true, |(lo, _)| lo >= 0),
            LoopKind::PlusBased => {
                range.map_or(true, |(lo, _)| lo >= 0) && in_solvable_subgroup(&c0, RANGE_ZERO)
            }
            LoopKind::MinusBased => {
                range.map_or(true, |(_, hi)| hi <= 0)
                    && (c0 - Mat2::IDENTITY).max_norm() <= RANGE_ZERO
            }
            LoopKind::Unitary => self.unitarity_deviation(CIRCLE_SAMPLES) <= EPS_UNITARY,
        }
    }
}

/// Whether `m` is upper triangular with positive real diagonal.
pub fn in_solvable_subgroup(m: &Mat2, tol: f64) -> bool {
    m.c().norm() <= tol
        && m.a().im.abs() <= tol
        && m.d().im.abs() <= tol
        && m.a().re > 0.0
        && m.d().re > 0.0
}

/// `samples` equally spaced points on `|λ| = radius`.
pub fn circle(radius: f64, samples: usize) -> impl Iterator<Item = Complex64> {
    (0..samples).map(move |k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / samples as f64))
}

impl Mul for &MatrixLoop {
    type Output = MatrixLoop;
    fn mul(self, rhs: &MatrixLoop) -> MatrixLoop {
        self.multiply(rhs)
    }
}

/// Result of [`MatrixLoop::truncate`].
#[derive(Clone, Debug)]
pub struct Truncated {
    pub value: MatrixLoop,
    /// Set when a dropped side still had retained coefficients above [`TAIL_THRESHOLD`].
    pub suspect: bool,
    pub tail_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    Plus,
    PlusBased,
    MinusBased,
    Unitary,
    General,
}

/// A loop subgroup: `Λ⁺`, `Λ⁺_B`, `Λ⁻_*`, `ΛSU(2)` or the full twisted group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopClass {
    pub kind: LoopKind,
    pub radius: f64,
}

impl LoopClass {
    pub fn new(kind: LoopKind) -> Self {
        LoopClass { kind, radius: 1.0 }
    }
}

#[derive(Serialize, Deserialize)]
struct LoopJson {
    n_min: i32,
    n_max: i32,
    coeffs: Vec<(i32, [[f64; 2]; 4])>,
}

impl Serialize for MatrixLoop {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LoopJson {
            n_min: self.n_min,
            n_max: self.n_max(),
            coeffs: self
                .terms()
                .map(|(n, m)| (n, m.0.map(|z| [z.re, z.im])))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatrixLoop {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = LoopJson::deserialize(d)?;
        if raw.n_max < raw.n_min {
            return Err(D::Error::custom("n_max < n_min"));
        }
        let mut coeffs = vec![Mat2::ZERO; (raw.n_max - raw.n_min + 1) as usize];
        for (n, m) in raw.coeffs {
            if n < raw.n_min || n > raw.n_max {
                return Err(D::Error::custom(format!(
                    "exponent {n} outside [n_min, n_max]"
                )));
            }
            coeffs[(n - raw.n_min) as usize] = Mat2(m.map(|[re, im]| Complex64::new(re, im)));
        }
        MatrixLoop::from_dense(raw.n_min, coeffs).map_err(D::Error::custom)
    }
}

/// Random twisted SL(2,ℂ) loops built from elementary factors, for sweeps and tests.
pub mod sampling {
    use super::*;
    use rand::Rng;

    fn rc<R: Rng>(rng: &mut R, scale: f64) -> Complex64 {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    }

    /// `[[1, t λⁿ], [0, 1]]` for odd `n`.
    pub fn upper_unipotent(t: Complex64, n: i32) -> MatrixLoop {
        MatrixLoop::from_terms(&[(0, Mat2::IDENTITY), (n, Mat2::antidiag(t, 0.0.into()))])
            .expect("odd exponent")
    }

    /// `[[1, 0], [t λⁿ, 1]]` for odd `n`.
    pub fn lower_unipotent(t: Complex64, n: i32) -> MatrixLoop {
        MatrixLoop::from_terms(&[(0, Mat2::IDENTITY), (n, Mat2::antidiag(0.0.into(), t))])
            .expect("odd exponent")
    }

    pub fn diagonal(t: Complex64) -> MatrixLoop {
        MatrixLoop::constant(Mat2::diag(t, t.inv())).expect("diagonal")
    }

    fn product(factors: Vec<MatrixLoop>) -> MatrixLoop {
        factors
            .into_iter()
            .fold(MatrixLoop::identity(), |acc, f| acc.multiply(&f))
            .trimmed()
    }

    /// Plus loop of λ-degree at most `degree` (odd exponents 1, 3, …), det ≡ 1.
    pub fn random_plus<R: Rng>(rng: &mut R, degree: i32, scale: f64) -> MatrixLoop {
        let mut factors = vec![diagonal(Complex64::from_polar(
            rng.gen_range(0.7..1.4),
            rng.gen_range(-PI..PI),
        ))];
        let mut used = 0;
        while used < degree.max(1) {
            let n = if degree - used >= 3 && rng.gen_bool(0.3) {
                3
            } else {
                1
            };
            if used + n > degree.max(1) {
                break;
            }
            factors.push(if factors.len() % 2 == 1 {
                upper_unipotent(rc(rng, scale), n)
            } else {
                lower_unipotent(rc(rng, scale), n)
            });
            used += n;
        }
        product(factors)
    }

    /// Minus-based loop (value `I` at λ = ∞) of degree at most `degree` in λ⁻¹.
    pub fn random_minus_based<R: Rng>(rng: &mut R, degree: i32, scale: f64) -> MatrixLoop {
        let mut factors = Vec::new();
        let mut used = 0;
        while used < degree.max(1) {
            let n = if degree - used >= 3 && rng.gen_bool(0.3) {
                3
            } else {
                1
            };
            if used + n > degree.max(1) {
                break;
            }
            factors.push(if factors.len() % 2 == 0 {
                upper_unipotent(rc(rng, scale), -n)
            } else {
                lower_unipotent(rc(rng, scale), -n)
            });
            used += n;
        }
        product(factors)
    }

    /// Generic twisted loop `g₋ g₊` with factors of degree at most `degree`.
    pub fn random_loop<R: Rng>(rng: &mut R, degree: i32, scale: f64) -> MatrixLoop {
        random_minus_based(rng, degree, scale).multiply(&random_plus(rng, degree, scale))
    }

    /// Product of a random plus and minus loop in the opposite order, `g₊ g₋`.
    pub fn random_mixed<R: Rng>(rng: &mut R, degree: i32, scale: f64) -> MatrixLoop {
        random_plus(rng, degree, scale).multiply(&random_minus_based(rng, degree, scale))
    }
}
