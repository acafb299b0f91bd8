//! Exact complex rational functions of `z` and local Laurent analysis.
//!
//! Coefficients live in ℚ(i). Double inputs convert exactly, so arithmetic,
//! differentiation and multiplicity counting carry no rounding. Root locations
//! are numerical; multiplicities come from the squarefree decomposition.

pub mod poly;
pub mod roots;

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use poly::{gq, gq_from_c64, gq_one, gq_sqrt_exact, gq_to_c64, gq_zero, Gq, Poly};
pub use roots::ROOT_CLUSTER_TOL;

/// Normalized quotient `num / den` with monic `den` and `gcd(num, den) = 1`.
#[derive(Clone)]
pub struct RationalFunction {
    num: Poly,
    den: Poly,
    num_f: Vec<Complex64>,
    den_f: Vec<Complex64>,
}

impl PartialEq for RationalFunction {
    fn eq(&self, other: &Self) -> bool {
        self.num == other.num && self.den == other.den
    }
}

impl fmt::Debug for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn fmt_poly(c: &[Complex64]) -> String {
    if c.is_empty() {
        return "0".into();
    }
    let terms: Vec<String> = c
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() != 0.0)
        .map(|(k, a)| {
            let coef = if a.im == 0.0 {
                format!("{}", a.re)
            } else {
                format!("({}{:+}i)", a.re, a.im)
            };
            match k {
                0 => coef,
                1 => format!("{coef}*z"),
                _ => format!("{coef}*z^{k}"),
            }
        })
        .collect();
    terms.join(" + ")
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_constant() {
            write!(f, "{}", fmt_poly(&self.num_f))
        } else {
            write!(
                f,
                "({}) / ({})",
                fmt_poly(&self.num_f),
                fmt_poly(&self.den_f)
            )
        }
    }
}

/// Arithmetic selector for [`arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn arith(a: &RationalFunction, b: &RationalFunction, op: ArithOp) -> Result<RationalFunction> {
    Ok(match op {
        ArithOp::Add => a.add(b),
        ArithOp::Sub => a.sub(b),
        ArithOp::Mul => a.mul(b),
        ArithOp::Div => a.div(b)?,
    })
}

impl RationalFunction {
    /// Builds and normalizes `num / den`.
    pub fn from_polys(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(Self::cache(Poly::zero(), Poly::one()));
        }
        let g = num.gcd(&den);
        let (num, den) = if g.is_constant() {
            (num, den)
        } else {
            (num.exact_div(&g), den.exact_div(&g))
        };
        let inv = gq_one() / den.lead();
        Ok(Self::cache(num.scale(&inv), den.scale(&inv)))
    }

    fn cache(num: Poly, den: Poly) -> Self {
        let num_f = num.to_c64();
        let den_f = den.to_c64();
        RationalFunction {
            num,
            den,
            num_f,
            den_f,
        }
    }

    /// From ascending float coefficients, converted exactly.
    pub fn from_coeffs(num: &[Complex64], den: &[Complex64]) -> Result<Self> {
        Self::from_polys(Poly::from_c64(num)?, Poly::from_c64(den)?)
    }

    pub fn from_poly(p: Poly) -> Self {
        Self::cache(p, Poly::one())
    }

    pub fn zero() -> Self {
        Self::from_poly(Poly::zero())
    }

    pub fn one() -> Self {
        Self::from_poly(Poly::one())
    }

    pub fn constant(c: Complex64) -> Result<Self> {
        Ok(Self::from_poly(Poly::constant(gq_from_c64(c)?)))
    }

    pub fn constant_exact(c: Gq) -> Self {
        Self::from_poly(Poly::constant(c))
    }

    /// `zᵏ` for any integer `k`.
    pub fn z_pow(k: i32) -> Self {
        let m = Poly::monomial(gq_one(), k.unsigned_abs() as usize);
        if k >= 0 {
            Self::from_poly(m)
        } else {
            Self::cache(Poly::one(), m)
        }
    }

    /// `(z − z0)ᵏ` for a Gaussian-rational center.
    pub fn linear_pow(z0: &Gq, k: i32) -> Self {
        let lin = Poly::from_coeffs(vec![-z0.clone(), gq_one()]);
        let m = lin.pow(k.unsigned_abs());
        if k >= 0 {
            Self::from_poly(m)
        } else {
            Self::cache(Poly::one(), m)
        }
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_constant(&self) -> bool {
        self.num.is_constant() && self.den.is_constant()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    pub fn add(&self, b: &Self) -> Self {
        if b.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return b.clone();
        }
        if self.den == b.den {
            return Self::from_polys(&self.num + &b.num, self.den.clone()).expect("nonzero den");
        }
        Self::from_polys(
            &(&self.num * &b.den) + &(&b.num * &self.den),
            &self.den * &b.den,
        )
        .expect("nonzero den")
    }

    pub fn sub(&self, b: &Self) -> Self {
        self.add(&b.neg())
    }

    pub fn neg(&self) -> Self {
        Self::cache(-&self.num, self.den.clone())
    }

    pub fn mul(&self, b: &Self) -> Self {
        if self.is_zero() || b.is_zero() {
            return Self::zero();
        }
        // Cross cancellation keeps the gcds small; both dens are monic.
        let g1 = self.num.gcd(&b.den);
        let g2 = b.num.gcd(&self.den);
        let num = &self.num.exact_div(&g1) * &b.num.exact_div(&g2);
        let den = &self.den.exact_div(&g2) * &b.den.exact_div(&g1);
        let inv = gq_one() / den.lead();
        Self::cache(num.scale(&inv), den.scale(&inv))
    }

    pub fn div(&self, b: &Self) -> Result<Self> {
        if b.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.mul(&b.recip()?))
    }

    pub fn scale(&self, c: &Gq) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self::cache(self.num.scale(c), self.den.clone())
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let inv = gq_one() / self.num.lead();
        Ok(Self::cache(self.den.scale(&inv), self.num.scale(&inv)))
    }

    pub fn powi(&self, k: i32) -> Result<Self> {
        let base = if k < 0 { self.recip()? } else { self.clone() };
        Ok(Self::from_polys(
            base.num.pow(k.unsigned_abs()),
            base.den.pow(k.unsigned_abs()),
        )?)
    }

    pub fn derivative(&self) -> Self {
        let n = &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative());
        Self::from_polys(n, &self.den * &self.den).expect("nonzero den")
    }

    /// `a′/a`.
    pub fn log_derivative(&self) -> Result<Self> {
        self.derivative().div(self)
    }

    /// Float evaluation; infinite at poles.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let n = Poly::eval_f64(&self.num_f, z);
        let d = Poly::eval_f64(&self.den_f, z);
        if d.norm() == 0.0 {
            if n.norm() == 0.0 {
                return Complex64::new(f64::NAN, f64::NAN);
            }
            return Complex64::new(f64::INFINITY, f64::INFINITY);
        }
        n / d
    }

    /// Exact evaluation; `None` at a pole.
    pub fn eval_exact(&self, z: &Gq) -> Option<Gq> {
        let d = self.den.eval(z);
        if d.is_zero() {
            return None;
        }
        Some(self.num.eval(z) / d)
    }

    /// Zeros with exact multiplicities.
    pub fn zeros(&self) -> Vec<(Complex64, u32)> {
        roots::roots_with_multiplicity(&self.num)
    }

    /// Poles with exact multiplicities.
    pub fn poles(&self) -> Vec<(Complex64, u32)> {
        roots::roots_with_multiplicity(&self.den)
    }

    /// Order of the zero or pole at `z0` (zero at a regular nonvanishing point).
    pub fn order_at(&self, z0: Complex64) -> Result<i32> {
        if self.is_zero() {
            return Err(Error::Domain("order of the zero function".into()));
        }
        let z = gq_from_c64(z0)?;
        Ok(poly_order(&self.num, &z, z0) as i32 - poly_order(&self.den, &z, z0) as i32)
    }

    /// Squarefree split `self = R² · S` with `S` squarefree in numerator and
    /// denominator and carrying the leading coefficient.
    pub fn square_split(&self) -> SquareSplit {
        let mut r_num = Poly::one();
        let mut r_den = Poly::one();
        let mut s_num = Poly::constant(self.num.lead());
        let mut s_den = Poly::one();
        for (i, f) in self.num.squarefree().iter().enumerate() {
            let m = i as u32 + 1;
            r_num = &r_num * &f.pow(m / 2);
            if m % 2 == 1 {
                s_num = &s_num * f;
            }
        }
        for (i, f) in self.den.squarefree().iter().enumerate() {
            let m = i as u32 + 1;
            r_den = &r_den * &f.pow(m / 2);
            if m % 2 == 1 {
                s_den = &s_den * f;
            }
        }
        SquareSplit {
            root_part: Self::from_polys(r_num, r_den).expect("nonzero den"),
            radicand: Self::from_polys(s_num, s_den).expect("nonzero den"),
        }
    }

    /// Laurent expansion at `z0` with `depth` terms from the leading order.
    pub fn local_expand(&self, z0: Complex64, depth: usize) -> Result<LocalLaurent> {
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        if self.is_zero() {
            return Ok(LocalLaurent {
                center: z0,
                k_min: 0,
                coeffs: Vec::new(),
            });
        }
        let z = gq_from_c64(z0)?;
        let tn = poly_order(&self.num, &z, z0);
        let td = poly_order(&self.den, &z, z0);
        let n = self.num.shift(&z);
        let d = self.den.shift(&z);
        let nc: Vec<Gq> = n.coeffs().iter().skip(tn).cloned().collect();
        let dc: Vec<Gq> = d.coeffs().iter().skip(td).cloned().collect();
        let mut q: Vec<Gq> = Vec::with_capacity(depth);
        let inv = gq_one() / dc[0].clone();
        for k in 0..depth {
            let mut acc = nc.get(k).cloned().unwrap_or_else(gq_zero);
            for j in 1..=k.min(dc.len() - 1) {
                acc -= &dc[j] * &q[k - j];
            }
            q.push(acc * &inv);
        }
        Ok(LocalLaurent {
            center: z0,
            k_min: tn as i32 - td as i32,
            coeffs: q.iter().map(gq_to_c64).collect(),
        })
    }

    /// Hermite reduction: `∫ self = rational + ∫ log_part` where `log_part`
    /// is proper with squarefree denominator. A nonzero `log_part` means the
    /// antiderivative has logarithms.
    pub fn integrate(&self) -> Result<Antiderivative> {
        let (q, r) = self.num.divrem(&self.den);
        let mut g = Self::from_poly(q.integral());
        let mut a = r;
        let d = self.den.clone();
        let mut dm = d.gcd(&d.derivative());
        let ds = d.exact_div(&dm);
        while !dm.is_constant() {
            let dm2 = dm.gcd(&dm.derivative());
            let dms = dm.exact_div(&dm2);
            let lhs = -&(&ds * &dm.derivative()).exact_div(&dm);
            let (b, c) = Poly::solve_bezout(&lhs, &dms, &a)?;
            a = &c - &(&b.derivative() * &ds.exact_div(&dms));
            g = g.add(&Self::from_polys(b, dm.clone())?);
            dm = dm2;
        }
        Ok(Antiderivative {
            rational: g,
            log_part: Self::from_polys(a, ds)?,
        })
    }
}

/// Gauss–Legendre nodes used by [`segment_integral`].
pub const QUADRATURE_NODES: usize = 32;

/// Integral of `g` along the segment `a → b`, composite Gauss–Legendre.
pub fn segment_integral(
    g: impl Fn(Complex64) -> Complex64,
    a: Complex64,
    b: Complex64,
    panels: usize,
) -> Complex64 {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    let rule = RULE.get_or_init(|| {
        GaussLegendre::new(NonZeroUsize::new(QUADRATURE_NODES).expect("nonzero node count"))
    });
    let panels = panels.max(1);
    let step = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..panels {
        let lo = a + step * k as f64;
        let mid = lo + step * 0.5;
        for &(x, w) in rule.as_node_weight_pairs() {
            total += g(mid + step * (0.5 * x)) * w;
        }
    }
    total * step * 0.5
}

impl RationalFunction {
    /// `∫_a^b self dz` along the straight segment: exact when the
    /// antiderivative is rational, quadrature otherwise.
    pub fn integral_along(&self, a: Complex64, b: Complex64) -> Result<Complex64> {
        let d = b - a;
        for (p, _) in self.poles() {
            let t = if d.norm_sqr() == 0.0 {
                0.0
            } else {
                ((p - a) * d.conj()).re / d.norm_sqr()
            };
            if (a + d * t.clamp(0.0, 1.0) - p).norm() < 1e-8 {
                return Err(Error::Domain(format!("pole {p} on the integration path")));
            }
        }
        let anti = self.integrate()?;
        if anti.is_rational() {
            return Ok(anti.rational.eval(b) - anti.rational.eval(a));
        }
        Ok(segment_integral(|z| self.eval(z), a, b, 16))
    }
}

/// Multiplicity of `z0` as a root of `p`: exact when `z0` is an exact root,
/// otherwise counted by clustering numerical roots.
fn poly_order(p: &Poly, z: &Gq, z0: Complex64) -> usize {
    if p.is_constant() {
        return 0;
    }
    let exact = p.shift(z).trailing_zeros();
    if exact > 0 {
        return exact;
    }
    let c = p.to_c64();
    let value = Poly::eval_f64(&c, z0).norm();
    let scale: f64 = c
        .iter()
        .rev()
        .fold(0.0, |acc, a| acc * z0.norm() + a.norm());
    if value > 1e-6 * scale {
        return 0;
    }
    roots::roots_with_multiplicity(p)
        .iter()
        .filter(|(r, _)| (r - z0).norm() <= ROOT_CLUSTER_TOL)
        .map(|(_, m)| *m as usize)
        .sum()
}

/// Integer residue of `f′/f` at `z0`, i.e. the order of `f` there.
pub fn log_derivative_residue(f: &RationalFunction, z0: Complex64) -> Result<i32> {
    f.order_at(z0)
}

#[derive(Clone, Debug)]
pub struct SquareSplit {
    pub root_part: RationalFunction,
    pub radicand: RationalFunction,
}

#[derive(Clone, Debug)]
pub struct SquareTest {
    pub is_square: bool,
    pub sqrt: Option<RationalFunction>,
    /// Whether the leading coefficient had an exact root in ℚ(i).
    pub exact: bool,
}

/// Decides whether `e` is the square of a rational function.
pub fn square_test(e: &RationalFunction) -> Result<SquareTest> {
    if e.is_zero() {
        return Err(Error::Domain("square test of the zero function".into()));
    }
    let split = e.square_split();
    if !split.radicand.is_constant() {
        return Ok(SquareTest {
            is_square: false,
            sqrt: None,
            exact: true,
        });
    }
    let c = split.radicand.numerator().lead();
    let (root, exact) = match gq_sqrt_exact(&c) {
        Some(r) => (r, true),
        None => (gq_from_c64(gq_to_c64(&c).sqrt())?, false),
    };
    Ok(SquareTest {
        is_square: true,
        sqrt: Some(split.root_part.scale(&root)),
        exact,
    })
}

#[derive(Clone, Debug)]
pub struct Antiderivative {
    pub rational: RationalFunction,
    pub log_part: RationalFunction,
}

impl Antiderivative {
    pub fn is_rational(&self) -> bool {
        self.log_part.is_zero()
    }
}

/// Truncated Laurent series about `center`, exponents from `k_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLaurent {
    pub center: Complex64,
    pub k_min: i32,
    pub coeffs: Vec<Complex64>,
}

impl LocalLaurent {
    /// Smallest exponent with nonzero coefficient; `None` for zero.
    pub fn order(&self) -> Option<i32> {
        self.coeffs
            .iter()
            .position(|c| c.norm() != 0.0)
            .map(|p| self.k_min + p as i32)
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> Complex64 {
        let i = k - self.k_min;
        if i < 0 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs.get(i as usize).copied().unwrap_or_default()
    }

    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        let w = z - self.center;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * w.powi(self.k_min + i as i32))
            .sum()
    }
}

#[derive(Serialize, Deserialize)]
struct RationalJson {
    num: Vec<[f64; 2]>,
    den: Vec<[f64; 2]>,
}

impl Serialize for RationalFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalJson {
            num: self.num_f.iter().map(|z| [z.re, z.im]).collect(),
            den: self.den_f.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = RationalJson::deserialize(d)?;
        let conv = |v: &[[f64; 2]]| -> Vec<Complex64> {
            v.iter().map(|p| Complex64::new(p[0], p[1])).collect()
        };
        RationalFunction::from_coeffs(&conv(&j.num), &conv(&j.den))
            .map_err(serde::de::Error::custom)
    }
}
