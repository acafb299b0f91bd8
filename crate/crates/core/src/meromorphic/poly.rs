//! Dense polynomials over the Gaussian rationals.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact complex rational number.
pub type Gq = Complex<BigRational>;

pub fn gq(re: i64, im: i64) -> Gq {
    Complex::new(
        BigRational::from_integer(BigInt::from(re)),
        BigRational::from_integer(BigInt::from(im)),
    )
}

pub fn gq_zero() -> Gq {
    Complex::new(BigRational::zero(), BigRational::zero())
}

pub fn gq_one() -> Gq {
    Complex::new(BigRational::one(), BigRational::zero())
}

/// Exact conversion of a finite double pair.
pub fn gq_from_c64(z: Complex64) -> Result<Gq> {
    let re = BigRational::from_float(z.re)
        .ok_or_else(|| Error::InvalidInput(format!("non-finite coefficient {z}")))?;
    let im = BigRational::from_float(z.im)
        .ok_or_else(|| Error::InvalidInput(format!("non-finite coefficient {z}")))?;
    Ok(Complex::new(re, im))
}

pub fn gq_to_c64(z: &Gq) -> Complex64 {
    Complex64::new(
        z.re.to_f64().unwrap_or(f64::NAN),
        z.im.to_f64().unwrap_or(f64::NAN),
    )
}

fn gq_is_zero(z: &Gq) -> bool {
    z.re.is_zero() && z.im.is_zero()
}

fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

/// Exact square root of a Gaussian rational when one exists in ℚ(i).
pub fn gq_sqrt_exact(z: &Gq) -> Option<Gq> {
    if gq_is_zero(z) {
        return Some(gq_zero());
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let r = rational_sqrt(&(&z.re * &z.re + &z.im * &z.im))?;
    let x2 = (&r + &z.re) / &two;
    if x2.is_zero() {
        let y = rational_sqrt(&((&r - &z.re) / &two))?;
        return Some(Complex::new(BigRational::zero(), y));
    }
    let x = rational_sqrt(&x2)?;
    let y = &z.im / (&two * &x);
    Some(Complex::new(x, y))
}

/// Polynomial with ascending coefficients and no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Poly {
    c: Vec<Gq>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { c: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::constant(gq_one())
    }

    pub fn constant(a: Gq) -> Self {
        Poly::from_coeffs(vec![a])
    }

    /// `a zᵏ`.
    pub fn monomial(a: Gq, k: usize) -> Self {
        let mut c = vec![gq_zero(); k];
        c.push(a);
        Poly::from_coeffs(c)
    }

    pub fn from_coeffs(mut c: Vec<Gq>) -> Self {
        while c.last().is_some_and(gq_is_zero) {
            c.pop();
        }
        Poly { c }
    }

    pub fn from_c64(c: &[Complex64]) -> Result<Self> {
        Ok(Poly::from_coeffs(
            c.iter().map(|&z| gq_from_c64(z)).collect::<Result<_>>()?,
        ))
    }

    pub fn coeffs(&self) -> &[Gq] {
        &self.c
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.c.iter().map(gq_to_c64).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    fn deg_or_zero(&self) -> usize {
        self.degree().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.c.len() <= 1
    }

    pub fn lead(&self) -> Gq {
        self.c.last().cloned().unwrap_or_else(gq_zero)
    }

    pub fn scale(&self, a: &Gq) -> Self {
        Poly::from_coeffs(self.c.iter().map(|x| x * a).collect())
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let inv = gq_one() / self.lead();
        self.scale(&inv)
    }

    pub fn derivative(&self) -> Self {
        Poly::from_coeffs(
            self.c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, x)| x * gq(k as i64, 0))
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self) -> Self {
        let mut c = vec![gq_zero()];
        c.extend(
            self.c
                .iter()
                .enumerate()
                .map(|(k, x)| x / gq(k as i64 + 1, 0)),
        );
        Poly::from_coeffs(c)
    }

    pub fn eval(&self, z: &Gq) -> Gq {
        self.c.iter().rev().fold(gq_zero(), |acc, x| acc * z + x)
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn divrem(&self, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "polynomial division by zero");
        let dd = d.deg_or_zero();
        if self.c.len() < d.c.len() {
            return (Poly::zero(), self.clone());
        }
        let inv = gq_one() / d.lead();
        let mut r = self.c.clone();
        let mut q = vec![gq_zero(); r.len() - dd];
        for k in (0..q.len()).rev() {
            let t = &r[k + dd] * &inv;
            if !gq_is_zero(&t) {
                for (j, dj) in d.c.iter().enumerate() {
                    let v = &t * dj;
                    r[k + j] -= v;
                }
            }
            q[k] = t;
        }
        r.truncate(dd);
        (Poly::from_coeffs(q), Poly::from_coeffs(r))
    }

    /// Quotient of a division known to be exact.
    pub fn exact_div(&self, d: &Poly) -> Poly {
        let (q, r) = self.divrem(d);
        debug_assert!(r.is_zero(), "inexact polynomial division");
        q
    }

    /// Monic greatest common divisor; `gcd(0, 0) = 0`.
    pub fn gcd(&self, other: &Poly) -> Poly {
        if modular::coprime(self, other) {
            return Poly::one();
        }
        let mut a = self.monic();
        let mut b = other.monic();
        while !b.is_zero() {
            let (_, r) = a.divrem(&b);
            a = b;
            b = r.monic();
        }
        a
    }

    /// Returns `(s, t)` with `s a + t b = c`, `deg s < deg b`, for coprime `a, b`.
    pub fn solve_bezout(a: &Poly, b: &Poly, c: &Poly) -> Result<(Poly, Poly)> {
        let (mut r0, mut r1) = (a.clone(), b.clone());
        let (mut s0, mut s1) = (Poly::one(), Poly::zero());
        while !r1.is_zero() {
            let (q, r) = r0.divrem(&r1);
            let s2 = &s0 - &(&q * &s1);
            r0 = std::mem::replace(&mut r1, r);
            s0 = std::mem::replace(&mut s1, s2);
        }
        if !r0.is_constant() || r0.is_zero() {
            return Err(Error::InvalidInput(
                "Bezout solve needs coprime polynomials".into(),
            ));
        }
        let inv = gq_one() / r0.lead();
        let s = s0.scale(&inv);
        let (_, s) = (&s * c).divrem(b);
        let t = (c - &(&s * a)).exact_div(b);
        Ok((s, t))
    }

    /// Taylor shift `p(z0 + w)` as a polynomial in `w`.
    pub fn shift(&self, z0: &Gq) -> Poly {
        let mut c = self.c.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let t = &c[j + 1] * z0;
                c[j] += t;
            }
        }
        Poly::from_coeffs(c)
    }

    /// Number of vanishing low-order coefficients.
    pub fn trailing_zeros(&self) -> usize {
        self.c.iter().take_while(|x| gq_is_zero(x)).count()
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| &acc * self)
    }

    /// Yun squarefree decomposition: `p = lead · ∏ s_iⁱ` with monic squarefree,
    /// pairwise coprime `s_i`; entry `i − 1` holds `s_i`.
    pub fn squarefree(&self) -> Vec<Poly> {
        if self.is_constant() {
            return Vec::new();
        }
        let f = self.monic();
        let fp = f.derivative();
        let a0 = f.gcd(&fp);
        let mut b = f.exact_div(&a0);
        let c = fp.exact_div(&a0);
        let mut d = &c - &b.derivative();
        let mut out = Vec::new();
        while !b.is_constant() {
            let a = b.gcd(&d);
            b = b.exact_div(&a);
            let c = d.exact_div(&a);
            d = &c - &b.derivative();
            out.push(a);
        }
        while out.last().is_some_and(|p: &Poly| p.is_constant()) {
            out.pop();
        }
        out
    }

    /// Float Horner evaluation on cached coefficients.
    pub fn eval_f64(c: &[Complex64], z: Complex64) -> Complex64 {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.c.len().max(rhs.c.len());
        let z = gq_zero();
        Poly::from_coeffs(
            (0..n)
                .map(|k| self.c.get(k).unwrap_or(&z) + rhs.c.get(k).unwrap_or(&z))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.c.len().max(rhs.c.len());
        let z = gq_zero();
        Poly::from_coeffs(
            (0..n)
                .map(|k| self.c.get(k).unwrap_or(&z) - rhs.c.get(k).unwrap_or(&z))
                .collect(),
        )
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![gq_zero(); self.c.len() + rhs.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            if gq_is_zero(a) {
                continue;
            }
            for (j, b) in rhs.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::from_coeffs(c)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            c: self.c.iter().map(|x| -x.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> Poly {
        Poly::from_coeffs(c.iter().map(|&x| gq(x, 0)).collect())
    }

    #[test]
    fn division_and_gcd() {
        let a = &p(&[-1, 0, 1]) * &p(&[2, 1]);
        let b = &p(&[-1, 1]) * &p(&[5, 0, 1]);
        assert_eq!(a.gcd(&b), p(&[-1, 1]));
        let (q, r) = a.divrem(&p(&[-1, 1]));
        assert!(r.is_zero());
        assert_eq!(q, &p(&[1, 1]) * &p(&[2, 1]));
    }

    #[test]
    fn yun_recovers_multiplicities() {
        let f = &(&p(&[-1, 1]).pow(3) * &p(&[2, 1]).pow(2)) * &p(&[0, 3]);
        let s = f.squarefree();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], p(&[0, 1]));
        assert_eq!(s[1], p(&[2, 1]));
        assert_eq!(s[2], p(&[-1, 1]));
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let f = p(&[3, -2, 0, 1]);
        let z0 = gq(2, -1);
        let g = f.shift(&z0);
        let w = gq(1, 3);
        assert_eq!(g.eval(&w), f.eval(&(&z0 + &w)));
    }

    #[test]
    fn bezout_solution() {
        let a = p(&[1, 0, 1]);
        let b = p(&[-2, 1]);
        let c = p(&[7, 1, 4]);
        let (s, t) = Poly::solve_bezout(&a, &b, &c).unwrap();
        assert_eq!(&(&s * &a) + &(&t * &b), c);
        assert!(s.degree().unwrap_or(0) < 1);
    }

    #[test]
    fn exact_gaussian_square_roots() {
        let z = gq(-5, 12);
        let r = gq_sqrt_exact(&z).unwrap();
        assert_eq!(&r * &r, z);
        assert!(gq_sqrt_exact(&gq(2, 0)).is_none());
        let m = gq(-4, 0);
        let r = gq_sqrt_exact(&m).unwrap();
        assert_eq!(&r * &r, m);
    }
}

/// Images in `F_p` with `p ≡ 1 (mod 4)`, where `i` has a square root. A
/// trivial gcd of the images certifies a trivial gcd over ℚ(i) whenever both
/// leading coefficients survive the reduction.
mod modular {
    use num_bigint::BigInt;
    use num_traits::{ToPrimitive, Zero};

    use super::{Gq, Poly};

    const P: u64 = 998_244_353;

    fn mul(a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % P as u128) as u64
    }

    fn pow(mut b: u64, mut e: u64) -> u64 {
        let mut r = 1;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    }

    fn inv(a: u64) -> u64 {
        pow(a, P - 2)
    }

    fn reduce_int(n: &BigInt) -> u64 {
        let m = n % BigInt::from(P);
        let m = if m < BigInt::zero() {
            m + BigInt::from(P)
        } else {
            m
        };
        m.to_u64().expect("reduced residue fits")
    }

    fn reduce(z: &Gq, i: u64) -> Option<u64> {
        let part = |q: &num_rational::BigRational| {
            let d = reduce_int(q.denom());
            (d != 0).then(|| mul(reduce_int(q.numer()), inv(d)))
        };
        Some((part(&z.re)? + mul(i, part(&z.im)?)) % P)
    }

    fn image(p: &Poly, i: u64) -> Option<Vec<u64>> {
        let v: Option<Vec<u64>> = p.coeffs().iter().map(|c| reduce(c, i)).collect();
        v.filter(|v| v.last().is_some_and(|&l| l != 0))
    }

    fn trim(v: &mut Vec<u64>) {
        while v.last() == Some(&0) {
            v.pop();
        }
    }

    fn rem(a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut r = a.to_vec();
        let lb = inv(*b.last().expect("nonzero divisor"));
        while r.len() >= b.len() {
            let t = mul(*r.last().expect("nonempty"), lb);
            let shift = r.len() - b.len();
            for (j, &bj) in b.iter().enumerate() {
                r[shift + j] = (r[shift + j] + P - mul(t, bj)) % P;
            }
            trim(&mut r);
            if r.is_empty() {
                break;
            }
        }
        r
    }

    pub fn coprime(a: &Poly, b: &Poly) -> bool {
        if a.is_zero() || b.is_zero() {
            return false;
        }
        let i = pow(3, (P - 1) / 4);
        let (Some(mut x), Some(mut y)) = (image(a, i), image(b, i)) else {
            return false;
        };
        while !y.is_empty() {
            let r = rem(&x, &y);
            x = y;
            y = r;
        }
        x.len() == 1
    }
}
