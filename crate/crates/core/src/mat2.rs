//! Dense 2×2 complex matrices.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Row-major 2×2 complex matrix `[[m[0], m[1]], [m[2], m[3]]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [Complex64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([ZERO; 4]);
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);
    /// Pauli σ₃.
    pub const SIGMA3: Mat2 = Mat2([ONE, ZERO, ZERO, Complex64::new(-1.0, 0.0)]);
    pub const SIGMA1: Mat2 = Mat2([ZERO, ONE, ONE, ZERO]);
    pub const SIGMA2: Mat2 = Mat2([ZERO, Complex64::new(0.0, -1.0), I, ZERO]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2([a, b, c, d])
    }

    pub fn diag(a: Complex64, d: Complex64) -> Self {
        Mat2([a, ZERO, ZERO, d])
    }

    pub fn antidiag(b: Complex64, c: Complex64) -> Self {
        Mat2([ZERO, b, c, ZERO])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([a.into(), b.into(), c.into(), d.into()])
    }

    #[inline]
    pub fn a(&self) -> Complex64 {
        self.0[0]
    }
    #[inline]
    pub fn b(&self) -> Complex64 {
        self.0[1]
    }
    #[inline]
    pub fn c(&self) -> Complex64 {
        self.0[2]
    }
    #[inline]
    pub fn d(&self) -> Complex64 {
        self.0[3]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0] + self.0[3]
    }

    /// Adjugate; equals the inverse when `det = 1`.
    pub fn adjugate(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([d, -b, -c, a])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 {
            return None;
        }
        Some(self.adjugate().scale(det.inv()))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Mat2(self.0.map(|x| x * s))
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn diagonal_part(&self) -> Self {
        Mat2([self.0[0], ZERO, ZERO, self.0[3]])
    }

    pub fn off_diagonal_part(&self) -> Self {
        Mat2([ZERO, self.0[1], self.0[2], ZERO])
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::ZERO
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
            self.0[3] + rhs.0[3],
        ])
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, rhs: Mat2) {
        for (x, y) in self.0.iter_mut().zip(rhs.0) {
            *x += y;
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
            self.0[3] - rhs.0[3],
        ])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2(self.0.map(|x| -x))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

impl Mul<Complex64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: Complex64) -> Mat2 {
        self.scale(s)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2(self.0.map(|x| x * s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjugate_inverts_unimodular() {
        let m = Mat2::new(
            Complex64::new(2.0, 1.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(-1.0, 0.3),
            Complex64::new(0.2, 0.1),
        );
        let inv = m.inverse().unwrap();
        assert!((m * inv - Mat2::IDENTITY).max_norm() < 1e-14);
    }

    #[test]
    fn pauli_matrices_anticommute() {
        let s = Mat2::SIGMA1 * Mat2::SIGMA2 + Mat2::SIGMA2 * Mat2::SIGMA1;
        assert_eq!(s.max_norm(), 0.0);
        assert_eq!(
            (Mat2::SIGMA3 * Mat2::SIGMA3 - Mat2::IDENTITY).max_norm(),
            0.0
        );
    }
}
