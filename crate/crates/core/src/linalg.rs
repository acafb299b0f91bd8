//! Small dense complex linear algebra used by the factorization kernels.

use num_complex::Complex64;

/// Row-major square complex matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    singular: bool,
    norm1: f64,
}

impl Lu {
    pub fn new(a: &DenseMatrix) -> Self {
        let n = a.n;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        let scale = a
            .data
            .iter()
            .fold(0.0f64, |m, x| m.max(x.norm()))
            .max(1e-300);
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].norm()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmax <= scale * 1e-300 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor.norm() == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    let t = lu[k * n + j];
                    lu[i * n + j] -= factor * t;
                }
            }
        }
        Lu {
            n,
            lu,
            perm,
            singular,
            norm1: a.norm1(),
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        let pb: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&pb);
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * b[j];
            }
            b[i] = s / self.lu[i * n + i];
        }
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            col[j] = Complex64::new(1.0, 0.0);
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`; infinite for singular input.
    pub fn condition_estimate(&self) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let c = self.norm1 * self.inverse().norm1();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}
