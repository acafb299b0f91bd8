//! Numerical roots with exact multiplicities.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::poly::Poly;

/// Distance under which two computed roots are treated as one.
pub const ROOT_CLUSTER_TOL: f64 = 1e-8;

/// Roots of `p` with multiplicities, multiplicity taken from the squarefree
/// decomposition so that it is exact.
pub fn roots_with_multiplicity(p: &Poly) -> Vec<(Complex64, u32)> {
    let mut out: Vec<(Complex64, u32)> = Vec::new();
    for (i, s) in p.squarefree().iter().enumerate() {
        for r in squarefree_roots(&s.to_c64()) {
            match out
                .iter_mut()
                .find(|(z, _)| (*z - r).norm() <= ROOT_CLUSTER_TOL)
            {
                Some(e) => e.1 += i as u32 + 1,
                None => out.push((r, i as u32 + 1)),
            }
        }
    }
    out
}

/// Roots of a squarefree polynomial given by float coefficients.
pub fn squarefree_roots(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<Complex64> = c.iter().map(|x| x / lead).collect();
    if n == 1 {
        return vec![-monic[0]];
    }
    let comp = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -monic[i]
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let raw: Vec<Complex64> = match comp.schur().eigenvalues() {
        Some(ev) if ev.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
            ev.iter().copied().collect()
        }
        _ => aberth(&monic),
    };
    raw.into_iter().map(|z| polish(&monic, z)).collect()
}

fn eval_with_derivative(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn polish(c: &[Complex64], mut z: Complex64) -> Complex64 {
    let mut best = eval_with_derivative(c, z).0.norm();
    for _ in 0..20 {
        let (p, dp) = eval_with_derivative(c, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        let val = eval_with_derivative(c, next).0.norm();
        if val < best {
            best = val;
            z = next;
        } else {
            break;
        }
    }
    z
}

fn aberth(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().fold(0.0f64, |m, x| m.max(x.norm()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 0.4 + std::f64::consts::TAU * k as f64 / n as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = eval_with_derivative(c, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            z[i] -= w;
            moved = moved.max(w.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}
