//! Birkhoff (`g = g₋ g₊`) and Iwasawa (`g = F g₊`) splittings of twisted loops.
//!
//! Birkhoff: `u = g₋⁻¹` is minus-based and `u g` has no negative Fourier modes.
//! Truncating `u` to `M` negative modes turns that condition into a
//! block-Toeplitz system in the coefficients of `u`; its condition number
//! detects loops outside the big cell.
//!
//! Iwasawa: with `F` unitary on `|λ| = 1`, `P = g* g = g₊* g₊`. `P` is positive
//! definite on the circle, so its Birkhoff splitting `P = m₋ m₊` always exists,
//! and `g₊ = B₀^{-*} m₊` where `B₀` is the Cholesky factor of `m₊(0)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::loop_algebra::{MatrixLoop, CIRCLE_SAMPLES, DEFAULT_TRUNCATION};
use crate::mat2::Mat2;

/// Recomposition tolerance shared by both splittings.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Condition estimates above this put the input outside the big cell.
pub const BIG_CELL_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FactorizationOptions {
    /// Exponents kept on each side for the infinite factors.
    pub truncation: i32,
    /// Negative modes of `g₋⁻¹` carried by the Toeplitz solve.
    pub solver_modes: usize,
    pub condition_threshold: f64,
    /// Doublings of `truncation`/`solver_modes` the Iwasawa solver may try.
    pub max_refinements: usize,
}

impl Default for FactorizationOptions {
    fn default() -> Self {
        FactorizationOptions {
            truncation: DEFAULT_TRUNCATION,
            solver_modes: 2 * DEFAULT_TRUNCATION as usize,
            condition_threshold: BIG_CELL_CONDITION,
            max_refinements: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffResult {
    pub g_minus: MatrixLoop,
    pub g_plus: MatrixLoop,
    pub residual: f64,
    pub in_big_cell: bool,
    pub condition_estimate: f64,
    pub truncation_suspect: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IwasawaResult {
    pub unitary_part: MatrixLoop,
    pub plus_part: MatrixLoop,
    pub residual: f64,
    pub unitarity_residual: f64,
    pub truncation_suspect: bool,
}

pub fn birkhoff(g: &MatrixLoop) -> BirkhoffResult {
    birkhoff_with(g, &FactorizationOptions::default())
}

pub fn birkhoff_with(g: &MatrixLoop, opts: &FactorizationOptions) -> BirkhoffResult {
    split_minus_plus(g, opts, true)
}

fn split_minus_plus(g: &MatrixLoop, opts: &FactorizationOptions, estimate: bool) -> BirkhoffResult {
    let modes = opts.solver_modes.max((-g.n_min()).max(1) as usize * 2);
    let system = toeplitz_system(g, modes);
    let lu = Lu::new(&system);
    let condition = if estimate {
        lu.condition_estimate()
    } else if lu.is_singular() {
        f64::INFINITY
    } else {
        0.0
    };
    if lu.is_singular() || condition > opts.condition_threshold {
        return BirkhoffResult {
            g_minus: MatrixLoop::identity(),
            g_plus: MatrixLoop::identity(),
            residual: f64::INFINITY,
            in_big_cell: false,
            condition_estimate: condition,
            truncation_suspect: false,
        };
    }

    // Row α of u: unknowns (u_{-k})_{α,β} at index 2(k-1)+β, k = 1..modes.
    let mut u_coeffs = vec![Mat2::ZERO; modes + 1];
    u_coeffs[modes] = Mat2::IDENTITY;
    for alpha in 0..2 {
        let mut rhs = vec![Complex64::new(0.0, 0.0); 2 * modes];
        for j in 1..=modes {
            let gj = g.coeff(-(j as i32));
            for beta in 0..2 {
                rhs[2 * (j - 1) + beta] = -gj.0[2 * alpha + beta];
            }
        }
        lu.solve_in_place(&mut rhs);
        for k in 1..=modes {
            for beta in 0..2 {
                u_coeffs[modes - k].0[2 * alpha + beta] = rhs[2 * (k - 1) + beta];
            }
        }
    }
    let (u, _) = MatrixLoop::twisted_projection(-(modes as i32), u_coeffs);

    let plus_full = u.multiply(g);
    let (g_plus, _) = {
        let hi = g.n_max().max(0);
        let coeffs = (0..=hi).map(|n| plus_full.coeff(n)).collect();
        MatrixLoop::twisted_projection(0, coeffs)
    };
    let minus_full = u.adjugate();
    let cut = minus_full.truncate(-opts.truncation.max(-g.n_min()), 0);
    let g_minus = cut.value.trimmed();
    let residual = g_minus.multiply(&g_plus).distance(g);
    BirkhoffResult {
        g_minus,
        g_plus: g_plus.trimmed(),
        residual,
        in_big_cell: true,
        condition_estimate: condition,
        truncation_suspect: cut.suspect,
    }
}

/// Transposed block-Toeplitz matrix of the finite-section problem:
/// entry `((j, β), (k, α)) = (g_{k-j})_{αβ}` for `j, k = 1..modes`.
pub fn toeplitz_system(g: &MatrixLoop, modes: usize) -> DenseMatrix {
    let mut t = DenseMatrix::zeros(2 * modes);
    for j in 1..=modes {
        for k in 1..=modes {
            let block = g.coeff(k as i32 - j as i32);
            if block.max_norm() == 0.0 {
                continue;
            }
            for alpha in 0..2 {
                for beta in 0..2 {
                    t.set(
                        2 * (j - 1) + beta,
                        2 * (k - 1) + alpha,
                        block.0[2 * alpha + beta],
                    );
                }
            }
        }
    }
    t
}

/// Upper-triangular `R` with positive real diagonal and `R† R = m` (Hermitian positive definite).
fn cholesky_upper(m: &Mat2) -> Option<Mat2> {
    let m00 = m.a().re;
    if !(m00 > 0.0) {
        return None;
    }
    let r11 = m00.sqrt();
    // R†R = [[r11², r11 r12], [r11 conj(r12), |r12|² + r22²]]
    let r12 = m.b() / r11;
    let r22sq = m.d().re - r12.norm_sqr();
    if !(r22sq > 0.0) {
        return None;
    }
    Some(Mat2::new(r11.into(), r12, 0.0.into(), r22sq.sqrt().into()))
}

pub fn iwasawa(g: &MatrixLoop) -> Result<IwasawaResult> {
    iwasawa_with(g, &FactorizationOptions::default())
}

pub fn iwasawa_with(g: &MatrixLoop, opts: &FactorizationOptions) -> Result<IwasawaResult> {
    let mut attempt = *opts;
    let mut last_residual = f64::INFINITY;
    for round in 0..=opts.max_refinements {
        match iwasawa_once(g, &attempt) {
            Ok(res)
                if res.residual <= RESIDUAL_TOLERANCE
                    && res.unitarity_residual <= RESIDUAL_TOLERANCE =>
            {
                return Ok(res)
            }
            Ok(res) => {
                last_residual = res.residual.max(res.unitarity_residual);
                if !res.truncation_suspect && round > 0 {
                    break;
                }
            }
            Err(_) => {}
        }
        attempt.truncation *= 2;
        attempt.solver_modes *= 2;
    }
    Err(Error::NotConverged {
        residual: last_residual,
        iterations: opts.max_refinements,
    })
}

fn iwasawa_once(g: &MatrixLoop, opts: &FactorizationOptions) -> Result<IwasawaResult> {
    let positive = g.loop_adjoint().multiply(g);
    // m₋ is an infinite series; the Toeplitz solve needs enough modes to resolve it.
    let mut split_opts = *opts;
    split_opts.solver_modes = opts
        .solver_modes
        .max(2 * (positive.n_max().max(1) as usize));
    let split = split_minus_plus(&positive, &split_opts, false);
    if !split.in_big_cell {
        return Err(Error::OutsideBigCell {
            condition: split.condition_estimate,
        });
    }
    // u P has no modes above deg P, so m₊ is exact up to the accuracy of u.
    let m_plus = split.g_plus;
    let b0 = cholesky_upper(&m_plus.coeff(0))
        .ok_or_else(|| Error::Domain("m₊(0) is not positive definite".into()))?;
    let b0_inv_adj = b0
        .adjoint()
        .inverse()
        .ok_or_else(|| Error::Domain("singular B₀".into()))?;
    let (left, _) = MatrixLoop::twisted_projection(0, vec![b0_inv_adj]);
    let plus_raw = left.multiply(&m_plus);
    let (plus_part, _) = MatrixLoop::twisted_projection(
        plus_raw.n_min(),
        plus_raw.terms().map(|(_, m)| m).collect(),
    );
    let unitary_part = g.multiply(&plus_part.adjugate());
    let residual = unitary_part.multiply(&plus_part).distance(g);
    let unitarity_residual = unitary_part.unitarity_deviation(CIRCLE_SAMPLES);
    Ok(IwasawaResult {
        unitary_part,
        plus_part,
        residual,
        unitarity_residual,
        truncation_suspect: split.truncation_suspect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_algebra::sampling::*;
    use crate::loop_algebra::{in_solvable_subgroup, LoopClass, LoopKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_splits_trivially() {
        let r = birkhoff(&MatrixLoop::identity());
        assert!(r.in_big_cell);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.g_minus.distance(&MatrixLoop::identity()), 0.0);
        assert_eq!(r.g_plus.distance(&MatrixLoop::identity()), 0.0);
    }

    #[test]
    fn construct_then_split_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let gm = random_minus_based(&mut rng, 4, 0.8);
            let gp = random_plus(&mut rng, 4, 0.8);
            let g = gm.multiply(&gp);
            let r = birkhoff(&g);
            assert!(r.in_big_cell);
            assert!(
                r.g_minus.distance(&gm) < 1e-9,
                "{}",
                r.g_minus.distance(&gm)
            );
            assert!(r.g_plus.distance(&gp) < 1e-9);
            assert!(r.residual < 1e-9);
            assert!(r.g_minus.check_class(&LoopClass::new(LoopKind::MinusBased)));
        }
    }

    #[test]
    fn minus_based_input_is_returned_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let gm = random_minus_based(&mut rng, 3, 0.9);
        let r = birkhoff(&gm);
        assert!(r.g_minus.distance(&gm) < 1e-12);
        assert!(r.g_plus.distance(&MatrixLoop::identity()) < 1e-12);
    }

    #[test]
    fn nonzero_partial_index_is_outside_big_cell() {
        let g = MatrixLoop::from_terms(&[
            (1, Mat2::antidiag(c(1.0, 0.0), c(0.0, 0.0))),
            (-1, Mat2::antidiag(c(0.0, 0.0), c(-1.0, 0.0))),
        ])
        .unwrap();
        let r = birkhoff(&g);
        assert!(!r.in_big_cell);
        assert!(r.condition_estimate > BIG_CELL_CONDITION);
    }

    #[test]
    fn iwasawa_of_unitary_loop_is_itself() {
        let s: f64 = 0.3;
        let u = MatrixLoop::from_terms(&[
            (0, Mat2::diag(s.cos().into(), s.cos().into())),
            (1, Mat2::antidiag(s.sin().into(), 0.0.into())),
            (-1, Mat2::antidiag(0.0.into(), (-s.sin()).into())),
        ])
        .unwrap();
        let r = iwasawa(&u).unwrap();
        assert!(r.unitary_part.distance(&u) < 1e-10);
        assert!(r.plus_part.distance(&MatrixLoop::identity()) < 1e-10);
    }

    #[test]
    fn iwasawa_of_solvable_constant() {
        let g = MatrixLoop::constant(Mat2::diag(c(2.0, 0.0), c(0.5, 0.0))).unwrap();
        let r = iwasawa(&g).unwrap();
        assert!(r.unitary_part.distance(&MatrixLoop::identity()) < 1e-12);
        assert!(r.plus_part.distance(&g) < 1e-12);
    }

    #[test]
    fn iwasawa_random_degree_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let g = random_loop(&mut rng, 4, 0.6);
            let r = iwasawa(&g).unwrap();
            assert!(r.residual < 1e-9);
            assert!(r.unitarity_residual < 1e-9);
            assert!(r
                .unitary_part
                .check_class(&LoopClass::new(LoopKind::Unitary)));
            assert!(r
                .plus_part
                .check_class(&LoopClass::new(LoopKind::PlusBased)));
            assert!(in_solvable_subgroup(&r.plus_part.coeff(0), 1e-12));
        }
    }

    #[test]
    fn iwasawa_ignores_right_plus_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g = random_loop(&mut rng, 3, 0.6);
        // p(0) = diag(ρ, 1/ρ) with ρ > 0 lies in B.
        let p = MatrixLoop::constant(Mat2::diag(c(1.7, 0.0), c(1.0 / 1.7, 0.0)))
            .unwrap()
            .multiply(&lower_unipotent(c(0.3, -0.2), 1))
            .multiply(&upper_unipotent(c(-0.1, 0.4), 1));
        let f1 = iwasawa(&g).unwrap().unitary_part;
        let f2 = iwasawa(&g.multiply(&p)).unwrap().unitary_part;
        assert!(f1.distance(&f2) < 1e-8);
    }

    #[test]
    fn factorizations_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = random_loop(&mut rng, 4, 0.6);
        let a = iwasawa(&g).unwrap();
        let b = iwasawa(&g).unwrap();
        assert!(a.unitary_part.distance(&b.unitary_part) <= 1e-10);
        let a = birkhoff(&g);
        let b = birkhoff(&g);
        assert!(a.g_minus.distance(&b.g_minus) <= 1e-10);
    }
}
