//! Dressing of `g₋` and of potentials by plus loops.
//!
//! `h₊ g₋ = ĝ₋ p₊` (Birkhoff). With `P = p₊⁻¹` the dressed potential is
//! `ĝ₋⁻¹dĝ₋ = P⁻¹ξP + P⁻¹dP`; its `λ⁻¹` mode is `p₀ A p₀⁻¹` where
//! `p₀ = p₊(λ=0) = diag(β, β⁻¹)`, so `ĥ.f = β² f`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpw_core::{FrameField, Integrator, MeromorphicPotential};
use crate::error::{Error, Result};
use crate::factorization::{birkhoff_with, FactorizationOptions};
use crate::loop_algebra::{sampling, MatrixLoop, DEFAULT_TRUNCATION, EPS_DET};
use crate::mat2::Mat2;
use crate::meromorphic::{gq_from_c64, Gq, RationalFunction};

/// Step of the 4th-order central differences in `z`.
pub const FD_STEP: f64 = 1e-3;

/// A plus loop `h₊` with `det h₊ ≡ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DressingElement {
    h_plus: MatrixLoop,
}

impl DressingElement {
    pub fn new(h_plus: MatrixLoop) -> Result<Self> {
        if h_plus.n_min() < 0 {
            return Err(Error::InvalidInput(
                "dressing element has negative powers of λ".into(),
            ));
        }
        let dev = h_plus.det_deviation(1.0, 32);
        if !(dev <= EPS_DET) {
            return Err(Error::InvalidInput(format!(
                "dressing element is not unimodular (|det − 1| = {dev:e})"
            )));
        }
        Ok(DressingElement { h_plus })
    }

    pub fn identity() -> Self {
        DressingElement {
            h_plus: MatrixLoop::identity(),
        }
    }

    /// `diag(t, t⁻¹)`.
    pub fn t_d(t: Complex64) -> Result<Self> {
        if t.norm() == 0.0 {
            return Err(Error::InvalidInput("T_D needs t ≠ 0".into()));
        }
        Ok(DressingElement {
            h_plus: sampling::diagonal(t),
        })
    }

    /// `[[1, 0], [tλ, 1]]`.
    pub fn t_u(t: Complex64) -> Self {
        DressingElement {
            h_plus: sampling::lower_unipotent(t, 1),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, degree: i32, scale: f64) -> Self {
        DressingElement {
            h_plus: sampling::random_plus(rng, degree, scale),
        }
    }

    pub fn h_plus(&self) -> &MatrixLoop {
        &self.h_plus
    }

    /// `self · other`, acting as `other` first.
    pub fn compose(&self, other: &DressingElement) -> DressingElement {
        DressingElement {
            h_plus: self.h_plus.multiply(&other.h_plus),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarInput {
    Real(f64),
    Pair([f64; 2]),
}

impl ScalarInput {
    fn value(&self) -> Complex64 {
        match self {
            ScalarInput::Real(x) => Complex64::new(*x, 0.0),
            ScalarInput::Pair([a, b]) => Complex64::new(*a, *b),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DressingJson {
    Diagonal {
        #[serde(rename = "TD")]
        td: ScalarInput,
    },
    Unipotent {
        #[serde(rename = "TU")]
        tu: ScalarInput,
    },
    Loop(MatrixLoop),
}

impl<'de> Deserialize<'de> for DressingElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match DressingJson::deserialize(d)? {
            DressingJson::Diagonal { td } => {
                DressingElement::t_d(td.value()).map_err(D::Error::custom)
            }
            DressingJson::Unipotent { tu } => Ok(DressingElement::t_u(tu.value())),
            DressingJson::Loop(l) => DressingElement::new(l).map_err(D::Error::custom),
        }
    }
}

impl Serialize for DressingElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.h_plus.serialize(s)
    }
}

/// Birkhoff split of `h₊ g₋`; `None` outside the big cell.
pub fn dress_point(
    h: &DressingElement,
    g_minus: &MatrixLoop,
    truncation: i32,
) -> Option<(MatrixLoop, MatrixLoop)> {
    let opts = FactorizationOptions {
        truncation,
        ..FactorizationOptions::default()
    };
    let r = birkhoff_with(&h.h_plus.multiply(g_minus), &opts);
    r.in_big_cell.then_some((r.g_minus, r.g_plus))
}

#[derive(Clone, Debug, Serialize)]
pub struct DressedField {
    /// Field whose `g_minus` is `ĝ₋`; frames are recomputed on demand.
    pub field: FrameField,
    /// `p₊` per point with `h₊ g₋ = ĝ₋ p₊`.
    pub p_plus: Vec<MatrixLoop>,
    /// Points that left the big cell under dressing.
    pub newly_singular: usize,
}

pub fn dress_gminus(h: &DressingElement, ff: &FrameField) -> DressedField {
    let split: Vec<Option<(MatrixLoop, MatrixLoop)>> = ff
        .g_minus
        .par_iter()
        .zip(ff.singular.par_iter())
        .map(|(g, &s)| {
            if s {
                None
            } else {
                dress_point(h, g, ff.truncation)
            }
        })
        .collect();
    let mut field = ff.clone();
    field.frame.clear();
    field.plus_part.clear();
    let mut p_plus = Vec::with_capacity(split.len());
    let mut newly_singular = 0;
    for (k, s) in split.into_iter().enumerate() {
        match s {
            Some((gm, pp)) => {
                field.g_minus[k] = gm;
                p_plus.push(pp);
            }
            None => {
                if !field.singular[k] {
                    newly_singular += 1;
                }
                field.singular[k] = true;
                field.g_minus[k] = MatrixLoop::identity();
                p_plus.push(MatrixLoop::identity());
            }
        }
    }
    DressedField {
        field,
        p_plus,
        newly_singular,
    }
}

/// Probe points `center + spacing·(i, j)`, `i, j ∈ {−(n−1)/2, …}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub center: Complex64,
    pub spacing: f64,
    pub n: usize,
}

impl ProbeGrid {
    pub fn around(center: Complex64) -> Self {
        ProbeGrid {
            center,
            spacing: 0.25,
            n: 3,
        }
    }

    pub fn points(&self) -> Vec<Complex64> {
        let off = (self.n as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                out.push(
                    self.center + Complex64::new(i as f64 - off, j as f64 - off) * self.spacing,
                );
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSample {
    pub z: Complex64,
    pub f: Complex64,
    pub e: Complex64,
    /// `ĥ.f` read from the `λ⁻¹` mode of `ĝ₋⁻¹ dĝ₋` with differenced `dĝ₋`.
    pub f_hat_fd: Complex64,
    /// Lower-left entry of that mode, `E/ĥ.f`.
    pub e_over_f_hat_fd: Complex64,
    /// `ĥ.f = β² f` from `p₊(λ=0)`.
    pub f_hat: Complex64,
    pub e_over_f_hat: Complex64,
    /// `|ĥ.f · (E/ĥ.f) − E|` from the `p₊(λ=0)` route.
    pub hopf_residual: f64,
    /// Same product from the differenced route.
    pub hopf_residual_fd: f64,
    /// Size of everything in `ĝ₋⁻¹ dĝ₋` other than the off-diagonal `λ⁻¹` mode.
    pub form_residual: f64,
    pub route_discrepancy: f64,
    /// Largest coefficient of `λP′ − (PÂ − AP)`, `P = p₊⁻¹`.
    pub component_ode_residual: f64,
    pub p_plus: MatrixLoop,
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialDressing {
    pub fd_step: f64,
    pub samples: Vec<ProbeSample>,
    pub skipped: Vec<(Complex64, String)>,
    pub max_hopf_residual: f64,
    pub max_hopf_residual_fd: f64,
    pub max_form_residual: f64,
    pub max_route_discrepancy: f64,
    pub max_component_ode_residual: f64,
}

fn fd_weights() -> [(f64, f64); 4] {
    [
        (-2.0, 1.0 / 12.0),
        (-1.0, -8.0 / 12.0),
        (1.0, 8.0 / 12.0),
        (2.0, -1.0 / 12.0),
    ]
}

fn probe(
    h: &DressingElement,
    xi: &MeromorphicPotential,
    it: &Integrator,
    z: Complex64,
) -> std::result::Result<ProbeSample, String> {
    let step = FD_STEP;
    let mut base = it.identity();
    it.segment(&mut base, xi.base_point, z)
        .map_err(|e| e.to_string())?;
    let split_at = |dz: f64| -> std::result::Result<(MatrixLoop, MatrixLoop), String> {
        let mut g = base.clone();
        if dz != 0.0 {
            it.segment(&mut g, z, z + dz).map_err(|e| e.to_string())?;
        }
        dress_point(h, &it.to_loop(&g), DEFAULT_TRUNCATION)
            .ok_or_else(|| format!("h₊g₋ outside the big cell near {}", z + dz))
    };
    let (gm, pp) = split_at(0.0)?;
    let mut dg = MatrixLoop::zero();
    let mut dp = MatrixLoop::zero();
    for (k, w) in fd_weights() {
        let (g, p) = split_at(k * step)?;
        dg = dg.add(&g.scale((w / step).into()));
        dp = dp.add(&p.adjugate().scale((w / step).into()));
    }
    let m = gm.adjugate().multiply(&dg);
    let mode = m.coeff(-1);
    let form_residual = m
        .terms()
        .filter(|(n, _)| *n != -1)
        .fold(mode.diagonal_part().max_norm(), |acc, (_, c)| {
            acc.max(c.max_norm())
        });

    let f = xi.f.eval(z);
    let e = xi.e.eval(z);
    let p0 = pp.coeff(0);
    let beta = p0.a();
    let f_hat = beta * beta * f;
    let e_over_f_hat = e / f / (beta * beta);

    // λP′ = PÂ − AP coefficientwise, P = p₊⁻¹.
    let p = pp.adjugate();
    let a = Mat2::antidiag(f, e / f);
    let a_hat = Mat2::antidiag(f_hat, e_over_f_hat);
    let mut ode = 0.0f64;
    for n in p.n_min()..=p.n_max() + 1 {
        let lhs = dp.coeff(n - 1);
        let pn = p.coeff(n);
        ode = ode.max((lhs - (pn * a_hat - a * pn)).max_norm());
    }

    Ok(ProbeSample {
        z,
        f,
        e,
        f_hat_fd: mode.b(),
        e_over_f_hat_fd: mode.c(),
        f_hat,
        e_over_f_hat,
        hopf_residual: (f_hat * e_over_f_hat - e).norm(),
        hopf_residual_fd: (mode.b() * mode.c() - e).norm(),
        form_residual,
        route_discrepancy: (mode.b() - f_hat).norm(),
        component_ode_residual: ode,
        p_plus: pp,
    })
}

/// Dresses `ξ` at each probe point and recovers `ĥ.f` by both routes.
pub fn dress_potential(
    h: &DressingElement,
    xi: &MeromorphicPotential,
    probes: &ProbeGrid,
) -> Result<PotentialDressing> {
    let it = Integrator::new(xi, DEFAULT_TRUNCATION)?;
    let results: Vec<(Complex64, std::result::Result<ProbeSample, String>)> = probes
        .points()
        .into_par_iter()
        .map(|z| {
            if it.near_singularity(z) {
                return (
                    z,
                    Err("probe on a singularity of the potential".to_string()),
                );
            }
            (z, probe(h, xi, &it, z))
        })
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (z, r) in results {
        match r {
            Ok(s) => samples.push(s),
            Err(msg) => skipped.push((z, msg)),
        }
    }
    let max = |g: fn(&ProbeSample) -> f64| samples.iter().map(g).fold(0.0f64, f64::max);
    Ok(PotentialDressing {
        fd_step: FD_STEP,
        max_hopf_residual: max(|s| s.hopf_residual),
        max_hopf_residual_fd: max(|s| s.hopf_residual_fd),
        max_form_residual: max(|s| s.form_residual),
        max_route_discrepancy: max(|s| s.route_discrepancy),
        max_component_ode_residual: max(|s| s.component_ode_residual),
        samples,
        skipped,
    })
}

/// `T_D(t) f = t² f`.
pub fn t_dress_d(t: Complex64, f: &RationalFunction) -> Result<RationalFunction> {
    t_dress_d_exact(&gq_from_c64(t)?, f)
}

pub fn t_dress_d_exact(t: &Gq, f: &RationalFunction) -> Result<RationalFunction> {
    if t.re == num_rational::BigRational::default() && t.im == num_rational::BigRational::default()
    {
        return Err(Error::InvalidInput("T_D needs t ≠ 0".into()));
    }
    Ok(f.scale(&(t * t)))
}

#[derive(Clone, Debug, Serialize)]
pub struct TuSample {
    pub z: Complex64,
    /// `None` where `1 + t∫f` vanishes (a pole of the dressed `f`).
    pub value: Option<Complex64>,
}

/// `T_U(t) f = f / (1 + t∫_{z0}^z f)²` at the probe points.
pub fn t_dress_u(
    t: Complex64,
    f: &RationalFunction,
    base: Complex64,
    probes: &[Complex64],
) -> Result<Vec<TuSample>> {
    probes
        .iter()
        .map(|&z| {
            let prim = f.integral_along(base, z)?;
            let den = Complex64::new(1.0, 0.0) + t * prim;
            let value = (den.norm() > 1e-12).then(|| f.eval(z) / (den * den));
            Ok(TuSample { z, value })
        })
        .collect()
}
