//! Potential → `g₋` → extended frame → immersion, plus discrete CMC checks.
//!
//! `g₋ = Σ_{k≥0} G_k λ^{-k}` with `dg₋ = g₋ ξ`, `ξ = λ⁻¹ A(z) dz`, gives the
//! triangular system `G_0 = I`, `G_k′ = G_{k−1} A`. Keeping `k ≤ K` is exact
//! for the kept coefficients, so truncation only drops the tail.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{iwasawa_with, FactorizationOptions};
use crate::loop_algebra::{MatrixLoop, DEFAULT_TRUNCATION};
use crate::mat2::Mat2;
use crate::meromorphic::RationalFunction;

/// Grid points closer than this to a pole of `f` or `E/f` are singular.
pub const POLE_DISTANCE: f64 = 1e-2;
/// Largest RK4 step in `z`.
pub const MAX_STEP: f64 = 1.0 / 256.0;
/// Steps are halved until `‖A‖·h` drops below this.
pub const STEP_NORM_BOUND: f64 = 0.05;
/// Smallest step before a path is declared blocked.
pub const MIN_STEP: f64 = 1e-9;
pub const DEFAULT_H: f64 = 0.5;

fn default_h() -> f64 {
    DEFAULT_H
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Open unit disk.
    Disk,
    #[default]
    Plane,
}

impl Domain {
    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            Domain::Disk => z.norm() < 1.0,
            Domain::Plane => true,
        }
    }
}

/// `ξ = λ⁻¹ [[0, f], [E/f, 0]] dz` with normalization point `base_point`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeromorphicPotential {
    pub f: RationalFunction,
    #[serde(rename = "E")]
    pub e: RationalFunction,
    #[serde(rename = "H", default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub domain: Domain,
    /// Point where `g₋ = I`.
    #[serde(default)]
    pub base_point: Complex64,
}

impl MeromorphicPotential {
    pub fn new(f: RationalFunction, e: RationalFunction) -> Self {
        MeromorphicPotential {
            f,
            e,
            h: DEFAULT_H,
            domain: Domain::Plane,
            base_point: Complex64::new(0.0, 0.0),
        }
    }

    pub fn with_base_point(mut self, z: Complex64) -> Self {
        self.base_point = z;
        self
    }

    pub fn with_domain(mut self, d: Domain) -> Self {
        self.domain = d;
        self
    }

    /// `f = 1, E = 1`, whose `g₋` is `exp(zλ⁻¹ antidiag(1, 1))`.
    pub fn cylinder() -> Self {
        Self::new(RationalFunction::one(), RationalFunction::one())
    }

    pub fn validate(&self) -> Result<()> {
        if self.f.is_zero() {
            return Err(Error::InvalidInput("f vanishes identically".into()));
        }
        if self.e.is_zero() {
            return Err(Error::InvalidInput("E vanishes identically".into()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "H must be positive, got {}",
                self.h
            )));
        }
        if !self.domain.contains(self.base_point) {
            return Err(Error::InvalidInput("base point outside the domain".into()));
        }
        Ok(())
    }

    /// `E/f`.
    pub fn e_over_f(&self) -> Result<RationalFunction> {
        self.e.div(&self.f)
    }

    /// Poles of `f`, zeros of `f` and poles of `E/f`.
    pub fn singular_points(&self) -> Result<Vec<Complex64>> {
        let q = self.e_over_f()?;
        let mut pts: Vec<Complex64> = self
            .f
            .poles()
            .into_iter()
            .chain(self.f.zeros())
            .chain(q.poles())
            .map(|(z, _)| z)
            .collect();
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        Ok(pts)
    }

    /// Matrix part `A(z)` of `ξ`.
    pub fn coefficient(&self, z: Complex64) -> Mat2 {
        let f = self.f.eval(z);
        Mat2::antidiag(f, self.e.eval(z) / f)
    }
}

/// Fixed-step RK4 transport of the coefficient vector `(G_0, …, G_K)`.
#[derive(Clone, Debug)]
pub struct Integrator {
    f: RationalFunction,
    q: RationalFunction,
    singular: Vec<Complex64>,
    domain: Domain,
    truncation: usize,
}

/// Coefficients `G_0..=G_K` of `g₋`.
pub type Coefficients = Vec<Mat2>;

impl Integrator {
    pub fn new(p: &MeromorphicPotential, truncation: i32) -> Result<Self> {
        p.validate()?;
        if truncation < 1 {
            return Err(Error::InvalidInput("truncation must be positive".into()));
        }
        let it = Integrator {
            f: p.f.clone(),
            q: p.e_over_f()?,
            singular: p.singular_points()?,
            domain: p.domain,
            truncation: truncation as usize,
        };
        if it.near_singularity(p.base_point) {
            return Err(Error::InvalidInput(format!(
                "base point {} lies on a singularity of the potential",
                p.base_point
            )));
        }
        Ok(it)
    }

    pub fn identity(&self) -> Coefficients {
        let mut g = vec![Mat2::ZERO; self.truncation + 1];
        g[0] = Mat2::IDENTITY;
        g
    }

    pub fn near_singularity(&self, z: Complex64) -> bool {
        !self.domain.contains(z) || self.singular.iter().any(|s| (s - z).norm() < POLE_DISTANCE)
    }

    fn segment_clear(&self, a: Complex64, b: Complex64) -> bool {
        let d = b - a;
        let len2 = d.norm_sqr();
        self.singular.iter().all(|&s| {
            let t = if len2 == 0.0 {
                0.0
            } else {
                ((s - a) * d.conj()).re / len2
            };
            (a + d * t.clamp(0.0, 1.0) - s).norm() >= POLE_DISTANCE
        }) && (self.domain == Domain::Plane || (a.norm() < 1.0 && b.norm() < 1.0))
    }

    fn rhs(&self, g: &[Mat2], z: Complex64, dz: Complex64, out: &mut [Mat2]) -> f64 {
        let f = self.f.eval(z) * dz;
        let q = self.q.eval(z) * dz;
        out[0] = Mat2::ZERO;
        for k in 1..g.len() {
            let [a, b, c, d] = g[k - 1].0;
            out[k] = Mat2::new(b * q, a * f, d * q, c * f);
        }
        f.norm().max(q.norm())
    }

    /// Transports `g` along the straight segment `a → b`.
    pub fn segment(&self, g: &mut Coefficients, a: Complex64, b: Complex64) -> Result<()> {
        if !self.segment_clear(a, b) {
            return Err(Error::Integration(format!(
                "segment {a} → {b} passes a singularity"
            )));
        }
        let total = (b - a).norm();
        if total == 0.0 {
            return Ok(());
        }
        let dir = (b - a) / total;
        let n = g.len();
        let mut k1 = vec![Mat2::ZERO; n];
        let mut k2 = vec![Mat2::ZERO; n];
        let mut k3 = vec![Mat2::ZERO; n];
        let mut k4 = vec![Mat2::ZERO; n];
        let mut tmp = vec![Mat2::ZERO; n];
        let mut s = 0.0;
        while s < total {
            let mut h = MAX_STEP.min(total - s);
            let z = a + dir * s;
            loop {
                let norm = self.f.eval(z).norm().max(self.q.eval(z).norm()).max(
                    self.f
                        .eval(z + dir * h)
                        .norm()
                        .max(self.q.eval(z + dir * h).norm()),
                );
                if norm * h <= STEP_NORM_BOUND {
                    break;
                }
                h *= 0.5;
                if h < MIN_STEP || !norm.is_finite() {
                    return Err(Error::Integration(format!("step underflow near {z}")));
                }
            }
            let dz = dir * h;
            self.rhs(g, z, dz, &mut k1);
            for i in 0..n {
                tmp[i] = g[i] + k1[i] * 0.5;
            }
            self.rhs(&tmp, z + dz * 0.5, dz, &mut k2);
            for i in 0..n {
                tmp[i] = g[i] + k2[i] * 0.5;
            }
            self.rhs(&tmp, z + dz * 0.5, dz, &mut k3);
            for i in 0..n {
                tmp[i] = g[i] + k3[i];
            }
            self.rhs(&tmp, z + dz, dz, &mut k4);
            for i in 0..n {
                g[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (1.0 / 6.0);
            }
            s += h;
        }
        if g.iter().all(Mat2::is_finite) {
            Ok(())
        } else {
            Err(Error::Integration("non-finite coefficients".into()))
        }
    }

    /// Transports `g` along the polyline `path`.
    pub fn along(&self, g: &mut Coefficients, path: &[Complex64]) -> Result<()> {
        for w in path.windows(2) {
            self.segment(g, w[0], w[1])?;
        }
        Ok(())
    }

    pub fn to_loop(&self, g: &[Mat2]) -> MatrixLoop {
        let coeffs: Vec<Mat2> = g.iter().rev().copied().collect();
        MatrixLoop::twisted_projection(-(g.len() as i32 - 1), coeffs).0
    }
}

/// `g₋(z)` along the polyline `path`, which must start at the base point.
pub fn g_minus_along(
    p: &MeromorphicPotential,
    path: &[Complex64],
    truncation: i32,
) -> Result<MatrixLoop> {
    let it = Integrator::new(p, truncation)?;
    if path
        .first()
        .is_none_or(|z| (z - p.base_point).norm() > 1e-14)
    {
        return Err(Error::InvalidInput(
            "path must start at the base point".into(),
        ));
    }
    let mut g = it.identity();
    it.along(&mut g, path)?;
    Ok(it.to_loop(&g))
}

/// `g₋(z)` along the straight segment from the base point.
pub fn g_minus_at(p: &MeromorphicPotential, z: Complex64, truncation: i32) -> Result<MatrixLoop> {
    g_minus_along(p, &[p.base_point, z], truncation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridShape {
    Square,
    Radial,
}

/// Square: `resolution` cells per side over `[−extent, extent]²` about the
/// base point. Radial: `resolution` rings out to radius `extent`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: GridShape,
    pub extent: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub fn square(extent: f64, resolution: usize) -> Self {
        GridSpec {
            shape: GridShape::Square,
            extent,
            resolution,
        }
    }

    pub fn radial(extent: f64, resolution: usize) -> Self {
        GridSpec {
            shape: GridShape::Radial,
            extent,
            resolution,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub spec: GridSpec,
    pub center: Complex64,
    pub points: Vec<Complex64>,
    /// Square: nodes per side. Radial: spokes per ring.
    pub width: usize,
}

impl Grid {
    pub fn new(spec: GridSpec, center: Complex64) -> Result<Self> {
        if !(spec.extent > 0.0 && spec.extent.is_finite()) {
            return Err(Error::InvalidInput("grid extent must be positive".into()));
        }
        if spec.resolution == 0 {
            return Err(Error::InvalidInput(
                "grid resolution must be positive".into(),
            ));
        }
        match spec.shape {
            GridShape::Square => {
                if spec.resolution % 2 == 1 {
                    return Err(Error::InvalidInput(
                        "square grid resolution must be even".into(),
                    ));
                }
                let n = spec.resolution + 1;
                let step = 2.0 * spec.extent / spec.resolution as f64;
                let mut points = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        points.push(
                            center
                                + Complex64::new(
                                    -spec.extent + step * i as f64,
                                    -spec.extent + step * j as f64,
                                ),
                        );
                    }
                }
                Ok(Grid {
                    spec,
                    center,
                    points,
                    width: n,
                })
            }
            GridShape::Radial => {
                let spokes = (4 * spec.resolution).max(8);
                let mut points = vec![center];
                for r in 1..=spec.resolution {
                    let rad = spec.extent * r as f64 / spec.resolution as f64;
                    for s in 0..spokes {
                        let t = std::f64::consts::TAU * s as f64 / spokes as f64;
                        points.push(center + Complex64::from_polar(rad, t));
                    }
                }
                Ok(Grid {
                    spec,
                    center,
                    points,
                    width: spokes,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center_index(&self) -> usize {
        match self.spec.shape {
            GridShape::Square => {
                let h = self.spec.resolution / 2;
                h * self.width + h
            }
            GridShape::Radial => 0,
        }
    }

    fn radial_index(&self, ring: usize, spoke: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.width + spoke % self.width
        }
    }

    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut t = Vec::new();
        match self.spec.shape {
            GridShape::Square => {
                let n = self.width;
                for j in 0..n - 1 {
                    for i in 0..n - 1 {
                        let a = j * n + i;
                        let (b, c, d) = (a + 1, a + n, a + n + 1);
                        t.push([a, b, d]);
                        t.push([a, d, c]);
                    }
                }
            }
            GridShape::Radial => {
                let s = self.width;
                for k in 0..s {
                    t.push([0, self.radial_index(1, k), self.radial_index(1, k + 1)]);
                }
                for r in 1..self.spec.resolution {
                    for k in 0..s {
                        let a = self.radial_index(r, k);
                        let b = self.radial_index(r, k + 1);
                        let c = self.radial_index(r + 1, k);
                        let d = self.radial_index(r + 1, k + 1);
                        t.push([a, c, d]);
                        t.push([a, d, b]);
                    }
                }
            }
        }
        t
    }

    /// Whether the vertex has a complete one-ring.
    pub fn is_interior(&self, idx: usize) -> bool {
        match self.spec.shape {
            GridShape::Square => {
                let (i, j) = (idx % self.width, idx / self.width);
                i > 0 && j > 0 && i + 1 < self.width && j + 1 < self.width
            }
            GridShape::Radial => idx == 0 || (idx - 1) / self.width + 1 < self.spec.resolution,
        }
    }

    /// Two forward neighbors along the grid directions.
    pub fn forward_neighbors(&self, idx: usize) -> Option<(usize, usize)> {
        match self.spec.shape {
            GridShape::Square => {
                let (i, j) = (idx % self.width, idx / self.width);
                (i + 1 < self.width && j + 1 < self.width).then(|| (idx + 1, idx + self.width))
            }
            GridShape::Radial => {
                if idx == 0 {
                    return None;
                }
                let (r, s) = ((idx - 1) / self.width + 1, (idx - 1) % self.width);
                (r < self.spec.resolution)
                    .then(|| (self.radial_index(r + 1, s), self.radial_index(r, s + 1)))
            }
        }
    }

    /// Vertex adjacency from the triangulation.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for t in self.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if !adj[a].contains(&b) {
                    adj[a].push(b);
                }
                if !adj[b].contains(&a) {
                    adj[b].push(a);
                }
            }
        }
        adj
    }
}

/// `g₋`, extended frames and plus parts on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct FrameField {
    pub grid: Grid,
    pub truncation: i32,
    pub g_minus: Vec<MatrixLoop>,
    /// Unitary factor `F`; empty until [`frames_from_gminus`].
    pub frame: Vec<MatrixLoop>,
    /// `g₊⁻¹`, so that `g₋ = F · plus_part⁻¹`; empty until [`frames_from_gminus`].
    pub plus_part: Vec<MatrixLoop>,
    pub singular: Vec<bool>,
    /// Largest disagreement between two grid routes to the same point.
    pub closure_residual: f64,
    /// Largest `|det g₋ − 1|` on the unit circle.
    pub det_residual: f64,
    pub iwasawa_residual: f64,
    pub unitarity_residual: f64,
}

impl FrameField {
    pub fn has_frames(&self) -> bool {
        self.frame.len() == self.g_minus.len()
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|s| **s).count()
    }
}

fn transport(
    it: &Integrator,
    g: &Coefficients,
    a: Complex64,
    b: Complex64,
) -> Option<Coefficients> {
    if it.near_singularity(b) {
        return None;
    }
    let mut out = g.clone();
    it.segment(&mut out, a, b).ok().map(|_| out)
}

fn coeff_distance(a: &[Mat2], b: &[Mat2]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((*x - *y).max_norm()))
}

/// Integrates `dg₋ = g₋ ξ` over the grid from the base point, which is the
/// grid center. Square grids use the center row, then columns; radial grids
/// use spokes. Remaining edges measure path independence.
pub fn integrate_potential(
    p: &MeromorphicPotential,
    spec: GridSpec,
    truncation: i32,
) -> Result<FrameField> {
    let it = Integrator::new(p, truncation)?;
    let grid = Grid::new(spec, p.base_point)?;
    let n = grid.len();
    let mut state: Vec<Option<Coefficients>> = vec![None; n];
    let c = grid.center_index();
    state[c] = Some(it.identity());

    let closure_residual = match spec.shape {
        GridShape::Square => {
            let w = grid.width;
            let (i0, j0) = (c % w, c / w);
            let walk = |state: &mut Vec<Option<Coefficients>>,
                        seq: &mut dyn Iterator<Item = (usize, usize)>| {
                for (from, to) in seq {
                    state[to] = state[from]
                        .as_ref()
                        .and_then(|g| transport(&it, g, grid.points[from], grid.points[to]));
                }
            };
            walk(
                &mut state,
                &mut (i0 + 1..w).map(|i| (j0 * w + i - 1, j0 * w + i)),
            );
            walk(
                &mut state,
                &mut (0..i0).rev().map(|i| (j0 * w + i + 1, j0 * w + i)),
            );
            let columns: Vec<Vec<(usize, Option<Coefficients>)>> = (0..w)
                .into_par_iter()
                .map(|i| {
                    let mut col = Vec::new();
                    for dir in [1i64, -1] {
                        let mut cur = state[j0 * w + i].clone();
                        let mut j = j0 as i64;
                        loop {
                            let nj = j + dir;
                            if nj < 0 || nj >= w as i64 {
                                break;
                            }
                            let (from, to) = (j as usize * w + i, nj as usize * w + i);
                            cur = cur.and_then(|g| {
                                transport(&it, &g, grid.points[from], grid.points[to])
                            });
                            col.push((to, cur.clone()));
                            j = nj;
                        }
                    }
                    col
                })
                .collect();
            for col in columns {
                for (idx, g) in col {
                    state[idx] = g;
                }
            }
            (0..w)
                .into_par_iter()
                .filter(|&j| j != j0)
                .map(|j| {
                    let mut worst = 0.0f64;
                    for i in 0..w - 1 {
                        let (a, b) = (j * w + i, j * w + i + 1);
                        if let (Some(ga), Some(gb)) = (&state[a], &state[b]) {
                            if let Some(t) = transport(&it, ga, grid.points[a], grid.points[b]) {
                                worst = worst.max(coeff_distance(&t, gb));
                            }
                        }
                    }
                    worst
                })
                .reduce(|| 0.0, f64::max)
        }
        GridShape::Radial => {
            let spokes = grid.width;
            let rings = spec.resolution;
            let rays: Vec<Vec<(usize, Option<Coefficients>)>> = (0..spokes)
                .into_par_iter()
                .map(|s| {
                    let mut cur = Some(it.identity());
                    let mut prev = 0usize;
                    let mut out = Vec::new();
                    for r in 1..=rings {
                        let idx = grid.radial_index(r, s);
                        cur = cur
                            .and_then(|g| transport(&it, &g, grid.points[prev], grid.points[idx]));
                        out.push((idx, cur.clone()));
                        prev = idx;
                    }
                    out
                })
                .collect();
            for ray in rays {
                for (idx, g) in ray {
                    state[idx] = g;
                }
            }
            (1..=rings)
                .into_par_iter()
                .map(|r| {
                    let mut worst = 0.0f64;
                    for s in 0..spokes {
                        let (a, b) = (grid.radial_index(r, s), grid.radial_index(r, s + 1));
                        if let (Some(ga), Some(gb)) = (&state[a], &state[b]) {
                            if let Some(t) = transport(&it, ga, grid.points[a], grid.points[b]) {
                                worst = worst.max(coeff_distance(&t, gb));
                            }
                        }
                    }
                    worst
                })
                .reduce(|| 0.0, f64::max)
        }
    };

    let singular: Vec<bool> = state.iter().map(Option::is_none).collect();
    let g_minus: Vec<MatrixLoop> = state
        .par_iter()
        .map(|g| {
            g.as_ref()
                .map_or_else(MatrixLoop::identity, |g| it.to_loop(g))
        })
        .collect();
    let det_residual = g_minus
        .par_iter()
        .zip(singular.par_iter())
        .filter(|(_, s)| !**s)
        .map(|(g, _)| g.det_deviation(1.0, 16))
        .reduce(|| 0.0, f64::max);
    Ok(FrameField {
        grid,
        truncation,
        g_minus,
        frame: Vec::new(),
        plus_part: Vec::new(),
        singular,
        closure_residual,
        det_residual,
        iwasawa_residual: 0.0,
        unitarity_residual: 0.0,
    })
}

/// Per-point Iwasawa splitting `g₋ = F g₊`; failures mark the point singular.
pub fn frames_from_gminus(mut ff: FrameField) -> FrameField {
    let opts = FactorizationOptions {
        truncation: ff.truncation,
        ..FactorizationOptions::default()
    };
    let c = ff.grid.center_index();
    let results: Vec<Option<(MatrixLoop, MatrixLoop, f64, f64)>> = ff
        .g_minus
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            if ff.singular[i] {
                return None;
            }
            if i == c {
                return Some((MatrixLoop::identity(), MatrixLoop::identity(), 0.0, 0.0));
            }
            iwasawa_with(g, &opts).ok().map(|r| {
                (
                    r.unitary_part,
                    r.plus_part.adjugate(),
                    r.residual,
                    r.unitarity_residual,
                )
            })
        })
        .collect();
    ff.frame = Vec::with_capacity(results.len());
    ff.plus_part = Vec::with_capacity(results.len());
    ff.iwasawa_residual = 0.0;
    ff.unitarity_residual = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some((f, p, res, ures)) => {
                ff.frame.push(f);
                ff.plus_part.push(p);
                ff.iwasawa_residual = ff.iwasawa_residual.max(res);
                ff.unitarity_residual = ff.unitarity_residual.max(ures);
            }
            None => {
                ff.singular[i] = true;
                ff.frame.push(MatrixLoop::identity());
                ff.plus_part.push(MatrixLoop::identity());
            }
        }
    }
    assert_eq!(
        ff.frame[c].distance(&MatrixLoop::identity()),
        0.0,
        "frame normalization at the base point"
    );
    ff
}

/// Convenience: integrate then split.
pub fn build_frames(p: &MeromorphicPotential, spec: GridSpec) -> Result<FrameField> {
    Ok(frames_from_gminus(integrate_potential(
        p,
        spec,
        DEFAULT_TRUNCATION,
    )?))
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceMesh {
    pub lambda0: Complex64,
    pub vertices: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
    pub points: Vec<Complex64>,
    pub triangles: Vec<[usize; 3]>,
    pub interior: Vec<bool>,
    /// Vertices whose one-ring stays at least two grid steps from singular points.
    pub away_from_singular: Vec<bool>,
}

/// Real coordinates of `X ∈ su(2)` in the basis `−(i/2)σ_k`.
pub fn su2_to_r3(x: &Mat2) -> [f64; 3] {
    let i = Complex64::new(0.0, 1.0);
    [Mat2::SIGMA1, Mat2::SIGMA2, Mat2::SIGMA3].map(|s| (i * (*x * s).trace()).re)
}

/// `Ψ = −(1/2H)(iλ∂_λF F⁻¹ + (i/2) F σ₃ F⁻¹)` at `λ = λ0`.
pub fn sym_point(frame: &MatrixLoop, lambda0: Complex64, h: f64) -> Result<[f64; 3]> {
    let i = Complex64::new(0.0, 1.0);
    let f = frame.evaluate(lambda0)?;
    let df = frame.evaluate_lambda_derivative(lambda0)?;
    let finv = f.adjugate();
    let x = (df * finv * (i * lambda0) + f * Mat2::SIGMA3 * finv * (i * 0.5)) * (-1.0 / (2.0 * h));
    Ok(su2_to_r3(&x))
}

pub fn sym_immersion(ff: &FrameField, lambda0: Complex64, h: f64) -> Result<SurfaceMesh> {
    if !ff.has_frames() {
        return Err(Error::InvalidInput("frames not computed".into()));
    }
    if (lambda0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("λ0 must lie on the unit circle".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput("H must be positive".into()));
    }
    let pts: Vec<Option<[f64; 3]>> = ff
        .frame
        .par_iter()
        .enumerate()
        .map(|(k, fr)| {
            if ff.singular[k] {
                return None;
            }
            sym_point(fr, lambda0, h)
                .ok()
                .filter(|v| v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let valid: Vec<bool> = pts.iter().map(Option::is_some).collect();
    let vertices = pts
        .into_iter()
        .map(|p| p.unwrap_or([f64::NAN; 3]))
        .collect();
    let adj = ff.grid.adjacency();
    let mut near = ff.singular.clone();
    for _ in 0..2 {
        let prev = near.clone();
        for (v, nb) in adj.iter().enumerate() {
            if nb.iter().any(|&w| prev[w]) {
                near[v] = true;
            }
        }
    }
    Ok(SurfaceMesh {
        lambda0,
        vertices,
        points: ff.grid.points.clone(),
        triangles: ff.grid.triangles(),
        interior: (0..ff.grid.len()).map(|k| ff.grid.is_interior(k)).collect(),
        away_from_singular: near.iter().map(|x| !x).collect(),
        valid,
    })
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexCurvature {
    pub vertex: usize,
    pub z: Complex64,
    pub mean_curvature: f64,
    pub deviation: f64,
    pub conformality: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CmcReport {
    pub target_h: f64,
    pub tolerance: f64,
    pub checked_vertices: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub max_conformality: f64,
    pub passed: bool,
    pub vertices: Vec<VertexCurvature>,
}

/// Mean curvature from the cotangent Laplacian with barycentric areas, at
/// interior vertices away from singular points. `deviation` is relative to
/// `h`; the report passes when every checked vertex is within `tolerance`.
pub fn verify_cmc(mesh: &SurfaceMesh, h: f64, tolerance: f64) -> CmcReport {
    let n = mesh.vertices.len();
    let mut lap = vec![[0.0f64; 3]; n];
    let mut area = vec![0.0f64; n];
    let mut complete = vec![true; n];
    for t in &mesh.triangles {
        if !t.iter().all(|&v| mesh.valid[v]) {
            for &v in t {
                complete[v] = false;
            }
            continue;
        }
        let p = t.map(|v| mesh.vertices[v]);
        let a = norm3(cross3(sub3(p[1], p[0]), sub3(p[2], p[0]))) / 2.0;
        for k in 0..3 {
            let (i, j, o) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (pi, pj, po) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[o]);
            let (u, v) = (sub3(pi, po), sub3(pj, po));
            let cot = dot3(u, v) / norm3(cross3(u, v)).max(1e-300);
            let d = sub3(pj, pi);
            for c in 0..3 {
                lap[i][c] += 0.5 * cot * d[c];
                lap[j][c] -= 0.5 * cot * d[c];
            }
            area[t[k]] += a / 3.0;
        }
    }
    let grid_dir = |v: usize| -> Option<f64> {
        // Conformality: a conformal differential maps grid directions to a
        // scaled rotation, so relative stretches agree and angles persist.
        let (a, b) = forward_pair(mesh, v)?;
        let (ea, eb) = (
            sub3(mesh.vertices[a], mesh.vertices[v]),
            sub3(mesh.vertices[b], mesh.vertices[v]),
        );
        let (za, zb) = (
            mesh.points[a] - mesh.points[v],
            mesh.points[b] - mesh.points[v],
        );
        let (sa, sb) = (norm3(ea) / za.norm(), norm3(eb) / zb.norm());
        let stretch = (sa - sb).abs() / (0.5 * (sa + sb));
        let cosr = dot3(ea, eb) / (norm3(ea) * norm3(eb));
        let cosz = (za.conj() * zb).re / (za.norm() * zb.norm());
        Some(stretch + (cosr - cosz).abs())
    };
    let vertices: Vec<VertexCurvature> = (0..n)
        .filter(|&v| mesh.interior[v] && mesh.valid[v] && complete[v] && mesh.away_from_singular[v])
        .map(|v| {
            let hv = norm3(lap[v]) / (2.0 * area[v]);
            VertexCurvature {
                vertex: v,
                z: mesh.points[v],
                mean_curvature: hv,
                deviation: (hv - h).abs() / h,
                conformality: grid_dir(v).unwrap_or(0.0),
            }
        })
        .collect();
    let max_deviation = vertices.iter().fold(0.0f64, |m, v| m.max(v.deviation));
    let mean_deviation = if vertices.is_empty() {
        0.0
    } else {
        vertices.iter().map(|v| v.deviation).sum::<f64>() / vertices.len() as f64
    };
    CmcReport {
        target_h: h,
        tolerance,
        checked_vertices: vertices.len(),
        max_deviation,
        mean_deviation,
        max_conformality: vertices.iter().fold(0.0f64, |m, v| m.max(v.conformality)),
        passed: !vertices.is_empty() && max_deviation <= tolerance,
        vertices,
    }
}

fn forward_pair(mesh: &SurfaceMesh, v: usize) -> Option<(usize, usize)> {
    // Two triangle neighbors with the most orthogonal parameter directions.
    let mut nb: Vec<usize> = mesh
        .triangles
        .iter()
        .filter(|t| t.contains(&v))
        .flat_map(|t| t.iter().copied())
        .filter(|&w| w != v && mesh.valid[w])
        .collect();
    nb.sort_unstable();
    nb.dedup();
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, &a) in nb.iter().enumerate() {
        for &b in &nb[k + 1..] {
            let (za, zb) = (
                mesh.points[a] - mesh.points[v],
                mesh.points[b] - mesh.points[v],
            );
            let c = ((za.conj() * zb).re / (za.norm() * zb.norm())).abs();
            if best.is_none_or(|(_, _, bc)| c < bc) {
                best = Some((a, b, c));
            }
        }
    }
    best.map(|(a, b, _)| (a, b))
}

/// Discrete umbilicity `|k₁ − k₂| / (|k₁| + |k₂|)` at a square-grid vertex,
/// from central second differences projected on the normal.
pub fn umbilicity(mesh: &SurfaceMesh, grid: &Grid, v: usize) -> Option<f64> {
    if grid.spec.shape != GridShape::Square || !grid.is_interior(v) {
        return None;
    }
    let w = grid.width;
    let x = |k: usize| mesh.valid[k].then(|| mesh.vertices[k]);
    let (c, l, r, d, u) = (x(v)?, x(v - 1)?, x(v + 1)?, x(v - w)?, x(v + w)?);
    let (dl, dr, ul, ur) = (x(v - w - 1)?, x(v - w + 1)?, x(v + w - 1)?, x(v + w + 1)?);
    let xu = sub3(r, l);
    let xv = sub3(u, d);
    let nrm = cross3(xu, xv);
    let nn = norm3(nrm);
    let nrm = nrm.map(|a| a / nn);
    let second = |a: [f64; 3], b: [f64; 3]| {
        dot3(
            [
                a[0] + b[0] - 2.0 * c[0],
                a[1] + b[1] - 2.0 * c[1],
                a[2] + b[2] - 2.0 * c[2],
            ],
            nrm,
        )
    };
    let l2 = second(l, r);
    let n2 = second(d, u);
    let m2 = dot3(sub3(sub3(ur, ul), sub3(dr, dl)), nrm) / 4.0;
    let (e, g, fm) = (dot3(xu, xu) / 4.0, dot3(xv, xv) / 4.0, dot3(xu, xv) / 4.0);
    // Shape operator eigenvalues from I⁻¹ II.
    let det_i = e * g - fm * fm;
    let tr = (l2 * g - 2.0 * m2 * fm + n2 * e) / det_i;
    let det = (l2 * n2 - m2 * m2) / det_i;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (k1, k2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    Some((k1 - k2).abs() / (k1.abs() + k2.abs()))
}

/// Lengths of mesh edges whose endpoints are valid, in a fixed order.
pub fn edge_lengths(mesh: &SurfaceMesh) -> Vec<Option<f64>> {
    let mut edges: Vec<(usize, usize)> = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
        .into_iter()
        .map(|(a, b)| {
            (mesh.valid[a] && mesh.valid[b])
                .then(|| norm3(sub3(mesh.vertices[a], mesh.vertices[b])))
        })
        .collect()
}

pub fn write_obj(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut map = vec![0usize; mesh.vertices.len()];
    let mut s = String::new();
    let _ = writeln!(s, "# lambda0 {} {}", mesh.lambda0.re, mesh.lambda0.im);
    let mut next = 1;
    for (k, v) in mesh.vertices.iter().enumerate() {
        if mesh.valid[k] {
            let _ = writeln!(s, "v {:.12} {:.12} {:.12}", v[0], v[1], v[2]);
            map[k] = next;
            next += 1;
        }
    }
    for t in &mesh.triangles {
        if t.iter().all(|&v| mesh.valid[v]) {
            let _ = writeln!(s, "f {} {} {}", map[t[0]], map[t[1]], map[t[2]]);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_cmc_csv(report: &CmcReport, path: &Path) -> Result<()> {
    let mut s = String::from("vertex,z_re,z_im,mean_curvature,deviation,conformality\n");
    for v in &report.vertices {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            v.vertex, v.z.re, v.z.im, v.mean_curvature, v.deviation, v.conformality
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}
