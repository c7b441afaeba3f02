//! Immersion into S^2 x R from the frame at lambda = 1, geometric diagnostics,
//! Sym-point normalization, embeddedness probes and mesh export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, RealGrid};
use crate::lax::{alpha_from_zeta, integrate_frame_grid, integrate_frame_with, omega_of, FrameField, FrameOptions, LambdaGrid, ZGrid, ZLayout};
use crate::poly::{a_from_potential, inverse_sl2, mat2, offdiagonal_potential, sigma3, Mat2, Potential, C64};
use crate::sinh_gordon::OmegaField;
use crate::spectral::SpectralDataAB;

pub type Vec3 = [f64; 3];

/// M = (z, x - iy; x + iy, -z) -> (x, y, z).
pub fn hermitian_to_r3(m: &Mat2) -> Vec3 {
    [m[(1, 0)].re, m[(1, 0)].im, m[(0, 0)].re]
}

pub fn r3_to_hermitian(v: Vec3) -> Mat2 {
    mat2(C64::new(v[2], 0.0), C64::new(v[0], -v[1]), C64::new(v[0], v[1]), C64::new(-v[2], 0.0))
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Samples of X = (G, h) on a period grid, with tangent vectors along the unit
/// grid directions s = e1/|e1| and t = e2/|e2|.
#[derive(Clone, Debug)]
pub struct ImmersionSample {
    pub grid: ZGrid,
    pub theta: f64,
    /// indexed by grid.index(i, j), i in 0..=n1
    pub g: Vec<Vec3>,
    pub h: Vec<f64>,
    pub g_s: Vec<Vec3>,
    pub g_t: Vec<Vec3>,
    pub h_s: f64,
    pub h_t: f64,
    /// max ||G| - 1|
    pub unit_residual: f64,
    /// max of |cos angle(X_s, X_t)| and ||X_s| - |X_t|| / |X_s|
    pub conformality: f64,
    /// max |X(z + n1 e1) - X(z)| over the rows
    pub closure: f64,
}

impl ImmersionSample {
    pub fn nx(&self) -> usize {
        self.grid.n1
    }

    pub fn ny(&self) -> usize {
        self.grid.n2
    }

    pub fn hs(&self) -> f64 {
        self.grid.e1.norm()
    }

    pub fn ht(&self) -> f64 {
        self.grid.e2.norm()
    }

    pub fn period(&self) -> C64 {
        self.grid.e1 * self.grid.n1 as f64
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        self.grid.index(i, j)
    }

    /// Scalar field on the periodic part of the grid (column n1 dropped).
    pub fn field(&self, f: impl Fn(usize) -> f64) -> RealGrid {
        Grid::from_fn(self.nx(), self.ny(), self.hs(), self.ht(), false, |i, j| f(self.idx(i, j)))
    }

    pub fn tangent_s(&self, k: usize) -> (Vec3, f64) {
        (self.g_s[k], self.h_s)
    }

    pub fn tangent_t(&self, k: usize) -> (Vec3, f64) {
        (self.g_t[k], self.h_t)
    }

    /// Third coordinate of the unit normal X_t x X_s / |X_t x X_s| in T_G S^2 + R
    /// (the orientation for which n_3 = tanh omega).
    pub fn n3(&self, k: usize) -> f64 {
        let (vs, v3) = self.tangent_s(k);
        let (ws, w3) = self.tangent_t(k);
        let vv = dot(vs, vs) + v3 * v3;
        let ww = dot(ws, ws) + w3 * w3;
        let vw = dot(vs, ws) + v3 * w3;
        dot(self.g[k], cross(ws, vs)) / (vv * ww - vw * vw).sqrt()
    }

    pub fn speed_s(&self, k: usize) -> f64 {
        (dot(self.g_s[k], self.g_s[k]) + self.h_s * self.h_s).sqrt()
    }

    pub fn speed_t(&self, k: usize) -> f64 {
        (dot(self.g_t[k], self.g_t[k]) + self.h_t * self.h_t).sqrt()
    }
}

/// h(z) = Re(-i e^{i Theta/2} z).
pub fn height(theta: f64, z: C64) -> f64 {
    (C64::new(0.0, -1.0) * C64::from_polar(1.0, theta / 2.0) * z).re
}

fn conj_r3(f: &Mat2, finv: &Mat2, m: &Mat2) -> Vec3 {
    hermitian_to_r3(&(f * m * finv))
}

/// X = (F_1 sigma_3 F_1^{-1}, Re(-i e^{i Theta/2} z)) on a grid frame field.
/// Tangents come from F^{-1} dF = alpha, so G_s = F [alpha(s), sigma_3] F^{-1}.
pub fn sym_bobenko(ff: &FrameField, theta: f64) -> Result<ImmersionSample> {
    let l1 = ff.lambda_index(C64::new(1.0, 0.0)).ok_or_else(|| Error::InvalidInput("lambda = 1 is not in the frame's lambda-grid".into()))?;
    let grid = match ff.layout {
        ZLayout::Grid(g) => g,
        ZLayout::Path(_) => return Err(Error::InvalidInput("sym_bobenko needs a grid frame field".into())),
    };
    let ds = grid.e1 / grid.e1.norm();
    let dt = grid.e2 / grid.e2.norm();
    let s3 = sigma3();
    let one = C64::new(1.0, 0.0);
    let per: Vec<(Vec3, Vec3, Vec3)> = (0..ff.zs.len())
        .into_par_iter()
        .map(|k| {
            let f = ff.at(k, l1);
            let finv = inverse_sl2(&f);
            let al = alpha_from_zeta(&ff.killing[k])?;
            let a_s = al.along(one, ds);
            let a_t = al.along(one, dt);
            let g = conj_r3(&f, &finv, &s3);
            let gs = conj_r3(&f, &finv, &(a_s * s3 - s3 * a_s));
            let gt = conj_r3(&f, &finv, &(a_t * s3 - s3 * a_t));
            Ok((g, gs, gt))
        })
        .collect::<Result<_>>()?;
    let h: Vec<f64> = ff.zs.iter().map(|&z| height(theta, z)).collect();
    let mut s = ImmersionSample {
        grid,
        theta,
        g: per.iter().map(|p| p.0).collect(),
        h,
        g_s: per.iter().map(|p| p.1).collect(),
        g_t: per.iter().map(|p| p.2).collect(),
        h_s: height(theta, ds),
        h_t: height(theta, dt),
        unit_residual: 0.0,
        conformality: 0.0,
        closure: 0.0,
    };
    s.unit_residual = s.g.iter().map(|&v| (norm(v) - 1.0).abs()).fold(0.0, f64::max);
    s.conformality = (0..s.g.len())
        .map(|k| {
            let (vs, v3) = s.tangent_s(k);
            let (ws, w3) = s.tangent_t(k);
            let (a, b) = (s.speed_s(k), s.speed_t(k));
            ((dot(vs, ws) + v3 * w3) / (a * b)).abs().max((a - b).abs() / a)
        })
        .fold(0.0, f64::max);
    s.closure = (0..grid.n2)
        .map(|j| {
            let (p, q) = (s.idx(0, j), s.idx(grid.n1, j));
            norm(sub(s.g[q], s.g[p])).max((s.h[q] - s.h[p]).abs())
        })
        .fold(0.0, f64::max);
    Ok(s)
}

/// omega = ln(4 |beta_-1|) from the Killing field on the periodic part of a grid frame field.
pub fn omega_field(ff: &FrameField) -> Result<OmegaField> {
    let grid = ff.grid().ok_or_else(|| Error::InvalidInput("omega_field needs a grid frame field".into()))?;
    Ok(Grid::from_fn(grid.n1, grid.n2, grid.e1.norm(), grid.e2.norm(), false, |i, j| omega_of(&ff.killing[grid.index(i, j)])))
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

fn summarize(name: &str, g: &RealGrid, rows: std::ops::Range<usize>) -> FieldSummary {
    let mut vals = Vec::new();
    for j in rows {
        for i in 0..g.nx {
            vals.push(g.at(i, j));
        }
    }
    let n = vals.len().max(1) as f64;
    FieldSummary {
        name: name.into(),
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: vals.iter().sum::<f64>() / n,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometryReport {
    #[serde(skip)]
    pub omega: RealGrid,
    /// tanh^2 omega - |grad omega|^2 / cosh^4 omega
    #[serde(skip)]
    pub curvature: RealGrid,
    /// tanh omega
    #[serde(skip)]
    pub n3: RealGrid,
    /// -omega_y / cosh omega
    #[serde(skip)]
    pub kg: RealGrid,
    /// cosh^2 omega d_x k_g
    #[serde(skip)]
    pub shiffman: RealGrid,
    pub summaries: Vec<FieldSummary>,
    /// max over the interior of |u|
    pub shiffman_max: f64,
    /// largest per-row standard deviation of k_g
    pub kg_row_spread: f64,
    /// integral of eta_3 ds along the middle horizontal curve
    pub flux: Option<f64>,
    /// max |n_3(immersion) - tanh omega|
    pub n3_residual: Option<f64>,
    /// max ||X_s|^2 - cosh^2 omega|
    pub metric_residual: Option<f64>,
}

impl GeometryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Diagnostics computed from omega alone (x periodic, y the vertical direction).
pub fn intrinsic_geometry(omega: &OmegaField) -> GeometryReport {
    let wx = omega.diff_x();
    let wy = omega.diff_y();
    let curvature = Grid::from_fn(omega.nx, omega.ny, omega.hx, omega.hy, omega.periodic_y, |i, j| {
        let w = omega.at(i, j);
        w.tanh().powi(2) - (wx.at(i, j).powi(2) + wy.at(i, j).powi(2)) / w.cosh().powi(4)
    });
    let n3 = omega.map(f64::tanh);
    let kg = wy.zip_map(omega, |d, w| -d / w.cosh());
    let kgx = kg.diff_x();
    let shiffman = kgx.zip_map(omega, |d, w| w.cosh().powi(2) * d);
    let rows = omega.interior_rows();
    let kg_row_spread = rows
        .clone()
        .map(|j| {
            let n = kg.nx as f64;
            let m = (0..kg.nx).map(|i| kg.at(i, j)).sum::<f64>() / n;
            ((0..kg.nx).map(|i| (kg.at(i, j) - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .fold(0.0, f64::max);
    let summaries = vec![
        summarize("omega", omega, rows.clone()),
        summarize("K", &curvature, rows.clone()),
        summarize("n3", &n3, rows.clone()),
        summarize("kg", &kg, rows.clone()),
        summarize("shiffman", &shiffman, rows.clone()),
    ];
    GeometryReport {
        shiffman_max: shiffman.max_interior(1),
        omega: omega.clone(),
        curvature,
        n3,
        kg,
        shiffman,
        summaries,
        kg_row_spread,
        flux: None,
        n3_residual: None,
        metric_residual: None,
    }
}

/// Intrinsic diagnostics plus the comparisons that need the immersion.
pub fn geometry(omega: &OmegaField, imm: &ImmersionSample) -> Result<GeometryReport> {
    if (omega.nx, omega.ny) != (imm.nx(), imm.ny()) {
        return Err(Error::InvalidInput(format!("omega grid {}x{} does not match the immersion grid {}x{}", omega.nx, omega.ny, imm.nx(), imm.ny())));
    }
    let mut rep = intrinsic_geometry(omega);
    let mut n3r: f64 = 0.0;
    let mut mr: f64 = 0.0;
    for j in 0..imm.ny() {
        for i in 0..imm.nx() {
            let k = imm.idx(i, j);
            let w = omega.at(i, j);
            n3r = n3r.max((imm.n3(k) - w.tanh()).abs());
            mr = mr.max((imm.speed_s(k).powi(2) - w.cosh().powi(2)).abs());
        }
    }
    // co-normal eta = X_t / |X_t| = sech(omega)(G_t, h_t)
    let j = imm.ny() / 2;
    let flux: f64 = (0..imm.nx())
        .map(|i| {
            let k = imm.idx(i, j);
            imm.h_t / imm.speed_t(k) * imm.speed_s(k) * imm.hs()
        })
        .sum();
    rep.flux = Some(flux.abs());
    rep.n3_residual = Some(n3r);
    rep.metric_residual = Some(mr);
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Embedded,
    SelfIntersecting,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub row: usize,
    pub height: f64,
    /// minimal chordal distance between non-adjacent arcs
    pub min_distance: f64,
    pub max_edge: f64,
    pub crossing: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingReport {
    pub levels: Vec<LevelReport>,
    pub verdict: Verdict,
    pub note: String,
}

impl EmbeddingReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn seg_seg_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let (a, e, f) = (dot(d1, d1), dot(d2, d2), dot(d2, r));
    let c = dot(d1, r);
    let b = dot(d1, d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-300 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = if e > 0.0 { (b * s + f) / e } else { 0.0 };
    if t < 0.0 {
        t = 0.0;
        s = if a > 0.0 { (-c / a).clamp(0.0, 1.0) } else { 0.0 };
    } else if t > 1.0 {
        t = 1.0;
        s = if a > 0.0 { ((b - c) / a).clamp(0.0, 1.0) } else { 0.0 };
    }
    let pa = [p0[0] + d1[0] * s, p0[1] + d1[1] * s, p0[2] + d1[2] * s];
    let pb = [q0[0] + d2[0] * t, q0[1] + d2[1] * t, q0[2] + d2[2] * t];
    norm(sub(pa, pb))
}

const CROSS_EPS: f64 = 1e-9;

/// Great-circle arcs AB and CD (shorter than a half circle) cross.
fn arcs_cross(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> bool {
    let n1 = cross(a, b);
    let n2 = cross(c, d);
    let (sc, sd) = (dot(n1, c), dot(n1, d));
    let (sa, sb) = (dot(n2, a), dot(n2, b));
    // arcs on a common great circle give sign noise, not crossings
    let (e1, e2) = (CROSS_EPS * norm(n1), CROSS_EPS * norm(n2));
    let strict = sc.abs() > e1 && sd.abs() > e1 && sa.abs() > e2 && sb.abs() > e2;
    strict && sc * sd < 0.0 && sa * sb < 0.0 && dot(a, c) + dot(b, d) > 0.0
}

/// Pairs closer than this many edge lengths along the curve are neighbours and skipped
/// for the distance margin.
const NEIGHBOUR_EDGES: f64 = 6.0;

fn level(curve: &[Vec3]) -> (f64, f64, bool) {
    let n = curve.len();
    let edges: Vec<f64> = (0..n).map(|k| norm(sub(curve[(k + 1) % n], curve[k]))).collect();
    let max_edge = edges.iter().copied().fold(0.0, f64::max);
    let mut arc = vec![0.0; n + 1];
    for k in 0..n {
        arc[k + 1] = arc[k] + edges[k];
    }
    let total = arc[n];
    let mut min_d = f64::INFINITY;
    let mut crossing = false;
    for k in 0..n {
        let (p0, p1) = (curve[k], curve[(k + 1) % n]);
        for l in k + 2..n {
            if k == 0 && l == n - 1 {
                continue;
            }
            let (q0, q1) = (curve[l], curve[(l + 1) % n]);
            crossing |= arcs_cross(p0, p1, q0, q1);
            let along = (arc[l] - arc[k + 1]).min(total - (arc[l + 1] - arc[k]));
            if along >= NEIGHBOUR_EDGES * max_edge {
                min_d = min_d.min(seg_seg_distance(p0, p1, q0, q1));
            }
        }
    }
    (min_d, max_edge, crossing)
}

/// Arc-pair sweep over n_levels horizontal curves (rows of the grid).
pub fn embeddedness(imm: &ImmersionSample, n_levels: usize) -> Result<EmbeddingReport> {
    if imm.h_s.abs() > 1e-12 {
        return Err(Error::InvalidInput("grid rows are not horizontal (h varies along e1)".into()));
    }
    if imm.closure > 1e-5 {
        return Err(Error::InvalidInput(format!("immersion is not periodic along the rows (closure {:.2e})", imm.closure)));
    }
    let n_levels = n_levels.clamp(1, imm.ny());
    let rows: Vec<usize> = (0..n_levels).map(|q| q * (imm.ny() - 1) / (n_levels.max(2) - 1).max(1)).collect();
    let levels: Vec<LevelReport> = rows
        .par_iter()
        .map(|&j| {
            let curve: Vec<Vec3> = (0..imm.nx()).map(|i| imm.g[imm.idx(i, j)]).collect();
            let (min_distance, max_edge, crossing) = level(&curve);
            let verdict = if crossing {
                Verdict::SelfIntersecting
            } else if min_distance > 5.0 * max_edge {
                Verdict::Embedded
            } else {
                Verdict::Inconclusive
            };
            LevelReport { row: j, height: imm.h[imm.idx(0, j)], min_distance, max_edge, crossing, verdict }
        })
        .collect();
    let verdict = if levels.iter().any(|l| l.verdict == Verdict::SelfIntersecting) {
        Verdict::SelfIntersecting
    } else if levels.iter().all(|l| l.verdict == Verdict::Embedded) {
        Verdict::Embedded
    } else {
        Verdict::Inconclusive
    };
    Ok(EmbeddingReport {
        levels,
        verdict,
        note: "levels are tested one at a time; contact between different levels is not probed".into(),
    })
}

/// Coefficients of e^{i(1-g)theta/2} xi_{e^{i theta} lambda}.
pub fn rotate_potential(xi: &Potential, theta: f64) -> Result<Potential> {
    let g = xi.g;
    let pre = C64::from_polar(1.0, (1.0 - g as f64) * theta / 2.0);
    let coeffs = (-1..=g as i32).map(|d| xi.coeff(d) * (pre * C64::from_polar(1.0, d as f64 * theta))).collect();
    Potential::new(g, coeffs)
}

/// arg Q_1 with Q_lambda = -4 beta_-1 gamma_0 lambda^{-1} (dz)^2, evaluated at lambda.
pub fn hopf_phase(xi: &Potential, lambda: C64) -> f64 {
    (C64::new(-4.0, 0.0) * xi.beta_m1() * xi.coeff(0)[(1, 0)] / lambda).arg()
}

/// Theta = arg(-a(0)) of a potential, the phase that makes h = Re(-i e^{i Theta/2} z) conformal.
pub fn potential_theta(xi: &Potential) -> Result<f64> {
    Ok((-a_from_potential(xi)?.coeff(0)).arg())
}

/// Frame of the rotated potential on the same lambda-grid and z-layout. It equals
/// F_{e^{i theta} lambda}(e^{i(1-g)theta/2} z); that identity is what the tests check.
pub fn sym_point_normalize(ff: &FrameField, theta: f64, g: usize, opts: &FrameOptions) -> Result<FrameField> {
    if g != ff.potential.g {
        return Err(Error::InvalidInput(format!("genus {g} does not match the potential's genus {}", ff.potential.g)));
    }
    let xi = rotate_potential(&ff.potential, theta)?;
    match &ff.layout {
        ZLayout::Path(p) => integrate_frame_with(&xi, &ff.lambdas, p, opts),
        ZLayout::Grid(zg) => integrate_frame_grid(&xi, &ff.lambdas, zg, opts),
    }
}

/// Representative potential for spectral data: the flat seed for g = 0, otherwise the
/// off-diagonal potential on the roots of a inside the unit disc.
pub fn potential_for(data: &SpectralDataAB) -> Result<Potential> {
    let g = data.genus();
    if g == 0 {
        let flat = Potential::flat();
        let a = a_from_potential(&flat)?;
        let diff = a.sub(&data.a).max_abs_coeff();
        if diff > 1e-12 {
            return Err(Error::Unsupported(format!("genus-0 data with a != -1/16 (mismatch {diff:.2e})")));
        }
        return Ok(flat);
    }
    let inner: Vec<C64> = data.curve()?.branch_points.into_iter().filter(|r| r.norm() < 1.0 - 1e-9).collect();
    if inner.len() != g {
        return Err(Error::Unsupported(format!("a has {} roots inside the unit disc, expected {g}", inner.len())));
    }
    let xi = offdiagonal_potential(&inner)?;
    let diff = a_from_potential(&xi)?.sub(&data.a).max_abs_coeff();
    if diff > 1e-8 * data.a.max_abs_coeff() {
        return Err(Error::Unsupported(format!("a is not realized by an off-diagonal potential (mismatch {diff:.2e})")));
    }
    Ok(xi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceOptions {
    /// samples along the period
    pub nx: usize,
    /// samples across, covering [y0, y0 + y_span]
    pub ny: usize,
    pub y0: f64,
    pub y_span: f64,
    pub frame: FrameOptions,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions { nx: 64, ny: 32, y0: -1.0, y_span: 2.0, frame: FrameOptions::default() }
    }
}

pub struct Surface {
    pub frame: FrameField,
    pub omega: OmegaField,
    pub immersion: ImmersionSample,
    pub geometry: GeometryReport,
}

/// Frame at lambda = 1 on a period grid, immersion and geometry.
pub fn build_surface(xi: &Potential, tau: C64, theta: f64, opts: &SurfaceOptions) -> Result<Surface> {
    if opts.nx < 4 || opts.ny < 4 {
        return Err(Error::InvalidInput(format!("surface grid {}x{} is too small (need at least 4x4)", opts.nx, opts.ny)));
    }
    let zg = period_grid(tau, opts.nx, opts.ny, opts.y0, opts.y_span);
    let frame = integrate_frame_grid(xi, &LambdaGrid::new(Vec::new())?, &zg, &opts.frame)?;
    surface_from_frame(frame, theta)
}

pub fn surface_from_frame(frame: FrameField, theta: f64) -> Result<Surface> {
    let immersion = sym_bobenko(&frame, theta)?;
    let omega = omega_field(&frame)?;
    let geometry = geometry(&omega, &immersion)?;
    Ok(Surface { frame, omega, immersion, geometry })
}

/// Stereographic projection of G from (0, 0, -1), third coordinate h.
pub fn stereographic(g: Vec3, h: f64) -> Vec3 {
    let d = 1.0 + g[2];
    [g[0] / d, g[1] / d, h]
}

pub const POLE_RADIUS: f64 = 1e-3;

pub fn near_pole(g: Vec3) -> bool {
    norm(sub(g, [0.0, 0.0, -1.0])) < POLE_RADIUS
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExportSummary {
    pub format: String,
    pub rows: usize,
    /// periodic-grid indices (i, j) within POLE_RADIUS of the projection pole
    pub pole_flags: Vec<(usize, usize)>,
}

pub trait MeshExporter: Send + Sync {
    fn name(&self) -> &str;
    fn write(&self, imm: &ImmersionSample, out: &mut dyn Write) -> Result<ExportSummary>;
}

pub struct CsvExporter;

impl MeshExporter for CsvExporter {
    fn name(&self) -> &str {
        "csv"
    }

    fn write(&self, imm: &ImmersionSample, out: &mut dyn Write) -> Result<ExportSummary> {
        writeln!(out, "x,y,G1,G2,G3,h")?;
        let mut rows = 0;
        for j in 0..imm.ny() {
            for i in 0..imm.nx() {
                let k = imm.idx(i, j);
                let g = imm.g[k];
                let (x, y) = (i as f64 * imm.hs(), j as f64 * imm.ht());
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x, y, g[0], g[1], g[2], imm.h[k])?;
                rows += 1;
            }
        }
        Ok(ExportSummary { format: "csv".into(), rows, pole_flags: Vec::new() })
    }
}

pub struct ObjExporter;

impl MeshExporter for ObjExporter {
    fn name(&self) -> &str {
        "obj"
    }

    fn write(&self, imm: &ImmersionSample, out: &mut dyn Write) -> Result<ExportSummary> {
        let tau = imm.period();
        writeln!(out, "# chart: stereographic projection of G from (0,0,-1); third coordinate h")?;
        writeln!(out, "# Theta {:.16e} tau {:.16e} {:.16e}", imm.theta, tau.re, tau.im)?;
        let (nx, ny) = (imm.nx(), imm.ny());
        let mut poles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = imm.idx(i, j);
                if near_pole(imm.g[k]) {
                    poles.push((i, j));
                }
            }
        }
        for &(i, j) in &poles {
            writeln!(out, "# pole vertex {} (i = {i}, j = {j}); adjacent faces omitted", j * nx + i + 1)?;
        }
        for j in 0..ny {
            for i in 0..nx {
                let k = imm.idx(i, j);
                let p = stereographic(imm.g[k], imm.h[k]);
                writeln!(out, "v {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
            }
        }
        let vid = |i: usize, j: usize| j * nx + (i % nx) + 1;
        let is_pole = |i: usize, j: usize| poles.contains(&(i % nx, j));
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                if [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)].iter().any(|&(a, b)| is_pole(a, b)) {
                    continue;
                }
                writeln!(out, "f {} {} {} {}", vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))?;
            }
        }
        Ok(ExportSummary { format: "obj".into(), rows: nx * ny, pole_flags: poles })
    }
}

/// Exporters by name.
pub struct ExporterRegistry {
    entries: BTreeMap<String, Box<dyn MeshExporter>>,
}

impl ExporterRegistry {
    pub fn empty() -> Self {
        ExporterRegistry { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, e: Box<dyn MeshExporter>) {
        self.entries.insert(e.name().to_string(), e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn MeshExporter> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::InvalidInput(format!("unknown mesh format '{name}' (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(|s| s.as_str()).collect()
    }
}

impl Default for ExporterRegistry {
    fn default() -> Self {
        let mut r = ExporterRegistry::empty();
        r.register(Box::new(CsvExporter));
        r.register(Box::new(ObjExporter));
        r
    }
}

pub fn export_mesh(imm: &ImmersionSample, format: &str, path: &Path) -> Result<ExportSummary> {
    let reg = ExporterRegistry::default();
    let exp = reg.get(format)?;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let s = exp.write(imm, &mut w)?;
    w.flush()?;
    Ok(s)
}

/// Grid with rows along tau, spanning [y0, y0 + (ny-1) hy] orthogonally, used for surfaces.
pub fn period_grid(tau: C64, nx: usize, ny: usize, y0: f64, y_span: f64) -> ZGrid {
    let hy = if ny > 1 { y_span / (ny - 1) as f64 } else { 0.0 };
    ZGrid::along_period(tau, nx, y0, hy, ny)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{abresch_catalog, CatalogParams};
    use std::f64::consts::PI;

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    fn flat_immersion(nx: usize, ny: usize) -> (FrameField, ImmersionSample) {
        let zg = period_grid(C64::new(2.0 * PI, 0.0), nx, ny, -1.0, 2.0);
        let ff = integrate_frame_grid(&Potential::flat(), &LambdaGrid::new(vec![one()]).unwrap(), &zg, &FrameOptions::default()).unwrap();
        let imm = sym_bobenko(&ff, 0.0).unwrap();
        (ff, imm)
    }

    #[test]
    fn chart_round_trip() {
        let v = [0.3, -0.2, 0.9];
        assert_eq!(hermitian_to_r3(&r3_to_hermitian(v)), v);
        assert_eq!(hermitian_to_r3(&sigma3()), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn flat_cylinder() {
        let (ff, imm) = flat_immersion(64, 16);
        assert!(imm.unit_residual <= 1e-10);
        assert!(imm.conformality <= 1e-5);
        assert!(imm.closure <= 1e-6, "{}", imm.closure);
        let z0 = ff.z_index(C64::default());
        assert!(z0.is_none() || norm(sub(imm.g[z0.unwrap()], [0.0, 0.0, 1.0])) < 1e-14);
        // every G lies on the great circle through G(row 0) at angle x
        let j = 8;
        let p0 = imm.g[imm.idx(0, j)];
        let p1 = imm.g[imm.idx(16, j)];
        let n = cross(p0, p1);
        for k in 0..imm.g.len() {
            assert!(dot(imm.g[k], n).abs() < 1e-10);
        }
        for i in 0..imm.nx() {
            let ang = dot(p0, imm.g[imm.idx(i, j)]).clamp(-1.0, 1.0).acos();
            let x = i as f64 * imm.hs();
            assert!((ang - x.min(2.0 * PI - x)).abs() < 1e-7, "{i}");
        }
        for (k, &z) in ff.zs.iter().enumerate() {
            assert_eq!(imm.h[k], z.im);
        }
        let rep = geometry(&omega_field(&ff).unwrap(), &imm).unwrap();
        assert!(rep.curvature.max_abs() <= 1e-8);
        assert!(rep.kg.max_abs() <= 1e-8);
        assert!((rep.flux.unwrap() - 2.0 * PI).abs() < 1e-8);
        assert_eq!(embeddedness(&imm, 4).unwrap().verdict, Verdict::Embedded);
    }

    #[test]
    fn missing_sym_point_rejected() {
        let zg = period_grid(C64::new(2.0 * PI, 0.0), 8, 4, 0.0, 1.0);
        let lambdas = LambdaGrid { points: vec![C64::new(0.5, 0.0)], unit_mask: vec![false] };
        let ff = integrate_frame_grid(&Potential::flat(), &lambdas, &zg, &FrameOptions::default()).unwrap();
        assert!(matches!(sym_bobenko(&ff, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn genus1_catalog_surface() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.4 }).unwrap().data;
        let xi = offdiagonal_potential(&[C64::new(0.4, 0.0)]).unwrap();
        assert!(a_from_potential(&xi).unwrap().sub(&d.a).max_abs_coeff() < 1e-15);
        let zg = period_grid(d.tau, 48, 12, -1.0, 2.0);
        let ff = integrate_frame_grid(&xi, &LambdaGrid::new(vec![one()]).unwrap(), &zg, &FrameOptions::default()).unwrap();
        let imm = sym_bobenko(&ff, d.theta).unwrap();
        assert!(imm.closure <= 1e-6, "{}", imm.closure);
        let rep = geometry(&omega_field(&ff).unwrap(), &imm).unwrap();
        assert!(rep.n3_residual.unwrap() <= 1e-8);
        assert!(rep.metric_residual.unwrap() <= 1e-8);
        assert!((rep.flux.unwrap() - d.tau.norm()).abs() <= 1e-4);
        assert_eq!(embeddedness(&imm, 6).unwrap().verdict, Verdict::Embedded);
    }

    #[test]
    fn sym_point_identity_at_zero() {
        let xi = offdiagonal_potential(&[C64::new(0.3, 0.1)]).unwrap();
        let ff = integrate_frame_with(&xi, &LambdaGrid::unit_circle(4).with(&[one()]).unwrap(), &[C64::new(0.5, 0.2), C64::new(1.0, -0.3)], &FrameOptions::default()).unwrap();
        let nf = sym_point_normalize(&ff, 0.0, 1, &FrameOptions::default()).unwrap();
        assert_eq!(nf.frames, ff.frames);
        assert!(sym_point_normalize(&ff, 0.0, 2, &FrameOptions::default()).is_err());
    }

    #[test]
    fn sym_point_frames_and_hopf_phase() {
        for (roots, theta) in [(vec![C64::new(0.3, 0.1)], 0.7), (vec![C64::new(0.4, 0.0), C64::new(-0.2, 0.3)], -1.1)] {
            let g = roots.len();
            let xi = offdiagonal_potential(&roots).unwrap();
            let lambdas = LambdaGrid::new(vec![one(), C64::new(0.0, 1.0), C64::from_polar(1.0, 2.0), C64::new(0.5, 0.2)]).unwrap();
            let zg = ZGrid { origin: C64::new(0.1, -0.2), e1: C64::new(0.2, 0.05), e2: C64::new(-0.05, 0.2), n1: 4, n2: 3 };
            let opts = FrameOptions::default();
            let nf = sym_point_normalize(&integrate_frame_grid(&xi, &lambdas, &zg, &opts).unwrap(), theta, g, &opts).unwrap();
            // F_{e^{i theta} lambda}(e^{i(1-g)theta/2} z) on the rotated grids
            let rl = C64::from_polar(1.0, theta);
            let rz = C64::from_polar(1.0, (1.0 - g as f64) * theta / 2.0);
            let rlam = LambdaGrid::new(lambdas.points.iter().map(|&l| rl * l).collect()).unwrap();
            let rzg = ZGrid { origin: zg.origin * rz, e1: zg.e1 * rz, e2: zg.e2 * rz, ..zg };
            let direct = integrate_frame_grid(&xi, &rlam, &rzg, &opts).unwrap();
            let mut worst: f64 = 0.0;
            for (l, &lam) in lambdas.points.iter().enumerate() {
                let m = direct.lambda_index(rl * lam).unwrap();
                for k in 0..nf.zs.len() {
                    worst = worst.max(crate::poly::mat_max_abs(&(nf.at(k, l) - direct.at(k, m))));
                }
            }
            assert!(worst <= 1e-8, "{worst}");
            let a = a_from_potential(&xi).unwrap();
            let at = a_from_potential(&nf.potential).unwrap();
            let e = C64::from_polar(1.0, -(g as f64) * theta);
            for k in 0..=2 * g {
                let want = e * a.coeff(k) * rl.powu(k as u32);
                assert!((at.coeff(k) - want).norm() < 1e-14);
            }
            let dphi = hopf_phase(&nf.potential, one()) - hopf_phase(&xi, rl);
            let wrapped = (dphi - (1.0 - g as f64) * theta).rem_euclid(2.0 * PI);
            assert!(wrapped.min(2.0 * PI - wrapped) < 1e-14, "{dphi}");
        }
    }

    #[test]
    fn flat_sym_point_recovers_geodesic_cylinder() {
        // the flat seed rotated by -theta has its Sym point at e^{i theta}
        let theta = 0.9;
        let zg = period_grid(C64::new(2.0 * PI, 0.0), 16, 4, -0.5, 1.0);
        let opts = FrameOptions::default();
        let lambdas = LambdaGrid::new(vec![C64::from_polar(1.0, theta)]).unwrap();
        let moved = rotate_potential(&Potential::flat(), -theta).unwrap();
        let ff = integrate_frame_grid(&moved, &lambdas, &zg, &opts).unwrap();
        let nf = sym_point_normalize(&ff, theta, 0, &opts).unwrap();
        assert_eq!(potential_theta(&nf.potential).unwrap(), 0.0);
        let imm = sym_bobenko(&nf, potential_theta(&nf.potential).unwrap()).unwrap();
        let (_, flat) = {
            let f = integrate_frame_grid(&Potential::flat(), &lambdas, &zg, &opts).unwrap();
            let i = sym_bobenko(&f, 0.0).unwrap();
            (f, i)
        };
        for k in 0..imm.g.len() {
            assert!(norm(sub(imm.g[k], flat.g[k])) < 1e-10);
        }
        // image is a geodesic cylinder: G on one great circle, conformal, unit vertical speed
        let n = cross(imm.g[imm.idx(0, 0)], imm.g[imm.idx(3, 0)]);
        for k in 0..imm.g.len() {
            assert!(dot(imm.g[k], n).abs() < 1e-10);
        }
        assert!(imm.conformality < 1e-6, "{}", imm.conformality);
    }

    #[test]
    fn csv_and_obj_export() {
        let (_, imm) = flat_immersion(64, 64);
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        let s = export_mesh(&imm, "csv", &csv).unwrap();
        assert_eq!(s.rows, 4096);
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,G1,G2,G3,h"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 4096);
        assert!(rows.iter().all(|r| (r[2] * r[2] + r[3] * r[3] + r[4] * r[4] - 1.0).abs() < 1e-12));

        let obj = dir.path().join("m.obj");
        let s = export_mesh(&imm, "obj", &obj).unwrap();
        // G(pi, y) is the projection pole for the flat cylinder
        assert_eq!(s.pole_flags.len(), 64);
        assert!(s.pole_flags.iter().all(|&(i, _)| i == 32));
        let text = std::fs::read_to_string(&obj).unwrap();
        assert!(text.starts_with("# chart: stereographic"));
        let verts: Vec<Vec3> = text
            .lines()
            .filter_map(|l| l.strip_prefix("v "))
            .map(|l| {
                let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect();
        assert_eq!(verts.len(), 4096);
        for j in 0..64 {
            for i in 0..64 {
                let k = imm.idx(i, j);
                if near_pole(imm.g[k]) {
                    continue;
                }
                let p = stereographic(imm.g[k], imm.h[k]);
                let v = verts[j * 64 + i];
                assert!(norm(sub(p, v)) <= 1e-12 * (1.0 + norm(p)));
            }
        }
        let faces = text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(faces, 63 * 64 - 2 * 63);
        assert!(matches!(export_mesh(&imm, "ply", &obj), Err(Error::InvalidInput(_))));
        assert!(matches!(export_mesh(&imm, "csv", &dir.path().join("no/such/dir.csv")), Err(Error::Io(_))));
    }

    #[test]
    fn exporter_names() {
        assert_eq!(ExporterRegistry::default().names(), vec!["csv", "obj"]);
    }
}
