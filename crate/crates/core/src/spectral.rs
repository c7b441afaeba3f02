//! Spectral curves nu^2 = a(lambda)/lambda, the differential dh = b dlambda/(nu lambda^2),
//! monodromy eigenvalues and the closing conditions for spectral data (a, b).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lax::Monodromy;
use crate::poly::{c, mat_max_abs, roots_coincide, ComplexPoly, RealityClass, RealityKind, C64, I};
use crate::quad::{integrate, QuadOptions};

/// Root tolerance used for branch points.
const ROOT_TOL: f64 = 1e-10;
const CLUSTER_REL: f64 = 1e-6;
/// Pieces of a path are kept below this fraction of the distance to the nearest branch point.
const PIECE_FRACTION: f64 = 0.4;

/// Nearest-integer distance of h to i pi Z.
pub fn dist_to_ipiz(h: C64) -> f64 {
    let k = (h.im / PI).round();
    (h - I * (k * PI)).norm()
}

#[derive(Clone, Debug)]
pub struct SpectralCurve {
    pub a: ComplexPoly,
    pub g: usize,
    /// roots of a with multiplicity
    pub branch_points: Vec<C64>,
}

impl SpectralCurve {
    pub fn new(a: ComplexPoly) -> Result<Self> {
        if a.is_zero() {
            return Err(Error::Degenerate("a = 0".into()));
        }
        let n = a.degree();
        if n % 2 == 1 {
            return Err(Error::DegreeMismatch(format!("deg a = {n} is odd")));
        }
        if a.coeff(0).norm() == 0.0 {
            return Err(Error::Degenerate("a(0) = 0".into()));
        }
        let branch_points = if n == 0 { Vec::new() } else { polish_clusters(&a, a.roots(ROOT_TOL)?) };
        Ok(SpectralCurve { a, g: n / 2, branch_points })
    }

    /// Distinct roots with their multiplicities.
    pub fn grouped_roots(&self) -> Vec<(C64, usize)> {
        let mut out: Vec<(C64, usize)> = Vec::new();
        for &r in &self.branch_points {
            match out.iter_mut().find(|(x, _)| roots_coincide(*x, r)) {
                Some(e) => e.1 += 1,
                None => out.push((r, 1)),
            }
        }
        out
    }

    pub fn has_multiple_roots(&self) -> bool {
        self.grouped_roots().iter().any(|(_, m)| *m > 1)
    }

    /// ||a(0)| - 1/16|
    pub fn normalization_residual(&self) -> f64 {
        (self.a.coeff(0).norm() - 1.0 / 16.0).abs()
    }

    /// max over 64 points of S^1 of the violation of lambda^{-g} a(lambda) <= 0.
    pub fn hermit_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let l = C64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0);
            let v = self.a.eval(l) * l.powi(-(self.g as i32));
            worst = worst.max(v.im.abs()).max(v.re.max(0.0));
        }
        worst
    }

    /// 0 together with all branch points; the singular points of dh in C.
    fn singular_points(&self) -> Vec<C64> {
        let mut p = vec![C64::default()];
        p.extend(self.branch_points.iter().copied());
        p
    }
}

/// Sign convention for nu. The cuts are the straight segments [alpha_i, 1/conj(alpha_i)]
/// plus the negative real axis for the lambda^{-1/2} factor; on a cut the value is the
/// limit from the side with positive imaginary part of the local orientation.
#[derive(Clone, Debug)]
pub struct NuBranch {
    lead_sqrt: C64,
    pub cuts: Vec<(C64, C64)>,
    pub sign: f64,
}

impl NuBranch {
    /// nu(1) = +i sqrt|a(1)|; if a(1) = 0 the reference moves to lambda = e^{0.01 i}.
    pub fn new(curve: &SpectralCurve) -> Result<Self> {
        let cuts = pair_roots(&curve.branch_points);
        let lead = curve.a.coeff(curve.a.degree());
        let mut br = NuBranch { lead_sqrt: lead.sqrt(), cuts, sign: 1.0 };
        let (lref, want) = if curve.a.eval(c(1.0, 0.0)).norm() > 1e-12 {
            (c(1.0, 0.0), I)
        } else {
            let l = C64::from_polar(1.0, 0.01);
            (l, I * C64::from_polar(1.0, 0.01 * (curve.g as f64 - 1.0) / 2.0))
        };
        let v = br.raw(lref);
        if (v * want.conj()).re < 0.0 {
            br.sign = -1.0;
        }
        Ok(br)
    }

    pub fn flipped(&self) -> Self {
        NuBranch { sign: -self.sign, ..self.clone() }
    }

    fn raw(&self, l: C64) -> C64 {
        let mut v = self.lead_sqrt / on_cut_sqrt(l);
        for &(p, q) in &self.cuts {
            if roots_coincide(p, q) {
                v *= l - p;
            } else {
                v *= (l - p) * on_cut_sqrt((l - q) / (l - p));
            }
        }
        v * self.sign
    }

    /// The cut segment containing lambda in its interior, if any.
    pub fn cut_at(&self, l: C64) -> Option<(C64, C64)> {
        self.cuts.iter().copied().find(|&(p, q)| !roots_coincide(p, q) && on_segment_interior(l, p, q))
    }

    /// Boundary value of nu; defined everywhere except 0.
    pub fn boundary_value(&self, curve: &SpectralCurve, l: C64) -> C64 {
        let v = self.raw(l);
        // snap to an exact square root of a/lambda
        let s = (curve.a.eval(l) / l).sqrt();
        if (s - v).norm() <= (s + v).norm() {
            s
        } else {
            -s
        }
    }
}

/// Principal square root with values on the negative axis taken from above.
/// Roots closer than CLUSTER_REL are a split multiple root: replace them by the root of a^(m-1).
fn polish_clusters(a: &ComplexPoly, roots: Vec<C64>) -> Vec<C64> {
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for r in roots {
        match clusters.iter_mut().find(|cl| (cl[0] - r).norm() < CLUSTER_REL * (1.0 + r.norm())) {
            Some(cl) => cl.push(r),
            None => clusters.push(vec![r]),
        }
    }
    let mut out = Vec::new();
    for cl in clusters {
        let m = cl.len();
        if m == 1 {
            out.push(cl[0]);
            continue;
        }
        let mut d = a.clone();
        for _ in 0..m - 1 {
            d = d.derivative();
        }
        let dd = d.derivative();
        let mut x = cl.iter().sum::<C64>() / m as f64;
        for _ in 0..20 {
            let s = dd.eval(x);
            if s.norm() == 0.0 {
                break;
            }
            let step = d.eval(x) / s;
            x -= step;
            if step.norm() < 1e-16 * (1.0 + x.norm()) {
                break;
            }
        }
        out.extend(std::iter::repeat_n(x, m));
    }
    out
}

fn on_cut_sqrt(w: C64) -> C64 {
    if w.im == 0.0 && w.re < 0.0 {
        c(0.0, (-w.re).sqrt())
    } else {
        w.sqrt()
    }
}

fn on_segment_interior(l: C64, p: C64, q: C64) -> bool {
    let d = q - p;
    let t = ((l - p) / d).re;
    let off = ((l - p) / d).im.abs() * d.norm();
    off < 1e-12 * (1.0 + l.norm()) && t > 1e-12 && t < 1.0 - 1e-12
}

/// Pairs alpha with the root nearest 1/conj(alpha); roots on S^1 pair with their nearest neighbour.
fn pair_roots(roots: &[C64]) -> Vec<(C64, C64)> {
    let mut left: Vec<C64> = roots.to_vec();
    left.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut out = Vec::new();
    while let Some(a) = left.first().copied() {
        left.remove(0);
        if left.is_empty() {
            out.push((a, a));
            break;
        }
        let target = if a.norm() < 1.0 - 1e-9 { 1.0 / a.conj() } else { a };
        let (k, _) = left.iter().enumerate().map(|(k, r)| (k, (r - target).norm())).min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        let b = left.remove(k);
        out.push((a, b));
    }
    out
}

pub fn nu(curve: &SpectralCurve, branch: &NuBranch, l: C64) -> Result<C64> {
    if l.norm() == 0.0 {
        return Err(Error::OnCut(l));
    }
    if branch.cut_at(l).is_some() {
        return Err(Error::OnCut(l));
    }
    Ok(branch.boundary_value(curve, l))
}

/// Period of the closed annulus and its phase; b(0) = -tau e^{i Theta}/32, a(0) = -e^{i Theta}/16.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDataAB {
    pub a: ComplexPoly,
    pub b: ComplexPoly,
    pub tau: C64,
    pub theta: f64,
}

impl SpectralDataAB {
    pub fn genus(&self) -> usize {
        self.a.degree() / 2
    }

    pub fn curve(&self) -> Result<SpectralCurve> {
        SpectralCurve::new(self.a.clone())
    }

    /// a = -1/16, b = (pi/16)(lambda - 1), tau = 2 pi, Theta = 0.
    pub fn flat() -> Self {
        SpectralDataAB { a: ComplexPoly::from_real(&[-1.0 / 16.0]), b: ComplexPoly::from_real(&[-PI / 16.0, PI / 16.0]), tau: c(2.0 * PI, 0.0), theta: 0.0 }
    }

    pub fn to_json(&self, with_branch_points: bool) -> Result<String> {
        let mut j = SpectralDataJson::from(self);
        if with_branch_points {
            j.branch_points = Some(self.curve()?.branch_points.iter().map(|z| [z.re, z.im]).collect());
        }
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: SpectralDataJson = serde_json::from_str(s)?;
        j.try_into()
    }
}

/// Wire format: complex numbers as [re, im] pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDataJson {
    pub genus: usize,
    pub theta: f64,
    pub tau: [f64; 2],
    pub a_coeffs: Vec<[f64; 2]>,
    pub b_coeffs: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_points: Option<Vec<[f64; 2]>>,
}

fn pairs(p: &ComplexPoly) -> Vec<[f64; 2]> {
    p.coeffs().iter().map(|z| [z.re, z.im]).collect()
}

impl From<&SpectralDataAB> for SpectralDataJson {
    fn from(d: &SpectralDataAB) -> Self {
        SpectralDataJson { genus: d.genus(), theta: d.theta, tau: [d.tau.re, d.tau.im], a_coeffs: pairs(&d.a), b_coeffs: pairs(&d.b), branch_points: None }
    }
}

impl TryFrom<SpectralDataJson> for SpectralDataAB {
    type Error = Error;

    fn try_from(j: SpectralDataJson) -> Result<Self> {
        let poly = |v: &[[f64; 2]]| ComplexPoly::new(v.iter().map(|p| c(p[0], p[1])).collect());
        let d = SpectralDataAB { a: poly(&j.a_coeffs), b: poly(&j.b_coeffs), tau: c(j.tau[0], j.tau[1]), theta: j.theta };
        if d.a.degree() != 2 * j.genus {
            return Err(Error::DegreeMismatch(format!("genus {} needs deg a = {}, got {}", j.genus, 2 * j.genus, d.a.degree())));
        }
        if d.b.degree() > j.genus + 1 {
            return Err(Error::DegreeMismatch(format!("genus {} needs deg b <= {}, got {}", j.genus, j.genus + 1, d.b.degree())));
        }
        Ok(d)
    }
}

/// Integrator for dh = b dlambda / (nu lambda^2) with nu continued along straight pieces.
pub struct HIntegrator<'a> {
    pub curve: &'a SpectralCurve,
    pub b: &'a ComplexPoly,
    sing: Vec<C64>,
    opts: QuadOptions,
    /// accumulated quadrature error estimate
    pub error: f64,
}

impl<'a> HIntegrator<'a> {
    pub fn new(curve: &'a SpectralCurve, b: &'a ComplexPoly) -> Self {
        HIntegrator { curve, b, sing: curve.singular_points(), opts: QuadOptions::default(), error: 0.0 }
    }

    /// nu(l) / nu(base): product of principal roots, valid near base.
    fn ratio(&self, l: C64, base: C64, skip: Option<C64>) -> C64 {
        let mut r = (base / l).sqrt();
        for &p in &self.curve.branch_points {
            if skip.is_some_and(|s| roots_coincide(s, p)) {
                continue;
            }
            r *= ((l - p) / (base - p)).sqrt();
        }
        r
    }

    fn dist(&self, l: C64, skip: Option<C64>) -> f64 {
        self.sing.iter().filter(|&&p| !skip.is_some_and(|s| roots_coincide(s, p))).map(|p| (l - p).norm()).fold(f64::INFINITY, f64::min)
    }

    fn regular_piece(&mut self, p: C64, nu_p: C64, q: C64) -> (C64, C64) {
        let d = q - p;
        let (v, e) = integrate(
            |t| {
                let l = p + d * t;
                self.b.eval(l) * d / (nu_p * self.ratio(l, p, None) * l * l)
            },
            0.0,
            1.0,
            self.opts,
        );
        self.error += e;
        (v, nu_p * self.ratio(q, p, None))
    }

    /// integral from p to the branch point beta via lambda = beta + (p - beta) u^2.
    fn singular_piece(&mut self, p: C64, nu_p: C64, beta: C64) -> C64 {
        let m = self.curve.branch_points.iter().filter(|&&x| roots_coincide(x, beta)).count() as i32;
        let d = p - beta;
        let (v, e) = integrate(
            |u| {
                let l = beta + d * u * u;
                let nu = nu_p * self.ratio(l, p, Some(beta)) * u.powi(m);
                self.b.eval(l) * d * (2.0 * u) / (nu * l * l)
            },
            0.0,
            1.0,
            self.opts,
        );
        self.error += e;
        -v
    }

    /// Integral along the straight line from a regular point `from` to `to`, continuing nu.
    /// If `to` is a branch point the last piece uses the square-root substitution.
    pub fn line(&mut self, from: C64, nu_from: C64, to: C64) -> Result<(C64, C64)> {
        let target_root = self.curve.branch_points.iter().copied().find(|&r| roots_coincide(r, to));
        let mut p = from;
        let mut nu_p = nu_from;
        let mut total = C64::default();
        for _ in 0..100_000 {
            let rest = to - p;
            if rest.norm() == 0.0 {
                return Ok((total, nu_p));
            }
            let d_all = self.dist(p, None);
            if d_all < 1e-13 {
                return Err(Error::OnCut(p));
            }
            if let Some(beta) = target_root {
                if rest.norm() <= PIECE_FRACTION * self.dist(p, Some(beta)) && rest.norm() <= 2.0 * d_all {
                    total += self.singular_piece(p, nu_p, beta);
                    return Ok((total, C64::default()));
                }
            } else if rest.norm() <= PIECE_FRACTION * d_all {
                let (v, n) = self.regular_piece(p, nu_p, to);
                return Ok((total + v, n));
            }
            let step = (PIECE_FRACTION * d_all).min(rest.norm());
            let q = p + rest / rest.norm() * step;
            let (v, n) = self.regular_piece(p, nu_p, q);
            total += v;
            p = q;
            nu_p = n;
        }
        Err(Error::Solve(format!("path {from} -> {to} needs too many pieces")))
    }

    /// Integral from branch point x to `to` along the straight line, with nu at the
    /// midpoint taken as the principal root of a/lambda (the other side negates it).
    pub fn from_branch_point(&mut self, x: C64, to: C64) -> Result<C64> {
        let m = (x + to) * 0.5;
        let nu_m = (self.curve.a.eval(m) / m).sqrt();
        let (back, _) = self.line(m, nu_m, x)?;
        let (fwd, _) = self.line(m, nu_m, to)?;
        Ok(fwd - back)
    }

    /// Closed polygon around 0 of radius rho starting at rho e^{i phi}; returns the loop integral.
    fn loop_around_zero(&mut self, start: C64, nu_start: C64) -> Result<C64> {
        let n = 16;
        let mut p = start;
        let mut nu_p = nu_start;
        let mut total = C64::default();
        for k in 1..=n {
            let q = start * C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
            let (v, nq) = self.line(p, nu_p, q)?;
            total += v;
            p = q;
            nu_p = nq;
        }
        Ok(total)
    }

    /// h at the point (rho u, nu) near 0, from sigma-antisymmetry: h = -1/2 of the loop integral.
    fn anchor(&mut self, start: C64, nu_start: C64) -> Result<C64> {
        Ok(-0.5 * self.loop_around_zero(start, nu_start)?)
    }

    /// Values of h at `target` reached radially from the anchor near 0 on the sheet of `branch`.
    /// Every branch point met on the way doubles the candidate set (both sides of the cut).
    pub fn h_at(&mut self, branch: &NuBranch, target: C64) -> Result<Vec<C64>> {
        if target.norm() == 0.0 {
            return Err(Error::InvalidInput("h is singular at lambda = 0".into()));
        }
        let u = target / target.norm();
        let rmin = self.curve.branch_points.iter().map(|r| r.norm()).fold(1.0, f64::min);
        let rho = 0.5 * rmin.min(target.norm());
        let s0 = u * rho;
        let nu0 = branch.boundary_value(self.curve, s0);
        let h0 = self.anchor(s0, nu0)?;
        // branch points strictly between s0 and target on the ray
        let mut hits: Vec<(f64, C64)> = Vec::new();
        let d = target - s0;
        for &(r, _) in &self.curve.grouped_roots() {
            let t = ((r - s0) / d).re;
            let off = ((r - s0) / d).im.abs() * d.norm();
            if off < 1e-9 * (1.0 + r.norm()) && t > 1e-12 && t < 1.0 && !roots_coincide(r, target) {
                hits.push((t, r));
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        if hits.is_empty() {
            let (v, _) = self.line(s0, nu0, target)?;
            return Ok(vec![h0 + v]);
        }
        let (v, _) = self.line(s0, nu0, hits[0].1)?;
        let mut vals = vec![h0 + v];
        for k in 0..hits.len() {
            let next = if k + 1 < hits.len() { hits[k + 1].1 } else { target };
            let j = self.from_branch_point(hits[k].1, next)?;
            vals = vals.iter().flat_map(|&h| [h + j, h - j]).collect();
        }
        Ok(vals)
    }
}

/// Integral of dh along a polyline; path[0] must be a regular point off the cuts.
pub fn h_integral(data: &SpectralDataAB, branch: &NuBranch, path: &[C64]) -> Result<C64> {
    if path.len() < 2 {
        return Err(Error::InvalidInput("path needs at least two points".into()));
    }
    let curve = data.curve()?;
    for w in path.windows(2) {
        for &(p, q) in &branch.cuts {
            if !roots_coincide(p, q) && segments_cross(w[0], w[1], p, q) {
                return Err(Error::CutCrossing { from: w[0], to: w[1], cut_a: p, cut_b: q });
            }
        }
    }
    let mut hi = HIntegrator::new(&curve, &data.b);
    let mut nu_p = nu(&curve, branch, path[0])?;
    let mut total = C64::default();
    for w in path.windows(2) {
        if curve.branch_points.iter().any(|&r| roots_coincide(r, w[0])) {
            return Err(Error::InvalidInput(format!("path passes through the branch point {}", w[0])));
        }
        let (v, n) = hi.line(w[0], nu_p, w[1])?;
        total += v;
        nu_p = n;
    }
    Ok(total)
}

/// Whether the open segments [a, b] and [p, q] intersect (touching the interior of [p, q] counts).
fn segments_cross(a: C64, b: C64, p: C64, q: C64) -> bool {
    let cross = |u: C64, v: C64| u.re * v.im - u.im * v.re;
    let d1 = cross(b - a, p - a);
    let d2 = cross(b - a, q - a);
    let d3 = cross(q - p, a - p);
    let d4 = cross(q - p, b - p);
    let eps = 1e-14 * (1.0 + a.norm() + b.norm() + p.norm() + q.norm()).powi(2);
    if d1.abs() < eps && d2.abs() < eps {
        // collinear: overlap test along the line
        let dir = b - a;
        let t = |z: C64| ((z - a) / dir).re;
        let (lo, hi) = (t(p).min(t(q)), t(p).max(t(q)));
        return hi > 1e-12 && lo < 1.0 - 1e-12;
    }
    let strad = |x: f64, y: f64| (x > eps && y < -eps) || (x < -eps && y > eps);
    (strad(d1, d2) || d1.abs() < eps || d2.abs() < eps) && strad(d3, d4) || on_segment_interior(a, p, q) || on_segment_interior(b, p, q)
}

/// mu on the sheet nu: the eigenvalue of M on the xi-eigenline for -nu.
#[derive(Clone, Debug)]
pub struct MuSamples {
    pub lambdas: Vec<C64>,
    pub nu: Vec<C64>,
    pub mu: Vec<C64>,
    /// |mu mu' - 1| with mu' from the opposite eigenline
    pub product_residual: Vec<f64>,
    /// eigenline matching unreliable (near a branch point)
    pub flagged: Vec<bool>,
}

pub fn mu_from_monodromy(m: &Monodromy, curve: &SpectralCurve, branch: &NuBranch) -> MuSamples {
    let mut out = MuSamples { lambdas: Vec::new(), nu: Vec::new(), mu: Vec::new(), product_residual: Vec::new(), flagged: Vec::new() };
    for (k, &l) in m.lambdas.points.iter().enumerate() {
        let mk = m.m[k];
        let xi = m.potential.eval(l);
        let v = branch.boundary_value(curve, l);
        let scale = mat_max_abs(&xi).max(1e-300);
        let flagged = v.norm() < 1e-6 * scale;
        let (mu, mu2) = if flagged {
            let tr = (mk[(0, 0)] + mk[(1, 1)]) * 0.5;
            (tr, tr)
        } else {
            (eigen_on_line(&mk, &xi, -v), eigen_on_line(&mk, &xi, v))
        };
        out.lambdas.push(l);
        out.nu.push(v);
        out.mu.push(mu);
        out.product_residual.push((mu * mu2 - 1.0).norm());
        out.flagged.push(flagged);
    }
    out
}

/// Rayleigh quotient of m on the eigenvector of xi for eigenvalue e.
fn eigen_on_line(m: &crate::poly::Mat2, xi: &crate::poly::Mat2, e: C64) -> C64 {
    let (p, q, r) = (xi[(0, 0)], xi[(0, 1)], xi[(1, 0)]);
    let v1 = (q, e - p);
    let v2 = (e + p, r);
    let (x, y) = if v1.0.norm_sqr() + v1.1.norm_sqr() >= v2.0.norm_sqr() + v2.1.norm_sqr() { v1 } else { v2 };
    let mx = m[(0, 0)] * x + m[(0, 1)] * y;
    let my = m[(1, 0)] * x + m[(1, 1)] * y;
    (x.conj() * mx + y.conj() * my) / (x.norm_sqr() + y.norm_sqr())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SegmentResidual {
    pub root: [f64; 2],
    pub integral: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HValue {
    pub lambda: [f64; 2],
    /// candidate values of h (one per side of each cut passed)
    pub h: Vec<[f64; 2]>,
    pub mu: [f64; 2],
    pub residual: f64,
}

/// Residuals of the closing conditions (i)-(vi).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClosingReport {
    /// (i) kind-A reality of a
    pub reality_a: f64,
    /// (i) lambda^{-g} a <= 0 on S^1
    pub hermit_a: f64,
    /// |a(0) + e^{i Theta}/16|
    pub normalization: f64,
    /// (ii) kind-B reality of b
    pub reality_b: f64,
    /// (iii) |b(0) + tau e^{i Theta}/32|
    pub b0: f64,
    /// (iii) distance of b(0) from the ray e^{i Theta/2} R
    pub b0_ray: f64,
    /// (iv) per root pair
    pub segments: Vec<SegmentResidual>,
    /// (v) at the roots of (lambda - 1) a
    pub h_values: Vec<HValue>,
    /// (vi) at a root of a of multiplicity m, b must vanish to order m - 1 so that sinh(h)/nu
    /// stays holomorphic (h itself is pinned to i pi Z by (v)); max scaled |b^(j)(alpha)/j!|, j < m - 1.
    /// None when a has simple roots.
    pub vanishing_check: Option<f64>,
    pub quadrature_error: f64,
    pub notes: Vec<String>,
}

impl ClosingReport {
    pub fn max_residual(&self) -> f64 {
        let mut m = self.reality_a.max(self.hermit_a).max(self.normalization).max(self.reality_b).max(self.b0).max(self.b0_ray);
        for s in &self.segments {
            m = m.max(s.residual);
        }
        for h in &self.h_values {
            m = m.max(h.residual);
        }
        if let Some(v) = self.vanishing_check {
            m = m.max(v);
        }
        if m.is_nan() {
            f64::INFINITY
        } else {
            m
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    /// Largest residual in each condition, labelled (i)..(vi).
    pub fn by_condition(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("(i)", self.reality_a.max(self.hermit_a).max(self.normalization)), ("(ii)", self.reality_b), ("(iii)", self.b0.max(self.b0_ray))];
        v.push(("(iv)", self.segments.iter().map(|s| s.residual).fold(0.0, f64::max)));
        v.push(("(v)", self.h_values.iter().map(|s| s.residual).fold(0.0, f64::max)));
        if let Some(x) = self.vanishing_check {
            v.push(("(vi)", x));
        }
        v
    }
}

pub fn closing_report(data: &SpectralDataAB) -> Result<ClosingReport> {
    let g = data.genus();
    if data.a.degree() != 2 * g || data.b.degree() > g + 1 {
        return Err(Error::DegreeMismatch(format!("deg a = {}, deg b = {}", data.a.degree(), data.b.degree())));
    }
    let curve = data.curve()?;
    let branch = NuBranch::new(&curve)?;
    let eth = C64::from_polar(1.0, data.theta);
    let notes = Vec::new();
    let reality_a = RealityClass::new(RealityKind::A, g).residual(&data.a);
    let reality_b = RealityClass::new(RealityKind::B, g).residual(&data.b);
    let b0 = data.b.coeff(0);
    let b0_res = (b0 + data.tau * eth / 32.0).norm();
    let b0_ray = (b0 * C64::from_polar(1.0, -data.theta / 2.0)).im.abs();
    let mut hi = HIntegrator::new(&curve, &data.b);
    let mut segments = Vec::new();
    for &(p, q) in &branch.cuts {
        if roots_coincide(p, q) {
            continue;
        }
        let v = hi.from_branch_point(p, q)?;
        segments.push(SegmentResidual { root: [p.re, p.im], integral: [v.re, v.im], residual: v.re.abs() });
    }
    let mut targets: Vec<C64> = vec![c(1.0, 0.0)];
    for (r, _) in curve.grouped_roots() {
        if !targets.iter().any(|&t| roots_coincide(t, r)) {
            targets.push(r);
        }
    }
    let mut h_values = Vec::new();
    for t in targets {
        let hs = hi.h_at(&branch, t)?;
        let residual = hs.iter().map(|&h| dist_to_ipiz(h)).fold(0.0, f64::max);
        let mu = hs[0].exp();
        h_values.push(HValue { lambda: [t.re, t.im], h: hs.iter().map(|z| [z.re, z.im]).collect(), mu: [mu.re, mu.im], residual });
    }
    let vanishing_check = curve.has_multiple_roots().then(|| multiple_root_vanishing(&data.b, &curve));
    Ok(ClosingReport {
        reality_a,
        hermit_a: curve.hermit_residual(),
        normalization: (data.a.coeff(0) + eth / 16.0).norm(),
        reality_b,
        b0: b0_res,
        b0_ray,
        segments,
        h_values,
        vanishing_check,
        quadrature_error: hi.error,
        notes,
    })
}

fn multiple_root_vanishing(b: &ComplexPoly, curve: &SpectralCurve) -> f64 {
    let scale = b.max_abs_coeff().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (r, m) in curve.grouped_roots() {
        let mut d = b.clone();
        let mut fact = 1.0;
        for j in 0..m.saturating_sub(1) {
            if j > 0 {
                d = d.derivative();
                fact *= j as f64;
            }
            worst = worst.max(d.eval(r).norm() / fact / scale);
        }
    }
    worst
}

pub fn flux(data: &SpectralDataAB) -> f64 {
    data.tau.norm()
}

/// Parameters of the Abresch catalog.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum CatalogParams {
    /// flat cylinder
    Genus0,
    /// a = (lambda - alpha)(alpha lambda - 1)/(16 alpha), alpha in (0, 1)
    Genus1Positive { alpha: f64 },
    /// a = -(lambda + beta)(beta lambda + 1)/(16 beta), beta in (0, 1)
    Genus1Negative { beta: f64 },
    /// both factors
    Genus2 { alpha: f64, beta: f64 },
}

/// Abresch catalog entry with the free constants of b solved from (iv) and (v).
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub data: SpectralDataAB,
    /// root of b inside (alpha, 1) when present
    pub gamma: Option<f64>,
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidInput(format!("{name} = {x} must lie in (0, 1)")));
    }
    Ok(())
}

pub fn abresch_catalog(params: CatalogParams) -> Result<CatalogEntry> {
    let mut entry = catalog_raw(params)?;
    // root products like alpha * (1/alpha) are off by an ulp; averaging with the image is exact
    let g = entry.data.genus();
    entry.data.a = RealityClass::new(RealityKind::A, g).symmetrize(&entry.data.a)?.0;
    entry.data.b = RealityClass::new(RealityKind::B, g).symmetrize(&entry.data.b)?.0;
    Ok(entry)
}

fn catalog_raw(params: CatalogParams) -> Result<CatalogEntry> {
    let one = c(1.0, 0.0);
    match params {
        CatalogParams::Genus0 => Ok(CatalogEntry { data: SpectralDataAB::flat(), gamma: None }),
        CatalogParams::Genus1Positive { alpha } => {
            unit_interval("alpha", alpha)?;
            let a = ComplexPoly::from_roots(c(alpha / (16.0 * alpha), 0.0), &[c(alpha, 0.0), c(1.0 / alpha, 0.0)]);
            solve_imaginary_family(a, alpha, |g| ComplexPoly::from_roots(c(g, 0.0), &[c(g, 0.0), c(1.0 / g, 0.0)]).scale(c(1.0 / g, 0.0)))
        }
        CatalogParams::Genus1Negative { beta } => {
            unit_interval("beta", beta)?;
            let a = ComplexPoly::from_roots(c(-beta / (16.0 * beta), 0.0), &[c(-beta, 0.0), c(-1.0 / beta, 0.0)]);
            // b = B (1 - lambda^2), B real, fixed by h(1) = i pi
            let unit = ComplexPoly::from_real(&[1.0, 0.0, -1.0]);
            let curve = SpectralCurve::new(a.clone())?;
            let branch = NuBranch::new(&curve)?;
            let h = HIntegrator::new(&curve, &unit).h_at(&branch, one)?[0];
            if h.im.abs() < 1e-12 {
                return Err(Error::Solve(format!("h(1) vanishes for the unit b (h = {h})")));
            }
            let bb = -PI / h.im.abs();
            let b = unit.scale(c(bb, 0.0));
            Ok(CatalogEntry { data: SpectralDataAB { a, b, tau: c(-32.0 * bb, 0.0), theta: 0.0 }, gamma: None })
        }
        CatalogParams::Genus2 { alpha, beta } => {
            unit_interval("alpha", alpha)?;
            unit_interval("beta", beta)?;
            let lead = alpha * beta / (16.0 * alpha * beta);
            let a = ComplexPoly::from_roots(c(lead, 0.0), &[c(alpha, 0.0), c(1.0 / alpha, 0.0), c(-beta, 0.0), c(-1.0 / beta, 0.0)]);
            solve_imaginary_family(a, alpha, |g| ComplexPoly::from_roots(c(g, 0.0), &[c(g, 0.0), c(1.0 / g, 0.0), c(-1.0, 0.0)]).scale(c(1.0 / g, 0.0)))
        }
    }
}

/// Theta = pi families: b = i s q_gamma with q_gamma(0) = 1. gamma from the segment condition
/// on [alpha, 1/alpha], then s > 0 from h(1) = +-i pi.
fn solve_imaginary_family(a: ComplexPoly, alpha: f64, q: impl Fn(f64) -> ComplexPoly) -> Result<CatalogEntry> {
    let curve = SpectralCurve::new(a.clone())?;
    let branch = NuBranch::new(&curve)?;
    let al = c(alpha, 0.0);
    let seg = |g: f64| -> Result<f64> {
        let b = q(g).scale(I);
        let v = HIntegrator::new(&curve, &b).from_branch_point(al, al.inv())?;
        Ok(v.re)
    };
    let (mut lo, mut hi) = (alpha + 1e-9 * (1.0 - alpha), 1.0 - 1e-9 * (1.0 - alpha));
    let (mut flo, fhi) = (seg(lo)?, seg(hi)?);
    if flo * fhi > 0.0 {
        let samples: Vec<String> = (1..10)
            .map(|k| {
                let g = alpha + (1.0 - alpha) * k as f64 / 10.0;
                format!("gamma={g:.3}: {:.3e}", seg(g).unwrap_or(f64::NAN))
            })
            .collect();
        return Err(Error::Solve(format!("no sign change of the segment condition on (alpha, 1); samples {}", samples.join(", "))));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = seg(mid)?;
        if fm * flo <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let unit = q(gamma).scale(I);
    let h = HIntegrator::new(&curve, &unit).h_at(&branch, c(1.0, 0.0))?;
    let him = h.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if him < 1e-12 {
        return Err(Error::Solve("h(1) vanishes for the unit b".into()));
    }
    let s = PI / him;
    let b = unit.scale(c(s, 0.0));
    // b(0) = i s = -tau e^{i pi}/32 = tau/32
    Ok(CatalogEntry { data: SpectralDataAB { a, b, tau: c(0.0, 32.0 * s), theta: PI }, gamma: Some(gamma) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::{monodromy_of, FrameOptions, LambdaGrid};
    use crate::poly::{offdiagonal_potential, Potential};

    fn flat_curve() -> (SpectralCurve, NuBranch) {
        let cu = SpectralCurve::new(SpectralDataAB::flat().a).unwrap();
        let br = NuBranch::new(&cu).unwrap();
        (cu, br)
    }

    #[test]
    fn nu_flat_convention() {
        let (cu, br) = flat_curve();
        let v = nu(&cu, &br, c(1.0, 0.0)).unwrap();
        assert!((v - c(0.0, 0.25)).norm() < 1e-15);
        let l = c(0.3, -1.7);
        let v = nu(&cu, &br, l).unwrap();
        assert!((v * v - cu.a.eval(l) / l).norm() < 1e-15);
    }

    #[test]
    fn nu_rho_involution() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap().data;
        let cu = d.curve().unwrap();
        let br = NuBranch::new(&cu).unwrap();
        let l = c(0.4, 0.9);
        let v = nu(&cu, &br, l).unwrap();
        let w = nu(&cu, &br, 1.0 / l.conj()).unwrap();
        let img = -l.conj().powi(1 - 1) * v.conj();
        assert!((w - img).norm() < 1e-12 || (w + img).norm() < 1e-12, "{w} vs {img}");
    }

    #[test]
    fn nu_rejects_cut() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap().data;
        let cu = d.curve().unwrap();
        let br = NuBranch::new(&cu).unwrap();
        assert!(matches!(nu(&cu, &br, c(2.0, 0.0)), Err(Error::OnCut(_))));
        assert!(nu(&cu, &br, c(0.25, 0.0)).unwrap().norm() < 1e-8);
    }

    #[test]
    fn flat_h_closed_form() {
        // h = -(i pi / 2)(sqrt(l) + 1/sqrt(l)) on the sheet nu = (i/4) l^{-1/2}
        let d = SpectralDataAB::flat();
        let (cu, br) = flat_curve();
        let mut hi = HIntegrator::new(&cu, &d.b);
        for l in [c(1.0, 0.0), c(2.0, 0.5), c(0.3, -0.2)] {
            let h = hi.h_at(&br, l).unwrap();
            let s = l.sqrt();
            let want = -I * (PI / 2.0) * (s + 1.0 / s);
            assert!((h[0] - want).norm() < 1e-9, "{l}: {} vs {want}", h[0]);
        }
    }

    #[test]
    fn flat_loop_and_reversal() {
        let d = SpectralDataAB::flat();
        let (_, br) = flat_curve();
        // a closed loop not around 0 has no residue
        let path = [c(1.0, 0.0), c(1.5, 0.5), c(1.0, 1.0), c(0.5, 0.5), c(1.0, 0.0)];
        assert!(h_integral(&d, &br, &path).unwrap().norm() < 1e-12);
        let p1 = [c(1.0, 0.0), c(2.0, 1.0)];
        let p2 = [c(2.0, 1.0), c(1.0, 0.0)];
        let f = h_integral(&d, &br, &p1).unwrap();
        let r = h_integral(&d, &br, &p2).unwrap();
        assert!((f + r).norm() < 1e-12);
        // sigma: the other sheet negates
        let g = h_integral(&d, &br.flipped(), &p1).unwrap();
        assert!((f + g).norm() < 1e-12);
    }

    #[test]
    fn h_integral_rejects_cut_crossing() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap().data;
        let cu = d.curve().unwrap();
        let br = NuBranch::new(&cu).unwrap();
        let r = h_integral(&d, &br, &[c(2.0, 1.0), c(2.0, -1.0)]);
        assert!(matches!(r, Err(Error::CutCrossing { .. })));
    }

    #[test]
    fn flat_closing_report() {
        let rep = closing_report(&SpectralDataAB::flat()).unwrap();
        assert!(rep.passes(1e-8), "{rep:?}");
        assert_eq!(rep.b0, 0.0);
        let mut d = SpectralDataAB::flat();
        d.b = d.b.add(&ComplexPoly::constant(c(1e-3, 0.0)));
        let rep2 = closing_report(&d).unwrap();
        assert!((rep2.b0 - 1e-3).abs() < 1e-12);
        assert_eq!(rep2.reality_a, rep.reality_a);
    }

    #[test]
    fn catalog_genus1_positive() {
        let e = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap();
        let d = &e.data;
        assert!((d.a.coeff(0) - c(1.0 / 16.0, 0.0)).norm() < 1e-15);
        let g = e.gamma.unwrap();
        assert!(g > 0.25 && g < 1.0);
        assert!(d.b.coeff(0).re.abs() < 1e-15);
        let rep = closing_report(d).unwrap();
        assert!(rep.passes(1e-6), "{rep:?}");
    }

    #[test]
    fn catalog_genus1_negative_and_genus2() {
        let e = abresch_catalog(CatalogParams::Genus1Negative { beta: 0.5 }).unwrap();
        assert!((e.data.a.coeff(0) - c(-1.0 / 16.0, 0.0)).norm() < 1e-15);
        assert!(e.data.b.coeff(0).im == 0.0);
        let rep = closing_report(&e.data).unwrap();
        assert!(rep.passes(1e-6), "{rep:?}");
        let e = abresch_catalog(CatalogParams::Genus2 { alpha: 0.3, beta: 0.5 }).unwrap();
        let rep = closing_report(&e.data).unwrap();
        assert!(rep.passes(1e-6), "{rep:?}");
    }

    #[test]
    fn genus1_tends_to_flat_period() {
        let t = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.999 }).unwrap().data.tau.norm();
        assert!((t - 2.0 * PI).abs() < 1e-2, "{t}");
    }

    #[test]
    fn flat_mu_from_monodromy() {
        let (cu, br) = flat_curve();
        let pts = vec![c(1.0, 0.0), c(-1.0, 0.0), c(2.0, 0.5), c(0.0, 1.0)];
        let grid = LambdaGrid::new(pts).unwrap();
        let m = monodromy_of(&Potential::flat(), &grid, c(2.0 * PI, 0.0), &FrameOptions::default()).unwrap();
        let s = mu_from_monodromy(&m, &cu, &br);
        assert!((s.mu[0] + 1.0).norm() < 1e-6);
        assert!((s.mu[1] - 1.0).norm() < 1e-6);
        let fb = SpectralDataAB::flat().b;
        let mut hi = HIntegrator::new(&cu, &fb);
        for k in 2..4 {
            let h = hi.h_at(&br, s.lambdas[k]).unwrap()[0];
            assert!((s.mu[k] - h.exp()).norm() < 1e-6 * s.mu[k].norm(), "{} vs {}", s.mu[k], h.exp());
            assert!(s.product_residual[k] < 1e-9);
        }
        // sigma: the other sheet inverts mu
        let t = mu_from_monodromy(&m, &cu, &br.flipped());
        assert!((t.mu[2] * s.mu[2] - 1.0).norm() < 1e-9);
    }

    #[test]
    fn genus1_monodromy_matches_h() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap().data;
        let cu = d.curve().unwrap();
        let br = NuBranch::new(&cu).unwrap();
        let xi = offdiagonal_potential(&[c(0.25, 0.0)]).unwrap();
        let pts = vec![c(1.0, 0.0), c(0.25, 0.0), c(0.5, 0.4)];
        let grid = LambdaGrid::new(pts).unwrap();
        let m = monodromy_of(&xi, &grid, d.tau, &FrameOptions { max_step: 0.005, ..Default::default() }).unwrap();
        let s = mu_from_monodromy(&m, &cu, &br);
        assert!((s.mu[0].norm() - 1.0).abs() < 1e-6 && (s.mu[0].re.abs() - 1.0).abs() < 1e-6, "{}", s.mu[0]);
        assert!((s.mu[1].re.abs() - 1.0).abs() < 1e-6, "{}", s.mu[1]);
        let h = HIntegrator::new(&cu, &d.b).h_at(&br, c(0.5, 0.4)).unwrap()[0];
        assert!((s.mu[2] - h.exp()).norm() < 1e-5 * s.mu[2].norm(), "{} vs {}", s.mu[2], h.exp());
    }

    #[test]
    fn json_round_trip() {
        let d = abresch_catalog(CatalogParams::Genus1Positive { alpha: 0.25 }).unwrap().data;
        let s = d.to_json(true).unwrap();
        let back = SpectralDataAB::from_json(&s).unwrap();
        assert_eq!(back, d);
        assert!(SpectralDataAB::from_json(r#"{"genus":0,"theta":0,"tau":[1,0],"a_coeffs":[[1,0]],"b_coeffs":[],"extra":1}"#).is_err());
    }

    #[test]
    fn flux_is_abs_tau() {
        let mut d = SpectralDataAB::flat();
        assert!((flux(&d) - 2.0 * PI).abs() < 1e-15);
        d.tau = c(3.0, 4.0);
        assert_eq!(flux(&d), 5.0);
        d.theta = 1.0;
        assert_eq!(flux(&d), 5.0);
    }
}
