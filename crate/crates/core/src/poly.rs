//! Complex polynomials in the spectral parameter, 2x2 matrix Laurent
//! polynomials, reality symmetries and potentials.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Relative threshold under which two roots count as one multiple root.
pub const MULTIPLICITY_REL: f64 = 1e-7;

pub fn roots_coincide(a: C64, b: C64) -> bool {
    (a - b).norm() < MULTIPLICITY_REL * (1.0 + a.norm())
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn mat2(a: C64, b: C64, c: C64, d: C64) -> Mat2 {
    Mat2::new(a, b, c, d)
}

pub fn identity() -> Mat2 {
    Mat2::identity()
}

pub fn sigma3() -> Mat2 {
    mat2(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0))
}

/// Entrywise max norm.
pub fn mat_max_abs(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value of a 2x2 matrix.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let h = m.adjoint() * m;
    let tr = (h[(0, 0)] + h[(1, 1)]).re;
    let det = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]).re;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 + disc).max(0.0).sqrt()
}

/// exp of a traceless 2x2 matrix: cosh(q) I + sinh(q)/q A with q^2 = -det A.
pub fn expm_traceless(a: &Mat2) -> Mat2 {
    let q2 = -a.determinant();
    let q = q2.sqrt();
    let (ch, sh_over_q) = if q.norm() < 1e-6 {
        (C64::new(1.0, 0.0) + q2 / 2.0 + q2 * q2 / 24.0, C64::new(1.0, 0.0) + q2 / 6.0 + q2 * q2 / 120.0)
    } else {
        (q.cosh(), q.sinh() / q)
    };
    identity() * ch + a * sh_over_q
}

pub fn inverse_sl2(m: &Mat2) -> Mat2 {
    let det = m.determinant();
    mat2(m[(1, 1)] / det, -m[(0, 1)] / det, -m[(1, 0)] / det, m[(0, 0)] / det)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPoly {
    coeffs: Vec<C64>,
}

impl ComplexPoly {
    /// Trailing exact zeros are dropped; the zero polynomial keeps one zero coefficient.
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == C64::new(0.0, 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(C64::new(0.0, 0.0));
        }
        ComplexPoly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self::new(vec![])
    }

    pub fn constant(v: C64) -> Self {
        Self::new(vec![v])
    }

    /// lead * prod (lambda - r)
    pub fn from_roots(lead: C64, roots: &[C64]) -> Self {
        let mut p = vec![lead];
        for &r in roots {
            let mut q = vec![C64::new(0.0, 0.0); p.len() + 1];
            for (k, &pk) in p.iter().enumerate() {
                q[k + 1] += pk;
                q[k] -= pk * r;
            }
            p = q;
        }
        Self::new(p)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * x + a)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.coeffs.iter().map(|&a| a * s).collect())
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Quotient and remainder of long division by a nonzero polynomial.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        let n = d.degree();
        let lead = d.coeffs[n];
        let mut r = self.coeffs.clone();
        if r.len() <= n {
            return (Self::zero(), self.clone());
        }
        let mut q = vec![C64::new(0.0, 0.0); r.len() - n];
        for k in (0..q.len()).rev() {
            let t = r[k + n] / lead;
            q[k] = t;
            for (j, &dc) in d.coeffs.iter().enumerate() {
                r[k + j] -= t * dc;
            }
        }
        r.truncate(n.max(1));
        (Self::new(q), Self::new(r))
    }

    /// lambda^k * p
    pub fn shift(&self, k: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); k];
        v.extend_from_slice(&self.coeffs);
        Self::new(v)
    }

    /// Drops leading coefficients below `tol * max|coeff|`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let scale = self.max_abs_coeff();
        let mut v = self.coeffs.clone();
        while v.len() > 1 && v.last().unwrap().norm() <= tol * scale {
            v.pop();
        }
        Self::new(v)
    }

    /// Roots with multiplicity: companion-matrix eigenvalues, then a Newton polish.
    pub fn roots(&self, tol: f64) -> Result<Vec<C64>> {
        let n = self.degree();
        if n == 0 {
            return Err(Error::InvalidInput("roots of a constant polynomial".into()));
        }
        let lead = self.coeffs[n];
        let mut roots: Vec<C64> = if n == 1 {
            vec![-self.coeffs[0] / lead]
        } else if n == 2 {
            let (a, b, cc) = (lead, self.coeffs[1], self.coeffs[0]);
            let disc = (b * b - a * cc * 4.0).sqrt();
            // pick the sign that avoids cancellation
            let q = if (b.conj() * disc).re >= 0.0 { -(b + disc) / 2.0 } else { -(b - disc) / 2.0 };
            if q.norm() == 0.0 {
                vec![C64::new(0.0, 0.0); 2]
            } else {
                vec![q / a, cc / q]
            }
        } else {
            let mut m = DMatrix::<C64>::zeros(n, n);
            for i in 1..n {
                m[(i, i - 1)] = C64::new(1.0, 0.0);
            }
            for i in 0..n {
                m[(i, n - 1)] = -self.coeffs[i] / lead;
            }
            let schur = nalgebra::linalg::Schur::try_new(m, 1e-15, 10_000)
                .ok_or(Error::RootsNotConverged { worst: f64::INFINITY })?;
            let t = schur.unpack().1;
            (0..n).map(|i| t[(i, i)]).collect()
        };
        let dp = self.derivative();
        for r in roots.iter_mut() {
            let d = dp.eval(*r);
            if d.norm() > 0.0 {
                let step = self.eval(*r) / d;
                let cand = *r - step;
                if self.eval(cand).norm() <= self.eval(*r).norm() {
                    *r = cand;
                }
            }
        }
        let scale = self.max_abs_coeff();
        let worst = roots
            .iter()
            .map(|&r| self.eval(r).norm() / (scale * (1.0 + r.norm()).powi(n as i32)))
            .fold(0.0, f64::max);
        if worst > tol {
            return Err(Error::RootsNotConverged { worst });
        }
        roots.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap().then(a.arg().partial_cmp(&b.arg()).unwrap()));
        Ok(roots)
    }
}

impl fmt::Display for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.coeffs.iter().enumerate().map(|(k, a)| format!("({a})l^{k}")).collect();
        write!(f, "{}", terms.join(" + "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RealityKind {
    /// lambda^{2g} conj(p(1/conj lambda)) = p
    A,
    /// lambda^{g+1} conj(p(1/conj lambda)) = -p
    B,
    /// lambda^{g+1} conj(p(1/conj lambda)) = p
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RealityClass {
    pub kind: RealityKind,
    pub g: usize,
}

impl RealityClass {
    pub fn new(kind: RealityKind, g: usize) -> Self {
        RealityClass { kind, g }
    }

    pub fn degree(&self) -> usize {
        match self.kind {
            RealityKind::A => 2 * self.g,
            RealityKind::B | RealityKind::C => self.g + 1,
        }
    }

    fn sign(&self) -> f64 {
        match self.kind {
            RealityKind::B => -1.0,
            _ => 1.0,
        }
    }

    /// Coefficients of the symmetry image, as a vector of length degree+1.
    pub fn image_coeffs(&self, coeffs: &[C64]) -> Vec<C64> {
        let n = self.degree();
        let get = |k: usize| coeffs.get(k).copied().unwrap_or_default();
        (0..=n).map(|j| get(n - j).conj() * self.sign()).collect()
    }

    pub fn image(&self, p: &ComplexPoly) -> Result<ComplexPoly> {
        self.check_degree(p)?;
        Ok(ComplexPoly::new(self.image_coeffs(p.coeffs())))
    }

    fn check_degree(&self, p: &ComplexPoly) -> Result<()> {
        if p.degree() > self.degree() {
            return Err(Error::DegreeMismatch(format!(
                "degree {} exceeds {} for class {:?} with g = {}",
                p.degree(),
                self.degree(),
                self.kind,
                self.g
            )));
        }
        Ok(())
    }

    /// Max coefficient mismatch between p and its image. Coefficients above the
    /// class degree have no partner and count in full.
    pub fn residual(&self, p: &ComplexPoly) -> f64 {
        let n = self.degree();
        let img = self.image_coeffs(p.coeffs());
        let mut r: f64 = 0.0;
        for (j, im) in img.iter().enumerate() {
            r = r.max((im - p.coeff(j)).norm());
        }
        for k in (n + 1)..p.coeffs().len() {
            r = r.max(p.coeff(k).norm());
        }
        r
    }

    /// Average of p and its image, together with the residual before averaging.
    pub fn symmetrize(&self, p: &ComplexPoly) -> Result<(ComplexPoly, f64)> {
        self.check_degree(p)?;
        let res = self.residual(p);
        let img = self.image_coeffs(p.coeffs());
        let v = (0..=self.degree()).map(|j| (p.coeff(j) + img[j]) * 0.5).collect();
        Ok((ComplexPoly::new(v), res))
    }

    /// A real basis of the real vector space of polynomials in this class,
    /// each padded to length degree+1.
    pub fn real_basis(&self) -> Vec<Vec<C64>> {
        let n = self.degree();
        let s = self.sign();
        let mut out = Vec::new();
        for j in 0..=n {
            let k = n - j;
            if j < k {
                let mut re = vec![C64::default(); n + 1];
                re[j] = C64::new(1.0, 0.0);
                re[k] = C64::new(s, 0.0);
                let mut im = vec![C64::default(); n + 1];
                im[j] = I;
                im[k] = -I * s;
                out.push(re);
                out.push(im);
            } else if j == k {
                let mut m = vec![C64::default(); n + 1];
                m[j] = if s > 0.0 { C64::new(1.0, 0.0) } else { I };
                out.push(m);
            }
        }
        out
    }
}

pub fn reality_residual(p: &ComplexPoly, class: RealityClass) -> f64 {
    class.residual(p)
}

/// 2x2 matrix Laurent polynomial sum_{k=lo}^{lo+len-1} M_k lambda^k.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixLaurent {
    pub lo: i32,
    pub coeffs: Vec<Mat2>,
}

impl MatrixLaurent {
    pub fn new(lo: i32, coeffs: Vec<Mat2>) -> Self {
        MatrixLaurent { lo, coeffs }
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> Mat2 {
        if k < self.lo || k > self.hi() {
            Mat2::zeros()
        } else {
            self.coeffs[(k - self.lo) as usize]
        }
    }

    pub fn eval(&self, lambda: C64) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in self.coeffs.iter().rev() {
            acc = acc * lambda + m;
        }
        acc * lambda.powi(self.lo)
    }

    pub fn scale(&self, s: C64) -> Self {
        MatrixLaurent::new(self.lo, self.coeffs.iter().map(|m| m * s).collect())
    }

    pub fn max_trace(&self) -> f64 {
        self.coeffs.iter().map(|m| (m[(0, 0)] + m[(1, 1)]).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(mat_max_abs).fold(0.0, f64::max)
    }

    /// Product restricted to the powers lo..=hi of the result.
    pub fn mul_window(&self, o: &Self, lo: i32, hi: i32) -> Self {
        let mut out = vec![Mat2::zeros(); (hi - lo + 1) as usize];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                let k = self.lo + o.lo + (i + j) as i32;
                if k >= lo && k <= hi {
                    out[(k - lo) as usize] += a * b;
                }
            }
        }
        MatrixLaurent::new(lo, out)
    }

    /// [self, o] restricted to the powers lo..=hi.
    pub fn commutator_window(&self, o: &Self, lo: i32, hi: i32) -> Self {
        let mut out = vec![Mat2::zeros(); (hi - lo + 1) as usize];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                let k = self.lo + o.lo + (i + j) as i32;
                if k >= lo && k <= hi {
                    out[(k - lo) as usize] += a * b - b * a;
                }
            }
        }
        MatrixLaurent::new(lo, out)
    }

    /// Scalar Laurent coefficients of det, as (lowest power, coefficients).
    pub fn det(&self) -> (i32, Vec<C64>) {
        let n = self.coeffs.len();
        let mut out = vec![C64::default(); 2 * n - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in self.coeffs.iter().enumerate() {
                out[i + j] += a[(0, 0)] * b[(1, 1)] - a[(0, 1)] * b[(1, 0)];
            }
        }
        (2 * self.lo, out)
    }
}

/// Which potential invariant failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialInvariant {
    CoefficientCount,
    Traceless,
    LeadingShape,
    LeadingPositive,
    TraceCondition,
    Pairing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub invariant: PotentialInvariant,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, inv: PotentialInvariant) -> bool {
        self.violations.iter().any(|v| v.invariant == inv)
    }
}

/// xi = sum_{d=-1}^{g} xi_d lambda^d.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub matrix: MatrixLaurent,
    pub g: usize,
}

pub const POTENTIAL_TOL: f64 = 1e-10;

impl Potential {
    pub fn new(g: usize, coeffs: Vec<Mat2>) -> Result<Self> {
        if coeffs.len() != g + 2 {
            return Err(Error::InvalidInput(format!("genus {g} potential needs {} coefficients, got {}", g + 2, coeffs.len())));
        }
        Ok(Potential { matrix: MatrixLaurent::new(-1, coeffs), g })
    }

    /// lambda^{-1}(0, i/4; 0, 0) + (0, 0; i/4, 0)
    pub fn flat() -> Self {
        let z = C64::default();
        let q = C64::new(0.0, 0.25);
        Potential::new(0, vec![mat2(z, q, z, z), mat2(z, z, q, z)]).unwrap()
    }

    pub fn coeff(&self, d: i32) -> Mat2 {
        self.matrix.coeff(d)
    }

    pub fn eval(&self, lambda: C64) -> Mat2 {
        self.matrix.eval(lambda)
    }

    pub fn beta_m1(&self) -> C64 {
        self.coeff(-1)[(0, 1)]
    }

    /// max over 64 points of S^1 of the largest singular value.
    pub fn norm(&self) -> f64 {
        (0..64)
            .map(|k| {
                let l = C64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0);
                spectral_norm(&self.eval(l))
            })
            .fold(0.0, f64::max)
    }
}

/// Wire format: coefficients from lambda^-1 upward, each as row-major [m11, m12, m21, m22]
/// of [re, im] pairs. The period tau is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialJson {
    pub genus: usize,
    pub coeffs: Vec<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<[f64; 2]>,
}

impl Potential {
    pub fn to_json_value(&self, tau: Option<Complex64>) -> PotentialJson {
        let pair = |z: Complex64| [z.re, z.im];
        PotentialJson {
            genus: self.g,
            coeffs: self.matrix.coeffs.iter().map(|m| [pair(m[(0, 0)]), pair(m[(0, 1)]), pair(m[(1, 0)]), pair(m[(1, 1)])]).collect(),
            tau: tau.map(pair),
        }
    }

    pub fn from_json_value(j: &PotentialJson) -> Result<(Self, Option<Complex64>)> {
        let z = |p: [f64; 2]| Complex64::new(p[0], p[1]);
        let coeffs = j.coeffs.iter().map(|e| mat2(z(e[0]), z(e[1]), z(e[2]), z(e[3]))).collect();
        Ok((Potential::new(j.genus, coeffs)?, j.tau.map(z)))
    }
}

pub fn validate_potential(xi: &Potential) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let m = &xi.matrix;
    let scale = m.max_abs().max(1e-300);
    let tol = POTENTIAL_TOL * scale.max(1.0);
    let mut push = |invariant, residual: f64| rep.violations.push(Violation { invariant, residual });
    if m.lo != -1 || m.coeffs.len() != xi.g + 2 {
        push(PotentialInvariant::CoefficientCount, (m.coeffs.len() as f64 - (xi.g + 2) as f64).abs().max(1.0));
        return rep;
    }
    let tr = m.max_trace();
    if tr > tol {
        push(PotentialInvariant::Traceless, tr);
    }
    let x = m.coeff(-1);
    let shape = x[(0, 0)].norm().max(x[(1, 0)].norm()).max(x[(1, 1)].norm()).max(x[(0, 1)].re.abs());
    if shape > tol {
        push(PotentialInvariant::LeadingShape, shape);
    }
    if x[(0, 1)].im <= tol {
        push(PotentialInvariant::LeadingPositive, tol - x[(0, 1)].im);
    }
    let t = (x * m.coeff(0)).trace();
    if t.norm() <= tol * scale {
        push(PotentialInvariant::TraceCondition, t.norm());
    }
    let g = xi.g as i32;
    let mut pair: f64 = 0.0;
    for d in -1..=g {
        let r = m.coeff(d) + m.coeff(g - 1 - d).adjoint();
        pair = pair.max(mat_max_abs(&r));
    }
    if pair > tol {
        push(PotentialInvariant::Pairing, pair);
    }
    rep
}

/// a(lambda) = -lambda det(xi_lambda), degree 2g.
pub fn a_from_potential(xi: &Potential) -> Result<ComplexPoly> {
    let (lo, d) = xi.matrix.det();
    // -lambda * det has lowest power lo + 1 = -1
    let scale = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let n = 2 * xi.g;
    let mut coeffs = vec![C64::default(); n + 1];
    let mut stray: f64 = 0.0;
    for (k, v) in d.iter().enumerate() {
        let p = lo + 1 + k as i32;
        if p >= 0 && (p as usize) <= n {
            coeffs[p as usize] = -v;
        } else {
            stray = stray.max(v.norm());
        }
    }
    if stray > 1e-12 * scale.max(1e-300) {
        return Err(Error::DegreeMismatch(format!("-lambda det(xi) has terms outside 0..{n} (size {stray:.3e})")));
    }
    if coeffs[0].norm() <= 1e-14 * scale {
        return Err(Error::Degenerate("a(0) = 0".into()));
    }
    if coeffs[n].norm() <= 1e-14 * scale {
        return Err(Error::Degenerate(format!("leading coefficient of a (power {n}) vanishes")));
    }
    Ok(ComplexPoly::new(coeffs))
}

/// Off-diagonal potential whose a has roots alpha_d and 1/conj(alpha_d).
pub fn offdiagonal_potential(roots: &[C64]) -> Result<Potential> {
    for &a in roots {
        if a.norm() < 1e-12 || (a.norm() - 1.0).abs() < 1e-12 {
            return Err(Error::InvalidInput(format!("root {a} is on the unit circle or at 0")));
        }
    }
    let g = roots.len();
    let p: f64 = roots.iter().map(|a| a.norm()).product();
    let s = 1.0 / (4.0 * p.sqrt());
    // q = prod (1 - conj(a) lambda), r = prod (lambda - a)
    let mut q = ComplexPoly::constant(C64::new(1.0, 0.0));
    for &a in roots {
        q = q.mul(&ComplexPoly::new(vec![C64::new(1.0, 0.0), -a.conj()]));
    }
    let r = ComplexPoly::from_roots(C64::new(1.0, 0.0), roots);
    let z = C64::default();
    let coeffs = (-1..=g as i32)
        .map(|m| {
            let beta = I * s * q.coeff((m + 1) as usize);
            let gamma = if m >= 0 { I * s * r.coeff(m as usize) } else { z };
            mat2(z, beta, gamma, z)
        })
        .collect();
    Potential::new(g, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn eval_examples() {
        let p = ComplexPoly::constant(c(-1.0 / 16.0, 0.0));
        assert_eq!(p.eval(c(3.0, 2.0)), c(-1.0 / 16.0, 0.0));
        let b = ComplexPoly::from_real(&[-PI / 16.0, PI / 16.0]);
        assert!(b.eval(c(1.0, 0.0)).norm() < 1e-16);
        let q = ComplexPoly::from_real(&[1.0 / 16.0, -5.0 / 32.0, 1.0 / 16.0]);
        assert!(q.eval(c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn roots_examples() {
        let b = ComplexPoly::from_real(&[-PI / 16.0, PI / 16.0]);
        let r = b.roots(1e-12).unwrap();
        assert!(close(r[0], c(1.0, 0.0), 1e-14));
        let q = ComplexPoly::from_real(&[1.0 / 16.0, -5.0 / 32.0, 1.0 / 16.0]);
        let r = q.roots(1e-12).unwrap();
        assert!(close(r[0], c(0.5, 0.0), 1e-13) && close(r[1], c(2.0, 0.0), 1e-13));
        let al = 0.25;
        let a = ComplexPoly::from_real(&[1.0 / (16.0 * al), 0.0, 0.0])
            .mul(&ComplexPoly::from_real(&[-al, 1.0]))
            .mul(&ComplexPoly::from_real(&[-1.0, al]));
        let r = a.roots(1e-12).unwrap();
        assert!(close(r[0], c(0.25, 0.0), 1e-13) && close(r[1], c(4.0, 0.0), 1e-12));
        assert!(close(r[1], c(1.0, 0.0) / r[0].conj(), 1e-12));
    }

    #[test]
    fn roots_of_quintic() {
        let rs = [c(0.3, 0.1), c(-0.7, 0.2), c(1.5, -0.4), c(-2.0, 0.0), c(0.1, 0.9)];
        let p = ComplexPoly::from_roots(c(0.5, 0.2), &rs);
        let got = p.roots(1e-10).unwrap();
        for r in rs {
            assert!(got.iter().any(|g| close(*g, r, 1e-10)), "{r}");
        }
    }

    #[test]
    fn reality_examples() {
        let a = ComplexPoly::constant(c(-1.0 / 16.0, 0.0));
        assert_eq!(reality_residual(&a, RealityClass::new(RealityKind::A, 0)), 0.0);
        let b = ComplexPoly::from_real(&[-PI / 16.0, PI / 16.0]);
        assert_eq!(reality_residual(&b, RealityClass::new(RealityKind::B, 0)), 0.0);
        let l = ComplexPoly::from_real(&[0.0, 1.0]);
        assert!(reality_residual(&l, RealityClass::new(RealityKind::A, 0)) > 0.5);
        assert!(RealityClass::new(RealityKind::A, 0).symmetrize(&l).is_err());
    }

    #[test]
    fn real_basis_dimensions() {
        for g in 0..5 {
            for (kind, dim) in [(RealityKind::A, 2 * g + 1), (RealityKind::B, g + 2), (RealityKind::C, g + 2)] {
                let cl = RealityClass::new(kind, g);
                let basis = cl.real_basis();
                assert_eq!(basis.len(), dim);
                for v in basis {
                    assert!(cl.residual(&ComplexPoly::new(v)) < 1e-15);
                }
            }
        }
    }

    #[test]
    fn flat_seed_valid_and_a() {
        let xi = Potential::flat();
        assert!(validate_potential(&xi).is_valid());
        let a = a_from_potential(&xi).unwrap();
        assert_eq!(a.degree(), 0);
        assert!(close(a.coeff(0), c(-1.0 / 16.0, 0.0), 1e-16));
    }

    #[test]
    fn invalid_seeds() {
        let mut xi = Potential::flat();
        xi.matrix.coeffs[0][(0, 1)] = c(0.0, -0.25);
        let rep = validate_potential(&xi);
        assert!(rep.has(PotentialInvariant::LeadingPositive));
        let mut xi = Potential::flat();
        xi.matrix.coeffs[1] = Mat2::zeros();
        let rep = validate_potential(&xi);
        assert!(rep.has(PotentialInvariant::TraceCondition));
    }

    #[test]
    fn offdiagonal_examples() {
        let xi = offdiagonal_potential(&[]).unwrap();
        assert!(mat_max_abs(&(xi.coeff(-1) - Potential::flat().coeff(-1))) < 1e-16);
        assert!(mat_max_abs(&(xi.coeff(0) - Potential::flat().coeff(0))) < 1e-16);

        let xi = offdiagonal_potential(&[c(0.25, 0.0)]).unwrap();
        assert!(validate_potential(&xi).is_valid());
        let omega0 = (4.0 * xi.beta_m1().im).ln();
        assert!((omega0 - 2f64.ln()).abs() < 1e-14);
        let a = a_from_potential(&xi).unwrap();
        assert!(close(a.coeff(0), c(1.0 / 16.0, 0.0), 1e-15));
        let r = a.roots(1e-12).unwrap();
        assert!(close(r[0], c(0.25, 0.0), 1e-12) && close(r[1], c(4.0, 0.0), 1e-11));

        assert!(offdiagonal_potential(&[c(0.0, 1.0)]).is_err());
    }

    #[test]
    fn phase_on_offdiagonals_keeps_a() {
        let xi = offdiagonal_potential(&[c(0.3, 0.2), c(-0.5, 0.1)]).unwrap();
        let a = a_from_potential(&xi).unwrap();
        let ph = C64::from_polar(1.0, 0.7);
        let mut yi = xi.clone();
        for m in yi.matrix.coeffs.iter_mut() {
            m[(0, 1)] *= ph;
            m[(1, 0)] /= ph;
        }
        let b = a_from_potential(&yi).unwrap();
        assert!(a.sub(&b).max_abs_coeff() < 1e-15);
    }

    #[test]
    fn expm_matches_series() {
        let a = mat2(c(0.1, 0.2), c(0.3, -0.1), c(-0.2, 0.4), c(-0.1, -0.2));
        let mut term = identity();
        let mut sum = identity();
        for k in 1..30 {
            term = term * a / C64::new(k as f64, 0.0);
            sum += term;
        }
        assert!(mat_max_abs(&(expm_traceless(&a) - sum)) < 1e-14);
    }
}
