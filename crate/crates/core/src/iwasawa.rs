//! Loop-group factorization on the unit circle, the isospectral action and
//! simple-factor dressing.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lax::{FrameField, FrameOptions, LambdaGrid};
use crate::poly::{expm_traceless, inverse_sl2, mat2, mat_max_abs, ComplexPoly, Mat2, MatrixLaurent, Potential, C64};

fn circle(m: usize) -> Vec<C64> {
    (0..m).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).collect()
}

/// Discrete Fourier coefficients of matrix samples at the m-th roots of unity;
/// entry k holds the coefficient of lambda^k (negative k at m + k).
fn fourier(samples: &[Mat2], fft: &Arc<dyn Fft<f64>>) -> Vec<Mat2> {
    let m = samples.len();
    let mut out = vec![Mat2::zeros(); m];
    let mut buf = vec![C64::default(); m];
    for r in 0..2 {
        for c in 0..2 {
            for (b, s) in buf.iter_mut().zip(samples) {
                *b = s[(r, c)];
            }
            fft.process(&mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                o[(r, c)] = b / m as f64;
            }
        }
    }
    out
}

fn fft_plan(m: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(m)
}

fn wrap(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

/// Truncated Laurent loop sum_{k=-N}^{N} X_k lambda^k on the unit circle.
#[derive(Clone, Debug)]
pub struct LoopElement {
    pub r: f64,
    pub n: usize,
    /// coefficients for powers -n..=n
    pub coeffs: Vec<Mat2>,
    samples: Vec<Mat2>,
}

impl LoopElement {
    /// Samples f at 4(n+1) points of the unit circle and keeps powers -n..=n.
    pub fn from_fn(f: impl Fn(C64) -> Mat2 + Sync, n: usize) -> Self {
        let m = 4 * (n + 1);
        let pts = circle(m);
        let samples: Vec<Mat2> = pts.par_iter().map(|&l| f(l)).collect();
        let all = fourier(&samples, &fft_plan(m));
        let coeffs = (-(n as i64)..=n as i64).map(|k| all[wrap(k, m)]).collect();
        LoopElement { r: 1.0, n, coeffs, samples }
    }

    pub fn coeff(&self, k: i64) -> Mat2 {
        if k.unsigned_abs() as usize > self.n {
            Mat2::zeros()
        } else {
            self.coeffs[(k + self.n as i64) as usize]
        }
    }

    pub fn eval(&self, lambda: C64) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in self.coeffs.iter().rev() {
            acc = acc * lambda + m;
        }
        acc * lambda.powi(-(self.n as i32))
    }

    pub fn samples(&self) -> &[Mat2] {
        &self.samples
    }

    /// max |stored sample - truncated series| on the sample circle.
    pub fn reconstruction_residual(&self) -> f64 {
        let pts = circle(self.samples.len());
        pts.iter().zip(&self.samples).map(|(&l, s)| mat_max_abs(&(self.eval(l) - s))).fold(0.0, f64::max)
    }

    pub fn det_residual(&self) -> f64 {
        self.samples.iter().map(|s| (s.determinant() - 1.0).norm()).fold(0.0, f64::max)
    }
}

/// B in the positive loop group: powers 0..=N, B(0) = (rho, c; 0, 1/rho).
#[derive(Clone, Debug)]
pub struct PlusFactor {
    pub coeffs: Vec<Mat2>,
    /// largest negative-power Fourier coefficient seen when B was extracted
    pub negative_residual: f64,
}

impl PlusFactor {
    pub fn eval(&self, lambda: C64) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in self.coeffs.iter().rev() {
            acc = acc * lambda + m;
        }
        acc
    }

    pub fn at_zero(&self) -> Mat2 {
        self.coeffs[0]
    }

    /// Distance of B(0) from the shape (rho, c; 0, 1/rho), rho > 0.
    pub fn shape_residual(&self) -> f64 {
        let b = self.at_zero();
        let rho = b[(0, 0)];
        let mut r = b[(1, 0)].norm().max(rho.im.abs()).max(b[(1, 1)].im.abs());
        r = r.max((rho * b[(1, 1)] - 1.0).norm());
        if rho.re <= 0.0 {
            r = r.max(1.0);
        }
        r
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IwasawaOptions {
    pub n: usize,
    pub max_n: usize,
    /// solve the block system with unknowns and equations in reverse order
    pub reversed: bool,
    pub cond_max: f64,
    pub tail_tol: f64,
}

impl Default for IwasawaOptions {
    fn default() -> Self {
        IwasawaOptions { n: 64, max_n: 512, reversed: false, cond_max: 1e12, tail_tol: 1e-10 }
    }
}

/// phi = F B with F unitary on S^1 and B a plus factor. C = B^{-1} is kept
/// so that F(lambda) = phi(lambda) C(lambda) can be evaluated anywhere.
#[derive(Clone, Debug)]
pub struct Iwasawa {
    pub n: usize,
    pub c: Vec<Mat2>,
    pub b: PlusFactor,
    pub cond: f64,
    pub tail: f64,
    pub unitary_residual: f64,
    pub product_residual: f64,
}

impl Iwasawa {
    pub fn inverse_plus(&self, lambda: C64) -> Mat2 {
        let mut acc = Mat2::zeros();
        for m in self.c.iter().rev() {
            acc = acc * lambda + m;
        }
        acc
    }

    /// F(lambda) from phi(lambda); outside the closed disk the series for C
    /// is not used and F(lambda) = F(1/conj lambda)^{-*} instead.
    pub fn unitary(&self, phi: &dyn Fn(C64) -> Mat2, lambda: C64) -> Mat2 {
        if lambda.norm() <= 1.0 + 1e-12 {
            phi(lambda) * self.inverse_plus(lambda)
        } else {
            let w = C64::new(1.0, 0.0) / lambda.conj();
            inverse_sl2(&(phi(w) * self.inverse_plus(w))).adjoint()
        }
    }
}

/// Lower-triangular L with L L* = h for a 2x2 Hermitian positive matrix.
fn cholesky2(h: &Mat2) -> Result<Mat2> {
    let h00 = h[(0, 0)].re;
    if h00 <= 0.0 {
        return Err(Error::Solve("Gram block not positive".into()));
    }
    let l11 = h00.sqrt();
    let l21 = h[(1, 0)] / l11;
    let d = h[(1, 1)].re - l21.norm_sqr();
    if d <= 0.0 {
        return Err(Error::Solve("Gram block not positive".into()));
    }
    Ok(mat2(C64::new(l11, 0.0), C64::default(), l21, C64::new(d.sqrt(), 0.0)))
}

fn hermitian_eigs(h: &Mat2) -> (f64, f64) {
    let tr = (h[(0, 0)] + h[(1, 1)]).re;
    let det = h.determinant().re;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

fn iwasawa_at(phi: &(dyn Fn(C64) -> Mat2 + Sync), n: usize, opts: &IwasawaOptions) -> Result<Iwasawa> {
    let m = 8 * (n + 1);
    let pts = circle(m);
    let phis: Vec<Mat2> = pts.par_iter().map(|&l| phi(l)).collect();
    if phis.iter().any(|p| !p.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidInput("loop is not finite on the unit circle".into()));
    }
    let gram: Vec<Mat2> = phis.iter().map(|p| p.adjoint() * p).collect();
    // spectrum of the block Toeplitz matrix lies within the range of the symbol
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for g in &gram {
        let (a, b) = hermitian_eigs(g);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > opts.cond_max {
        return Err(Error::IllConditioned { cond });
    }
    let hk = fourier(&gram, &fft_plan(m));
    let dim = 2 * (n + 1);
    let pos = |j: usize| if opts.reversed { n - j } else { j };
    let mut t = DMatrix::<C64>::zeros(dim, dim);
    for k in 0..=n {
        for j in 0..=n {
            let h = hk[wrap(k as i64 - j as i64, m)];
            let (pk, pj) = (pos(k), pos(j));
            for r in 0..2 {
                for c in 0..2 {
                    t[(2 * pk + r, 2 * pj + c)] = h[(r, c)];
                }
            }
        }
    }
    let mut rhs = DMatrix::<C64>::zeros(dim, 2);
    rhs[(2 * pos(0), 0)] = C64::new(1.0, 0.0);
    rhs[(2 * pos(0) + 1, 1)] = C64::new(1.0, 0.0);
    let x = t.qr().solve(&rhs).ok_or_else(|| Error::Solve("block Toeplitz system is singular".into()))?;
    let block = |j: usize| {
        let p = pos(j);
        mat2(x[(2 * p, 0)], x[(2 * p, 1)], x[(2 * p + 1, 0)], x[(2 * p + 1, 1)])
    };
    let x0 = block(0);
    let x0h = (x0 + x0.adjoint()) * C64::new(0.5, 0.0);
    let l = cholesky2(&x0h.try_inverse().ok_or_else(|| Error::Solve("X_0 singular".into()))?)?;
    let c: Vec<Mat2> = (0..=n).map(|j| block(j) * l).collect();
    let total: f64 = c.iter().map(|m| m.norm_squared()).sum();
    let tail: f64 = c[(3 * n / 4 + 1).min(n)..].iter().map(|m| m.norm_squared()).sum::<f64>() / total.max(1e-300);

    let eval_c = |lambda: C64| {
        let mut acc = Mat2::zeros();
        for m in c.iter().rev() {
            acc = acc * lambda + m;
        }
        acc
    };
    let mut unitary_residual: f64 = 0.0;
    let mut binv = Vec::with_capacity(m);
    for (&lam, p) in pts.iter().zip(&phis) {
        let cl = eval_c(lam);
        let f = p * cl;
        unitary_residual = unitary_residual.max(mat_max_abs(&(f.adjoint() * f - Mat2::identity())));
        binv.push(inverse_sl2(&cl));
    }
    let bk = fourier(&binv, &fft_plan(m));
    let negative_residual = (1..=m / 2).map(|k| mat_max_abs(&bk[m - k])).fold(0.0, f64::max);
    let mut bc: Vec<Mat2> = bk[..=n].to_vec();
    // B(0) is known exactly
    bc[0] = l.adjoint();
    let b = PlusFactor { coeffs: bc, negative_residual };
    let mut product_residual: f64 = 0.0;
    for (&lam, p) in pts.iter().zip(&phis) {
        let f = p * eval_c(lam);
        product_residual = product_residual.max(mat_max_abs(&(f * b.eval(lam) - p)));
    }
    Ok(Iwasawa { n, c, b, cond, tail, unitary_residual, product_residual })
}

/// Iwasawa splitting of a loop given as a function on the unit circle, doubling
/// the truncation order until the tail of B^{-1} is negligible.
pub fn iwasawa_fn(phi: &(dyn Fn(C64) -> Mat2 + Sync), opts: &IwasawaOptions) -> Result<Iwasawa> {
    let mut n = opts.n.max(4);
    loop {
        let it = iwasawa_at(phi, n, opts)?;
        if it.tail <= opts.tail_tol {
            return Ok(it);
        }
        if 2 * n > opts.max_n {
            return Err(Error::Truncation { n, tail: it.tail });
        }
        log::debug!("Iwasawa tail {:.3e} at N = {n}, doubling", it.tail);
        n *= 2;
    }
}

pub fn iwasawa(phi: &LoopElement, opts: &IwasawaOptions) -> Result<Iwasawa> {
    if phi.r != 1.0 {
        return Err(Error::Unsupported("Iwasawa splitting on circles of radius r < 1".into()));
    }
    iwasawa_fn(&|l| phi.eval(l), opts)
}

#[derive(Clone, Debug)]
pub struct ActionResult {
    pub potential: Potential,
    /// max coefficient drift of a = -lambda det xi
    pub a_residual: f64,
    /// largest Fourier coefficient of B xi B^{-1} outside the powers -1..=g
    pub band_residual: f64,
    pub iwasawa_n: usize,
}

/// pi(t) xi = B xi B^{-1} where exp(xi sum_i t_i lambda^{-i}) = F B. Slots i >= g
/// are allowed and act trivially.
pub fn isospectral_action(t: &[C64], xi: &Potential, opts: &IwasawaOptions) -> Result<ActionResult> {
    let weight = |l: C64| t.iter().enumerate().map(|(i, &ti)| ti * l.powi(-(i as i32))).sum::<C64>();
    let growth = circle(64).iter().map(|&l| mat_max_abs(&(xi.eval(l) * weight(l)))).fold(0.0, f64::max);
    if growth > 60.0 {
        return Err(Error::Truncation { n: opts.n, tail: growth });
    }
    let phi = |l: C64| expm_traceless(&(xi.eval(l) * weight(l)));
    let it = iwasawa_fn(&phi, opts)?;
    let g = xi.g as i64;
    let m = 8 * (it.n + 1);
    let pts = circle(m);
    let conj: Vec<Mat2> = pts
        .par_iter()
        .map(|&l| {
            let c = it.inverse_plus(l);
            inverse_sl2(&c) * xi.eval(l) * c
        })
        .collect();
    let coeffs = fourier(&conj, &fft_plan(m));
    let mut band_residual: f64 = 0.0;
    for k in -(m as i64 / 2)..(m as i64 / 2) {
        if k < -1 || k > g {
            band_residual = band_residual.max(mat_max_abs(&coeffs[wrap(k, m)]));
        }
    }
    let out = Potential::new(xi.g, (-1..=g).map(|k| coeffs[wrap(k, m)]).collect())?;
    let (_, d0) = xi.matrix.det();
    let (_, d1) = out.matrix.det();
    let a_residual = d0.iter().zip(&d1).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok(ActionResult { potential: out, a_residual, band_residual, iwasawa_n: it.n })
}

/// Unit representative of a line in CP^1 with first nonzero component real positive.
pub fn normalize_line(v: [C64; 2]) -> Result<[C64; 2]> {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if !(n > 1e-300) || !n.is_finite() {
        return Err(Error::InvalidInput("zero vector does not span a line".into()));
    }
    let lead = if v[0].norm() > 1e-14 * n { v[0] } else { v[1] };
    let ph = lead.conj() / lead.norm();
    Ok([v[0] * ph / n, v[1] * ph / n])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimpleFactorSpec {
    pub line: [C64; 2],
    pub alpha0: C64,
}

impl SimpleFactorSpec {
    pub fn new(line: [C64; 2], alpha0: C64) -> Result<Self> {
        let r = alpha0.norm();
        if !(r > 1e-12) || r >= 1.0 - 1e-12 {
            return Err(Error::InvalidInput(format!("simple factor needs 0 < |alpha0| < 1, got {alpha0}")));
        }
        Ok(SimpleFactorSpec { line: normalize_line(line)?, alpha0 })
    }

    /// (lambda - alpha0) / (1 - conj(alpha0) lambda), unimodular on S^1.
    pub fn blaschke(&self, lambda: C64) -> C64 {
        (lambda - self.alpha0) / (1.0 - self.alpha0.conj() * lambda)
    }
}

fn projector(v: [C64; 2]) -> Mat2 {
    mat2(v[0] * v[0].conj(), v[0] * v[1].conj(), v[1] * v[0].conj(), v[1] * v[1].conj())
}

/// h = Q_1 (sqrt(p) pi_L^perp + pi_L / sqrt(p)), p the Blaschke factor at alpha0,
/// with the constant unitary Q_1 chosen so that h(0) = (rho, c; 0, 1/rho).
#[derive(Clone, Debug)]
pub struct SimpleFactor {
    pub spec: SimpleFactorSpec,
    pub q1: Mat2,
    proj: Mat2,
}

impl SimpleFactor {
    pub fn eval(&self, lambda: C64) -> Mat2 {
        let s = self.spec.blaschke(lambda).sqrt();
        self.q1 * ((Mat2::identity() - self.proj) * s + self.proj / s)
    }

    /// h without the scalar sqrt(p): q1 (pi^perp + pi / p). Ratios of these are what
    /// dressing uses, so no branch of the square root has to be chosen.
    pub fn eval_unscaled(&self, lambda: C64) -> Mat2 {
        self.q1 * ((Mat2::identity() - self.proj) + self.proj / self.spec.blaschke(lambda))
    }

    /// Inverse of `eval_unscaled`.
    pub fn inverse_unscaled(&self, lambda: C64) -> Mat2 {
        ((Mat2::identity() - self.proj) + self.proj * self.spec.blaschke(lambda)) * self.q1.adjoint()
    }
}

pub fn simple_factor(spec: &SimpleFactorSpec) -> SimpleFactor {
    let proj = projector(spec.line);
    let s = spec.blaschke(C64::default()).sqrt();
    let m0 = (Mat2::identity() - proj) * s + proj / s;
    let (a, b) = (m0[(0, 0)], m0[(1, 0)]);
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let (qa, qb) = (a / n, b / n);
    // Q = [q, q^perp] with det Q = 1; Q_1 = Q^*
    let q = mat2(qa, -qb.conj(), qb, qa.conj());
    SimpleFactor { spec: *spec, q1: q.adjoint(), proj }
}

/// Frame dressed by a simple factor, with the moving line L'(z) at every z.
#[derive(Clone, Debug)]
pub struct DressedFrame {
    pub frame: FrameField,
    pub lines: Vec<[C64; 2]>,
    pub spec: SimpleFactorSpec,
}

/// F = h_{L'} F~ h_{L'(z)}^{-1} with L'(z) = F~(alpha0)(z)^* L'. The dressed frame
/// is reported on the input lambda grid without alpha0 and 1/conj(alpha0); its
/// Killing field is P h_{L'(z)} zeta~ h_{L'(z)}^{-1} with P = -(lambda - alpha0)(1 - conj(alpha0) lambda)/|alpha0|.
pub fn dress(ft: &FrameField, spec: &SimpleFactorSpec) -> Result<DressedFrame> {
    let a0 = spec.alpha0;
    let ff;
    let ft = match ft.lambda_index(a0) {
        Some(_) => ft,
        None => {
            ff = ft.recompute(ft.lambdas.clone().with(&[a0])?, &FrameOptions::default())?;
            &ff
        }
    };
    let ka = ft.lambda_index(a0).expect("alpha0 was added to the grid");
    let far = C64::new(1.0, 0.0) / a0.conj();
    let keep: Vec<usize> = (0..ft.lambdas.len())
        .filter(|&k| {
            let l = ft.lambdas.points[k];
            (l - a0).norm() > 1e-9 && (l - far).norm() > 1e-9 * far.norm()
        })
        .collect();
    let lambdas = LambdaGrid::new(keep.iter().map(|&k| ft.lambdas.points[k]).collect())?;
    let h1 = simple_factor(spec);
    let g = ft.potential.g;
    let m = 4 * (g + 8);
    let pts = circle(m);
    let plan = fft_plan(m);
    let poly = |l: C64| -(l - a0) * (1.0 - a0.conj() * l) / a0.norm();
    let rows: Vec<Result<(Vec<Mat2>, MatrixLaurent, [C64; 2])>> = (0..ft.zs.len())
        .into_par_iter()
        .map(|zi| {
            let fa = ft.at(zi, ka);
            let w = fa.adjoint() * nalgebra::Vector2::new(spec.line[0], spec.line[1]);
            let line = normalize_line([w[0], w[1]])?;
            let h2 = simple_factor(&SimpleFactorSpec { line, alpha0: a0 });
            let frames = keep
                .iter()
                .map(|&k| {
                    let l = ft.lambdas.points[k];
                    h1.eval_unscaled(l) * ft.at(zi, k) * h2.inverse_unscaled(l)
                })
                .collect();
            let zeta = &ft.killing[zi];
            let samples: Vec<Mat2> = pts.iter().map(|&l| h2.eval_unscaled(l) * zeta.eval(l) * h2.inverse_unscaled(l) * poly(l)).collect();
            let co = fourier(&samples, &plan);
            let k = (-1..=g as i64 + 2).map(|p| co[wrap(p, m)]).collect();
            Ok((frames, MatrixLaurent::new(-1, k), line))
        })
        .collect();
    let rows: Vec<_> = rows.into_iter().collect::<Result<_>>()?;
    let mut frames = Vec::with_capacity(rows.len());
    let mut killing = Vec::with_capacity(rows.len());
    let mut lines = Vec::with_capacity(rows.len());
    for (f, k, l) in rows {
        frames.push(f);
        killing.push(k);
        lines.push(l);
    }
    let potential = Potential { matrix: killing[ft.z_index(C64::default()).unwrap_or(0)].clone(), g: g + 2 };
    let frame = FrameField::from_parts(potential, lambdas, ft.layout.clone(), ft.zs.clone(), killing, frames);
    Ok(DressedFrame { frame, lines, spec: *spec })
}

/// Inverse of `dress` using the stored moving lines.
pub fn undress(d: &DressedFrame) -> FrameField {
    let h1 = simple_factor(&d.spec);
    let f = &d.frame;
    let frames: Vec<Vec<Mat2>> = f
        .frames
        .iter()
        .zip(&d.lines)
        .map(|(row, &line)| {
            let h2 = simple_factor(&SimpleFactorSpec { line, alpha0: d.spec.alpha0 });
            row.iter().zip(&f.lambdas.points).map(|(m, &l)| h1.inverse_unscaled(l) * m * h2.eval_unscaled(l)).collect()
        })
        .collect();
    let killing = f.killing.clone();
    FrameField::from_parts(f.potential.clone(), f.lambdas.clone(), f.layout.clone(), f.zs.clone(), killing, frames)
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub potential: Potential,
    /// real-symmetric divisor, lambda^2 conj(p(1/conj lambda)) = p
    pub p: ComplexPoly,
    /// the reduced surface is the original one reparametrized by z -> p(0) z
    pub z_scale: C64,
    pub zeros: Vec<C64>,
}

/// Divides xi by the real-symmetric polynomial built from the common zeros of
/// its entries. Without zeros above `tol` the potential is returned unchanged.
pub fn reduce_potential(xi: &Potential, tol: f64) -> Result<Reduced> {
    let g = xi.g;
    let entry = |r: usize, c: usize| ComplexPoly::new((0..=g + 1).map(|k| xi.matrix.coeff(k as i32 - 1)[(r, c)]).collect());
    let (e11, e12, e21) = (entry(0, 0), entry(0, 1), entry(1, 0));
    let scale = xi.matrix.max_abs();
    let unchanged = || Reduced { potential: xi.clone(), p: ComplexPoly::constant(C64::new(1.0, 0.0)), z_scale: C64::new(1.0, 0.0), zeros: vec![] };
    if e12.degree() == 0 {
        log::info!("reduce_potential: no common zero");
        return Ok(unchanged());
    }
    let cands = e12.roots(1e-8)?;
    let common: Vec<C64> = cands
        .into_iter()
        .filter(|&r| {
            let w = scale * (1.0 + r.norm()).powi(g as i32 + 1);
            e11.eval(r).norm() <= tol.sqrt() * w && e21.eval(r).norm() <= tol.sqrt() * w
        })
        .collect();
    // pair alpha with 1/conj(alpha); zeros on S^1 come twice
    let mut used = vec![false; common.len()];
    let mut inner = Vec::new();
    for i in 0..common.len() {
        if used[i] {
            continue;
        }
        let r = common[i];
        let partner = C64::new(1.0, 0.0) / r.conj();
        let j = (0..common.len()).filter(|&j| j != i && !used[j]).min_by(|&a, &b| {
            (common[a] - partner).norm().partial_cmp(&(common[b] - partner).norm()).unwrap()
        });
        if let Some(j) = j {
            if (common[j] - partner).norm() < tol.sqrt().max(1e-6) * (1.0 + partner.norm()) {
                used[i] = true;
                used[j] = true;
                let a = if r.norm() <= common[j].norm() { r } else { common[j] };
                if (a.norm() - 1.0).abs() < 1e-6 {
                    let u = (r + common[j]) / 2.0;
                    inner.push(u / u.norm());
                } else {
                    inner.push(a);
                }
            }
        }
    }
    if inner.is_empty() {
        log::info!("reduce_potential: no common zero above tolerance");
        return Ok(unchanged());
    }
    let mut p = ComplexPoly::constant(C64::new(1.0, 0.0));
    for &a in &inner {
        p = p.mul(&ComplexPoly::new(vec![-a, C64::new(1.0, 0.0)])).mul(&ComplexPoly::new(vec![C64::new(1.0, 0.0), -a.conj()]));
    }
    let gn = g - 2 * inner.len();
    let quot = |r: usize, c: usize| -> Result<ComplexPoly> {
        let (q, rem) = entry(r, c).div_rem(&p);
        if rem.max_abs_coeff() > tol.sqrt() * scale.max(1.0) {
            return Err(Error::Solve(format!("division by p leaves remainder {:.3e}", rem.max_abs_coeff())));
        }
        Ok(q)
    };
    let (q11, q12, q21) = (quot(0, 0)?, quot(0, 1)?, quot(1, 0)?);
    let beta = q12.coeff(0);
    // real rescaling keeps the pairing; only the sign of beta_-1 can be fixed this way
    let sign = if beta.im < 0.0 { -1.0 } else { 1.0 };
    if beta.re.abs() > 1e-8 * beta.norm() {
        log::warn!("reduced potential has beta_-1 = {beta} off iR; a Sym-point rotation is needed");
    }
    let coeffs = (0..=gn + 1)
        .map(|k| {
            let a = q11.coeff(k) * sign;
            mat2(a, q12.coeff(k) * sign, q21.coeff(k) * sign, -a)
        })
        .collect();
    let z_scale = p.coeff(0);
    Ok(Reduced { potential: Potential::new(gn, coeffs)?, p, z_scale, zeros: inner })
}

/// Unitary combination t lambda^{-i} + conj(t) lambda^{i+1-g} as a slot vector.
pub fn unitary_slots(g: usize, i: usize, t: C64) -> Vec<C64> {
    let mut v = vec![C64::default(); g.max(1)];
    v[i] += t;
    v[g - 1 - i] += t.conj();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::{integrate_frame, integrate_lax};
    use crate::poly::{c, offdiagonal_potential, validate_potential};

    fn diag(a: f64, b: f64) -> Mat2 {
        mat2(c(a, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(b, 0.0))
    }

    #[test]
    fn constant_plus_factor() {
        let phi = LoopElement::from_fn(|_| diag(2.0, 0.5), 8);
        assert!(phi.reconstruction_residual() < 1e-10);
        assert!(phi.det_residual() < 1e-14);
        let it = iwasawa(&phi, &IwasawaOptions { n: 8, ..Default::default() }).unwrap();
        let f = it.unitary(&|_| diag(2.0, 0.5), c(0.3, 0.8));
        assert!(mat_max_abs(&(f - Mat2::identity())) < 1e-10);
        assert!(mat_max_abs(&(it.b.at_zero() - diag(2.0, 0.5))) < 1e-10);
        assert!(it.b.shape_residual() < 1e-10);
    }

    #[test]
    fn unitary_loop_has_trivial_b() {
        let xi = Potential::flat();
        let phi = |l: C64| expm_traceless(&((xi.eval(l) + xi.eval(l) * l) * c(0.7, 0.0)));
        let it = iwasawa_fn(&phi, &IwasawaOptions::default()).unwrap();
        for k in 0..it.b.coeffs.len() {
            let want = if k == 0 { Mat2::identity() } else { Mat2::zeros() };
            assert!(mat_max_abs(&(it.b.coeffs[k] - want)) < 1e-9, "k={k}");
        }
    }

    #[test]
    fn flat_exponential_matches_frame() {
        let xi = Potential::flat();
        let z = c(0.3, 0.1);
        let phi = |l: C64| expm_traceless(&(xi.eval(l) * z));
        let it = iwasawa_fn(&phi, &IwasawaOptions::default()).unwrap();
        assert!(it.unitary_residual < 1e-8 && it.product_residual < 1e-8, "{} {}", it.unitary_residual, it.product_residual);
        assert!(it.b.shape_residual() < 1e-8 && it.b.negative_residual < 1e-8);
        let grid = LambdaGrid::unit_circle(16).with(&[c(0.4, 0.2), c(2.0, -1.0)]).unwrap();
        let ff = integrate_frame(&xi, &grid, &[z]).unwrap();
        let zi = ff.z_index(z).unwrap();
        for (k, &l) in grid.points.iter().enumerate() {
            let f = it.unitary(&phi, l);
            assert!(mat_max_abs(&(f - ff.at(zi, k))) < 1e-6, "lambda {l}");
        }
    }

    #[test]
    fn orderings_agree() {
        let xi = offdiagonal_potential(&[c(0.3, 0.2)]).unwrap();
        let z = c(0.4, -0.3);
        let phi = |l: C64| expm_traceless(&(xi.eval(l) * z));
        let a = iwasawa_fn(&phi, &IwasawaOptions::default()).unwrap();
        let b = iwasawa_fn(&phi, &IwasawaOptions { reversed: true, ..Default::default() }).unwrap();
        for l in circle(7) {
            assert!(mat_max_abs(&(a.unitary(&phi, l) - b.unitary(&phi, l))) < 1e-10);
        }
    }

    #[test]
    fn ill_conditioned_rejected() {
        let phi = |_l: C64| diag(1e7, 1e-7);
        assert!(matches!(iwasawa_fn(&phi, &IwasawaOptions::default()), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn action_matches_lax_flow() {
        let xi = offdiagonal_potential(&[c(0.3, 0.2), c(-0.5, 0.1)]).unwrap();
        let z = c(0.35, 0.2);
        let r = isospectral_action(&[z, c(0.0, 0.0)], &xi, &IwasawaOptions::default()).unwrap();
        assert!(r.a_residual < 1e-8 && r.band_residual < 1e-8, "{} {}", r.a_residual, r.band_residual);
        let kf = integrate_lax(&xi, &[c(0.0, 0.0), z]).unwrap();
        let want = kf.zetas.last().unwrap();
        for d in -1..=2 {
            assert!(mat_max_abs(&(r.potential.coeff(d) - want.coeff(d))) < 1e-6, "d={d}");
        }
        let zero = isospectral_action(&[c(0.0, 0.0); 2], &xi, &IwasawaOptions::default()).unwrap();
        assert!((0..4).all(|k| mat_max_abs(&(zero.potential.matrix.coeffs[k] - xi.matrix.coeffs[k])) < 1e-12));
    }

    #[test]
    fn action_commutes_and_trivial_slots() {
        let xi = offdiagonal_potential(&[c(0.3, 0.2), c(-0.5, 0.1)]).unwrap();
        let o = IwasawaOptions::default();
        let t = [c(0.2, 0.1), c(-0.1, 0.15)];
        let s = [c(-0.05, 0.2), c(0.1, -0.1)];
        let ts: Vec<C64> = t.iter().zip(&s).map(|(a, b)| a + b).collect();
        let a = isospectral_action(&s, &isospectral_action(&t, &xi, &o).unwrap().potential, &o).unwrap();
        let b = isospectral_action(&ts, &xi, &o).unwrap();
        for d in -1..=2 {
            assert!(mat_max_abs(&(a.potential.coeff(d) - b.potential.coeff(d))) < 1e-6);
        }
        let slot = isospectral_action(&[c(0.0, 0.0), c(0.0, 0.0), c(0.3, -0.4), c(0.2, 0.0)], &xi, &o).unwrap();
        assert!((0..4).all(|k| mat_max_abs(&(slot.potential.matrix.coeffs[k] - xi.matrix.coeffs[k])) < 1e-8));
        let u = isospectral_action(&unitary_slots(2, 0, c(0.4, 0.3)), &xi, &o).unwrap();
        assert!((0..4).all(|k| mat_max_abs(&(u.potential.matrix.coeffs[k] - xi.matrix.coeffs[k])) < 1e-7));
    }

    #[test]
    fn simple_factor_shape() {
        let sp = SimpleFactorSpec::new([c(1.0, 0.0), c(0.0, 0.0)], c(0.5, 0.0)).unwrap();
        let h = simple_factor(&sp);
        let h0 = h.eval(c(0.0, 0.0));
        assert!(h0[(1, 0)].norm() < 1e-12 && h0[(0, 0)].im.abs() < 1e-12 && h0[(0, 0)].re > 0.0, "{h0}");
        let sp = SimpleFactorSpec::new([c(0.3, 0.1), c(-0.2, 0.7)], c(0.2, 0.4)).unwrap();
        let h = simple_factor(&sp);
        let h0 = h.eval(c(0.0, 0.0));
        assert!(h0[(1, 0)].norm() < 1e-12 && h0[(0, 0)].im.abs() < 1e-12 && h0[(0, 0)].re > 0.0);
        for l in [c(0.3, -0.9), c(1.7, 0.2), c(-0.1, 0.05)] {
            assert!((h.eval(l).determinant() - 1.0).norm() < 1e-12);
        }
        for l in circle(9) {
            let m = h.eval(l);
            assert!(mat_max_abs(&(m.adjoint() * m - Mat2::identity())) < 1e-12);
        }
        assert!(SimpleFactorSpec::new([c(1.0, 0.0), c(0.0, 0.0)], c(0.6, 0.8)).is_err());
        assert!(SimpleFactorSpec::new([c(0.0, 0.0), c(0.0, 0.0)], c(0.5, 0.0)).is_err());
        let l = SimpleFactorSpec::new([c(0.0, 0.0), c(0.0, -2.0)], c(0.5, 0.0)).unwrap().line;
        assert_eq!(l[1], c(1.0, 0.0));
    }

    #[test]
    fn reduce_round_trip() {
        let flat = Potential::flat();
        let p = ComplexPoly::from_real(&[-0.5, 1.25, -0.5]);
        let coeffs: Vec<Mat2> = (0..4)
            .map(|k| {
                let mut m = Mat2::zeros();
                for j in 0..=k {
                    m += flat.matrix.coeff(j as i32 - 1) * p.coeff(k - j);
                }
                -m
            })
            .collect();
        let xi = Potential::new(2, coeffs).unwrap();
        assert!(validate_potential(&xi).is_valid());
        let r = reduce_potential(&xi, 1e-10).unwrap();
        assert_eq!(r.potential.g, 0);
        for d in -1..=0 {
            assert!(mat_max_abs(&(r.potential.coeff(d) - flat.coeff(d))) < 1e-10);
        }
        let same = reduce_potential(&flat, 1e-10).unwrap();
        assert_eq!(same.potential, flat);
        let xi1 = offdiagonal_potential(&[c(0.3, 0.2)]).unwrap();
        assert!(reduce_potential(&xi1, 1e-10).unwrap().zeros.is_empty());
    }

    #[test]
    fn reduce_zero_on_circle() {
        // (lambda + 1)^2 xi_flat: a has a double root at -1
        let flat = Potential::flat();
        let p = ComplexPoly::from_real(&[1.0, 2.0, 1.0]);
        let coeffs: Vec<Mat2> = (0..4)
            .map(|k| {
                let mut m = Mat2::zeros();
                for j in 0..=k {
                    m += flat.matrix.coeff(j as i32 - 1) * p.coeff(k - j);
                }
                m
            })
            .collect();
        let xi = Potential::new(2, coeffs).unwrap();
        let r = reduce_potential(&xi, 1e-10).unwrap();
        assert_eq!(r.zeros.len(), 1);
        assert!((r.zeros[0] + 1.0).norm() < 1e-6);
        for d in -1..=0 {
            assert!(mat_max_abs(&(r.potential.coeff(d) - flat.coeff(d))) < 1e-6);
        }
    }

    #[test]
    fn dress_flat_round_trip_and_period() {
        let a0 = c(7.0 - 4.0 * 3f64.sqrt(), 0.0);
        let xi = Potential::flat();
        let grid = LambdaGrid::unit_circle(8).with(&[a0, c(0.5, 0.3)]).unwrap();
        let tau = c(2.0 * PI, 0.0);
        let path = [c(0.0, 0.0), c(0.0, 0.3), c(0.0, 0.3) + tau, tau];
        let ft = integrate_frame(&xi, &grid, &path).unwrap();
        let sp = SimpleFactorSpec::new([c(1.0, 0.0), c(0.4, -0.3)], a0).unwrap();
        let d = dress(&ft, &sp).unwrap();
        assert!(d.frame.unitary_drift < 1e-7, "{}", d.frame.unitary_drift);
        assert!(d.frame.det_drift < 1e-9);
        let back = undress(&d);
        for (zi, row) in back.frames.iter().enumerate() {
            for (k, &l) in back.lambdas.points.iter().enumerate() {
                let j = ft.lambda_index(l).unwrap();
                assert!(mat_max_abs(&(row[k] - ft.at(zi, j))) < 1e-6);
            }
        }
        let it = d.frame.z_index(tau).unwrap();
        let m1 = d.frame.at(it, 0);
        assert!(mat_max_abs(&(m1 + Mat2::identity())) < 1e-6, "{m1}");
        // the dressed Killing field is a polynomial potential whose own frame agrees
        let dxi = d.frame.potential.clone();
        assert!(validate_potential(&dxi).is_valid(), "{:?}", validate_potential(&dxi));
        let direct = integrate_frame(&dxi, &d.frame.lambdas, &path).unwrap();
        for zi in 0..path.len() {
            for k in 0..direct.lambdas.len() {
                assert!(mat_max_abs(&(direct.at(zi, k) - d.frame.at(zi, k))) < 1e-6, "z {zi} k {k}");
            }
        }
    }
}
