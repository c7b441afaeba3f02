//! Polynomial Killing fields, extended frames and monodromy.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poly::{inverse_sl2, mat2, mat_max_abs, ComplexPoly, Mat2, MatrixLaurent, Potential, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGrid {
    pub points: Vec<C64>,
    pub unit_mask: Vec<bool>,
}

const UNIT_TOL: f64 = 1e-12;

impl LambdaGrid {
    pub fn new(points: Vec<C64>) -> Result<Self> {
        let mut g = LambdaGrid { points: Vec::new(), unit_mask: Vec::new() };
        g.push(C64::new(1.0, 0.0))?;
        for p in points {
            g.push(p)?;
        }
        Ok(g)
    }

    /// n-th roots of unity (index 0 is lambda = 1).
    pub fn unit_circle(n: usize) -> Self {
        let pts = (0..n).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)).collect();
        Self::new(pts).expect("roots of unity are admissible")
    }

    /// 64 points on S^1, lambda = 1 and the roots of a.
    pub fn default_for(a: &ComplexPoly) -> Result<Self> {
        let mut g = Self::unit_circle(64);
        if a.degree() > 0 {
            for r in a.roots(1e-10)? {
                g.push(r)?;
            }
        }
        Ok(g)
    }

    pub fn push(&mut self, p: C64) -> Result<usize> {
        if p.norm() < 1e-300 || !p.re.is_finite() || !p.im.is_finite() {
            return Err(Error::InvalidInput("lambda grid point at 0".into()));
        }
        if let Some(k) = self.index_of(p) {
            return Ok(k);
        }
        self.points.push(p);
        self.unit_mask.push((p.norm() - 1.0).abs() < UNIT_TOL);
        Ok(self.points.len() - 1)
    }

    pub fn with(mut self, pts: &[C64]) -> Result<Self> {
        for &p in pts {
            self.push(p)?;
        }
        Ok(self)
    }

    pub fn index_of(&self, p: C64) -> Option<usize> {
        self.points.iter().position(|q| (q - p).norm() < 1e-13 * (1.0 + p.norm()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// dz and dzbar coefficients of alpha(zeta), each a 2-term Laurent polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaForm {
    pub dz: MatrixLaurent,
    pub dzbar: MatrixLaurent,
}

impl AlphaForm {
    pub fn eval(&self, lambda: C64) -> (Mat2, Mat2) {
        (self.dz.eval(lambda), self.dzbar.eval(lambda))
    }

    /// alpha applied to the tangent vector dz.
    pub fn along(&self, lambda: C64, dz: C64) -> Mat2 {
        let (a, b) = self.eval(lambda);
        a * dz + b * dz.conj()
    }
}

/// alpha(zeta) = (a/2, beta_-1/lambda; gamma_0, -a/2) dz - (conj(a)/2, conj(gamma_0); conj(beta_-1) lambda, -conj(a)/2) dzbar
/// where a = alpha_0 is the diagonal entry of zeta_0. The half on the diagonal is
/// what keeps beta_-1 in iR+ under the Lax flow; with it alpha_0 = omega_z.
/// A beta_-1 off iR+ is accepted: the formula is covariant under the
/// rotations lambda -> e^{i theta} lambda, z -> e^{i phi} z used for Sym points.
pub fn alpha_from_zeta(zeta: &MatrixLaurent) -> Result<AlphaForm> {
    let beta = zeta.coeff(-1)[(0, 1)];
    if beta.norm() == 0.0 || !beta.norm().is_finite() {
        return Err(Error::InvalidInput(format!("beta_-1 = {beta} must be finite and nonzero")));
    }
    let z0 = zeta.coeff(0);
    let (al, ga) = (z0[(0, 0)] * 0.5, z0[(1, 0)]);
    let zero = C64::default();
    let dz = MatrixLaurent::new(-1, vec![mat2(zero, beta, zero, zero), mat2(al, zero, ga, -al)]);
    let dzbar = MatrixLaurent::new(0, vec![mat2(-al.conj(), -ga.conj(), zero, al.conj()), mat2(zero, zero, -beta.conj(), zero)]);
    Ok(AlphaForm { dz, dzbar })
}

/// e^omega = 4 |beta_-1| (= 4 Im beta_-1 for potentials in normal form)
pub fn omega_of(zeta: &MatrixLaurent) -> f64 {
    (4.0 * zeta.coeff(-1)[(0, 1)].norm()).ln()
}

fn lax_rhs(zeta: &MatrixLaurent, dz: C64) -> Result<MatrixLaurent> {
    let al = alpha_from_zeta(zeta)?;
    let (lo, hi) = (zeta.lo, zeta.hi());
    let a = zeta.commutator_window(&al.dz, lo, hi).scale(dz);
    let b = zeta.commutator_window(&al.dzbar, lo, hi).scale(dz.conj());
    Ok(add(&a, &b))
}

fn add(a: &MatrixLaurent, b: &MatrixLaurent) -> MatrixLaurent {
    MatrixLaurent::new(a.lo, a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect())
}

fn axpy(a: &MatrixLaurent, s: f64, b: &MatrixLaurent) -> MatrixLaurent {
    MatrixLaurent::new(a.lo, a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y * C64::new(s, 0.0)).collect())
}

/// One RK4 step of dzeta/ds = [zeta, alpha(zeta)(dz)] for s in [0, 1].
fn lax_step(zeta: &MatrixLaurent, dz: C64) -> Result<MatrixLaurent> {
    let k1 = lax_rhs(zeta, dz)?;
    let k2 = lax_rhs(&axpy(zeta, 0.5, &k1), dz)?;
    let k3 = lax_rhs(&axpy(zeta, 0.5, &k2), dz)?;
    let k4 = lax_rhs(&axpy(zeta, 1.0, &k3), dz)?;
    let mut out = zeta.clone();
    for (k, m) in out.coeffs.iter_mut().enumerate() {
        *m += (k1.coeffs[k] + k2.coeffs[k] * C64::new(2.0, 0.0) + k3.coeffs[k] * C64::new(2.0, 0.0) + k4.coeffs[k]) / C64::new(6.0, 0.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameOptions {
    pub max_step: f64,
    /// divide F by sqrt(det F) once |det F - 1| exceeds this
    pub det_renorm: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions { max_step: 0.01, det_renorm: 1e-10 }
    }
}

fn substeps(dz: C64, max_step: f64) -> usize {
    ((dz.norm() / max_step).ceil() as usize).max(1)
}

/// Zeta at the end of one frame step together with alpha at the start, middle and end.
struct StepAlpha {
    dz: C64,
    alpha: [AlphaForm; 3],
}

/// Integrates zeta over the straight segment z0 -> z1 with `n` frame steps; the
/// Lax equation is solved at half the frame step so alpha is known at midpoints.
fn lax_segment(zeta0: &MatrixLaurent, z0: C64, z1: C64, n: usize) -> Result<(MatrixLaurent, Vec<StepAlpha>)> {
    let dz = (z1 - z0) / n as f64;
    let mut zeta = zeta0.clone();
    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let a0 = alpha_from_zeta(&zeta)?;
        let mid = lax_step(&zeta, dz * 0.5)?;
        let am = alpha_from_zeta(&mid)?;
        let end = lax_step(&mid, dz * 0.5)?;
        if !end.max_abs().is_finite() || end.max_abs() > 1e12 {
            return Err(Error::BlowUp { z: z0 + dz * (k + 1) as f64, reason: "Killing field diverged".into() });
        }
        let a1 = alpha_from_zeta(&end)?;
        steps.push(StepAlpha { dz, alpha: [a0, am, a1] });
        zeta = end;
    }
    Ok((zeta, steps))
}

fn frame_steps(f0: Mat2, lambda: C64, steps: &[StepAlpha], opts: &FrameOptions, renorms: &mut usize) -> Mat2 {
    let mut f = f0;
    for st in steps {
        let x0 = st.alpha[0].along(lambda, st.dz);
        let xm = st.alpha[1].along(lambda, st.dz);
        let x1 = st.alpha[2].along(lambda, st.dz);
        let k1 = f * x0;
        let k2 = (f + k1 * C64::new(0.5, 0.0)) * xm;
        let k3 = (f + k2 * C64::new(0.5, 0.0)) * xm;
        let k4 = (f + k3) * x1;
        f += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) / C64::new(6.0, 0.0);
        let det = f.determinant();
        if (det - 1.0).norm() > opts.det_renorm {
            f /= det.sqrt();
            *renorms += 1;
        }
    }
    f
}

/// -lambda det zeta as Laurent coefficients for powers -1..=2g+1.
fn a_coeffs(zeta: &MatrixLaurent) -> Vec<C64> {
    zeta.det().1.iter().map(|v| -v).collect()
}

fn a_drift(zeta: &MatrixLaurent, a0: &[C64]) -> f64 {
    a_coeffs(zeta).iter().zip(a0).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct KillingField {
    pub seed: Potential,
    pub points: Vec<C64>,
    pub zetas: Vec<MatrixLaurent>,
    /// max over nodes of the coefficient drift of -lambda det zeta
    pub det_drift: f64,
}

impl KillingField {
    pub fn omega(&self) -> Vec<f64> {
        self.zetas.iter().map(omega_of).collect()
    }
}

pub fn integrate_lax(xi: &Potential, path: &[C64]) -> Result<KillingField> {
    integrate_lax_with(xi, path, &FrameOptions::default())
}

pub fn integrate_lax_with(xi: &Potential, path: &[C64], opts: &FrameOptions) -> Result<KillingField> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty z-path".into()));
    }
    let a0 = a_coeffs(&xi.matrix);
    let mut zeta = if path[0] == C64::default() {
        xi.matrix.clone()
    } else {
        lax_segment(&xi.matrix, C64::default(), path[0], substeps(path[0], opts.max_step))?.0
    };
    let mut zetas = vec![zeta.clone()];
    let mut drift = a_drift(&zeta, &a0);
    for w in path.windows(2) {
        let n = substeps(w[1] - w[0], opts.max_step);
        zeta = lax_segment(&zeta, w[0], w[1], n)?.0;
        drift = drift.max(a_drift(&zeta, &a0));
        zetas.push(zeta.clone());
    }
    Ok(KillingField { seed: xi.clone(), points: path.to_vec(), zetas, det_drift: drift })
}

/// Parallelogram grid z(i, j) = origin + i e1 + j e2 for i in 0..=n1, j in 0..n2.
/// Column n1 repeats column 0 shifted by n1 e1, so a closed annulus with
/// period n1 e1 can be checked for closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZGrid {
    pub origin: C64,
    pub e1: C64,
    pub e2: C64,
    pub n1: usize,
    pub n2: usize,
}

impl ZGrid {
    pub fn z(&self, i: usize, j: usize) -> C64 {
        self.origin + self.e1 * i as f64 + self.e2 * j as f64
    }

    pub fn cols(&self) -> usize {
        self.n1 + 1
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cols() + i
    }

    pub fn len(&self) -> usize {
        self.cols() * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rectangle with rows along the period tau and columns orthogonal to it,
    /// the second direction spanning [y0, y0 + (n2-1) hy].
    pub fn along_period(tau: C64, n1: usize, y0: f64, hy: f64, n2: usize) -> Self {
        let u = tau / tau.norm();
        let e2 = C64::new(0.0, 1.0) * u * hy;
        ZGrid { origin: C64::new(0.0, 1.0) * u * y0, e1: tau / n1 as f64, e2, n1, n2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ZLayout {
    Path(Vec<C64>),
    Grid(ZGrid),
}

#[derive(Clone, Debug)]
pub struct FrameField {
    pub potential: Potential,
    pub lambdas: LambdaGrid,
    pub layout: ZLayout,
    pub zs: Vec<C64>,
    pub killing: Vec<MatrixLaurent>,
    /// frames[z][lambda]
    pub frames: Vec<Vec<Mat2>>,
    pub det_drift: f64,
    pub unitary_drift: f64,
    pub a_drift: f64,
    pub renormalizations: usize,
}

impl FrameField {
    pub fn at(&self, z_index: usize, lambda_index: usize) -> Mat2 {
        self.frames[z_index][lambda_index]
    }

    pub fn lambda_index(&self, lambda: C64) -> Option<usize> {
        self.lambdas.index_of(lambda)
    }

    pub fn z_index(&self, z: C64) -> Option<usize> {
        self.zs.iter().position(|w| (w - z).norm() < 1e-9 * (1.0 + z.norm()))
    }

    pub fn grid(&self) -> Option<ZGrid> {
        match self.layout {
            ZLayout::Grid(g) => Some(g),
            ZLayout::Path(_) => None,
        }
    }

    /// Same potential and z-layout at other spectral values.
    pub fn recompute(&self, lambdas: LambdaGrid, opts: &FrameOptions) -> Result<FrameField> {
        match &self.layout {
            ZLayout::Path(p) => integrate_frame_with(&self.potential, &lambdas, p, opts),
            ZLayout::Grid(g) => integrate_frame_grid(&self.potential, &lambdas, g, opts),
        }
    }

    /// Frame field from precomputed frames; diagnostics are recomputed.
    pub fn from_parts(potential: Potential, lambdas: LambdaGrid, layout: ZLayout, zs: Vec<C64>, killing: Vec<MatrixLaurent>, frames: Vec<Vec<Mat2>>) -> Self {
        let mut ff = FrameField { potential, lambdas, layout, zs, killing, frames, det_drift: 0.0, unitary_drift: 0.0, a_drift: 0.0, renormalizations: 0 };
        ff.finish_diagnostics();
        ff
    }

    fn finish_diagnostics(&mut self) {
        let mut det: f64 = 0.0;
        let mut uni: f64 = 0.0;
        for row in &self.frames {
            for (k, f) in row.iter().enumerate() {
                det = det.max((f.determinant() - 1.0).norm());
                if self.lambdas.unit_mask[k] {
                    uni = uni.max(mat_max_abs(&(f.adjoint() * f - Mat2::identity())));
                }
            }
        }
        self.det_drift = det;
        self.unitary_drift = uni;
        let a0 = a_coeffs(&self.potential.matrix);
        self.a_drift = self.killing.iter().map(|z| a_drift(z, &a0)).fold(0.0, f64::max);
    }
}

pub fn integrate_frame(xi: &Potential, grid: &LambdaGrid, path: &[C64]) -> Result<FrameField> {
    integrate_frame_with(xi, grid, path, &FrameOptions::default())
}

/// F along a polyline starting at z = 0 (a leading segment from 0 is added if needed).
pub fn integrate_frame_with(xi: &Potential, grid: &LambdaGrid, path: &[C64], opts: &FrameOptions) -> Result<FrameField> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty z-path".into()));
    }
    let mut nodes = Vec::with_capacity(path.len() + 1);
    if path[0] != C64::default() {
        nodes.push(C64::default());
    }
    nodes.extend_from_slice(path);
    let mut zeta = xi.matrix.clone();
    let mut killing = vec![zeta.clone()];
    let mut segs = Vec::new();
    for w in nodes.windows(2) {
        let (end, steps) = lax_segment(&zeta, w[0], w[1], substeps(w[1] - w[0], opts.max_step))?;
        segs.push(steps);
        zeta = end;
        killing.push(zeta.clone());
    }
    let per_lambda: Vec<(Vec<Mat2>, usize)> = grid
        .points
        .par_iter()
        .map(|&l| {
            let mut renorms = 0;
            let mut f = Mat2::identity();
            let mut out = vec![f];
            for s in &segs {
                f = frame_steps(f, l, s, opts, &mut renorms);
                out.push(f);
            }
            (out, renorms)
        })
        .collect();
    let renorms: usize = per_lambda.iter().map(|p| p.1).sum();
    if renorms > 0 {
        log::info!("frame integration renormalized det F {renorms} times");
    }
    let mut frames = vec![Vec::with_capacity(grid.len()); nodes.len()];
    for (col, _) in &per_lambda {
        for (zi, f) in col.iter().enumerate() {
            frames[zi].push(*f);
        }
    }
    let mut ff = FrameField {
        potential: xi.clone(),
        lambdas: grid.clone(),
        layout: ZLayout::Path(nodes.clone()),
        zs: nodes,
        killing,
        frames,
        det_drift: 0.0,
        unitary_drift: 0.0,
        a_drift: 0.0,
        renormalizations: renorms,
    };
    ff.finish_diagnostics();
    Ok(ff)
}

/// F on a parallelogram grid: 0 -> origin, then along row 0, then up every column.
pub fn integrate_frame_grid(xi: &Potential, grid: &LambdaGrid, zg: &ZGrid, opts: &FrameOptions) -> Result<FrameField> {
    if zg.n2 == 0 {
        return Err(Error::InvalidInput("empty z-grid".into()));
    }
    let nl = grid.len();
    let mut renorms = 0;
    // 0 -> origin
    let (zeta_o, steps_o) = if zg.origin == C64::default() {
        (xi.matrix.clone(), Vec::new())
    } else {
        lax_segment(&xi.matrix, C64::default(), zg.origin, substeps(zg.origin, opts.max_step))?
    };
    let f_o: Vec<Mat2> = grid.points.iter().map(|&l| frame_steps(Mat2::identity(), l, &steps_o, opts, &mut renorms)).collect();
    // row 0
    let n_row = substeps(zg.e1, opts.max_step);
    let mut base_zeta = vec![zeta_o.clone()];
    let mut base_f = vec![f_o];
    for i in 0..zg.n1 {
        let (end, steps) = lax_segment(&base_zeta[i], zg.z(i, 0), zg.z(i + 1, 0), n_row)?;
        let next: Vec<Mat2> = grid.points.iter().zip(&base_f[i]).map(|(&l, &f)| frame_steps(f, l, &steps, opts, &mut renorms)).collect();
        base_zeta.push(end);
        base_f.push(next);
    }
    // columns in parallel
    let n_col = substeps(zg.e2, opts.max_step);
    let cols: Vec<Result<(Vec<MatrixLaurent>, Vec<Vec<Mat2>>, usize)>> = (0..zg.cols())
        .into_par_iter()
        .map(|i| {
            let mut r = 0;
            let mut zetas = vec![base_zeta[i].clone()];
            let mut fs = vec![base_f[i].clone()];
            for j in 1..zg.n2 {
                let (end, steps) = lax_segment(&zetas[j - 1], zg.z(i, j - 1), zg.z(i, j), n_col)?;
                let next: Vec<Mat2> = grid.points.iter().zip(&fs[j - 1]).map(|(&l, &f)| frame_steps(f, l, &steps, opts, &mut r)).collect();
                zetas.push(end);
                fs.push(next);
            }
            Ok((zetas, fs, r))
        })
        .collect();
    let cols: Vec<_> = cols.into_iter().collect::<Result<_>>()?;
    let total = zg.len();
    let mut killing = vec![MatrixLaurent::new(-1, vec![]); total];
    let mut frames = vec![vec![Mat2::zeros(); nl]; total];
    let mut zs = vec![C64::default(); total];
    for (i, (zetas, fs, r)) in cols.into_iter().enumerate() {
        renorms += r;
        for j in 0..zg.n2 {
            let k = zg.index(i, j);
            killing[k] = zetas[j].clone();
            frames[k] = fs[j].clone();
            zs[k] = zg.z(i, j);
        }
    }
    if renorms > 0 {
        log::info!("frame integration renormalized det F {renorms} times");
    }
    let mut ff = FrameField {
        potential: xi.clone(),
        lambdas: grid.clone(),
        layout: ZLayout::Grid(*zg),
        zs,
        killing,
        frames,
        det_drift: 0.0,
        unitary_drift: 0.0,
        a_drift: 0.0,
        renormalizations: renorms,
    };
    ff.finish_diagnostics();
    Ok(ff)
}

#[derive(Clone, Debug)]
pub struct Monodromy {
    pub tau: C64,
    pub lambdas: LambdaGrid,
    pub m: Vec<Mat2>,
    pub potential: Potential,
}

impl Monodromy {
    /// max over the grid of the commutator [M, xi] (entrywise).
    pub fn commutator_residual(&self) -> f64 {
        self.lambdas
            .points
            .iter()
            .zip(&self.m)
            .map(|(&l, m)| {
                let x = self.potential.eval(l);
                mat_max_abs(&(m * x - x * m))
            })
            .fold(0.0, f64::max)
    }

    pub fn at(&self, lambda: C64) -> Option<Mat2> {
        self.lambdas.index_of(lambda).map(|k| self.m[k])
    }
}

pub fn monodromy(ff: &FrameField, tau: C64) -> Result<Monodromy> {
    let i0 = ff.z_index(C64::default()).ok_or_else(|| Error::InvalidInput("z-layout does not contain z = 0".into()))?;
    let it = ff.z_index(tau).ok_or_else(|| Error::InvalidInput(format!("z-layout does not reach tau = {tau}")))?;
    let m = (0..ff.lambdas.len()).map(|k| inverse_sl2(&ff.at(i0, k)) * ff.at(it, k)).collect();
    Ok(Monodromy { tau, lambdas: ff.lambdas.clone(), m, potential: ff.potential.clone() })
}

/// Frames at `lambdas` along the straight segment [0, tau], returning the monodromy.
pub fn monodromy_of(xi: &Potential, lambdas: &LambdaGrid, tau: C64, opts: &FrameOptions) -> Result<Monodromy> {
    let ff = integrate_frame_with(xi, lambdas, &[C64::default(), tau], opts)?;
    monodromy(&ff, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{a_from_potential, c, offdiagonal_potential};

    fn flat() -> Potential {
        Potential::flat()
    }

    #[test]
    fn alpha_of_flat_seed() {
        let al = alpha_from_zeta(&flat().matrix).unwrap();
        let l = c(0.7, 0.3);
        let (a, b) = al.eval(l);
        let q = c(0.0, 0.25);
        assert!(mat_max_abs(&(a - mat2(c(0.0, 0.0), q / l, q, c(0.0, 0.0)))) < 1e-15);
        assert!(mat_max_abs(&(b - mat2(c(0.0, 0.0), q, q * l, c(0.0, 0.0)))) < 1e-15);
        assert_eq!(omega_of(&flat().matrix), 0.0);
        let mut rotated = flat().matrix.clone();
        rotated.coeffs[0][(0, 1)] = c(0.0, -0.25);
        assert!(alpha_from_zeta(&rotated).is_ok());
        let mut bad = flat().matrix.clone();
        bad.coeffs[0][(0, 1)] = c(0.0, 0.0);
        assert!(alpha_from_zeta(&bad).is_err());
    }

    #[test]
    fn flat_killing_field_is_constant() {
        let kf = integrate_lax(&flat(), &[c(0.0, 0.0), c(1.0, 0.5), c(-2.0, 3.0)]).unwrap();
        for z in &kf.zetas {
            for (a, b) in z.coeffs.iter().zip(&flat().matrix.coeffs) {
                assert!(mat_max_abs(&(a - b)) < 1e-15);
            }
        }
    }

    #[test]
    fn flat_frame_closed_form() {
        let g = LambdaGrid::unit_circle(8);
        let ff = integrate_frame(&flat(), &g, &[c(0.0, 0.0), c(PI, 0.0), c(2.0 * PI, 0.0)]).unwrap();
        let i = c(0.0, 1.0);
        let at_pi = ff.at(1, 0);
        assert!(mat_max_abs(&(at_pi - mat2(c(0.0, 0.0), i, i, c(0.0, 0.0)))) < 1e-10);
        assert!(mat_max_abs(&(ff.at(2, 0) + Mat2::identity())) < 1e-10);
        let m = monodromy(&ff, c(2.0 * PI, 0.0)).unwrap();
        assert!(mat_max_abs(&(m.m[0] + Mat2::identity())) < 1e-10);
        // lambda = -1 is index 4; eigenvalues 1, 1
        let tr = m.m[4].trace();
        assert!((tr - 2.0).norm() < 1e-9);
        for (k, mm) in m.m.iter().enumerate() {
            assert!(mm.trace().im.abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn frame_reality_and_isospectrality() {
        let xi = offdiagonal_potential(&[c(0.3, 0.2), c(-0.4, 0.1)]).unwrap();
        let a = a_from_potential(&xi).unwrap();
        let l = c(0.6, 0.3);
        let g = LambdaGrid::unit_circle(16).with(&[l, c(1.0, 0.0) / l.conj()]).unwrap();
        let path = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 2.0), c(-0.5, 1.5)];
        let ff = integrate_frame(&xi, &g, &path).unwrap();
        let (ia, ib) = (g.index_of(l).unwrap(), g.index_of(c(1.0, 0.0) / l.conj()).unwrap());
        for zi in 0..ff.zs.len() {
            let lhs = ff.at(zi, ib).adjoint();
            let rhs = inverse_sl2(&ff.at(zi, ia));
            assert!(mat_max_abs(&(lhs - rhs)) < 1e-8);
        }
        assert!(ff.a_drift < 1e-9, "{}", ff.a_drift);
        assert!(ff.unitary_drift < 1e-8);
        for (zi, zeta) in ff.killing.iter().enumerate() {
            for &lam in &[c(0.5, 0.5), c(2.0, -1.0)] {
                let v = -lam * zeta.eval(lam).determinant();
                assert!((v - a.eval(lam)).norm() < 1e-9, "{zi}");
            }
        }
    }

    #[test]
    fn grid_matches_path() {
        let xi = offdiagonal_potential(&[c(0.25, 0.0)]).unwrap();
        let g = LambdaGrid::unit_circle(4);
        let zg = ZGrid { origin: c(0.0, -0.2), e1: c(0.3, 0.0), e2: c(0.0, 0.2), n1: 3, n2: 3 };
        let ff = integrate_frame_grid(&xi, &g, &zg, &FrameOptions::default()).unwrap();
        let target = zg.z(2, 2);
        let fp = integrate_frame(&xi, &g, &[c(0.0, 0.0), target]).unwrap();
        let k = zg.index(2, 2);
        for li in 0..g.len() {
            assert!(mat_max_abs(&(ff.at(k, li) - fp.at(1, li))) < 1e-8);
        }
    }

    #[test]
    fn omega_from_lax_solves_sinh_gordon() {
        // alpha_0 = omega_z, so omega_x = 2 Re(alpha_0)
        let xi = offdiagonal_potential(&[c(0.25, 0.0)]).unwrap();
        let h = 1e-3;
        let kf = integrate_lax(&xi, &[c(0.3, 0.4), c(0.3 + h, 0.4), c(0.3 + 2.0 * h, 0.4)]).unwrap();
        let w = kf.omega();
        let dx = (w[2] - w[0]) / (2.0 * h);
        let al0 = kf.zetas[1].coeff(0)[(0, 0)];
        assert!((dx - (2.0 * al0).re).abs() < 1e-6, "{dx} vs {}", 2.0 * al0);
    }

    #[test]
    fn monodromy_needs_tau() {
        let ff = integrate_frame(&flat(), &LambdaGrid::unit_circle(4), &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(monodromy(&ff, c(2.0 * PI, 0.0)).is_err());
    }
}
