//! Abresch solutions from elliptic profiles, sinh-Gordon residuals, the
//! Pinkall-Sterling hierarchy, the Jacobi operator and the Lame basis.
//!
//! These are independent of the loop-group code and serve as its oracle.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Grid, GridValue, RealGrid};

pub type OmegaField = RealGrid;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbreschParams {
    pub c: f64,
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl AbreschParams {
    pub fn new(c: f64, d: f64) -> Result<Self> {
        if !(c <= 0.0 && d <= 0.0) || !c.is_finite() || !d.is_finite() {
            return Err(Error::InvalidInput(format!("Abresch constants need c <= 0 and d <= 0, got c = {c}, d = {d}")));
        }
        Ok(AbreschParams { c, d })
    }

    pub fn discriminant(&self) -> f64 {
        let k = 1.0 + self.c - self.d;
        k * k - 4.0 * self.c
    }

    /// (delta_1, delta_2): roots of X^2 + (1+c-d) X + c.
    pub fn deltas(&self) -> (f64, f64) {
        let k = 1.0 + self.c - self.d;
        let s = self.discriminant().sqrt();
        ((-k + s) / 2.0, (-k - s) / 2.0)
    }

    /// (beta_1, beta_2): roots of X^2 + (1+d-c) X + d.
    pub fn betas(&self) -> (f64, f64) {
        self.swapped().deltas()
    }

    pub fn swapped(&self) -> Self {
        AbreschParams { c: self.d, d: self.c }
    }

    /// Inverse of (deltas, betas): recover (c, d) from delta_1 = max f^2 and beta_1 = max g^2.
    pub fn from_turning(delta1: f64, beta1: f64) -> Self {
        // beta_1 - delta_1 = c - d, and (1 + delta_1 + beta_1)^2 = (1 + c - d)^2 - 4c + ... solved for c
        let s = beta1 - delta1;
        let c = ((1.0 + s).powi(2) - (1.0 + delta1 + beta1).powi(2)) / 4.0;
        AbreschParams { c, d: c - s }
    }
}

/// One period of a solution of -f'' = 2f^3 + (1+c-d) f starting at the turning point.
#[derive(Clone, Debug)]
pub struct EllipticProfile {
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub period: f64,
    pub turning: f64,
    /// (c, d) after the axis swap
    pub params: AbreschParams,
    pub degenerate: bool,
    pub energy_residual: f64,
}

impl EllipticProfile {
    pub fn h(&self) -> f64 {
        self.period / self.values.len() as f64
    }

    fn energy(p: &AbreschParams, f: f64, fx: f64) -> f64 {
        let k = 1.0 + p.c - p.d;
        (-(fx * fx) - (f.powi(4) + k * f * f + p.c)).abs()
    }
}

type State = [f64; 2];

fn rk4_step(s: State, h: f64, k: f64) -> State {
    let rhs = |s: State| [s[1], -2.0 * s[0].powi(3) - k * s[0]];
    let k1 = rhs(s);
    let k2 = rhs([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
    let k3 = rhs([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
    let k4 = rhs([s[0] + h * k3[0], s[1] + h * k3[1]]);
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Time of the first return to the maximum, by event detection on f' with a
/// cubic Hermite model of f' inside the crossing step.
fn detect_period(top: f64, k: f64, h: f64) -> Result<f64> {
    let acc = |f: f64| -2.0 * f.powi(3) - k * f;
    let mut s: State = [top, 0.0];
    let mut t = 0.0;
    let mut went_positive = false;
    for _ in 0..10_000_000 {
        let n = rk4_step(s, h, k);
        if n[1] > 0.0 {
            went_positive = true;
        }
        if went_positive && s[1] > 0.0 && n[1] <= 0.0 {
            let (v0, v1) = (s[1], n[1]);
            let (a0, a1) = (acc(s[0]) * h, acc(n[0]) * h);
            let herm = |u: f64| {
                let (u2, u3) = (u * u, u * u * u);
                (2.0 * u3 - 3.0 * u2 + 1.0) * v0 + (u3 - 2.0 * u2 + u) * a0 + (-2.0 * u3 + 3.0 * u2) * v1 + (u3 - u2) * a1
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if herm(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(t + 0.5 * (lo + hi) * h);
        }
        s = n;
        t += h;
    }
    Err(Error::Solve("profile did not return to its turning point".into()))
}

pub fn solve_profile(params: AbreschParams, axis: Axis, n_samples: usize) -> Result<EllipticProfile> {
    let p = match axis {
        Axis::X => params,
        Axis::Y => params.swapped(),
    };
    AbreschParams::new(p.c, p.d)?;
    if n_samples < 4 {
        return Err(Error::InvalidInput("profile needs at least 4 samples".into()));
    }
    let delta = p.discriminant();
    if delta < 0.0 {
        return Err(Error::InvalidInput(format!("negative discriminant {delta}")));
    }
    let (d1, _) = p.deltas();
    if d1 <= 1e-300 || p.c == 0.0 {
        return Ok(EllipticProfile {
            values: vec![0.0; n_samples],
            derivs: vec![0.0; n_samples],
            period: 2.0 * std::f64::consts::PI,
            turning: 0.0,
            params: p,
            degenerate: true,
            energy_residual: 0.0,
        });
    }
    let top = d1.sqrt();
    let k = 1.0 + p.c - p.d;
    // small-oscillation frequency at the turning amplitude gives the step scale
    let omega2 = (k + 3.0 * d1).max(1e-3);
    let estimate = 2.0 * std::f64::consts::PI / omega2.sqrt();
    let period = detect_period(top, k, estimate / 4096.0)?;
    let sub = 4096_usize.div_ceil(n_samples).max(1);
    let h = period / (n_samples * sub) as f64;
    let mut values = Vec::with_capacity(n_samples);
    let mut derivs = Vec::with_capacity(n_samples);
    let mut s: State = [top, 0.0];
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        values.push(s[0]);
        derivs.push(s[1]);
        worst = worst.max(EllipticProfile::energy(&p, s[0], s[1]));
        for _ in 0..sub {
            s = rk4_step(s, h, k);
        }
    }
    if worst > 1e-9 {
        return Err(Error::Solve(format!("profile energy residual {worst:.3e} above 1e-9")));
    }
    Ok(EllipticProfile { values, derivs, period, turning: top, params: p, degenerate: false, energy_residual: worst })
}

/// omega = asinh((f_x + g_y) / (1 + f^2 + g^2)) on the doubly periodic tensor grid.
pub fn omega_from_profiles(f: &EllipticProfile, g: &EllipticProfile) -> OmegaField {
    Grid::from_fn(f.values.len(), g.values.len(), f.h(), g.h(), true, |i, j| {
        let (fv, fx) = (f.values[i], f.derivs[i]);
        let (gv, gy) = (g.values[j], g.derivs[j]);
        ((fx + gy) / (1.0 + fv * fv + gv * gv)).asinh()
    })
}

/// Convenience: both profiles and omega for one parameter pair.
pub fn abresch_omega(params: AbreschParams, nx: usize, ny: usize) -> Result<OmegaField> {
    let f = solve_profile(params, Axis::X, nx)?;
    let g = solve_profile(params, Axis::Y, ny)?;
    Ok(omega_from_profiles(&f, &g))
}

/// max over interior points of |Lap_h omega + sinh omega cosh omega|.
pub fn sinh_gordon_residual(omega: &OmegaField) -> f64 {
    let lap = omega.laplacian();
    let r = lap.zip_map(omega, |l, w| l + w.sinh() * w.cosh());
    r.max_interior(1)
}

/// max interior |Lap_h u + u cosh 2 omega|.
pub fn lsg_residual<T: GridValue>(u: &Grid<T>, omega: &OmegaField) -> f64 {
    let lap = u.laplacian();
    let r = Grid::from_fn(u.nx, u.ny, u.hx, u.hy, u.periodic_y, |i, j| lap.at(i, j) + u.at(i, j) * (2.0 * omega.at(i, j)).cosh());
    r.max_interior(1)
}

/// (1/cosh^2 w) (Lap u + u + 2|grad w|^2/cosh^2 w u)
pub fn jacobi_apply(u: &RealGrid, omega: &OmegaField) -> RealGrid {
    let lap = u.laplacian();
    let wx = omega.diff_x();
    let wy = omega.diff_y();
    Grid::from_fn(u.nx, u.ny, u.hx, u.hy, u.periodic_y, |i, j| {
        let ch2 = omega.at(i, j).cosh().powi(2);
        let grad2 = wx.at(i, j).powi(2) + wy.at(i, j).powi(2);
        (lap.at(i, j) + u.at(i, j) + 2.0 * grad2 / ch2 * u.at(i, j)) / ch2
    })
}

/// omega_xy - tanh(omega) omega_x omega_y
pub fn shiffman_field(omega: &OmegaField) -> RealGrid {
    let wx = omega.diff_x();
    let wy = omega.diff_y();
    let wxy = wx.diff_y();
    Grid::from_fn(omega.nx, omega.ny, omega.hx, omega.hy, omega.periodic_y, |i, j| {
        wxy.at(i, j) - omega.at(i, j).tanh() * wx.at(i, j) * wy.at(i, j)
    })
}

/// Abresch constants recovered from omega by least squares on
/// -f_x^2 = f^4 + (1+c-d) f^2 + c and -g_y^2 = g^4 + (1+d-c) g^2 + d,
/// with f = -omega_x / cosh omega and g = -omega_y / cosh omega.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbreschFit {
    pub c: f64,
    pub d: f64,
    /// rms of the two equations over the interior
    pub residual: f64,
}

/// With `x_patch` the grid is a patch that is not periodic in x and two columns
/// at each end are left out.
pub fn fit_abresch_constants(omega: &OmegaField, x_patch: bool) -> Result<AbreschFit> {
    let f = omega.diff_x().zip_map(omega, |d, w| -d / w.cosh());
    let g = omega.diff_y().zip_map(omega, |d, w| -d / w.cosh());
    let fx = f.diff_x();
    let gy = g.diff_y();
    // rows (coef_c, coef_d, rhs)
    let mut rows = Vec::new();
    // one-sided stencils at a non-periodic boundary feed two rows deep
    let rows_j = if omega.periodic_y { 0..omega.ny } else { 2..omega.ny.saturating_sub(2) };
    let cols = if x_patch { 2..omega.nx.saturating_sub(2) } else { 0..omega.nx };
    for j in rows_j {
        for i in cols.clone() {
            let (fv, fd) = (f.at(i, j), fx.at(i, j));
            let (gv, gd) = (g.at(i, j), gy.at(i, j));
            rows.push((1.0 + fv * fv, -fv * fv, -fd * fd - fv.powi(4) - fv * fv));
            rows.push((-gv * gv, 1.0 + gv * gv, -gd * gd - gv.powi(4) - gv * gv));
        }
    }
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(p, q, r) in &rows {
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
        r1 += p * r;
        r2 += q * r;
    }
    let det = a11 * a22 - a12 * a12;
    if rows.is_empty() || det.abs() < 1e-300 {
        return Err(Error::Degenerate("omega grid too small to fit Abresch constants".into()));
    }
    let c = (r1 * a22 - r2 * a12) / det;
    let d = (a11 * r2 - a12 * r1) / det;
    let ss: f64 = rows.iter().map(|&(p, q, r)| (p * c + q * d - r).powi(2)).sum();
    Ok(AbreschFit { c, d, residual: (ss / rows.len() as f64).sqrt() })
}

/// u_n, tau_n, sigma_n for n = -1..=n_max (index n+1 in the vectors).
#[derive(Clone, Debug)]
pub struct HierarchyState {
    pub u: Vec<ComplexGrid>,
    pub tau: Vec<ComplexGrid>,
    pub sigma: Vec<ComplexGrid>,
    pub gamma: Complex64,
    /// per n: disagreement between x-then-y and y-then-x integration of tau_n
    pub closure_mismatch: Vec<f64>,
}

impl HierarchyState {
    pub fn u(&self, n: i32) -> &ComplexGrid {
        &self.u[(n + 1) as usize]
    }

    pub fn tau(&self, n: i32) -> &ComplexGrid {
        &self.tau[(n + 1) as usize]
    }

    pub fn sigma(&self, n: i32) -> &ComplexGrid {
        &self.sigma[(n + 1) as usize]
    }
}

fn trapezoid_x(g: &ComplexGrid, j: usize, start: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(g.nx);
    let mut acc = start;
    out.push(acc);
    for i in 1..g.nx {
        acc += (g.at(i - 1, j) + g.at(i, j)) * (0.5 * g.hx);
        out.push(acc);
    }
    out
}

/// Trapezoid integral over one full x-period starting from column 0.
fn period_defect_x(g: &ComplexGrid, j: usize) -> Complex64 {
    (0..g.nx).map(|i| (g.at(i, j) + g.at((i + 1) % g.nx, j)) * (0.5 * g.hx)).sum()
}

/// Recover f from (f_x, f_y): x along row 0 then y up each column; the second
/// return value is the max mismatch against integrating y first then x.
///
/// On periodic directions the O(h^2) period defect of each line integral is
/// removed linearly along the line, so no seam appears at the wrap.
fn integrate_gradient(fx: &ComplexGrid, fy: &ComplexGrid) -> (ComplexGrid, f64) {
    let (nx, ny) = (fx.nx, fx.ny);
    let detrend = |v: &mut Vec<Complex64>, defect: Complex64| {
        let n = v.len() as f64;
        for (k, x) in v.iter_mut().enumerate() {
            *x -= defect * (k as f64 / n);
        }
    };
    let mut base = trapezoid_x(fx, 0, Complex64::default());
    detrend(&mut base, period_defect_x(fx, 0));
    let mut data = vec![Complex64::default(); nx * ny];
    for i in 0..nx {
        let mut col = vec![base[i]];
        for j in 1..ny {
            col.push(col[j - 1] + (fy.at(i, j - 1) + fy.at(i, j)) * (0.5 * fy.hy));
        }
        if fy.periodic_y {
            let wrap = col[ny - 1] + (fy.at(i, ny - 1) + fy.at(i, 0)) * (0.5 * fy.hy) - col[0];
            detrend(&mut col, wrap);
        }
        for j in 0..ny {
            data[j * nx + i] = col[j];
        }
    }
    let mut c0 = vec![Complex64::default(); ny];
    for j in 1..ny {
        c0[j] = c0[j - 1] + (fy.at(0, j - 1) + fy.at(0, j)) * (0.5 * fy.hy);
    }
    let mut mismatch: f64 = 0.0;
    for (j, &start) in c0.iter().enumerate() {
        let row = trapezoid_x(fx, j, start);
        for (i, v) in row.iter().enumerate() {
            mismatch = mismatch.max((v - data[j * nx + i]).norm());
        }
    }
    let g = Grid { nx, ny, hx: fx.hx, hy: fx.hy, periodic_y: fx.periodic_y, data };
    (g, mismatch)
}

/// Pinkall-Sterling iteration started from u_{-1} = 0, tau_{-1} = 1/4, sigma_{-1} = 0.
///
/// With these starting values the recursion gives u_0 = -i omega_z. Each tau_n
/// is fixed by zero mean over the first x-row.
pub fn pinkall_sterling(omega: &OmegaField, gamma: Complex64, n_max: usize, compat_tol: f64) -> Result<HierarchyState> {
    if (gamma.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("gamma must be unimodular".into()));
    }
    let w = omega.to_complex();
    let wz = w.diff_z();
    let e2 = omega.map(|v| Complex64::new((2.0 * v).exp(), 0.0));
    let em2 = omega.map(|v| Complex64::new((-2.0 * v).exp(), 0.0));
    let gb = gamma.conj();

    let zero = ComplexGrid::zeros_like(omega);
    let mut u = vec![zero.clone()];
    let mut tau = vec![zero.map(|_: Complex64| Complex64::new(0.25, 0.0))];
    let mut sigma = vec![zero.clone()];
    let mut mismatch = vec![0.0];

    // u_0 from tau_{-1}
    let u0 = wz.map(|v| -I * v);
    sigma.push(Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| {
        gamma * e2.at(i, j) * 0.25 + 4.0 * I * gamma * u0.diff_zbar().at(i, j)
    }));
    u.push(u0);

    for n in 0..n_max {
        let un = &u[n + 1];
        let un_z = un.diff_z();
        let un_zz = un_z.diff_z();
        let t_zbar = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| 0.5 * I * gb * em2.at(i, j) * un.at(i, j));
        let t_z = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| {
            -2.0 * I * gb * un_zz.at(i, j) + 4.0 * I * gb * wz.at(i, j) * un_z.at(i, j)
        });
        let t_x = t_z.zip_map(&t_zbar, |a, b| a + b);
        let t_y = t_z.zip_map(&t_zbar, |a, b| I * (a - b));
        let (mut tn, mm) = integrate_gradient(&t_x, &t_y);
        let scale = 1.0 + t_x.max_abs() * w.period_x() + t_y.max_abs() * w.hy * w.ny as f64;
        if mm > compat_tol * scale {
            return Err(Error::Solve(format!(
                "tau_{n} system incompatible (closure mismatch {mm:.3e}); omega is not a sinh-Gordon solution at this tolerance"
            )));
        }
        let mean: Complex64 = (0..w.nx).map(|i| tn.at(i, 0)).sum::<Complex64>() / w.nx as f64;
        for v in tn.data.iter_mut() {
            *v -= mean;
        }
        // tau_{n;z} from its defining formula, not by differencing tau_n
        let next_u = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| -2.0 * I * t_z.at(i, j) - 4.0 * I * wz.at(i, j) * tn.at(i, j));
        let next_u_zbar = next_u.diff_zbar();
        let next_sigma = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| gamma * e2.at(i, j) * tn.at(i, j) + 4.0 * I * gamma * next_u_zbar.at(i, j));
        tau.push(tn);
        mismatch.push(mm);
        u.push(next_u);
        sigma.push(next_sigma);
    }
    // tau_{n_max} is not needed to build u_{n_max}; the vectors stop at n_max
    Ok(HierarchyState { u, tau, sigma, gamma, closure_mismatch: mismatch })
}

/// Least-squares fit of `target` against the given complex basis grids.
/// Returns the coefficients and the max residual.
pub fn fit_grids(target: &ComplexGrid, basis: &[&ComplexGrid], margin: usize) -> (Vec<Complex64>, f64) {
    let rows: Vec<usize> = if target.periodic_y { (0..target.ny).collect() } else { (margin..target.ny - margin).collect() };
    let m = basis.len();
    let mut ata = nalgebra::DMatrix::<Complex64>::zeros(m, m);
    let mut atb = nalgebra::DVector::<Complex64>::zeros(m);
    for &j in &rows {
        for i in 0..target.nx {
            for p in 0..m {
                let bp = basis[p].at(i, j).conj();
                atb[p] += bp * target.at(i, j);
                for q in 0..m {
                    ata[(p, q)] += bp * basis[q].at(i, j);
                }
            }
        }
    }
    let coef = ata.lu().solve(&atb).unwrap_or_else(|| nalgebra::DVector::zeros(m));
    let mut worst: f64 = 0.0;
    for &j in &rows {
        for i in 0..target.nx {
            let fit: Complex64 = (0..m).map(|p| coef[p] * basis[p].at(i, j)).sum();
            worst = worst.max((target.at(i, j) - fit).norm());
        }
    }
    (coef.iter().copied().collect(), worst)
}

/// The closed forms omega_zzz - 2 omega_z^3 and
/// omega_zzzzz - 10 omega_zzz omega_z^p - 10 omega_zz^2 omega_z + 6 omega_z^5 (p = 2 or 3).
pub fn hierarchy_closed_forms(omega: &OmegaField, p: i32) -> (ComplexGrid, ComplexGrid) {
    let w = omega.to_complex();
    let z1 = w.diff_z();
    let z2 = z1.diff_z();
    let z3 = z2.diff_z();
    let z4 = z3.diff_z();
    let z5 = z4.diff_z();
    let u1 = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| z3.at(i, j) - 2.0 * z1.at(i, j).powi(3));
    let u2 = Grid::from_fn(w.nx, w.ny, w.hx, w.hy, w.periodic_y, |i, j| {
        let (a1, a2, a3, a5) = (z1.at(i, j), z2.at(i, j), z3.at(i, j), z5.at(i, j));
        a5 - 10.0 * a3 * a1.powi(p) - 10.0 * a2 * a2 * a1 + 6.0 * a1.powi(5)
    });
    (u1, u2)
}

/// Lame eigenfunctions of d^2/dx^2 + 2 f^2 on one x-period.
#[derive(Clone, Debug)]
pub struct LameBasis {
    pub h: f64,
    pub e: [Vec<f64>; 3],
    pub eigenvalues: [f64; 3],
    pub f: Vec<f64>,
}

impl LameBasis {
    /// max |e'' + 2 f^2 e + lambda e| with the periodic 3-point stencil, per function.
    pub fn residuals(&self) -> [f64; 3] {
        let n = self.f.len();
        let mut out = [0.0; 3];
        for (k, e) in self.e.iter().enumerate() {
            let mut m: f64 = 0.0;
            for i in 0..n {
                let d2 = (e[(i + 1) % n] + e[(i + n - 1) % n] - 2.0 * e[i]) / (self.h * self.h);
                m = m.max((d2 + 2.0 * self.f[i].powi(2) * e[i] + self.eigenvalues[k] * e[i]).abs());
            }
            out[k] = m;
        }
        out
    }
}

/// e_0 = sqrt(f^2 - delta_2), e_1 = f, e_2 = f_x / e_0 (a smooth signed square root of delta_1 - f^2).
pub fn lame_basis(params: AbreschParams, n_samples: usize) -> Result<LameBasis> {
    if params.c == 0.0 {
        return Err(Error::Degenerate("Lame basis needs c < 0".into()));
    }
    let prof = solve_profile(params, Axis::X, n_samples)?;
    let (d1, d2) = params.deltas();
    let e0: Vec<f64> = prof.values.iter().map(|f| (f * f - d2).sqrt()).collect();
    let e1 = prof.values.clone();
    let e2: Vec<f64> = prof.derivs.iter().zip(&e0).map(|(fx, e)| fx / e).collect();
    Ok(LameBasis { h: prof.h(), e: [e0, e1, e2], eigenvalues: [-d1, 1.0 + params.c - params.d, -d2], f: prof.values })
}
