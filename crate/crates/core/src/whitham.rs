//! Whitham deformation of spectral data.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{c, ComplexPoly, RealityClass, RealityKind, C64};
use crate::spectral::{dist_to_ipiz, HIntegrator, NuBranch, SpectralCurve, SpectralDataAB, SpectralDataJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularKind {
    CommonRoot,
    RootCollision,
    TouchingCircle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularEvent {
    pub location: Complex64,
    pub kind: SingularKind,
    pub t: f64,
    pub distance: f64,
}

impl fmt::Display for SingularEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at lambda = {} (t = {}, distance {:.3e})", self.kind, self.location, self.t, self.distance)
    }
}

/// Distances below which `detect_singularity` reports an event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularThresholds {
    pub common_root: f64,
    pub collision: f64,
    pub circle: f64,
}

impl Default for SingularThresholds {
    fn default() -> Self {
        SingularThresholds { common_root: 1e-4, collision: 1e-4, circle: 1e-4 }
    }
}

/// c of degree <= g+1 with lambda^{g+1} conj(c(1/conj lambda)) = c.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationPoly {
    pub c: ComplexPoly,
    pub g: usize,
}

impl DeformationPoly {
    pub fn zero(g: usize) -> Self {
        DeformationPoly { c: ComplexPoly::zero(), g }
    }

    pub fn reality_residual(&self) -> f64 {
        RealityClass::new(RealityKind::C, self.g).residual(&self.c)
    }

    /// max(|c(1)|, |Im(c(0)/b(0))|)
    pub fn closing_residual(&self, b: &ComplexPoly) -> f64 {
        let c1 = self.c.eval(c(1.0, 0.0)).norm();
        let b0 = b.coeff(0);
        let ratio = if b0.norm() > 0.0 { (self.c.coeff(0) / b0).im.abs() } else { self.c.coeff(0).norm() };
        c1.max(ratio)
    }
}

/// c = (lambda - 1)(b(0) - conj(b(0)) lambda^g); zero for g = 0.
pub fn c_flux_increasing(data: &SpectralDataAB) -> DeformationPoly {
    let g = data.genus();
    if g == 0 {
        log::info!("flux-increasing deformation degenerates for g = 0; using c = 0");
        return DeformationPoly::zero(0);
    }
    let b0 = data.b.coeff(0);
    let mut tail = vec![C64::default(); g + 1];
    tail[0] = b0;
    tail[g] -= b0.conj();
    let c = ComplexPoly::new(vec![c(-1.0, 0.0), c(1.0, 0.0)]).mul(&ComplexPoly::new(tail));
    DeformationPoly { c, g }
}

/// Per-step rule producing c from the current state.
pub trait DeformationChooser: Send + Sync {
    fn name(&self) -> &str;
    fn choose(&self, data: &SpectralDataAB, t: f64) -> Result<DeformationPoly>;
}

pub struct ZeroChooser;

impl DeformationChooser for ZeroChooser {
    fn name(&self) -> &str {
        "zero"
    }

    fn choose(&self, data: &SpectralDataAB, _t: f64) -> Result<DeformationPoly> {
        Ok(DeformationPoly::zero(data.genus()))
    }
}

pub struct FluxChooser;

impl DeformationChooser for FluxChooser {
    fn name(&self) -> &str {
        "flux"
    }

    fn choose(&self, data: &SpectralDataAB, _t: f64) -> Result<DeformationPoly> {
        Ok(c_flux_increasing(data))
    }
}

/// Choosers by name.
pub struct ChooserRegistry {
    entries: BTreeMap<String, Box<dyn DeformationChooser>>,
}

impl ChooserRegistry {
    pub fn empty() -> Self {
        ChooserRegistry { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, ch: Box<dyn DeformationChooser>) {
        self.entries.insert(ch.name().to_string(), ch);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DeformationChooser> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::InvalidInput(format!("unknown chooser '{name}' (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(|s| s.as_str()).collect()
    }
}

impl Default for ChooserRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ZeroChooser));
        r.register(Box::new(FluxChooser));
        r
    }
}

fn roots_or_empty(p: &ComplexPoly) -> Result<Vec<C64>> {
    if p.degree() == 0 {
        Ok(Vec::new())
    } else {
        p.roots(1e-8)
    }
}

/// Nearest approaches between roots of a and b, among roots of a, and from roots of a to S^1.
pub fn detect_singularity(data: &SpectralDataAB, t: f64, th: &SingularThresholds) -> Result<Option<SingularEvent>> {
    let ra = roots_or_empty(&data.a)?;
    let rb = roots_or_empty(&data.b)?;
    let near = ra.iter().map(|&x| ((x.norm() - 1.0).abs(), x)).min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((d, x)) = near {
        if d < th.circle {
            return Ok(Some(SingularEvent { location: x / x.norm(), kind: SingularKind::TouchingCircle, t, distance: d }));
        }
    }
    let mut best: Option<(f64, C64)> = None;
    for &x in &ra {
        for &y in &rb {
            let d = (x - y).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (x + y) / 2.0));
            }
        }
    }
    if let Some((d, loc)) = best {
        if d < th.common_root {
            return Ok(Some(SingularEvent { location: loc, kind: SingularKind::CommonRoot, t, distance: d }));
        }
    }
    let mut best: Option<(f64, C64)> = None;
    for i in 0..ra.len() {
        for j in i + 1..ra.len() {
            let d = (ra[i] - ra[j]).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (ra[i] + ra[j]) / 2.0));
            }
        }
    }
    if let Some((d, loc)) = best {
        if d < th.collision {
            return Ok(Some(SingularEvent { location: loc, kind: SingularKind::RootCollision, t, distance: d }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct WhithamRhs {
    pub a_dot: ComplexPoly,
    pub b_dot: ComplexPoly,
    /// max coefficient of -2 bdot a + b adot - (-2 lambda a c' + a c + lambda a' c), relative
    pub residual: f64,
}

/// -2 lambda a c' + a c + lambda a' c
fn integrability_rhs(a: &ComplexPoly, cc: &ComplexPoly) -> ComplexPoly {
    let lam = ComplexPoly::new(vec![c(0.0, 0.0), c(1.0, 0.0)]);
    let t1 = lam.mul(a).mul(&cc.derivative()).scale(c(-2.0, 0.0));
    let t2 = a.mul(cc);
    let t3 = lam.mul(&a.derivative()).mul(cc);
    t1.add(&t2).add(&t3)
}

pub fn integrability_residual(data: &SpectralDataAB, cc: &ComplexPoly, a_dot: &ComplexPoly, b_dot: &ComplexPoly) -> f64 {
    let lhs = data.a.mul(b_dot).scale(c(-2.0, 0.0)).add(&data.b.mul(a_dot));
    let rhs = integrability_rhs(&data.a, cc);
    let scale = lhs.max_abs_coeff().max(rhs.max_abs_coeff()).max(data.a.max_abs_coeff() * data.b.max_abs_coeff());
    lhs.sub(&rhs).max_abs_coeff() / scale.max(1e-300)
}

/// Solves -2 bdot a + b adot = -2 lambda a c' + a c + lambda a' c for adot of kind A
/// and bdot of kind B, with Re(adot(0)/a(0)) = 0, as a real least-squares system.
pub fn whitham_rhs(data: &SpectralDataAB, def: &DeformationPoly, th: &SingularThresholds) -> Result<WhithamRhs> {
    let g = data.genus();
    if def.c.is_zero() {
        return Ok(WhithamRhs { a_dot: ComplexPoly::zero(), b_dot: ComplexPoly::zero(), residual: 0.0 });
    }
    if let Some(ev) = detect_singularity(data, 0.0, &SingularThresholds { common_root: th.common_root, collision: 0.0, circle: 0.0 })? {
        return Err(Error::Singular(Box::new(ev)));
    }
    let ba = RealityClass::new(RealityKind::A, g).real_basis();
    let bb = RealityClass::new(RealityKind::B, g).real_basis();
    let rhs = integrability_rhs(&data.a, &def.c);
    let ncoef = 3 * g + 2;
    let nu = ba.len() + bb.len();
    let nrow = 2 * ncoef + 1;
    let mut m = DMatrix::<f64>::zeros(nrow, nu);
    let mut r = DVector::<f64>::zeros(nrow);
    let a0 = data.a.coeff(0);
    let put = |col: usize, p: &ComplexPoly, norm0: Option<C64>, m: &mut DMatrix<f64>| {
        for k in 0..ncoef {
            let v = p.coeff(k);
            m[(2 * k, col)] = v.re;
            m[(2 * k + 1, col)] = v.im;
        }
        if let Some(x) = norm0 {
            m[(2 * ncoef, col)] = x.re;
        }
    };
    for (j, v) in ba.iter().enumerate() {
        let e = ComplexPoly::new(v.clone());
        put(j, &data.b.mul(&e), Some(e.coeff(0) / a0), &mut m);
    }
    for (j, v) in bb.iter().enumerate() {
        let e = ComplexPoly::new(v.clone());
        put(ba.len() + j, &data.a.mul(&e).scale(c(-2.0, 0.0)), Some(C64::default()), &mut m);
    }
    for k in 0..ncoef {
        r[2 * k] = rhs.coeff(k).re;
        r[2 * k + 1] = rhs.coeff(k).im;
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(&r, 1e-13 * smax).map_err(|e| Error::Solve(e.to_string()))?;
    let combine = |basis: &[Vec<C64>], xs: &[f64]| {
        let n = basis[0].len();
        let mut out = vec![C64::default(); n];
        for (v, &w) in basis.iter().zip(xs) {
            for (o, z) in out.iter_mut().zip(v) {
                *o += z * w;
            }
        }
        ComplexPoly::new(out)
    };
    let xs: Vec<f64> = x.iter().copied().collect();
    let a_dot = combine(&ba, &xs[..ba.len()]);
    let b_dot = combine(&bb, &xs[ba.len()..]);
    let residual = integrability_residual(data, &def.c, &a_dot, &b_dot);
    Ok(WhithamRhs { a_dot, b_dot, residual })
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub data: SpectralDataAB,
    pub roots_a: Vec<C64>,
    pub roots_b: Vec<C64>,
    pub t: f64,
}

impl FlowState {
    pub fn new(data: SpectralDataAB, t: f64) -> Result<Self> {
        let roots_a = roots_or_empty(&data.a)?;
        let roots_b = roots_or_empty(&data.b)?;
        Ok(FlowState { data, roots_a, roots_b, t })
    }

    pub fn abs_tau(&self) -> f64 {
        self.data.tau.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub t_end: f64,
    pub dt: f64,
    pub thresholds: SingularThresholds,
    /// symmetrization residual above which the step is halved
    pub reality_tol: f64,
    pub max_halvings: u32,
    /// evaluate the h-values at the branch points every this many steps (0: never)
    pub mu_check_every: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { t_end: 0.5, dt: 1e-3, thresholds: SingularThresholds::default(), reality_tol: 1e-6, max_halvings: 8, mu_check_every: 0 }
    }
}

/// Diagnostics of one accepted step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepResiduals {
    pub integrability: f64,
    pub reality_a: f64,
    pub reality_b: f64,
    pub b0_projection: f64,
    /// roots of a from the coefficient flow vs. the root ODE
    pub root_drift: f64,
    /// max distance of h to i pi Z at lambda = 1 and the roots of a, when checked
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_pin: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowRecord {
    pub state: FlowState,
    /// c(0)/b(0) of the deformation chosen at this state
    pub c0_over_b0: C64,
    pub residuals: StepResiduals,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<FlowRecord>,
    pub event: Option<SingularEvent>,
    pub chooser: String,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        &self.records.last().expect("trajectory has the initial state").state
    }

    /// One JSON object per record.
    pub fn write_ndjson(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            let line = TrajectoryLine {
                t: r.state.t,
                abs_tau: r.state.abs_tau(),
                data: SpectralDataJson::from(&r.state.data),
                residuals: r.residuals.clone(),
                event: None,
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        if let Some(ev) = &self.event {
            let last = self.last();
            let line = TrajectoryLine { t: ev.t, abs_tau: last.abs_tau(), data: SpectralDataJson::from(&last.data), residuals: StepResiduals::default(), event: Some(ev.clone()) };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub t: f64,
    pub abs_tau: f64,
    #[serde(flatten)]
    pub data: SpectralDataJson,
    pub residuals: StepResiduals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<SingularEvent>,
}

fn checked_c(ch: &dyn DeformationChooser, d: &SpectralDataAB, t: f64) -> Result<DeformationPoly> {
    let def = ch.choose(d, t)?;
    let scale = d.b.max_abs_coeff().max(def.c.max_abs_coeff()).max(1e-300);
    if def.closing_residual(&d.b) > 1e-9 * scale || def.reality_residual() > 1e-9 * scale || def.c.degree() > d.genus() + 1 {
        return Err(Error::InvalidInput(format!(
            "chooser '{}' returned an inadmissible c (c(1), Im c(0)/b(0) residual {:.3e}, reality {:.3e})",
            ch.name(),
            def.closing_residual(&d.b),
            def.reality_residual()
        )));
    }
    Ok(def)
}

struct Stage {
    a_dot: ComplexPoly,
    b_dot: ComplexPoly,
    root_v: Vec<C64>,
    integrability: f64,
}

fn stage(ch: &dyn DeformationChooser, d: &SpectralDataAB, roots: &[C64], t: f64, th: &SingularThresholds) -> Result<(Stage, C64)> {
    let def = checked_c(ch, d, t)?;
    let rhs = whitham_rhs(d, &def, th)?;
    let root_v = roots.iter().map(|&x| -x * def.c.eval(x) / d.b.eval(x)).collect();
    let ratio = if def.c.is_zero() { C64::default() } else { def.c.coeff(0) / d.b.coeff(0) };
    Ok((Stage { a_dot: rhs.a_dot, b_dot: rhs.b_dot, root_v, integrability: rhs.residual }, ratio))
}

fn shifted(d: &SpectralDataAB, s: &Stage, h: f64) -> SpectralDataAB {
    SpectralDataAB { a: d.a.add(&s.a_dot.scale(c(h, 0.0))), b: d.b.add(&s.b_dot.scale(c(h, 0.0))), tau: d.tau, theta: d.theta }
}

/// Symmetrizes, restores |a(0)| = 1/16 (with b scaled by the square root of the same factor),
/// puts b(0) back on the ray e^{i Theta/2} R and updates Theta and tau.
fn normalize(d: &SpectralDataAB) -> Result<(SpectralDataAB, f64, f64, f64)> {
    let g = d.genus();
    let (a, ra) = RealityClass::new(RealityKind::A, g).symmetrize(&d.a)?;
    let (b, rb) = RealityClass::new(RealityKind::B, g).symmetrize(&d.b)?;
    let s = 1.0 / (16.0 * a.coeff(0).norm());
    let a = a.scale(c(s, 0.0));
    let b = b.scale(c(s.sqrt(), 0.0));
    let theta = (-a.coeff(0)).arg();
    let ray = C64::from_polar(1.0, theta / 2.0);
    let b0 = b.coeff(0);
    let proj = ray * (b0 / ray).re;
    let mut bc = b.coeffs().to_vec();
    bc.resize(g + 2, C64::default());
    let moved = (proj - b0).norm();
    bc[0] = proj;
    bc[g + 1] = -proj.conj();
    let b = ComplexPoly::new(bc);
    let tau = -32.0 * proj * C64::from_polar(1.0, -theta);
    Ok((SpectralDataAB { a, b, tau, theta }, ra, rb, moved))
}

fn nearest_match(xs: &[C64], ys: &[C64]) -> f64 {
    xs.iter().map(|x| ys.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Max distance of h to i pi Z at lambda = 1 and at the roots of a.
pub fn mu_pin_residual(data: &SpectralDataAB) -> Result<f64> {
    let curve = SpectralCurve::new(data.a.clone())?;
    let branch = NuBranch::new(&curve)?;
    let mut hi = HIntegrator::new(&curve, &data.b);
    let mut worst: f64 = 0.0;
    let mut targets = vec![c(1.0, 0.0)];
    targets.extend(curve.branch_points.iter().copied());
    for t in targets {
        for h in hi.h_at(&branch, t)? {
            worst = worst.max(dist_to_ipiz(h));
        }
    }
    Ok(worst)
}

/// RK4 on the coefficients of (a, b) with the roots of a carried along by
/// alpha' = -alpha c(alpha)/b(alpha) as a cross-check.
pub fn flow(start: &FlowState, ch: &dyn DeformationChooser, opts: &FlowOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= start.t) {
        return Err(Error::InvalidInput(format!("flow needs dt > 0 and T >= t0 (dt = {}, T = {})", opts.dt, opts.t_end)));
    }
    let ratio_at = |st: &FlowState| -> C64 {
        match checked_c(ch, &st.data, st.t) {
            Ok(def) if !def.c.is_zero() => def.c.coeff(0) / st.data.b.coeff(0),
            _ => C64::default(),
        }
    };
    let mut records = vec![FlowRecord { state: start.clone(), c0_over_b0: ratio_at(start), residuals: StepResiduals::default() }];
    let mut cur = start.clone();
    let mut step_no = 0usize;
    let th = opts.thresholds;
    while cur.t < opts.t_end - 1e-12 * opts.dt.max(1.0) {
        if let Some(ev) = detect_singularity(&cur.data, cur.t, &th)? {
            log::warn!("flow halted: {ev}");
            return Ok(Trajectory { records, event: Some(ev), chooser: ch.name().to_string() });
        }
        let mut h = opts.dt.min(opts.t_end - cur.t);
        let mut halvings = 0;
        let (next, res) = loop {
            match rk4_step(&cur, ch, h, &th) {
                Ok((next, _, res)) if res.reality_a.max(res.reality_b) <= opts.reality_tol * (1.0 + next.data.a.max_abs_coeff()) => break (next, res),
                Ok((_, _, res)) => {
                    if halvings >= opts.max_halvings {
                        return Err(Error::Solve(format!("reality residual {:.3e} persists after {halvings} step halvings", res.reality_a.max(res.reality_b))));
                    }
                }
                Err(Error::Singular(ev)) => {
                    let mut ev = *ev;
                    ev.t = cur.t;
                    log::warn!("flow halted: {ev}");
                    return Ok(Trajectory { records, event: Some(ev), chooser: ch.name().to_string() });
                }
                Err(e) => return Err(e),
            }
            halvings += 1;
            h *= 0.5;
        };
        step_no += 1;
        let mut res = res;
        if opts.mu_check_every > 0 && step_no % opts.mu_check_every == 0 {
            res.mu_pin = Some(mu_pin_residual(&next.data)?);
        }
        cur = next;
        records.push(FlowRecord { c0_over_b0: ratio_at(&cur), state: cur.clone(), residuals: res });
    }
    let event = detect_singularity(&cur.data, cur.t, &th)?;
    Ok(Trajectory { records, event, chooser: ch.name().to_string() })
}

fn rk4_step(cur: &FlowState, ch: &dyn DeformationChooser, h: f64, th: &SingularThresholds) -> Result<(FlowState, C64, StepResiduals)> {
    let d0 = &cur.data;
    let r0 = &cur.roots_a;
    let t = cur.t;
    let advance = |rs: &[C64], v: &[C64], k: f64| -> Vec<C64> { rs.iter().zip(v).map(|(r, w)| r + w * k).collect() };
    let (k1, ratio) = stage(ch, d0, r0, t, th)?;
    let (k2, _) = stage(ch, &shifted(d0, &k1, h / 2.0), &advance(r0, &k1.root_v, h / 2.0), t + h / 2.0, th)?;
    let (k3, _) = stage(ch, &shifted(d0, &k2, h / 2.0), &advance(r0, &k2.root_v, h / 2.0), t + h / 2.0, th)?;
    let (k4, _) = stage(ch, &shifted(d0, &k3, h), &advance(r0, &k3.root_v, h), t + h, th)?;
    let w = |x: &ComplexPoly, y: &ComplexPoly, z: &ComplexPoly, u: &ComplexPoly| {
        x.add(&y.scale(c(2.0, 0.0))).add(&z.scale(c(2.0, 0.0))).add(u).scale(c(h / 6.0, 0.0))
    };
    let raw = SpectralDataAB {
        a: d0.a.add(&w(&k1.a_dot, &k2.a_dot, &k3.a_dot, &k4.a_dot)),
        b: d0.b.add(&w(&k1.b_dot, &k2.b_dot, &k3.b_dot, &k4.b_dot)),
        tau: d0.tau,
        theta: d0.theta,
    };
    let roots_pred: Vec<C64> = (0..r0.len())
        .map(|i| r0[i] + (k1.root_v[i] + k2.root_v[i] * 2.0 + k3.root_v[i] * 2.0 + k4.root_v[i]) * (h / 6.0))
        .collect();
    // the root drift is measured before the |a(0)| rescaling, which does not move roots
    let roots_raw = roots_or_empty(&raw.a)?;
    let root_drift = nearest_match(&roots_pred, &roots_raw);
    let (data, reality_a, reality_b, b0_projection) = normalize(&raw)?;
    let integrability = [k1.integrability, k2.integrability, k3.integrability, k4.integrability].into_iter().fold(0.0, f64::max);
    let next = FlowState::new(data, t + h)?;
    Ok((next, ratio, StepResiduals { integrability, reality_a, reality_b, b0_projection, root_drift, mu_pin: None }))
}

/// a~ = (1 - conj(alpha0) lambda)^2 (lambda - alpha0)^2 a, b~ = (1 - conj(alpha0) lambda)(lambda - alpha0) b,
/// rescaled by 1/|alpha0|^2 and 1/|alpha0| so that |a~(0)| = 1/16; Theta~ = arg(-a~(0)).
pub fn add_double_point(data: &SpectralDataAB, alpha0: C64) -> Result<SpectralDataAB> {
    let r = alpha0.norm();
    if (r - 1.0).abs() < 1e-9 {
        return Err(Error::Unsupported(format!("opening a double point on the unit circle (alpha0 = {alpha0})")));
    }
    if !(r > 1e-12) {
        return Err(Error::InvalidInput("alpha0 = 0".into()));
    }
    let curve = SpectralCurve::new(data.a.clone())?;
    let branch = NuBranch::new(&curve)?;
    let hs = HIntegrator::new(&curve, &data.b).h_at(&branch, alpha0)?;
    let res = hs.iter().map(|&h| dist_to_ipiz(h)).fold(f64::INFINITY, f64::min);
    if res > 1e-6 {
        return Err(Error::InvalidInput(format!("mu(alpha0)^2 != 1 at alpha0 = {alpha0} (ln mu is {res:.3e} from i pi Z)")));
    }
    let q = ComplexPoly::new(vec![-alpha0, c(1.0, 0.0)]).mul(&ComplexPoly::new(vec![c(1.0, 0.0), -alpha0.conj()]));
    let a = q.mul(&q).mul(&data.a).scale(c(1.0 / (r * r), 0.0));
    let b = q.mul(&data.b).scale(c(1.0 / r, 0.0));
    let theta = (-a.coeff(0)).arg();
    let tau = -32.0 * b.coeff(0) * C64::from_polar(1.0, -theta);
    Ok(SpectralDataAB { a, b, tau, theta })
}

/// Monic polynomial part of w^l (1 - 2/w)^{-1/2}, coefficients by ascending power.
pub fn qhat(l: usize) -> Vec<Ratio<i64>> {
    assert!(l >= 1, "qhat needs l >= 1");
    // (1 - x)^{-1/2} = sum (2k-1)!!/(2^k k!) x^k, x = 2/w
    let mut coeff = Ratio::from_integer(1i64);
    let mut out = vec![Ratio::from_integer(0); l + 1];
    for k in 0..=l {
        if k > 0 {
            coeff = coeff * Ratio::new(2 * k as i64 - 1, k as i64);
        }
        out[l - k] = coeff;
    }
    out
}

/// (2l+1)(w-2) q - w q - 2 w (w-2) q' in exact arithmetic.
pub fn qhat_identity(l: usize) -> Vec<Ratio<i64>> {
    let q = qhat(l);
    let n = q.len() + 1;
    let mut out = vec![Ratio::from_integer(0i64); n];
    let two = Ratio::from_integer(2i64);
    let k = Ratio::from_integer(2 * l as i64 + 1);
    for (j, &a) in q.iter().enumerate() {
        // (2l+1)(w - 2) a w^j - a w^{j+1}
        out[j + 1] += k * a - a;
        out[j] -= k * two * a;
        if j > 0 {
            // -2 w (w - 2) j a w^{j-1}
            let d = a * Ratio::from_integer(j as i64);
            out[j + 1] -= two * d;
            out[j] += two * two * d;
        }
    }
    out
}

/// (1*3*...*(2l+1)/l!)(-2)
pub fn qhat_constant(l: usize) -> Ratio<i64> {
    let mut num = 1i64;
    for k in 1..=l + 1 {
        num *= 2 * k as i64 - 1;
    }
    let mut den = 1i64;
    for k in 1..=l {
        den *= k as i64;
    }
    Ratio::new(-2 * num, den)
}
