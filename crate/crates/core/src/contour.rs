//! Contour machinery shared by the time-domain methods.
//!
//! Every propagator element between two endpoints is written as
//! `(1/2 pi i) oint e^{it(lambda + 1/lambda)} (-1 + 1/lambda^2) K(lambda) dlambda`
//! over a small clockwise circle around `lambda = 0`, with
//! `K(lambda) = sum_n c_n lambda_n S(lambda) / (lambda - lambda_n)`,
//! `c_n = psi_n[a] psi_n[b]` and `S(lambda) = lambda f_a(lambda) f_b(lambda)`.
//! The endpoint factors `f` are 1 on the dot, `t lambda^x` on a lead site,
//! a geometric series for a lead wave packet, and the sine-mode transform for
//! a lead plane wave.
//!
//! Three evaluations of that integral are provided:
//! * the unit circle, where the integrand is bounded and periodic in `k`,
//!   plus residues of poles inside the disk;
//! * the steepest-descent paths through `lambda = +-1`, exactly;
//! * the same paths in the saddle-point approximation (`|t|^{-3/2}` terms).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::greens::g_eff_direct;
use crate::model::{OpenLatticeModel, SheetPoint};
use crate::quad;
use crate::spectral::{SpectralSolution, UNIT_TOL};
use crate::{CMatrix, C64};

/// Poles closer than this to a contour are rejected.
pub const CONTOUR_GUARD: f64 = 1e-6;
/// Largest trapezoid size tried on the unit circle.
pub const MAX_CIRCLE_NODES: usize = 1 << 20;

/// Endpoint factor `f(lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// Dot site.
    Unit,
    /// Lead site `x`: `t lambda^x`.
    Power {
        /// Coupling of the lead to the dot.
        coupling: f64,
        /// Lead coordinate.
        x: u32,
    },
    /// Lead plane wave `sqrt(2) sin(kx)`:
    /// `(t / sqrt(2) i) (lambda / (lambda - e^{ik}) - lambda / (lambda - e^{-ik}))`.
    Plane {
        /// Coupling of the lead to the dot.
        coupling: f64,
        /// Momentum in `(0, pi)`.
        k: f64,
    },
    /// Lead amplitudes `w[x-1]`: `t sum_x w[x-1] lambda^x`.
    Weights {
        /// Coupling of the lead to the dot.
        coupling: f64,
        /// Amplitudes on `x = 1, 2, ...`.
        w: Vec<C64>,
    },
}

impl Factor {
    /// Value and first derivative.
    pub fn jet(&self, l: C64) -> (C64, C64) {
        let one = C64::from(1.0);
        match self {
            Factor::Unit => (one, C64::from(0.0)),
            Factor::Power { coupling, x } => {
                if *x == 0 {
                    return (C64::from(*coupling), C64::from(0.0));
                }
                let p = l.powu(x - 1);
                (p * l * *coupling, p * (*x as f64 * *coupling))
            }
            Factor::Plane { coupling, k } => {
                let a = C64::from_polar(1.0, *k);
                let b = a.conj();
                let pre = C64::new(0.0, -coupling * FRAC_1_SQRT_2);
                let (da, db) = (l - a, l - b);
                let v = pre * (l / da - l / db);
                let d = pre * (-a / (da * da) + b / (db * db));
                (v, d)
            }
            Factor::Weights { coupling, w } => {
                // Horner on lambda * (w0 + lambda w1 + ...).
                let mut p = C64::from(0.0);
                let mut dp = C64::from(0.0);
                for c in w.iter().rev() {
                    dp = dp * l + p;
                    p = p * l + *c;
                }
                ((p * l) * *coupling, (p + dp * l) * *coupling)
            }
        }
    }

    /// Value only.
    pub fn value(&self, l: C64) -> C64 {
        match self {
            Factor::Power { coupling, x } => l.powu(*x) * *coupling,
            _ => self.jet(l).0,
        }
    }

    /// Largest power of `lambda` carried by the factor.
    pub fn degree(&self) -> u32 {
        match self {
            Factor::Unit | Factor::Plane { .. } => 0,
            Factor::Power { x, .. } => *x,
            Factor::Weights { w, .. } => w.len() as u32,
        }
    }
}

/// One end of a propagator element: a dot index and a factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Endpoint {
    /// Dot site the endpoint couples through (zero-based).
    pub dot: usize,
    /// Endpoint factor.
    pub factor: Factor,
}

impl Endpoint {
    /// Dot site.
    pub fn dot(i: usize) -> Self {
        Self { dot: i, factor: Factor::Unit }
    }
}

/// Gudermannian `gd(rho) = atan(sinh rho)`.
pub fn gd(rho: f64) -> f64 {
    rho.sinh().atan()
}

/// Signed angular margin of `lambda` inside the region bounded by the
/// steepest-descent paths for time sign `s` (positive inside).
///
/// For `t > 0` the region is `gd(ln r) < arg lambda < pi - gd(ln r)`:
/// the upper half plane outside the unit disk minus thin slivers along the
/// real axis, and nearly all of the unit disk. For `t < 0` it is mirrored.
pub fn region_margin(lambda: C64, s: f64) -> f64 {
    let l = if s < 0.0 { lambda.conj() } else { lambda };
    let r = l.norm();
    let g = gd(r.ln());
    let mut th = l.arg();
    if th < -PI / 2.0 {
        th += 2.0 * PI;
    }
    r * (th - g).min(PI - g - th)
}

/// `lambda` on the descent path through `sigma` for time sign `s`.
fn path_point(sigma: f64, s: f64, rho: f64) -> (C64, C64) {
    let l = C64::from_polar(rho.exp(), sigma * s * gd(rho)) * sigma;
    let dl = l * C64::new(1.0, sigma * s / rho.cosh());
    (l, dl)
}

/// Sink/source pair with spectral data; evaluates `K` and the residues.
pub struct PoleKernel<'a> {
    sol: &'a SpectralSolution,
    sink: &'a Endpoint,
    source: &'a Endpoint,
    weights: Vec<C64>,
}

impl<'a> PoleKernel<'a> {
    /// Kernel for `<sink| e^{-iHt} |source>`.
    pub fn new(sol: &'a SpectralSolution, sink: &'a Endpoint, source: &'a Endpoint) -> Result<Self> {
        let n = sol.n_sites();
        if sink.dot >= n || source.dot >= n {
            return Err(Error::BadSiteIndex { site: sink.dot.max(source.dot) + 1, n });
        }
        if matches!(source.factor, Factor::Plane { .. }) {
            return Err(Error::BadArgument("plane waves are supported as sink only".into()));
        }
        let weights = sol.states.iter().map(|s| s.psi[sink.dot] * s.psi[source.dot]).collect();
        Ok(Self { sol, sink, source, weights })
    }

    /// `c_n = psi_n[a] psi_n[b]`.
    pub fn weight(&self, n: usize) -> C64 {
        self.weights[n]
    }

    fn s_jet(&self, l: C64) -> (C64, C64) {
        let (f, df) = self.sink.factor.jet(l);
        let (g, dg) = self.source.factor.jet(l);
        (l * f * g, f * g + l * (df * g + f * dg))
    }

    /// `K(lambda)` from the state sum.
    pub fn k_value(&self, l: C64) -> C64 {
        let s = self.s_jet(l).0;
        let mut acc = C64::from(0.0);
        for (n, st) in self.sol.states.iter().enumerate() {
            acc += self.weights[n] * st.lambda / (l - st.lambda);
        }
        acc * s
    }

    /// `dK/dlambda`.
    pub fn k_derivative(&self, l: C64) -> C64 {
        let (s, ds) = self.s_jet(l);
        let mut acc = C64::from(0.0);
        for (n, st) in self.sol.states.iter().enumerate() {
            let d = l - st.lambda;
            acc += self.weights[n] * st.lambda * (ds / d - s / (d * d));
        }
        acc
    }

    /// Residue of the integrand at `lambda_n`, i.e. the full pole term
    /// `e^{-i E_n t} (1 - lambda_n^2) c_n f_a(lambda_n) f_b(lambda_n)`.
    pub fn residue(&self, n: usize, t: f64) -> C64 {
        let st = &self.sol.states[n];
        let l = st.lambda;
        let phase = (C64::new(0.0, -t) * st.energy).exp();
        phase * (C64::from(1.0) - l * l) * self.weights[n] * self.sink.factor.value(l) * self.source.factor.value(l)
    }

    /// Residue at the plane-wave pole `e^{ik}` (`t > 0`) or `e^{-ik}` (`t < 0`).
    pub fn plane_residue(&self, t: f64) -> C64 {
        let Factor::Plane { coupling, k } = self.sink.factor else {
            return C64::from(0.0);
        };
        let (a, sign) = if t > 0.0 { (C64::from_polar(1.0, k), 1.0) } else { (C64::from_polar(1.0, -k), -1.0) };
        let pre = C64::new(0.0, -coupling * FRAC_1_SQRT_2);
        let res_f = pre * a * sign;
        let mut sum = C64::from(0.0);
        for (n, st) in self.sol.states.iter().enumerate() {
            sum += self.weights[n] * st.lambda / (a - st.lambda);
        }
        let phase = (C64::new(0.0, t) * (a + a.inv())).exp();
        phase * (C64::from(-1.0) + (a * a).inv()) * sum * a * self.source.factor.value(a) * res_f
    }

    /// Saddle-point branch term
    /// `sgn(t) sqrt(pi) / (2 pi i |t|^{3/2}) sum_sigma sigma K'(sigma) e^{3 sigma sgn(t) i pi/4} e^{2 sigma i t}`.
    pub fn saddle_branch(&self, t: f64) -> C64 {
        let s = t.signum();
        let at = t.abs();
        let pre = C64::new(0.0, -1.0) * (s * PI.sqrt() / (2.0 * PI * at * at.sqrt()));
        let mut acc = C64::from(0.0);
        for sigma in [1.0, -1.0] {
            let kd = self.k_derivative(C64::from(sigma));
            let phase = C64::from_polar(1.0, 3.0 * sigma * s * PI / 4.0 + 2.0 * sigma * t);
            acc += kd * phase * sigma;
        }
        pre * acc
    }

    /// Exact branch term: `-(sgn t / 2 pi i) sum_sigma sigma int_{P_sigma} F dlambda`
    /// along the steepest-descent paths. Returns the value and the largest
    /// integrand scale (for cancellation warnings).
    pub fn descent_branch(&self, t: f64) -> Result<(C64, f64)> {
        let s = t.signum();
        let at = t.abs();
        for (n, st) in self.sol.states.iter().enumerate() {
            if region_margin(st.lambda, s).abs() < CONTOUR_GUARD && self.weights[n].norm() > 0.0 {
                return Err(Error::ContourPoleConflict { index: n });
            }
        }
        let deg = (self.sink.factor.degree() + self.source.factor.degree()) as f64;
        let v = |rho: f64| 2.0 * rho.sinh().powi(2) / rho.cosh();
        let mut hi: f64 = 0.25;
        while at * v(hi) - (deg + 2.0) * hi < 40.0 && hi < 60.0 {
            hi *= 1.25;
        }
        let mut lo: f64 = 0.25;
        while at * v(lo) - 2.0 * lo < 40.0 && lo < 60.0 {
            lo *= 1.25;
        }
        let lo = -lo;
        let step = (0.5f64).min(1.0 / at.sqrt()) * 0.5;
        let initial = (((hi - lo) / step).ceil() as usize).clamp(8, 4000);
        let mut total = C64::from(0.0);
        let mut peak: f64 = 0.0;
        for sigma in [1.0, -1.0] {
            let f = |rho: f64| {
                let (l, dl) = path_point(sigma, s, rho);
                let mag = (-at * v(rho)).exp();
                if mag == 0.0 {
                    return C64::from(0.0);
                }
                let e = C64::from_polar(mag, 2.0 * sigma * t);
                e * (C64::from(-1.0) + (l * l).inv()) * self.k_value(l) * dl
            };
            let r = quad::integrate(f, lo, hi, initial, 1e-15, 1e-13, 200_000);
            if !r.converged {
                return Err(Error::QuadratureFail(format!("descent path sigma = {sigma} at t = {t}")));
            }
            total += r.value * sigma;
            peak = peak.max(r.peak);
        }
        let pre = C64::new(0.0, 1.0) * (s / (2.0 * PI));
        Ok((pre * total, peak))
    }

    /// States whose pole is enclosed for time sign `s`.
    pub fn enclosed(&self, s: f64) -> Vec<usize> {
        (0..self.sol.states.len()).filter(|&n| region_margin(self.sol.states[n].lambda, s) > 0.0).collect()
    }
}

/// Where the dot-space part of a unit-circle integrand comes from.
#[derive(Clone, Copy, Debug)]
pub enum DotPart<'a> {
    /// Full `G_eff` by direct inversion, with residues of every state inside
    /// the unit disk.
    Direct(&'a OpenLatticeModel),
    /// The single term of state `n` in the expansion, with its residue when
    /// `|lambda_n| < 1`.
    State(usize),
    /// No dot-mediated part (free lead term only).
    Skip,
}

/// Sink of a unit-circle evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleSink {
    /// Dot site and factor (`Unit` or `Power`).
    pub end: Endpoint,
    /// Lead coordinate when the sink sits on the source's lead (adds the free term).
    pub free_x: Option<u32>,
}

/// Source of a unit-circle evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleSource {
    /// Dot site and factor (`Unit`, `Power` or `Weights`).
    pub end: Endpoint,
    /// Amplitudes on the source lead (`x = 1, 2, ...`) for the free term.
    pub free_weights: Option<Vec<C64>>,
}

/// Evaluates propagator elements for many sinks and times on the unit circle.
///
/// Returns `values[time][sink]` and the number of trapezoid nodes used.
pub fn circle_propagate(
    sol: &SpectralSolution,
    part: DotPart<'_>,
    sinks: &[CircleSink],
    source: &CircleSource,
    times: &[f64],
    tol: f64,
) -> Result<(Vec<Vec<C64>>, usize)> {
    let n_states = sol.states.len();
    for s in sinks {
        if matches!(s.end.factor, Factor::Plane { .. } | Factor::Weights { .. }) {
            return Err(Error::BadArgument("circle sinks must be dot or lead sites".into()));
        }
    }
    if matches!(source.end.factor, Factor::Plane { .. }) {
        return Err(Error::BadArgument("circle source cannot be a plane wave".into()));
    }
    // Residues for poles inside the disk.
    let residue_states: Vec<usize> = match part {
        DotPart::Direct(_) => (0..n_states).collect(),
        DotPart::State(n) => {
            if n >= n_states {
                return Err(Error::BadArgument(format!("state index {n} out of range")));
            }
            vec![n]
        }
        DotPart::Skip => Vec::new(),
    };
    for &n in &residue_states {
        if (sol.states[n].lambda.norm() - 1.0).abs() <= UNIT_TOL {
            return Err(Error::ContourPoleConflict { index: n });
        }
    }
    let inside: Vec<usize> = residue_states.into_iter().filter(|&n| sol.states[n].lambda.norm() < 1.0).collect();

    let mut out = vec![vec![C64::from(0.0); sinks.len()]; times.len()];
    for &n in &inside {
        let st = &sol.states[n];
        let l = st.lambda;
        let src = source.end.factor.value(l) * st.psi[source.end.dot];
        let pre = (C64::from(1.0) - l * l) * src;
        for (ti, &t) in times.iter().enumerate() {
            let phase = (C64::new(0.0, -t) * st.energy).exp() * pre;
            for (si, s) in sinks.iter().enumerate() {
                out[ti][si] += phase * st.psi[s.end.dot] * s.end.factor.value(l);
            }
        }
    }

    // Trapezoid on k in [-pi, pi), doubled until stable.
    let tmax = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let deg_sink = sinks.iter().map(|s| s.end.factor.degree()).max().unwrap_or(0);
    let deg_src = source.end.factor.degree().max(source.free_weights.as_ref().map_or(0, |w| w.len() as u32));
    let need = 2.0 * tmax + (deg_sink + deg_src) as f64 + 64.0;
    let mut m = 128usize;
    while (m as f64) < need {
        m *= 2;
    }
    let n_dot = sol.n_sites();
    let mut sums = vec![vec![C64::from(0.0); sinks.len()]; times.len()];
    let mut have = false;
    let mut prev: Vec<Vec<C64>> = Vec::new();
    let mut level_m = m;
    let mut h = vec![C64::from(0.0); sinks.len()];
    loop {
        // Nodes belonging to this level only.
        let (count, stride, offset) = if have { (level_m / 2, 2, 1) } else { (level_m, 1, 0) };
        let dk = 2.0 * PI / level_m as f64;
        let mut level_sum = vec![vec![C64::from(0.0); sinks.len()]; times.len()];
        for j in 0..count {
            let k = -PI + dk * (stride * j + offset) as f64;
            let sk = k.sin();
            let lam = C64::from_polar(1.0, k);
            let dot_mat: Option<CMatrix> = match part {
                DotPart::Direct(model) => {
                    if sk == 0.0 {
                        None
                    } else {
                        let g = g_eff_direct(model, &SheetPoint::from_lambda(lam)?).map_err(|_| {
                            Error::QuadratureFail(format!("G_eff singular on the unit circle at k = {k}"))
                        })?;
                        Some(g)
                    }
                }
                DotPart::State(n) => {
                    let st = &sol.states[n];
                    let w = st.lambda * lam / (lam - st.lambda);
                    Some(&st.psi * st.psi.transpose() * w)
                }
                DotPart::Skip => None,
            };
            let src_f = source.end.factor.value(lam);
            let free_hat = source.free_weights.as_ref().map(|w| {
                let mut acc = C64::from(0.0);
                for (i, c) in w.iter().enumerate() {
                    acc += *c * (k * (i + 1) as f64).sin();
                }
                acc
            });
            for (si, s) in sinks.iter().enumerate() {
                let mut v = C64::from(0.0);
                if let Some(g) = &dot_mat {
                    let f = match s.end.factor {
                        Factor::Power { coupling, x } => C64::from_polar(coupling, k * x as f64),
                        _ => C64::from(1.0),
                    };
                    debug_assert!(s.end.dot < n_dot);
                    v += C64::new(0.0, sk / PI) * g[(s.end.dot, source.end.dot)] * f * src_f;
                }
                if let (Some(x), Some(fh)) = (s.free_x, free_hat) {
                    v += fh * ((k * x as f64).sin() / PI);
                }
                h[si] = v;
            }
            let ck = 2.0 * k.cos();
            for (ti, &t) in times.iter().enumerate() {
                let e = C64::from_polar(1.0, t * ck);
                let row = &mut level_sum[ti];
                for si in 0..sinks.len() {
                    row[si] += e * h[si];
                }
            }
        }
        for ti in 0..times.len() {
            for si in 0..sinks.len() {
                let v = level_sum[ti][si] * dk;
                sums[ti][si] = if have { sums[ti][si] * 0.5 + v } else { v };
            }
        }
        if have {
            let mut diff: f64 = 0.0;
            for ti in 0..times.len() {
                for si in 0..sinks.len() {
                    diff = diff.max((sums[ti][si] - prev[ti][si]).norm());
                }
            }
            if diff <= tol {
                break;
            }
        }
        if level_m >= MAX_CIRCLE_NODES {
            return Err(Error::QuadratureFail(format!(
                "unit-circle trapezoid not converged at {level_m} nodes"
            )));
        }
        prev = sums.clone();
        have = true;
        level_m *= 2;
    }
    for ti in 0..times.len() {
        for si in 0..sinks.len() {
            out[ti][si] += sums[ti][si];
        }
    }
    Ok((out, level_m))
}
