//! Time evolution: survival and escape amplitudes, wave packets.
//!
//! Three evaluations are available and cross-check each other:
//! * quadrature: bound-state residues plus the band integral, done as a
//!   periodic trapezoid rule in `k` on the unit circle;
//! * poles: residues of the poles enclosed by the steepest-descent paths
//!   through `lambda = +-1`, plus the branch term on those paths, either in
//!   saddle-point form (`|t|^{-3/2}`) or integrated exactly;
//! * per-state components of the same contour integral, one pole at a time.
//!
//! Dot indices are zero-based; lead coordinates start at 1.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::contour::{circle_propagate, CircleSink, CircleSource, DotPart, Endpoint, Factor, PoleKernel};
use crate::error::{Error, Result};
use crate::greens::SiteRef;
use crate::model::OpenLatticeModel;
use crate::spectral::{SpectralSolution, StateClass};
use crate::C64;

/// Default absolute tolerance of the trapezoid doubling test.
pub const DEFAULT_TOL: f64 = 1e-11;

/// How an amplitude was computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Bound residues plus band integral.
    Quadrature,
    /// Pole residues plus branch terms.
    PolesAsymptotic,
    /// Truncated-lattice propagation.
    Oracle,
}

impl Method {
    /// Name used in output files.
    pub fn name(self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::PolesAsymptotic => "poles",
            Method::Oracle => "oracle",
        }
    }
}

/// Evaluation of the branch (band-edge) group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BranchMode {
    /// Leading saddle-point term, `O(|t|^{-3/2})`.
    #[default]
    Saddle,
    /// Adaptive quadrature along the full steepest-descent paths.
    Descent,
}

/// Per-time breakdown of a pole-method amplitude.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermGroups {
    /// Resonant poles (`t > 0`) or anti-resonant poles (`t < 0`).
    pub resonant_or_ar: Vec<C64>,
    /// Real-`lambda` (and exceptional) poles.
    pub bound_ab: Vec<C64>,
    /// Branch-point contributions from `lambda = +-1`.
    pub branch_power: Vec<C64>,
    /// Plane-wave pole (escape into a momentum state only).
    pub plane_wave: Vec<C64>,
}

/// Non-fatal diagnostics attached to a series.
#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    /// A real pole lies within `3/sqrt|t|` of a band edge; saddle terms unreliable.
    SaddleOverlap {
        /// State index.
        state: usize,
        /// Time.
        t: f64,
    },
    /// The descent integrand reached a scale where round-off exceeds 1e-10.
    Cancellation {
        /// Time.
        t: f64,
        /// Largest integrand scale.
        peak: f64,
    },
}

/// Complex amplitudes on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeSeries {
    /// Times.
    pub times: Vec<f64>,
    /// Amplitudes.
    pub values: Vec<C64>,
    /// Method.
    pub method: Method,
    /// Term groups (poles method only); they sum to `values`.
    pub groups: Option<TermGroups>,
    /// Diagnostics.
    pub warnings: Vec<Warning>,
}

impl AmplitudeSeries {
    /// `|A(t)|^2`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

fn endpoint_of(model: &OpenLatticeModel, site: SiteRef) -> Result<Endpoint> {
    match site {
        SiteRef::Dot(i) => {
            model.check_site(i)?;
            Ok(Endpoint::dot(i))
        }
        SiteRef::Lead { lead, x } => {
            let l = model.lead(lead)?;
            if x == 0 {
                return Err(Error::BadArgument("lead coordinate x must be >= 1".into()));
            }
            Ok(Endpoint { dot: l.site, factor: Factor::Power { coupling: l.coupling, x } })
        }
    }
}

/// Reference amplitude `<sink| e^{-iHt} |source>` by band quadrature.
pub fn propagator_quadrature(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    sink: SiteRef,
    source: SiteRef,
    times: &[f64],
    tol: f64,
) -> Result<AmplitudeSeries> {
    sol.require_complete()?;
    let sink_end = endpoint_of(model, sink)?;
    let src_end = endpoint_of(model, source)?;
    let (free_x, free_weights) = match (sink, source) {
        (SiteRef::Lead { lead: a, x }, SiteRef::Lead { lead: b, x: y }) if a == b => {
            let mut w = vec![C64::from(0.0); y as usize];
            w[y as usize - 1] = C64::from(1.0);
            (Some(x), Some(w))
        }
        _ => (None, None),
    };
    let sinks = [CircleSink { end: sink_end, free_x }];
    let src = CircleSource { end: src_end, free_weights };
    let (vals, _) = circle_propagate(sol, DotPart::Direct(model), &sinks, &src, times, tol)?;
    Ok(AmplitudeSeries {
        times: times.to_vec(),
        values: vals.into_iter().map(|r| r[0]).collect(),
        method: Method::Quadrature,
        groups: None,
        warnings: Vec::new(),
    })
}

/// Survival amplitude `<d_j| e^{-iHt} |d_i>` by band quadrature.
pub fn survival_amplitude_quadrature(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    i: usize,
    j: usize,
    times: &[f64],
    tol: f64,
) -> Result<AmplitudeSeries> {
    propagator_quadrature(model, sol, SiteRef::Dot(j), SiteRef::Dot(i), times, tol)
}

/// Escape amplitude `<x_lead| e^{-iHt} |d_i>` by band quadrature.
pub fn escaping_amplitude_x_quadrature(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    lead: usize,
    x: u32,
    i: usize,
    times: &[f64],
    tol: f64,
) -> Result<AmplitudeSeries> {
    propagator_quadrature(model, sol, SiteRef::Lead { lead, x }, SiteRef::Dot(i), times, tol)
}

fn poles_series(
    sol: &SpectralSolution,
    sink: &Endpoint,
    source: &Endpoint,
    times: &[f64],
    mode: BranchMode,
) -> Result<AmplitudeSeries> {
    sol.require_complete()?;
    let kernel = PoleKernel::new(sol, sink, source)?;
    let mut g = TermGroups::default();
    let mut warnings = Vec::new();
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::BadArgument(format!("pole decomposition needs finite t != 0, got {t}")));
        }
        let s = t.signum();
        let mut res = C64::from(0.0);
        let mut bound = C64::from(0.0);
        for n in kernel.enclosed(s) {
            let r = kernel.residue(n, t);
            match sol.states[n].class {
                StateClass::Resonant | StateClass::AntiResonant => res += r,
                _ => bound += r,
            }
        }
        let plane = kernel.plane_residue(t);
        let branch = match mode {
            BranchMode::Saddle => {
                let reach = 3.0 / t.abs().sqrt();
                for (n, st) in sol.states.iter().enumerate() {
                    if st.class.is_real() && ((st.lambda.re - 1.0).abs() < reach || (st.lambda.re + 1.0).abs() < reach) {
                        warnings.push(Warning::SaddleOverlap { state: n, t });
                    }
                }
                kernel.saddle_branch(t)
            }
            BranchMode::Descent => {
                let (b, peak) = kernel.descent_branch(t)?;
                if peak * f64::EPSILON > 1e-10 {
                    warnings.push(Warning::Cancellation { t, peak });
                }
                b
            }
        };
        g.resonant_or_ar.push(res);
        g.bound_ab.push(bound);
        g.branch_power.push(branch);
        g.plane_wave.push(plane);
        values.push(res + bound + branch + plane);
    }
    Ok(AmplitudeSeries { times: times.to_vec(), values, method: Method::PolesAsymptotic, groups: Some(g), warnings })
}

/// Survival amplitude `<d_j| e^{-iHt} |d_i>` from poles and branch terms.
pub fn survival_amplitude_poles(
    sol: &SpectralSolution,
    i: usize,
    j: usize,
    times: &[f64],
    mode: BranchMode,
) -> Result<AmplitudeSeries> {
    poles_series(sol, &Endpoint::dot(j), &Endpoint::dot(i), times, mode)
}

/// Escape amplitude into the lead momentum state `sqrt(2) sin(kx)`.
pub fn escaping_amplitude_k(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    lead: usize,
    k: f64,
    i: usize,
    times: &[f64],
    mode: BranchMode,
) -> Result<AmplitudeSeries> {
    if !(k > 0.0 && k < core::f64::consts::PI) {
        return Err(Error::BandEdgeK(k));
    }
    model.check_site(i)?;
    let l = model.lead(lead)?;
    let sink = Endpoint { dot: l.site, factor: Factor::Plane { coupling: l.coupling, k } };
    poles_series(sol, &sink, &Endpoint::dot(i), times, mode)
}

/// Escape amplitude `<x_lead| e^{-iHt} |d_i>` from poles and branch terms.
pub fn escaping_amplitude_x(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    lead: usize,
    x: u32,
    i: usize,
    times: &[f64],
    mode: BranchMode,
) -> Result<AmplitudeSeries> {
    model.check_site(i)?;
    let sink = endpoint_of(model, SiteRef::Lead { lead, x })?;
    poles_series(sol, &sink, &Endpoint::dot(i), times, mode)
}

/// Free propagator of an isolated semi-infinite lead,
/// `int dk/2pi 2 sin(kx) sin(kx') e^{2it cos k}`, by the trapezoid rule.
///
/// The integrand is a trigonometric polynomial times `e^{2it cos k}`, so the
/// rule is exact up to Bessel tails once the node count exceeds
/// `x + x' + 2|t|` by a margin; the count is doubled until two sizes agree.
pub fn free_lead_propagator(x: u32, xp: u32, t: f64) -> C64 {
    let need = (x + xp) as f64 + 2.0 * t.abs() + 64.0;
    let mut m = 64usize;
    while (m as f64) < need {
        m *= 2;
    }
    let eval = |m: usize| {
        let dk = 2.0 * core::f64::consts::PI / m as f64;
        let mut acc = C64::from(0.0);
        for j in 0..m {
            let k = -core::f64::consts::PI + dk * j as f64;
            let w = 2.0 * (k * x as f64).sin() * (k * xp as f64).sin();
            acc += C64::from_polar(w, 2.0 * t * k.cos());
        }
        acc / m as f64
    };
    let mut prev = eval(m);
    loop {
        m *= 2;
        let next = eval(m);
        if (next - prev).norm() <= 1e-15 || m >= 1 << 22 {
            return next;
        }
        prev = next;
    }
}

/// Complex conjugation of every amplitude (time inversion of a real-H state).
pub fn time_invert(field: &[C64]) -> Vec<C64> {
    field.iter().map(|v| v.conj()).collect()
}

/// Gaussian packet `A e^{-(x - x0)^2 / w^2} e^{i k0 x}` on one lead, `x >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPacket {
    /// Lead index.
    pub lead: usize,
    /// Center.
    pub x0: f64,
    /// Width `sigma_w`.
    pub width: f64,
    /// Momentum.
    pub k0: f64,
}

impl GaussianPacket {
    /// Packet with the default shape `x0 = 40`, `sigma_w = 10`, `k0 = 0`.
    pub fn default_on(lead: usize) -> Self {
        Self { lead, x0: 40.0, width: 10.0, k0: 0.0 }
    }

    /// Last lead site kept; beyond it the envelope is below `e^{-100}`.
    pub fn support(&self) -> u32 {
        (self.x0 + 10.0 * self.width).ceil().max(1.0) as u32
    }

    /// Normalized amplitudes on `x = 1 ..= support()`.
    pub fn amplitudes(&self) -> Result<Vec<C64>> {
        if !(self.width > 0.0) || !self.x0.is_finite() || !self.k0.is_finite() {
            return Err(Error::BadArgument("packet needs finite x0, k0 and width > 0".into()));
        }
        let n = self.support() as usize;
        let mut w: Vec<C64> = (1..=n)
            .map(|x| {
                let d = (x as f64 - self.x0) / self.width;
                C64::from_polar((-d * d).exp(), self.k0 * x as f64)
            })
            .collect();
        let norm = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::BadArgument("packet has no weight on x >= 1".into()));
        }
        w.iter_mut().for_each(|v| *v /= norm);
        Ok(w)
    }
}

/// Amplitudes on every dot site and on `x = 1..=x_max` of every lead.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteField {
    /// Dot sites.
    pub dot: Vec<C64>,
    /// One vector per lead (model order), index `x - 1`.
    pub leads: Vec<Vec<C64>>,
}

impl SiteField {
    /// Zero field.
    pub fn zeros(n_dot: usize, n_leads: usize, x_max: u32) -> Self {
        Self { dot: vec![C64::from(0.0); n_dot], leads: vec![vec![C64::from(0.0); x_max as usize]; n_leads] }
    }

    /// `sum |amplitude|^2` over all stored sites.
    pub fn norm_sqr(&self) -> f64 {
        self.dot.iter().chain(self.leads.iter().flatten()).map(|v| v.norm_sqr()).sum()
    }

    /// Element-wise conjugate.
    pub fn time_inverted(&self) -> Self {
        Self { dot: time_invert(&self.dot), leads: self.leads.iter().map(|l| time_invert(l)).collect() }
    }

    /// Element-wise sum.
    pub fn add(&mut self, other: &SiteField) {
        for (a, b) in self.dot.iter_mut().zip(&other.dot) {
            *a += *b;
        }
        for (la, lb) in self.leads.iter_mut().zip(&other.leads) {
            for (a, b) in la.iter_mut().zip(lb) {
                *a += *b;
            }
        }
    }

    /// Largest element-wise difference.
    pub fn max_diff(&self, other: &SiteField) -> f64 {
        let d = self.dot.iter().zip(&other.dot).map(|(a, b)| (a - b).norm());
        let l = self.leads.iter().zip(&other.leads).flat_map(|(la, lb)| la.iter().zip(lb).map(|(a, b)| (a - b).norm()));
        d.chain(l).fold(0.0, f64::max)
    }
}

/// Label of a packet component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentTag {
    /// Free evolution on the initial lead.
    Free,
    /// Contribution of discrete state `n`.
    State(usize),
}

/// Packet field at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketFrame {
    /// Time.
    pub time: f64,
    /// Total field.
    pub total: SiteField,
    /// Components, when requested; they sum to `total`.
    pub components: Option<Vec<(ComponentTag, SiteField)>>,
}

struct PacketSetup {
    sinks: Vec<CircleSink>,
    source: CircleSource,
    n_dot: usize,
    n_leads: usize,
}

fn packet_setup(model: &OpenLatticeModel, packet: &GaussianPacket, x_max: u32, with_free: bool) -> Result<PacketSetup> {
    let lead = model.lead(packet.lead)?;
    let w = packet.amplitudes()?;
    if packet.x0 + 8.0 * packet.width > x_max as f64 {
        return Err(Error::BadArgument(format!(
            "packet (x0 = {}, width = {}) is not supported within x_max = {x_max}",
            packet.x0, packet.width
        )));
    }
    let n_dot = model.n_sites();
    let mut sinks: Vec<CircleSink> = (0..n_dot).map(|i| CircleSink { end: Endpoint::dot(i), free_x: None }).collect();
    for (b, l) in model.leads().iter().enumerate() {
        for x in 1..=x_max {
            let free_x = if with_free && b == packet.lead { Some(x) } else { None };
            sinks.push(CircleSink { end: Endpoint { dot: l.site, factor: Factor::Power { coupling: l.coupling, x } }, free_x });
        }
    }
    let source = CircleSource {
        end: Endpoint { dot: lead.site, factor: Factor::Weights { coupling: lead.coupling, w: w.clone() } },
        free_weights: if with_free { Some(w) } else { None },
    };
    Ok(PacketSetup { sinks, source, n_dot, n_leads: model.leads().len() })
}

fn unpack(row: &[C64], n_dot: usize, n_leads: usize, x_max: u32) -> SiteField {
    let xm = x_max as usize;
    SiteField {
        dot: row[..n_dot].to_vec(),
        leads: (0..n_leads).map(|b| row[n_dot + b * xm..n_dot + (b + 1) * xm].to_vec()).collect(),
    }
}

/// Total packet field by band quadrature (bound residues, band integral of
/// the dot-mediated part, free lead term).
pub fn packet_evolve(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    packet: &GaussianPacket,
    times: &[f64],
    x_max: u32,
    tol: f64,
) -> Result<Vec<PacketFrame>> {
    sol.require_complete()?;
    let setup = packet_setup(model, packet, x_max, true)?;
    let (vals, _) = circle_propagate(sol, DotPart::Direct(model), &setup.sinks, &setup.source, times, tol)?;
    Ok(times
        .iter()
        .zip(vals)
        .map(|(&t, row)| PacketFrame { time: t, total: unpack(&row, setup.n_dot, setup.n_leads, x_max), components: None })
        .collect())
}

/// One packet component on a time grid: the free term or the term of state `n`.
pub fn packet_component_series(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    tag: ComponentTag,
    packet: &GaussianPacket,
    times: &[f64],
    x_max: u32,
    tol: f64,
) -> Result<Vec<SiteField>> {
    let (part, with_free) = match tag {
        ComponentTag::Free => (DotPart::Skip, true),
        ComponentTag::State(n) => {
            if n >= sol.states.len() {
                return Err(Error::BadArgument(format!("state index {n} out of range")));
            }
            (DotPart::State(n), false)
        }
    };
    let setup = packet_setup(model, packet, x_max, with_free)?;
    let (vals, _) = circle_propagate(sol, part, &setup.sinks, &setup.source, times, tol)?;
    Ok(vals.iter().map(|row| unpack(row, setup.n_dot, setup.n_leads, x_max)).collect())
}

/// One packet component at one time.
pub fn packet_component(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    tag: ComponentTag,
    packet: &GaussianPacket,
    time: f64,
    x_max: u32,
    tol: f64,
) -> Result<SiteField> {
    Ok(packet_component_series(model, sol, tag, packet, &[time], x_max, tol)?.remove(0))
}

/// Total field plus the free and all per-state components.
pub fn packet_evolve_with_components(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    packet: &GaussianPacket,
    times: &[f64],
    x_max: u32,
    tol: f64,
) -> Result<Vec<PacketFrame>> {
    let mut frames = packet_evolve(model, sol, packet, times, x_max, tol)?;
    let mut tags = vec![ComponentTag::Free];
    tags.extend((0..sol.states.len()).map(ComponentTag::State));
    let mut per_tag = Vec::with_capacity(tags.len());
    for &tag in &tags {
        per_tag.push(packet_component_series(model, sol, tag, packet, times, x_max, tol)?);
    }
    for (ti, frame) in frames.iter_mut().enumerate() {
        frame.components = Some(tags.iter().zip(&per_tag).map(|(&tag, series)| (tag, series[ti].clone())).collect());
    }
    Ok(frames)
}

/// Escape profile over lead sites at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeProfile {
    /// Laboratory time.
    pub time: f64,
    /// Propagation time actually applied.
    pub tau: f64,
    /// Total amplitudes per `x`.
    pub total: Vec<C64>,
    /// Per-state components, `states[n][x index]`.
    pub states: Vec<Vec<C64>>,
}

/// Emission and time-inverted re-absorption series.
#[derive(Clone, Debug, PartialEq)]
pub struct Reabsorption {
    /// Inversion time.
    pub t0: f64,
    /// Lead coordinates.
    pub xs: Vec<u32>,
    /// `<x| e^{-iHt} |d_i>`.
    pub emitted: Vec<EscapeProfile>,
    /// `<x| e^{-iH(t - t0)} |d_i>`, the conjugate of the state emitted for `t0`
    /// and evolved further by `t`.
    pub reabsorbed: Vec<EscapeProfile>,
}

fn escape_profiles(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    lead: usize,
    i: usize,
    xs: &[u32],
    taus: &[f64],
    tol: f64,
) -> Result<Vec<(Vec<C64>, Vec<Vec<C64>>)>> {
    model.check_site(i)?;
    let l = model.lead(lead)?;
    if xs.contains(&0) {
        return Err(Error::BadArgument("lead coordinate x must be >= 1".into()));
    }
    let sinks: Vec<CircleSink> = xs
        .iter()
        .map(|&x| CircleSink { end: Endpoint { dot: l.site, factor: Factor::Power { coupling: l.coupling, x } }, free_x: None })
        .collect();
    let src = CircleSource { end: Endpoint::dot(i), free_weights: None };
    let (totals, _) = circle_propagate(sol, DotPart::Direct(model), &sinks, &src, taus, tol)?;
    let mut per_state = Vec::with_capacity(sol.states.len());
    for n in 0..sol.states.len() {
        per_state.push(circle_propagate(sol, DotPart::State(n), &sinks, &src, taus, tol)?.0);
    }
    Ok((0..taus.len())
        .map(|ti| (totals[ti].clone(), per_state.iter().map(|p| p[ti].clone()).collect()))
        .collect())
}

/// Emission from dot site `i` into `lead`, and the time-inverted process
/// started at `t0`: the emitted state at `t0` is conjugated and evolved for
/// `t`, which equals `<x| e^{-iH(t - t0)} |d_i>`.
pub fn reabsorption_experiment(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    t0: f64,
    lead: usize,
    i: usize,
    xs: &[u32],
    times: &[f64],
    tol: f64,
) -> Result<Reabsorption> {
    sol.require_complete()?;
    if !(t0 > 0.0) {
        return Err(Error::BadArgument(format!("t0 must be positive, got {t0}")));
    }
    let taus: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let fwd = escape_profiles(model, sol, lead, i, xs, times, tol)?;
    let rev = escape_profiles(model, sol, lead, i, xs, &taus, tol)?;
    let build = |data: Vec<(Vec<C64>, Vec<Vec<C64>>)>, shift: f64| {
        data.into_iter()
            .zip(times)
            .map(|((total, states), &t)| EscapeProfile { time: t, tau: t - shift, total, states })
            .collect::<Vec<_>>()
    };
    Ok(Reabsorption { t0, xs: xs.to_vec(), emitted: build(fwd, 0.0), reabsorbed: build(rev, t0) })
}
