//! Effective and full-space Green's functions, and transmission.

use alloc::format;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{effective_hamiltonian, OpenLatticeModel, SheetPoint};
use crate::pencil::max_abs;
use crate::spectral::{to_standard_norm, SpectralSolution};
use crate::{CMatrix, C64};

/// Relative guard radius around each pole for the expansion.
pub const POLE_GUARD: f64 = 1e-6;
/// Condition number beyond which `E - H_eff` counts as singular.
pub const SINGULAR_COND: f64 = 1e13;

/// A site of the full lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteRef {
    /// Dot site, zero-based.
    Dot(usize),
    /// Lead site `x >= 1` on the lead with the given index.
    Lead {
        /// Lead index.
        lead: usize,
        /// Coordinate along the lead.
        x: u32,
    },
}

/// `(E - H_eff(lambda))^{-1}` by direct inversion; equals `-lambda Z(lambda)^{-1}`.
pub fn g_eff_direct(model: &OpenLatticeModel, p: &SheetPoint) -> Result<CMatrix> {
    let n = model.n_sites();
    let mut m = -effective_hamiltonian(model, p);
    for i in 0..n {
        m[(i, i)] += p.energy;
    }
    let singular = || Error::SingularAtPole { re: p.lambda.re, im: p.lambda.im };
    let inv = m.clone().try_inverse().ok_or_else(singular)?;
    let cond = max_abs(&m) * max_abs(&inv);
    if !cond.is_finite() || cond > SINGULAR_COND {
        return Err(singular());
    }
    Ok(inv)
}

/// `sum_n psi_n (lambda lambda_n / (lambda - lambda_n)) psi_n^T`.
pub fn g_eff_expanded(sol: &SpectralSolution, lambda: C64) -> Result<CMatrix> {
    sol.require_complete()?;
    if let Some(index) = guarded_pole(sol, lambda) {
        return Err(Error::PoleHit { index });
    }
    Ok(expansion_sum(sol, lambda))
}

fn expansion_sum(sol: &SpectralSolution, lambda: C64) -> CMatrix {
    let n = sol.n_sites();
    let mut g = CMatrix::zeros(n, n);
    for s in &sol.states {
        let w = lambda * s.lambda / (lambda - s.lambda);
        g += &s.psi * s.psi.transpose() * w;
    }
    g
}

fn guarded_pole(sol: &SpectralSolution, lambda: C64) -> Option<usize> {
    sol.states
        .iter()
        .position(|s| (lambda - s.lambda).norm() <= POLE_GUARD * s.lambda.norm().max(1.0))
}

/// Expansion away from poles, direct inversion inside the guard annulus.
pub fn g_eff(model: &OpenLatticeModel, sol: &SpectralSolution, lambda: C64) -> Result<CMatrix> {
    sol.require_complete()?;
    match guarded_pole(sol, lambda) {
        None => Ok(expansion_sum(sol, lambda)),
        Some(index) => {
            g_eff_direct(model, &SheetPoint::from_lambda(lambda)?).map_err(|_| Error::PoleHit { index })
        }
    }
}

/// `sum_n phi_n phi_n^T / (E - E_n)` with standard-norm vectors.
///
/// Equals `G_eff(e^{ik}) + G_eff(e^{-ik})` for `E = -2 cos k` in the band.
pub fn g_retarded_advanced_sum(sol: &SpectralSolution, energy: f64) -> Result<CMatrix> {
    if !(energy.abs() < 2.0) {
        return Err(Error::BandEdge(energy));
    }
    sol.require_complete()?;
    let n = sol.n_sites();
    let mut g = CMatrix::zeros(n, n);
    for s in &sol.states {
        let phi = to_standard_norm(s)?;
        g += &phi * phi.transpose() / (C64::from(energy) - s.energy);
    }
    Ok(g)
}

/// Free semi-infinite lead Green's function between sites `x` and `y`:
/// `-lambda^max (lambda^min - lambda^-min) / (lambda - 1/lambda)`.
pub fn lead_green_element(p: &SheetPoint, x: u32, y: u32) -> Result<C64> {
    let r = p.lambda.norm();
    if !(r < 1.0) {
        return Err(Error::UnitCircleLambda(r));
    }
    if x == 0 || y == 0 {
        return Err(Error::BadArgument("lead coordinates must be >= 1".into()));
    }
    Ok(lead_green_unchecked(p.lambda, x, y))
}

/// Closed form without domain checks; also valid as the analytic continuation.
pub fn lead_green_unchecked(lambda: C64, x: u32, y: u32) -> C64 {
    let d = x.abs_diff(y);
    let s = x + y;
    // (lambda^{|x-y|} - lambda^{x+y}) lambda / (lambda^2 - 1)
    (lambda.powu(d) - lambda.powu(s)) * lambda / (lambda * lambda - 1.0)
}

/// Coupling factor of a site: 1 on the dot, `t lambda^x` on a lead.
fn site_factor(model: &OpenLatticeModel, site: SiteRef, lambda: C64) -> Result<(usize, C64)> {
    match site {
        SiteRef::Dot(i) => {
            model.check_site(i)?;
            Ok((i, C64::from(1.0)))
        }
        SiteRef::Lead { lead, x } => {
            let l = model.lead(lead)?;
            if x == 0 {
                return Err(Error::BadArgument("lead coordinate x must be >= 1".into()));
            }
            Ok((l.site, lambda.powu(x) * l.coupling))
        }
    }
}

/// Element `<a|G(E(lambda))|b>` of the full-lattice Green's function.
///
/// Dot-lead factors are `t lambda^x`; same-lead pairs add the free lead term,
/// pairs on different leads carry only the dot-mediated term.
pub fn full_green_element(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    p: &SheetPoint,
    a: SiteRef,
    b: SiteRef,
) -> Result<C64> {
    let on_lead = matches!(a, SiteRef::Lead { .. }) || matches!(b, SiteRef::Lead { .. });
    if on_lead && !(p.lambda.norm() < 1.0) {
        return Err(Error::UnitCircleLambda(p.lambda.norm()));
    }
    let (i, fa) = site_factor(model, a, p.lambda)?;
    let (j, fb) = site_factor(model, b, p.lambda)?;
    let g = g_eff(model, sol, p.lambda)?;
    let mut v = fa * g[(i, j)] * fb;
    if let (SiteRef::Lead { lead: la, x }, SiteRef::Lead { lead: lb, x: y }) = (a, b) {
        if la == lb {
            v += lead_green_unchecked(p.lambda, x, y);
        }
    }
    Ok(v)
}

/// Transmission `T = 4 (t_a t_b)^2 sin^2 k |G^R_{ij}|^2` between two leads at a
/// band energy, with `G^R = G_eff(e^{ik})`, `k in (0, pi)`.
///
/// Each lead contributes a level width `2 t^2 sin k`, so a uniform infinite
/// chain gives `T = 1`.
pub fn transmission(
    model: &OpenLatticeModel,
    sol: &SpectralSolution,
    energy: f64,
    lead_in: usize,
    lead_out: usize,
) -> Result<f64> {
    if !(energy.abs() < 2.0) {
        return Err(Error::BandEdge(energy));
    }
    let li = model.lead(lead_in)?;
    let lo = model.lead(lead_out)?;
    let k = (-energy / 2.0).acos();
    let lambda = C64::from_polar(1.0, k);
    let g = g_eff(model, sol, lambda)?;
    let tt = li.coupling * lo.coupling;
    let s = k.sin();
    Ok(4.0 * tt * tt * s * s * g[(lo.site, li.site)].norm_sqr())
}

/// Transmission computed from direct inversion only (no spectral data).
pub fn transmission_direct(model: &OpenLatticeModel, energy: f64, lead_in: usize, lead_out: usize) -> Result<f64> {
    if !(energy.abs() < 2.0) {
        return Err(Error::BandEdge(energy));
    }
    let li = model.lead(lead_in)?;
    let lo = model.lead(lead_out)?;
    let k = (-energy / 2.0).acos();
    let g = g_eff_direct(model, &SheetPoint::from_k(C64::from(k))?)
        .map_err(|e| Error::BadArgument(format!("transmission at E = {energy}: {e}")))?;
    let tt = li.coupling * lo.coupling;
    let s = k.sin();
    Ok(4.0 * tt * tt * s * s * g[(lo.site, li.site)].norm_sqr())
}
