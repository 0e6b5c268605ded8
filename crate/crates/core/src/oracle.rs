//! Independent references: a hard-wall truncated lattice and the roots of
//! `det Z(lambda)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::greens::SiteRef;
use crate::model::OpenLatticeModel;
use crate::pencil::QuadraticPencil;
use crate::{CMatrix, CVector, RMatrix, C64};

/// Finite lattice: the dot plus `L` sites of every lead, hard wall after `x = L`.
#[derive(Clone, Debug)]
pub struct TruncatedSystem {
    /// Sites kept per lead.
    pub lead_length: u32,
    /// Hamiltonian of the finite lattice.
    pub matrix: RMatrix,
    n_dot: usize,
    n_leads: usize,
}

/// Builds the truncated lattice with `lead_length >= 1` sites per lead.
pub fn truncate(model: &OpenLatticeModel, lead_length: u32) -> Result<TruncatedSystem> {
    if lead_length == 0 {
        return Err(Error::BadArgument("lead length must be >= 1".into()));
    }
    let n = model.n_sites();
    let nl = model.leads().len();
    let l = lead_length as usize;
    let dim = n + nl * l;
    let mut h = RMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (n, n)).copy_from(model.dot_matrix());
    for (b, lead) in model.leads().iter().enumerate() {
        let first = n + b * l;
        h[(lead.site, first)] = -lead.coupling;
        h[(first, lead.site)] = -lead.coupling;
        for x in 0..l - 1 {
            h[(first + x, first + x + 1)] = -1.0;
            h[(first + x + 1, first + x)] = -1.0;
        }
    }
    Ok(TruncatedSystem { lead_length, matrix: h, n_dot: n, n_leads: nl })
}

impl TruncatedSystem {
    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row index of a site.
    pub fn index(&self, site: SiteRef) -> Result<usize> {
        match site {
            SiteRef::Dot(i) if i < self.n_dot => Ok(i),
            SiteRef::Dot(i) => Err(Error::BadSiteIndex { site: i, n: self.n_dot }),
            SiteRef::Lead { lead, x } => {
                if lead >= self.n_leads {
                    return Err(Error::BadLead(format!("lead index {lead} out of range")));
                }
                if x == 0 || x > self.lead_length {
                    return Err(Error::BadArgument(format!("x = {x} outside 1..={}", self.lead_length)));
                }
                Ok(self.n_dot + lead * self.lead_length as usize + x as usize - 1)
            }
        }
    }

    /// Latest time at which sites up to `x_probe` are free of wall reflections.
    pub fn horizon(&self, x_probe: u32) -> f64 {
        0.9 * (self.lead_length as f64 - x_probe as f64) / 2.0
    }

    /// `(E - H)^{-1}` element for complex `E`.
    pub fn resolvent_element(&self, energy: C64, a: SiteRef, b: SiteRef) -> Result<C64> {
        let ia = self.index(a)?;
        let ib = self.index(b)?;
        let dim = self.dim();
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            let d = if i == j { energy } else { C64::from(0.0) };
            d - self.matrix[(i, j)]
        });
        let mut rhs = CVector::zeros(dim);
        rhs[ib] = C64::from(1.0);
        let x = m.lu().solve(&rhs).ok_or_else(|| Error::SolverFailure("singular truncated resolvent".into()))?;
        Ok(x[ia])
    }
}

/// Diagonalized truncated lattice for exact propagation.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    /// The lattice.
    pub system: TruncatedSystem,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl ExactPropagator {
    /// Diagonalizes once; later calls reuse the eigenbasis.
    pub fn new(system: TruncatedSystem) -> Self {
        let eig = SymmetricEigen::new(system.matrix.clone());
        Self { system, values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    /// Field on all sites at each time, starting from `initial`.
    ///
    /// Fails when `|t|` exceeds the horizon of site `x_probe`.
    pub fn propagate(&self, initial: &CVector, times: &[f64], x_probe: u32) -> Result<Vec<CVector>> {
        if initial.len() != self.system.dim() {
            return Err(Error::BadArgument("initial vector has the wrong length".into()));
        }
        let horizon = self.system.horizon(x_probe);
        if let Some(&t) = times.iter().find(|t| t.abs() > horizon) {
            return Err(Error::HorizonExceeded { t, horizon });
        }
        let dim = self.system.dim();
        let vt = self.vectors.transpose();
        let re = &vt * initial.map(|v| v.re);
        let im = &vt * initial.map(|v| v.im);
        let coef: Vec<C64> = (0..dim).map(|k| C64::new(re[k], im[k])).collect();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let rot: Vec<C64> = (0..dim).map(|k| coef[k] * C64::from_polar(1.0, -self.values[k] * t)).collect();
            let r = DVector::from_iterator(dim, rot.iter().map(|v| v.re));
            let i = DVector::from_iterator(dim, rot.iter().map(|v| v.im));
            let fr = &self.vectors * r;
            let fi = &self.vectors * i;
            out.push(CVector::from_fn(dim, |k, _| C64::new(fr[k], fi[k])));
        }
        Ok(out)
    }

    /// `<sink| e^{-iHt} |source>` on a time grid.
    pub fn element(&self, sink: SiteRef, source: SiteRef, times: &[f64]) -> Result<Vec<C64>> {
        let is = self.system.index(source)?;
        let ik = self.system.index(sink)?;
        let probe = |s: SiteRef| match s {
            SiteRef::Lead { x, .. } => x,
            SiteRef::Dot(_) => 0,
        };
        let x_probe = probe(sink).max(probe(source));
        let horizon = self.system.horizon(x_probe);
        if let Some(&t) = times.iter().find(|t| t.abs() > horizon) {
            return Err(Error::HorizonExceeded { t, horizon });
        }
        let a = self.vectors.row(ik);
        let b = self.vectors.row(is);
        Ok(times
            .iter()
            .map(|&t| {
                (0..self.system.dim())
                    .map(|k| C64::from_polar(a[k] * b[k], -self.values[k] * t))
                    .sum()
            })
            .collect())
    }
}

/// Result of the determinant root search.
#[derive(Clone, Debug, PartialEq)]
pub struct DetRoots {
    /// Finite roots, repeated by multiplicity.
    pub roots: Vec<C64>,
    /// Coefficients of `det Z` in increasing powers, after degree drop.
    pub coefficients: Vec<f64>,
    /// `2N - degree`.
    pub n_infinite: usize,
}

/// Largest coefficient ratio accepted for the companion root search.
pub const MAX_POLY_CONDITION: f64 = 1e12;

/// Roots of the scalar polynomial `det Z(lambda)`, degree `<= 2N`.
///
/// Coefficients come from sampling the determinant at `2N + 1` roots of unity
/// and an inverse DFT; roots from a companion matrix, refined by Newton steps
/// with `d/dl log det Z = tr(Z^{-1} Z')`.
pub fn det_z_roots(model: &OpenLatticeModel) -> Result<DetRoots> {
    let p = QuadraticPencil::new(model);
    let n = p.n();
    let m = 2 * n + 1;
    let samples: Vec<C64> = (0..m)
        .map(|j| {
            let w = C64::from_polar(1.0, 2.0 * core::f64::consts::PI * j as f64 / m as f64);
            p.z(w).determinant()
        })
        .collect();
    let mut c: Vec<f64> = (0..m)
        .map(|k| {
            let s: C64 = samples
                .iter()
                .enumerate()
                .map(|(j, d)| d * C64::from_polar(1.0, -2.0 * core::f64::consts::PI * (j * k % m) as f64 / m as f64))
                .sum();
            s.re / m as f64
        })
        .collect();
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    while c.len() > 1 && c.last().is_some_and(|v| v.abs() <= 1e-12 * scale) {
        c.pop();
    }
    let degree = c.len() - 1;
    let n_infinite = 2 * n - degree;
    if degree == 0 {
        return Ok(DetRoots { roots: Vec::new(), coefficients: c, n_infinite });
    }
    let lead = c[degree];
    let condition = scale / lead.abs();
    if !(condition <= MAX_POLY_CONDITION) {
        return Err(Error::IllConditionedPolynomial { condition });
    }
    let mut comp = CMatrix::zeros(degree, degree);
    for i in 1..degree {
        comp[(i, i - 1)] = C64::from(1.0);
    }
    for i in 0..degree {
        comp[(i, degree - 1)] = C64::from(-c[i] / lead);
    }
    let schur = comp
        .try_schur(1e-15, 10_000)
        .ok_or_else(|| Error::SolverFailure("companion Schur did not converge".into()))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::SolverFailure("companion eigenvalues unavailable".into()))?;
    let roots = eig.iter().map(|&r| newton_det(&p, r)).collect();
    Ok(DetRoots { roots, coefficients: c, n_infinite })
}

fn newton_det(p: &QuadraticPencil, mut l: C64) -> C64 {
    for _ in 0..30 {
        let Some(inv) = p.z(l).try_inverse() else { return l };
        let tr = (inv * p.dz(l)).trace();
        if tr.norm() == 0.0 || !tr.is_finite() {
            return l;
        }
        let step = C64::from(1.0) / tr;
        if step.norm() > 0.1 * l.norm().max(1e-3) {
            return l;
        }
        l -= step;
        if step.norm() <= 1e-15 * l.norm().max(1.0) {
            break;
        }
    }
    l
}

/// Largest relative distance between two multisets of complex numbers under
/// greedy nearest matching; `None` if the sizes differ.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm() / x.norm().max(1.0)))
            .fold((usize::MAX, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        used[j] = true;
        worst = worst.max(d);
    }
    Some(worst)
}
