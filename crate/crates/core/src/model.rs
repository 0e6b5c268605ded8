//! Dot + leads model, the self-energy and the lambda/k/E maps.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::{CMatrix, RMatrix, C64};

/// Symmetry tolerance for the dot matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A semi-infinite lead attached to one dot site.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadAttachment {
    /// Dot site, zero-based.
    pub site: usize,
    /// Coupling `t_{i alpha}`; the Hamiltonian element to the first lead site is `-t`.
    pub coupling: f64,
    /// Short label such as `"L"` or `"R"`.
    pub label: String,
}

/// One hopping in a [`ModelDescription`] (1-based sites).
#[derive(Clone, Debug, PartialEq)]
pub struct Hopping {
    /// First site (1-based).
    pub i: usize,
    /// Second site (1-based).
    pub j: usize,
    /// Hopping amplitude; the matrix entry is `-t`.
    pub t: f64,
}

/// One lead in a [`ModelDescription`] (1-based site).
#[derive(Clone, Debug, PartialEq)]
pub struct LeadSpec {
    /// Dot site (1-based).
    pub site: usize,
    /// Coupling.
    pub coupling: f64,
    /// Label.
    pub label: String,
}

/// External description of a model, mirroring the JSON file layout.
///
/// Hoppings are listed once per unordered pair and mirrored on build.
/// Listing a pair twice is accepted only with equal values.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelDescription {
    /// Number of dot sites.
    pub n_sites: usize,
    /// On-site energies.
    pub epsilon: Vec<f64>,
    /// Hoppings.
    pub hoppings: Vec<Hopping>,
    /// Leads.
    pub leads: Vec<LeadSpec>,
    /// Optional full dot matrix; when present it replaces `epsilon`/`hoppings`.
    pub dot_matrix: Option<Vec<Vec<f64>>>,
}

/// Validated dot + leads model. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenLatticeModel {
    dot: RMatrix,
    leads: Vec<LeadAttachment>,
}

impl OpenLatticeModel {
    /// Validates a dot matrix and a lead list.
    ///
    /// The matrix must be square, finite and symmetric within
    /// [`SYMMETRY_TOL`]; it is stored exactly symmetrized.
    pub fn new(dot: RMatrix, leads: Vec<LeadAttachment>) -> Result<Self> {
        let n = dot.nrows();
        if n == 0 || dot.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "dot matrix must be square and non-empty, got {}x{}",
                dot.nrows(),
                dot.ncols()
            )));
        }
        if dot.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("dot matrix has non-finite entries".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (dot[(i, j)], dot[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::NonSymmetricDot { i: i + 1, j: j + 1, a, b });
                }
            }
        }
        if leads.is_empty() {
            return Err(Error::NoLeads);
        }
        for (k, lead) in leads.iter().enumerate() {
            if lead.site >= n {
                return Err(Error::BadSiteIndex { site: lead.site + 1, n });
            }
            if !lead.coupling.is_finite() || lead.coupling == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "lead '{}' has coupling {}; must be finite and nonzero",
                    lead.label, lead.coupling
                )));
            }
            if leads[..k].iter().any(|l| l.label == lead.label) {
                return Err(Error::InvalidModel(format!("duplicate lead label '{}'", lead.label)));
            }
        }
        let dot = (&dot + dot.transpose()) * 0.5;
        Ok(Self { dot, leads })
    }

    /// Builds a model from its external description.
    pub fn from_description(desc: &ModelDescription) -> Result<Self> {
        let n = desc.n_sites;
        if n == 0 {
            return Err(Error::InvalidModel("n_sites must be positive".into()));
        }
        let dot = match &desc.dot_matrix {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidModel(format!("dot_matrix must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            None => {
                if desc.epsilon.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "epsilon has {} entries, expected {n}",
                        desc.epsilon.len()
                    )));
                }
                let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&desc.epsilon));
                let mut seen = DMatrix::from_element(n, n, false);
                for h in &desc.hoppings {
                    for s in [h.i, h.j] {
                        if s == 0 || s > n {
                            return Err(Error::BadSiteIndex { site: s, n });
                        }
                    }
                    let (i, j) = (h.i - 1, h.j - 1);
                    if i == j {
                        return Err(Error::InvalidModel(format!(
                            "hopping from site {} to itself; use epsilon",
                            h.i
                        )));
                    }
                    if seen[(i, j)] {
                        if (m[(i, j)] + h.t).abs() > SYMMETRY_TOL {
                            return Err(Error::NonSymmetricDot {
                                i: h.i,
                                j: h.j,
                                a: m[(i, j)],
                                b: -h.t,
                            });
                        }
                        continue;
                    }
                    m[(i, j)] = -h.t;
                    m[(j, i)] = -h.t;
                    seen[(i, j)] = true;
                    seen[(j, i)] = true;
                }
                m
            }
        };
        let mut leads = Vec::with_capacity(desc.leads.len());
        for l in &desc.leads {
            if l.site == 0 || l.site > n {
                return Err(Error::BadSiteIndex { site: l.site, n });
            }
            leads.push(LeadAttachment { site: l.site - 1, coupling: l.coupling, label: l.label.clone() });
        }
        Self::new(dot, leads)
    }

    /// External description of this model (hoppings from the upper triangle).
    pub fn to_description(&self) -> ModelDescription {
        let n = self.n_sites();
        let mut hoppings = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.dot[(i, j)] != 0.0 {
                    hoppings.push(Hopping { i: i + 1, j: j + 1, t: -self.dot[(i, j)] });
                }
            }
        }
        ModelDescription {
            n_sites: n,
            epsilon: (0..n).map(|i| self.dot[(i, i)]).collect(),
            hoppings,
            leads: self
                .leads
                .iter()
                .map(|l| LeadSpec { site: l.site + 1, coupling: l.coupling, label: l.label.clone() })
                .collect(),
            dot_matrix: None,
        }
    }

    /// The two-site T-shaped dot: `eps = (-0.85, 0)`, `t12 = 1`, leads L and R
    /// on site 2 with unit coupling.
    pub fn t_model() -> Self {
        let dot = DMatrix::from_row_slice(2, 2, &[-0.85, -1.0, -1.0, 0.0]);
        let leads = alloc::vec![
            LeadAttachment { site: 1, coupling: 1.0, label: "L".to_string() },
            LeadAttachment { site: 1, coupling: 1.0, label: "R".to_string() },
        ];
        Self::new(dot, leads).expect("T-model is valid")
    }

    /// One site with energy `eps` and a single lead `"L"` of coupling `tc`.
    pub fn single_site(eps: f64, tc: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, eps),
            alloc::vec![LeadAttachment { site: 0, coupling: tc, label: "L".to_string() }],
        )
    }

    /// Random test model driven by `uniform`, which must return samples in `[0, 1)`.
    ///
    /// Chain of `n` sites with `eps` in `[-1, 1]`, nearest-neighbour hoppings and
    /// (with probability 0.3 per pair) longer-range hoppings of magnitude in
    /// `[0.2, 0.9]` and random sign; lead `"L"` on the first site, and lead
    /// `"R"` on the last site when `n > 1`, couplings in `[0.2, 0.9]`.
    pub fn random<F: FnMut() -> f64>(n: usize, mut uniform: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("random model needs n >= 1".into()));
        }
        let mag = |u: &mut F| 0.2 + 0.7 * u();
        let mut dot = DMatrix::zeros(n, n);
        for i in 0..n {
            dot[(i, i)] = 2.0 * uniform() - 1.0;
        }
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || uniform() < 0.3 {
                    let sign = if uniform() < 0.5 { -1.0 } else { 1.0 };
                    let v = sign * mag(&mut uniform);
                    dot[(i, j)] = v;
                    dot[(j, i)] = v;
                }
            }
        }
        let mut leads = alloc::vec![LeadAttachment { site: 0, coupling: mag(&mut uniform), label: "L".to_string() }];
        if n > 1 {
            leads.push(LeadAttachment { site: n - 1, coupling: mag(&mut uniform), label: "R".to_string() });
        }
        Self::new(dot, leads)
    }

    /// Number of dot sites `N`.
    pub fn n_sites(&self) -> usize {
        self.dot.nrows()
    }

    /// Dot Hamiltonian `H_d`.
    pub fn dot_matrix(&self) -> &RMatrix {
        &self.dot
    }

    /// Leads in declaration order.
    pub fn leads(&self) -> &[LeadAttachment] {
        &self.leads
    }

    /// Lead by index.
    pub fn lead(&self, index: usize) -> Result<&LeadAttachment> {
        self.leads.get(index).ok_or_else(|| Error::BadLead(format!("#{index}")))
    }

    /// Index of the lead with the given label.
    pub fn lead_index(&self, label: &str) -> Result<usize> {
        self.leads
            .iter()
            .position(|l| l.label == label)
            .ok_or_else(|| Error::BadLead(label.to_string()))
    }

    /// Checks a zero-based dot index.
    pub fn check_site(&self, site: usize) -> Result<()> {
        if site < self.n_sites() {
            Ok(())
        } else {
            Err(Error::BadSiteIndex { site: site + 1, n: self.n_sites() })
        }
    }

    /// Diagonal of `Theta`: `Theta_ii = sum over leads on i of t^2`.
    pub fn theta_diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n_sites());
        for l in &self.leads {
            d[l.site] += l.coupling * l.coupling;
        }
        d
    }
}

/// `Theta` as a full diagonal matrix.
pub fn theta_matrix(model: &OpenLatticeModel) -> RMatrix {
    DMatrix::from_diagonal(&model.theta_diagonal())
}

/// `H_eff(lambda) = H_d - lambda Theta`.
pub fn effective_hamiltonian(model: &OpenLatticeModel, p: &SheetPoint) -> CMatrix {
    let lambda = p.lambda;
    let theta = model.theta_diagonal();
    let mut h = model.dot_matrix().map(C64::from);
    for i in 0..model.n_sites() {
        h[(i, i)] -= lambda * theta[i];
    }
    h
}

/// Which `E`-sheet a root of `lambda^2 + E lambda + 1 = 0` is taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sheet {
    /// `|lambda| < 1`; on the band the retarded boundary value `e^{ik}`, `k in (0, pi)`.
    First,
    /// `|lambda| > 1`; on the band `e^{-ik}`.
    Second,
}

/// A point given simultaneously as `lambda`, `k` and `E`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SheetPoint {
    /// `lambda = e^{ik}`.
    pub lambda: C64,
    /// Complex wave number, principal logarithm branch.
    pub k: C64,
    /// `E = -lambda - 1/lambda`.
    pub energy: C64,
}

impl SheetPoint {
    /// Point from `lambda`.
    pub fn from_lambda(lambda: C64) -> Result<Self> {
        if lambda == C64::new(0.0, 0.0) || !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::ZeroLambda);
        }
        Ok(Self { lambda, k: -C64::i() * lambda.ln(), energy: energy_of(lambda) })
    }

    /// Point from a (complex) wave number.
    pub fn from_k(k: C64) -> Result<Self> {
        let lambda = (C64::i() * k).exp();
        let mut p = Self::from_lambda(lambda)?;
        p.k = k;
        Ok(p)
    }
}

/// `E(lambda) = -lambda - 1/lambda`.
pub fn energy_of(lambda: C64) -> C64 {
    -lambda - lambda.inv()
}

/// Root of `lambda^2 + E lambda + 1 = 0` on the requested sheet.
pub fn lambda_from_energy(energy: C64, sheet: Sheet) -> Result<SheetPoint> {
    if energy.im == 0.0 && (energy.re == 2.0 || energy.re == -2.0) {
        return Err(Error::BranchPoint(energy.re));
    }
    let s = (energy * energy - 4.0).sqrt();
    let a = (-energy + s) * 0.5;
    let b = (-energy - s) * 0.5;
    // Larger root computed directly; smaller one as its reciprocal.
    let big = if a.norm() >= b.norm() { a } else { b };
    let small = big.inv();
    let on_circle = (big.norm() - 1.0).abs() <= 1e-12;
    let lambda = match (sheet, on_circle) {
        (Sheet::First, false) => small,
        (Sheet::Second, false) => big,
        (Sheet::First, true) => {
            if small.im >= 0.0 {
                small
            } else {
                big
            }
        }
        (Sheet::Second, true) => {
            if small.im >= 0.0 {
                big
            } else {
                small
            }
        }
    };
    let mut p = SheetPoint::from_lambda(lambda)?;
    p.energy = energy;
    Ok(p)
}
