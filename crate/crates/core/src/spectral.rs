//! All `2N` discrete states of the open dot.
//!
//! Eigenvalues come from the `(A, B)` pencil; each one is then polished on
//! the quadratic problem directly and normalized under the metric `B`:
//! `(1 - lambda^2) psi^T psi + lambda^2 psi^T Theta psi = 1`.
//! The left vector is the plain transpose of `psi`.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{energy_of, OpenLatticeModel};
use crate::pencil::{max_abs, QuadraticPencil};
use crate::{CMatrix, CVector, C64};

/// Degeneracy gate on the relative eigenvalue gap.
pub const DEGENERACY_GATE: f64 = 1e-8;
/// `|Im lambda| <= REAL_TOL (1 + |lambda|)` counts as real.
pub const REAL_TOL: f64 = 1e-9;
/// `||lambda| - 1| <= UNIT_TOL` counts as on the unit circle.
pub const UNIT_TOL: f64 = 1e-9;
/// Smallest `|B_ii|` for which `B^{-1} A` is used.
pub const B_INVERTIBLE_TOL: f64 = 1e-10;
/// Reversed-pencil eigenvalues below this modulus are infinite `lambda`.
pub const INFINITE_MU_TOL: f64 = 1e-7;

/// Position class of a discrete eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateClass {
    /// Real `lambda`, `|lambda| < 1`.
    Bound,
    /// Real `lambda`, `|lambda| > 1`.
    AntiBound,
    /// `|lambda| > 1`, `Im lambda > 0` (`Im E < 0`).
    Resonant,
    /// `|lambda| > 1`, `Im lambda < 0` (`Im E > 0`).
    AntiResonant,
    /// Non-real inside the unit disk, or on the unit circle.
    Exceptional,
}

impl StateClass {
    /// Name used in output files.
    pub fn name(self) -> &'static str {
        match self {
            StateClass::Bound => "Bound",
            StateClass::AntiBound => "AntiBound",
            StateClass::Resonant => "Resonant",
            StateClass::AntiResonant => "AntiResonant",
            StateClass::Exceptional => "Exceptional",
        }
    }

    /// True for real-`lambda` classes.
    pub fn is_real(self) -> bool {
        matches!(self, StateClass::Bound | StateClass::AntiBound)
    }
}

impl core::fmt::Display for StateClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Classifies an eigenvalue by its position in the `lambda` plane.
pub fn classify(lambda: C64) -> StateClass {
    let r = lambda.norm();
    if (r - 1.0).abs() <= UNIT_TOL {
        return StateClass::Exceptional;
    }
    if is_real(lambda) {
        return if r < 1.0 { StateClass::Bound } else { StateClass::AntiBound };
    }
    if r < 1.0 {
        StateClass::Exceptional
    } else if lambda.im > 0.0 {
        StateClass::Resonant
    } else {
        StateClass::AntiResonant
    }
}

fn is_real(lambda: C64) -> bool {
    lambda.im.abs() <= REAL_TOL * (1.0 + lambda.norm())
}

/// One discrete eigenstate.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState {
    /// `lambda_n`.
    pub lambda: C64,
    /// `k_n` with `lambda_n = e^{i k_n}`.
    pub k: C64,
    /// `E_n = -lambda_n - 1/lambda_n`.
    pub energy: C64,
    /// Position class.
    pub class: StateClass,
    /// Dot-space vector, metric-`B` normalized.
    pub psi: CVector,
    /// Index of the time-reversal partner (self for real-`lambda` states).
    pub partner: usize,
    /// `|Z(lambda) psi| / (|Z| |psi|)`.
    pub residual: f64,
}

/// Solver diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Largest relative `Z(lambda) psi` residual.
    pub max_residual: f64,
    /// Largest `|(A - lambda B) Psi|`.
    pub max_pencil_residual: f64,
    /// Largest `|<Psi~_m|B|Psi_n> - delta_mn|`.
    pub max_biorthonormality_error: f64,
    /// Smallest relative gap between finite eigenvalues.
    pub min_gap: f64,
    /// True when the reversed pencil was used (singular `B`).
    pub reversed_pencil: bool,
}

/// All finite discrete states of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSolution {
    /// States sorted by `(Re lambda, Im lambda)`.
    pub states: Vec<DiscreteState>,
    /// Number of eigenvalues at infinity.
    pub n_infinite: usize,
    /// Diagonal of `Theta`.
    pub theta: DVector<f64>,
    /// Diagnostics.
    pub diagnostics: Diagnostics,
}

impl SpectralSolution {
    /// Dot dimension `N`.
    pub fn n_sites(&self) -> usize {
        self.theta.len()
    }

    /// Errors unless all `2N` states are finite.
    pub fn require_complete(&self) -> Result<()> {
        if self.n_infinite > 0 {
            Err(Error::IncompleteSpectrum { n_infinite: self.n_infinite })
        } else {
            Ok(())
        }
    }

    /// Indices of states of the given class.
    pub fn indices_of(&self, class: StateClass) -> Vec<usize> {
        (0..self.states.len()).filter(|&n| self.states[n].class == class).collect()
    }

    /// Index of the resonant state with the smallest `|Im E|`, if any.
    pub fn leading_resonance(&self) -> Option<usize> {
        self.indices_of(StateClass::Resonant)
            .into_iter()
            .min_by(|&a, &b| self.states[a].energy.im.abs().total_cmp(&self.states[b].energy.im.abs()))
    }
}

/// Solves the quadratic eigenvalue problem of a model.
pub fn solve_discrete_states(model: &OpenLatticeModel) -> Result<SpectralSolution> {
    let pencil = QuadraticPencil::new(model);
    let n = pencil.n();
    let b = pencil.b_diagonal();
    let min_b = b.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));

    let mut lambdas: Vec<C64> = Vec::with_capacity(2 * n);
    let mut n_infinite = 0;
    let reversed = min_b <= B_INVERTIBLE_TOL;
    if !reversed {
        let mut c = pencil.a_matrix().clone();
        for i in 0..2 * n {
            let s = 1.0 / b[i];
            c.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        lambdas.extend(c.complex_eigenvalues().iter().copied());
    } else {
        // A^{-1} = [[-H, I], [I, 0]]; eigenvalues mu = 1 / lambda.
        let mut ainv = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                ainv[(i, j)] = -pencil.h()[(i, j)];
            }
            ainv[(i, n + i)] = 1.0;
            ainv[(n + i, i)] = 1.0;
        }
        let mut r = ainv;
        for j in 0..2 * n {
            let s = b[j];
            r.column_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for mu in r.complex_eigenvalues().iter() {
            if mu.norm() <= INFINITE_MU_TOL * scale {
                n_infinite += 1;
            } else {
                lambdas.push(mu.inv());
            }
        }
    }
    for l in lambdas.iter_mut() {
        if is_real(*l) {
            l.im = 0.0;
        }
    }

    let gap = min_relative_gap(&lambdas);
    if gap <= DEGENERACY_GATE {
        return Err(Error::DegenerateSpectrum { gap });
    }

    let mut states: Vec<DiscreteState> = Vec::with_capacity(lambdas.len());
    for &l0 in &lambdas {
        let (lambda, psi) = polish(&pencil, l0)?;
        states.push(make_state(&pencil, lambda, psi)?);
    }

    pair_conjugates(&mut states)?;
    states.sort_by(|a, b| match a.lambda.re.total_cmp(&b.lambda.re) {
        Ordering::Equal => a.lambda.im.total_cmp(&b.lambda.im),
        o => o,
    });
    assign_partners(&mut states)?;

    let gap_after = min_relative_gap(&states.iter().map(|s| s.lambda).collect::<Vec<_>>());
    if gap_after <= DEGENERACY_GATE {
        return Err(Error::DegenerateSpectrum { gap: gap_after });
    }

    let mut sol = SpectralSolution {
        states,
        n_infinite,
        theta: pencil.theta().clone(),
        diagnostics: Diagnostics { min_gap: gap_after, reversed_pencil: reversed, ..Default::default() },
    };
    sol.diagnostics.max_residual = sol.states.iter().fold(0.0, |m, s| m.max(s.residual));
    sol.diagnostics.max_pencil_residual = sol
        .states
        .iter()
        .fold(0.0, |m, s| m.max(pencil_residual(&pencil, s)));
    sol.diagnostics.max_biorthonormality_error = biorthonormality_error(&sol);
    Ok(sol)
}

fn min_relative_gap(lambdas: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..lambdas.len() {
        for j in (i + 1)..lambdas.len() {
            let scale = lambdas[i].norm().max(lambdas[j].norm()).max(f64::MIN_POSITIVE);
            gap = gap.min((lambdas[i] - lambdas[j]).norm() / scale);
        }
    }
    gap
}

fn solve(m: &CMatrix, rhs: &CVector) -> Option<CVector> {
    let x = m.clone().lu().solve(rhs)?;
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn unit(v: CVector) -> CVector {
    let nrm = v.norm();
    v / C64::from(nrm)
}

/// Inverse iteration plus Newton steps `lambda -= psi^T Z psi / psi^T Z' psi`.
fn polish(pencil: &QuadraticPencil, l0: C64) -> Result<(C64, CVector)> {
    let n = pencil.n();
    let real = l0.im == 0.0;
    let start = CVector::from_fn(n, |i, _| C64::from(1.0 + 0.1 * i as f64));
    let mut lambda = l0;
    let nudge = |l: C64| l * (1.0 + 64.0 * f64::EPSILON) + 64.0 * f64::EPSILON;
    let mut psi = match solve(&pencil.z(lambda), &start) {
        Some(y) => unit(y),
        None => unit(solve(&pencil.z(nudge(lambda)), &start).ok_or_else(|| {
            Error::SolverFailure(format!("inverse iteration failed at lambda = {lambda}"))
        })?),
    };
    // A second inverse-iteration sweep sharpens psi before Newton.
    if let Some(y) = solve(&pencil.z(nudge(lambda)), &psi) {
        psi = unit(y);
    }
    for _ in 0..8 {
        let z = pencil.z(lambda);
        let num = (psi.transpose() * &z * &psi)[(0, 0)];
        let den = (psi.transpose() * pencil.dz(lambda) * &psi)[(0, 0)];
        if den.norm() == 0.0 {
            break;
        }
        let mut step = num / den;
        if real {
            step.im = 0.0;
        }
        lambda -= step;
        match solve(&pencil.z(lambda), &psi) {
            Some(y) => psi = unit(y),
            None => break,
        }
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + lambda.norm()) {
            break;
        }
    }
    if (lambda - l0).norm() > 1e-6 * (1.0 + l0.norm()) {
        return Err(Error::SolverFailure(format!(
            "refinement drifted from {l0} to {lambda}"
        )));
    }
    Ok((lambda, psi))
}

fn make_state(pencil: &QuadraticPencil, lambda: C64, psi: CVector) -> Result<DiscreteState> {
    let l2 = lambda * lambda;
    let theta = pencil.theta();
    let mut tt = C64::from(0.0);
    let mut tp = C64::from(0.0);
    for i in 0..psi.len() {
        tt += psi[i] * psi[i];
        tp += psi[i] * psi[i] * theta[i];
    }
    let nu = (C64::from(1.0) - l2) * tt + l2 * tp;
    if nu.norm() <= 1e-12 {
        return Err(Error::DegenerateSpectrum { gap: 0.0 });
    }
    let mut psi = psi / nu.sqrt();
    fix_sign(&mut psi);
    if lambda.im == 0.0 {
        // psi is real or purely imaginary here; clear round-off in the other part.
        let real_part = psi.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let imag_part = psi.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        for v in psi.iter_mut() {
            if real_part >= imag_part {
                v.im = 0.0;
            } else {
                v.re = 0.0;
            }
        }
    }
    let z = pencil.z(lambda);
    let residual = (&z * &psi).norm() / (z.norm().max(f64::MIN_POSITIVE) * psi.norm());
    Ok(DiscreteState {
        lambda,
        k: -C64::i() * lambda.ln(),
        energy: energy_of(lambda),
        class: classify(lambda),
        psi,
        partner: usize::MAX,
        residual,
    })
}

/// Sign convention: the largest component has positive real part, or positive
/// imaginary part when it is (numerically) imaginary.
fn fix_sign(psi: &mut CVector) {
    let mut best = C64::from(0.0);
    for v in psi.iter() {
        if v.norm() > best.norm() * (1.0 + 1e-12) {
            best = *v;
        }
    }
    let key = if best.re.abs() >= best.im.abs() { best.re } else { best.im };
    if key < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Makes every non-real eigenvalue's partner its exact conjugate.
fn pair_conjugates(states: &mut [DiscreteState]) -> Result<()> {
    let mut used = alloc::vec![false; states.len()];
    for i in 0..states.len() {
        if used[i] || states[i].lambda.im <= 0.0 {
            continue;
        }
        let target = states[i].lambda.conj();
        let j = (0..states.len())
            .filter(|&j| !used[j] && j != i && states[j].lambda.im < 0.0)
            .min_by(|&a, &b| {
                (states[a].lambda - target).norm().total_cmp(&(states[b].lambda - target).norm())
            })
            .ok_or_else(|| Error::SolverFailure(format!("no conjugate partner for {}", states[i].lambda)))?;
        if (states[j].lambda - target).norm() > 1e-6 * (1.0 + target.norm()) {
            return Err(Error::SolverFailure(format!(
                "conjugate pairing mismatch: {} vs {}",
                states[i].lambda, states[j].lambda
            )));
        }
        used[i] = true;
        used[j] = true;
        let mut mirror = states[i].clone();
        mirror.lambda = target;
        mirror.k = -C64::i() * target.ln();
        mirror.energy = energy_of(target);
        mirror.class = classify(target);
        mirror.psi = states[i].psi.map(|v| v.conj());
        states[j] = mirror;
    }
    if states.iter().enumerate().any(|(i, s)| s.lambda.im < 0.0 && !used[i]) {
        return Err(Error::SolverFailure("unpaired eigenvalue in lower half plane".into()));
    }
    Ok(())
}

fn assign_partners(states: &mut [DiscreteState]) -> Result<()> {
    for i in 0..states.len() {
        if states[i].lambda.im == 0.0 {
            states[i].partner = i;
            continue;
        }
        let target = states[i].lambda.conj();
        let j = (0..states.len())
            .find(|&j| states[j].lambda == target)
            .ok_or_else(|| Error::SolverFailure("partner lost after sorting".into()))?;
        states[i].partner = j;
    }
    Ok(())
}

/// `|(A - lambda B) Psi|` with `Psi = (psi, lambda psi)`.
pub fn pencil_residual(pencil: &QuadraticPencil, s: &DiscreteState) -> f64 {
    let n = pencil.n();
    let big = CVector::from_fn(2 * n, |i, _| if i < n { s.psi[i] } else { s.lambda * s.psi[i - n] });
    (pencil.a_minus_lambda_b(s.lambda) * big).norm()
}

/// Matrix of `<Psi~_m|B|Psi_n> = (1 - l_m l_n) psi_m^T psi_n + l_m l_n psi_m^T Theta psi_n`.
pub fn biorthonormality_matrix(sol: &SpectralSolution) -> CMatrix {
    let m = sol.states.len();
    DMatrix::from_fn(m, m, |a, b| {
        let (sa, sb) = (&sol.states[a], &sol.states[b]);
        let ll = sa.lambda * sb.lambda;
        let mut plain = C64::from(0.0);
        let mut weighted = C64::from(0.0);
        for i in 0..sol.n_sites() {
            let p = sa.psi[i] * sb.psi[i];
            plain += p;
            weighted += p * sol.theta[i];
        }
        (C64::from(1.0) - ll) * plain + ll * weighted
    })
}

fn biorthonormality_error(sol: &SpectralSolution) -> f64 {
    let mut m = biorthonormality_matrix(sol);
    for i in 0..m.nrows() {
        m[(i, i)] -= 1.0;
    }
    max_abs(&m)
}

/// `<Psi~_m|A|Psi_n>`, which should equal `lambda_n delta_mn`.
pub fn a_metric_matrix(sol: &SpectralSolution, h: &nalgebra::DMatrix<f64>) -> CMatrix {
    let m = sol.states.len();
    let n = sol.n_sites();
    DMatrix::from_fn(m, m, |a, b| {
        let (sa, sb) = (&sol.states[a], &sol.states[b]);
        // Psi^T A Psi = psi_m^T (l_n psi_n) + (l_m psi_m)^T psi_n + l_m l_n psi_m^T H psi_n
        let mut plain = C64::from(0.0);
        let mut hh = C64::from(0.0);
        for i in 0..n {
            plain += sa.psi[i] * sb.psi[i];
            for j in 0..n {
                hh += sa.psi[i] * h[(i, j)] * sb.psi[j];
            }
        }
        (sa.lambda + sb.lambda) * plain + sa.lambda * sb.lambda * hh
    })
}

/// Residual report of `sum_n psi_n psi_n^T = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnityReport {
    /// `sum_n psi_n psi_n^T - I`.
    pub residual: CMatrix,
    /// Largest entry modulus of `residual`.
    pub max_abs: f64,
}

impl UnityReport {
    /// Pass/fail against a tolerance.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs <= tol
    }
}

/// Checks the resolution of unity over all `2N` states.
pub fn verify_resolution_of_unity(sol: &SpectralSolution) -> Result<UnityReport> {
    sol.require_complete()?;
    let n = sol.n_sites();
    let mut r = -CMatrix::identity(n, n);
    for s in &sol.states {
        r += &s.psi * s.psi.transpose();
    }
    let m = max_abs(&r);
    Ok(UnityReport { residual: r, max_abs: m })
}

/// Amplitude of a state on lead site `x`: `t_{i alpha} lambda^x psi_i`.
pub fn extend_to_lead(model: &OpenLatticeModel, state: &DiscreteState, lead: usize, x: u32) -> Result<C64> {
    let l = model.lead(lead)?;
    if x == 0 {
        return Err(Error::BadArgument("lead coordinate x must be >= 1".into()));
    }
    if l.site >= state.psi.len() {
        return Err(Error::BadLead(format!("#{lead}")));
    }
    Ok(state.psi[l.site] * state.lambda.powu(x) * l.coupling)
}

/// Standard-norm vector `phi = sqrt(1 - lambda^2) psi` (principal root).
pub fn to_standard_norm(state: &DiscreteState) -> Result<CVector> {
    let f = C64::from(1.0) - state.lambda * state.lambda;
    if f.norm() <= 1e-14 {
        return Err(Error::UnitLambdaSquared);
    }
    Ok(&state.psi * f.sqrt())
}
