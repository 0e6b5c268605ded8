//! Error type shared by every module.

use alloc::string::String;

/// Result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Failures reported by the library.
///
/// Dot-site indices in messages are 1-based, matching external formats.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The dot matrix is not symmetric within tolerance.
    #[error("dot matrix is not symmetric: H[{i}][{j}] = {a} but H[{j}][{i}] = {b}")]
    NonSymmetricDot {
        /// Row (1-based).
        i: usize,
        /// Column (1-based).
        j: usize,
        /// `H[i][j]`.
        a: f64,
        /// `H[j][i]`.
        b: f64,
    },
    /// A site index lies outside `[1, N]`.
    #[error("site index {site} outside [1, {n}]")]
    BadSiteIndex {
        /// Offending index (1-based).
        site: usize,
        /// Number of dot sites.
        n: usize,
    },
    /// The model has no leads.
    #[error("model has no leads; a closed dot has no resonances")]
    NoLeads,
    /// Malformed model input other than symmetry or indices.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A lead label or index does not exist.
    #[error("unknown lead {0}")]
    BadLead(String),
    /// `lambda = 0` was supplied.
    #[error("lambda = 0 is not a valid sheet point")]
    ZeroLambda,
    /// `E = +-2`, where the two sheets meet.
    #[error("E = {0} is a branch point (double root lambda = +-1)")]
    BranchPoint(f64),
    /// Two finite eigenvalues are closer than the degeneracy gate.
    #[error("degenerate spectrum: relative eigenvalue gap {gap:e}")]
    DegenerateSpectrum {
        /// Smallest relative gap found.
        gap: f64,
    },
    /// The eigensolver did not converge or produced inconsistent output.
    #[error("eigensolver failure: {0}")]
    SolverFailure(String),
    /// `lambda^2 = 1`, where the standard normalization is undefined.
    #[error("lambda^2 = 1: standard normalization undefined")]
    UnitLambdaSquared,
    /// The operation needs all `2N` finite states.
    #[error("spectrum incomplete: {n_infinite} eigenvalue(s) at infinity")]
    IncompleteSpectrum {
        /// Number of infinite eigenvalues.
        n_infinite: usize,
    },
    /// Direct inversion hit a pole of the effective Green's function.
    #[error("E - H_eff is singular at lambda = {re} + {im}i")]
    SingularAtPole {
        /// Real part of lambda.
        re: f64,
        /// Imaginary part of lambda.
        im: f64,
    },
    /// An expansion was requested too close to a discrete eigenvalue.
    #[error("lambda lies within the guard radius of pole {index}")]
    PoleHit {
        /// State index.
        index: usize,
    },
    /// The energy is not strictly inside the band `(-2, 2)`.
    #[error("energy {0} is not strictly inside the band (-2, 2)")]
    BandEdge(f64),
    /// A lead closed form was requested off the first sheet.
    #[error("|lambda| = {0} is not inside the unit circle")]
    UnitCircleLambda(f64),
    /// A plane-wave momentum is not strictly inside `(0, pi)`.
    #[error("k = {0} is not strictly inside (0, pi)")]
    BandEdgeK(f64),
    /// Quadrature did not reach its tolerance.
    #[error("quadrature failed: {0}")]
    QuadratureFail(String),
    /// A pole sits on (or too close to) an integration contour.
    #[error("pole {index} lies within 1e-6 of the integration contour")]
    ContourPoleConflict {
        /// State index.
        index: usize,
    },
    /// Requested time lies beyond the truncated lattice's reflection horizon.
    #[error("|t| = {t} exceeds the oracle horizon {horizon}")]
    HorizonExceeded {
        /// Requested time.
        t: f64,
        /// Admissible bound.
        horizon: f64,
    },
    /// The characteristic polynomial is too ill-conditioned to root.
    #[error("characteristic polynomial ill-conditioned (estimate {condition:e})")]
    IllConditionedPolynomial {
        /// Condition estimate.
        condition: f64,
    },
    /// Argument outside its documented domain.
    #[error("invalid argument: {0}")]
    BadArgument(String),
}
