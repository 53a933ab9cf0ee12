//! Computational toolkit for polyhedral chains and space-time trajectories.
//!
//! The crate is organised bottom-up:
//!
//! * [`chains`] — exact algebra of polyhedral k-chains in `R^d`: canonical
//!   forms, boundary, mass, affine pushforward, prism products, half-space
//!   restriction, and norms of simple multivectors.
//! * [`lp`] — a small bundled dense-tableau simplex solver (two-phase,
//!   Bland anti-cycling) behind a swappable interface.
//! * [`complex`] — finite simplicial complexes, embedding of chains, flat
//!   norms and homogeneous flat norms as LPs, and a Wasserstein-1 transport
//!   LP used as an independent cross-check for 0-chains.
//! * [`spacetime`] — trajectories: chains in `R^{1+d}` with time as
//!   coordinate 0, cones, stretches, concatenation, slicing, variation and
//!   time-sup norms.
//! * [`gridflow`] — cubical deformation of low-dimensional chains onto
//!   scaled, shifted grid skeletons, in both static (`T = P + bd R`) and
//!   dynamical (trajectory `S` from `T` to `P`) form.
//! * [`domain`] — planar polygonal domains: good directions, inward
//!   direction fields, small contractions, and the disk/lens retraction
//!   witness.
//! * [`meshes`] — generators for the meshes, loops and sequences used by the
//!   CLI and the test suites.
//! * [`pipeline`] — the end-to-end operations connecting everything:
//!   building a trajectory between two cycles, distance bounds, and
//!   connectivity runs over a sequence of cycles.
//!
//! All values are immutable; operations return new chains. The only mutable
//! state in the crate is private to an LP solve.

pub mod chains;
pub mod complex;
pub mod domain;
pub mod gridflow;
pub mod lp;
pub mod meshes;
pub mod pipeline;
pub mod spacetime;

use thiserror::Error;

/// Errors shared across the toolkit.
///
/// Operations distinguish caller mistakes (dimension mismatches, invalid
/// intervals, chains outside a complex, ...) from genuine mathematical
/// obstructions (infeasible fillings) and from search failures that carry
/// diagnostics for the caller.
#[derive(Debug, Error)]
pub enum Error {
    /// Mixed ambient dimensions or simplex dimensions in one operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A coordinate was NaN or infinite.
    #[error("non-finite coordinate or coefficient: {0}")]
    NonFinite(String),

    /// Boundary of a 0-chain.
    #[error("boundary is undefined for 0-chains")]
    UndefinedBoundary,

    /// Interval product with `a >= b`.
    #[error("invalid interval: requires a < b, got [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    /// Half-space restriction with a zero normal.
    #[error("invalid hyperplane: zero normal vector")]
    InvalidHyperplane,

    /// Top cells do not meet along common faces.
    #[error("mesh is not conforming: {0}")]
    MeshConformity(String),

    /// A chain uses simplices that are not cells of the complex.
    #[error("chain is not supported on the complex: {0}")]
    NotInComplex(String),

    /// An operation that requires a cycle received a non-cycle.
    #[error("chain is not a cycle: {0}")]
    NotACycle(String),

    /// Transport between measures of different total mass.
    #[error("unbalanced transport problem: source mass {supply} != sink mass {demand}")]
    UnbalancedTransport { supply: f64, demand: f64 },

    /// The LP solver failed (stall, numerical breakdown, unbounded).
    #[error("LP solver failure: {0}")]
    Solver(String),

    /// A filling problem is infeasible: the cycle is not a boundary in the
    /// complex. Carries the phase-1 objective as the certificate.
    #[error("homology obstruction: no filling exists (phase-1 objective {certificate:.6e})")]
    HomologyObstruction { certificate: f64 },

    /// A grid-flow point sits on (or numerically on) the singular set.
    #[error("singular position: {0}")]
    SingularPosition(String),

    /// Rejection sampling for a grid shift exhausted its candidate budget.
    #[error(
        "shift search failed after {candidates} candidates; best integral {best_integral:.6} \
         exceeds bound {bound:.6}"
    )]
    ShiftSearchFailure {
        candidates: usize,
        best_integral: f64,
        bound: f64,
        best_shift: Vec<f64>,
    },

    /// Concatenation of trajectories whose endpoints do not match.
    /// `gap` is the mass of the canonical difference of the two endpoint
    /// chains (an upper bound for their flat distance).
    #[error("trajectory endpoints do not match: mass gap {gap:.6e}")]
    EndpointMismatch { gap: f64 },

    /// A reparameterization map that is not a strictly monotone PL bijection
    /// of [0,1].
    #[error("invalid reparameterization: {0}")]
    InvalidReparameterization(String),

    /// A space-time chain whose boundary is not confined to the endpoint
    /// slices {0} x R^d and {1} x R^d.
    #[error("not a trajectory: {0}")]
    NotATrajectory(String),

    /// Good-direction query on a ball that misses the boundary.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Direction combination with vanishing convex combination, or other
    /// contradictions with the good-direction geometry.
    #[error("contradictory directions: {0}")]
    ContradictoryDirections(String),

    /// Direction-field construction failed on a pathological polygon.
    #[error("direction field construction failed: {0}")]
    FieldConstruction(String),

    /// Contraction-map construction failed (step-size halving exhausted).
    #[error("contraction construction failed: {0}")]
    ContractionConstruction(String),

    /// Malformed input outside the other categories (bad JSON payloads,
    /// out-of-range parameters, unsupported dimensions).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Relative tolerance for dropping coefficients during canonicalization,
/// and for the degenerate-simplex volume test.
pub const CANONICAL_REL_TOL: f64 = 1e-12;

/// Feasibility / optimality tolerance used by the bundled LP solver.
pub const LP_TOL: f64 = 1e-9;
