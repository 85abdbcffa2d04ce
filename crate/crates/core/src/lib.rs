// Negated comparisons are deliberate where NaN must fail validation, and
// dimension-indexed loops address several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Numerical laboratory for semiclassical nonlinear Schrödinger bound states
//! computed through a penalization of the nonlinearity outside a chosen
//! region. The crate computes limit-problem ground states, penalized ground
//! and pinned states on truncated grids, and verifies the asymptotic energy,
//! concentration, and decay laws on sweeps of the semiclassical parameter.

pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod energy;
pub mod limit;
pub mod solver;
pub mod sweep;

pub use domain::{Field, Mesh, PenalizationMode, Point, PotentialSpec, RegionShape, RegionSpec};
pub use energy::{EnergyError, NehariDiagnostics, PenalizedProblem};
pub use limit::{EnergyConstants, GroundStateProfile, LimitProblemParams};
pub use solver::{DescentOptions, SeedSpec, SolveError, SolveResult};
