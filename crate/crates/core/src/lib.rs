//! Solvers for the obstacle problem of clamped Kirchhoff plates.
//!
//! The plate is discretized by a flat-top partition-of-unity method whose
//! nodal degrees of freedom turn the obstacle into box constraints. The
//! discrete variational inequality is solved by a primal-dual active set
//! iteration; each iteration solves a reduced system on the inactive nodes,
//! either directly or by conjugate gradients preconditioned with one-level or
//! two-level overlapping additive Schwarz methods.

pub mod assembly;
pub mod cholesky;
pub mod error;
pub mod experiment;
pub mod par;
pub mod pcg;
pub mod pdas;
pub mod pum;
pub mod quadrature;
pub mod schwarz;
pub mod sparse;

pub use assembly::{assemble_load, assemble_mass, assemble_stiffness, obstacle_vector, ObstacleProblem};
pub use cholesky::{CholFactor, PivotedCholesky};
pub use error::{Error, Result};
pub use par::Execution;
pub use pcg::{lanczos_kappa, pcg, PcgOptions, PcgResult};
pub use pdas::{active_set, check_kkt, pdas_solve, pdas_step, ActiveSet, DirectSolver, PdasOptions, PdasReport};
pub use pum::{coarse_to_fine, Cover1D, Cover2D, Node};
pub use schwarz::{
    build_decomposition, one_level_setup, two_level_setup, Decomposition, Overlap, PcgSolver,
    PreconditionerKind, SchwarzPreconditioner,
};
pub use sparse::{CsrMatrix, SparseSym};
