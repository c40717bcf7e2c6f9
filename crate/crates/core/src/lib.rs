//! Solvers for the two-marginal semidefinite relaxation of quantum lattice
//! ground-state problems.
//!
//! A lattice Hamiltonian is coarse-grained into clusters ([`spin_models`],
//! [`fermion_models`]), relaxed to an SDP over cluster and cluster-pair
//! marginals ([`sdp_core`]) and solved by ADMM with projected dual ascent
//! ([`solver`], or [`solver_ti`] for translation-invariant problems). The
//! optimal value is a lower bound on the ground-state energy; [`oracle`]
//! provides exact references for small systems.

pub mod error;
pub mod fermion_models;
pub mod linalg;
pub mod oracle;
pub mod sdp_core;
pub mod solver;
pub mod solver_ti;
pub mod spin_models;

pub use error::{Error, Result};
pub use linalg::{HermMatrix, SymMatrix};
pub use sdp_core::{DualState, MarginalSet, TiDualState, TiMarginals};
pub use solver::{
    solve, AdmmSolver, ConvergenceRecord, Iterate, SolveOutcome, SolverConfig, SolverState,
    StopReason,
};
pub use solver_ti::{solve_ti, TiSolver, TiState};
pub use spin_models::{ClusterDecomposition, ClusterProblem, Lattice, Statistics};
