//! Dual atomic pursuit.
//!
//! A two-stage solver for atomic-norm problems
//!
//! ```text
//! minimize γ_A(x)  subject to  M x ∈ B
//! ```
//!
//! Stage one runs a level bundle method on the gauge dual
//! `minimize σ_A(M* y) subject to y ∈ B'`. The atoms collected by its
//! cutting-plane model are candidates for the optimal atomic support. Stage
//! two solves the primal restricted to those atoms.
//!
//! Two atomic families are supported end to end: signed canonical basis
//! vectors (ℓ1 / basis pursuit denoising, [`poly`]) and normalized rank-one
//! PSD matrices (trace norm on the PSD cone / phase retrieval, [`spectral`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod bundle;
pub mod error;
pub mod instance;
pub mod linalg;
pub mod linops;
pub mod poly;
pub mod projection;
pub mod solution;
pub mod spectral;

pub use atoms::{Antipolar, Atom, AtomFamily, AtomicSet, PolyAtom, SpectralAtom};
pub use bundle::{run, run_with_observer, BundleModel, LevelState, ProjectionMethod, RunEvent, SolverConfig, TraceRecord, UpdateParams};
pub use error::{Error, Result};
pub use instance::{generate_bpdn, generate_phase, ProblemInstance};
pub use linops::{DenseOperator, Operator, Point, RankOneOperator};
pub use poly::PolyBundle;
pub use solution::{Factors, PrimalSolution};
pub use spectral::SpectralBundle;
