//! Extinction probability vectors of multitype Galton-Watson branching
//! processes with countably many types.
//!
//! The crate covers the full pipeline from offspring laws to the structure of
//! the set of extinction vectors:
//!
//! * [`process`] and [`law`] describe processes and evaluate generating
//!   functions and mean matrices;
//! * [`solver`] computes `q(A)`, the never-visit vector `q0(A)`, the
//!   avoidance extinction vector `q(X, A)` and partial extinction vectors by
//!   truncated functional iteration;
//! * [`relation`] decides `A => B` from solved vectors and cross-checks the
//!   verdicts by simulation;
//! * [`family`] implements the combinatorics of implication graphs: primitive
//!   subsets, the equivalence of index sets and the class signatures;
//! * [`montecarlo`] simulates trajectories and estimates event probabilities
//!   with Wilson intervals;
//! * [`models`] builds the worked examples and [`sweep`] reproduces the level
//!   sweep of the first example.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod error;
pub mod family;
pub mod format;
pub mod law;
pub mod models;
pub mod montecarlo;
pub mod process;
pub mod relation;
pub mod solver;
pub mod subset;
pub mod sweep;
pub mod types;

pub use error::{Error, Result};
pub use law::{CountComponent, CountLaw, JointOutcome, OffspringLaw};
pub use process::ProcessSpec;
pub use solver::{ExtinctionResult, SolveConfig};
pub use subset::SubsetSpec;
pub use types::{ProbVector, TypeId, Typeset, Window};
