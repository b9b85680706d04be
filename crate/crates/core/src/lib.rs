//! Realization theory for hidden Markov models whose observation is a
//! deterministic function of the state.
//!
//! Given a model `(Q, phi)` the crate computes the reachable subspace, the
//! null space and the effective space, builds symbol-blocked bases for them,
//! and uses those bases to produce reduced quasi-realizations. The reduced
//! realizations generate exactly the same third-order string-probability
//! tensor `M = A ⊗ B ⊗ C` with fewer rank-one terms, which the [`tensor`]
//! module certifies numerically. The [`hankel`] module cross-checks the
//! effective dimension against the rank of a truncated generalized Hankel
//! matrix, and [`sim`] provides a seeded Monte Carlo oracle for tensor
//! entries.
//!
//! Symbols and states are 1-based at every external surface (JSON files,
//! CLI, [`Word`], `col_symbol`/`row_symbol` labels) and 0-based for matrix
//! indexing.

pub mod ensemble;
pub mod error;
pub mod examples;
pub mod hankel;
pub mod io;
pub mod linalg;
pub mod model;
pub mod reduce;
pub mod sim;
pub mod subspace;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{
    observation_matrix, selector, stationary_distribution, string_probability, validate_hmm, Hmm,
    Model, ObservationMap, Orientation, QuasiRealization, Realization, StationaryVector, Tolerances,
    ValidationReport, Violation, Word,
};
pub use reduce::{
    reduce_effective, reduce_null, reduce_reachable, residual_report, Reduction, ReductionKind,
};
pub use subspace::{
    analyze, effective_basis, null_space_cobasis, reachable_basis, EffectiveBasis,
    SubspaceReport, SymbolBlockedBasis, SymbolBlockedCobasis,
};
pub use tensor::{build_factors, build_tensor, compose, index_of, max_abs_diff, FactorTriple, Tensor3};
