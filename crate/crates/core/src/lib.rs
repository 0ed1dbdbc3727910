//! Embeddability analysis for row-stochastic matrices.
//!
//! A stochastic matrix `M` is embeddable when `M = e^Q` for some rate
//! matrix `Q` (nonnegative off-diagonal entries, zero row sums), i.e. when
//! the discrete-time chain is a snapshot of a continuous-time one. This
//! crate decides embeddability, enumerates every Markov generator rather
//! than just one, and reports whether the underlying rates are identifiable
//! from the snapshot alone.
//!
//! The `n x n` case with distinct eigenvalues is handled by certified
//! branch enumeration of the matrix logarithm. For `4 x 4` matrices the
//! solver is complete: repeated-eigenvalue geometry (a one-parameter
//! hyperboloid of candidate logarithms per winding number), defective
//! Jordan structure, and the equal-input family are all covered, so every
//! 4 x 4 stochastic matrix gets a definite verdict.
//!
//! Entry points:
//! - [`four::solve4x4`] / [`four::solve`]: full decision for one matrix.
//! - [`report::EmbeddabilityReport`]: serializable result with
//!   certificates and diagnostics.
//! - [`branches::enumerate_generators_distinct`]: generator enumeration
//!   for any size with distinct eigenvalues.
//! - [`sampler::run_census`]: Monte-Carlo census over the stochastic
//!   simplex.

pub mod bounds;
pub mod branches;
pub mod case3;
pub mod error;
pub mod expm;
pub mod four;
pub mod identifiability;
pub mod logm;
pub mod matrix;
pub mod report;
pub mod sampler;
pub mod spectral;
pub mod tol;

pub use bounds::{beta_n, bound_b_n, bound_big_b_n, det_shortcut, table1_threshold};
pub use branches::{branch_bounds, branch_logarithm, enumerate_generators_distinct, generator_count_bound};
pub use case3::{solve_case3, Case3Cardinality, Case3Family, Case3KReport, Case3Outcome};
pub use error::{EmbedError, Result};
pub use expm::matrix_exponential;
pub use four::{solve, solve4x4, SolveOutcome};
pub use identifiability::IdentifiabilityClass;
pub use logm::{principal_logarithm, real_part_checked};
pub use matrix::{
    cyclic_rate_matrix, equal_input_matrix, frob_dist, is_rate_matrix, BranchTag,
    GeneratorCandidate, RateMatrix, StochasticMatrix,
};
pub use report::EmbeddabilityReport;
pub use sampler::{run_census, sample_markov_uniform, CensusConfig, CensusResult};
pub use spectral::{decompose, Decomposition, SpectralClass, SpectralDecomposition};
pub use tol::ToleranceConfig;
