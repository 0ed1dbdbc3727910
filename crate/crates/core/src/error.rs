//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimension {n} is too small; need n >= 2")]
    TooSmall { n: usize },

    #[error("entry ({row},{col}) = {value:e} is negative beyond tolerance")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum:.17} which is not 1 within tolerance")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("matrix is singular (eigenvalue indistinguishable from zero)")]
    SingularMatrix,

    #[error("defective {n}x{n} matrices are unsupported; only 4x4 defects are handled")]
    UnsupportedDefective { n: usize },

    #[error("defective complex eigenvalue cluster is unsupported")]
    ComplexDefective,

    #[error("repeated eigenvalues at n = {n} fall outside the supported cases")]
    UnsupportedRepeated { n: usize },

    #[error("eigenvalue gap below the distinctness tolerance; distinct-eigenvalue path refused")]
    IllConditioned,

    #[error("principal logarithm undefined for a defective block at negative eigenvalue {value:e}")]
    NegativeRealEigenvalueOnBranchCut { value: f64 },

    #[error("degenerate scale: 2*pi*k + arg(mu) = 0 has no halfspace system; principal path applies")]
    DegenerateScale,

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("expected a real matrix but imaginary residue {residual:e} exceeds tolerance")]
    NonRealResult { residual: f64 },

    #[error("internal numerical failure: {0}")]
    Numerical(String),

    #[error("invalid tolerance configuration: {0}")]
    BadTolerance(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, EmbedError>;
