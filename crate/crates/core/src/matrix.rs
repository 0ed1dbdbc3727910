//! Validated matrix wrappers and the small constructors used throughout:
//! stochastic (Markov) matrices, rate matrices (zero row sums, nonnegative
//! off-diagonal), and the tagged generator candidates the solvers emit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EmbedError, Result};
use crate::tol::ToleranceConfig;

/// A validated row-stochastic matrix. Construction clamps entries in
/// [-nonneg_tol, 0) to zero and renormalizes each row to sum exactly 1, so
/// downstream spectral code can rely on M * ones == ones to rounding error.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    /// Validate a raw matrix as row-stochastic.
    ///
    /// Checks, in order: squareness and n >= 2, entrywise bound
    /// entry >= -nonneg_tol, then |raw row sum - 1| <= row_sum_tol.
    /// On success tiny negatives are clamped to zero and each row is
    /// renormalized, so the stored matrix is exactly stochastic up to
    /// rounding. The sum is checked before clamping: clamping may shift
    /// it by up to n * nonneg_tol, which is not the caller's error.
    pub fn validate_markov(raw: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<Self> {
        tol.validate()?;
        let (rows, cols) = raw.shape();
        if rows != cols {
            return Err(EmbedError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(EmbedError::TooSmall { n: rows });
        }
        for i in 0..rows {
            for j in 0..cols {
                let v = raw[(i, j)];
                if !v.is_finite() || v < -tol.nonneg_tol {
                    return Err(EmbedError::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = raw.row(i).iter().sum();
            if (sum - 1.0).abs() > tol.row_sum_tol {
                return Err(EmbedError::RowSumViolation { row: i, sum });
            }
        }
        let mut m = raw.map(|v| v.max(0.0));
        for i in 0..rows {
            let sum: f64 = m.row(i).iter().sum();
            for j in 0..cols {
                m[(i, j)] /= sum;
            }
        }
        Ok(StochasticMatrix { entries: m })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Determinant via LU. For spectral work prefer the eigenvalue product
    /// computed by `spectral::decompose`, which keeps its sign reliable for
    /// determinants near the floating-point noise floor.
    pub fn det(&self) -> f64 {
        self.entries.clone().lu().determinant()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }
}

/// Is `q` a rate matrix: off-diagonal entries >= -nonneg_tol and row sums
/// within row_sum_tol of zero. Returns false (never panics) for non-square
/// input.
pub fn is_rate_matrix(q: &DMatrix<f64>, tol: &ToleranceConfig) -> bool {
    let (rows, cols) = q.shape();
    if rows != cols {
        return false;
    }
    for i in 0..rows {
        let mut sum = 0.0;
        for j in 0..cols {
            let v = q[(i, j)];
            if !v.is_finite() {
                return false;
            }
            if i != j && v < -tol.nonneg_tol {
                return false;
            }
            sum += v;
        }
        if sum.abs() > tol.row_sum_tol {
            return false;
        }
    }
    true
}

/// A validated rate matrix (generator candidate input, census fixtures).
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    entries: DMatrix<f64>,
}

impl RateMatrix {
    pub fn validate(raw: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<Self> {
        let (rows, cols) = raw.shape();
        if rows != cols {
            return Err(EmbedError::NotSquare { rows, cols });
        }
        if !is_rate_matrix(raw, tol) {
            // Pin down which condition failed for the error message.
            for i in 0..rows {
                let sum: f64 = raw.row(i).iter().sum();
                if sum.abs() > tol.row_sum_tol {
                    return Err(EmbedError::RowSumViolation { row: i, sum });
                }
                for j in 0..cols {
                    if i != j && raw[(i, j)] < -tol.nonneg_tol {
                        return Err(EmbedError::NegativeEntry {
                            row: i,
                            col: j,
                            value: raw[(i, j)],
                        });
                    }
                }
            }
            return Err(EmbedError::Numerical(
                "rate validation failed without a localizable witness".into(),
            ));
        }
        Ok(RateMatrix {
            entries: cleanup_rate(raw),
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

/// Canonical cleanup for a matrix that passed the rate test: clamp off-diagonal
/// dust below zero, then set each diagonal to minus the off-diagonal row sum so
/// row sums are exactly zero.
pub fn cleanup_rate(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut out = q.clone();
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                if out[(i, j)] < 0.0 {
                    out[(i, j)] = 0.0;
                }
                off += out[(i, j)];
            }
        }
        out[(i, i)] = -off;
    }
    out
}

/// Which logarithm family produced a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BranchTag {
    /// Principal logarithm.
    Principal,
    /// Distinct-eigenvalue branch vector, one index per conjugate pair.
    DistinctBranch(Vec<i64>),
    /// 4x4 complex-pair family Log(M) + k V.
    Case2Branch(i64),
    /// 4x4 repeated-eigenvalue family: branch k with hyperboloid point.
    Case3Point { k: i64, x: f64, y: f64, z: f64 },
    /// Unique logarithm of a defective 4x4 matrix.
    Defective,
}

/// A generator emitted by a solver: a rate matrix plus the branch that found it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCandidate {
    pub matrix: DMatrix<f64>,
    pub branch: BranchTag,
}

/// Frobenius distance, used for reconstruction residuals and set comparisons.
pub fn frob_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Equal-input matrix EI(a, b, c, d): every row is (a, b, c, d) plus
/// lambda = 1 - (a+b+c+d) added on the diagonal. Eigenvalues are 1 and a
/// triple lambda.
pub fn equal_input_matrix(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    let lambda = 1.0 - (a + b + c + d);
    let mut m = DMatrix::from_fn(4, 4, |_, j| [a, b, c, d][j]);
    for i in 0..4 {
        m[(i, i)] += lambda;
    }
    m
}

/// Cyclic rate matrix C_n(alpha): -alpha on the diagonal, alpha at the
/// superdiagonal positions i = j - 1 mod n. Its eigenvalues
/// -alpha (1 - e^{2 pi i j / n}) attain the imaginary-part bound exactly.
pub fn cyclic_rate_matrix(n: usize, alpha: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = -alpha;
        m[(i, (i + 1) % n)] = alpha;
    }
    m
}
