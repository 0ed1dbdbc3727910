//! Identifiability of the rate matrix behind an embeddable stochastic matrix:
//! is the generator unique, one of finitely many, or one of a continuum?

use serde::{Deserialize, Serialize};

use crate::bounds::det_shortcut;
use crate::error::Result;
use crate::matrix::StochasticMatrix;

/// How determined the generator is, given the matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "count", rename_all = "kebab-case")]
pub enum IdentifiabilityClass {
    /// No generator exists.
    NotEmbeddable,
    /// Exactly one generator.
    UniqueGenerator,
    /// Exactly `m >= 2` generators.
    FiniteCount(usize),
    /// A continuum of generators.
    InfiniteFamily,
    /// At least one generator exists but the method does not certify the
    /// total count.
    UnknownAtLeastOne,
}

impl IdentifiabilityClass {
    pub fn label(&self) -> &'static str {
        match self {
            IdentifiabilityClass::NotEmbeddable => "not-embeddable",
            IdentifiabilityClass::UniqueGenerator => "unique-generator",
            IdentifiabilityClass::FiniteCount(_) => "finite-count",
            IdentifiabilityClass::InfiniteFamily => "infinite-family",
            IdentifiabilityClass::UnknownAtLeastOne => "unknown-at-least-one",
        }
    }

    /// Collapse an exact generator count into a class.
    pub fn from_count(m: usize) -> Self {
        match m {
            0 => IdentifiabilityClass::NotEmbeddable,
            1 => IdentifiabilityClass::UniqueGenerator,
            m => IdentifiabilityClass::FiniteCount(m),
        }
    }
}

/// Determinant rule: above the threshold, an embeddable matrix has only the
/// principal logarithm as generator, so embeddability implies uniqueness.
pub fn det_forces_unique(n: usize, det_m: f64) -> Result<bool> {
    det_shortcut(n, det_m)
}

/// Diagonal-dominance rule: if every diagonal entry exceeds 1/2, the matrix
/// has at most one generator (its spectrum lies in the right half disc at 1,
/// where the principal branch is the only candidate).
pub fn diagonal_dominance_forces_unique(m: &StochasticMatrix) -> bool {
    (0..m.n()).all(|i| m.entries()[(i, i)] > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::ToleranceConfig;
    use nalgebra::DMatrix;

    #[test]
    fn labels_and_counts() {
        assert_eq!(IdentifiabilityClass::from_count(0), IdentifiabilityClass::NotEmbeddable);
        assert_eq!(IdentifiabilityClass::from_count(1), IdentifiabilityClass::UniqueGenerator);
        assert_eq!(IdentifiabilityClass::from_count(3), IdentifiabilityClass::FiniteCount(3));
        assert_eq!(IdentifiabilityClass::FiniteCount(3).label(), "finite-count");
    }

    #[test]
    fn det_rule_matches_threshold() {
        assert!(det_forces_unique(4, 0.01).unwrap());
        assert!(!det_forces_unique(4, 0.001).unwrap());
    }

    #[test]
    fn dd_rule() {
        let tol = ToleranceConfig::default();
        let strong = StochasticMatrix::validate_markov(
            &DMatrix::from_row_slice(3, 3, &[0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6]),
            &tol,
        )
        .unwrap();
        assert!(diagonal_dominance_forces_unique(&strong));
        let weak = StochasticMatrix::validate_markov(
            &DMatrix::from_row_slice(3, 3, &[0.4, 0.3, 0.3, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6]),
            &tol,
        )
        .unwrap();
        assert!(!diagonal_dominance_forces_unique(&weak));
    }
}
