//! Tolerance bundle threaded through every numerical decision.
//!
//! All comparisons in the crate go through one of these named tolerances so
//! that a single knob (`with_scale`) can tighten or loosen the whole pipeline
//! coherently.

use serde::{Deserialize, Serialize};

use crate::error::{EmbedError, Result};

/// Named tolerances. Defaults are the documented contract; `with_scale(eps)`
/// rescales the bundle linearly so that `eps = 1e-8` reproduces the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Max |row sum - 1| accepted for a stochastic matrix, and |row sum|
    /// accepted for a rate matrix.
    pub row_sum_tol: f64,
    /// Slack below zero accepted for entries that should be nonnegative.
    pub nonneg_tol: f64,
    /// Relative gap under which two eigenvalues are treated as equal:
    /// |a - b| <= eig_distinct_rel_tol * max(1, |a|, |b|).
    pub eig_distinct_rel_tol: f64,
    /// Singular values below defect_rank_tol * sigma_max count as zero when
    /// measuring geometric multiplicity.
    pub defect_rank_tol: f64,
    /// Frobenius tolerance for reconstruction checks (exp(Q) vs M, P D P^-1
    /// vs M, imaginary residue of results expected real).
    pub reconstruct_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            row_sum_tol: 1e-10,
            nonneg_tol: 1e-9,
            eig_distinct_rel_tol: 1e-8,
            defect_rank_tol: 1e-9,
            reconstruct_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    /// Bundle scaled so `eps` plays the role of the default 1e-8: every
    /// member keeps its default ratio to `reconstruct_tol`.
    pub fn with_scale(eps: f64) -> Self {
        ToleranceConfig {
            row_sum_tol: 1e-2 * eps,
            nonneg_tol: 1e-1 * eps,
            eig_distinct_rel_tol: eps,
            defect_rank_tol: 1e-1 * eps,
            reconstruct_tol: eps,
        }
    }

    /// Check the invariants the rest of the crate relies on.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("row_sum_tol", self.row_sum_tol),
            ("nonneg_tol", self.nonneg_tol),
            ("eig_distinct_rel_tol", self.eig_distinct_rel_tol),
            ("defect_rank_tol", self.defect_rank_tol),
            ("reconstruct_tol", self.reconstruct_tol),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmbedError::BadTolerance(format!(
                    "{name} = {v:e} must be finite and > 0"
                )));
            }
        }
        if self.nonneg_tol < self.row_sum_tol {
            return Err(EmbedError::BadTolerance(format!(
                "nonneg_tol = {:e} must be >= row_sum_tol = {:e}",
                self.nonneg_tol, self.row_sum_tol
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ToleranceConfig::default().validate().unwrap();
    }

    #[test]
    fn scale_1e8_is_default() {
        let scaled = ToleranceConfig::with_scale(1e-8);
        let def = ToleranceConfig::default();
        assert!((scaled.row_sum_tol - def.row_sum_tol).abs() < 1e-25);
        assert!((scaled.nonneg_tol - def.nonneg_tol).abs() < 1e-24);
        assert_eq!(scaled.eig_distinct_rel_tol, def.eig_distinct_rel_tol);
        assert!((scaled.defect_rank_tol - def.defect_rank_tol).abs() < 1e-24);
        assert_eq!(scaled.reconstruct_tol, def.reconstruct_tol);
        scaled.validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive() {
        let mut t = ToleranceConfig::default();
        t.nonneg_tol = 0.0;
        assert!(t.validate().is_err());
        let mut t = ToleranceConfig::default();
        t.reconstruct_tol = f64::NAN;
        assert!(t.validate().is_err());
    }

    #[test]
    fn rejects_inverted_ordering() {
        let mut t = ToleranceConfig::default();
        t.row_sum_tol = 1e-3;
        assert!(t.validate().is_err());
    }
}
