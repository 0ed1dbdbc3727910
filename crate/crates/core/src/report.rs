//! Machine-readable embeddability reports.
//!
//! `EmbeddabilityReport` is the serialization boundary of the crate: a plain
//! data structure (every matrix flattened to nested vectors) that restates a
//! `SolveOutcome` together with the input echo, the certificates behind the
//! identifiability class, and per-generator exponential residuals. It
//! round-trips through serde without loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::case3::Case3Cardinality;
use crate::expm::matrix_exponential;
use crate::four::SolveOutcome;
use crate::identifiability::{diagonal_dominance_forces_unique, IdentifiabilityClass};
use crate::matrix::{BranchTag, StochasticMatrix};
use crate::spectral::SpectralClass;
use crate::tol::ToleranceConfig;

/// Version stamp carried by every report.
pub const SCHEMA_VERSION: &str = "1";

/// One generator, with the branch that produced it and its reconstruction
/// quality ||e^Q - M||_F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub matrix: Vec<Vec<f64>>,
    pub branch: BranchTag,
    pub exp_residual: f64,
}

/// Branch-interval summary of the conjugate-pair case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case2Report {
    pub k_lo: i64,
    pub k_hi: i64,
    /// Off-diagonal positions where every branch is blocked.
    pub blocked: Vec<(usize, usize)>,
}

/// One winding of the repeated-eigenvalue analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingRecord {
    pub k: i64,
    pub theta: f64,
    /// "empty", "finite-points", or "infinite".
    pub cardinality: String,
    pub points: Vec<[f64; 3]>,
    pub representative: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case3Report {
    pub k_lo: i64,
    pub k_hi: i64,
    pub windings: Vec<WindingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub table1_threshold: Option<f64>,
    pub det_shortcut: bool,
    /// Decimal string: the a-priori cap can exceed what a JSON number
    /// represents exactly.
    pub count_bound: Option<String>,
    pub branch_boxes: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Condition number of the decomposition basis, when one was computed.
    pub condition_number: Option<f64>,
    pub tolerances: ToleranceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddabilityReport {
    pub schema_version: String,
    pub n: usize,
    pub matrix: Vec<Vec<f64>>,
    pub det: f64,
    pub case: String,
    pub embeddable: bool,
    pub identifiability: IdentifiabilityClass,
    /// Certificates the identifiability class rests on.
    pub identifiability_basis: Vec<String>,
    pub generators: Vec<GeneratorRecord>,
    pub case2: Option<Case2Report>,
    pub case3: Option<Case3Report>,
    pub bounds: Option<BoundsReport>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    pub not_embeddable_reason: Option<String>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

fn basis_facts(m: &StochasticMatrix, out: &SolveOutcome) -> Vec<String> {
    let mut facts = Vec::new();
    if !out.embeddable {
        facts.push("no-generator-exists".to_string());
        return facts;
    }
    if crate::identifiability::det_forces_unique(out.n, out.det).unwrap_or(false) {
        facts.push("determinant-above-threshold".to_string());
    }
    if diagonal_dominance_forces_unique(m) {
        facts.push("diagonally-dominant".to_string());
    }
    facts.push(
        match out.class {
            SpectralClass::CaseI => "unique-real-logarithm",
            SpectralClass::CaseII => "branch-interval-count",
            SpectralClass::CaseIII => "winding-cardinality",
            SpectralClass::CaseIV => {
                if out.identifiability == IdentifiabilityClass::UniqueGenerator {
                    "equal-input-determinant-rule"
                } else {
                    "count-not-certified-below-equal-input-threshold"
                }
            }
            SpectralClass::Defective2Blocks | SpectralClass::Defective3Block => {
                "jordan-unique-logarithm"
            }
            _ => "certified-branch-enumeration",
        }
        .to_string(),
    );
    facts
}

impl EmbeddabilityReport {
    /// Restate a solver outcome as the serializable report.
    pub fn from_outcome(
        m: &StochasticMatrix,
        out: &SolveOutcome,
        tol: &ToleranceConfig,
    ) -> Self {
        let generators = out
            .generators
            .iter()
            .map(|g| GeneratorRecord {
                matrix: rows_of(&g.matrix),
                branch: g.branch.clone(),
                exp_residual: (matrix_exponential(&g.matrix) - m.entries()).norm(),
            })
            .collect();
        let case2 = out.case2.as_ref().map(|c| Case2Report {
            k_lo: c.k_lo,
            k_hi: c.k_hi,
            blocked: c.blocked.clone(),
        });
        let case3 = out.case3.as_ref().map(|c| Case3Report {
            k_lo: c.k_lo,
            k_hi: c.k_hi,
            windings: c
                .reports
                .iter()
                .map(|r| {
                    let (cardinality, points, representative) = match &r.cardinality {
                        Case3Cardinality::Empty => ("empty", Vec::new(), None),
                        Case3Cardinality::FinitePoints(p) => {
                            ("finite-points", p.clone(), None)
                        }
                        Case3Cardinality::Infinite { representative } => {
                            ("infinite", Vec::new(), Some(*representative))
                        }
                    };
                    WindingRecord {
                        k: r.k,
                        theta: r.theta,
                        cardinality: cardinality.to_string(),
                        points,
                        representative,
                    }
                })
                .collect(),
        });
        let bounds = out.bounds.as_ref().map(|b| BoundsReport {
            table1_threshold: b.threshold,
            det_shortcut: b.shortcut,
            count_bound: b.count_bound.map(|c| c.to_string()),
            branch_boxes: b.boxes.clone(),
        });
        EmbeddabilityReport {
            schema_version: SCHEMA_VERSION.to_string(),
            n: out.n,
            matrix: m.to_rows(),
            det: out.det,
            case: out.class.label().to_string(),
            embeddable: out.embeddable,
            identifiability: out.identifiability.clone(),
            identifiability_basis: basis_facts(m, out),
            generators,
            case2,
            case3,
            bounds,
            diagnostics: Diagnostics {
                condition_number: out.cond,
                tolerances: tol.clone(),
            },
            warnings: out.warnings.clone(),
            not_embeddable_reason: out.not_embeddable_reason.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::matrix_exponential;
    use crate::four::solve;
    use crate::matrix::{cyclic_rate_matrix, equal_input_matrix};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn report_for(raw: &DMatrix<f64>) -> (StochasticMatrix, EmbeddabilityReport) {
        let m = StochasticMatrix::validate_markov(raw, &tol()).unwrap();
        let out = solve(&m, &tol()).unwrap();
        let rep = EmbeddabilityReport::from_outcome(&m, &out, &tol());
        (m, rep)
    }

    #[test]
    fn json_round_trip_case2() {
        let (_, rep) = report_for(&matrix_exponential(&cyclic_rate_matrix(4, 4.0)));
        assert!(rep.embeddable);
        assert!(rep.case2.is_some());
        let s = serde_json::to_string(&rep).unwrap();
        let back: EmbeddabilityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn generator_residuals_within_tolerance() {
        let (_, rep) = report_for(&matrix_exponential(&cyclic_rate_matrix(4, 2.0)));
        assert!(!rep.generators.is_empty());
        for g in &rep.generators {
            assert!(g.exp_residual < tol().reconstruct_tol, "residual {:e}", g.exp_residual);
        }
    }

    #[test]
    fn deep_equal_input_serializes_unknown_class() {
        let lam: f64 = (-4.0 * std::f64::consts::PI).exp();
        let p = (1.0 - lam) / 4.0;
        let (_, rep) = report_for(&equal_input_matrix(p, p, p, p));
        assert_eq!(rep.case, "case-4");
        assert_eq!(rep.identifiability, IdentifiabilityClass::UnknownAtLeastOne);
        let s = serde_json::to_string(&rep).unwrap();
        assert!(s.contains("\"unknown-at-least-one\""));
        assert!(s.contains("\"schema_version\":\"1\""));
    }

    #[test]
    fn distinct_path_carries_bounds() {
        let (_, rep) = report_for(&matrix_exponential(&cyclic_rate_matrix(3, 2.0)));
        let b = rep.bounds.as_ref().expect("bounds for the distinct path");
        assert!(b.table1_threshold.is_some());
        assert!(b.count_bound.is_some());
        assert_eq!(b.branch_boxes.len(), 1);
        let s = serde_json::to_string(&rep).unwrap();
        let back: EmbeddabilityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn case3_windings_serialized() {
        let (_, rep) = report_for(&matrix_exponential(&cyclic_rate_matrix(
            4,
            std::f64::consts::PI,
        )));
        assert_eq!(rep.case, "case-3");
        let c3 = rep.case3.as_ref().unwrap();
        assert_eq!((c3.k_lo, c3.k_hi), (-1, 0));
        assert!(!c3.windings.is_empty());
        for w in &c3.windings {
            assert!(["empty", "finite-points", "infinite"].contains(&w.cardinality.as_str()));
        }
        let s = serde_json::to_string(&rep).unwrap();
        let back: EmbeddabilityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn unique_verdict_records_certificates() {
        let (_, rep) = report_for(&equal_input_matrix(0.125, 0.125, 0.125, 0.125));
        assert!(rep.embeddable);
        assert!(rep
            .identifiability_basis
            .iter()
            .any(|f| f == "determinant-above-threshold"));
        assert!(rep.diagnostics.condition_number.is_some());
    }
}
