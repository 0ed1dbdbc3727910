//! Randomized invariants of the exponential / logarithm machinery.

use nalgebra::DMatrix;
use proptest::prelude::*;

use embedscan_core::{
    branch_logarithm, decompose, enumerate_generators_distinct, frob_dist, is_rate_matrix,
    matrix_exponential, principal_logarithm, real_part_checked, Decomposition, StochasticMatrix,
    ToleranceConfig,
};

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

/// Build an n x n rate matrix from a flat list of off-diagonal magnitudes.
fn rate_from(parts: &[f64], n: usize, scale: f64) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                let v = parts[idx % parts.len()] * scale;
                idx += 1;
                q[(i, j)] = v;
                row += v;
            }
        }
        q[(i, i)] = -row;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn exponential_of_rate_is_stochastic(
        parts in prop::collection::vec(0.0f64..2.0, 30),
        n in 2usize..=6,
        scale in 0.05f64..1.5,
    ) {
        let q = rate_from(&parts, n, scale);
        let m = matrix_exponential(&q);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| m[(i, j)]).sum();
            prop_assert!((row - 1.0).abs() < 1e-9, "row {} sums to {}", i, row);
            for j in 0..n {
                prop_assert!(m[(i, j)] >= -1e-12, "entry ({}, {}) = {}", i, j, m[(i, j)]);
            }
        }
        prop_assert!(StochasticMatrix::validate_markov(&m, &tol()).is_ok());
    }

    #[test]
    fn determinant_of_exponential_is_exp_trace(
        parts in prop::collection::vec(0.0f64..2.0, 30),
        n in 2usize..=6,
        scale in 0.05f64..1.0,
    ) {
        let q = rate_from(&parts, n, scale);
        let m = matrix_exponential(&q);
        let lhs = m.determinant();
        let rhs = q.trace().exp();
        prop_assert!(
            (lhs - rhs).abs() <= 1e-9 * (1.0 + rhs),
            "det e^Q = {} but exp(trace Q) = {}", lhs, rhs
        );
    }

    #[test]
    fn principal_log_round_trips(
        parts in prop::collection::vec(0.0f64..2.0, 30),
        n in 2usize..=6,
        scale in 0.05f64..0.8,
    ) {
        let q = rate_from(&parts, n, scale);
        let t = tol();
        let m = StochasticMatrix::validate_markov(&matrix_exponential(&q), &t).unwrap();
        let decomp = match decompose(&m, &t) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        let log_c = match principal_logarithm(&decomp) {
            Ok(l) => l,
            Err(_) => return Ok(()),
        };
        let log_r = real_part_checked(&log_c, &t).unwrap();
        // exp(Log M) recovers M ...
        let back = matrix_exponential(&log_r);
        prop_assert!(
            frob_dist(&back, m.entries()) < 1e-8,
            "round trip residual {}", frob_dist(&back, m.entries())
        );
        // ... and the logarithm of a stochastic matrix has zero row sums.
        for i in 0..n {
            let row: f64 = (0..n).map(|j| log_r[(i, j)]).sum();
            prop_assert!(row.abs() < 1e-8, "log row {} sums to {}", i, row);
        }
    }

    #[test]
    fn three_state_enumeration_is_exhaustive(
        rows in prop::collection::vec(0.01f64..1.0, 9),
    ) {
        let mut raw = DMatrix::<f64>::zeros(3, 3);
        for i in 0..3 {
            let row_sum: f64 = rows[3 * i..3 * i + 3].iter().sum();
            for j in 0..3 {
                raw[(i, j)] = rows[3 * i + j] / row_sum;
            }
        }
        let t = tol();
        let m = StochasticMatrix::validate_markov(&raw, &t).unwrap();
        let decomp = match decompose(&m, &t) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        let s = match &decomp {
            Decomposition::Diagonalizable(s) if !s.has_repeated() => s,
            _ => return Ok(()),
        };
        prop_assume!(s.det.abs() > 1e-12);
        let enumerated = enumerate_generators_distinct(&m, s, &t).unwrap();

        // Brute force: every branch index in [-20, 20] per conjugate pair,
        // judged by the enumerator's own acceptance gate.
        let gate = 1e3 * t.reconstruct_tol * 3.0;
        let index_sets: Vec<Vec<i64>> = if s.pair_slots().is_empty() {
            vec![Vec::new()]
        } else {
            (-20i64..=20).map(|k| vec![k]).collect()
        };
        let mut brute: Vec<DMatrix<f64>> = Vec::new();
        for ks in &index_sets {
            if let Ok(candidate) = branch_logarithm(s, ks, &t) {
                if is_rate_matrix(&candidate, &t)
                    && frob_dist(&matrix_exponential(&candidate), m.entries()) <= gate
                {
                    brute.push(candidate);
                }
            }
        }
        prop_assert_eq!(
            enumerated.len(),
            brute.len(),
            "enumerator found {} generators, brute force {}",
            enumerated.len(),
            brute.len()
        );
        for g in &enumerated {
            prop_assert!(
                brute.iter().any(|b| frob_dist(&g.matrix, b) < 1e-7),
                "an enumerated generator is missing from the brute-force set"
            );
        }
    }
}
