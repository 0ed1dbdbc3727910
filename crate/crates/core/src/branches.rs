//! Enumeration of all Markov generators of a stochastic matrix with distinct
//! eigenvalues.
//!
//! Every logarithm of such a matrix M is determined by an integer branch
//! index per complex-conjugate eigenvalue pair: the slot holding mu (the
//! Im > 0 member) receives log|mu| + (Arg mu - 2 pi k) i and its partner the
//! conjugate, while real eigenvalue slots always take the real scalar log.
//! The branch bounds confine each k to a finite interval, so testing every
//! combination against the rate-matrix conditions is exhaustive.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bounds::beta_n;
use crate::error::{EmbedError, Result};
use crate::matrix::{cleanup_rate, is_rate_matrix, BranchTag, GeneratorCandidate, StochasticMatrix};
use crate::spectral::SpectralDecomposition;
use crate::tol::ToleranceConfig;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Largest branch box volume the enumerator will walk. Boxes beyond this
/// arise only for determinants astronomically close to zero.
const MAX_BOX_VOLUME: u128 = 5_000_000;

fn require_distinct(s: &SpectralDecomposition, op: &'static str) -> Result<()> {
    if s.has_repeated() {
        return Err(EmbedError::Domain {
            op,
            detail: "requires distinct eigenvalues (a cluster has multiplicity > 1)".into(),
        });
    }
    Ok(())
}

/// The candidate logarithm of M selected by one branch index per conjugate
/// pair (`k[j]` for the j-th pair in slot order). Returns the real matrix;
/// fails if the imaginary residue after similarity exceeds tolerance.
pub fn branch_logarithm(
    s: &SpectralDecomposition,
    k: &[i64],
    tol: &ToleranceConfig,
) -> Result<DMatrix<f64>> {
    require_distinct(s, "branch_logarithm")?;
    let pairs = s.pair_slots();
    if k.len() != pairs.len() {
        return Err(EmbedError::Domain {
            op: "branch_logarithm",
            detail: format!("got {} branch indices for {} conjugate pairs", k.len(), pairs.len()),
        });
    }
    let n = s.n();
    let mut d = DMatrix::<Complex64>::zeros(n, n);
    for (i, lam) in s.eigenvalues.iter().enumerate() {
        if lam.im == 0.0 {
            if lam.re <= 0.0 {
                return Err(EmbedError::NegativeRealEigenvalueOnBranchCut { value: lam.re });
            }
            d[(i, i)] = Complex64::new(if lam.re == 1.0 { 0.0 } else { lam.re.ln() }, 0.0);
        }
    }
    for (j, &slot) in pairs.iter().enumerate() {
        let mu = s.eigenvalues[slot];
        let w = Complex64::new(mu.norm().ln(), mu.arg() - TWO_PI * k[j] as f64);
        d[(slot, slot)] = w;
        d[(slot + 1, slot + 1)] = w.conj();
    }
    let g = &s.p * d * &s.p_inv;
    crate::logm::real_part_checked(&g, tol)
}

/// Inclusive branch-index interval for each conjugate pair, in slot order.
/// Every generator of M must use an index inside its pair's interval.
pub fn branch_bounds(s: &SpectralDecomposition, tol: &ToleranceConfig) -> Result<Vec<(i64, i64)>> {
    let _ = tol;
    require_distinct(s, "branch_bounds")?;
    if !(s.det > 0.0) {
        return Err(EmbedError::Domain {
            op: "branch_bounds",
            detail: format!("determinant must be positive, got {}", s.det),
        });
    }
    let n = s.n();
    let mut out = Vec::new();
    for &slot in &s.pair_slots() {
        let mu = s.eigenvalues[slot];
        let beta = beta_n(n, mu, s.det)?;
        // Slot eigenvalue Arg mu - 2 pi k must lie in [-beta, beta]; the
        // 1e-12 nudges keep exactly-attained endpoints (the cyclic witness
        // family sits on them) inside the box.
        let lo = ((mu.arg() - beta) / TWO_PI - 1e-12).ceil() as i64;
        let hi = ((mu.arg() + beta) / TWO_PI + 1e-12).floor() as i64;
        out.push((lo, hi));
    }
    Ok(out)
}

/// A-priori cap on the number of Markov generators of an n-state stochastic
/// matrix with determinant `det_m` and `s` conjugate eigenvalue pairs.
pub fn generator_count_bound(n: usize, det_m: f64, s: usize) -> Result<u128> {
    if n <= 2 {
        return Ok(1);
    }
    if !(det_m > 0.0) || det_m > 1.0 + 1e-12 {
        return Err(EmbedError::Domain {
            op: "generator_count_bound",
            detail: format!("determinant must lie in (0, 1], got {det_m}"),
        });
    }
    let log_det = det_m.min(1.0).ln();
    let per_pair = if n <= 5 {
        (1.0 - log_det / (TWO_PI * (std::f64::consts::PI / n as f64).tan())).floor()
    } else {
        (1.0 - 3.0f64.sqrt() * log_det / TWO_PI).floor()
    };
    let base = per_pair.max(1.0) as u128;
    Ok(base.saturating_pow(s as u32))
}

/// All Markov generators of M, assuming M has distinct eigenvalues. Repeated
/// spectra are rejected; real eigenvalues <= 0 make the matrix
/// non-embeddable, reported here as an empty list.
pub fn enumerate_generators_distinct(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    tol: &ToleranceConfig,
) -> Result<Vec<GeneratorCandidate>> {
    if s.has_repeated() {
        return Err(EmbedError::UnsupportedRepeated { n: s.n() });
    }
    if s
        .real_slots()
        .iter()
        .any(|&i| s.eigenvalues[i].re <= 0.0)
    {
        return Ok(Vec::new());
    }
    let pairs = s.pair_slots();
    if pairs.is_empty() {
        // All eigenvalues real-positive and distinct: the principal log is
        // the only logarithm at all.
        let g = branch_logarithm(s, &[], tol)?;
        let mut out = Vec::new();
        if is_rate_matrix(&g, tol) {
            out.push(GeneratorCandidate {
                matrix: cleanup_rate(&g),
                branch: BranchTag::DistinctBranch(Vec::new()),
            });
        }
        return out_sorted(out);
    }
    let boxes = branch_bounds(s, tol)?;
    let mut volume: u128 = 1;
    for &(lo, hi) in &boxes {
        let w = if hi >= lo { (hi - lo + 1) as u128 } else { 0 };
        volume = volume.saturating_mul(w);
    }
    if volume == 0 {
        return Ok(Vec::new());
    }
    if volume > MAX_BOX_VOLUME {
        return Err(EmbedError::Numerical(format!(
            "branch box holds {volume} candidates, beyond the enumeration limit"
        )));
    }
    let mut out = Vec::new();
    let mut k: Vec<i64> = boxes.iter().map(|&(lo, _)| lo).collect();
    'walk: loop {
        let g = branch_logarithm(s, &k, tol)?;
        if is_rate_matrix(&g, tol) {
            // Guard against eigen-noise: the candidate must actually map back
            // onto M under the exponential.
            let back = crate::expm::matrix_exponential(&g);
            if (back - m.entries()).norm() <= 1e3 * tol.reconstruct_tol * s.n() as f64 {
                out.push(GeneratorCandidate {
                    matrix: cleanup_rate(&g),
                    branch: BranchTag::DistinctBranch(k.clone()),
                });
            }
        }
        // Odometer increment over the box.
        for j in (0..k.len()).rev() {
            if k[j] < boxes[j].1 {
                k[j] += 1;
                for (jj, kk) in k.iter_mut().enumerate().skip(j + 1) {
                    *kk = boxes[jj].0;
                }
                continue 'walk;
            }
        }
        break;
    }
    out_sorted(out)
}

fn out_sorted(mut out: Vec<GeneratorCandidate>) -> Result<Vec<GeneratorCandidate>> {
    out.sort_by(|a, b| {
        let na: f64 = a.matrix.iter().map(|x| x.abs()).sum();
        let nb: f64 = b.matrix.iter().map(|x| x.abs()).sum();
        na.partial_cmp(&nb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| branch_key(&a.branch).cmp(&branch_key(&b.branch)))
    });
    Ok(out)
}

fn branch_key(b: &BranchTag) -> Vec<i64> {
    match b {
        BranchTag::DistinctBranch(k) => k.clone(),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::matrix_exponential;
    use crate::matrix::cyclic_rate_matrix;
    use crate::spectral::decompose;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn setup(q: &DMatrix<f64>) -> (StochasticMatrix, SpectralDecomposition) {
        let m = StochasticMatrix::validate_markov(&matrix_exponential(q), &tol()).unwrap();
        let d = decompose(&m, &tol()).unwrap();
        match d {
            crate::spectral::Decomposition::Diagonalizable(s) => (m, s),
            _ => panic!("expected diagonalizable"),
        }
    }

    #[test]
    fn principal_branch_recovers_small_cyclic() {
        let q = cyclic_rate_matrix(4, 0.3);
        let (_, s) = setup(&q);
        let b = branch_bounds(&s, &tol()).unwrap();
        assert_eq!(b, vec![(0, 0)]);
        let g = branch_logarithm(&s, &[0], &tol()).unwrap();
        assert!((g - q).norm() < 1e-11);
    }

    #[test]
    fn wrapped_cyclic_found_at_positive_branch() {
        // Q = C4(4): the generator's eigenvalue -4 - 4i has imaginary part
        // past -pi, so it is not the principal log of its exponential; the
        // box is {0, 1} and Q reappears at k = 1.
        let q = cyclic_rate_matrix(4, 4.0);
        let (m, s) = setup(&q);
        let b = branch_bounds(&s, &tol()).unwrap();
        assert_eq!(b, vec![(0, 1)]);
        let g1 = branch_logarithm(&s, &[1], &tol()).unwrap();
        assert!(
            (g1.clone() - q.clone()).norm() < 1e-8,
            "residual {:e}",
            (g1 - q.clone()).norm()
        );
        let gens = enumerate_generators_distinct(&m, &s, &tol()).unwrap();
        assert!(gens
            .iter()
            .any(|c| (c.matrix.clone() - q.clone()).norm() < 1e-8
                && c.branch == BranchTag::DistinctBranch(vec![1])));
    }

    #[test]
    fn boundary_branch_box_keeps_tight_witness() {
        // C3(5) sits exactly on the branch bound; the box must include k = 1.
        let q = cyclic_rate_matrix(3, 5.0);
        let (m, s) = setup(&q);
        let b = branch_bounds(&s, &tol()).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].0 <= 1 && 1 <= b[0].1, "box {b:?} misses k = 1");
        let gens = enumerate_generators_distinct(&m, &s, &tol()).unwrap();
        assert!(gens
            .iter()
            .any(|c| (c.matrix.clone() - q.clone()).norm() < 5e-8));
    }

    #[test]
    fn brute_force_scan_agrees_with_box_n3() {
        // Oracle: scan k in [-20, 20] directly; everything that is a rate
        // matrix must have been inside the certified box.
        let q = cyclic_rate_matrix(3, 2.0);
        let (m, s) = setup(&q);
        let boxes = branch_bounds(&s, &tol()).unwrap();
        let listed = enumerate_generators_distinct(&m, &s, &tol()).unwrap();
        let mut hits = Vec::new();
        for k in -20i64..=20 {
            if let Ok(g) = branch_logarithm(&s, &[k], &tol()) {
                if is_rate_matrix(&g, &tol()) {
                    hits.push(k);
                }
            }
        }
        for &k in &hits {
            assert!(boxes[0].0 <= k && k <= boxes[0].1);
            assert!(listed
                .iter()
                .any(|c| c.branch == BranchTag::DistinctBranch(vec![k])));
        }
        assert_eq!(hits.len(), listed.len());
    }

    #[test]
    fn negative_real_eigenvalue_yields_empty() {
        let m = StochasticMatrix::validate_markov(
            &crate::spectral::hadamard_mix(0.5, -0.2, 0.1),
            &tol(),
        )
        .unwrap();
        let s = match decompose(&m, &tol()).unwrap() {
            crate::spectral::Decomposition::Diagonalizable(s) => s,
            _ => panic!(),
        };
        assert!(enumerate_generators_distinct(&m, &s, &tol())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn count_bound_worked_example() {
        // n = 4, det = e^-16, one pair: floor(1 + 16/(2 pi tan(pi/4))) = 3.
        let b = generator_count_bound(4, (-16.0f64).exp(), 1).unwrap();
        assert_eq!(b, 3);
        assert_eq!(generator_count_bound(2, 0.3, 0).unwrap(), 1);
        // n >= 6 switches to the sqrt(3) form; at n = 6 both coincide.
        let b6 = generator_count_bound(6, (-16.0f64).exp(), 2).unwrap();
        let expect = (1.0 + 3.0f64.sqrt() * 16.0 / (2.0 * std::f64::consts::PI)).floor() as u128;
        assert_eq!(b6, expect * expect);
    }

    #[test]
    fn enumeration_respects_count_bound() {
        for alpha in [0.5f64, 2.0, 4.0, 6.0] {
            let q = cyclic_rate_matrix(4, alpha);
            let (m, s) = setup(&q);
            let gens = enumerate_generators_distinct(&m, &s, &tol()).unwrap();
            let cap = generator_count_bound(4, s.det, s.pair_slots().len()).unwrap();
            assert!(
                (gens.len() as u128) <= cap,
                "alpha = {alpha}: {} generators vs cap {cap}",
                gens.len()
            );
            // Each listed generator actually exponentiates back to M.
            for c in &gens {
                let back = matrix_exponential(&c.matrix);
                assert!((back - m.entries()).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn sorted_by_l1_norm() {
        let q = cyclic_rate_matrix(4, 4.0);
        let (m, s) = setup(&q);
        let gens = enumerate_generators_distinct(&m, &s, &tol()).unwrap();
        let norms: Vec<f64> = gens
            .iter()
            .map(|c| c.matrix.iter().map(|x| x.abs()).sum())
            .collect();
        for w in norms.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }
}
