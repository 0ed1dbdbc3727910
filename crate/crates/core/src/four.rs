//! Embeddability solvers: the four diagonalizable 4x4 spectral cases, the
//! defective 4x4 case, and the general distinct-spectrum path for other
//! sizes, unified behind `solve`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bounds::{det_shortcut, table1_threshold};
use crate::branches::{branch_bounds, enumerate_generators_distinct, generator_count_bound};
use crate::case3::{solve_case3, Case3Outcome};
use crate::error::{EmbedError, Result};
use crate::expm::matrix_exponential;
use crate::identifiability::IdentifiabilityClass;
use crate::logm::{principal_logarithm, real_part_checked};
use crate::matrix::{cleanup_rate, is_rate_matrix, BranchTag, GeneratorCandidate, StochasticMatrix};
use crate::spectral::{classify, decompose, Decomposition, SpectralClass, SpectralDecomposition};
use crate::tol::ToleranceConfig;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The one-parameter discrete family of candidate logarithms in the
/// complex-pair case: G_k = L + k V.
#[derive(Debug, Clone)]
pub struct Case2Data {
    /// Principal logarithm L.
    pub log_principal: DMatrix<f64>,
    /// Branch step matrix V (adds -2 pi i per step on the mu slot).
    pub v: DMatrix<f64>,
    /// Feasible branch interval (empty when k_lo > k_hi).
    pub k_lo: i64,
    pub k_hi: i64,
    /// Off-diagonal positions that block every branch: V vanishes there
    /// while L is negative.
    pub blocked: Vec<(usize, usize)>,
}

/// Branch-box and determinant-threshold context for reporting.
#[derive(Debug, Clone)]
pub struct BoundsSummary {
    pub det: f64,
    pub threshold: Option<f64>,
    pub shortcut: bool,
    pub count_bound: Option<u128>,
    pub boxes: Vec<(i64, i64)>,
}

/// Everything the solvers learn about one matrix.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub n: usize,
    pub class: SpectralClass,
    pub embeddable: bool,
    pub generators: Vec<GeneratorCandidate>,
    pub identifiability: IdentifiabilityClass,
    pub case2: Option<Case2Data>,
    pub case3: Option<Case3Outcome>,
    pub bounds: Option<BoundsSummary>,
    pub det: f64,
    /// Condition number of the eigenbasis (or Jordan basis) the verdict
    /// rests on, when a decomposition was computed.
    pub cond: Option<f64>,
    pub warnings: Vec<String>,
    pub not_embeddable_reason: Option<String>,
}

impl SolveOutcome {
    fn not_embeddable(n: usize, class: SpectralClass, det: f64, reason: &str) -> Self {
        SolveOutcome {
            n,
            class,
            embeddable: false,
            generators: Vec::new(),
            identifiability: IdentifiabilityClass::NotEmbeddable,
            case2: None,
            case3: None,
            bounds: None,
            det,
            cond: None,
            warnings: Vec::new(),
            not_embeddable_reason: Some(reason.to_string()),
        }
    }
}

fn exp_residual(q: &DMatrix<f64>, m: &StochasticMatrix) -> f64 {
    (matrix_exponential(q) - m.entries()).norm()
}

/// Case I: distinct real spectrum (a doubled unit eigenvalue is allowed).
/// The principal logarithm is the only logarithm, so embeddability reduces
/// to positivity of the spectrum plus the rate conditions on it.
fn solve_case1(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    tol: &ToleranceConfig,
) -> Result<SolveOutcome> {
    let n = s.n();
    if s.eigenvalues.iter().any(|l| l.im == 0.0 && l.re <= 0.0) {
        let mut out = SolveOutcome::not_embeddable(
            n,
            SpectralClass::CaseI,
            s.det,
            "a simple real eigenvalue is not positive, so no real logarithm exists",
        );
        out.cond = Some(s.cond_p);
        return Ok(out);
    }
    let l = real_part_checked(
        &principal_logarithm(&Decomposition::Diagonalizable(s.clone()))?,
        tol,
    )?;
    let mut out = SolveOutcome::not_embeddable(
        n,
        SpectralClass::CaseI,
        s.det,
        "the principal logarithm violates the rate conditions and no other logarithm exists",
    );
    out.cond = Some(s.cond_p);
    if is_rate_matrix(&l, tol) && exp_residual(&l, m) <= 1e-6 {
        out.embeddable = true;
        out.not_embeddable_reason = None;
        out.generators = vec![GeneratorCandidate {
            matrix: cleanup_rate(&l),
            branch: BranchTag::Principal,
        }];
        out.identifiability = IdentifiabilityClass::UniqueGenerator;
    }
    Ok(out)
}

/// Case II: one complex-conjugate pair. All logarithms form the line
/// L + k V over integer k; the rate conditions carve out a contiguous
/// feasible interval of k.
fn solve_case2(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    tol: &ToleranceConfig,
) -> Result<SolveOutcome> {
    let n = s.n();
    if s.eigenvalues.iter().any(|l| l.im == 0.0 && l.re <= 0.0) {
        let mut out = SolveOutcome::not_embeddable(
            n,
            SpectralClass::CaseII,
            s.det,
            "the simple real eigenvalue is not positive, so no real logarithm exists",
        );
        out.cond = Some(s.cond_p);
        return Ok(out);
    }
    let slots = s.pair_slots();
    debug_assert_eq!(slots.len(), 1);
    let slot = slots[0];
    let mu = s.eigenvalues[slot];
    let l = real_part_checked(
        &principal_logarithm(&Decomposition::Diagonalizable(s.clone()))?,
        tol,
    )?;
    // V = P diag(0, 0, -2 pi i, +2 pi i) P^-1 = 4 pi Im(p_mu p~_mu^T):
    // adding V shifts the mu-slot eigenvalue by -2 pi i.
    let mut dv = DMatrix::<Complex64>::zeros(n, n);
    dv[(slot, slot)] = Complex64::new(0.0, -TWO_PI);
    dv[(slot + 1, slot + 1)] = Complex64::new(0.0, TWO_PI);
    let v = real_part_checked(&(&s.p * dv * &s.p_inv), tol)?;
    let mut blocked = Vec::new();
    let mut k_min = i64::MIN;
    let mut k_max = i64::MAX;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (vij, lij) = (v[(i, j)], l[(i, j)]);
            if vij.abs() <= tol.nonneg_tol {
                if lij < -tol.nonneg_tol {
                    blocked.push((i, j));
                }
            } else if vij > 0.0 {
                k_min = k_min.max((-lij / vij - 1e-9).ceil() as i64);
            } else {
                k_max = k_max.min((-lij / vij + 1e-9).floor() as i64);
            }
        }
    }
    // Intersect with the branch box so both ends are certified finite.
    let beta = crate::bounds::beta_n(n, mu, s.det)?;
    let box_lo = ((mu.arg() - beta) / TWO_PI - 1e-12).ceil() as i64;
    let box_hi = ((mu.arg() + beta) / TWO_PI + 1e-12).floor() as i64;
    let k_lo = k_min.max(box_lo);
    let k_hi = k_max.min(box_hi);
    let mut generators = Vec::new();
    if blocked.is_empty() {
        for k in k_lo..=k_hi {
            let g = &l + &v * k as f64;
            if is_rate_matrix(&g, tol) && exp_residual(&g, m) <= 1e-6 {
                generators.push(GeneratorCandidate {
                    matrix: cleanup_rate(&g),
                    branch: BranchTag::Case2Branch(k),
                });
            }
        }
    }
    let case2 = Case2Data {
        log_principal: l,
        v,
        k_lo,
        k_hi,
        blocked,
    };
    let embeddable = !generators.is_empty();
    let ident = IdentifiabilityClass::from_count(generators.len());
    Ok(SolveOutcome {
        n,
        class: SpectralClass::CaseII,
        embeddable,
        identifiability: ident,
        generators,
        case2: Some(case2),
        case3: None,
        bounds: None,
        det: s.det,
        cond: Some(s.cond_p),
        warnings: Vec::new(),
        not_embeddable_reason: if embeddable {
            None
        } else {
            Some(
                "no branch of the logarithm satisfies the rate conditions".to_string(),
            )
        },
    })
}

/// Case IV: spectrum {1, lambda, lambda, lambda} (or the identity). Such a
/// matrix is always embeddable; the closed-form principal generator is
/// (ln lambda / (lambda - 1)) (M - I).
fn solve_case4(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    tol: &ToleranceConfig,
) -> Result<SolveOutcome> {
    let n = s.n();
    let lambda = s
        .clusters
        .iter()
        .find(|c| c.value.re != 1.0)
        .map(|c| c.value.re)
        .unwrap_or(1.0);
    if lambda <= 0.0 {
        // Unreachable through classify (odd multiplicity of a negative
        // eigenvalue), kept as a hard guard.
        let mut out = SolveOutcome::not_embeddable(
            n,
            SpectralClass::CaseIV,
            s.det,
            "the repeated eigenvalue is not positive",
        );
        out.cond = Some(s.cond_p);
        return Ok(out);
    }
    let g = if lambda == 1.0 {
        DMatrix::<f64>::zeros(n, n)
    } else {
        let scale = lambda.ln() / (lambda - 1.0);
        (m.entries() - DMatrix::<f64>::identity(n, n)) * scale
    };
    debug_assert!(is_rate_matrix(&g, tol));
    let ident = if s.det > (-6.0 * std::f64::consts::PI).exp() {
        IdentifiabilityClass::UniqueGenerator
    } else {
        // Below e^{-6 pi} additional generators are known to exist for this
        // spectral type, and the method does not enumerate them.
        IdentifiabilityClass::UnknownAtLeastOne
    };
    Ok(SolveOutcome {
        n,
        class: SpectralClass::CaseIV,
        embeddable: true,
        generators: vec![GeneratorCandidate {
            matrix: cleanup_rate(&g),
            branch: BranchTag::Principal,
        }],
        identifiability: ident,
        case2: None,
        case3: None,
        bounds: None,
        det: s.det,
        cond: Some(s.cond_p),
        warnings: Vec::new(),
        not_embeddable_reason: None,
    })
}

/// Defective 4x4: the Jordan logarithm is the only real logarithm, and it
/// exists exactly when the defective spectrum is positive.
fn solve_defective(
    m: &StochasticMatrix,
    d: &crate::spectral::DefectiveStructure,
    tol: &ToleranceConfig,
) -> Result<SolveOutcome> {
    let det = d.det;
    let class = match d.shape {
        crate::spectral::JordanShape::TwoBlock { .. } => SpectralClass::Defective2Blocks,
        crate::spectral::JordanShape::ThreeBlock { .. } => SpectralClass::Defective3Block,
    };
    let mut warnings = Vec::new();
    if d.cond_basis > 1e8 {
        warnings.push(format!(
            "jordan basis condition number {:.3e}: verdict has low confidence",
            d.cond_basis
        ));
    }
    let log = match principal_logarithm(&Decomposition::Defective(d.clone())) {
        Ok(l) => l,
        Err(EmbedError::NegativeRealEigenvalueOnBranchCut { .. }) => {
            let mut out = SolveOutcome::not_embeddable(
                4,
                class,
                det,
                "a defective eigenvalue is not positive, so no real logarithm exists",
            );
            out.cond = Some(d.cond_basis);
            out.warnings = warnings;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let l = real_part_checked(&log, tol)?;
    let mut out = SolveOutcome::not_embeddable(
        4,
        class,
        det,
        "the Jordan logarithm violates the rate conditions and is the only real logarithm",
    );
    out.cond = Some(d.cond_basis);
    out.warnings = warnings;
    if is_rate_matrix(&l, tol) && exp_residual(&l, m) <= 1e-5 {
        out.embeddable = true;
        out.not_embeddable_reason = None;
        out.generators = vec![GeneratorCandidate {
            matrix: cleanup_rate(&l),
            branch: BranchTag::Defective,
        }];
        out.identifiability = IdentifiabilityClass::UniqueGenerator;
    }
    Ok(out)
}

/// General distinct-spectrum path (any n): certified enumeration over the
/// branch boxes.
fn solve_distinct(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    class: SpectralClass,
    tol: &ToleranceConfig,
) -> Result<SolveOutcome> {
    let n = s.n();
    let generators = enumerate_generators_distinct(m, s, tol)?;
    let pairs = s.pair_slots().len();
    let bounds = BoundsSummary {
        det: s.det,
        threshold: table1_threshold(n).ok(),
        shortcut: n >= 3 && s.det > 0.0 && det_shortcut(n, s.det).unwrap_or(false),
        count_bound: if s.det > 0.0 {
            generator_count_bound(n, s.det, pairs).ok()
        } else {
            None
        },
        boxes: if s.det > 0.0 && !s.has_repeated() && pairs > 0 {
            branch_bounds(s, tol).unwrap_or_default()
        } else {
            Vec::new()
        },
    };
    let embeddable = !generators.is_empty();
    let ident = IdentifiabilityClass::from_count(generators.len());
    Ok(SolveOutcome {
        n,
        class,
        embeddable,
        identifiability: ident,
        generators,
        case2: None,
        case3: None,
        bounds: Some(bounds),
        det: s.det,
        cond: Some(s.cond_p),
        warnings: Vec::new(),
        not_embeddable_reason: if embeddable {
            None
        } else {
            Some("no logarithm in the certified branch box satisfies the rate conditions".into())
        },
    })
}

fn cond_of(d: &Decomposition) -> f64 {
    match d {
        Decomposition::Diagonalizable(s) => s.cond_p,
        Decomposition::Defective(def) => def.cond_basis,
    }
}

/// A numerically zero eigenvalue settles the question outright: e^Q is
/// always invertible, so a singular matrix is not embeddable.
fn singular_outcome(m: &StochasticMatrix) -> SolveOutcome {
    SolveOutcome::not_embeddable(
        m.n(),
        SpectralClass::NonEmbeddableSpectrum,
        m.det(),
        "an eigenvalue is numerically zero, and the exponential of a rate matrix is always invertible",
    )
}

/// Complete embeddability analysis for a 4x4 stochastic matrix.
pub fn solve4x4(m: &StochasticMatrix, tol: &ToleranceConfig) -> Result<SolveOutcome> {
    if m.n() != 4 {
        return Err(EmbedError::Domain {
            op: "solve4x4",
            detail: format!("expected a 4x4 matrix, got {0}x{0}", m.n()),
        });
    }
    let decomp = match decompose(m, tol) {
        Ok(d) => d,
        Err(EmbedError::SingularMatrix) => return Ok(singular_outcome(m)),
        Err(e) => return Err(e),
    };
    let class = classify(&decomp);
    match (&decomp, class) {
        (_, SpectralClass::NonEmbeddableSpectrum) => {
            let mut out = SolveOutcome::not_embeddable(
                4,
                class,
                decomp.det(),
                "the spectrum forbids any real logarithm (non-positive determinant or a negative eigenvalue of odd multiplicity)",
            );
            out.cond = Some(cond_of(&decomp));
            Ok(out)
        }
        (Decomposition::Defective(d), _) => solve_defective(m, d, tol),
        (Decomposition::Diagonalizable(s), SpectralClass::CaseI) => solve_case1(m, s, tol),
        (Decomposition::Diagonalizable(s), SpectralClass::CaseII) => solve_case2(m, s, tol),
        (Decomposition::Diagonalizable(s), SpectralClass::CaseIII) => {
            let out = solve_case3(m, s, tol)?;
            let embeddable = out.has_infinite_family || !out.generators.is_empty();
            let ident = if out.has_infinite_family {
                IdentifiabilityClass::InfiniteFamily
            } else {
                IdentifiabilityClass::from_count(out.generators.len())
            };
            Ok(SolveOutcome {
                n: 4,
                class,
                embeddable,
                generators: out.generators.clone(),
                identifiability: ident,
                case2: None,
                bounds: None,
                det: s.det,
                cond: Some(s.cond_p),
                warnings: Vec::new(),
                not_embeddable_reason: if embeddable {
                    None
                } else if out.k_lo > out.k_hi {
                    Some(
                        "the repeated eigenvalue leaves no admissible winding (|mu| too large for a negative pair)"
                            .to_string(),
                    )
                } else {
                    Some("no winding's feasible region meets the hyperboloid sheet".to_string())
                },
                case3: Some(out),
            })
        }
        (Decomposition::Diagonalizable(s), SpectralClass::CaseIV) => solve_case4(m, s, tol),
        (Decomposition::Diagonalizable(s), _) => solve_distinct(m, s, class, tol),
    }
}

/// Embeddability analysis for any n >= 2: the full 4x4 machinery at n = 4,
/// the certified distinct-spectrum enumeration elsewhere. Repeated spectra
/// outside n = 4 are unsupported.
pub fn solve(m: &StochasticMatrix, tol: &ToleranceConfig) -> Result<SolveOutcome> {
    if m.n() == 4 {
        return solve4x4(m, tol);
    }
    let decomp = match decompose(m, tol) {
        Ok(d) => d,
        Err(EmbedError::SingularMatrix) => return Ok(singular_outcome(m)),
        Err(e) => return Err(e),
    };
    let class = classify(&decomp);
    match &decomp {
        Decomposition::Defective(_) => Err(EmbedError::UnsupportedDefective { n: m.n() }),
        Decomposition::Diagonalizable(s) => {
            if class == SpectralClass::NonEmbeddableSpectrum {
                let mut out = SolveOutcome::not_embeddable(
                    m.n(),
                    class,
                    s.det,
                    "the spectrum forbids any real logarithm (non-positive determinant or a negative eigenvalue of odd multiplicity)",
                );
                out.cond = Some(s.cond_p);
                return Ok(out);
            }
            solve_distinct(m, s, class, tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{cyclic_rate_matrix, equal_input_matrix};
    use crate::spectral::hadamard_mix;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn stoch(m: &DMatrix<f64>) -> StochasticMatrix {
        StochasticMatrix::validate_markov(m, &tol()).unwrap()
    }

    #[test]
    fn identity_is_uniquely_embeddable() {
        let m = stoch(&DMatrix::identity(4, 4));
        let out = solve4x4(&m, &tol()).unwrap();
        assert!(out.embeddable);
        assert_eq!(out.class, SpectralClass::CaseIV);
        assert_eq!(out.identifiability, IdentifiabilityClass::UniqueGenerator);
        assert!(out.generators[0].matrix.norm() < 1e-12);
    }

    #[test]
    fn case1_distinct_real_unique() {
        let m = stoch(&hadamard_mix(0.45, 0.3, 0.2));
        let out = solve4x4(&m, &tol()).unwrap();
        assert_eq!(out.class, SpectralClass::CaseI);
        assert!(out.embeddable);
        assert_eq!(out.generators.len(), 1);
        assert_eq!(out.identifiability, IdentifiabilityClass::UniqueGenerator);
        let g = &out.generators[0].matrix;
        assert!(exp_residual(g, &m) < 1e-9);
    }

    #[test]
    fn case1_negative_eigenvalue_not_embeddable() {
        // Spectrum (1, 0.5, -0.2, 0.1): det < 0 actually... use two negatives
        // of different modulus so det > 0 but pairing is impossible.
        let m = stoch(&hadamard_mix(-0.5, -0.2, 0.1));
        let out = solve4x4(&m, &tol()).unwrap();
        assert!(!out.embeddable);
        assert!(out.generators.is_empty());
    }

    #[test]
    fn case2_cyclic_interval() {
        let m = stoch(&matrix_exponential(&cyclic_rate_matrix(4, 4.0)));
        let out = solve4x4(&m, &tol()).unwrap();
        assert_eq!(out.class, SpectralClass::CaseII);
        assert!(out.embeddable);
        let c2 = out.case2.as_ref().unwrap();
        assert!(c2.k_lo <= c2.k_hi);
        // The original C4(4) appears as some branch.
        let q = cyclic_rate_matrix(4, 4.0);
        assert!(out
            .generators
            .iter()
            .any(|g| (&g.matrix - &q).norm() < 1e-7));
        // Branch indices are contiguous.
        let ks: Vec<i64> = out
            .generators
            .iter()
            .filter_map(|g| match g.branch {
                BranchTag::Case2Branch(k) => Some(k),
                _ => None,
            })
            .collect();
        for w in ks.windows(2) {
            assert_eq!(w[1], w[0] + 1);
        }
    }

    #[test]
    fn case4_deep_equal_input_unknown_count() {
        // Equal-input with lambda = e^{-4 pi}: det = e^{-12 pi} is below the
        // e^{-6 pi} certification threshold.
        let lam: f64 = (-4.0 * std::f64::consts::PI).exp();
        let p = (1.0 - lam) / 4.0;
        let m = stoch(&equal_input_matrix(p, p, p, p));
        let out = solve4x4(&m, &tol()).unwrap();
        assert_eq!(out.class, SpectralClass::CaseIV);
        assert!(out.embeddable);
        assert_eq!(
            out.identifiability,
            IdentifiabilityClass::UnknownAtLeastOne
        );
        assert!(exp_residual(&out.generators[0].matrix, &m) < 1e-10);
    }

    #[test]
    fn case4_shallow_equal_input_unique() {
        let m = stoch(&equal_input_matrix(0.125, 0.125, 0.125, 0.125));
        let out = solve4x4(&m, &tol()).unwrap();
        assert!(out.embeddable);
        assert_eq!(out.identifiability, IdentifiabilityClass::UniqueGenerator);
    }

    #[test]
    fn defective_two_block_unique() {
        let q = DMatrix::from_row_slice(
            4,
            4,
            &[
                -2.0, 1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let m = stoch(&matrix_exponential(&q));
        let mut t = tol();
        t.eig_distinct_rel_tol = 1e-6;
        let out = solve4x4(&m, &t).unwrap();
        assert_eq!(out.class, SpectralClass::Defective2Blocks);
        assert!(out.embeddable, "reason: {:?}", out.not_embeddable_reason);
        assert_eq!(out.identifiability, IdentifiabilityClass::UniqueGenerator);
        assert!((out.generators[0].matrix.clone() - q).norm() < 1e-5);
    }

    #[test]
    fn general_n3_and_n5_roundtrip() {
        for (n, alpha) in [(3usize, 2.0f64), (5, 1.0)] {
            let q = cyclic_rate_matrix(n, alpha);
            let m = stoch(&matrix_exponential(&q));
            let out = solve(&m, &tol()).unwrap();
            assert!(out.embeddable);
            assert!(out
                .generators
                .iter()
                .any(|g| (&g.matrix - &q).norm() < 1e-8));
            assert!(out.bounds.is_some());
        }
    }

    #[test]
    fn non_embeddable_negative_det() {
        // Spectrum (1, 0.5, -0.2, 0.1): determinant negative.
        let m = stoch(&hadamard_mix(0.5, -0.2, 0.1));
        let out = solve4x4(&m, &tol()).unwrap();
        assert_eq!(out.class, SpectralClass::NonEmbeddableSpectrum);
        assert!(!out.embeddable);
    }
}
