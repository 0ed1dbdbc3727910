//! Principal matrix logarithm, computed from a spectral decomposition.
//!
//! For diagonalizable input this is P diag(log lambda_i) P^-1 with the
//! principal scalar branch (Arg in (-pi, pi]); for defective 4x4 input the
//! Jordan blocks are logged by the truncated series for log(lambda I + N).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{EmbedError, Result};
use crate::spectral::{Decomposition, DefectiveStructure, JordanShape, SpectralDecomposition};
use crate::tol::ToleranceConfig;

/// Principal logarithm as a complex matrix. Real whenever the spectrum allows
/// a real principal branch (positive real eigenvalues, conjugate pairs).
pub fn principal_logarithm(decomp: &Decomposition) -> Result<DMatrix<Complex64>> {
    match decomp {
        Decomposition::Diagonalizable(s) => principal_log_diag(s),
        Decomposition::Defective(d) => principal_log_defective(d),
    }
}

fn principal_log_diag(s: &SpectralDecomposition) -> Result<DMatrix<Complex64>> {
    let n = s.n();
    let mut d = DMatrix::<Complex64>::zeros(n, n);
    for (i, lam) in s.eigenvalues.iter().enumerate() {
        if lam.norm() == 0.0 {
            return Err(EmbedError::SingularMatrix);
        }
        // Principal scalar log; exact zero for the leading eigenvalue 1.
        d[(i, i)] = if *lam == Complex64::new(1.0, 0.0) {
            Complex64::new(0.0, 0.0)
        } else {
            lam.ln()
        };
    }
    Ok(&s.p * d * &s.p_inv)
}

fn principal_log_defective(d: &DefectiveStructure) -> Result<DMatrix<Complex64>> {
    let (lam_simple, block) = match d.shape {
        JordanShape::TwoBlock { lambda, mu } => (Some(lambda), mu),
        JordanShape::ThreeBlock { lambda } => (None, lambda),
    };
    if block <= 0.0 {
        return Err(EmbedError::NegativeRealEigenvalueOnBranchCut { value: block });
    }
    let mut logj = DMatrix::<f64>::zeros(4, 4);
    logj[(0, 0)] = 0.0;
    match d.shape {
        JordanShape::TwoBlock { .. } => {
            let lam = lam_simple.unwrap();
            if lam <= 0.0 {
                // Simple negative eigenvalue beside the block: the principal
                // log exists only as a complex matrix; the solvers never want
                // it, so report the branch-cut obstruction.
                return Err(EmbedError::NegativeRealEigenvalueOnBranchCut { value: lam });
            }
            logj[(1, 1)] = lam.ln();
            // log(mu I + N) on a 2-block: [[ln mu, 1/mu], [0, ln mu]]
            logj[(2, 2)] = block.ln();
            logj[(2, 3)] = 1.0 / block;
            logj[(3, 3)] = block.ln();
        }
        JordanShape::ThreeBlock { .. } => {
            // [[ln l, 1/l, -1/(2 l^2)], [0, ln l, 1/l], [0, 0, ln l]]
            let l = block;
            for i in 1..4 {
                logj[(i, i)] = l.ln();
            }
            logj[(1, 2)] = 1.0 / l;
            logj[(2, 3)] = 1.0 / l;
            logj[(1, 3)] = -1.0 / (2.0 * l * l);
        }
    }
    let real = &d.basis * logj * &d.basis_inv;
    Ok(real.map(|x| Complex64::new(x, 0.0)))
}

/// Discard the imaginary part of a matrix expected to be real, failing if the
/// residue exceeds the reconstruction tolerance.
pub fn real_part_checked(c: &DMatrix<Complex64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    let residual = c.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
    if residual > tol.reconstruct_tol {
        return Err(EmbedError::NonRealResult { residual });
    }
    Ok(c.map(|z| z.re))
}
