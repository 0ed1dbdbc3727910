//! Spectral location bounds for Markov generators and their images.
//!
//! For an n-state generator Q with eigenvalue lambda, the imaginary part is
//! constrained both by the trace (a disc-like bound) and by the cone
//! |Im| <= -Re / tan(pi/n). Pushing these through the exponential yields
//! per-eigenvalue branch bounds for candidate logarithms of a stochastic
//! matrix, and a determinant threshold below which every eigenvalue of the
//! matrix must be real-positive for any embedding to exist.

use num_complex::Complex64;

use crate::error::{EmbedError, Result};

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(EmbedError::Domain {
            op: "bounds",
            detail: format!("bounds are defined for n >= 3, got n = {n}"),
        });
    }
    Ok(())
}

/// Bound on |Im(lambda)| for an eigenvalue lambda of a generator with the
/// given trace: min of the trace disc and the cone term.
pub fn bound_b_n(n: usize, lambda: Complex64, trace_q: f64) -> Result<f64> {
    check_n(n)?;
    let re = lambda.re;
    if re > 0.0 || trace_q > 0.0 {
        return Err(EmbedError::Domain {
            op: "bound_b_n",
            detail: format!(
                "generator eigenvalues need Re <= 0 and trace <= 0 (got Re = {re}, trace = {trace_q})"
            ),
        });
    }
    let radicand = 2.0 * trace_q * re - re * re;
    if radicand < -1e-12 * (1.0 + trace_q * trace_q) {
        return Err(EmbedError::Domain {
            op: "bound_b_n",
            detail: format!("Re(lambda) = {re} lies outside [2*trace, 0] for trace {trace_q}"),
        });
    }
    let disc = radicand.max(0.0).sqrt();
    let cone = -re / (std::f64::consts::PI / n as f64).tan();
    Ok(disc.min(cone))
}

/// Uniform bound over all eigenvalues of a generator with the given trace.
pub fn bound_big_b_n(n: usize, trace_q: f64) -> Result<f64> {
    check_n(n)?;
    if trace_q > 0.0 {
        return Err(EmbedError::Domain {
            op: "bound_big_b_n",
            detail: format!("generator trace must be <= 0, got {trace_q}"),
        });
    }
    let disc = -(3.0f64.sqrt() / 2.0) * trace_q;
    let cone = -trace_q / (2.0 * (std::f64::consts::PI / n as f64).tan());
    Ok(disc.min(cone))
}

/// Branch bound: any logarithm of a stochastic matrix with determinant
/// `det_m` that is a generator has, at its eigenvalue slot z, imaginary part
/// within beta_n(z) of zero.
pub fn beta_n(n: usize, z: Complex64, det_m: f64) -> Result<f64> {
    check_n(n)?;
    if !(det_m > 0.0) || det_m > 1.0 + 1e-12 {
        return Err(EmbedError::Domain {
            op: "beta_n",
            detail: format!("determinant must lie in (0, 1], got {det_m}"),
        });
    }
    let modulus = z.norm();
    if modulus == 0.0 || modulus > 1.0 + 1e-9 {
        return Err(EmbedError::Domain {
            op: "beta_n",
            detail: format!("|z| must lie in (0, 1], got {modulus}"),
        });
    }
    let log_mod = modulus.ln().min(0.0);
    let log_det = det_m.min(1.0).ln();
    // >= 0 whenever z is a genuine eigenvalue (det <= |z|^2 for a conjugate
    // pair of a stochastic matrix); tiny negatives are rounding.
    let radicand = 2.0 * log_det * log_mod - log_mod * log_mod;
    if radicand < -1e-10 * (1.0 + log_det * log_det) {
        return Err(EmbedError::Domain {
            op: "beta_n",
            detail: format!(
                "|z| = {modulus} is inconsistent with det = {det_m} (radicand {radicand:e})"
            ),
        });
    }
    let disc = radicand.max(0.0).sqrt();
    let cone = -log_mod / (std::f64::consts::PI / n as f64).tan();
    Ok(disc.min(cone))
}

/// Determinant threshold above which a stochastic matrix with a non-real or
/// negative eigenvalue cannot be embeddable.
pub fn table1_threshold(n: usize) -> Result<f64> {
    check_n(n)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let a = (-two_pi / 3.0f64.sqrt()).exp();
    let b = (-two_pi * (std::f64::consts::PI / n as f64).tan()).exp();
    Ok(a.min(b))
}

/// Determinant shortcut: true when det(M) exceeds the threshold, in which
/// case embeddability forces every eigenvalue of M to be real and positive,
/// and the principal logarithm is the only candidate generator.
pub fn det_shortcut(n: usize, det_m: f64) -> Result<bool> {
    Ok(det_m > table1_threshold(n)?)
}
