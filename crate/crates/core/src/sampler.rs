//! Monte-Carlo census of embeddability over the 4x4 stochastic simplex.
//!
//! Sampling is counter-based for reproducibility: sample `i` always comes
//! from stream `i` of a ChaCha8 generator seeded with the configured seed,
//! so the census can be sharded across threads without any shared RNG state
//! and still produce identical results for identical (seed, count).

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expm::matrix_exponential;
use crate::four::solve4x4;
use crate::matrix::StochasticMatrix;
use crate::tol::ToleranceConfig;

/// RNG scheme identifier echoed in every census result.
pub const RNG_SCHEME: &str = "chacha8/per-sample-stream/sorted-uniform-gaps";

#[derive(Debug, Clone)]
pub struct CensusConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub tol: ToleranceConfig,
}

/// Count of members and embeddable members for one matrix family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetTally {
    pub members: usize,
    pub embeddable: usize,
}

impl SetTally {
    pub fn fraction(&self) -> f64 {
        if self.members == 0 {
            0.0
        } else {
            self.embeddable as f64 / self.members as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusResult {
    pub seed: u64,
    pub sample_count: usize,
    pub rng_scheme: String,
    /// All sampled matrices.
    pub delta: SetTally,
    /// Positive determinant.
    pub delta_id: SetTally,
    /// Diagonal entry largest in its column.
    pub delta_dlc: SetTally,
    /// Diagonally dominant: every diagonal entry >= 1/2.
    pub delta_dd: SetTally,
    /// Largest ||e^G - M||_F over re-verified embeddable samples.
    pub max_exp_residual: f64,
    /// Embeddable samples with no generator reproducing M within 1e-8.
    pub reverify_failures: usize,
    /// Samples the solver errored on (counted as not embeddable).
    pub solver_errors: usize,
    pub runtime_seconds: f64,
}

/// The deterministic generator for one sample index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One row uniform on the probability simplex: sorted uniform cut points,
/// then their gaps (a Dirichlet(1,...,1) draw without transcendentals).
fn simplex_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut row = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &c in &cuts {
        row.push(c - prev);
        prev = c;
    }
    row.push(1.0 - prev);
    row
}

/// A uniformly distributed n x n stochastic matrix: rows independent, each
/// uniform on the simplex.
pub fn sample_markov_uniform<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, x) in simplex_row(rng, n).into_iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

/// Membership flags for the census sub-families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    /// Positive determinant.
    pub in_id: bool,
    /// Each diagonal entry is the (weak) maximum of its column.
    pub in_dlc: bool,
    /// Every diagonal entry >= 1/2.
    pub in_dd: bool,
}

pub fn classify_membership(m: &DMatrix<f64>) -> Membership {
    let n = m.nrows();
    let det = m.clone().lu().determinant();
    let in_dlc = (0..n).all(|j| (0..n).all(|i| m[(i, j)] <= m[(j, j)]));
    let in_dd = (0..n).all(|i| m[(i, i)] >= 0.5);
    Membership {
        in_id: det > 0.0,
        in_dlc,
        in_dd,
    }
}

struct SampleRecord {
    member: Membership,
    embeddable: bool,
    residual: f64,
    reverified: bool,
    error: bool,
}

fn census_sample(cfg: &CensusConfig, index: usize) -> SampleRecord {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let raw = sample_markov_uniform(&mut rng, 4);
    let member = classify_membership(&raw);
    let failed = |member, error| SampleRecord {
        member,
        embeddable: false,
        residual: 0.0,
        reverified: true,
        error,
    };
    if !member.in_id {
        // det <= 0 settles non-embeddability without a decomposition.
        return failed(member, false);
    }
    let m = match StochasticMatrix::validate_markov(&raw, &cfg.tol) {
        Ok(m) => m,
        Err(_) => return failed(member, true),
    };
    match solve4x4(&m, &cfg.tol) {
        Ok(out) if out.embeddable => {
            let best = out
                .generators
                .iter()
                .map(|g| (matrix_exponential(&g.matrix) - m.entries()).norm())
                .fold(f64::INFINITY, f64::min);
            SampleRecord {
                member,
                embeddable: true,
                residual: if best.is_finite() { best } else { f64::INFINITY },
                reverified: best < 1e-8,
                error: false,
            }
        }
        Ok(_) => failed(member, false),
        Err(_) => failed(member, true),
    }
}

/// Run the census: sample, classify membership, solve, aggregate.
/// Deterministic for a given (seed, sample_count).
pub fn run_census(cfg: &CensusConfig) -> Result<CensusResult> {
    cfg.tol.validate()?;
    let start = Instant::now();
    let records: Vec<SampleRecord> = (0..cfg.sample_count)
        .into_par_iter()
        .map(|i| census_sample(cfg, i))
        .collect();
    let mut res = CensusResult {
        seed: cfg.seed,
        sample_count: cfg.sample_count,
        rng_scheme: RNG_SCHEME.to_string(),
        delta: SetTally {
            members: cfg.sample_count,
            embeddable: 0,
        },
        delta_id: SetTally::default(),
        delta_dlc: SetTally::default(),
        delta_dd: SetTally::default(),
        max_exp_residual: 0.0,
        reverify_failures: 0,
        solver_errors: 0,
        runtime_seconds: 0.0,
    };
    for r in records {
        if r.embeddable {
            res.delta.embeddable += 1;
            res.max_exp_residual = res.max_exp_residual.max(r.residual);
            if !r.reverified {
                res.reverify_failures += 1;
            }
        }
        for (flag, tally) in [
            (r.member.in_id, &mut res.delta_id),
            (r.member.in_dlc, &mut res.delta_dlc),
            (r.member.in_dd, &mut res.delta_dd),
        ] {
            if flag {
                tally.members += 1;
                if r.embeddable {
                    tally.embeddable += 1;
                }
            }
        }
        if r.error {
            res.solver_errors += 1;
        }
    }
    res.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(res)
}
