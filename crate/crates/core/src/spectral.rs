//! Spectral analysis: eigenvalue clustering, eigenvector assembly, defect
//! detection, and classification of the spectrum into the solver cases.
//!
//! Eigenvalues come from a real Schur decomposition; eigenvectors are built by
//! inverse iteration (simple eigenvalues) or SVD nullspaces (repeated
//! eigenvalues), so repeated-eigenvalue eigenspaces come out with real,
//! orthonormal bases. The eigenvalue-1 eigenvector is pinned to the exact
//! all-ones vector, which validated stochastic matrices satisfy to rounding.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{EmbedError, Result};
use crate::matrix::StochasticMatrix;
use crate::tol::ToleranceConfig;

/// One eigenvalue cluster: representative value, algebraic and geometric
/// multiplicity, and whether the representative was collapsed to the real axis.
#[derive(Debug, Clone)]
pub struct ClusterInfo {
    pub value: Complex64,
    pub mult: usize,
    pub geo: usize,
}

impl ClusterInfo {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }
}

/// Diagonalizable eigendecomposition M = P D P^-1.
///
/// Slot order: eigenvalue 1 first (first column of `p` is exactly the all-ones
/// vector), then real eigenvalues in descending order (repeats adjacent), then
/// complex-conjugate pairs as (mu, conj(mu)) with Im(mu) > 0, sorted by
/// descending real part.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub p: DMatrix<Complex64>,
    pub p_inv: DMatrix<Complex64>,
    pub is_real_p: bool,
    /// Real view of `p`, present exactly when `is_real_p`.
    pub p_real: Option<DMatrix<f64>>,
    pub clusters: Vec<ClusterInfo>,
    /// Determinant as the product of eigenvalues; sign-reliable even when the
    /// determinant sits near the floating-point noise floor.
    pub det: f64,
    /// sigma_max / sigma_min of P.
    pub cond_p: f64,
    /// Smallest relative gap between distinct clusters (inf when only one).
    pub min_cluster_gap: f64,
    /// Frobenius residual of M P - P D.
    pub recon_residual: f64,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Indices of the Im > 0 member of each conjugate pair; the partner
    /// occupies the following slot.
    pub fn pair_slots(&self) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| l.im > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices carrying real eigenvalues.
    pub fn real_slots(&self) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| l.im == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_repeated(&self) -> bool {
        self.clusters.iter().any(|c| c.mult > 1)
    }
}

/// Jordan structure of a defective 4x4 stochastic matrix.
#[derive(Debug, Clone)]
pub enum JordanShape {
    /// diag(1, lambda, J2(mu)); lambda == mu encodes the J2 + extra
    /// eigenvector structure at a triple eigenvalue.
    TwoBlock { lambda: f64, mu: f64 },
    /// diag(1, J3(lambda)).
    ThreeBlock { lambda: f64 },
}

/// Real Jordan decomposition M = B J B^-1 for a defective 4x4 matrix.
#[derive(Debug, Clone)]
pub struct DefectiveStructure {
    pub shape: JordanShape,
    pub basis: DMatrix<f64>,
    pub basis_inv: DMatrix<f64>,
    pub jordan: DMatrix<f64>,
    pub det: f64,
    pub cond_basis: f64,
    pub recon_residual: f64,
}

impl DefectiveStructure {
    /// All eigenvalues except the leading 1.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.shape {
            JordanShape::TwoBlock { lambda, mu } => vec![lambda, mu, mu],
            JordanShape::ThreeBlock { lambda } => vec![lambda, lambda, lambda],
        }
    }
}

#[derive(Debug, Clone)]
pub enum Decomposition {
    Diagonalizable(SpectralDecomposition),
    Defective(DefectiveStructure),
}

impl Decomposition {
    pub fn det(&self) -> f64 {
        match self {
            Decomposition::Diagonalizable(s) => s.det,
            Decomposition::Defective(d) => d.det,
        }
    }
}

/// Spectrum class driving solver dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralClass {
    /// 4x4, real positive eigenvalues, no repeats other than possibly a double
    /// eigenvalue 1.
    CaseI,
    /// 4x4 with a complex-conjugate eigenvalue pair.
    CaseII,
    /// 4x4 diagonalizable with a repeated real eigenvalue mu != 1.
    CaseIII,
    /// 4x4 diagonalizable with a triple (or quadruple, at 1) real eigenvalue.
    CaseIV,
    /// 4x4 defective, Jordan form diag(1, lambda, J2(mu)).
    Defective2Blocks,
    /// 4x4 defective, Jordan form diag(1, J3(lambda)).
    Defective3Block,
    /// Spectrum rules out any real logarithm: det <= 0 or a negative
    /// eigenvalue whose Jordan blocks cannot pair up.
    NonEmbeddableSpectrum,
    /// Any n with pairwise distinct eigenvalues: branch-enumeration path.
    GeneralDistinct,
}

impl SpectralClass {
    pub fn label(&self) -> &'static str {
        match self {
            SpectralClass::CaseI => "case-1",
            SpectralClass::CaseII => "case-2",
            SpectralClass::CaseIII => "case-3",
            SpectralClass::CaseIV => "case-4",
            SpectralClass::Defective2Blocks => "defective-2-blocks",
            SpectralClass::Defective3Block => "defective-3-block",
            SpectralClass::NonEmbeddableSpectrum => "non-embeddable-spectrum",
            SpectralClass::GeneralDistinct => "general-distinct",
        }
    }
}

fn cplx(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Right-nullspace basis of a real matrix: singular vectors whose singular
/// value is below `rank_tol` * sigma_max. Also returns sigma_max.
fn real_nullspace(b: &DMatrix<f64>, rank_tol: f64) -> (Vec<DVector<f64>>, f64) {
    let n = b.ncols();
    let svd = b.clone().svd(true, true);
    let sv = &svd.singular_values;
    let v_t = svd.v_t.expect("svd requested v_t");
    let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return (
            (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect(),
            0.0,
        );
    }
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    let mut out = Vec::new();
    for &i in &order {
        if sv[i] < rank_tol * sigma_max {
            out.push(v_t.row(i).transpose());
        }
    }
    (out, sigma_max)
}

fn complex_rank_defect(b: &DMatrix<Complex64>, rank_tol: f64) -> usize {
    let svd = b.clone().svd(false, false);
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return b.ncols();
    }
    sv.iter().filter(|&&s| s < rank_tol * sigma_max).count()
}

/// Deterministic start vector for inverse iteration; `phase` varies restarts.
fn start_vector(n: usize, phase: usize) -> DVector<Complex64> {
    DVector::from_fn(n, |j, _| {
        let t = 0.7 * (j as f64 + 1.0) + 1.3 * phase as f64;
        Complex64::new(1.0 + 0.3 * t.sin(), 0.25 * t.cos())
    })
}

/// Inverse iteration for a simple eigenvalue of the real matrix `a`.
/// Returns the (complex) eigenvector; residual checked against `a`.
fn inverse_iteration(a: &DMatrix<f64>, lambda: Complex64, scale: f64) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let ac = cplx(a);
    let mut best: Option<(f64, DVector<Complex64>)> = None;
    for attempt in 0..4 {
        let bump = 1e-13 * (attempt as f64) * scale.max(1.0);
        let shift = lambda + Complex64::new(bump, bump * 0.5);
        let mut shifted = ac.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut v = start_vector(n, attempt);
        v /= Complex64::new(v.norm(), 0.0);
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let nw = w.norm();
                    if !nw.is_finite() || nw == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / Complex64::new(nw, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let res = (&ac * &v - &v * lambda).norm();
        if best.as_ref().map_or(true, |(r, _)| res < *r) {
            best = Some((res, v));
        }
        if best.as_ref().unwrap().0 <= 1e-12 * scale.max(1.0) {
            break;
        }
    }
    match best {
        Some((res, v)) if res <= 1e-7 * scale.max(1.0) => Ok(v),
        Some((res, _)) => Err(EmbedError::Numerical(format!(
            "inverse iteration stalled at residual {res:e} for eigenvalue {lambda}"
        ))),
        None => Err(EmbedError::Numerical(
            "inverse iteration could not factor the shifted matrix".into(),
        )),
    }
}

/// Real inverse iteration for a simple real eigenvalue.
fn inverse_iteration_real(a: &DMatrix<f64>, lambda: f64, scale: f64) -> Result<DVector<f64>> {
    let v = inverse_iteration(a, Complex64::new(lambda, 0.0), scale)?;
    // Rotate the complex phase away: the eigenvector of a simple real
    // eigenvalue of a real matrix is real up to a unimodular factor.
    let mut k = 0;
    let mut mx = 0.0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > mx {
            mx = c.norm();
            k = i;
        }
    }
    let phase = v[k] / Complex64::new(v[k].norm(), 0.0);
    let rotated = v.map(|c| c / phase);
    let im_res: f64 = rotated.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if im_res > 1e-7 * scale.max(1.0) {
        return Err(EmbedError::Numerical(format!(
            "expected a real eigenvector, imaginary residue {im_res:e}"
        )));
    }
    Ok(rotated.map(|c| c.re))
}

/// Gram-Schmidt step: remove from `v` its components along `basis` (assumed
/// orthonormal), returning the remainder.
fn deflate(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    for b in basis {
        let c = b.dot(&r);
        r -= b * c;
    }
    r
}

struct Clustered {
    /// (representative, member indices into the Schur eigenvalue list)
    groups: Vec<(Complex64, Vec<usize>)>,
    min_gap: f64,
}

fn cluster_eigenvalues(raw: &[Complex64], rel_tol: f64) -> Clustered {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    let close = |a: Complex64, b: Complex64| {
        (a - b).norm() <= rel_tol * a.norm().max(b.norm()).max(1.0)
    };
    for i in 0..n {
        for j in (i + 1)..n {
            if close(raw[i], raw[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: Vec<(Complex64, Vec<usize>)> = Vec::new();
    let mut root_of: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if let Some(entry) = root_of.iter_mut().find(|(root, _)| *root == r) {
            entry.1.push(i);
        } else {
            root_of.push((r, vec![i]));
        }
    }
    for (_, members) in root_of {
        let mut mean = Complex64::new(0.0, 0.0);
        for &i in &members {
            mean += raw[i];
        }
        mean /= Complex64::new(members.len() as f64, 0.0);
        // A cluster that contains (numerically) its own conjugate is real.
        if mean.im.abs() <= rel_tol * mean.norm().max(1.0) {
            mean = Complex64::new(mean.re, 0.0);
        }
        groups.push((mean, members));
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            let (a, b) = (groups[i].0, groups[j].0);
            let g = (a - b).norm() / a.norm().max(b.norm()).max(1.0);
            if g < min_gap {
                min_gap = g;
            }
        }
    }
    Clustered { groups, min_gap }
}

/// Eigendecompose a validated stochastic matrix; detects and (for 4x4)
/// resolves defective structure.
pub fn decompose(m: &StochasticMatrix, tol: &ToleranceConfig) -> Result<Decomposition> {
    let a = m.entries();
    let n = m.n();
    let scale = a.norm();

    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 300 * n.max(10))
        .ok_or_else(|| EmbedError::Numerical("Schur iteration did not converge".into()))?;
    let raw: Vec<Complex64> = schur.complex_eigenvalues().iter().cloned().collect();

    let clustered = cluster_eigenvalues(&raw, tol.eig_distinct_rel_tol);
    let mut groups = clustered.groups;

    // Pin the structurally guaranteed eigenvalue 1.
    let (one_idx, dist) = groups
        .iter()
        .enumerate()
        .map(|(i, (v, _))| (i, (v - Complex64::new(1.0, 0.0)).norm()))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if dist > 1e-6 {
        return Err(EmbedError::Numerical(format!(
            "no eigenvalue within 1e-6 of 1 (closest at distance {dist:e}); input is not stochastic enough"
        )));
    }
    groups[one_idx].0 = Complex64::new(1.0, 0.0);

    for (v, _) in &groups {
        if v.norm() < 1e-13 {
            return Err(EmbedError::SingularMatrix);
        }
    }

    let det = {
        let mut p = Complex64::new(1.0, 0.0);
        for (v, members) in &groups {
            for _ in 0..members.len() {
                p *= v;
            }
        }
        p.re
    };

    // Geometric multiplicities.
    let mut infos: Vec<ClusterInfo> = Vec::new();
    let mut defective: Vec<usize> = Vec::new();
    for (gi, (v, members)) in groups.iter().enumerate() {
        let mult = members.len();
        let nullity = if mult == 1 {
            1
        } else if v.im == 0.0 {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] -= v.re;
            }
            real_nullspace(&b, tol.defect_rank_tol).0.len()
        } else {
            let mut b = cplx(a);
            for i in 0..n {
                b[(i, i)] -= v;
            }
            complex_rank_defect(&b, tol.defect_rank_tol)
        };
        let geo = nullity.clamp(1, mult);
        if geo < mult {
            defective.push(gi);
        }
        infos.push(ClusterInfo {
            value: *v,
            mult,
            geo,
        });
    }

    if !defective.is_empty() {
        // Complex defects are unsupported outright.
        if defective.iter().any(|&gi| infos[gi].value.im != 0.0) {
            return Err(EmbedError::ComplexDefective);
        }
        if n != 4 {
            return Err(EmbedError::UnsupportedDefective { n });
        }
        if defective.len() > 1 {
            return Err(EmbedError::Numerical(
                "multiple defective clusters in a 4x4 matrix".into(),
            ));
        }
        let gi = defective[0];
        if (infos[gi].value.re - 1.0).abs() < 1e-12 && infos[gi].value.im == 0.0 && gi == one_idx {
            return Err(EmbedError::Numerical(
                "eigenvalue 1 of a stochastic matrix must be semisimple".into(),
            ));
        }
        return build_defective(a, &groups, &infos, gi, one_idx, det, tol, scale)
            .map(Decomposition::Defective);
    }

    // Diagonalizable: assemble slots.
    // Order: the 1-cluster, then real clusters by descending value, then
    // complex Im>0 clusters by descending re (each immediately followed by its
    // conjugate partner).
    let mut real_order: Vec<usize> = (0..groups.len())
        .filter(|&i| i != one_idx && groups[i].0.im == 0.0)
        .collect();
    real_order.sort_by(|&i, &j| groups[j].0.re.partial_cmp(&groups[i].0.re).unwrap());
    let mut pos_order: Vec<usize> = (0..groups.len())
        .filter(|&i| groups[i].0.im > 0.0)
        .collect();
    pos_order.sort_by(|&i, &j| {
        groups[j]
            .0
            .re
            .partial_cmp(&groups[i].0.re)
            .unwrap()
            .then(groups[j].0.im.partial_cmp(&groups[i].0.im).unwrap())
    });
    let conj_partner = |v: Complex64| -> Result<usize> {
        groups
            .iter()
            .position(|(w, _)| w.im < 0.0 && (w.conj() - v).norm() <= 1e-10 * v.norm().max(1.0))
            .ok_or_else(|| EmbedError::Numerical("conjugate partner cluster missing".into()))
    };

    let mut eigenvalues: Vec<Complex64> = Vec::with_capacity(n);
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut all_real = true;

    // 1-cluster columns.
    {
        let m1 = groups[one_idx].1.len();
        let ones = DVector::from_element(n, 1.0f64);
        eigenvalues.push(Complex64::new(1.0, 0.0));
        columns.push(ones.map(|x| Complex64::new(x, 0.0)));
        if m1 > 1 {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] -= 1.0;
            }
            let (null, _) = real_nullspace(&b, tol.defect_rank_tol);
            if null.len() < m1 {
                return Err(EmbedError::Numerical(
                    "eigenspace of eigenvalue 1 smaller than its cluster".into(),
                ));
            }
            let ones_unit = ones / (n as f64).sqrt();
            let mut kept: Vec<DVector<f64>> = vec![ones_unit];
            let mut candidates = null;
            for _ in 1..m1 {
                // Pick the candidate with the largest component outside the
                // span kept so far.
                let (best_i, best_r) = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, deflate(c, &kept)))
                    .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                    .map(|(i, r)| (i, r))
                    .unwrap();
                let nrm = best_r.norm();
                if nrm < 1e-8 {
                    return Err(EmbedError::Numerical(
                        "could not complete the eigenvalue-1 eigenspace basis".into(),
                    ));
                }
                let unit = best_r / nrm;
                candidates.remove(best_i);
                eigenvalues.push(Complex64::new(1.0, 0.0));
                columns.push(unit.map(|x| Complex64::new(x, 0.0)));
                kept.push(unit);
            }
        }
    }

    for &gi in &real_order {
        let (v, members) = &groups[gi];
        let mult = members.len();
        if mult == 1 {
            let vec = inverse_iteration_real(a, v.re, scale)?;
            eigenvalues.push(*v);
            columns.push(vec.map(|x| Complex64::new(x, 0.0)));
        } else {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] -= v.re;
            }
            let (null, _) = real_nullspace(&b, tol.defect_rank_tol);
            if null.len() < mult {
                return Err(EmbedError::Numerical(format!(
                    "eigenspace at {} smaller than its cluster",
                    v.re
                )));
            }
            for vec in null.into_iter().take(mult) {
                eigenvalues.push(*v);
                columns.push(vec.map(|x| Complex64::new(x, 0.0)));
            }
        }
    }

    for &gi in &pos_order {
        all_real = false;
        let (v, members) = &groups[gi];
        let mult = members.len();
        let _partner = conj_partner(*v)?;
        if mult > 1 {
            // Repeated complex pairs only occur for n >= 6 and are outside the
            // supported enumeration; decompose still reports them faithfully
            // via the complex nullspace.
            let mut b = cplx(a);
            for i in 0..n {
                b[(i, i)] -= v;
            }
            let svd = b.clone().svd(false, true);
            let v_t = svd.v_t.expect("svd v_t");
            let sv = &svd.singular_values;
            let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
            let mut order: Vec<usize> = (0..sv.len()).collect();
            order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
            let mut taken = 0;
            for &i in &order {
                if taken == mult {
                    break;
                }
                if sv[i] < tol.defect_rank_tol * sigma_max.max(1e-300) {
                    let col = v_t.row(i).adjoint();
                    eigenvalues.push(*v);
                    columns.push(col.clone());
                    eigenvalues.push(v.conj());
                    columns.push(col.map(|c| c.conj()));
                    taken += 1;
                }
            }
            if taken < mult {
                return Err(EmbedError::Numerical(
                    "complex eigenspace smaller than its cluster".into(),
                ));
            }
        } else {
            let w = inverse_iteration(a, *v, scale)?;
            eigenvalues.push(*v);
            columns.push(w.clone());
            eigenvalues.push(v.conj());
            columns.push(w.map(|c| c.conj()));
        }
    }

    if eigenvalues.len() != n {
        return Err(EmbedError::Numerical(format!(
            "slot assembly produced {} slots for n = {}",
            eigenvalues.len(),
            n
        )));
    }

    let mut p = DMatrix::<Complex64>::zeros(n, n);
    for (j, c) in columns.iter().enumerate() {
        p.set_column(j, c);
    }
    let p_inv = p
        .clone()
        .lu()
        .try_inverse()
        .ok_or(EmbedError::IllConditioned)?;

    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            eigenvalues[i]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let recon_residual = (cplx(a) * &p - &p * &d).norm();
    if recon_residual > 1e-4 * scale.max(1.0) {
        return Err(EmbedError::Numerical(format!(
            "eigendecomposition residual {recon_residual:e} is catastrophically large"
        )));
    }

    let sv = p.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond_p = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let p_real = if all_real {
        Some(p.map(|c| c.re))
    } else {
        None
    };

    Ok(Decomposition::Diagonalizable(SpectralDecomposition {
        eigenvalues,
        p,
        p_inv,
        is_real_p: all_real,
        p_real,
        clusters: infos,
        det,
        cond_p,
        min_cluster_gap: clustered.min_gap,
        recon_residual,
    }))
}

#[allow(clippy::too_many_arguments)]
fn build_defective(
    a: &DMatrix<f64>,
    groups: &[(Complex64, Vec<usize>)],
    infos: &[ClusterInfo],
    gi: usize,
    one_idx: usize,
    det: f64,
    tol: &ToleranceConfig,
    scale: f64,
) -> Result<DefectiveStructure> {
    let n = 4usize;
    let val = infos[gi].value.re;
    let mult = infos[gi].mult;
    let geo = infos[gi].geo;
    let ones = DVector::from_element(n, 1.0f64);

    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= val;
    }
    let n1 = &shifted;
    let n2 = n1 * n1;

    let (null1, _) = real_nullspace(n1, tol.defect_rank_tol);
    let (null2, _) = real_nullspace(&n2, tol.defect_rank_tol);

    let orthonormalize = |vs: &[DVector<f64>]| -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for v in vs {
            let r = deflate(v, &out);
            let nrm = r.norm();
            if nrm > 1e-10 {
                out.push(r / nrm);
            }
        }
        out
    };
    let null1_on = orthonormalize(&null1);

    let pick_outside = |pool: &[DVector<f64>], span: &[DVector<f64>]| -> Option<DVector<f64>> {
        pool.iter()
            .map(|c| deflate(c, span))
            .max_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap())
            .filter(|r| r.norm() > 1e-8)
            .map(|r| r.clone() / r.norm())
    };

    match (mult, geo) {
        (2, 1) | (3, 2) => {
            // One J2 block at `val`; the remaining non-1 eigenvalue direction
            // is either a separate simple eigenvalue or a second eigenvector
            // of `val` itself.
            let w2 = pick_outside(&null2, &null1_on).ok_or_else(|| {
                EmbedError::Numerical("no generalized eigenvector found for the J2 block".into())
            })?;
            let mut w1 = n1 * &w2;
            let c = w1.norm();
            if c < 1e-10 {
                return Err(EmbedError::Numerical(
                    "generalized eigenvector maps into the nullspace; J2 chain collapsed".into(),
                ));
            }
            w1 /= c;
            let w2 = w2 / c;

            let (lambda, v_l) = if mult == 2 {
                // The third cluster is the remaining simple real eigenvalue.
                let other = (0..groups.len())
                    .find(|&k| k != gi && k != one_idx)
                    .ok_or_else(|| {
                        EmbedError::Numerical("missing simple eigenvalue beside the J2 block".into())
                    })?;
                let lv = groups[other].0;
                if lv.im != 0.0 {
                    return Err(EmbedError::ComplexDefective);
                }
                (lv.re, inverse_iteration_real(a, lv.re, scale)?)
            } else {
                // Triple eigenvalue with a J2 + J1 structure: second
                // eigenvector of `val`, independent of w1.
                let w1_unit = w1.clone() / w1.norm();
                let extra = pick_outside(&null1_on, &[w1_unit]).ok_or_else(|| {
                    EmbedError::Numerical("no independent eigenvector beside the J2 chain".into())
                })?;
                (val, extra)
            };

            let mut basis = DMatrix::<f64>::zeros(n, n);
            basis.set_column(0, &ones);
            basis.set_column(1, &v_l);
            basis.set_column(2, &w1);
            basis.set_column(3, &w2);
            let mut jordan = DMatrix::<f64>::zeros(n, n);
            jordan[(0, 0)] = 1.0;
            jordan[(1, 1)] = lambda;
            jordan[(2, 2)] = val;
            jordan[(2, 3)] = 1.0;
            jordan[(3, 3)] = val;
            finish_defective(
                a,
                basis,
                jordan,
                JordanShape::TwoBlock { lambda, mu: val },
                det,
                scale,
            )
        }
        (3, 1) => {
            let n3 = &n2 * n1;
            let (null3, _) = real_nullspace(&n3, tol.defect_rank_tol);
            let null2_on = orthonormalize(&null2);
            let w3 = pick_outside(&null3, &null2_on).ok_or_else(|| {
                EmbedError::Numerical("no rank-3 generalized eigenvector for the J3 block".into())
            })?;
            let w2 = n1 * &w3;
            let w1 = n1 * &w2;
            let c = w1.norm();
            if c < 1e-10 {
                return Err(EmbedError::Numerical("J3 chain collapsed".into()));
            }
            let (w1, w2, w3) = (w1 / c, w2 / c, w3 / c);
            let mut basis = DMatrix::<f64>::zeros(n, n);
            basis.set_column(0, &ones);
            basis.set_column(1, &w1);
            basis.set_column(2, &w2);
            basis.set_column(3, &w3);
            let mut jordan = DMatrix::<f64>::zeros(n, n);
            jordan[(0, 0)] = 1.0;
            jordan[(1, 1)] = val;
            jordan[(1, 2)] = 1.0;
            jordan[(2, 2)] = val;
            jordan[(2, 3)] = 1.0;
            jordan[(3, 3)] = val;
            finish_defective(a, basis, jordan, JordanShape::ThreeBlock { lambda: val }, det, scale)
        }
        (m, g) => Err(EmbedError::Numerical(format!(
            "unrecognized defective structure: algebraic {m}, geometric {g}"
        ))),
    }
}

fn finish_defective(
    a: &DMatrix<f64>,
    basis: DMatrix<f64>,
    jordan: DMatrix<f64>,
    shape: JordanShape,
    det: f64,
    scale: f64,
) -> Result<DefectiveStructure> {
    let basis_inv = basis
        .clone()
        .lu()
        .try_inverse()
        .ok_or(EmbedError::IllConditioned)?;
    let recon = (&basis * &jordan * &basis_inv - a).norm();
    if recon > 1e-4 * scale.max(1.0) {
        return Err(EmbedError::Numerical(format!(
            "Jordan reconstruction residual {recon:e} is catastrophically large"
        )));
    }
    let sv = basis.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DefectiveStructure {
        shape,
        basis,
        basis_inv,
        jordan,
        det,
        cond_basis: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        recon_residual: recon,
    })
}

/// Classify a decomposition into the solver dispatch class. Total on its
/// input; decompose-level errors (singular, unsupported defects) never
/// reach here.
pub fn classify(decomp: &Decomposition) -> SpectralClass {
    match decomp {
        Decomposition::Defective(d) => {
            let evs = d.eigenvalues();
            if d.det <= 0.0 || evs.iter().any(|&l| l <= 0.0) {
                // A defective negative eigenvalue has an odd number of Jordan
                // blocks here (single J2 or J3), so no real logarithm exists.
                return SpectralClass::NonEmbeddableSpectrum;
            }
            match d.shape {
                JordanShape::TwoBlock { .. } => SpectralClass::Defective2Blocks,
                JordanShape::ThreeBlock { .. } => SpectralClass::Defective3Block,
            }
        }
        Decomposition::Diagonalizable(s) => {
            if s.det <= 0.0 {
                return SpectralClass::NonEmbeddableSpectrum;
            }
            // Diagonalizable: each negative eigenvalue contributes `mult`
            // one-dimensional Jordan blocks; odd multiplicity kills the real
            // logarithm.
            for c in &s.clusters {
                if c.is_real() && c.value.re < 0.0 && c.mult % 2 == 1 {
                    return SpectralClass::NonEmbeddableSpectrum;
                }
            }
            let n = s.n();
            if n != 4 {
                return SpectralClass::GeneralDistinct;
            }
            let has_pair = s.clusters.iter().any(|c| !c.is_real());
            if has_pair {
                return SpectralClass::CaseII;
            }
            // All real, positive-or-even. Decide by the multiset shape.
            let one_mult = s
                .clusters
                .iter()
                .find(|c| (c.value.re - 1.0).abs() < 1e-12)
                .map(|c| c.mult)
                .unwrap_or(1);
            if one_mult == 4 {
                return SpectralClass::CaseIV;
            }
            let mut non_one: Vec<&ClusterInfo> = s
                .clusters
                .iter()
                .filter(|c| (c.value.re - 1.0).abs() >= 1e-12)
                .collect();
            non_one.sort_by(|a, b| b.mult.cmp(&a.mult));
            match (one_mult, non_one.first().map(|c| c.mult).unwrap_or(0)) {
                (1, 3) => SpectralClass::CaseIV,
                (1, 2) | (2, 2) => SpectralClass::CaseIII,
                (1, 1) | (2, 1) => SpectralClass::CaseI,
                // (3, 1) cannot arise from a stochastic matrix; fall back to
                // the principal-logarithm test.
                _ => SpectralClass::CaseI,
            }
        }
    }
}

#[cfg(test)]
pub(crate) fn hadamard_mix(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    // H diag(1,a,b,c) H / 4 with H the symmetric 4x4 Hadamard matrix; rows of
    // the result are stochastic whenever all sign combinations 1 +- a +- b +- c
    // stay nonnegative.
    let h = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0,
        ],
    );
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, a, b, c]));
    (&h * d * &h) / 4.0
}
