//! Logarithms of a 4x4 stochastic matrix with a repeated real eigenvalue of
//! geometric multiplicity two (spectrum {1, lambda, mu, mu}).
//!
//! On the two-dimensional mu-eigenspace a real logarithm may act as
//! log|mu| I + theta * J where J is conjugate to a rotation generator; the
//! conjugation orbit of J is parametrized by the hyperboloid sheet
//! V+ = {(x, y, z) : xz - y^2 = 1, x > 0} via the block [[-y, x], [-z, y]].
//! For each admissible winding k the candidates form the family
//!
//! ```text
//! Q_k(x, y, z) = L + theta_k * V(x, y, z),   theta_k = 2 pi k + Arg(mu)
//! ```
//!
//! and the rate constraints cut a convex polytope P_k out of (x, y, z)
//! space. The matrix is embeddable through winding k iff P_k meets the
//! sheet; the intersection is a two-dimensional patch (infinitely many
//! generators), finitely many tangency points, or empty. The decision walks
//! the boundary of P_k: vertex sign changes of f = xz - y^2 - 1, edge-line
//! quadratics, and per-face conics, exactly in that order. P_k is always
//! bounded: a recession direction would make V(v) itself a rate matrix with
//! purely imaginary spectrum, forcing V(v) = 0.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{EmbedError, Result};
use crate::matrix::{cleanup_rate, is_rate_matrix, BranchTag, GeneratorCandidate, StochasticMatrix};
use crate::spectral::SpectralDecomposition;
use crate::tol::ToleranceConfig;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const PI: f64 = std::f64::consts::PI;

/// Hyperboloid defect f(v) = xz - y^2 - 1; the sheet is its zero set.
pub fn hyperboloid_defect(v: &[f64; 3]) -> f64 {
    v[0] * v[2] - v[1] * v[1] - 1.0
}

/// Nearest-point Newton step toward the hyperboloid, iterated a few times.
pub fn project_to_hyperboloid(v: &[f64; 3]) -> [f64; 3] {
    let mut p = *v;
    for _ in 0..12 {
        let f = hyperboloid_defect(&p);
        if f.abs() < 1e-14 {
            break;
        }
        let g = [p[2], -2.0 * p[1], p[0]];
        let gn = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        if gn < 1e-30 {
            break;
        }
        for i in 0..3 {
            p[i] -= f * g[i] / gn;
        }
    }
    p
}

/// The structured family of candidate logarithms for the repeated case.
#[derive(Debug, Clone)]
pub struct Case3Family {
    /// Columns: ones, the simple eigenvector, a real basis of the
    /// mu-eigenspace.
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub lambda: f64,
    pub mu: f64,
    /// Base point L = P diag(0, ln lambda, ln|mu|, ln|mu|) P^-1.
    pub l: DMatrix<f64>,
    /// V(x, y, z) = x A + y B + z C.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// What the intersection of P_k with the sheet looks like.
#[derive(Debug, Clone, PartialEq)]
pub enum Case3Cardinality {
    Empty,
    /// Isolated tangency points (x, y, z).
    FinitePoints(Vec<[f64; 3]>),
    /// A positive-area patch; one interior point is reported.
    Infinite { representative: [f64; 3] },
}

#[derive(Debug, Clone)]
pub struct Case3KReport {
    pub k: i64,
    pub theta: f64,
    pub cardinality: Case3Cardinality,
}

#[derive(Debug, Clone)]
pub struct Case3Outcome {
    pub k_lo: i64,
    pub k_hi: i64,
    pub reports: Vec<Case3KReport>,
    pub generators: Vec<GeneratorCandidate>,
    pub has_infinite_family: bool,
}

impl Case3Family {
    /// Assemble the family from a decomposition whose clusters match the
    /// repeated pattern: a real eigenvalue of multiplicity two (not 1), plus
    /// either a simple real eigenvalue or a second ones-slot.
    pub fn from_decomposition(s: &SpectralDecomposition) -> Result<Self> {
        if s.n() != 4 {
            return Err(EmbedError::Domain {
                op: "case3",
                detail: format!("repeated-pair analysis is for n = 4, got n = {}", s.n()),
            });
        }
        let p_real = s.p_real.as_ref().ok_or_else(|| EmbedError::Domain {
            op: "case3",
            detail: "spectrum must be entirely real".into(),
        })?;
        // Slot values are cluster representatives, so exact comparison works.
        let mut mu_slots: Vec<usize> = Vec::new();
        let mut mu = f64::NAN;
        for c in &s.clusters {
            if c.mult == 2 && c.value.re != 1.0 {
                mu = c.value.re;
                mu_slots = (0..4).filter(|&i| s.eigenvalues[i].re == mu).collect();
            }
        }
        if mu_slots.len() != 2 {
            return Err(EmbedError::Domain {
                op: "case3",
                detail: "expected exactly one repeated eigenvalue pair distinct from 1".into(),
            });
        }
        if mu == 0.0 {
            return Err(EmbedError::SingularMatrix);
        }
        let rest: Vec<usize> = (0..4).filter(|i| !mu_slots.contains(i)).collect();
        // rest = [slot of 1, slot of lambda] (slot 0 always carries the ones
        // vector; for a doubled unit eigenvalue lambda = 1).
        let lambda = s.eigenvalues[rest[1]].re;
        if lambda <= 0.0 {
            return Err(EmbedError::Domain {
                op: "case3",
                detail: format!("simple eigenvalue must be positive, got {lambda}"),
            });
        }
        let order = [rest[0], rest[1], mu_slots[0], mu_slots[1]];
        let mut p = DMatrix::<f64>::zeros(4, 4);
        for (new, &old) in order.iter().enumerate() {
            p.set_column(new, &p_real.column(old));
        }
        let p_inv = p.clone().try_inverse().ok_or(EmbedError::IllConditioned)?;
        let diag = DVector::from_vec(vec![0.0, lambda.ln(), mu.abs().ln(), mu.abs().ln()]);
        let l = &p * DMatrix::from_diagonal(&diag) * &p_inv;
        let mut a = DMatrix::<f64>::zeros(4, 4);
        let mut b = DMatrix::<f64>::zeros(4, 4);
        let mut c = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = p[(i, 2)] * p_inv[(3, j)];
                c[(i, j)] = -p[(i, 3)] * p_inv[(2, j)];
                b[(i, j)] = p[(i, 3)] * p_inv[(3, j)] - p[(i, 2)] * p_inv[(2, j)];
            }
        }
        Ok(Case3Family { p, p_inv, lambda, mu, l, a, b, c })
    }

    /// Rotation angle for winding k.
    pub fn theta(&self, k: i64) -> f64 {
        TWO_PI * k as f64 + if self.mu < 0.0 { PI } else { 0.0 }
    }

    /// Inclusive winding range outside of which no member can be a rate
    /// matrix (|theta| <= -ln|mu| from the n = 4 spectral cone). Empty when
    /// lo > hi; in particular mu < -e^{-pi} leaves no winding at all.
    pub fn k_range(&self) -> (i64, i64) {
        let lm = self.mu.abs().ln();
        if self.mu > 0.0 {
            let lo = (lm / TWO_PI - 1e-12).ceil() as i64;
            let hi = (-lm / TWO_PI + 1e-12).floor() as i64;
            (lo, hi)
        } else {
            let lo = (-0.5 + lm / TWO_PI - 1e-12).ceil() as i64;
            let hi = (-0.5 - lm / TWO_PI + 1e-12).floor() as i64;
            (lo, hi)
        }
    }

    pub fn v_matrix(&self, v: &[f64; 3]) -> DMatrix<f64> {
        &self.a * v[0] + &self.b * v[1] + &self.c * v[2]
    }

    /// The family member at winding k and sheet point v.
    pub fn q_at(&self, k: i64, v: &[f64; 3]) -> Result<DMatrix<f64>> {
        let theta = self.theta(k);
        if theta.abs() < 1e-9 {
            return Err(EmbedError::DegenerateScale);
        }
        Ok(&self.l + self.v_matrix(v) * theta)
    }

    /// The principal logarithm (the collapsed k = 0 member), defined only
    /// for mu > 0.
    pub fn principal(&self) -> Option<DMatrix<f64>> {
        (self.mu > 0.0).then(|| self.l.clone())
    }
}

/// One linear rate constraint n . v + d >= 0 on the sheet coordinates.
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    n: Vector3<f64>,
    d: f64,
}

impl HalfSpace {
    fn eval(&self, v: &[f64; 3]) -> f64 {
        self.n[0] * v[0] + self.n[1] * v[1] + self.n[2] * v[2] + self.d
    }
}

fn feasible(hs: &[HalfSpace], v: &[f64; 3], slack: f64) -> bool {
    hs.iter().all(|h| h.eval(v) >= -slack)
}

fn strictly_inside(hs: &[HalfSpace], v: &[f64; 3], margin: f64, skip: Option<usize>) -> bool {
    hs.iter()
        .enumerate()
        .all(|(i, h)| Some(i) == skip || h.eval(v) > margin)
}

fn solve3(rows: [Vector3<f64>; 3], rhs: Vector3<f64>) -> Option<Vector3<f64>> {
    let m = Matrix3::from_rows(&[rows[0].transpose(), rows[1].transpose(), rows[2].transpose()]);
    let lu = m.lu();
    let x = lu.solve(&rhs)?;
    let resid = (m * x - rhs).amax();
    (resid <= 1e-7 * (1.0 + x.amax())).then_some(x)
}

fn quadratic_roots(c2: f64, c1: f64, c0: f64, scale: f64) -> Vec<f64> {
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c0 / c1];
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Citardauq form for the smaller-magnitude root.
    let q = -0.5 * (c1 + c1.signum() * sq);
    let mut out = vec![q / c2];
    if q.abs() > 0.0 {
        out.push(c0 / q);
    } else {
        out.push(0.0);
    }
    out
}

struct KDecision<'a> {
    hs: Vec<HalfSpace>,
    slack: f64,
    margin: f64,
    range: f64,
    candidates: Vec<[f64; 3]>,
    fam: &'a Case3Family,
    k: i64,
}

impl<'a> KDecision<'a> {
    /// Entry-level test: does the actual family member at v satisfy the rate
    /// conditions (up to slack)?
    fn member_is_rate(&self, v: &[f64; 3]) -> bool {
        match self.fam.q_at(self.k, v) {
            Ok(q) => {
                let mut ok = true;
                for i in 0..4 {
                    for j in 0..4 {
                        if i != j && q[(i, j)] < -self.slack {
                            ok = false;
                        }
                    }
                }
                ok
            }
            Err(_) => false,
        }
    }

    fn vertices(&self) -> Vec<[f64; 3]> {
        let m = self.hs.len();
        let mut out: Vec<[f64; 3]> = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                for l in j + 1..m {
                    let rows = [self.hs[i].n, self.hs[j].n, self.hs[l].n];
                    let rhs = Vector3::new(-self.hs[i].d, -self.hs[j].d, -self.hs[l].d);
                    let Some(x) = solve3(rows, rhs) else { continue };
                    let v = [x[0], x[1], x[2]];
                    if !feasible(&self.hs, &v, self.slack) {
                        continue;
                    }
                    if out
                        .iter()
                        .any(|w| (0..3).all(|t| (w[t] - v[t]).abs() <= 1e-9 * (1.0 + v[t].abs())))
                    {
                        continue;
                    }
                    out.push(v);
                }
            }
        }
        out
    }

    fn f_margin(&self, v: &[f64; 3]) -> f64 {
        1e-8 * (1.0 + v.iter().map(|x| x * x).sum::<f64>())
    }

    /// Step 1: a strict sign change of f across vertices (positive side on
    /// the x > 0 sheet side) certifies a crossing patch.
    fn step1(&self, verts: &[[f64; 3]]) -> Option<[f64; 3]> {
        let plus = verts
            .iter()
            .find(|v| v[0] > 1e-9 && hyperboloid_defect(v) > self.f_margin(v))?;
        let minus = verts
            .iter()
            .find(|v| hyperboloid_defect(v) < -self.f_margin(v))?;
        // Bisect along the segment (inside P by convexity); the first
        // crossing from the plus end has x > 0.
        let mut lo = *plus;
        let mut hi = *minus;
        for _ in 0..80 {
            let mid = [
                0.5 * (lo[0] + hi[0]),
                0.5 * (lo[1] + hi[1]),
                0.5 * (lo[2] + hi[2]),
            ];
            if hyperboloid_defect(&mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rep = project_to_hyperboloid(&lo);
        (rep[0] > 0.0).then_some(rep)
    }

    /// Step 2: roots of f along each edge line. Two distinct transversal
    /// in-edge roots certify a patch; single roots are tangency candidates.
    fn step2(&mut self) -> Option<[f64; 3]> {
        let m = self.hs.len();
        for i in 0..m {
            for j in i + 1..m {
                let na = self.hs[i].n;
                let nb = self.hs[j].n;
                let dir = na.cross(&nb);
                if dir.amax() <= 1e-12 * (1.0 + na.amax()) * (1.0 + nb.amax()) {
                    continue;
                }
                let Some(p0) = solve3(
                    [na, nb, dir],
                    Vector3::new(-self.hs[i].d, -self.hs[j].d, 0.0),
                ) else {
                    continue;
                };
                // f(p0 + t dir) as a quadratic in t.
                let c2 = dir[0] * dir[2] - dir[1] * dir[1];
                let c1 = p0[0] * dir[2] + dir[0] * p0[2] - 2.0 * p0[1] * dir[1];
                let c0 = p0[0] * p0[2] - p0[1] * p0[1] - 1.0;
                let scale = 1.0 + dir.amax() * dir.amax() + p0.amax() * dir.amax() + c0.abs();
                let mut in_edge: Vec<(f64, [f64; 3])> = Vec::new();
                for t in quadratic_roots(c2, c1, c0, scale) {
                    if !t.is_finite() || t.abs() > 1e9 {
                        continue;
                    }
                    let v = [p0[0] + t * dir[0], p0[1] + t * dir[1], p0[2] + t * dir[2]];
                    if v[0] > 1e-9 && feasible(&self.hs, &v, self.slack) {
                        in_edge.push((t, v));
                    }
                }
                if in_edge.len() == 2 {
                    let sep = (in_edge[0].0 - in_edge[1].0).abs() * dir.amax();
                    let sc = 1.0 + in_edge[0].1.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    if sep > 1e-7 * sc {
                        return Some(in_edge[0].1);
                    }
                }
                for (_, v) in in_edge {
                    self.candidates.push(v);
                }
            }
        }
        None
    }

    /// Step 3: walk each face's conic (plane cut of the hyperboloid). Any
    /// point strictly inside the face certifies a patch; conic fold points
    /// (discriminant zeros) are tangency candidates.
    fn step3(&mut self) -> Option<[f64; 3]> {
        let nfaces = self.hs.len();
        for a_idx in 0..nfaces {
            let h = self.hs[a_idx];
            let (na, nb, nc, nd) = (h.n[0], h.n[1], h.n[2], -h.d);
            let nscale = h.n.amax();
            if nc.abs() > 1e-9 * nscale {
                if let Some(rep) = self.face_param_z(a_idx, na, nb, nc, nd) {
                    return Some(rep);
                }
            } else if nb.abs() > 1e-9 * nscale {
                if let Some(rep) = self.face_ladder(a_idx, |x| {
                    let y = (nd - na * x) / nb;
                    let z = (1.0 + y * y) / x;
                    [x, y, z]
                }) {
                    return Some(rep);
                }
            } else if na.abs() > 0.0 {
                let x0 = nd / na;
                if x0 > 1e-9 {
                    // Plane x = x0: the cut is parametrized by y.
                    let reps: Vec<[f64; 3]> = (0..=400)
                        .map(|s| {
                            let y = -self.range + 2.0 * self.range * s as f64 / 400.0;
                            [x0, y, (1.0 + y * y) / x0]
                        })
                        .collect();
                    for v in reps {
                        if v.iter().all(|t| t.is_finite())
                            && strictly_inside(&self.hs, &v, self.margin, Some(a_idx))
                            && self.member_is_rate(&v)
                        {
                            return Some(v);
                        }
                    }
                }
            }
        }
        None
    }

    /// Face plane Ax + By + Cz = D with C != 0: y solves
    /// C y^2 + B x y + (A x^2 - D x + C) = 0 along the conic, with
    /// discriminant D(x) = (B^2 - 4AC) x^2 + 4CD x - 4C^2.
    fn face_param_z(&mut self, a_idx: usize, a: f64, b: f64, c: f64, d: f64) -> Option<[f64; 3]> {
        let qa = b * b - 4.0 * a * c;
        let qb = 4.0 * c * d;
        let qc = -4.0 * c * c;
        let scale = qa.abs().max(qb.abs()).max(qc.abs()).max(1e-300);
        let roots = {
            let mut r = quadratic_roots(qa, qb, qc, scale);
            r.sort_by(|p, q| p.partial_cmp(q).unwrap());
            r
        };
        // Intervals of x > 0 where the discriminant is nonnegative,
        // clipped to the search range.
        let lo_lim = 1e-9;
        let hi_lim = self.range;
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let disc = |x: f64| qa * x * x + qb * x + qc;
        let mut cuts = vec![lo_lim];
        for &r in &roots {
            if r > lo_lim && r < hi_lim {
                cuts.push(r);
            }
        }
        cuts.push(hi_lim);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if disc(mid) >= 0.0 {
                intervals.push((w[0], w[1]));
            }
        }
        // Fold points of the conic sit at discriminant roots.
        for &r in &roots {
            if r > lo_lim && disc_near_zero(disc(r), scale) {
                let y = -b * r / (2.0 * c);
                let z = (d - a * r - b * y) / c;
                self.candidates.push([r, y, z]);
            }
        }
        for (xl, xr) in intervals {
            let steps = 320;
            for s in 0..=steps {
                let x = xl + (xr - xl) * s as f64 / steps as f64;
                let dd = disc(x).max(0.0);
                let sq = dd.sqrt();
                for sgn in [-1.0, 1.0] {
                    let y = (-b * x + sgn * sq) / (2.0 * c);
                    let z = (d - a * x - b * y) / c;
                    let v = [x, y, z];
                    if v.iter().all(|t| t.is_finite())
                        && x > lo_lim
                        && strictly_inside(&self.hs, &v, self.margin, Some(a_idx))
                        && self.member_is_rate(&v)
                    {
                        return Some(v);
                    }
                }
            }
        }
        None
    }

    /// Degenerate C = 0 face: sample the cut along a coordinate ladder.
    fn face_ladder(
        &mut self,
        a_idx: usize,
        param: impl Fn(f64) -> [f64; 3],
    ) -> Option<[f64; 3]> {
        let steps = 400;
        for s in 0..=steps {
            let x = 1e-6 + (self.range - 1e-6) * s as f64 / steps as f64;
            let v = param(x);
            if v.iter().all(|t| t.is_finite())
                && strictly_inside(&self.hs, &v, self.margin, Some(a_idx))
                && self.member_is_rate(&v)
            {
                return Some(v);
            }
        }
        None
    }
}

fn disc_near_zero(val: f64, scale: f64) -> bool {
    val.abs() <= 1e-6 * scale
}

/// Decide the intersection P_k with the sheet for a single winding.
fn decide_k(
    fam: &Case3Family,
    k: i64,
    tol: &ToleranceConfig,
    range_hint: f64,
) -> Case3Cardinality {
    let theta = fam.theta(k);
    let mut hs: Vec<HalfSpace> = Vec::new();
    let mut nmax = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let n = Vector3::new(
                theta * fam.a[(i, j)],
                theta * fam.b[(i, j)],
                theta * fam.c[(i, j)],
            );
            nmax = nmax.max(n.amax());
            hs.push(HalfSpace { n, d: fam.l[(i, j)] });
        }
    }
    let slack = 10.0 * tol.nonneg_tol;
    // Constant constraints: no dependence on the sheet point at all.
    let mut kept: Vec<HalfSpace> = Vec::new();
    for h in hs {
        if h.n.amax() <= 1e-12 * nmax.max(1.0) {
            if h.d < -tol.nonneg_tol {
                return Case3Cardinality::Empty;
            }
        } else {
            kept.push(h);
        }
    }
    let mut dec = KDecision {
        hs: kept,
        slack,
        margin: 10.0 * tol.nonneg_tol,
        range: range_hint,
        candidates: Vec::new(),
        fam,
        k,
    };
    let verts = dec.vertices();
    // Widen the face search range to cover the polytope.
    for v in &verts {
        for t in v {
            dec.range = dec.range.max(2.0 * t.abs() + 1.0);
        }
    }
    if let Some(rep) = dec.step1(&verts) {
        if dec.member_is_rate(&rep) {
            return Case3Cardinality::Infinite { representative: rep };
        }
    }
    // Vertices lying essentially on the sheet are tangency candidates.
    for v in &verts {
        if hyperboloid_defect(v).abs() <= dec.f_margin(v) {
            dec.candidates.push(*v);
        }
    }
    if let Some(rep) = dec.step2() {
        if dec.member_is_rate(&rep) {
            return Case3Cardinality::Infinite { representative: rep };
        }
        dec.candidates.push(rep);
    }
    if let Some(rep) = dec.step3() {
        return Case3Cardinality::Infinite { representative: rep };
    }
    // No certified patch: polish and filter the isolated candidates.
    let mut pts: Vec<[f64; 3]> = Vec::new();
    let cands = std::mem::take(&mut dec.candidates);
    for cand in cands {
        let p = project_to_hyperboloid(&cand);
        if p[0] <= 1e-9 || hyperboloid_defect(&p).abs() > 1e-8 * (1.0 + p[0] * p[0] + p[2] * p[2]) {
            continue;
        }
        if !feasible(&dec.hs, &p, dec.slack) || !dec.member_is_rate(&p) {
            continue;
        }
        if pts
            .iter()
            .any(|w| (0..3).all(|t| (w[t] - p[t]).abs() <= 1e-6 * (1.0 + p[t].abs())))
        {
            continue;
        }
        pts.push(p);
    }
    if pts.is_empty() {
        Case3Cardinality::Empty
    } else {
        Case3Cardinality::FinitePoints(pts)
    }
}

/// Full analysis over every admissible winding.
pub fn solve_case3(
    m: &StochasticMatrix,
    s: &SpectralDecomposition,
    tol: &ToleranceConfig,
) -> Result<Case3Outcome> {
    let fam = Case3Family::from_decomposition(s)?;
    let (k_lo, k_hi) = fam.k_range();
    let mut reports = Vec::new();
    let mut generators: Vec<GeneratorCandidate> = Vec::new();
    let mut has_infinite = false;
    // Search range for the sheet coordinates, from the rate-matrix entry
    // bound |Q_ij| <= |trace| pushed through the coefficient matrices.
    let trace = fam.lambda.ln() + 2.0 * fam.mu.abs().ln();
    let range_hint = coordinate_range(&fam, trace);
    if let Some(lp) = fam.principal() {
        if is_rate_matrix(&lp, tol) {
            push_generator(
                &mut generators,
                m,
                cleanup_rate(&lp),
                BranchTag::Principal,
                tol,
            );
        }
    }
    for k in k_lo..=k_hi {
        if fam.mu > 0.0 && k == 0 {
            continue; // collapsed member, handled as the principal log
        }
        let card = decide_k(&fam, k, tol, range_hint);
        match &card {
            Case3Cardinality::Empty => {}
            Case3Cardinality::FinitePoints(pts) => {
                for p in pts {
                    if let Ok(q) = fam.q_at(k, p) {
                        push_generator(
                            &mut generators,
                            m,
                            cleanup_rate(&q),
                            BranchTag::Case3Point {
                                k,
                                x: p[0],
                                y: p[1],
                                z: p[2],
                            },
                            tol,
                        );
                    }
                }
            }
            Case3Cardinality::Infinite { representative } => {
                has_infinite = true;
                if let Ok(q) = fam.q_at(k, representative) {
                    push_generator(
                        &mut generators,
                        m,
                        cleanup_rate(&q),
                        BranchTag::Case3Point {
                            k,
                            x: representative[0],
                            y: representative[1],
                            z: representative[2],
                        },
                        tol,
                    );
                }
            }
        }
        reports.push(Case3KReport {
            k,
            theta: fam.theta(k),
            cardinality: card,
        });
    }
    generators.sort_by(|a, b| {
        let na: f64 = a.matrix.iter().map(|x| x.abs()).sum();
        let nb: f64 = b.matrix.iter().map(|x| x.abs()).sum();
        na.partial_cmp(&nb).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(Case3Outcome {
        k_lo,
        k_hi,
        reports,
        generators,
        has_infinite_family: has_infinite,
    })
}

fn push_generator(
    out: &mut Vec<GeneratorCandidate>,
    m: &StochasticMatrix,
    q: DMatrix<f64>,
    branch: BranchTag,
    _tol: &ToleranceConfig,
) {
    let back = crate::expm::matrix_exponential(&q);
    if (back - m.entries()).norm() > 1e-6 {
        return;
    }
    if out.iter().any(|g| (&g.matrix - &q).norm() <= 1e-8 * (1.0 + q.norm())) {
        return;
    }
    out.push(GeneratorCandidate { matrix: q, branch });
}

/// Crude outer bound on |x|, |y|, |z| over all rate members: every member's
/// entries lie in [trace, -trace], and the coefficient map is injective.
fn coordinate_range(fam: &Case3Family, trace: f64) -> f64 {
    let mut w = DMatrix::<f64>::zeros(12, 3);
    let mut r = 0;
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            w[(r, 0)] = fam.a[(i, j)];
            w[(r, 1)] = fam.b[(i, j)];
            w[(r, 2)] = fam.c[(i, j)];
            r += 1;
        }
    }
    let svd = w.svd(false, false);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = fam.l.amax();
    if !(smin > 1e-12) {
        return 1e6;
    }
    let bound = 12f64.sqrt() * (trace.abs() + lmax + 1.0) / (PI * smin);
    bound.min(1e6).max(8.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::matrix_exponential;
    use crate::matrix::cyclic_rate_matrix;
    use crate::spectral::{decompose, hadamard_mix, Decomposition};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn diag_part(m: &StochasticMatrix) -> SpectralDecomposition {
        match decompose(m, &tol()).unwrap() {
            Decomposition::Diagonalizable(s) => s,
            other => panic!("expected diagonalizable, got {other:?}"),
        }
    }

    fn sheet_point(t: f64, sg: f64) -> [f64; 3] {
        [t.cosh() * sg.exp(), t.sinh(), t.cosh() * (-sg).exp()]
    }

    /// exp(C4(pi)) has spectrum {1, e^-2pi, -e^-pi, -e^-pi}: the canonical
    /// negative repeated example.
    fn neg_mu_fixture() -> StochasticMatrix {
        let q = cyclic_rate_matrix(4, std::f64::consts::PI);
        StochasticMatrix::validate_markov(&matrix_exponential(&q), &tol()).unwrap()
    }

    #[test]
    fn family_members_exponentiate_back() {
        let m = neg_mu_fixture();
        let s = diag_part(&m);
        let fam = Case3Family::from_decomposition(&s).unwrap();
        assert!((fam.mu + (-std::f64::consts::PI).exp()).abs() < 1e-8);
        assert_eq!(fam.k_range(), (-1, 0));
        for k in [-1i64, 0] {
            for (t, sg) in [(0.0, 0.0), (0.7, 0.3), (-1.1, -0.4), (2.0, 1.0)] {
                let v = sheet_point(t, sg);
                let q = fam.q_at(k, &v).unwrap();
                let back = matrix_exponential(&q);
                assert!(
                    (back.clone() - m.entries()).norm() < 1e-9,
                    "k = {k}, v = {v:?}: residual {:e}",
                    (back - m.entries()).norm()
                );
            }
        }
    }

    #[test]
    fn family_rows_sum_to_zero() {
        let m = neg_mu_fixture();
        let s = diag_part(&m);
        let fam = Case3Family::from_decomposition(&s).unwrap();
        let q = fam.q_at(0, &sheet_point(0.3, -0.2)).unwrap();
        for i in 0..4 {
            let rs: f64 = q.row(i).iter().sum();
            assert!(rs.abs() < 1e-10);
        }
    }

    #[test]
    fn negative_repeated_fixture_is_embeddable() {
        let m = neg_mu_fixture();
        let s = diag_part(&m);
        let out = solve_case3(&m, &s, &tol()).unwrap();
        assert_eq!((out.k_lo, out.k_hi), (-1, 0));
        assert!(
            !out.generators.is_empty(),
            "reports: {:?}",
            out.reports.iter().map(|r| (r.k, matches!(r.cardinality, Case3Cardinality::Empty))).collect::<Vec<_>>()
        );
        // C4(pi) itself is a member, so at least one winding is nonempty;
        // all reported generators must be genuine.
        for g in &out.generators {
            assert!(is_rate_matrix(&g.matrix, &ToleranceConfig::with_scale(1e-7)));
            assert!((matrix_exponential(&g.matrix) - m.entries()).norm() < 1e-6);
        }
    }

    #[test]
    fn involution_is_not_embeddable() {
        // Block permutation: spectrum {1, 1, -1, -1}, mu = -1 < -e^-pi.
        let p = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
            ],
        );
        let m = StochasticMatrix::validate_markov(&p, &tol()).unwrap();
        let s = diag_part(&m);
        let out = solve_case3(&m, &s, &tol()).unwrap();
        assert!(out.k_lo > out.k_hi, "winding range should be empty");
        assert!(out.generators.is_empty());
        assert!(!out.has_infinite_family);
    }

    #[test]
    fn deep_negative_mu_is_not_embeddable() {
        // Spectrum (1, 0.5, -0.2, -0.2): mu = -0.2 below -e^-pi.
        let m =
            StochasticMatrix::validate_markov(&hadamard_mix(0.5, -0.2, -0.2), &tol()).unwrap();
        let s = diag_part(&m);
        let out = solve_case3(&m, &s, &tol()).unwrap();
        assert!(out.k_lo > out.k_hi);
        assert!(out.generators.is_empty());
    }

    #[test]
    fn doubled_block_diagonal_has_unique_principal_generator() {
        // M = diag(A, A) with A 2x2: spectrum {1, 1, 0.3, 0.3}; the winding
        // range is {0}, so the principal logarithm is the only candidate.
        let a = [0.7, 0.3, 0.4, 0.6];
        let mut m = DMatrix::<f64>::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = a[2 * i + j];
                m[(2 + i, 2 + j)] = a[2 * i + j];
            }
        }
        let m = StochasticMatrix::validate_markov(&m, &tol()).unwrap();
        let s = diag_part(&m);
        let out = solve_case3(&m, &s, &tol()).unwrap();
        assert_eq!(out.generators.len(), 1);
        assert!(matches!(out.generators[0].branch, BranchTag::Principal));
        assert!(!out.has_infinite_family);
        // The generator is diag(log A, log A), computable in closed form for
        // 2x2: log A = (ln det' / (tr - 2 s))-style, checked via exp instead.
        let g = &out.generators[0].matrix;
        assert!((matrix_exponential(g) - m.entries()).norm() < 1e-9);
        assert!(g[(0, 2)].abs() < 1e-9 && g[(1, 3)].abs() < 1e-9);
    }

    #[test]
    fn positive_mu_small_det_has_windings() {
        // Spectrum (1, 0.9, mu, mu) with mu = e^-7: windings -1, 0, 1 exist.
        let mu = (-7.0f64).exp();
        let m = StochasticMatrix::validate_markov(&hadamard_mix(0.9, mu, mu), &tol()).unwrap();
        let s = diag_part(&m);
        let fam = Case3Family::from_decomposition(&s).unwrap();
        assert_eq!(fam.k_range(), (-1, 1));
        let out = solve_case3(&m, &s, &tol()).unwrap();
        // The principal log of the Hadamard mix is a rate matrix here, so
        // the matrix is embeddable regardless of what the windings add.
        assert!(out
            .generators
            .iter()
            .any(|g| matches!(g.branch, BranchTag::Principal)));
    }

    #[test]
    fn projection_lands_on_sheet() {
        let p = project_to_hyperboloid(&[1.3, 0.4, 0.9]);
        assert!(hyperboloid_defect(&p).abs() < 1e-12);
        let q = project_to_hyperboloid(&sheet_point(0.5, 0.2));
        assert!((q[0] - sheet_point(0.5, 0.2)[0]).abs() < 1e-12);
    }
}
