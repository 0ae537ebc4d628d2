//! Fixed points, simplex-reduced Jacobians, eigenvalues, and stability
//! verdicts.
//!
//! Conservation of total mass forces a structural zero eigenvalue of the
//! ambient Jacobian, which would make a hyperbolicity test vacuous. All
//! classification therefore happens on the reduced system obtained by
//! eliminating the last coordinate (`x_k = 1 - sum of the others`): a fixed
//! point is asymptotically stable when every reduced eigenvalue has real
//! part below `-eps`, unstable when any real part exceeds `+eps`, and
//! undecided otherwise.
//!
//! Fixed-point search seeds a simplex grid plus the vertices and barycenter
//! and polishes each seed with damped Newton in reduced coordinates. The
//! search returns true fixed points that were found; it does not claim
//! completeness. Seeds polish independently and fan out to the worker pool;
//! results are sorted lexicographically before deduplication so the output
//! is identical no matter how many threads ran.

use crate::dynamics::PreparedRhs;
use crate::protocol::{DensityVector, ImmunityMatrix, ProtocolError, ProtocolKind, ProtocolSpec};
use crate::reduction::RuleIncidence;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Residual bound (sup norm of the velocity) for accepting a fixed point.
pub const FIXED_POINT_RESIDUAL_TOL: f64 = 1e-10;
/// Two fixed points closer than this (Euclidean) are considered the same.
pub const DEDUP_RADIUS: f64 = 1e-7;
/// Default hyperbolicity margin for classification; finite-difference noise
/// in the Jacobian is around 1e-8, so exact zeros need a tolerance band.
pub const DEFAULT_HYPERBOLICITY_EPS: f64 = 1e-7;
/// Default grid resolution for the multistart search.
pub const DEFAULT_SEEDS_PER_FACE: usize = 13;

const NEWTON_MAX_ITERS: usize = 60;
const INFLATION: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("eigenvalue iteration did not converge")]
    NonConvergence,
    #[error("eigenvalue {eig} failed the backward-error check: sigma_min = {sigma}, bound = {bound}")]
    BackwardError { eig: Complex64, sigma: f64, bound: f64 },
    #[error("point is outside the inflated simplex domain: {0}")]
    DomainEscape(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// A located fixed point of the mean-field dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x: DensityVector,
    /// Sup norm of the velocity at `x`.
    pub residual: f64,
    /// True when some coordinate is below 1e-9 (the point sits on a face).
    pub boundary: bool,
}

impl FixedPoint {
    /// Wraps an arbitrary simplex point with its residual; callers decide
    /// whether the residual qualifies it as fixed.
    pub fn at(spec: &ProtocolSpec, x: DensityVector) -> Self {
        let v = crate::dynamics::rhs(spec, &x);
        let residual = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let boundary = x.iter().any(|&c| c < 1e-9);
        Self { x, residual, boundary }
    }
}

/// Outcome of the multistart search.
#[derive(Debug, Clone)]
pub struct FixedPointSearch {
    pub points: Vec<FixedPoint>,
    /// Set when more than `3k` dedup clusters survive, which indicates a
    /// continuum of fixed points rather than isolated ones.
    pub continuum_suspected: bool,
}

/// Stability class of a fixed point per the hyperbolic linearization test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    AsymptoticallyStable,
    Unstable,
    NonHyperbolicUndecided,
}

impl StabilityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityClass::AsymptoticallyStable => "stable",
            StabilityClass::Unstable => "unstable",
            StabilityClass::NonHyperbolicUndecided => "undecided",
        }
    }
}

/// Reduced-Jacobian spectrum and verdict at one fixed point.
#[derive(Debug, Clone)]
pub struct StabilityAssessment {
    pub eigenvalues: Vec<Complex64>,
    pub class: StabilityClass,
    /// For unstable points: an eigenvector of a positive-real-part
    /// eigenvalue, lifted to ambient coordinates (components sum to zero).
    pub unstable_direction: Option<Vec<Complex64>>,
}

/// Full report: every located fixed point with its assessment.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub entries: Vec<(FixedPoint, StabilityAssessment)>,
    pub continuum_suspected: bool,
}

impl StabilityReport {
    /// CSV rows `x_1,...,x_k,residual,verdict,re(phi_1),im(phi_1),...`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let k = names.len();
        let mut out = String::new();
        for n in names {
            out.push_str(n);
            out.push(',');
        }
        out.push_str("residual,verdict");
        for i in 1..k {
            out.push_str(&format!(",re_{i},im_{i}"));
        }
        out.push('\n');
        for (fp, a) in &self.entries {
            for v in fp.x.iter() {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{},{}", fp.residual, a.class.as_str()));
            for e in &a.eigenvalues {
                out.push_str(&format!(",{},{}", e.re, e.im));
            }
            out.push('\n');
        }
        if self.continuum_suspected {
            out.push_str("# continuum of fixed points suspected\n");
        }
        out
    }
}

fn embed(u: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(u.len() + 1);
    x.extend_from_slice(u);
    x.push(1.0 - u.iter().sum::<f64>());
    x
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

/// All nonnegative integer compositions of `total` into `parts` slots.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Grid + multistart damped Newton search for fixed points on the simplex.
///
/// Returns deduplicated true fixed points (full-velocity residual at most
/// [`FIXED_POINT_RESIDUAL_TOL`]); completeness is not guaranteed.
pub fn find_fixed_points(spec: &ProtocolSpec, seeds_per_face: usize) -> FixedPointSearch {
    let k = spec.k();
    let prepared = PreparedRhs::prepare(spec);

    if k == 1 {
        let x = DensityVector::uniform(1);
        let residual = sup_norm(&prepared.eval(&x));
        let points = if residual <= FIXED_POINT_RESIDUAL_TOL {
            vec![FixedPoint { x, residual, boundary: false }]
        } else {
            vec![]
        };
        return FixedPointSearch { points, continuum_suspected: false };
    }

    let denom = seeds_per_face.saturating_sub(1).max(1);
    let mut seeds: Vec<Vec<f64>> = compositions(denom, k)
        .into_iter()
        .map(|c| c.into_iter().map(|n| n as f64 / denom as f64).collect())
        .collect();
    for i in 0..k {
        seeds.push(DensityVector::vertex(k, i).into_vec());
    }
    seeds.push(DensityVector::uniform(k).into_vec());

    let candidates: Vec<Option<(Vec<f64>, f64)>> = crate::par::map_indexed(seeds.len(), |s| {
        newton_polish(&prepared, k, &seeds[s][..k - 1])
    });

    let mut found: Vec<(Vec<f64>, f64)> = candidates.into_iter().flatten().collect();
    found.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.partial_cmp(y).expect("finite coordinates"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut points: Vec<FixedPoint> = Vec::new();
    for (x, residual) in found {
        let fresh = points.iter().all(|p| {
            let d2: f64 = p.x.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() > DEDUP_RADIUS
        });
        if fresh {
            let boundary = x.iter().any(|&c| c < 1e-9);
            let x = DensityVector::new(x).expect("snapped point lies on the simplex");
            points.push(FixedPoint { x, residual, boundary });
        }
    }

    let continuum_suspected = points.len() > 3 * k;
    FixedPointSearch { points, continuum_suspected }
}

fn newton_polish(prepared: &PreparedRhs<'_>, k: usize, u0: &[f64]) -> Option<(Vec<f64>, f64)> {
    let dim = k - 1;
    let snap = |u: &[f64], prepared: &PreparedRhs<'_>| -> Option<(Vec<f64>, f64)> {
        let rescale = |v: &[f64]| -> Option<Vec<f64>> {
            let total: f64 = v.iter().sum();
            (total > 0.0).then(|| v.iter().map(|&c| c / total).collect())
        };
        let x = embed(u);
        let clamped = rescale(&x.iter().map(|&v| v.max(0.0)).collect::<Vec<_>>())?;
        let residual = sup_norm(&prepared.eval(&clamped));
        if residual > FIXED_POINT_RESIDUAL_TOL {
            return None;
        }
        // Degenerate boundary fixed points admit a wide ball of iterates
        // below the residual tolerance. Collapsing near-zero coordinates
        // onto the face gives a cleaner representative whenever the exact
        // face point passes the same residual test.
        if clamped.iter().any(|&v| v > 0.0 && v < 1e-4) {
            if let Some(face) = rescale(
                &clamped.iter().map(|&v| if v < 1e-4 { 0.0 } else { v }).collect::<Vec<_>>(),
            ) {
                let face_residual = sup_norm(&prepared.eval(&face));
                if face_residual <= FIXED_POINT_RESIDUAL_TOL {
                    return Some((face, face_residual));
                }
            }
        }
        Some((clamped, residual))
    };

    let mut u = u0.to_vec();
    let mut fx = prepared.eval(&embed(&u));
    let mut res = sup_norm(&fx);
    for _ in 0..NEWTON_MAX_ITERS {
        if res <= FIXED_POINT_RESIDUAL_TOL {
            return snap(&u, prepared);
        }
        let jac = fd_reduced_jacobian(prepared, &u);
        let neg_f = DVector::from_iterator(dim, fx[..dim].iter().map(|v| -v));
        let step = jac.lu().solve(&neg_f)?;
        let du: Vec<f64> = step.iter().copied().collect();

        // Largest step fraction that keeps the iterate inside the inflated simplex.
        let mut alpha = 1.0f64;
        for i in 0..dim {
            if du[i] < 0.0 {
                alpha = alpha.min((u[i] + INFLATION) / -du[i]);
            }
        }
        let du_sum: f64 = du.iter().sum();
        let last = 1.0 - u.iter().sum::<f64>();
        if du_sum > 0.0 {
            alpha = alpha.min((last + INFLATION) / du_sum);
        }
        if !(alpha > 0.0) {
            return None;
        }

        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + alpha * d).collect();
            let cand_fx = prepared.eval(&embed(&cand));
            let cand_res = sup_norm(&cand_fx);
            if cand_res < res {
                u = cand;
                fx = cand_fx;
                res = cand_res;
                improved = true;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
        if !improved {
            return None;
        }
    }
    if res <= FIXED_POINT_RESIDUAL_TOL {
        return snap(&u, prepared);
    }
    None
}

fn fd_reduced_jacobian(prepared: &PreparedRhs<'_>, u: &[f64]) -> DMatrix<f64> {
    let dim = u.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut probe = u.to_vec();
    for j in 0..dim {
        probe[j] = u[j] + FD_STEP;
        let plus = prepared.eval(&embed(&probe));
        probe[j] = u[j] - FD_STEP;
        let minus = prepared.eval(&embed(&probe));
        probe[j] = u[j];
        for i in 0..dim {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

/// Central finite-difference Jacobian of the reduced system at a fixed
/// point. Works for every kind; step `1e-6`.
pub fn reduced_jacobian(
    spec: &ProtocolSpec,
    point: &FixedPoint,
) -> Result<DMatrix<f64>, StabilityError> {
    let k = spec.k();
    for (i, &v) in point.x.iter().enumerate() {
        if !(-1e-3..=1.0 + 1e-3).contains(&v) {
            return Err(StabilityError::DomainEscape(format!("coordinate {i} = {v}")));
        }
    }
    if k == 1 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let prepared = PreparedRhs::prepare(spec);
    Ok(fd_reduced_jacobian(&prepared, &point.x[..k - 1]))
}

/// Analytic ambient Jacobian, available for the polynomial kinds
/// (rule-based, constant-specification, linear-viral). General switching
/// specs with ratio expressions fall back to finite differences.
pub fn ambient_jacobian_analytic(spec: &ProtocolSpec, x: &[f64]) -> Option<DMatrix<f64>> {
    let k = spec.k();
    match spec.kind() {
        ProtocolKind::Ppp { rules } => {
            let inc = RuleIncidence::from_rules(k, rules);
            let mut jac = DMatrix::zeros(k, k);
            for i in 0..k {
                for &(r, m) in &inc.inflow_pairs[i] {
                    jac[(i, r)] += x[m];
                    jac[(i, m)] += x[r];
                }
                let partner_sum: f64 = inc.outflow_partners[i].iter().map(|&m| x[m]).sum();
                jac[(i, i)] -= partner_sum;
                for &m in &inc.outflow_partners[i] {
                    jac[(i, m)] -= x[i];
                }
            }
            Some(jac)
        }
        ProtocolKind::Mpp { rates, switch } => Some(DMatrix::from_fn(k, k, |i, l| {
            let mut v = rates[l] * switch[l][i];
            if i == l {
                v -= rates[i];
            }
            v
        })),
        ProtocolKind::Lvp { immunity, delta, .. } => {
            let t: Vec<f64> = (0..k).map(|i| immunity.row_dot(i, x)).collect();
            let t_bar: f64 = (0..k).map(|i| x[i] * t[i]).sum();
            Some(DMatrix::from_fn(k, k, |i, l| {
                let mut v = (immunity.get(i, l) as f64 - 2.0 * t[l]) * x[i];
                if i == l {
                    v += t[i] - t_bar;
                }
                v * delta
            }))
        }
        ProtocolKind::Spp { .. } => None,
    }
}

/// Finite-difference ambient Jacobian (probes leave the simplex; the raw
/// velocity evaluation tolerates that).
pub fn ambient_jacobian_fd(spec: &ProtocolSpec, x: &[f64]) -> DMatrix<f64> {
    let k = spec.k();
    let prepared = PreparedRhs::prepare(spec);
    let mut jac = DMatrix::zeros(k, k);
    let mut probe = x.to_vec();
    for j in 0..k {
        probe[j] = x[j] + FD_STEP;
        let plus = prepared.eval(&probe);
        probe[j] = x[j] - FD_STEP;
        let minus = prepared.eval(&probe);
        probe[j] = x[j];
        for i in 0..k {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

/// Analytic reduced Jacobian where an analytic ambient form exists;
/// `J_reduced[i][j] = J[i][j] - J[i][k-1]` by the chain rule through the
/// eliminated coordinate.
pub fn reduced_jacobian_analytic(
    spec: &ProtocolSpec,
    point: &FixedPoint,
) -> Option<DMatrix<f64>> {
    let k = spec.k();
    let ambient = ambient_jacobian_analytic(spec, &point.x)?;
    Some(DMatrix::from_fn(k - 1, k - 1, |i, j| ambient[(i, j)] - ambient[(i, k - 1)]))
}

/// Eigenvalues of a real dense matrix via Hessenberg reduction and shifted
/// QR iteration, with a backward-error acceptance check: every returned
/// eigenvalue must satisfy `sigma_min(M - phi I) <= 1e-8 * ||M||`.
/// Conjugate pairs are adjacent in the result.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, StabilityError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigenvalues of a non-square matrix");
    if n == 0 {
        return Ok(vec![]);
    }
    let mut eigs: Vec<Complex64> = if n == 1 {
        vec![Complex64::new(m[(0, 0)], 0.0)]
    } else {
        let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100 * n * n)
            .ok_or(StabilityError::NonConvergence)?;
        schur.complex_eigenvalues().iter().copied().collect()
    };

    let norm = m.norm();
    let bound = 1e-8 * norm;
    for &e in &eigs {
        let sigma = sigma_min_estimate(m, e);
        if sigma > bound {
            return Err(StabilityError::BackwardError { eig: e, sigma, bound });
        }
    }

    eigs.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.abs().partial_cmp(&b.im.abs()).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(eigs)
}

/// Hyperbolic classification of a reduced spectrum.
pub fn classify(eigs: &[Complex64], eps_hyp: f64) -> StabilityClass {
    if eigs.iter().any(|e| e.re > eps_hyp) {
        StabilityClass::Unstable
    } else if eigs.iter().all(|e| e.re < -eps_hyp) {
        StabilityClass::AsymptoticallyStable
    } else {
        StabilityClass::NonHyperbolicUndecided
    }
}

/// Jacobian, spectrum, classification, and (if unstable) escape direction
/// at one fixed point. Uses the analytic Jacobian when the kind has one.
pub fn assess(
    spec: &ProtocolSpec,
    point: &FixedPoint,
    eps_hyp: f64,
) -> Result<StabilityAssessment, StabilityError> {
    let jac = match reduced_jacobian_analytic(spec, point) {
        Some(j) => j,
        None => reduced_jacobian(spec, point)?,
    };
    let eigenvalues_list = eigenvalues(&jac)?;
    let class = classify(&eigenvalues_list, eps_hyp);
    let unstable_direction = if class == StabilityClass::Unstable {
        let worst = eigenvalues_list
            .iter()
            .copied()
            .max_by(|a, b| a.re.partial_cmp(&b.re).unwrap())
            .expect("unstable spectrum is nonempty");
        let reduced = inverse_iteration(&jac, worst);
        let mut ambient = reduced.clone();
        let tail: Complex64 = -reduced.iter().sum::<Complex64>();
        ambient.push(tail);
        let norm: f64 = ambient.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        Some(ambient.into_iter().map(|c| c / norm).collect())
    } else {
        None
    };
    Ok(StabilityAssessment { eigenvalues: eigenvalues_list, class, unstable_direction })
}

/// Locates fixed points and assesses each one.
pub fn stability_report(
    spec: &ProtocolSpec,
    seeds_per_face: usize,
    eps_hyp: f64,
) -> Result<StabilityReport, StabilityError> {
    let search = find_fixed_points(spec, seeds_per_face);
    let mut entries = Vec::with_capacity(search.points.len());
    for fp in search.points {
        let a = assess(spec, &fp, eps_hyp)?;
        entries.push((fp, a));
    }
    Ok(StabilityReport { entries, continuum_suspected: search.continuum_suspected })
}

// ---------------------------------------------------------------------------
// Complex linear algebra used for the backward-error oracle and eigenvector
// extraction. Kept deliberately independent of the Schur path it checks.

struct ComplexLu {
    n: usize,
    a: Vec<Complex64>,
    perm: Vec<usize>,
    singular: bool,
}

impl ComplexLu {
    fn factor(mut a: Vec<Complex64>, n: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        let scale: f64 = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = a[perm[col] * n + col].norm_sqr();
            for row in (col + 1)..n {
                let mag = a[perm[row] * n + col].norm_sqr();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            perm.swap(col, pivot_row);
            let pidx = perm[col] * n + col;
            if a[pidx].norm_sqr().sqrt() < 1e-300 * scale {
                a[pidx] = Complex64::new(1e-300 * scale, 0.0);
                singular = true;
            }
            let pivot = a[pidx];
            for row in (col + 1)..n {
                let factor = a[perm[row] * n + col] / pivot;
                a[perm[row] * n + col] = factor;
                for j in (col + 1)..n {
                    let upper = a[perm[col] * n + j];
                    a[perm[row] * n + j] -= factor * upper;
                }
            }
        }
        Self { n, a, perm, singular }
    }

    fn from_shifted(m: &DMatrix<f64>, shift: Complex64, conjugate_transpose: bool) -> Self {
        let n = m.nrows();
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut v = Complex64::new(m[(i, j)], 0.0);
                if i == j {
                    v -= shift;
                }
                if conjugate_transpose {
                    a[j * n + i] = v.conj();
                } else {
                    a[i * n + j] = v;
                }
            }
        }
        Self::factor(a, n)
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 1..n {
            for j in 0..i {
                let l = self.a[self.perm[i] * n + j];
                let yj = y[j];
                y[i] -= l * yj;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.a[self.perm[i] * n + j];
                let yj = y[j];
                y[i] -= u * yj;
            }
            y[i] /= self.a[self.perm[i] * n + i];
        }
        y
    }
}

fn deterministic_unit_vector(n: usize) -> Vec<Complex64> {
    // splitmix64 stream; any fixed full-rank-ish start vector works.
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| {
            let re = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let im = (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            Complex64::new(re, im)
        })
        .collect();
    let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut v {
        *c /= norm;
    }
    v
}

/// Estimate of the smallest singular value of `M - phi I` by power
/// iteration on the inverse of its Gram matrix.
fn sigma_min_estimate(m: &DMatrix<f64>, phi: Complex64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let lu = ComplexLu::from_shifted(m, phi, false);
    let lu_h = ComplexLu::from_shifted(m, phi, true);
    if lu.singular || lu_h.singular {
        return 0.0;
    }
    let mut v = deterministic_unit_vector(n);
    let mut sigma = f64::INFINITY;
    for _ in 0..25 {
        let y = lu_h.solve(&v);
        let w = lu.solve(&y);
        let norm: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return 0.0;
        }
        sigma = 1.0 / norm.sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    sigma
}

/// Inverse iteration for an eigenvector of `m` at eigenvalue `phi`.
fn inverse_iteration(m: &DMatrix<f64>, phi: Complex64) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return vec![];
    }
    let lu = ComplexLu::from_shifted(m, phi, false);
    let mut v = deterministic_unit_vector(n);
    for _ in 0..8 {
        let w = lu.solve(&v);
        let norm: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    v
}

/// Convenience: an all-ones immunity matrix makes every point fixed; used
/// in tests and docs.
pub fn flat_immunity(k: usize) -> ImmunityMatrix {
    ImmunityMatrix::constant(k, 1)
}
