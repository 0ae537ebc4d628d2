//! Linear viral protocols: immunity functionals, replicator-form dynamics,
//! the Lotka-Volterra change of variables, and relative-entropy stability
//! certificates.
//!
//! With random pairing and review rate `lambda_i(x) = gamma - delta t_i(x)`,
//! the mean-field dynamics collapse to the replicator form
//! `dx_i/dt = delta (t_i(x) - t(x)) x_i`; the gamma terms cancel on the
//! simplex. A fixed point `x*` is asymptotically stable whenever
//! `sum_i x*_i t_i(x) > t(x)` strictly on a neighborhood: the relative
//! entropy of `x*` against `x` is then a strict Lyapunov function.
//!
//! Certificates here are sample-based evidence, not proofs: the condition
//! is tested on points drawn uniformly from the intersection of the simplex
//! with a metric ball around `x*`, and the smallest observed margin is
//! reported so callers can tighten the radius or the sample count.

use crate::protocol::{DensityVector, ProtocolError, ProtocolKind, ProtocolSpec};
pub use crate::protocol::ImmunityMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples per work chunk; fixed so the sample stream does not depend on
/// the worker count.
const CERT_CHUNK: usize = 256;
/// Margins in `[0, CERT_MARGIN_TOL]` are treated as numerically zero.
const CERT_MARGIN_TOL: f64 = 1e-12;

/// Immunity of an agent in state `i`: `t_i(x) = sum_j a_ij x_j`.
pub fn state_immunity(a: &ImmunityMatrix, x: &DensityVector, i: usize) -> f64 {
    a.row_dot(i, x)
}

/// Population-average immunity `t(x) = sum_i x_i t_i(x) = x^T A x`.
pub fn mean_immunity(a: &ImmunityMatrix, x: &DensityVector) -> f64 {
    a.quadratic_form(x)
}

/// Replicator-form velocity `delta (t_i - t) x_i` of a linear viral spec.
pub fn lvp_rhs(spec: &ProtocolSpec, x: &DensityVector) -> Result<Vec<f64>, ProtocolError> {
    if !matches!(spec.kind(), ProtocolKind::Lvp { .. }) {
        return Err(ProtocolError::KindMismatch { op: "lvp_rhs", kind: spec.kind_name() });
    }
    Ok(crate::dynamics::spp_rhs_raw(spec, x))
}

/// Lotka-Volterra image of a linear viral protocol under the projective
/// change of variables `y_i = x_i / x_pivot`.
#[derive(Debug, Clone, PartialEq)]
pub struct LotkaVolterraSystem {
    /// Eliminated (pivot) state index.
    pub pivot: usize,
    /// Intrinsic rates `r_i = delta (a_{i,pivot} - a_{pivot,pivot})`.
    pub intrinsic: Vec<f64>,
    /// Interaction matrix `B_ij = delta (a_ij - a_{pivot,j})`.
    pub interaction: Vec<Vec<f64>>,
}

impl LotkaVolterraSystem {
    pub fn dim(&self) -> usize {
        self.intrinsic.len()
    }

    /// `dy_i/dtau = y_i (r_i + sum_j B_ij y_j)`.
    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let interaction: f64 =
                    (0..d).map(|j| self.interaction[i][j] * y[j]).sum();
                y[i] * (self.intrinsic[i] + interaction)
            })
            .collect()
    }
}

/// Maps a linear viral protocol onto its Lotka-Volterra form.
///
/// The correspondence holds under the time change `dtau = x_pivot dt`:
/// trajectories of the mapped system in rescaled time reproduce the density
/// ratios `x_i(t) / x_pivot(t)` of the original dynamics as long as the
/// pivot density stays positive.
pub fn to_lotka_volterra(
    spec: &ProtocolSpec,
    pivot: Option<usize>,
) -> Result<LotkaVolterraSystem, ProtocolError> {
    let ProtocolKind::Lvp { immunity, delta, .. } = spec.kind() else {
        return Err(ProtocolError::KindMismatch {
            op: "to_lotka_volterra",
            kind: spec.kind_name(),
        });
    };
    let k = spec.k();
    let pivot = pivot.unwrap_or(k - 1);
    if pivot >= k {
        return Err(ProtocolError::Shape(format!("pivot {pivot} out of range (k = {k})")));
    }
    let others: Vec<usize> = (0..k).filter(|&i| i != pivot).collect();
    let intrinsic = others
        .iter()
        .map(|&i| delta * (immunity.get(i, pivot) - immunity.get(pivot, pivot)) as f64)
        .collect();
    let interaction = others
        .iter()
        .map(|&i| {
            others
                .iter()
                .map(|&j| delta * (immunity.get(i, j) - immunity.get(pivot, j)) as f64)
                .collect()
        })
        .collect();
    Ok(LotkaVolterraSystem { pivot, intrinsic, interaction })
}

/// Relative entropy `E(x) = -sum_i x*_i ln(x_i / x*_i)`.
///
/// Nonnegative, zero exactly at `x = x*`. Returns `+inf` when `x` lacks
/// support where `x*` has mass; trajectories approaching a face are a
/// legitimate analysis outcome, not an error.
pub fn relative_entropy(x_star: &DensityVector, x: &DensityVector) -> f64 {
    assert_eq!(x_star.len(), x.len(), "dimension mismatch");
    let mut e = 0.0;
    for (&s, &v) in x_star.iter().zip(x.iter()) {
        if s > 0.0 {
            if v <= 0.0 {
                return f64::INFINITY;
            }
            e -= s * (v / s).ln();
        }
    }
    e
}

/// The certificate condition margin `sum_i x*_i t_i(x) - t(x)`; positive
/// margin at `x` means the entropy strictly decreases there.
pub fn condition_margin(a: &ImmunityMatrix, x_star: &DensityVector, x: &DensityVector) -> f64 {
    let k = x.len();
    let weighted: f64 = (0..k).map(|i| x_star[i] * a.row_dot(i, x)).sum();
    weighted - a.quadratic_form(x)
}

/// Whether `x` satisfies the replicator fixed-point condition
/// `t_i(x) = t(x)` on its support, within `tol`.
pub fn is_replicator_fixed_point(
    spec: &ProtocolSpec,
    x: &DensityVector,
    tol: f64,
) -> Result<bool, ProtocolError> {
    let ProtocolKind::Lvp { immunity, .. } = spec.kind() else {
        return Err(ProtocolError::KindMismatch {
            op: "is_replicator_fixed_point",
            kind: spec.kind_name(),
        });
    };
    let t_bar = immunity.quadratic_form(x);
    Ok(x.iter()
        .enumerate()
        .all(|(i, &xi)| xi <= 0.0 || (immunity.row_dot(i, x) - t_bar).abs() <= tol))
}

/// Certificate outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum CertificateOutcome {
    /// Strict positive margin at every sample.
    Certified { radius: f64, samples: usize },
    /// A sample with negative margin; the first one in sample order.
    Refuted { witness: DensityVector },
    /// Some margin was numerically zero (or no sample could be drawn).
    Inconclusive,
}

/// Sampled evidence for or against the entropy-descent condition near `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovVerdict {
    pub outcome: CertificateOutcome,
    /// Smallest margin observed across all samples.
    pub margin: f64,
    /// Number of samples actually drawn.
    pub samples_drawn: usize,
}

impl LyapunovVerdict {
    /// Plain-text report block: verdict, ball radius, sample count, worst
    /// margin, and the witness when one exists.
    pub fn to_report(&self, names: &[String], radius: f64) -> String {
        let mut out = String::new();
        match &self.outcome {
            CertificateOutcome::Certified { .. } => {
                out.push_str("verdict: certified (sampled evidence, not a proof)\n");
            }
            CertificateOutcome::Refuted { .. } => out.push_str("verdict: refuted\n"),
            CertificateOutcome::Inconclusive => out.push_str("verdict: inconclusive\n"),
        }
        out.push_str(&format!("radius: {radius}\n"));
        out.push_str(&format!("samples: {}\n", self.samples_drawn));
        out.push_str(&format!("min margin: {}\n", self.margin));
        if let CertificateOutcome::Refuted { witness } = &self.outcome {
            out.push_str("witness:");
            for (n, v) in names.iter().zip(witness.iter()) {
                out.push_str(&format!(" {n}={v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Orthonormal basis of the simplex tangent space `{v : sum v_i = 0}`.
fn tangent_basis(k: usize) -> Vec<Vec<f64>> {
    // Helmert vectors: the j-th has j leading entries 1 and then -j.
    (1..k)
        .map(|j| {
            let scale = 1.0 / ((j * (j + 1)) as f64).sqrt();
            let mut v = vec![0.0; k];
            for cell in v.iter_mut().take(j) {
                *cell = scale;
            }
            v[j] = -(j as f64) * scale;
            v
        })
        .collect()
}

struct ChunkResult {
    min_margin: f64,
    drawn: usize,
    /// `(global sample index, witness)` of the first negative margin.
    violation: Option<(usize, Vec<f64>)>,
    saw_borderline: bool,
}

fn sample_chunk(
    a: &ImmunityMatrix,
    x_star: &DensityVector,
    basis: &[Vec<f64>],
    radius: f64,
    seed: u64,
    chunk: usize,
    quota: usize,
) -> ChunkResult {
    let k = x_star.len();
    let dim = k - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    let mut result = ChunkResult {
        min_margin: f64::INFINITY,
        drawn: 0,
        violation: None,
        saw_borderline: false,
    };
    let mut attempts = 0usize;
    // Rejection beyond 1e4 tries per sample means the ball barely meets the
    // simplex; the verdict then carries the smaller actual sample count.
    let max_attempts = 10_000 * quota.max(1);
    while result.drawn < quota && attempts < max_attempts {
        attempts += 1;
        // Uniform point in the radius-ball of the tangent space: Gaussian
        // direction, radial factor U^(1/dim).
        let mut z: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
        for v in &mut z {
            *v *= r / norm;
        }
        let mut x = x_star.to_vec();
        for (j, b) in basis.iter().enumerate() {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += z[j] * bi;
            }
        }
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let x_vec = match DensityVector::new(x.clone()) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let m = condition_margin(a, x_star, &x_vec);
        let global_index = chunk * CERT_CHUNK + result.drawn;
        result.drawn += 1;
        result.min_margin = result.min_margin.min(m);
        if m < 0.0 {
            if result.violation.is_none() {
                result.violation = Some((global_index, x));
            }
        } else if m <= CERT_MARGIN_TOL {
            result.saw_borderline = true;
        }
    }
    result
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] avoids ln(0).
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Samples the entropy-descent condition on the ball of the given radius
/// around the fixed point `x_star`.
///
/// Deterministic for a given seed and independent of the worker count:
/// samples are drawn in fixed-size chunks with per-chunk derived streams
/// and merged in sample order (the first refutation wins).
pub fn lyapunov_certificate(
    spec: &ProtocolSpec,
    x_star: &DensityVector,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<LyapunovVerdict, ProtocolError> {
    let ProtocolKind::Lvp { immunity, .. } = spec.kind() else {
        return Err(ProtocolError::KindMismatch {
            op: "lyapunov_certificate",
            kind: spec.kind_name(),
        });
    };
    if x_star.len() != spec.k() {
        return Err(ProtocolError::Shape(format!(
            "fixed point has {} entries for {} states",
            x_star.len(),
            spec.k()
        )));
    }
    if spec.k() < 2 || samples == 0 || !(radius > 0.0) {
        return Ok(LyapunovVerdict {
            outcome: CertificateOutcome::Inconclusive,
            margin: 0.0,
            samples_drawn: 0,
        });
    }

    let basis = tangent_basis(spec.k());
    let chunks = samples.div_ceil(CERT_CHUNK);
    let results: Vec<ChunkResult> = crate::par::map_indexed(chunks, |c| {
        let quota = CERT_CHUNK.min(samples - c * CERT_CHUNK);
        sample_chunk(immunity, x_star, &basis, radius, seed, c, quota)
    });

    let mut min_margin = f64::INFINITY;
    let mut drawn = 0;
    let mut violation: Option<(usize, Vec<f64>)> = None;
    let mut borderline = false;
    for r in results {
        min_margin = min_margin.min(r.min_margin);
        drawn += r.drawn;
        borderline |= r.saw_borderline;
        if let Some((idx, w)) = r.violation {
            if violation.as_ref().map_or(true, |(best, _)| idx < *best) {
                violation = Some((idx, w));
            }
        }
    }

    let outcome = if let Some((_, w)) = violation {
        CertificateOutcome::Refuted {
            witness: DensityVector::new(w).expect("witness lies on the simplex"),
        }
    } else if drawn == 0 || borderline {
        CertificateOutcome::Inconclusive
    } else {
        CertificateOutcome::Certified { radius, samples: drawn }
    };
    Ok(LyapunovVerdict {
        outcome,
        margin: if drawn == 0 { 0.0 } else { min_margin },
        samples_drawn: drawn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{spp_rhs_generic, spp_rhs};
    use crate::protocol::StateSet;

    fn states(k: usize) -> StateSet {
        StateSet::new((0..k).map(|i| format!("s{}", i + 1)).collect()).unwrap()
    }

    fn lvp(a: ImmunityMatrix, gamma: f64, delta: f64) -> ProtocolSpec {
        let k = a.k();
        ProtocolSpec::lvp(states(k), a, gamma, delta).unwrap()
    }

    fn neg_identity(k: usize) -> ImmunityMatrix {
        let mut a = ImmunityMatrix::constant(k, 0);
        for i in 0..k {
            a.set(i, i, -1);
        }
        a
    }

    #[test]
    fn immunity_values() {
        let ones = ImmunityMatrix::constant(3, 1);
        let x = DensityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((state_immunity(&ones, &x, 0) - 1.0).abs() < 1e-15);
        assert!((mean_immunity(&ones, &x) - 1.0).abs() < 1e-15);

        let id = ImmunityMatrix::identity(2);
        let x = DensityVector::new(vec![0.6, 0.4]).unwrap();
        assert!((state_immunity(&id, &x, 0) - 0.6).abs() < 1e-15);
        assert!((mean_immunity(&id, &x) - 0.52).abs() < 1e-15);

        let mut off = ImmunityMatrix::constant(2, 0);
        off.set(0, 1, 3);
        off.set(1, 0, 3);
        let half = DensityVector::uniform(2);
        assert!((state_immunity(&off, &half, 0) - 1.5).abs() < 1e-15);

        let id4 = ImmunityMatrix::identity(4);
        assert!((mean_immunity(&id4, &DensityVector::uniform(4)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn replicator_velocity_identity_immunity() {
        let spec = lvp(ImmunityMatrix::identity(2), 5.0, 1.0);
        let x = DensityVector::new(vec![0.6, 0.4]).unwrap();
        let v = lvp_rhs(&spec, &x).unwrap();
        assert!((v[0] - 0.048).abs() < 1e-15, "{v:?}");
        assert!((v[1] + 0.048).abs() < 1e-15, "{v:?}");
    }

    #[test]
    fn faces_are_invariant() {
        let spec = lvp(ImmunityMatrix::identity(3), 5.0, 1.0);
        let x = DensityVector::new(vec![0.0, 0.3, 0.7]).unwrap();
        let v = lvp_rhs(&spec, &x).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn gamma_cancels_in_the_dynamics() {
        let x = DensityVector::new(vec![0.5, 0.2, 0.3]).unwrap();
        let a = lvp(ImmunityMatrix::identity(3), 2.0, 1.0);
        let b = lvp(ImmunityMatrix::identity(3), 50.0, 1.0);
        let va = lvp_rhs(&a, &x).unwrap();
        let vb = lvp_rhs(&b, &x).unwrap();
        for (u, v) in va.iter().zip(&vb) {
            assert!((u - v).abs() < 1e-13);
        }
        // And the closed form matches the generic inflow/outflow evaluation.
        let generic = spp_rhs_generic(&a, &x).unwrap();
        let special = spp_rhs(&a, &x).unwrap();
        for (u, v) in generic.iter().zip(&special) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn lv_map_of_flat_immunity_is_trivial() {
        let spec = lvp(ImmunityMatrix::constant(3, 1), 2.0, 1.0);
        let lv = to_lotka_volterra(&spec, None).unwrap();
        assert_eq!(lv.pivot, 2);
        assert!(lv.intrinsic.iter().all(|&r| r == 0.0));
        assert!(lv.interaction.iter().flatten().all(|&b| b == 0.0));
    }

    #[test]
    fn lv_map_identity_two_states() {
        let spec = lvp(ImmunityMatrix::identity(2), 5.0, 1.0);
        let lv = to_lotka_volterra(&spec, Some(1)).unwrap();
        assert_eq!(lv.dim(), 1);
        assert_eq!(lv.intrinsic[0], -1.0);
        assert_eq!(lv.interaction[0][0], 1.0);
    }

    #[test]
    fn entropy_zero_at_center_and_positive_elsewhere() {
        let star = DensityVector::uniform(2);
        assert_eq!(relative_entropy(&star, &star), 0.0);
        let x = DensityVector::new(vec![0.9, 0.1]).unwrap();
        let e = relative_entropy(&star, &x);
        assert!((e - 0.5108256237659906).abs() < 1e-12, "e = {e}");
        let face = DensityVector::vertex(2, 0);
        assert!(relative_entropy(&star, &face).is_infinite());
    }

    #[test]
    fn certificate_negative_identity_is_certified() {
        let spec = lvp(neg_identity(3), 1.0, 1.0);
        let star = DensityVector::uniform(3);
        let verdict = lyapunov_certificate(&spec, &star, 0.05, 2000, 7).unwrap();
        assert!(
            matches!(verdict.outcome, CertificateOutcome::Certified { samples: 2000, .. }),
            "{verdict:?}"
        );
        assert!(verdict.margin > 0.0);
    }

    #[test]
    fn certificate_identity_is_refuted() {
        let spec = lvp(ImmunityMatrix::identity(3), 1.0, 1.0);
        let star = DensityVector::uniform(3);
        let verdict = lyapunov_certificate(&spec, &star, 0.05, 2000, 7).unwrap();
        let CertificateOutcome::Refuted { witness } = &verdict.outcome else {
            panic!("{verdict:?}");
        };
        let ProtocolKind::Lvp { immunity, .. } = spec.kind() else { unreachable!() };
        assert!(condition_margin(immunity, &star, witness) < 0.0);
    }

    #[test]
    fn certificate_flat_immunity_is_inconclusive() {
        let spec = lvp(ImmunityMatrix::constant(3, 1), 2.0, 1.0);
        let star = DensityVector::uniform(3);
        let verdict = lyapunov_certificate(&spec, &star, 0.05, 500, 7).unwrap();
        assert_eq!(verdict.outcome, CertificateOutcome::Inconclusive);
        assert!(verdict.margin.abs() < 1e-12);
    }

    #[test]
    fn certificate_is_seed_deterministic() {
        let spec = lvp(neg_identity(3), 1.0, 1.0);
        let star = DensityVector::uniform(3);
        let a = lyapunov_certificate(&spec, &star, 0.05, 1000, 42).unwrap();
        let b = lyapunov_certificate(&spec, &star, 0.05, 1000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_point_predicate() {
        let spec = lvp(ImmunityMatrix::identity(3), 5.0, 1.0);
        assert!(is_replicator_fixed_point(&spec, &DensityVector::uniform(3), 1e-9).unwrap());
        assert!(is_replicator_fixed_point(&spec, &DensityVector::vertex(3, 0), 1e-9).unwrap());
        let x = DensityVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(!is_replicator_fixed_point(&spec, &x, 1e-9).unwrap());
    }
}
