//! Exact stationary analysis of configuration-independent protocols.
//!
//! A constant-rate, constant-switch protocol is the forward equation of a
//! continuous-time Markov chain with jump rates `q_ij = lambda_i * p_ij`
//! (off-diagonal) and `q_ii = lambda_i * (p_ii - 1)`. For an irreducible
//! generator the densities converge to the unique stationary distribution
//! regardless of the start, and that distribution solves `x^T Q = 0` with
//! unit total mass.

use crate::protocol::{DensityVector, ProtocolError, ProtocolKind, ProtocolSpec};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("matrix is not a generator: {0}")]
    NotGenerator(String),
    #[error("generator is reducible: no unique stationary distribution")]
    NotIrreducible,
    #[error("linear solve for the stationary distribution failed (singular system)")]
    Singular,
    #[error("stationary residual {residual} exceeds bound {bound}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("stationary solution has a non-positive entry: x[{index}] = {value}")]
    NonPositiveSolution { index: usize, value: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Rate matrix of a continuous-time Markov chain: nonnegative off-diagonal,
/// zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    q: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn new(q: DMatrix<f64>) -> Result<Self, MarkovError> {
        if q.nrows() != q.ncols() || q.nrows() == 0 {
            return Err(MarkovError::NotGenerator(format!(
                "expected nonempty square matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let k = q.nrows();
        for i in 0..k {
            let mut row_sum = 0.0;
            for j in 0..k {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(MarkovError::NotGenerator(format!(
                        "negative off-diagonal q[{i}][{j}] = {}",
                        q[(i, j)]
                    )));
                }
                row_sum += q[(i, j)];
            }
            if row_sum.abs() > 1e-12 {
                return Err(MarkovError::NotGenerator(format!("row {i} sums to {row_sum}")));
            }
        }
        Ok(Self { q })
    }

    pub fn k(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    /// Max row sum of absolute values.
    pub fn norm_inf(&self) -> f64 {
        (0..self.k())
            .map(|i| (0..self.k()).map(|j| self.q[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Builds the jump-rate generator of a constant-specification protocol.
pub fn build_generator(spec: &ProtocolSpec) -> Result<GeneratorMatrix, MarkovError> {
    let ProtocolKind::Mpp { rates, switch } = spec.kind() else {
        return Err(ProtocolError::KindMismatch { op: "build_generator", kind: spec.kind_name() }
            .into());
    };
    let k = spec.k();
    let q = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            rates[i] * (switch[i][i] - 1.0)
        } else {
            rates[i] * switch[i][j]
        }
    });
    GeneratorMatrix::new(q)
}

/// Strong connectivity of the jump graph (edge `i -> j` iff `q_ij > 0`).
pub fn check_irreducible(q: &GeneratorMatrix) -> bool {
    crate::graph::strongly_connected(q.k(), |i, j| i != j && q.get(i, j) > 0.0)
}

/// Unique stationary distribution of an irreducible generator.
///
/// Solves `Q^T x = 0` by dense LU with the last equation replaced by the
/// normalization `sum(x) = 1`, then checks the residual `||x^T Q||_inf`
/// against `1e-12 * ||Q||_inf` and strict positivity.
pub fn stationary_distribution(q: &GeneratorMatrix) -> Result<DensityVector, MarkovError> {
    if !check_irreducible(q) {
        return Err(MarkovError::NotIrreducible);
    }
    let k = q.k();
    let mut a = q.matrix().transpose();
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(MarkovError::Singular)?;

    let norm = q.norm_inf();
    let bound = 1e-12 * norm.max(f64::MIN_POSITIVE);
    let mut residual: f64 = 0.0;
    for j in 0..k {
        let r: f64 = (0..k).map(|i| x[i] * q.get(i, j)).sum();
        residual = residual.max(r.abs());
    }
    if residual > bound {
        return Err(MarkovError::ResidualTooLarge { residual, bound });
    }
    for (i, &v) in x.iter().enumerate() {
        if v <= 0.0 {
            return Err(MarkovError::NonPositiveSolution { index: i, value: v });
        }
    }
    let total: f64 = x.iter().sum();
    DensityVector::new(x.iter().map(|v| v / total).collect())
        .map_err(MarkovError::Protocol)
}
