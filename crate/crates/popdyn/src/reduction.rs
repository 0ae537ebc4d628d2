//! Mean-field right-hand side of pairwise-rule protocols and their
//! constructive reduction to the general switching form.
//!
//! For a rule set over uniformly random ordered encounters, the density of
//! state `i` evolves as
//!
//! ```text
//! dx_i/dt = sum_{(r,m) in A_i} x_r x_m  -  x_i * sum_{(i,m) in B_i} x_m
//! ```
//!
//! where `A_i` collects the left pairs of rules whose right side contains
//! `q_i`, and `B_i` the encounter partners of rules with `q_i` in either
//! left slot.
//!
//! The reduction to rate/switch form is agent-faithful: each switch channel
//! is attributed to the agent that changes state, so a rule
//! `(q_r, q_m) -> (q_r', q_m')` contributes the partner density `x_m` to the
//! numerator of `p_{r -> r'}` and `x_r` to that of `p_{m -> m'}`. Rows of
//! the resulting switch table sum to 1 wherever the rate is positive, which
//! also makes the reduced spec directly usable by the event-driven
//! simulator. Channels that leave one agent's state unchanged are kept on
//! the diagonal; they cancel in the aggregate dynamics.

use crate::protocol::{
    AffineExpr, DensityVector, PppRule, ProtocolError, ProtocolKind, ProtocolSpec, RateExpr,
    SwitchExpr,
};

/// Incidence structure of a rule list, derived deterministically from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleIncidence {
    /// `inflow_pairs[i]`: ordered left pairs `(r, m)` of rules whose right
    /// side contains state `i`.
    pub inflow_pairs: Vec<Vec<(usize, usize)>>,
    /// `outflow_partners[i]`: multiset of partner states over rules with
    /// state `i` in either left slot.
    pub outflow_partners: Vec<Vec<usize>>,
}

impl RuleIncidence {
    pub fn from_rules(k: usize, rules: &[PppRule]) -> Self {
        let mut inflow_pairs = vec![Vec::new(); k];
        let mut outflow_partners = vec![Vec::new(); k];
        for rule in rules {
            let (r, m) = rule.left;
            let (rp, mp) = rule.right;
            inflow_pairs[rp].push((r, m));
            if mp != rp {
                inflow_pairs[mp].push((r, m));
            }
            outflow_partners[r].push(m);
            outflow_partners[m].push(r);
        }
        Self { inflow_pairs, outflow_partners }
    }

    /// Velocity of the rule dynamics at a raw point (no simplex checks).
    pub(crate) fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let k = x.len();
        let mut v = vec![0.0; k];
        for i in 0..k {
            let inflow: f64 = self.inflow_pairs[i].iter().map(|&(r, m)| x[r] * x[m]).sum();
            let outflow: f64 = self.outflow_partners[i].iter().map(|&m| x[m]).sum();
            v[i] = inflow - x[i] * outflow;
        }
        v
    }
}

/// Mean-field velocity of a pairwise-rule protocol at `x`.
pub fn ppp_rhs(spec: &ProtocolSpec, x: &DensityVector) -> Result<Vec<f64>, ProtocolError> {
    let ProtocolKind::Ppp { rules } = spec.kind() else {
        return Err(ProtocolError::KindMismatch { op: "ppp_rhs", kind: spec.kind_name() });
    };
    Ok(RuleIncidence::from_rules(spec.k(), rules).rhs(x))
}

/// Rewrites a pairwise-rule protocol as an equivalent rate/switch protocol.
///
/// The rate of state `i` is the affine sum of its encounter partners'
/// densities; the switch weight `p_ij` is the ratio of the channel numerator
/// over that rate. The reduced spec has identical dynamics: its velocity
/// matches [`ppp_rhs`] to round-off at every simplex point.
pub fn ppp_to_spp(spec: &ProtocolSpec) -> Result<ProtocolSpec, ProtocolError> {
    let ProtocolKind::Ppp { rules } = spec.kind() else {
        return Err(ProtocolError::KindMismatch { op: "ppp_to_spp", kind: spec.kind_name() });
    };
    let k = spec.k();

    // lambda_i coefficients: one unit of x_partner per rule containing i in
    // a left slot.
    let mut rate_coeffs = vec![vec![0.0; k]; k];
    // numer[i][j] coefficients: partner density per channel i -> j.
    let mut numer_coeffs = vec![vec![vec![0.0; k]; k]; k];
    for rule in rules {
        let (r, m) = rule.left;
        let (rp, mp) = rule.right;
        rate_coeffs[r][m] += 1.0;
        rate_coeffs[m][r] += 1.0;
        numer_coeffs[r][rp][m] += 1.0;
        numer_coeffs[m][mp][r] += 1.0;
    }

    let rates: Vec<RateExpr> = rate_coeffs
        .iter()
        .map(|c| RateExpr::Affine(AffineExpr::new(0.0, c.clone())))
        .collect();
    let switch: Vec<Vec<SwitchExpr>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if numer_coeffs[i][j].iter().all(|&c| c == 0.0) {
                        SwitchExpr::Constant(0.0)
                    } else {
                        SwitchExpr::RatioAffine {
                            numer: AffineExpr::new(0.0, numer_coeffs[i][j].clone()),
                            denom: AffineExpr::new(0.0, rate_coeffs[i].clone()),
                        }
                    }
                })
                .collect()
        })
        .collect();

    ProtocolSpec::spp(spec.states().clone(), rates, switch)
}
