//! Protocol specification types.
//!
//! A [`ProtocolSpec`] is the single source of truth for every analysis in
//! this crate. It comes in four kinds:
//!
//! * `Ppp`: pairwise-interaction rules `(r, m) -> (r', m')` over uniformly
//!   random ordered encounters,
//! * `Spp`: the general switching form, with per-state review rates
//!   `lambda_i(x)` and switch weights `p_ij(x)` drawn from a closed family
//!   of evaluable expressions,
//! * `Mpp`: the configuration-independent special case (constant rates and
//!   row-stochastic switch probabilities),
//! * `Lvp`: random-pairing protocols whose review rate decreases linearly
//!   in the agent's immunity, `lambda_i(x) = gamma - delta * t_i(x)`.
//!
//! Rate and switch functions are restricted to a closed expression family
//! (constants, affine forms, linear-immunity forms, random pairing, and
//! ratios of affine forms) rather than an arbitrary expression language.
//! Every form is exact to evaluate, Lipschitz on the simplex, and
//! analytically differentiable, which keeps downstream well-posedness and
//! Jacobian machinery honest.

use thiserror::Error;

/// Tolerance on `sum(x) == 1` accepted by [`DensityVector::new`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

/// Errors raised by protocol construction and evaluation.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid state set: {0}")]
    InvalidStates(String),
    #[error("invalid density vector: {0}")]
    InvalidDensity(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("operation `{op}` is not defined for kind `{kind}`")]
    KindMismatch { op: &'static str, kind: &'static str },
    #[error("negative {what} evaluation for state index {state}: {value}")]
    NegativeEvaluation {
        what: &'static str,
        state: usize,
        value: f64,
    },
}

/// Ordered set of distinct state identifiers; index `i` is the canonical
/// handle for the i-th state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet {
    names: Vec<String>,
}

impl StateSet {
    /// Builds a state set from distinct, nonempty names.
    ///
    /// Names may not contain whitespace, `,`, `/`, or `#` so they can be
    /// embedded verbatim in the protocol file format and CSV headers.
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self, ProtocolError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ProtocolError::InvalidStates("no states given".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(ProtocolError::InvalidStates(format!("state {i} has an empty name")));
            }
            if n.chars().any(|c| c.is_whitespace() || c == ',' || c == '/' || c == '#') {
                return Err(ProtocolError::InvalidStates(format!(
                    "state name `{n}` contains a reserved character"
                )));
            }
            if names[..i].contains(n) {
                return Err(ProtocolError::InvalidStates(format!("duplicate state name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    /// Number of states `k`.
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A point on the probability simplex: `x_i >= 0`, `sum(x) = 1` within
/// [`SIMPLEX_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector(Vec<f64>);

impl DensityVector {
    pub fn new(x: Vec<f64>) -> Result<Self, ProtocolError> {
        if x.is_empty() {
            return Err(ProtocolError::InvalidDensity("empty vector".into()));
        }
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProtocolError::InvalidDensity(format!("entry {i} is not finite")));
            }
            if v < 0.0 {
                return Err(ProtocolError::InvalidDensity(format!("entry {i} is negative: {v}")));
            }
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(ProtocolError::InvalidDensity(format!(
                "entries sum to {sum}, expected 1 within {SIMPLEX_SUM_TOL:e}"
            )));
        }
        Ok(Self(x))
    }

    /// The uniform distribution over `k` states.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "need at least one state");
        Self(vec![1.0 / k as f64; k])
    }

    /// The vertex `e_i` of the simplex.
    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k, "vertex index out of range");
        let mut x = vec![0.0; k];
        x[i] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for DensityVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for DensityVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One pairwise-interaction rule `(r, m) -> (r', m')`.
///
/// The first agent of the ordered encounter moves `r -> r'`, the second
/// moves `m -> m'`. Left and right states must differ within each pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PppRule {
    pub left: (usize, usize),
    pub right: (usize, usize),
}

impl PppRule {
    pub fn new(left: (usize, usize), right: (usize, usize)) -> Self {
        Self { left, right }
    }
}

/// Affine form `c0 + sum_j coeffs[j] * x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub c0: f64,
    pub coeffs: Vec<f64>,
}

impl AffineExpr {
    pub fn new(c0: f64, coeffs: Vec<f64>) -> Self {
        Self { c0, coeffs }
    }

    pub fn constant(c0: f64, k: usize) -> Self {
        Self { c0, coeffs: vec![0.0; k] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.coeffs.len(), x.len());
        self.c0 + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Review-rate expression `lambda_i(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateExpr {
    Constant(f64),
    Affine(AffineExpr),
    /// `gamma - delta * sum_j row[j] * x_j` with `delta > 0`.
    LinearImmunity {
        gamma: f64,
        delta: f64,
        row: Vec<i64>,
    },
}

impl RateExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RateExpr::Constant(c) => *c,
            RateExpr::Affine(a) => a.eval(x),
            RateExpr::LinearImmunity { gamma, delta, row } => {
                gamma - delta * row.iter().zip(x).map(|(&a, v)| a as f64 * v).sum::<f64>()
            }
        }
    }

    /// Value at vertex `e_j`; rate expressions are affine, so nonnegativity
    /// at every vertex implies nonnegativity on the whole simplex.
    pub fn eval_at_vertex(&self, j: usize) -> f64 {
        match self {
            RateExpr::Constant(c) => *c,
            RateExpr::Affine(a) => a.c0 + a.coeffs[j],
            RateExpr::LinearImmunity { gamma, delta, row } => gamma - delta * row[j] as f64,
        }
    }
}

/// Switch-weight expression `p_ij(x)` for the table cell `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchExpr {
    Constant(f64),
    /// Random pairing: the weight of switching to `q_j` is `x_j`.
    Pairing,
    /// `numer(x) / denom(x)` with the convention that a zero denominator
    /// yields 0 (at such points no agent of the row state reviews, so the
    /// weight never enters the dynamics).
    RatioAffine { numer: AffineExpr, denom: AffineExpr },
}

impl SwitchExpr {
    /// Evaluates the cell; `target` is the column index `j`.
    pub fn eval(&self, target: usize, x: &[f64]) -> f64 {
        match self {
            SwitchExpr::Constant(p) => *p,
            SwitchExpr::Pairing => x[target],
            SwitchExpr::RatioAffine { numer, denom } => {
                let d = denom.eval(x);
                if d == 0.0 {
                    0.0
                } else {
                    numer.eval(x) / d
                }
            }
        }
    }
}

/// Symmetric integer matrix of pairwise immunities `a_ij`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImmunityMatrix {
    k: usize,
    entries: Vec<i64>,
}

impl ImmunityMatrix {
    /// Builds from rows; must be square. Symmetry is a semantic invariant
    /// checked by [`ProtocolSpec::validate`], not here, so that asymmetric
    /// inputs can be represented and reported.
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self, ProtocolError> {
        let k = rows.len();
        if k == 0 {
            return Err(ProtocolError::Shape("immunity matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(ProtocolError::Shape(format!(
                    "immunity row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { k, entries })
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self { k, entries: vec![0; k * k] };
        for i in 0..k {
            m.entries[i * k + i] = 1;
        }
        m
    }

    pub fn constant(k: usize, value: i64) -> Self {
        Self { k, entries: vec![value; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.entries[i * self.k + j] = v;
    }

    pub fn max_entry(&self) -> i64 {
        *self.entries.iter().max().expect("nonempty")
    }

    /// `t_i(x) = sum_j a_ij x_j`, the immunity of an agent in state `i`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.k);
        (0..self.k).map(|j| self.get(i, j) as f64 * x[j]).sum()
    }

    /// `t(x) = x^T A x`, the population-average immunity.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.k).map(|i| x[i] * self.row_dot(i, x)).sum()
    }
}

/// The four protocol kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolKind {
    Ppp {
        rules: Vec<PppRule>,
    },
    Spp {
        rates: Vec<RateExpr>,
        /// `switch[i][j]` is the weight of switching from state i to j.
        switch: Vec<Vec<SwitchExpr>>,
    },
    Mpp {
        rates: Vec<f64>,
        /// Row-stochastic constant switch probabilities.
        switch: Vec<Vec<f64>>,
    },
    Lvp {
        immunity: ImmunityMatrix,
        gamma: f64,
        delta: f64,
    },
}

/// A validated-shape protocol specification. Semantic invariants (row sums,
/// symmetry, nonnegativity on the simplex) are checked by [`ProtocolSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    states: StateSet,
    kind: ProtocolKind,
}

impl ProtocolSpec {
    pub fn ppp(states: StateSet, rules: Vec<PppRule>) -> Result<Self, ProtocolError> {
        let k = states.k();
        for (idx, r) in rules.iter().enumerate() {
            for s in [r.left.0, r.left.1, r.right.0, r.right.1] {
                if s >= k {
                    return Err(ProtocolError::Shape(format!(
                        "rule {idx} references state index {s}, but k = {k}"
                    )));
                }
            }
        }
        Ok(Self { states, kind: ProtocolKind::Ppp { rules } })
    }

    pub fn spp(
        states: StateSet,
        rates: Vec<RateExpr>,
        switch: Vec<Vec<SwitchExpr>>,
    ) -> Result<Self, ProtocolError> {
        let k = states.k();
        if rates.len() != k {
            return Err(ProtocolError::Shape(format!("{} rates for {k} states", rates.len())));
        }
        if switch.len() != k || switch.iter().any(|row| row.len() != k) {
            return Err(ProtocolError::Shape(format!("switch table is not {k}x{k}")));
        }
        let affine_len_ok = |a: &AffineExpr| a.coeffs.len() == k;
        for (i, r) in rates.iter().enumerate() {
            let ok = match r {
                RateExpr::Constant(_) => true,
                RateExpr::Affine(a) => affine_len_ok(a),
                RateExpr::LinearImmunity { row, .. } => row.len() == k,
            };
            if !ok {
                return Err(ProtocolError::Shape(format!("rate {i} has wrong coefficient arity")));
            }
        }
        for (i, row) in switch.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                if let SwitchExpr::RatioAffine { numer, denom } = s {
                    if !affine_len_ok(numer) || !affine_len_ok(denom) {
                        return Err(ProtocolError::Shape(format!(
                            "switch ({i},{j}) has wrong coefficient arity"
                        )));
                    }
                }
            }
        }
        Ok(Self { states, kind: ProtocolKind::Spp { rates, switch } })
    }

    pub fn mpp(
        states: StateSet,
        rates: Vec<f64>,
        switch: Vec<Vec<f64>>,
    ) -> Result<Self, ProtocolError> {
        let k = states.k();
        if rates.len() != k {
            return Err(ProtocolError::Shape(format!("{} rates for {k} states", rates.len())));
        }
        if switch.len() != k || switch.iter().any(|row| row.len() != k) {
            return Err(ProtocolError::Shape(format!("switch matrix is not {k}x{k}")));
        }
        Ok(Self { states, kind: ProtocolKind::Mpp { rates, switch } })
    }

    pub fn lvp(
        states: StateSet,
        immunity: ImmunityMatrix,
        gamma: f64,
        delta: f64,
    ) -> Result<Self, ProtocolError> {
        if immunity.k() != states.k() {
            return Err(ProtocolError::Shape(format!(
                "immunity matrix is {}x{} but k = {}",
                immunity.k(),
                immunity.k(),
                states.k()
            )));
        }
        Ok(Self { states, kind: ProtocolKind::Lvp { immunity, gamma, delta } })
    }

    pub fn states(&self) -> &StateSet {
        &self.states
    }

    pub fn k(&self) -> usize {
        self.states.k()
    }

    pub fn kind(&self) -> &ProtocolKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ProtocolKind::Ppp { .. } => "ppp",
            ProtocolKind::Spp { .. } => "spp",
            ProtocolKind::Mpp { .. } => "mpp",
            ProtocolKind::Lvp { .. } => "lvp",
        }
    }

    /// Review rate `lambda_i(x)`.
    ///
    /// Defined for the switching kinds (`spp`, `mpp`, `lvp`); pairwise-rule
    /// protocols have no direct rate form and must be reduced first.
    /// Tiny negative round-off (within `-1e-9` of zero, scaled) clamps to 0;
    /// anything more negative is an invariant breach and errors.
    pub fn eval_rate(&self, i: usize, x: &DensityVector) -> Result<f64, ProtocolError> {
        self.check_state_index(i)?;
        let v = match &self.kind {
            ProtocolKind::Ppp { .. } => {
                return Err(ProtocolError::KindMismatch { op: "eval_rate", kind: "ppp" })
            }
            _ => self.rate_raw(i, x),
        };
        guard_nonnegative(v, "rate", i)
    }

    /// Switch weight `p_ij(x)`; same conventions as [`Self::eval_rate`].
    pub fn eval_switch(&self, i: usize, j: usize, x: &DensityVector) -> Result<f64, ProtocolError> {
        self.check_state_index(i)?;
        self.check_state_index(j)?;
        let v = match &self.kind {
            ProtocolKind::Ppp { .. } => {
                return Err(ProtocolError::KindMismatch { op: "eval_switch", kind: "ppp" })
            }
            _ => self.switch_raw(i, j, x),
        };
        guard_nonnegative(v, "switch", i)
    }

    fn check_state_index(&self, i: usize) -> Result<(), ProtocolError> {
        if i >= self.k() {
            return Err(ProtocolError::Shape(format!("state index {i} out of range (k = {})", self.k())));
        }
        Ok(())
    }

    /// Raw rate evaluation without domain checks; used by the dynamics and
    /// Jacobian machinery, which probes slightly off the simplex.
    /// Panics on `ppp` kind.
    pub(crate) fn rate_raw(&self, i: usize, x: &[f64]) -> f64 {
        match &self.kind {
            ProtocolKind::Ppp { .. } => unreachable!("rate_raw on ppp kind"),
            ProtocolKind::Spp { rates, .. } => rates[i].eval(x),
            ProtocolKind::Mpp { rates, .. } => rates[i],
            ProtocolKind::Lvp { immunity, gamma, delta } => gamma - delta * immunity.row_dot(i, x),
        }
    }

    /// Raw switch evaluation; see [`Self::rate_raw`].
    pub(crate) fn switch_raw(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        match &self.kind {
            ProtocolKind::Ppp { .. } => unreachable!("switch_raw on ppp kind"),
            ProtocolKind::Spp { switch, .. } => switch[i][j].eval(j, x),
            ProtocolKind::Mpp { switch, .. } => switch[i][j],
            ProtocolKind::Lvp { .. } => x[j],
        }
    }

    /// Checks every semantic invariant and reports all violations.
    /// Violations are data, not failures: an invalid spec is representable
    /// so that its problems can be listed in one pass.
    pub fn validate(&self) -> ValidationReport {
        let k = self.k();
        let mut violations = Vec::new();
        let mut warnings = Vec::new();
        match &self.kind {
            ProtocolKind::Ppp { rules } => {
                for (idx, r) in rules.iter().enumerate() {
                    if r.left.0 == r.left.1 {
                        violations.push(Violation::SelfPairLeft { rule: idx, state: r.left.0 });
                    }
                    if r.right.0 == r.right.1 {
                        violations.push(Violation::SelfPairRight { rule: idx, state: r.right.0 });
                    }
                    for (prev_idx, prev) in rules[..idx].iter().enumerate() {
                        if prev.left == r.left {
                            violations.push(Violation::DuplicateLeftPair {
                                rule_a: prev_idx,
                                rule_b: idx,
                                left: r.left,
                            });
                        }
                    }
                }
            }
            ProtocolKind::Spp { rates, switch } => {
                for (i, r) in rates.iter().enumerate() {
                    if let RateExpr::LinearImmunity { delta, .. } = r {
                        if *delta <= 0.0 {
                            violations.push(Violation::NonPositiveDelta { delta: *delta });
                        }
                    }
                    for v in 0..k {
                        let val = r.eval_at_vertex(v);
                        if val < 0.0 {
                            violations.push(Violation::NegativeRateAtVertex {
                                state: i,
                                vertex: v,
                                value: val,
                            });
                        }
                    }
                }
                for (i, row) in switch.iter().enumerate() {
                    for (j, s) in row.iter().enumerate() {
                        match s {
                            SwitchExpr::Constant(p) => {
                                if *p < 0.0 {
                                    violations.push(Violation::NegativeSwitch {
                                        from: i,
                                        to: j,
                                        value: *p,
                                    });
                                }
                            }
                            SwitchExpr::Pairing => {}
                            SwitchExpr::RatioAffine { numer, denom } => {
                                // Nonnegative numerator and denominator at every
                                // vertex make the ratio nonnegative on the simplex.
                                for v in 0..k {
                                    for (part, a) in [("numerator", numer), ("denominator", denom)] {
                                        let val = a.c0 + a.coeffs[v];
                                        if val < 0.0 {
                                            violations.push(Violation::NegativeRatioPart {
                                                from: i,
                                                to: j,
                                                part,
                                                vertex: v,
                                                value: val,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ProtocolKind::Mpp { rates, switch } => {
                for (i, &l) in rates.iter().enumerate() {
                    if l <= 0.0 {
                        violations.push(Violation::NonPositiveRate { state: i, value: l });
                    }
                }
                for (i, row) in switch.iter().enumerate() {
                    for (j, &p) in row.iter().enumerate() {
                        if p < 0.0 {
                            violations.push(Violation::NegativeSwitch { from: i, to: j, value: p });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-12 {
                        violations.push(Violation::NonStochasticRow { state: i, sum });
                    }
                }
                // Uniqueness of the steady state needs irreducibility, which is
                // weaker than requiring every off-diagonal jump rate positive.
                let has_zero_offdiag = (0..k).any(|i| {
                    (0..k).any(|j| i != j && rates[i] * switch[i][j] == 0.0)
                });
                if violations.is_empty() && has_zero_offdiag {
                    let irreducible = crate::graph::strongly_connected(k, |i, j| {
                        i != j && rates[i] * switch[i][j] > 0.0
                    });
                    if irreducible {
                        warnings.push(
                            "some off-diagonal jump rates are zero; uniqueness of the steady \
                             state still holds because the jump graph is strongly connected"
                                .to_string(),
                        );
                    }
                }
            }
            ProtocolKind::Lvp { immunity, gamma, delta } => {
                for i in 0..k {
                    for j in (i + 1)..k {
                        let (a_ij, a_ji) = (immunity.get(i, j), immunity.get(j, i));
                        if a_ij != a_ji {
                            violations.push(Violation::AsymmetricImmunity { i, j, a_ij, a_ji });
                        }
                    }
                }
                if *delta <= 0.0 {
                    violations.push(Violation::NonPositiveDelta { delta: *delta });
                } else {
                    // lambda_i(x) = gamma - delta * t_i(x) is affine; nonnegativity at
                    // every vertex (gamma/delta >= a_ij for all i,j) covers the simplex.
                    for i in 0..k {
                        for j in 0..k {
                            let a = immunity.get(i, j);
                            if gamma / delta < a as f64 {
                                violations.push(Violation::ImmunityBoundExceeded {
                                    i,
                                    j,
                                    a_ij: a,
                                    bound: gamma / delta,
                                });
                            }
                        }
                    }
                }
            }
        }
        ValidationReport { violations, warnings }
    }
}

fn guard_nonnegative(v: f64, what: &'static str, state: usize) -> Result<f64, ProtocolError> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -1e-9 {
        // Round-off from a convex combination of nonnegative vertex values.
        Ok(0.0)
    } else {
        Err(ProtocolError::NegativeEvaluation { what, state, value: v })
    }
}

/// One invariant violation found by [`ProtocolSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfPairLeft { rule: usize, state: usize },
    SelfPairRight { rule: usize, state: usize },
    DuplicateLeftPair { rule_a: usize, rule_b: usize, left: (usize, usize) },
    NegativeRateAtVertex { state: usize, vertex: usize, value: f64 },
    NegativeSwitch { from: usize, to: usize, value: f64 },
    NegativeRatioPart { from: usize, to: usize, part: &'static str, vertex: usize, value: f64 },
    NonStochasticRow { state: usize, sum: f64 },
    NonPositiveRate { state: usize, value: f64 },
    AsymmetricImmunity { i: usize, j: usize, a_ij: i64, a_ji: i64 },
    NonPositiveDelta { delta: f64 },
    ImmunityBoundExceeded { i: usize, j: usize, a_ij: i64, bound: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SelfPairLeft { rule, state } => {
                write!(f, "rule {rule}: left states must differ (both are {state})")
            }
            Violation::SelfPairRight { rule, state } => {
                write!(f, "rule {rule}: right states must differ (both are {state})")
            }
            Violation::DuplicateLeftPair { rule_a, rule_b, left } => write!(
                f,
                "duplicate left pair ({}, {}) in rules {rule_a} and {rule_b}",
                left.0, left.1
            ),
            Violation::NegativeRateAtVertex { state, vertex, value } => write!(
                f,
                "rate of state {state} is negative at vertex {vertex}: {value}"
            ),
            Violation::NegativeSwitch { from, to, value } => {
                write!(f, "switch weight ({from} -> {to}) is negative: {value}")
            }
            Violation::NegativeRatioPart { from, to, part, vertex, value } => write!(
                f,
                "switch ({from} -> {to}): {part} is negative at vertex {vertex}: {value}"
            ),
            Violation::NonStochasticRow { state, sum } => {
                write!(f, "switch row of state {state} sums to {sum}, expected 1")
            }
            Violation::NonPositiveRate { state, value } => {
                write!(f, "rate of state {state} must be positive, got {value}")
            }
            Violation::AsymmetricImmunity { i, j, a_ij, a_ji } => write!(
                f,
                "asymmetric immunity: a[{i}][{j}] = {a_ij} but a[{j}][{i}] = {a_ji}"
            ),
            Violation::NonPositiveDelta { delta } => {
                write!(f, "delta must be positive, got {delta}")
            }
            Violation::ImmunityBoundExceeded { i, j, a_ij, bound } => write!(
                f,
                "gamma/delta = {bound} is below immunity a[{i}][{j}] = {a_ij}; \
                 the review rate would go negative on the simplex"
            ),
        }
    }
}

/// Outcome of [`ProtocolSpec::validate`]: empty violation list means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}
