//! The protocol file format.
//!
//! UTF-8, line-oriented, `#` starts a comment. The first directives are
//! `kind` and `states`; the remaining lines depend on the kind:
//!
//! ```text
//! kind ppp|spp|mpp|lvp
//! states <name> <name> ...
//! # ppp:
//! rule <s> <s> -> <s> <s>
//! # mpp:
//! rate <s> <positive real>
//! switch <s> <s> <probability>
//! # lvp:
//! gamma <real>
//! delta <positive real>
//! immunity <s> <s> <integer>   # one line per unordered pair; symmetry implied
//! # spp (general):
//! rate <s> affine <c0> <c1> ... <ck>
//! switch <s> <s> pairing | const <p> | ratio <c0..ck> / <d0..dk>
//! ```
//!
//! Unspecified switch entries default to 0. Constant-kind rows must sum to
//! 1 explicitly; completeness is validated, never auto-completed. Parsing
//! aggregates every error with its line number and runs full semantic
//! validation on the assembled spec. Numbers serialize with the shortest
//! representation that round-trips, so parse -> serialize -> parse is
//! stable.

use popdyn::{
    AffineExpr, DensityVector, ImmunityMatrix, PppRule, ProtocolKind, ProtocolSpec, RateExpr,
    StateSet, SwitchExpr,
};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based line number; `None` for whole-file semantic violations.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ppp,
    Spp,
    Mpp,
    Lvp,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Ppp => "ppp",
            Kind::Spp => "spp",
            Kind::Mpp => "mpp",
            Kind::Lvp => "lvp",
        }
    }
}

struct Parser {
    errors: Vec<ParseError>,
    kind: Option<Kind>,
    states: Option<StateSet>,
    rules: Vec<(PppRule, usize)>,
    mpp_rates: HashMap<usize, (f64, usize)>,
    mpp_switch: HashMap<(usize, usize), (f64, usize)>,
    spp_rates: HashMap<usize, (AffineExpr, usize)>,
    spp_switch: HashMap<(usize, usize), (SwitchExpr, usize)>,
    gamma: Option<(f64, usize)>,
    delta: Option<(f64, usize)>,
    immunity: HashMap<(usize, usize), (i64, usize)>,
}

impl Parser {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ParseError { line: Some(line), message: message.into() });
    }

    fn state(&mut self, token: &str, line: usize) -> Option<usize> {
        let Some(states) = &self.states else {
            self.err(line, "directive appears before `states`");
            return None;
        };
        let idx = states.index_of(token);
        if idx.is_none() {
            self.err(line, format!("unknown state name `{token}`"));
        }
        idx
    }

    fn number(&mut self, token: &str, what: &str, line: usize) -> Option<f64> {
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.err(line, format!("cannot parse {what} `{token}` as a number"));
                None
            }
        }
    }

    fn affine(&mut self, tokens: &[&str], k: usize, line: usize) -> Option<AffineExpr> {
        if tokens.len() != k + 1 {
            self.err(line, format!("expected {} coefficients (c0 plus one per state), got {}", k + 1, tokens.len()));
            return None;
        }
        let mut values = Vec::with_capacity(k + 1);
        for t in tokens {
            values.push(self.number(t, "coefficient", line)?);
        }
        Some(AffineExpr::new(values[0], values[1..].to_vec()))
    }
}

/// Parses a protocol file, aggregating every syntax error with its line
/// number and every semantic violation of the assembled spec.
pub fn parse_protocol_file(text: &str) -> Result<ProtocolSpec, ParseErrors> {
    let mut p = Parser {
        errors: Vec::new(),
        kind: None,
        states: None,
        rules: Vec::new(),
        mpp_rates: HashMap::new(),
        mpp_switch: HashMap::new(),
        spp_rates: HashMap::new(),
        spp_switch: HashMap::new(),
        gamma: None,
        delta: None,
        immunity: HashMap::new(),
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        match tokens[0] {
            "kind" => parse_kind(&mut p, &tokens, line),
            "states" => parse_states(&mut p, &tokens, line),
            "rule" => parse_rule(&mut p, &tokens, line),
            "rate" => parse_rate(&mut p, &tokens, line),
            "switch" => parse_switch(&mut p, &tokens, line),
            "gamma" => parse_scalar(&mut p, &tokens, line, Scalar::Gamma),
            "delta" => parse_scalar(&mut p, &tokens, line, Scalar::Delta),
            "immunity" => parse_immunity(&mut p, &tokens, line),
            other => p.err(line, format!("unknown directive `{other}`")),
        }
    }

    if p.kind.is_none() {
        p.errors.push(ParseError { line: None, message: "missing `kind` directive".into() });
    }
    if p.states.is_none() {
        p.errors.push(ParseError { line: None, message: "missing `states` directive".into() });
    }
    if !p.errors.is_empty() {
        return Err(ParseErrors(p.errors));
    }

    let kind = p.kind.unwrap();
    let states = p.states.clone().unwrap();
    let k = states.k();
    let spec = match kind {
        Kind::Ppp => {
            let rules = p.rules.iter().map(|(r, _)| *r).collect();
            ProtocolSpec::ppp(states, rules)
        }
        Kind::Mpp => {
            let mut rates = Vec::with_capacity(k);
            for i in 0..k {
                match p.mpp_rates.get(&i) {
                    Some(&(v, _)) => rates.push(v),
                    None => {
                        p.errors.push(ParseError {
                            line: None,
                            message: format!("missing `rate` for state `{}`", states.name(i)),
                        });
                        rates.push(1.0);
                    }
                }
            }
            let switch = (0..k)
                .map(|i| (0..k).map(|j| p.mpp_switch.get(&(i, j)).map_or(0.0, |&(v, _)| v)).collect())
                .collect();
            if !p.errors.is_empty() {
                return Err(ParseErrors(p.errors));
            }
            ProtocolSpec::mpp(states, rates, switch)
        }
        Kind::Lvp => {
            let gamma = p.gamma.map(|(v, _)| v);
            let delta = p.delta.map(|(v, _)| v);
            if gamma.is_none() {
                p.errors.push(ParseError { line: None, message: "missing `gamma`".into() });
            }
            if delta.is_none() {
                p.errors.push(ParseError { line: None, message: "missing `delta`".into() });
            }
            if !p.errors.is_empty() {
                return Err(ParseErrors(p.errors));
            }
            let mut a = ImmunityMatrix::constant(k, 0);
            for (&(i, j), &(v, _)) in &p.immunity {
                a.set(i, j, v);
                a.set(j, i, v);
            }
            ProtocolSpec::lvp(states, a, gamma.unwrap(), delta.unwrap())
        }
        Kind::Spp => {
            let rates = (0..k)
                .map(|i| {
                    p.spp_rates
                        .get(&i)
                        .map(|(a, _)| RateExpr::Affine(a.clone()))
                        .unwrap_or(RateExpr::Constant(0.0))
                })
                .collect();
            let switch = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| {
                            p.spp_switch
                                .get(&(i, j))
                                .map(|(s, _)| s.clone())
                                .unwrap_or(SwitchExpr::Constant(0.0))
                        })
                        .collect()
                })
                .collect();
            ProtocolSpec::spp(states, rates, switch)
        }
    };

    let spec = match spec {
        Ok(s) => s,
        Err(e) => {
            p.errors.push(ParseError { line: None, message: e.to_string() });
            return Err(ParseErrors(p.errors));
        }
    };

    let report = spec.validate();
    if !report.is_valid() {
        let errors = report
            .violations
            .iter()
            .map(|v| ParseError { line: None, message: v.to_string() })
            .collect();
        return Err(ParseErrors(errors));
    }
    Ok(spec)
}

enum Scalar {
    Gamma,
    Delta,
}

fn require_kind(p: &mut Parser, expected: &[Kind], directive: &str, line: usize) -> Option<Kind> {
    match p.kind {
        None => {
            p.err(line, format!("`{directive}` appears before `kind`"));
            None
        }
        Some(k) if expected.contains(&k) => Some(k),
        Some(k) => {
            p.err(line, format!("`{directive}` is not valid in a `{}` file", k.name()));
            None
        }
    }
}

fn parse_kind(p: &mut Parser, tokens: &[&str], line: usize) {
    if p.kind.is_some() {
        p.err(line, "duplicate `kind` directive");
        return;
    }
    if tokens.len() != 2 {
        p.err(line, "expected `kind ppp|spp|mpp|lvp`");
        return;
    }
    p.kind = match tokens[1] {
        "ppp" => Some(Kind::Ppp),
        "spp" => Some(Kind::Spp),
        "mpp" => Some(Kind::Mpp),
        "lvp" => Some(Kind::Lvp),
        other => {
            p.err(line, format!("unknown kind `{other}`"));
            None
        }
    };
}

fn parse_states(p: &mut Parser, tokens: &[&str], line: usize) {
    if p.states.is_some() {
        p.err(line, "duplicate `states` directive");
        return;
    }
    if tokens.len() < 2 {
        p.err(line, "expected `states <name> <name> ...`");
        return;
    }
    match StateSet::new(tokens[1..].to_vec()) {
        Ok(s) => p.states = Some(s),
        Err(e) => p.err(line, e.to_string()),
    }
}

fn parse_rule(p: &mut Parser, tokens: &[&str], line: usize) {
    if require_kind(p, &[Kind::Ppp], "rule", line).is_none() {
        return;
    }
    if tokens.len() != 6 || tokens[3] != "->" {
        p.err(line, "expected `rule <s> <s> -> <s> <s>`");
        return;
    }
    let (Some(r), Some(m), Some(rp), Some(mp)) = (
        p.state(tokens[1], line),
        p.state(tokens[2], line),
        p.state(tokens[4], line),
        p.state(tokens[5], line),
    ) else {
        return;
    };
    if r == m {
        p.err(line, "left states must differ");
        return;
    }
    if rp == mp {
        p.err(line, "right states must differ");
        return;
    }
    if let Some((_, prev)) = p.rules.iter().find(|(rule, _)| rule.left == (r, m)) {
        let prev = *prev;
        p.err(line, format!("duplicate left pair (already declared on line {prev})"));
        return;
    }
    p.rules.push((PppRule::new((r, m), (rp, mp)), line));
}

fn parse_rate(p: &mut Parser, tokens: &[&str], line: usize) {
    let Some(kind) = require_kind(p, &[Kind::Mpp, Kind::Spp], "rate", line) else {
        return;
    };
    match kind {
        Kind::Mpp => {
            if tokens.len() != 3 {
                p.err(line, "expected `rate <s> <positive real>`");
                return;
            }
            let Some(i) = p.state(tokens[1], line) else { return };
            let Some(v) = p.number(tokens[2], "rate", line) else { return };
            if v <= 0.0 {
                p.err(line, format!("rate must be positive, got {v}"));
                return;
            }
            if let Some((_, prev)) = p.mpp_rates.get(&i) {
                let prev = *prev;
                p.err(line, format!("duplicate rate for this state (line {prev})"));
                return;
            }
            p.mpp_rates.insert(i, (v, line));
        }
        Kind::Spp => {
            if tokens.len() < 3 || tokens[2] != "affine" {
                p.err(line, "expected `rate <s> affine <c0> <c1> ... <ck>`");
                return;
            }
            let Some(i) = p.state(tokens[1], line) else { return };
            let k = p.states.as_ref().map_or(0, |s| s.k());
            let Some(expr) = p.affine(&tokens[3..], k, line) else { return };
            if let Some((_, prev)) = p.spp_rates.get(&i) {
                let prev = *prev;
                p.err(line, format!("duplicate rate for this state (line {prev})"));
                return;
            }
            p.spp_rates.insert(i, (expr, line));
        }
        _ => unreachable!(),
    }
}

fn parse_switch(p: &mut Parser, tokens: &[&str], line: usize) {
    let Some(kind) = require_kind(p, &[Kind::Mpp, Kind::Spp], "switch", line) else {
        return;
    };
    if tokens.len() < 4 {
        p.err(line, "expected `switch <s> <s> ...`");
        return;
    }
    let (Some(i), Some(j)) = (p.state(tokens[1], line), p.state(tokens[2], line)) else {
        return;
    };
    match kind {
        Kind::Mpp => {
            if tokens.len() != 4 {
                p.err(line, "expected `switch <s> <s> <probability>`");
                return;
            }
            let Some(v) = p.number(tokens[3], "probability", line) else { return };
            if v < 0.0 {
                p.err(line, format!("switch probability must be nonnegative, got {v}"));
                return;
            }
            if let Some((_, prev)) = p.mpp_switch.get(&(i, j)) {
                let prev = *prev;
                p.err(line, format!("duplicate switch entry (line {prev})"));
                return;
            }
            p.mpp_switch.insert((i, j), (v, line));
        }
        Kind::Spp => {
            let k = p.states.as_ref().map_or(0, |s| s.k());
            let expr = match tokens[3] {
                "pairing" => {
                    if tokens.len() != 4 {
                        p.err(line, "`pairing` takes no arguments");
                        return;
                    }
                    SwitchExpr::Pairing
                }
                "const" => {
                    if tokens.len() != 5 {
                        p.err(line, "expected `switch <s> <s> const <p>`");
                        return;
                    }
                    let Some(v) = p.number(tokens[4], "probability", line) else { return };
                    if v < 0.0 {
                        p.err(line, format!("switch weight must be nonnegative, got {v}"));
                        return;
                    }
                    SwitchExpr::Constant(v)
                }
                "ratio" => {
                    let rest = &tokens[4..];
                    let Some(slash) = rest.iter().position(|&t| t == "/") else {
                        p.err(line, "expected `ratio <c0..ck> / <d0..dk>`");
                        return;
                    };
                    let numer_tokens = &rest[..slash];
                    let denom_tokens = &rest[slash + 1..];
                    let Some(numer) = p.affine(numer_tokens, k, line) else { return };
                    let Some(denom) = p.affine(denom_tokens, k, line) else { return };
                    SwitchExpr::RatioAffine { numer, denom }
                }
                other => {
                    p.err(line, format!("unknown switch form `{other}` (want pairing, const, or ratio)"));
                    return;
                }
            };
            if let Some((_, prev)) = p.spp_switch.get(&(i, j)) {
                let prev = *prev;
                p.err(line, format!("duplicate switch entry (line {prev})"));
                return;
            }
            p.spp_switch.insert((i, j), (expr, line));
        }
        _ => unreachable!(),
    }
}

fn parse_scalar(p: &mut Parser, tokens: &[&str], line: usize, which: Scalar) {
    let name = match which {
        Scalar::Gamma => "gamma",
        Scalar::Delta => "delta",
    };
    if require_kind(p, &[Kind::Lvp], name, line).is_none() {
        return;
    }
    if tokens.len() != 2 {
        p.err(line, format!("expected `{name} <real>`"));
        return;
    }
    let Some(v) = p.number(tokens[1], name, line) else { return };
    let slot = match which {
        Scalar::Gamma => &mut p.gamma,
        Scalar::Delta => &mut p.delta,
    };
    if let Some((_, prev)) = slot {
        let prev = *prev;
        p.err(line, format!("duplicate `{name}` (line {prev})"));
        return;
    }
    if matches!(which, Scalar::Delta) && v <= 0.0 {
        p.err(line, format!("delta must be positive, got {v}"));
        return;
    }
    *slot = Some((v, line));
}

fn parse_immunity(p: &mut Parser, tokens: &[&str], line: usize) {
    if require_kind(p, &[Kind::Lvp], "immunity", line).is_none() {
        return;
    }
    if tokens.len() != 4 {
        p.err(line, "expected `immunity <s> <s> <integer>`");
        return;
    }
    let (Some(i), Some(j)) = (p.state(tokens[1], line), p.state(tokens[2], line)) else {
        return;
    };
    let Ok(v) = tokens[3].parse::<i64>() else {
        p.err(line, format!("cannot parse immunity `{}` as an integer", tokens[3]));
        return;
    };
    let key = (i.min(j), i.max(j));
    if let Some((_, prev)) = p.immunity.get(&key) {
        let prev = *prev;
        p.err(line, format!("duplicate immunity for this pair (line {prev})"));
        return;
    }
    p.immunity.insert(key, (v, line));
}

fn push_affine(out: &mut String, a: &AffineExpr) {
    out.push_str(&format!("{}", a.c0));
    for c in &a.coeffs {
        out.push_str(&format!(" {c}"));
    }
}

/// Canonical serialization; `parse(serialize(spec))` reproduces any spec
/// that itself came from a file.
pub fn serialize_protocol(spec: &ProtocolSpec) -> String {
    let names = spec.states().names();
    let k = spec.k();
    let mut out = format!("kind {}\nstates {}\n", spec.kind_name(), names.join(" "));
    match spec.kind() {
        ProtocolKind::Ppp { rules } => {
            for r in rules {
                out.push_str(&format!(
                    "rule {} {} -> {} {}\n",
                    names[r.left.0], names[r.left.1], names[r.right.0], names[r.right.1]
                ));
            }
        }
        ProtocolKind::Mpp { rates, switch } => {
            for (i, r) in rates.iter().enumerate() {
                out.push_str(&format!("rate {} {r}\n", names[i]));
            }
            for (i, row) in switch.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        out.push_str(&format!("switch {} {} {v}\n", names[i], names[j]));
                    }
                }
            }
        }
        ProtocolKind::Lvp { immunity, gamma, delta } => {
            out.push_str(&format!("gamma {gamma}\ndelta {delta}\n"));
            for i in 0..k {
                for j in i..k {
                    let v = immunity.get(i, j);
                    if v != 0 {
                        out.push_str(&format!("immunity {} {} {v}\n", names[i], names[j]));
                    }
                }
            }
        }
        ProtocolKind::Spp { rates, switch } => {
            for (i, r) in rates.iter().enumerate() {
                let affine = match r {
                    RateExpr::Affine(a) => a.clone(),
                    RateExpr::Constant(c) => AffineExpr::constant(*c, k),
                    RateExpr::LinearImmunity { gamma, delta, row } => AffineExpr::new(
                        *gamma,
                        row.iter().map(|&a| -delta * a as f64).collect(),
                    ),
                };
                out.push_str(&format!("rate {} affine ", names[i]));
                push_affine(&mut out, &affine);
                out.push('\n');
            }
            for (i, row) in switch.iter().enumerate() {
                for (j, s) in row.iter().enumerate() {
                    match s {
                        SwitchExpr::Constant(p) if *p == 0.0 => {}
                        SwitchExpr::Constant(p) => {
                            out.push_str(&format!("switch {} {} const {p}\n", names[i], names[j]));
                        }
                        SwitchExpr::Pairing => {
                            out.push_str(&format!("switch {} {} pairing\n", names[i], names[j]));
                        }
                        SwitchExpr::RatioAffine { numer, denom } => {
                            out.push_str(&format!("switch {} {} ratio ", names[i], names[j]));
                            push_affine(&mut out, numer);
                            out.push_str(" / ");
                            push_affine(&mut out, denom);
                            out.push('\n');
                        }
                    }
                }
            }
        }
    }
    out
}

/// One line of comma-separated values in round-trip decimal form.
pub fn vector_csv(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// Parses a comma-separated density vector and projects it onto the simplex.
pub fn parse_density(text: &str, k: usize) -> Result<DensityVector, String> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("cannot parse `{text}` as a vector: {e}"))?;
    if values.len() != k {
        return Err(format!("expected {k} comma-separated values, got {}", values.len()));
    }
    popdyn::dynamics::renormalize(&values).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = "\
# three-state cyclic rule set
kind ppp
states q1 q2 q3
rule q1 q2 -> q3 q2
rule q3 q1 -> q1 q2
rule q2 q3 -> q2 q1
";

    #[test]
    fn parses_the_worked_example() {
        let spec = parse_protocol_file(WORKED).unwrap();
        assert_eq!(spec.kind_name(), "ppp");
        assert_eq!(spec.k(), 3);
        let ProtocolKind::Ppp { rules } = spec.kind() else { panic!() };
        assert_eq!(rules.len(), 3);
        assert_eq!(rules[0], PppRule::new((0, 1), (2, 1)));
    }

    #[test]
    fn rejects_self_pair_rule() {
        let text = "kind ppp\nstates a b\nrule a a -> a b\n";
        let errs = parse_protocol_file(text).unwrap_err();
        assert!(errs.0.iter().any(|e| e.message.contains("left states must differ")), "{errs}");
        assert_eq!(errs.0[0].line, Some(3));
    }

    #[test]
    fn lvp_symmetry_is_implied_by_one_line_per_pair() {
        let text = "kind lvp\nstates a b\ngamma 5\ndelta 1\nimmunity a b 3\n";
        let spec = parse_protocol_file(text).unwrap();
        let ProtocolKind::Lvp { immunity, .. } = spec.kind() else { panic!() };
        assert_eq!(immunity.get(0, 1), 3);
        assert_eq!(immunity.get(1, 0), 3);
    }

    #[test]
    fn unknown_directive_and_state_are_reported_together() {
        let text = "kind mpp\nstates a b\nrate a 1\nrate b 1\nfrobnicate a\nswitch a c 1\n";
        let errs = parse_protocol_file(text).unwrap_err();
        assert!(errs.0.iter().any(|e| e.message.contains("unknown directive")));
        assert!(errs.0.iter().any(|e| e.message.contains("unknown state name `c`")));
    }

    #[test]
    fn kind_directive_mismatch() {
        let text = "kind mpp\nstates a b\nrate a 1\nrate b 1\nrule a b -> b a\nswitch a b 1\nswitch b a 1\n";
        let errs = parse_protocol_file(text).unwrap_err();
        assert!(errs.0.iter().any(|e| e.message.contains("not valid in a `mpp` file")), "{errs}");
    }

    #[test]
    fn mpp_row_sums_are_validated_not_completed() {
        let text = "kind mpp\nstates a b\nrate a 1\nrate b 1\nswitch a b 0.5\nswitch b a 1\n";
        let errs = parse_protocol_file(text).unwrap_err();
        assert!(errs.0.iter().any(|e| e.message.contains("sums to 0.5")), "{errs}");
    }

    #[test]
    fn missing_rate_is_reported() {
        let text = "kind mpp\nstates a b\nrate a 1\nswitch a b 1\nswitch b a 1\n";
        let errs = parse_protocol_file(text).unwrap_err();
        assert!(errs.0.iter().any(|e| e.message.contains("missing `rate` for state `b`")));
    }

    #[test]
    fn spp_ratio_and_pairing_forms_parse() {
        let text = "\
kind spp
states a b
rate a affine 0 0 1
rate b affine 0 1 0
switch a b ratio 0 0 1 / 0 1 1
switch a a ratio 0 1 0 / 0 1 1
switch b a pairing
switch b b const 0.25
";
        // Row b sums to x_a + 0.25, which is fine for a general spec.
        let spec = parse_protocol_file(text).unwrap();
        let ProtocolKind::Spp { switch, .. } = spec.kind() else { panic!() };
        assert_eq!(switch[1][0], SwitchExpr::Pairing);
        assert_eq!(switch[1][1], SwitchExpr::Constant(0.25));
        assert!(matches!(switch[0][1], SwitchExpr::RatioAffine { .. }));
    }

    #[test]
    fn round_trip_is_stable_for_every_kind() {
        let files = [
            WORKED,
            "kind mpp\nstates a b\nrate a 1\nrate b 2\nswitch a b 1\nswitch b a 1\n",
            "kind lvp\nstates a b c\ngamma 2.5\ndelta 0.5\nimmunity a a 1\nimmunity b c -2\n",
            "kind spp\nstates a b\nrate a affine 0.5 0 1\nrate b affine 0 1 0\nswitch a b pairing\nswitch b a const 1\n",
        ];
        for text in files {
            let spec = parse_protocol_file(text).unwrap();
            let serialized = serialize_protocol(&spec);
            let reparsed = parse_protocol_file(&serialized).unwrap();
            assert_eq!(spec, reparsed, "round trip changed the spec for:\n{text}");
        }
    }

    #[test]
    fn density_parsing_validates_length_and_domain() {
        assert!(parse_density("0.5,0.5", 2).is_ok());
        assert!(parse_density("0.5,0.5,0", 2).is_err());
        assert!(parse_density("0.9,0.4", 2).is_err());
        assert!(parse_density("abc,1", 2).is_err());
    }
}
