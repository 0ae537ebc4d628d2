//! Mean-field analysis of finite-state population protocols.
//!
//! The crate compiles protocol specifications (pairwise rules, general
//! rate/switch tables, constant-rate chains, or linear viral immunity
//! models) into their deterministic density dynamics on the simplex and
//! provides:
//!
//! * velocity evaluation and adaptive trajectory integration
//!   ([`dynamics`]),
//! * the constructive rewrite of pairwise-rule protocols into rate/switch
//!   form ([`reduction`]),
//! * fixed-point location with reduced-Jacobian classification
//!   ([`stability`]),
//! * exact stationary distributions of constant-specification protocols
//!   ([`markov`]),
//! * replicator-form analysis of linear viral protocols with
//!   relative-entropy certificates ([`viral`]),
//! * finite-population stochastic simulation of both semantics for
//!   cross-validation against the continuum model ([`sim`]).
//!
//! With the default `parallel` feature the embarrassingly-parallel inner
//! loops (multistart root polishing, certificate sampling, simulation
//! replicas) fan out via rayon; disabling the feature yields a fully
//! sequential build with identical outputs.

// Parameter guards are written `!(x > 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
mod graph;
pub mod markov;
mod par;
pub mod protocol;
pub mod reduction;
pub mod sim;
pub mod stability;
pub mod viral;

pub use num_complex::Complex64;
pub use protocol::{
    AffineExpr, DensityVector, ImmunityMatrix, PppRule, ProtocolError, ProtocolKind, ProtocolSpec,
    RateExpr, StateSet, SwitchExpr, ValidationReport, Violation,
};
