//! Smooth robustness for Signal Temporal Logic over discrete-time signals.
//!
//! The crate evaluates STL formulas under exact space robustness, its
//! log-sum-exp smoothing, and generalized-mean smooth robustness, computes
//! gradients of the smooth semantics, and drives a prox-linear sequential
//! convex programming solver that maximizes robustness subject to dynamics.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grad;
pub mod harness;
pub mod par;
pub mod predicate;
pub mod problems;
pub mod robustness;
pub mod scp;
pub mod signal;
pub mod stl;

pub use error::{Error, Result};
pub use predicate::{PredicateDef, PredicateTable};
pub use robustness::{check_sat, eval, RobustnessOutput, Semantics, Verdict};
pub use signal::Signal;
pub use stl::{Formula, GmsrParams, Interval, ParamTemplate};
