//! Analysis of adversarial (Santha-Vazirani style) randomness sources.
//!
//! The crate decides whether a single bit can be deterministically extracted
//! from a source whose symbols are drawn from dice picked by an adaptive
//! adversary, runs the martingale extractor when it can, and builds explicit
//! impossibility certificates when it cannot. The same questions are answered
//! for two parties that want to agree on a common random bit.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod binary_sv;
pub mod cli;
pub mod distributed;
pub mod extractor;
pub mod io;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod report;
pub mod scalar;
pub mod spread;
pub mod suites;
