//! File formats, the Clarabel backend, sampling, Monte Carlo checks and the
//! command-line front end built on `randaw-core`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod cli;
pub mod design;
pub mod modelcfg;
pub mod montecarlo;
pub mod par;
pub mod report;
pub mod sampler;
pub mod settings;
