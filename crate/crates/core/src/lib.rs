//! Generation of competitive-programming problems and trusted test suites,
//! sandboxed judging, and benchmark statistics.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod sandbox;
pub mod synth;
pub mod trust;
