//! Exact and Monte Carlo simulation of sequential measurement experiments in
//! which each mergeable step is either performed by a merged observer (an
//! isometry, no collapse) or by a distinct observer (a projective branch,
//! collapse), plus estimation of how often each observer composition occurs.

pub mod builtin;
pub mod dsl;
pub mod expr;
pub mod linalg;
pub mod scenario;
pub mod engine;
pub mod exec;
pub mod sampler;
pub mod inference;
pub mod cli;
