//! Optimal incentive contracts for teams whose efforts interact through a
//! production function with spillovers.
//!
//! The crate computes effort equilibria under a contract, the balance diagnostics
//! that characterize optimal contracts (marginal productivity, centrality and
//! marginal utility of money), optimal contracts for general and closed-form
//! environments, optimal active sets, comparative statics, and equity contracts.
//! An independent brute-force [`oracle`] cross-checks the analytic pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod contract_opt;
pub mod diagnostics;
pub mod equilibrium;
pub mod equity;
mod error;
pub mod model;
mod numeric;
pub mod oracle;
pub mod statics;

pub use error::{Error, Result};
