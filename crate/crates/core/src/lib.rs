//! Local constraint-based causal discovery under selection bias.

pub mod citest;
pub mod enumerate;
pub mod error;
pub mod eval;
pub mod graph;
pub mod icp;
pub mod patterns;
pub mod randgraph;
pub mod scm;
pub mod separation;

pub use error::{Error, Result};
