//! Numerical tools for partially hyperbolic maps of the 3-torus: invariant
//! splittings, strong leaves, center plaques, transversality witnesses,
//! hyperbolicity certificates and leafwise pushforward measures.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod leafwork;
pub mod par;
pub mod sh_gibbs;
pub mod splitting;
pub mod torus;
pub mod transversality;

pub use error::{Error, Result};
