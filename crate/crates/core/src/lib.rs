//! Membership-inference auditing: small MLPs, last-layer Laplace
//! posteriors, conditional and marginal attacks, and their evaluation.

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod laplace;
pub mod nn;
pub mod numkit;
pub mod pipeline;
pub mod theory;

pub use error::{Error, Result};
