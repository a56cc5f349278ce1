//! Access control encryption with information-theoretic security, built from
//! random matrices over prime fields.

pub mod adversary;
pub mod cli;
pub mod error;
pub mod gf;
pub mod keyio;
pub mod matrix;
pub mod pair;
pub mod policy;
pub mod relay;
pub mod statcheck;

pub use error::{AceError, Result};
