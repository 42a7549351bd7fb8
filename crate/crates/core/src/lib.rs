//! Hash-routed token-level early exiting for transformer encoders.
//!
//! Each token id is mapped ahead of time to a fixed exit layer by a
//! [`hash::HashTable`]. The encoder in [`model`] stops updating a token once
//! it passes its exit layer and copies the frozen state upward, while the
//! token stays visible as an attention key/value. [`flops`] accounts the
//! saved multiply-accumulates exactly.

pub mod ablation;
pub mod corpus;
pub mod difficulty;
pub mod error;
pub mod flops;
pub mod hash;
pub mod model;
pub mod numeric;
pub mod synthetic;

pub use error::{Error, Result};
