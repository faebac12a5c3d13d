//! Active learning for sub-cell named-entity recognition in tables.

pub mod acquisition;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod table;
pub mod talm;
pub mod tokenize;

pub use error::{Error, Result};
