//! Extractive event argument extraction with joint multi-role prompts and
//! role-specific span selectors.

pub mod assignment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod neural;
pub mod ontology;
pub mod pipeline;
pub mod prompting;
pub mod span;
pub mod textenc;
pub mod train;

pub use error::{Error, Result};
pub use span::SpanPair;
