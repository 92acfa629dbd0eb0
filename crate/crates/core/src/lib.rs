//! Directed greybox fuzzing as noisy binary search.
//!
//! Programs are modeled as control-flow graphs of branch blocks whose
//! predicates compare a computable branch distance against zero. A
//! Monte Carlo counting oracle estimates how many inputs of a region reach a
//! target edge, and a multiplicative-weights searcher narrows the input space
//! down to a target-reaching region using logarithmically many oracle queries.

pub mod bench;
pub mod campaign;
pub mod counting_oracle;
pub mod error;
pub mod input_space;
pub mod mc_execution;
pub mod prep;
pub mod search;
pub mod target_model;

pub use error::{Error, Result};
