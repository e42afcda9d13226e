//! Open-set domain adaptation on a one-vs-all classifier, with confident
//! target unknowns mined mid-training and fed back as negatives.
//!
//! The pipeline: [`data`] builds source/target domains and the known/unknown
//! split, [`trainer`] pretrains the [`model`], [`miner`] extracts negatives,
//! a [`strategies`] provider turns them into batches for the fine-tune
//! phase, and [`eval`] scores and tabulates the result. [`cli`] wires it all
//! to config files and run directories.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod miner;
pub mod model;
pub mod ops;
pub mod plots;
pub mod seeds;
pub mod strategies;
pub mod trainer;

pub use error::{OsdaError, Result};
