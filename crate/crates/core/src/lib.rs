//! Two-stage protein homology search and profile generation.
//!
//! A target database is compiled once into a sequence store plus an exact
//! k-mer index. Query batches are then run through a double-hit diagonal
//! prefilter, gapped Smith-Waterman alignment, conversion into a 3-column
//! tuple file, per-query "golden" sub-databases, and finally PSSM profiles
//! built from each golden set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod alphabet;
pub mod bench;
pub mod error;
pub mod fasta;
pub mod golden;
pub mod index;
pub mod karlin;
pub mod matrix;
pub mod pipeline;
pub mod prefilter;
pub mod profile;
pub mod tuple;

pub use error::{Error, Result};
