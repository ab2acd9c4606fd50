//! Lipid SMILES language-model pipeline.
//!
//! The crate is organized along the data flow of the pipeline:
//!
//! * [`chem`] — SMILES parsing, writing, and canonicalization on molecular graphs.
//! * [`analysis`] — structural labels: tail counting, head/tail segmentation,
//!   connecting-atom detection, rearranged/decoy SMILES construction.
//! * [`corpus`] — fragment-based generation of a labeled ionizable-lipid corpus
//!   with synthetic regression targets.
//! * [`tokenizer`] — character-level SMILES tokenizer with special tokens and
//!   atom↔token alignment.
//! * [`model`] — transformer encoder with task heads and exact gradients.
//! * [`train`] — masking, batch construction, AdamW, pre-training and
//!   fine-tuning loops, evaluation metrics.
//! * [`project`] — principal-component projection of embeddings to 2D.

pub mod analysis;
pub mod chem;
pub mod corpus;
pub mod model;
pub mod project;
pub mod tokenizer;
pub mod train;

mod seed;

pub use seed::derive_seed;
