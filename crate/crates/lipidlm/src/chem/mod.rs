//! Molecular graphs and the SMILES dialect used throughout the pipeline.
//!
//! The dialect covers the single-letter organic elements C, N, O, P, S, F
//! (plus Cl/Br, accepted by the parser but never emitted by the corpus
//! generator), charge brackets like `[N+]`, ring-closure digits, branches,
//! and the four bond orders. Stereo markers (`/`, `\`, `@`) are parsed and
//! kept as annotations but do not participate in canonicalization.

mod canon;
mod graph;
mod parse;
mod write;

pub use canon::{canonicalize, CanonicalForm};
pub use graph::{Atom, Bond, BondDir, BondOrder, Chirality, Element, MolGraph};
pub use parse::{atom_char_offsets, parse_smiles, ParseError};
pub use write::{write_smiles, write_smiles_with_order, NeighborOrder};

use thiserror::Error;

/// Errors from graph-level operations (writer, canonicalizer).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("graph is disconnected; SMILES output requires a connected molecule")]
    DisconnectedGraph,
    #[error("atom index {0} out of range ({1} atoms)")]
    AtomOutOfRange(usize, usize),
    #[error("invalid bond: {0}")]
    InvalidBond(String),
}
