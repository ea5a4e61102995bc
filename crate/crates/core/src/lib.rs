//! Pairwise runtime comparison of programs from their syntax trees.
//!
//! Programs are parsed (or loaded) as [`ast::Ast`]s, node kinds are embedded
//! through [`embed`], whole trees are encoded by a child-sum tree-LSTM
//! ([`treelstm`]) or a GCN baseline ([`gcn`]), and a linear head
//! ([`classifier`]) over the concatenated encodings predicts whether the second
//! program of a pair runs at least as fast as the first.

pub mod ast;
pub mod classifier;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod linalg;
pub mod minilang;
pub mod pairs;
mod par;
pub mod params;
pub mod synth;
pub mod train;
pub mod treelstm;

pub use error::{Error, Result};
pub use params::Parameters;
