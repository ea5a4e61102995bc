//! Common front for the two tree encoders.

use serde::{Deserialize, Serialize};

use crate::ast::{Ast, Topology};
use crate::embed::{EmbeddingTable, NodeVocab, RowGrads};
use crate::error::{Error, Result};
use crate::gcn::{GcnEncoder, GcnTrace};
use crate::params::Parameters;
use crate::treelstm::{TreeLstmEncoder, TreeLstmTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    TreeLstm,
    Gcn,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "treelstm" => Ok(EncoderKind::TreeLstm),
            "gcn" => Ok(EncoderKind::Gcn),
            other => Err(format!("unknown encoder '{other}' (expected treelstm or gcn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    TreeLstm(TreeLstmEncoder),
    Gcn(GcnEncoder),
}

#[derive(Debug, Clone)]
pub enum Trace {
    TreeLstm(TreeLstmTrace),
    Gcn(GcnTrace),
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        match self {
            Trace::TreeLstm(t) => t.output(),
            Trace::Gcn(t) => t.output(),
        }
    }
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::TreeLstm(_) => EncoderKind::TreeLstm,
            Encoder::Gcn(_) => EncoderKind::Gcn,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::TreeLstm(e) => e.input_dim,
            Encoder::Gcn(e) => e.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::TreeLstm(e) => e.output_dim(),
            Encoder::Gcn(e) => e.output_dim(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Encoder::TreeLstm(e) => Encoder::TreeLstm(e.zeros_like()),
            Encoder::Gcn(e) => Encoder::Gcn(e.zeros_like()),
        }
    }

    pub fn forward(&self, topo: &Topology, rows: &[usize], table: &EmbeddingTable) -> Result<Trace> {
        Ok(match self {
            Encoder::TreeLstm(e) => Trace::TreeLstm(e.forward(topo, rows, table)?),
            Encoder::Gcn(e) => Trace::Gcn(e.forward(topo, rows, table)?),
        })
    }

    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<(Encoder, RowGrads)> {
        match (self, trace) {
            (Encoder::TreeLstm(e), Trace::TreeLstm(t)) => {
                let (g, r) = e.backward(t, upstream)?;
                Ok((Encoder::TreeLstm(g), r))
            }
            (Encoder::Gcn(e), Trace::Gcn(t)) => {
                let (g, r) = e.backward(t, upstream)?;
                Ok((Encoder::Gcn(g), r))
            }
            _ => Err(Error::Shape("trace was recorded by a different encoder type".into())),
        }
    }

    pub fn encode(&self, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
        match self {
            Encoder::TreeLstm(e) => e.encode(ast, table, vocab),
            Encoder::Gcn(e) => e.encode(ast, table, vocab),
        }
    }
}

impl Parameters for Encoder {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        match self {
            Encoder::TreeLstm(e) => e.tensors(),
            Encoder::Gcn(e) => e.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Encoder::TreeLstm(e) => e.tensors_mut(),
            Encoder::Gcn(e) => e.tensors_mut(),
        }
    }
}

/// Table rows for every node of `topo`, in position order.
pub fn node_rows(topo: &Topology, vocab: &NodeVocab) -> Result<Vec<usize>> {
    topo.kinds.iter().map(|k| vocab.row(k)).collect()
}
