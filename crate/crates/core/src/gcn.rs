//! Graph-convolution baseline encoder.
//!
//! Each layer computes, for every node `v`,
//! `h'_v = ReLU(W · mean_{u ∈ {v} ∪ N(v)} h_u + b)` where `N(v)` is the
//! parent plus children (edges undirected). The tree vector is the mean of
//! the last layer's node features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Ast, Topology};
use crate::embed::{EmbeddingTable, NodeVocab, RowGrads};
use crate::error::{Error, Result};
use crate::linalg::{add_assign, Matrix};
use crate::params::Parameters;

/// Layer count and hidden width found best for the baseline.
pub const DEFAULT_LAYERS: usize = 6;
pub const DEFAULT_HIDDEN: usize = 117;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<GcnLayer>,
}

impl GcnEncoder {
    pub fn zeros(input_dim: usize, hidden: usize, depth: usize) -> Result<Self> {
        Self::build(input_dim, hidden, depth, Matrix::zeros)
    }

    /// He-uniform weights, Uniform(-√(6/fan_in), √(6/fan_in)), so activations
    /// keep their scale through the ReLU stack; biases zero.
    pub fn init(input_dim: usize, hidden: usize, depth: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(input_dim, hidden, depth, |r, c| {
            Matrix::uniform(r, c, (6.0 / c as f64).sqrt(), &mut rng)
        })
    }

    fn build(input_dim: usize, hidden: usize, depth: usize, mut make: impl FnMut(usize, usize) -> Matrix) -> Result<Self> {
        if depth == 0 || input_dim == 0 || hidden == 0 {
            return Err(Error::Config("GCN depth and widths must be positive".into()));
        }
        let layers = (0..depth)
            .map(|k| GcnLayer {
                weight: make(hidden, if k == 0 { input_dim } else { hidden }),
                bias: vec![0.0; hidden],
            })
            .collect();
        Ok(GcnEncoder {
            input_dim,
            hidden,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.hidden
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden, self.depth()).expect("shape already validated")
    }

    pub fn forward(&self, topo: &Topology, rows: &[usize], table: &EmbeddingTable) -> Result<GcnTrace> {
        if table.dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "embedding width {} differs from GCN input {}",
                table.dim(),
                self.input_dim
            )));
        }
        if rows.len() != topo.len() {
            return Err(Error::Shape("one table row per node required".into()));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= table.rows()) {
            return Err(Error::Shape(format!("row {r} outside a table of {} rows", table.rows())));
        }
        let n = topo.len();
        let hoods = neighbourhoods(topo);
        let mut features: Vec<Vec<f64>> = rows.iter().map(|&r| table.row(r).to_vec()).collect();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let agg: Vec<Vec<f64>> = hoods.iter().map(|h| mean_of(&features, h)).collect();
            let pre: Vec<Vec<f64>> = agg
                .iter()
                .map(|a| {
                    let mut z = layer.bias.clone();
                    layer.weight.mul_vec_acc(a, &mut z);
                    z
                })
                .collect();
            let out: Vec<Vec<f64>> = pre.iter().map(|z| z.iter().map(|v| v.max(0.0)).collect()).collect();
            layers.push(GcnLayerTrace { agg, pre });
            features = out;
        }
        let all: Vec<usize> = (0..n).collect();
        let output = mean_of(&features, &all);
        Ok(GcnTrace {
            hoods,
            rows: rows.to_vec(),
            layers,
            output,
        })
    }

    pub fn backward(&self, trace: &GcnTrace, upstream: &[f64]) -> Result<(GcnEncoder, RowGrads)> {
        if upstream.len() != self.hidden {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, expected {}",
                upstream.len(),
                self.hidden
            )));
        }
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace was recorded with a different encoder".into()));
        }
        let n = trace.hoods.len();
        let mut grads = self.zeros_like();
        // Readout mean.
        let share: Vec<f64> = upstream.iter().map(|g| g / n as f64).collect();
        let mut d_feat: Vec<Vec<f64>> = vec![share; n];
        for (k, (layer, lt)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let width = lt.agg[0].len();
            let mut d_prev = vec![vec![0.0; width]; n];
            for v in 0..n {
                let dz: Vec<f64> = d_feat[v]
                    .iter()
                    .zip(&lt.pre[v])
                    .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                    .collect();
                grads.layers[k].weight.add_outer(&dz, &lt.agg[v]);
                add_assign(&mut grads.layers[k].bias, &dz);
                let mut d_agg = vec![0.0; width];
                layer.weight.mul_t_vec_acc(&dz, &mut d_agg);
                let hood = &trace.hoods[v];
                let scale = 1.0 / hood.len() as f64;
                for &u in hood {
                    for (p, g) in d_prev[u].iter_mut().zip(&d_agg) {
                        *p += g * scale;
                    }
                }
            }
            d_feat = d_prev;
        }
        let mut rows = RowGrads::default();
        for (v, g) in d_feat.iter().enumerate() {
            rows.add(trace.rows[v], g);
        }
        Ok((grads, rows))
    }

    pub fn encode(&self, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
        let topo = ast.topology();
        let rows = topo.kinds.iter().map(|k| vocab.row(k)).collect::<Result<Vec<_>>>()?;
        Ok(self.forward(&topo, &rows, table)?.output)
    }
}

pub fn gcn_encode(params: &GcnEncoder, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
    params.encode(ast, table, vocab)
}

impl Parameters for GcnEncoder {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("gcn{k}.W"), l.weight.as_slice()));
            out.push((format!("gcn{k}.b"), l.bias.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }
}

/// Self, then parent, then children in canonical order.
fn neighbourhoods(topo: &Topology) -> Vec<Vec<usize>> {
    (0..topo.len())
        .map(|v| {
            let mut h = vec![v];
            h.extend(topo.parent[v]);
            h.extend(topo.children[v].iter().copied());
            h
        })
        .collect()
}

fn mean_of(features: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; features[idx[0]].len()];
    for &i in idx {
        add_assign(&mut acc, &features[i]);
    }
    let inv = 1.0 / idx.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

#[derive(Debug, Clone)]
struct GcnLayerTrace {
    agg: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GcnTrace {
    hoods: Vec<Vec<usize>>,
    rows: Vec<usize>,
    layers: Vec<GcnLayerTrace>,
    output: Vec<f64>,
}

impl GcnTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}
