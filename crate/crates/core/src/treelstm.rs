//! Child-sum tree-LSTM encoder with uni-directional, bi-directional and
//! alternating layer stacks, plus exact reverse-mode gradients.
//!
//! For node `j` with child states `(h_k, c_k)`:
//!
//! ```text
//! h̃   = Σ_k h_k
//! i    = σ(Wⁱx + Uⁱh̃ + bⁱ)
//! f_k  = σ(Wᶠx + Uᶠh_k + bᶠ)        one forget gate per child
//! o    = σ(Wᵒx + Uᵒh̃ + bᵒ)
//! u    = tanh(Wᵘx + Uᵘh̃ + bᵘ)
//! c    = i⊙u + Σ_k f_k⊙c_k
//! h    = o⊙tanh(c)
//! ```
//!
//! An upward cell takes a node's children as its sources. A downward cell
//! takes the node's parent as its single source; the root has none.
//! Sources are always visited in ascending original child id, which makes
//! the sum order (and so the output bits) independent of how the children
//! were listed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Ast, Topology};
use crate::embed::{EmbeddingTable, NodeVocab, RowGrads};
use crate::error::{Error, Result};
use crate::linalg::{add_assign, sigmoid, Matrix};
use crate::params::Parameters;

const GATES: [&str; 4] = ["i", "f", "o", "u"];
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const U: usize = 3;

/// Weights of one tree-LSTM cell; gate order is i, f, o, u.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl CellParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        CellParams {
            input_dim,
            hidden,
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    /// Weights from Uniform(-1/√hidden, 1/√hidden); biases zero.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        CellParams {
            input_dim,
            hidden,
            w: std::array::from_fn(|_| Matrix::uniform(hidden, input_dim, bound, rng)),
            u: std::array::from_fn(|_| Matrix::uniform(hidden, hidden, bound, rng)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    /// Trainable values in one cell.
    pub fn count(input_dim: usize, hidden: usize) -> usize {
        4 * (hidden * input_dim + hidden * hidden + hidden)
    }

    fn named(&self, prefix: &str) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for (g, m) in GATES.iter().zip(&self.w) {
            out.push((format!("{prefix}.W_{g}"), m.as_slice()));
        }
        for (g, m) in GATES.iter().zip(&self.u) {
            out.push((format!("{prefix}.U_{g}"), m.as_slice()));
        }
        for (g, v) in GATES.iter().zip(&self.b) {
            out.push((format!("{prefix}.b_{g}"), v.as_slice()));
        }
        out
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.w
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.u.iter_mut().map(Matrix::as_mut_slice))
            .chain(self.b.iter_mut().map(Vec::as_mut_slice))
    }
}

impl Parameters for CellParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.named("cell")
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.slices_mut().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl NodeState {
    pub fn zeros(hidden: usize) -> Self {
        NodeState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one cell evaluation, kept for the backward pass.
#[derive(Debug, Clone)]
struct CellTrace {
    h_sum: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    u: Vec<f64>,
    /// One forget activation per source, in source order.
    f: Vec<Vec<f64>>,
    tanh_c: Vec<f64>,
    state: NodeState,
}

fn check_cell_shapes(p: &CellParams, x: &[f64], sources: &[&NodeState]) -> Result<()> {
    if x.len() != p.input_dim {
        return Err(Error::Shape(format!("cell input has length {}, expected {}", x.len(), p.input_dim)));
    }
    for s in sources {
        if s.h.len() != p.hidden || s.c.len() != p.hidden {
            return Err(Error::Shape(format!("child state width differs from hidden size {}", p.hidden)));
        }
    }
    Ok(())
}

fn cell_step(p: &CellParams, x: &[f64], sources: &[&NodeState]) -> CellTrace {
    let d = p.hidden;
    let mut h_sum = vec![0.0; d];
    for s in sources {
        add_assign(&mut h_sum, &s.h);
    }
    let gate = |g: usize, h: &[f64], act: fn(f64) -> f64| {
        let mut a = p.b[g].clone();
        p.w[g].mul_vec_acc(x, &mut a);
        p.u[g].mul_vec_acc(h, &mut a);
        a.iter_mut().for_each(|v| *v = act(*v));
        a
    };
    let i = gate(I, &h_sum, sigmoid);
    let o = gate(O, &h_sum, sigmoid);
    let u = gate(U, &h_sum, f64::tanh);
    let f: Vec<Vec<f64>> = if sources.is_empty() {
        Vec::new()
    } else {
        let mut wx = p.b[F].clone();
        p.w[F].mul_vec_acc(x, &mut wx);
        sources
            .iter()
            .map(|s| {
                let mut a = wx.clone();
                p.u[F].mul_vec_acc(&s.h, &mut a);
                a.iter_mut().for_each(|v| *v = sigmoid(*v));
                a
            })
            .collect()
    };
    let mut c: Vec<f64> = i.iter().zip(&u).map(|(a, b)| a * b).collect();
    for (fk, s) in f.iter().zip(sources) {
        for ((cv, fv), ck) in c.iter_mut().zip(fk).zip(&s.c) {
            *cv += fv * ck;
        }
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    CellTrace {
        h_sum,
        i,
        o,
        u,
        f,
        tanh_c,
        state: NodeState { h, c },
    }
}

/// One cell evaluation over a node's input `x` and its source states.
pub fn cell_forward(params: &CellParams, x: &[f64], child_states: &[NodeState]) -> Result<NodeState> {
    let sources: Vec<&NodeState> = child_states.iter().collect();
    check_cell_shapes(params, x, &sources)?;
    Ok(cell_step(params, x, &sources).state)
}

/// Backpropagates `(dh, dc)` at one cell into its parameters, its input and
/// its sources.
#[allow(clippy::too_many_arguments)]
fn cell_backprop(
    p: &CellParams,
    grads: &mut CellParams,
    x: &[f64],
    t: &CellTrace,
    sources: &[&NodeState],
    dh: &[f64],
    dc_in: &[f64],
    dx: &mut [f64],
    d_sources: &mut [(Vec<f64>, Vec<f64>)],
) {
    let d = p.hidden;
    let mut dc = dc_in.to_vec();
    let mut da = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    for r in 0..d {
        let tc = t.tanh_c[r];
        let d_o = dh[r] * tc;
        dc[r] += dh[r] * t.o[r] * (1.0 - tc * tc);
        da[O][r] = d_o * t.o[r] * (1.0 - t.o[r]);
        da[I][r] = dc[r] * t.u[r] * t.i[r] * (1.0 - t.i[r]);
        da[U][r] = dc[r] * t.i[r] * (1.0 - t.u[r] * t.u[r]);
    }
    // Forget gates: one pre-activation gradient per source.
    let mut da_f: Vec<Vec<f64>> = Vec::with_capacity(sources.len());
    for (k, s) in sources.iter().enumerate() {
        let fk = &t.f[k];
        let g: Vec<f64> = (0..d).map(|r| dc[r] * s.c[r] * fk[r] * (1.0 - fk[r])).collect();
        for r in 0..d {
            d_sources[k].1[r] += dc[r] * fk[r];
        }
        add_assign(&mut da[F], &g);
        da_f.push(g);
    }

    for g in 0..4 {
        grads.w[g].add_outer(&da[g], x);
        add_assign(&mut grads.b[g], &da[g]);
        p.w[g].mul_t_vec_acc(&da[g], dx);
    }
    if !sources.is_empty() {
        let mut dh_sum = vec![0.0; d];
        for g in [I, O, U] {
            grads.u[g].add_outer(&da[g], &t.h_sum);
            p.u[g].mul_t_vec_acc(&da[g], &mut dh_sum);
        }
        for (k, s) in sources.iter().enumerate() {
            grads.u[F].add_outer(&da_f[k], &s.h);
            let dhk = &mut d_sources[k].0;
            add_assign(dhk, &dh_sum);
            p.u[F].mul_t_vec_acc(&da_f[k], dhk);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Uni,
    Bi,
    Alternating,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uni" => Ok(Variant::Uni),
            "bi" => Ok(Variant::Bi),
            "alternating" => Ok(Variant::Alternating),
            other => Err(format!("unknown architecture '{other}' (expected uni, bi or alternating)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub layers: usize,
}

impl Architecture {
    pub fn new(variant: Variant, layers: usize) -> Result<Self> {
        let arch = Architecture { variant, layers };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("a tree-LSTM needs at least one layer".into()));
        }
        if self.variant == Variant::Alternating && self.layers.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "alternating stacks need an odd layer count (up, down, ..., up); got {}",
                self.layers
            )));
        }
        Ok(())
    }

    /// Which cells layer `k` holds: `(upward, downward)`.
    fn cells(&self, k: usize) -> (bool, bool) {
        let last = k + 1 == self.layers;
        match self.variant {
            Variant::Uni => (true, false),
            // The final layer's downward pass never reaches the root output.
            Variant::Bi => (true, !last),
            Variant::Alternating => (k.is_multiple_of(2), !k.is_multiple_of(2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub upward: Option<CellParams>,
    pub downward: Option<CellParams>,
}

impl EncoderLayer {
    fn output_dim(&self, hidden: usize) -> usize {
        hidden * (usize::from(self.upward.is_some()) + usize::from(self.downward.is_some()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLstmEncoder {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<EncoderLayer>,
}

impl TreeLstmEncoder {
    fn build(
        architecture: Architecture,
        input_dim: usize,
        hidden: usize,
        mut make: impl FnMut(usize, usize) -> CellParams,
    ) -> Result<Self> {
        architecture.validate()?;
        if input_dim == 0 || hidden == 0 {
            return Err(Error::Config("input and hidden sizes must be positive".into()));
        }
        let mut layers = Vec::with_capacity(architecture.layers);
        let mut width = input_dim;
        for k in 0..architecture.layers {
            let (up, down) = architecture.cells(k);
            let layer = EncoderLayer {
                upward: up.then(|| make(width, hidden)),
                downward: down.then(|| make(width, hidden)),
            };
            width = layer.output_dim(hidden);
            layers.push(layer);
        }
        Ok(TreeLstmEncoder {
            architecture,
            input_dim,
            hidden,
            layers,
        })
    }

    pub fn zeros(architecture: Architecture, input_dim: usize, hidden: usize) -> Result<Self> {
        Self::build(architecture, input_dim, hidden, CellParams::zeros)
    }

    pub fn init(architecture: Architecture, input_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(architecture, input_dim, hidden, |i, h| CellParams::init(i, h, &mut rng))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.architecture, self.input_dim, self.hidden).expect("shape already validated")
    }

    pub fn output_dim(&self) -> usize {
        self.hidden
    }

    /// Closed-form parameter count for an architecture.
    pub fn count_params(architecture: Architecture, input_dim: usize, hidden: usize) -> usize {
        let mut width = input_dim;
        let mut total = 0;
        for k in 0..architecture.layers {
            let (up, down) = architecture.cells(k);
            let cells = usize::from(up) + usize::from(down);
            total += cells * CellParams::count(width, hidden);
            width = cells * hidden;
        }
        total
    }

    pub fn forward(&self, topo: &Topology, rows: &[usize], table: &EmbeddingTable) -> Result<TreeLstmTrace> {
        if table.dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "embedding width {} differs from encoder input {}",
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
        let mut input: Vec<Vec<f64>> = rows.iter().map(|&r| table.row(r).to_vec()).collect();
        let mut layer_traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let up = layer
                .upward
                .as_ref()
                .map(|p| run_direction(p, topo, &input, Direction::Up));
            let down = layer
                .downward
                .as_ref()
                .map(|p| run_direction(p, topo, &input, Direction::Down));
            let output: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    let mut out = Vec::with_capacity(layer.output_dim(self.hidden));
                    if let Some(u) = &up {
                        out.extend_from_slice(&u[j].state.h);
                    }
                    if let Some(dn) = &down {
                        out.extend_from_slice(&dn[j].state.h);
                    }
                    out
                })
                .collect();
            layer_traces.push(LayerTrace { input, up, down });
            input = output;
        }
        let last = layer_traces.last().expect("at least one layer");
        let root = last.up.as_ref().expect("final layer runs upward")[0].state.h.clone();
        Ok(TreeLstmTrace {
            topo: topo.clone(),
            rows: rows.to_vec(),
            layers: layer_traces,
            output: root,
        })
    }

    /// Gradients of `upstream · output` with respect to every parameter and
    /// every embedding row the trace touched.
    pub fn backward(&self, trace: &TreeLstmTrace, upstream: &[f64]) -> Result<(TreeLstmEncoder, RowGrads)> {
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
        let topo = &trace.topo;
        let n = topo.len();
        let mut grads = self.zeros_like();
        let d = self.hidden;

        // Gradient w.r.t. each node's output of the current layer.
        let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
        d_out[0].copy_from_slice(upstream);

        for (k, (layer, lt)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let width = lt.input[0].len();
            let mut d_in = vec![vec![0.0; width]; n];
            let gl = &mut grads.layers[k];
            let mut offset = 0;
            if let (Some(p), Some(t)) = (&layer.upward, &lt.up) {
                let dh: Vec<Vec<f64>> = d_out.iter().map(|v| v[offset..offset + d].to_vec()).collect();
                backprop_direction(p, gl.upward.as_mut().unwrap(), topo, &lt.input, t, dh, &mut d_in, Direction::Up);
                offset += d;
            }
            if let (Some(p), Some(t)) = (&layer.downward, &lt.down) {
                let dh: Vec<Vec<f64>> = d_out.iter().map(|v| v[offset..offset + d].to_vec()).collect();
                backprop_direction(
                    p,
                    gl.downward.as_mut().unwrap(),
                    topo,
                    &lt.input,
                    t,
                    dh,
                    &mut d_in,
                    Direction::Down,
                );
            }
            d_out = d_in;
        }

        let mut rows = RowGrads::default();
        for (j, g) in d_out.iter().enumerate() {
            rows.add(trace.rows[j], g);
        }
        Ok((grads, rows))
    }

    /// Encodes a tree, looking kinds up through `vocab`.
    pub fn encode(&self, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
        let topo = ast.topology();
        let rows = topo.kinds.iter().map(|k| vocab.row(k)).collect::<Result<Vec<_>>>()?;
        Ok(self.forward(&topo, &rows, table)?.output)
    }
}

impl Parameters for TreeLstmEncoder {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            if let Some(p) = &layer.upward {
                out.extend(p.named(&format!("layer{k}.up")));
            }
            if let Some(p) = &layer.downward {
                out.extend(p.named(&format!("layer{k}.down")));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Some(p) = &mut layer.upward {
                out.extend(p.slices_mut());
            }
            if let Some(p) = &mut layer.downward {
                out.extend(p.slices_mut());
            }
        }
        out
    }
}

fn require(encoder: &TreeLstmEncoder, variant: Variant) -> Result<()> {
    if encoder.architecture.variant != variant {
        return Err(Error::Config(format!(
            "encoder is {:?}, expected {variant:?}",
            encoder.architecture.variant
        )));
    }
    Ok(())
}

pub fn encode_uni(encoder: &TreeLstmEncoder, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
    require(encoder, Variant::Uni)?;
    encoder.encode(ast, table, vocab)
}

pub fn encode_bi(encoder: &TreeLstmEncoder, ast: &Ast, table: &EmbeddingTable, vocab: &NodeVocab) -> Result<Vec<f64>> {
    require(encoder, Variant::Bi)?;
    encoder.encode(ast, table, vocab)
}

pub fn encode_alternating(
    encoder: &TreeLstmEncoder,
    ast: &Ast,
    table: &EmbeddingTable,
    vocab: &NodeVocab,
) -> Result<Vec<f64>> {
    require(encoder, Variant::Alternating)?;
    encoder.encode(ast, table, vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

fn sources(topo: &Topology, j: usize, dir: Direction) -> &[usize] {
    match dir {
        Direction::Up => &topo.children[j],
        Direction::Down => match &topo.parent[j] {
            Some(p) => std::slice::from_ref(p),
            None => &[],
        },
    }
}

fn run_direction(p: &CellParams, topo: &Topology, input: &[Vec<f64>], dir: Direction) -> Vec<CellTrace> {
    let n = topo.len();
    let mut traces: Vec<Option<CellTrace>> = vec![None; n];
    let order: Vec<usize> = match dir {
        Direction::Up => topo.post_order.clone(),
        Direction::Down => topo.pre_order().collect(),
    };
    for j in order {
        let src: Vec<&NodeState> = sources(topo, j, dir)
            .iter()
            .map(|&s| &traces[s].as_ref().expect("sources run first").state)
            .collect();
        let t = cell_step(p, &input[j], &src);
        traces[j] = Some(t);
    }
    traces.into_iter().map(|t| t.expect("every node visited")).collect()
}

#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    p: &CellParams,
    grads: &mut CellParams,
    topo: &Topology,
    input: &[Vec<f64>],
    traces: &[CellTrace],
    mut dh: Vec<Vec<f64>>,
    d_in: &mut [Vec<f64>],
    dir: Direction,
) {
    let n = topo.len();
    let d = p.hidden;
    let mut dc: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    // Reverse of the forward order: consumers before their sources.
    let order: Vec<usize> = match dir {
        Direction::Up => topo.post_order.iter().rev().copied().collect(),
        Direction::Down => topo.pre_order().rev().collect(),
    };
    for j in order {
        let src_ids = sources(topo, j, dir);
        let src: Vec<&NodeState> = src_ids.iter().map(|&s| &traces[s].state).collect();
        let mut d_src: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; d], vec![0.0; d]); src_ids.len()];
        cell_backprop(p, grads, &input[j], &traces[j], &src, &dh[j], &dc[j], &mut d_in[j], &mut d_src);
        for (&s, (gh, gc)) in src_ids.iter().zip(d_src) {
            add_assign(&mut dh[s], &gh);
            add_assign(&mut dc[s], &gc);
        }
    }
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Vec<Vec<f64>>,
    up: Option<Vec<CellTrace>>,
    down: Option<Vec<CellTrace>>,
}

/// Recorded forward pass of one tree, consumed by [`TreeLstmEncoder::backward`].
#[derive(Debug, Clone)]
pub struct TreeLstmTrace {
    topo: Topology,
    rows: Vec<usize>,
    layers: Vec<LayerTrace>,
    output: Vec<f64>,
}

impl TreeLstmTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Per-node hidden states of the final layer's upward pass.
    pub fn final_node_states(&self) -> Vec<&[f64]> {
        let last = self.layers.last().expect("at least one layer");
        last.up
            .as_ref()
            .expect("final layer runs upward")
            .iter()
            .map(|t| t.state.h.as_slice())
            .collect()
    }

    /// Downward hidden states of layer `k`, if that layer has a downward cell.
    pub fn downward_states(&self, k: usize) -> Option<Vec<&[f64]>> {
        self.layers
            .get(k)?
            .down
            .as_ref()
            .map(|ts| ts.iter().map(|t| t.state.h.as_slice()).collect())
    }
}
