//! Test-only oracles: random trees and central finite differences. Nothing
//! here touches the analytic backward passes.
#![allow(dead_code)]

use perfdiff::ast::{Ast, AstNode, Topology};
use perfdiff::embed::{EmbeddingTable, NodeVocab};
use perfdiff::encoder::{node_rows, Encoder};
use perfdiff::minilang;
use perfdiff::pairs::{generate_pairs, PairDataset, Submission};
use perfdiff::Parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree with `n` nodes: node `i > 0` hangs under a uniformly chosen
/// earlier node, kinds drawn from `k0..k{kinds-1}`.
pub fn random_tree(rng: &mut impl Rng, n: usize, kinds: usize) -> Ast {
    let mut nodes: Vec<AstNode> = (0..n)
        .map(|i| AstNode {
            id: i as u64,
            kind: format!("k{}", rng.gen_range(0..kinds)).as_str().into(),
            children: vec![],
        })
        .collect();
    for i in 1..n {
        let p = rng.gen_range(0..i);
        nodes[p].children.push(i as u64);
    }
    Ast::new(format!("t{n}"), None, 0, nodes).unwrap()
}

pub fn randomize(params: &mut impl Parameters, rng: &mut impl Rng, scale: f64) {
    for t in params.tensors_mut() {
        for v in t {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

pub struct Problem {
    pub topo: Topology,
    pub rows: Vec<usize>,
    pub table: EmbeddingTable,
    pub vocab: NodeVocab,
    pub upstream: Vec<f64>,
}

pub fn objective(enc: &Encoder, p: &Problem, table: &EmbeddingTable) -> f64 {
    let z = enc.forward(&p.topo, &p.rows, table).unwrap();
    z.output().iter().zip(&p.upstream).map(|(a, b)| a * b).sum()
}

/// Worst relative error per tensor (encoder tensors, then "embeddings").
pub fn gradient_check(enc: &Encoder, p: &Problem) -> Vec<(String, f64)> {
    let trace = enc.forward(&p.topo, &p.rows, &p.table).unwrap();
    let (grads, row_grads) = enc.backward(&trace, &p.upstream).unwrap();
    let mut report = Vec::new();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();
    let mut probe = enc.clone();
    for (ti, (name, ga)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for e in 0..ga.len() {
            let orig = probe.tensors_mut()[ti][e];
            probe.tensors_mut()[ti][e] = orig + FD_STEP;
            let up = objective(&probe, p, &p.table);
            probe.tensors_mut()[ti][e] = orig - FD_STEP;
            let down = objective(&probe, p, &p.table);
            probe.tensors_mut()[ti][e] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(ga[e], numeric));
        }
        report.push((name.clone(), worst));
    }
    // Embedding rows, touched or not.
    let mut table = p.table.clone();
    let dim = table.dim();
    let mut worst: f64 = 0.0;
    for r in 0..table.rows() {
        for c in 0..dim {
            let orig = table.row(r)[c];
            table.row_mut(r)[c] = orig + FD_STEP;
            let up = objective(enc, p, &table);
            table.row_mut(r)[c] = orig - FD_STEP;
            let down = objective(enc, p, &table);
            table.row_mut(r)[c] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = row_grads.get(r).map_or(0.0, |g| g[c]);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    report.push(("embeddings".into(), worst));
    report
}

pub fn problem(rng: &mut ChaCha8Rng, n: usize, dim: usize, out_dim: usize) -> Problem {
    let ast = random_tree(rng, n, 5);
    let vocab = NodeVocab::from_kinds((0..6).map(|k| format!("k{k}").as_str().into()), true);
    let data = (0..vocab.rows() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let table = EmbeddingTable::from_data(vocab.rows(), dim, data).unwrap();
    let topo = ast.topology();
    let rows = node_rows(&topo, &vocab).unwrap();
    let upstream = (0..out_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Problem {
        topo,
        rows,
        table,
        vocab,
        upstream,
    }
}

pub fn submission(id: &str, src: &str, t: f64) -> Submission {
    let ast = minilang::parse(src).unwrap().with_source_id(id);
    Submission::new(ast, t, "toy").unwrap()
}

/// Slow programs contain a `for` loop, fast ones do not.
pub fn separable_eight() -> (PairDataset, PairDataset) {
    let slow = [
        "int f(int n){ int s = 0; for (int i = 0; i < n; i++) { s += i; } return s; }",
        "int f(int n){ for (int i = 0; i < n; i++) { g(i); } return 0; }",
        "int f(int a[], int n){ int m = 0; for (int i = 0; i < n; i++) { m = a[i]; } return m; }",
        "int f(int n){ int x = 1; for (;;) { x = x * 2; } }",
    ];
    let fast = [
        "int f(int n){ return n; }",
        "int f(int n){ int s = n * 2; return s; }",
        "int f(int a[]){ a[0] = 1; return a[0]; }",
        "int f(int n){ if (n > 0) { return 1; } return 0; }",
    ];
    let mut subs = Vec::new();
    for (i, s) in slow.iter().enumerate() {
        subs.push(submission(&format!("slow{i}"), s, 100.0 + i as f64));
    }
    for (i, s) in fast.iter().enumerate() {
        subs.push(submission(&format!("fast{i}"), s, 1.0 + i as f64));
    }
    let mut ds = generate_pairs(subs, 1.0, false, 0).unwrap();
    // Four (slow, fast) and four (fast, slow) pairs, all cross-class.
    let pick = [(0, 4), (1, 5), (2, 6), (3, 7), (4, 1), (5, 2), (6, 3), (7, 0)];
    ds.pairs = pick
        .iter()
        .map(|&(a, b)| {
            *ds.pairs
                .iter()
                .find(|p| p.first == a && p.second == b)
                .expect("pair present at ratio 1")
        })
        .collect();
    let valid = generate_pairs(
        vec![
            submission("vslow", "int f(int n){ for (int j = 0; j < n; j++) { g(j); } return 1; }", 50.0),
            submission("vfast", "int f(int n){ return n + 1; }", 2.0),
        ],
        1.0,
        false,
        0,
    )
    .unwrap();
    (ds, valid)
}
