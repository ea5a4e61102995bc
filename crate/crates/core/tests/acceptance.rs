//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p perfdiff-core --test acceptance`. A criterion whose
//! stated target contradicts its own derivation is reported as FAIL with the
//! analysis, and listed as a known defect; only unexpected failures make the
//! process exit non-zero.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::*;
use perfdiff::ast::Ast;
use perfdiff::encoder::{Encoder, EncoderKind};
use perfdiff::eval::{self, default_deltas, evaluate, metrics_from_scores, roc_curve, sensitivity_sweep};
use perfdiff::gcn::GcnEncoder;
use perfdiff::pairs::{generate_pairs, split_submissions, PairDataset, Submission};
use perfdiff::synth::{generate_corpus, program_ast, Family, GenConfig};
use perfdiff::train::{self, ModelBundle, TrainConfig, Trainer};
use perfdiff::treelstm::{cell_forward, Architecture, CellParams, NodeState, TreeLstmEncoder, Variant};
use perfdiff::Parameters;
use rand::Rng;

type Outcome = Result<String, String>;

struct Suite {
    failed: Vec<usize>,
    known: Vec<usize>,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, known_defect: bool, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id:>2}] {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                let note = if known_defect { " [known defect]" } else { "" };
                println!("FAIL [{id:>2}] {name} ({secs:.1}s){note}: {detail}");
                if known_defect {
                    self.known.push(id);
                } else {
                    self.failed.push(id);
                }
            }
        }
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
    }
}

// 1 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for tree in 0..50 {
        let n = rng.gen_range(1..=20);
        let dim = rng.gen_range(1..=4);
        let d = rng.gen_range(1..=8);
        let p = problem(&mut rng, n, dim, d);
        let encoders = [
            Encoder::TreeLstm(TreeLstmEncoder::zeros(Architecture::new(Variant::Uni, 2).unwrap(), dim, d).unwrap()),
            Encoder::TreeLstm(TreeLstmEncoder::zeros(Architecture::new(Variant::Bi, 2).unwrap(), dim, d).unwrap()),
            Encoder::TreeLstm(
                TreeLstmEncoder::zeros(Architecture::new(Variant::Alternating, 3).unwrap(), dim, d).unwrap(),
            ),
            Encoder::Gcn(GcnEncoder::zeros(dim, d, 3).unwrap()),
        ];
        for mut enc in encoders {
            randomize(&mut enc, &mut rng, 1.0);
            for (name, err) in gradient_check(&enc, &p) {
                checked += 1;
                worst = worst.max(err);
                if err >= 1e-4 {
                    return Err(format!("tree {tree} ({n} nodes, d={d}) {:?} {name}: {err:e}", enc.kind()));
                }
            }
        }
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("{checked} tensors over 50 trees, max relative error {worst:.2e}"))
}

// 2 ------------------------------------------------------------------------

fn scalar_oracle() -> Outcome {
    let mut cell = CellParams::zeros(1, 1);
    for t in cell.tensors_mut() {
        t.fill(1.0);
    }
    for b in &mut cell.b {
        b[0] = 0.0;
    }
    let child = NodeState { h: vec![1.0], c: vec![1.0] };
    let s = cell_forward(&cell, &[1.0], &[child]).map_err(|e| e.to_string())?;
    // Independent arithmetic.
    let sig = 1.0 / (1.0 + (-2.0f64).exp());
    let c = sig * 2.0f64.tanh() + sig * 1.0;
    let h = sig * c.tanh();
    let stated = 0.829318;
    let detail = format!(
        "c = {:.6}, h = {:.6}; scalar oracle h = {h:.6}; stated target {stated}",
        s.c[0], s.h[0]
    );
    if (s.c[0] - c).abs() > 1e-12 || (s.h[0] - h).abs() > 1e-12 {
        return Err(format!("implementation disagrees with the scalar oracle: {detail}"));
    }
    if (s.h[0] - stated).abs() < 1e-5 {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; the stated value is not reachable: its own steps give 0.880797·tanh(1.729907) = {h:.6}"
        ))
    }
}

// 3 ------------------------------------------------------------------------

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let (train_ds, valid) = separable_eight();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        seed: 0,
        epochs: 200,
        patience: 0,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg, &train_ds, &valid).map_err(|e| e.to_string())?;
    while !t.finished() {
        let m = t.run_epoch().map_err(|e| e.to_string())?;
        if m.train_accuracy == 1.0 {
            within(Duration::from_secs(30), start)?;
            return Ok(format!(
                "100% train accuracy after {} epochs (d=100, lambda=120, loss {:.4})",
                m.epoch + 1,
                m.train_loss
            ));
        }
    }
    let last = t.log().last().copied().unwrap();
    Err(format!("train accuracy {} after 200 epochs", last.train_accuracy))
}

// 4-7 ----------------------------------------------------------------------

fn corpus(family: Family, n: usize, seed: u64) -> Vec<Submission> {
    generate_corpus(&GenConfig::new(family, n, seed))
        .unwrap()
        .iter()
        .map(|p| Submission::new(program_ast(p).unwrap(), p.cost, family.name()).unwrap())
        .collect()
}

struct FamilyData {
    train: PairDataset,
    valid: PairDataset,
    test: PairDataset,
}

/// 400 programs (320 fit, 80 for model selection) and 100 disjoint test
/// programs from independent seeds.
fn family_data(family: Family, seed: u64) -> FamilyData {
    let (fit, sel) = split_submissions(corpus(family, 400, seed), 0.2, seed + 1).unwrap();
    FamilyData {
        train: generate_pairs(fit, 0.05, false, seed + 2).unwrap(),
        valid: generate_pairs(sel, 0.1, false, seed + 3).unwrap(),
        test: generate_pairs(corpus(family, 100, seed + 1000), 0.2, false, seed + 4).unwrap(),
    }
}

fn synth_config(encoder: EncoderKind) -> TrainConfig {
    TrainConfig {
        encoder,
        d: 16,
        lambda: 16,
        epochs: 10,
        patience: 0,
        seed: 7,
        ..TrainConfig::default()
    }
}

struct Synthetic {
    loop_family: FamilyData,
    count_family: FamilyData,
    tree_loop: ModelBundle,
    tree_count: ModelBundle,
    gcn_loop: ModelBundle,
    tree_loop_secs: f64,
}

fn synthetic() -> Result<Synthetic, String> {
    let loop_family = family_data(Family::LoopDepth, 100);
    let count_family = family_data(Family::StatementCount, 200);
    let start = Instant::now();
    let tree_loop = train::train(synth_config(EncoderKind::TreeLstm), &loop_family.train, &loop_family.valid)
        .map_err(|e| e.to_string())?
        .bundle;
    let tree_loop_secs = start.elapsed().as_secs_f64();
    let tree_count = train::train(synth_config(EncoderKind::TreeLstm), &count_family.train, &count_family.valid)
        .map_err(|e| e.to_string())?
        .bundle;
    let gcn_loop = train::train(synth_config(EncoderKind::Gcn), &loop_family.train, &loop_family.valid)
        .map_err(|e| e.to_string())?
        .bundle;
    Ok(Synthetic {
        loop_family,
        count_family,
        tree_loop,
        tree_count,
        gcn_loop,
        tree_loop_secs,
    })
}

fn generalization(s: &Synthetic) -> Outcome {
    let m = evaluate(&s.tree_loop, &s.loop_family.test).map_err(|e| e.to_string())?;
    let detail = format!(
        "test accuracy {:.4}, AUC {:.4} on {} pairs; trained on {} pairs in {:.1}s",
        m.accuracy,
        m.auc,
        m.n_pairs,
        s.loop_family.train.len(),
        s.tree_loop_secs
    );
    if s.tree_loop_secs > 600.0 {
        return Err(format!("{detail}; over the 10 minute budget"));
    }
    if m.accuracy >= 0.90 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sensitivity(s: &Synthetic) -> Outcome {
    let test = &s.loop_family.test;
    let deltas = default_deltas(test);
    let table = sensitivity_sweep(&s.tree_loop, test, &deltas).map_err(|e| e.to_string())?;
    let at_zero = table.rows[0].accuracy.ok_or("no pairs at delta 0")?;
    let p75 = table.rows[3].clone();
    let at_p75 = p75.accuracy.ok_or("no pairs at p75")?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.1}:{}:{:.4}", r.min_delta_ms, r.n_pairs, r.accuracy.unwrap_or(f64::NAN)))
        .collect();
    let detail = format!("acc@0 {at_zero:.4}, acc@p75({:.1}) {at_p75:.4}; rows {}", p75.min_delta_ms, rows.join(" "));
    if at_p75 >= at_zero {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cross_family(s: &Synthetic) -> Outcome {
    let bundles: BTreeMap<String, ModelBundle> = [
        ("loop-depth".to_string(), s.tree_loop.clone()),
        ("statement-count".to_string(), s.tree_count.clone()),
    ]
    .into();
    let datasets: BTreeMap<String, PairDataset> = [
        ("loop-depth".to_string(), s.loop_family.test.clone()),
        ("statement-count".to_string(), s.count_family.test.clone()),
    ]
    .into();
    let m = eval::cross_eval(&bundles, &datasets).map_err(|e| e.to_string())?;
    let a = &m.accuracy;
    let detail = format!(
        "rows train, cols test [loop, count]: [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
        a[0][0], a[0][1], a[1][0], a[1][1]
    );
    if a[0][0] >= a[0][1] && a[1][1] >= a[1][0] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn encoder_comparison(s: &Synthetic) -> Outcome {
    let tree = evaluate(&s.tree_loop, &s.loop_family.test).map_err(|e| e.to_string())?;
    let gcn = evaluate(&s.gcn_loop, &s.loop_family.test).map_err(|e| e.to_string())?;
    let detail = format!(
        "tree-LSTM {:.4} (AUC {:.4}) vs GCN {:.4} (AUC {:.4}), both d=16, lambda=16",
        tree.accuracy, tree.auc, gcn.accuracy, gcn.auc
    );
    if tree.accuracy >= gcn.accuracy {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 8 ------------------------------------------------------------------------

fn leaf_subs(runtimes: &[f64]) -> Vec<Submission> {
    runtimes
        .iter()
        .enumerate()
        .map(|(i, &t)| submission(&format!("s{i}"), "int f(){ return 0; }", t))
        .collect()
}

fn pair_invariants() -> Outcome {
    let mut rng = rng(8);
    for n in 2..=6usize {
        let runtimes: Vec<f64> = (0..n).map(|_| rng.gen_range(1..5) as f64).collect();
        let ds = generate_pairs(leaf_subs(&runtimes), 1.0, false, n as u64).map_err(|e| e.to_string())?;
        let got: BTreeSet<(usize, usize)> = ds.pairs.iter().map(|p| (p.first, p.second)).collect();
        let mut brute = BTreeSet::new();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    brute.insert((a, b));
                }
            }
        }
        if got != brute || ds.len() != n * (n - 1) {
            return Err(format!("N={n}: {} pairs, brute force {}", ds.len(), brute.len()));
        }
        for p in &ds.pairs {
            let (ta, tb) = (runtimes[p.first], runtimes[p.second]);
            let rev = ds.pairs.iter().find(|q| q.first == p.second && q.second == p.first).unwrap();
            if ta != tb && p.label + rev.label != 1 {
                return Err(format!("labels not anti-symmetric for {ta} vs {tb}"));
            }
            if p.label != u8::from(ta >= tb) {
                return Err("label disagrees with runtimes".into());
            }
        }
    }
    let runtimes: Vec<f64> = (0..30).map(|_| rng.gen_range(1.0..100.0)).collect();
    let (tr, te) = split_submissions(leaf_subs(&runtimes), 0.3, 4).map_err(|e| e.to_string())?;
    let tr = generate_pairs(tr, 0.5, true, 1).map_err(|e| e.to_string())?;
    let te = generate_pairs(te, 0.5, true, 2).map_err(|e| e.to_string())?;
    let ids = |d: &PairDataset| -> BTreeSet<String> {
        d.used_submissions().into_iter().map(|i| d.submissions[i].source_id.clone()).collect()
    };
    if !ids(&tr).is_disjoint(&ids(&te)) {
        return Err("train and test pairs share a submission".into());
    }
    let again = generate_pairs(tr.submissions.clone(), 0.5, true, 1).map_err(|e| e.to_string())?;
    if again.pairs != tr.pairs {
        return Err("same seed gave different pairs".into());
    }
    Ok("N(N-1) universe matches brute force for N=2..6; anti-symmetry, disjoint split, seeded determinism hold".into())
}

// 9 ------------------------------------------------------------------------

fn small_setup() -> (PairDataset, PairDataset) {
    let fam = |f: Family, seed| corpus(f, 24, seed);
    let (fit, sel) = split_submissions(fam(Family::LoopDepth, 9), 0.25, 1).unwrap();
    (
        generate_pairs(fit, 0.3, false, 2).unwrap(),
        generate_pairs(sel, 1.0, false, 3).unwrap(),
    )
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        d: 8,
        lambda: 6,
        epochs,
        batch_size: 8,
        patience: 0,
        seed: 11,
        architecture: Architecture::new(Variant::Alternating, 3).unwrap(),
        ..TrainConfig::default()
    }
}

fn determinism_and_persistence() -> Outcome {
    let (tr, va) = small_setup();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let out = train::train(small_config(5), &tr, &va).unwrap();
            let path = dir.path().join(format!("m{k}.pdif"));
            train::save_model(&out.bundle, &path).unwrap();
            std::fs::read(path).unwrap()
        })
        .collect();
    if files[0] != files[1] {
        return Err("two runs with the same seed wrote different model files".into());
    }
    let path = dir.path().join("m0.pdif");
    let original = ModelBundle::from_bytes(&files[0]).map_err(|e| e.to_string())?;
    let loaded = train::load_model(&path).map_err(|e| e.to_string())?;
    let probe: &Ast = &tr.submissions[0].ast;
    let z1 = original.encode(probe).map_err(|e| e.to_string())?;
    let z2 = loaded.encode(probe).map_err(|e| e.to_string())?;
    if z1.iter().map(|v| v.to_bits()).ne(z2.iter().map(|v| v.to_bits())) {
        return Err("loaded model encodes differently".into());
    }

    let mut straight = Trainer::new(small_config(5), &tr, &va).map_err(|e| e.to_string())?;
    straight.run().map_err(|e| e.to_string())?;
    let mut first = Trainer::new(small_config(5), &tr, &va).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        first.run_epoch().map_err(|e| e.to_string())?;
    }
    let ckpt = dir.path().join("ckpt.pdif");
    first.save_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    drop(first);
    let bytes = std::fs::read(&ckpt).map_err(|e| e.to_string())?;
    let mut resumed = Trainer::resume(&bytes, None, &tr, &va).map_err(|e| e.to_string())?;
    resumed.run().map_err(|e| e.to_string())?;
    if resumed.epochs_done() != 5 || straight.checkpoint_bytes() != resumed.checkpoint_bytes() {
        return Err("3 epochs + checkpoint + 2 epochs differs from 5 straight epochs".into());
    }
    if straight.outcome().bundle.to_bytes() != resumed.outcome().bundle.to_bytes() {
        return Err("best bundles differ after resume".into());
    }
    Ok(format!(
        "identical {}-byte model files, bitwise encodings after reload, 5 == 3+2 epochs via checkpoint",
        files[0].len()
    ))
}

// 10 -----------------------------------------------------------------------

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn roc_correctness() -> Outcome {
    let perfect = metrics_from_scores(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0], 0.5).map_err(|e| e.to_string())?;
    if perfect.auc != 1.0 {
        return Err(format!("perfect ranking AUC {}", perfect.auc));
    }
    let constant = metrics_from_scores(&[0.5; 10], &[1, 0, 1, 0, 1, 1, 0, 0, 1, 0], 0.5).map_err(|e| e.to_string())?;
    if constant.auc != 0.5 {
        return Err(format!("constant score AUC {}", constant.auc));
    }
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.gen_range(2..=200);
        // Coarse scores force ties.
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let roc = roc_curve(&scores, &labels);
        if roc[0] != (0.0, 0.0) || *roc.last().unwrap() != (1.0, 1.0) {
            return Err(format!("trial {trial}: endpoints {:?} .. {:?}", roc[0], roc.last().unwrap()));
        }
        let m = metrics_from_scores(&scores, &labels, 0.5).map_err(|e| e.to_string())?;
        let diff = (m.auc - brute_auc(&scores, &labels)).abs();
        worst = worst.max(diff);
        if diff > 1e-12 {
            return Err(format!("trial {trial}: AUC {} vs brute force {}", m.auc, brute_auc(&scores, &labels)));
        }
    }
    Ok(format!(
        "perfect 1.0, constant 0.5, exact endpoints; 200 random sets (n <= 200) match the pairwise oracle (max diff {worst:.1e})"
    ))
}

fn main() {
    let mut suite = Suite {
        failed: Vec::new(),
        known: Vec::new(),
    };
    suite.run(1, "gradient correctness", false, gradient_correctness);
    suite.run(2, "scalar oracle", true, scalar_oracle);
    suite.run(3, "overfit sanity", false, overfit_sanity);
    let start = Instant::now();
    let synth = synthetic();
    println!("     synthetic models trained in {:.1}s", start.elapsed().as_secs_f64());
    match synth {
        Ok(s) => {
            suite.run(4, "synthetic generalization", false, || generalization(&s));
            suite.run(5, "sensitivity monotonicity", false, || sensitivity(&s));
            suite.run(6, "cross-family ordering", false, || cross_family(&s));
            suite.run(7, "encoder comparison", false, || encoder_comparison(&s));
        }
        Err(e) => {
            for (id, name) in [
                (4, "synthetic generalization"),
                (5, "sensitivity monotonicity"),
                (6, "cross-family ordering"),
                (7, "encoder comparison"),
            ] {
                let e = e.clone();
                suite.run(id, name, false, move || Err(e));
            }
        }
    }
    suite.run(8, "pair-engine invariants", false, pair_invariants);
    suite.run(9, "determinism and persistence", false, determinism_and_persistence);
    suite.run(10, "ROC correctness", false, roc_correctness);
    println!(
        "acceptance: {} passed, {} failed, {} known defects {:?}",
        10 - suite.failed.len() - suite.known.len(),
        suite.failed.len(),
        suite.known.len(),
        suite.known
    );
    if !suite.failed.is_empty() {
        std::process::exit(1);
    }
}
