mod common;

use common::*;
use perfdiff::ast::{normalize, Ast, AstNode};
use perfdiff::embed::{EmbeddingTable, NodeVocab};
use perfdiff::encoder::node_rows;
use perfdiff::eval::{accuracy, metrics_from_scores, roc_curve};
use perfdiff::gcn::GcnEncoder;
use perfdiff::minilang::{self, VOCABULARY};
use perfdiff::pairs::{filter_by_threshold, generate_pairs, Submission};
use perfdiff::synth::{generate_corpus, Family, GenConfig};
use perfdiff::treelstm::{Architecture, TreeLstmEncoder, Variant};
use perfdiff::Parameters;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn vocab() -> NodeVocab {
    NodeVocab::from_kinds((0..6).map(|k| format!("k{k}").as_str().into()), true)
}

fn table(seed: u64, dim: usize) -> EmbeddingTable {
    let mut r = rng(seed);
    let v = vocab();
    let data = (0..v.rows() * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    EmbeddingTable::from_data(v.rows(), dim, data).unwrap()
}

fn tree(seed: u64, n: usize) -> Ast {
    random_tree(&mut rng(seed), n, 5)
}

fn tree_lstm(variant: Variant, layers: usize, dim: usize, d: usize, seed: u64) -> TreeLstmEncoder {
    let mut enc = TreeLstmEncoder::zeros(Architecture::new(variant, layers).unwrap(), dim, d).unwrap();
    randomize(&mut enc, &mut rng(seed), 1.0);
    enc
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Same structure with node ids relabelled by a random permutation.
fn relabel(ast: &Ast, seed: u64) -> Ast {
    let mut ids: Vec<u64> = (0..ast.len() as u64).map(|i| i * 7 + 3).collect();
    ids.shuffle(&mut rng(seed));
    let map = |old: u64| ids[ast.nodes().iter().position(|n| n.id == old).unwrap()];
    let nodes = ast
        .nodes()
        .iter()
        .map(|n| AstNode {
            id: map(n.id),
            kind: n.kind.clone(),
            children: n.children.iter().map(|&c| map(c)).collect(),
        })
        .collect();
    Ast::new(ast.source_id(), None, map(ast.root()), nodes).unwrap()
}

fn variants() -> impl Strategy<Value = (Variant, usize)> {
    prop_oneof![
        (1usize..=3).prop_map(|l| (Variant::Uni, l)),
        (1usize..=3).prop_map(|l| (Variant::Bi, l)),
        prop_oneof![Just(1usize), Just(3)].prop_map(|l| (Variant::Alternating, l)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn child_order_does_not_matter(seed in any::<u64>(), n in 1usize..16, (variant, layers) in variants()) {
        let ast = tree(seed, n);
        let mut nodes = ast.nodes().to_vec();
        let mut r = rng(seed ^ 1);
        for node in &mut nodes {
            node.children.shuffle(&mut r);
        }
        let shuffled = Ast::new(ast.source_id(), None, ast.root(), nodes).unwrap();
        let enc = tree_lstm(variant, layers, 3, 4, seed);
        let (t, v) = (table(seed, 3), vocab());
        prop_assert_eq!(bits(&enc.encode(&ast, &t, &v).unwrap()), bits(&enc.encode(&shuffled, &t, &v).unwrap()));
    }

    #[test]
    fn relabelling_ids_keeps_encodings(seed in any::<u64>(), n in 1usize..16) {
        let ast = tree(seed, n);
        let other = relabel(&ast, seed);
        let (t, v) = (table(seed, 3), vocab());
        let enc = tree_lstm(Variant::Bi, 2, 3, 4, seed);
        let mut gcn = GcnEncoder::zeros(3, 4, 3).unwrap();
        randomize(&mut gcn, &mut rng(seed), 1.0);
        for (a, b) in [
            (enc.encode(&ast, &t, &v).unwrap(), enc.encode(&other, &t, &v).unwrap()),
            (gcn.encode(&ast, &t, &v).unwrap(), gcn.encode(&other, &t, &v).unwrap()),
        ] {
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hidden_states_are_bounded(seed in any::<u64>(), n in 1usize..16, (variant, layers) in variants()) {
        let enc = tree_lstm(variant, layers, 3, 5, seed);
        let mut big = table(seed, 3);
        big.as_mut_slice().iter_mut().for_each(|v| *v *= 50.0);
        let z = enc.encode(&tree(seed, n), &big, &vocab()).unwrap();
        prop_assert!(z.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_parameters_give_zero(seed in any::<u64>(), n in 1usize..16, (variant, layers) in variants()) {
        let enc = TreeLstmEncoder::zeros(Architecture::new(variant, layers).unwrap(), 3, 4).unwrap();
        let z = enc.encode(&tree(seed, n), &table(seed, 3), &vocab()).unwrap();
        prop_assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_layer_alternating_and_bi_equal_uni(seed in any::<u64>(), n in 1usize..16) {
        let uni = tree_lstm(Variant::Uni, 1, 3, 4, seed);
        let (t, v) = (table(seed, 3), vocab());
        let ast = tree(seed, n);
        let expected = bits(&uni.encode(&ast, &t, &v).unwrap());
        for variant in [Variant::Alternating, Variant::Bi] {
            let mut other = TreeLstmEncoder::zeros(Architecture::new(variant, 1).unwrap(), 3, 4).unwrap();
            other.load_flat(&uni.to_flat()).unwrap();
            prop_assert_eq!(bits(&other.encode(&ast, &t, &v).unwrap()), expected.clone());
        }
    }

    #[test]
    fn encoding_is_deterministic(seed in any::<u64>(), n in 1usize..16, (variant, layers) in variants()) {
        let enc = tree_lstm(variant, layers, 3, 4, seed);
        let (t, v, ast) = (table(seed, 3), vocab(), tree(seed, n));
        prop_assert_eq!(bits(&enc.encode(&ast, &t, &v).unwrap()), bits(&enc.clone().encode(&ast, &t, &v).unwrap()));
    }

    #[test]
    fn star_leaves_share_downward_state(seed in any::<u64>(), leaves in 2usize..7) {
        let mut nodes = vec![AstNode { id: 0, kind: "k0".into(), children: (1..=leaves as u64).collect() }];
        nodes.extend((1..=leaves as u64).map(|id| AstNode { id, kind: "k1".into(), children: vec![] }));
        let ast = Ast::new("star", None, 0, nodes).unwrap();
        let enc = tree_lstm(Variant::Bi, 2, 3, 4, seed);
        let topo = ast.topology();
        let rows = node_rows(&topo, &vocab()).unwrap();
        let trace = enc.forward(&topo, &rows, &table(seed, 3)).unwrap();
        let down = trace.downward_states(0).unwrap();
        for leaf in 2..=leaves {
            prop_assert_eq!(bits(down[leaf]), bits(down[1]));
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 1usize..30) {
        let ast = tree(seed, n).with_runtime(Some(1.5)).unwrap();
        let back = Ast::from_json(&ast.to_json()).unwrap();
        prop_assert_eq!(&back, &ast);
        prop_assert_eq!(back.to_json(), ast.to_json());
        for node in ast.nodes() {
            for c in &node.children {
                prop_assert!(ast.node(*c).is_some());
            }
        }
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>(), n in 2usize..30) {
        // Mark a random non-root node as a function definition.
        let ast = tree(seed, n);
        let mut nodes = ast.nodes().to_vec();
        let pick = 1 + (seed as usize % (n - 1));
        nodes[pick].kind = "function_def".into();
        let ast = Ast::new("x", None, 0, nodes).unwrap();
        let once = normalize(&ast).unwrap();
        prop_assert!(once.len() <= ast.len());
        prop_assert_eq!(normalize(&once).unwrap(), once);
    }

    #[test]
    fn threshold_filter_is_monotone(runtimes in prop::collection::vec(1.0f64..1000.0, 2..8), a in 0.0f64..500.0, b in 0.0f64..500.0) {
        let subs = runtimes.iter().enumerate().map(|(i, t)| {
            let ast = Ast::new(format!("s{i}"), None, 0, vec![AstNode { id: 0, kind: "root".into(), children: vec![] }]).unwrap();
            Submission::new(ast, *t, "p").unwrap()
        }).collect();
        let ds = generate_pairs(subs, 1.0, false, 0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(filter_by_threshold(&ds, hi).len() <= filter_by_threshold(&ds, lo).len());
        for p in &ds.pairs {
            let rev = ds.pairs.iter().find(|q| q.first == p.second && q.second == p.first).unwrap();
            if runtimes[p.first] != runtimes[p.second] {
                prop_assert_eq!(p.label + rev.label, 1);
            }
        }
    }

    #[test]
    fn roc_properties(scores in prop::collection::vec(0.0f64..1.0, 2..60), seed in any::<u64>()) {
        let mut r = rng(seed);
        let labels: Vec<u8> = scores.iter().map(|_| r.gen_range(0..2)).collect();
        let m = metrics_from_scores(&scores, &labels, 0.5).unwrap();
        prop_assert_eq!(m.roc[0], (0.0, 0.0));
        prop_assert_eq!(*m.roc.last().unwrap(), (1.0, 1.0));
        prop_assert!(m.roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        prop_assert!((0.0..=1.0).contains(&m.auc));
        // Order of the input pairs does not matter.
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.shuffle(&mut r);
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l2: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let m2 = metrics_from_scores(&s2, &l2, 0.5).unwrap();
        prop_assert_eq!(m2.accuracy, m.accuracy);
        prop_assert_eq!(m2.auc, m.auc);
        prop_assert_eq!(roc_curve(&s2, &l2), m.roc);
        // Accuracy is one minus the normalized Hamming distance.
        let hamming = scores.iter().zip(&labels).filter(|(s, l)| u8::from(**s >= 0.5) != **l).count();
        prop_assert!((accuracy(&scores, &labels, 0.5) - (1.0 - hamming as f64 / scores.len() as f64)).abs() < 1e-15);
    }
}

#[test]
fn generated_programs_round_trip_through_the_printer() {
    for family in [Family::LoopDepth, Family::StatementCount] {
        for p in generate_corpus(&GenConfig::new(family, 60, 21)).unwrap() {
            let ast = minilang::parse(&p.source).unwrap();
            let printed = minilang::print_ast(&ast).unwrap();
            let again = minilang::parse(&printed).unwrap();
            assert_eq!(again.nodes(), ast.nodes(), "{}", p.source);
            for node in ast.nodes() {
                assert!(VOCABULARY.contains(&node.kind.as_str()), "{}", node.kind.as_str());
            }
        }
    }
}
