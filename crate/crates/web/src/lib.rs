//! Browser demo: parse a program, train a tiny model on a synthetic corpus,
//! and compare two programs with it.
//!
//! The plain functions return JSON strings so they can be tested natively;
//! the `wasm_bindgen` wrappers only convert errors.

use perfdiff::ast::tree_stats;
use perfdiff::eval;
use perfdiff::minilang;
use perfdiff::pairs::{generate_pairs, split_submissions, Submission};
use perfdiff::synth::{generate_corpus, program_ast, reference_cost, Family, GenConfig};
use perfdiff::train::{ModelBundle, TrainConfig, Trainer};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Tree statistics, the tree itself, and what both synthetic cost models
/// would charge for it.
pub fn parse_program(source: &str) -> Result<String, String> {
    let ast = minilang::parse(source).map_err(|e| e.to_string())?.with_source_id("input");
    let stats = tree_stats(&ast);
    let kinds: serde_json::Map<String, serde_json::Value> = stats
        .kind_histogram
        .iter()
        .map(|(k, n)| (k.as_str().to_string(), (*n).into()))
        .collect();
    let canonical = minilang::print_ast(&ast).map_err(|e| e.to_string())?;
    let out = json!({
        "node_count": stats.node_count,
        "depth": stats.depth,
        "kinds": kinds,
        "cost": {
            "loop-depth": reference_cost(&ast, &Family::LoopDepth.cost_model()),
            "statement-count": reference_cost(&ast, &Family::StatementCount.cost_model()),
        },
        "canonical": canonical,
        "ast": serde_json::from_str::<serde_json::Value>(&ast.to_json()).map_err(|e| e.to_string())?,
    });
    Ok(out.to_string())
}

#[derive(Default)]
pub struct Demo {
    bundle: Option<ModelBundle>,
}

impl Demo {
    /// Trains on a loop-depth corpus and evaluates on held-out programs.
    /// Returns the epoch log plus test accuracy, AUC and ROC points.
    pub fn train(&mut self, seed: u64, n_programs: usize, epochs: usize) -> Result<String, String> {
        if !(10..=400).contains(&n_programs) {
            return Err(format!("program count {n_programs} outside 10..=400"));
        }
        if !(1..=50).contains(&epochs) {
            return Err(format!("epoch count {epochs} outside 1..=50"));
        }
        let err = |e: perfdiff::Error| e.to_string();
        let family = Family::LoopDepth;
        let subs = generate_corpus(&GenConfig::new(family, n_programs, seed))
            .map_err(err)?
            .iter()
            .map(|p| Submission::new(program_ast(p)?, p.cost, family.name()))
            .collect::<perfdiff::Result<Vec<_>>>()
            .map_err(err)?;
        let (rest, test) = split_submissions(subs, 0.25, seed).map_err(err)?;
        let (fit, valid) = split_submissions(rest, 0.2, seed + 1).map_err(err)?;
        let train_ds = generate_pairs(fit, 0.2, false, seed + 2).map_err(err)?;
        let valid_ds = generate_pairs(valid, 0.5, false, seed + 3).map_err(err)?;
        let test_ds = generate_pairs(test, 0.5, false, seed + 4).map_err(err)?;
        let cfg = TrainConfig {
            d: 8,
            lambda: 8,
            epochs,
            patience: 0,
            seed,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(cfg, &train_ds, &valid_ds).map_err(err)?;
        t.run().map_err(err)?;
        let outcome = t.outcome();
        let metrics = eval::evaluate(&outcome.bundle, &test_ds).map_err(err)?;
        let log: Vec<_> = outcome
            .log
            .iter()
            .map(|m| json!({ "epoch": m.epoch + 1, "loss": m.train_loss, "train_accuracy": m.train_accuracy, "valid_accuracy": m.valid_accuracy }))
            .collect();
        self.bundle = Some(outcome.bundle);
        Ok(json!({
            "train_pairs": train_ds.len(),
            "test_pairs": test_ds.len(),
            "best_epoch": outcome.best_epoch + 1,
            "log": log,
            "accuracy": metrics.accuracy,
            "auc": metrics.auc,
            "roc": metrics.roc,
        })
        .to_string())
    }

    /// Probability that `second` runs no slower than `first`.
    pub fn compare(&self, first: &str, second: &str) -> Result<String, String> {
        let bundle = self.bundle.as_ref().ok_or("train a model first")?;
        let a = minilang::parse(first).map_err(|e| format!("first program: {e}"))?;
        let b = minilang::parse(second).map_err(|e| format!("second program: {e}"))?;
        let (p, label) = bundle.predict(&a, &b).map_err(|e| e.to_string())?;
        Ok(json!({ "probability": p, "label": label }).to_string())
    }
}

#[wasm_bindgen(js_name = parseProgram)]
pub fn parse_program_js(source: &str) -> Result<String, JsError> {
    parse_program(source).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = Demo)]
#[derive(Default)]
pub struct DemoJs(Demo);

#[wasm_bindgen(js_class = Demo)]
impl DemoJs {
    #[wasm_bindgen(constructor)]
    pub fn new() -> DemoJs {
        DemoJs::default()
    }

    pub fn train(&mut self, seed: u32, n_programs: u32, epochs: u32) -> Result<String, JsError> {
        self.0
            .train(u64::from(seed), n_programs as usize, epochs as usize)
            .map_err(|e| JsError::new(&e))
    }

    pub fn compare(&self, first: &str, second: &str) -> Result<String, JsError> {
        self.0.compare(first, second).map_err(|e| JsError::new(&e))
    }
}
