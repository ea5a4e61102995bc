use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use perfdiff::ast::{normalize, tree_stats, Ast};
use perfdiff::encoder::EncoderKind;
use perfdiff::eval::{self, CrossMatrix};
use perfdiff::pairs::{
    generate_pairs_with, holdout_pairs, load_manifest, load_pairs, save_pairs, split_submissions, PairDataset,
    PairOptions, Split,
};
use perfdiff::synth::{corpus_to_manifest, generate_corpus, Family, GenConfig};
use perfdiff::train::{derive_seed, load_model, save_model, EpochMetrics, ModelBundle, TrainConfig, Trainer};
use perfdiff::treelstm::Variant;
use perfdiff::{minilang, Error};
use serde_json::json;

use crate::{EvalArgs, ExportArgs, GenArgs, Global, PairsArgs, ParseArgs, PredictArgs, TrainArgs};

/// Bad invocation: exit code 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 1,
                Error::Shape(_) | Error::Diverged { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if cause.is::<perfdiff::ast::AstError>() || cause.is::<minilang::MiniLangError>() {
            return 2;
        }
    }
    3
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// AST JSON as stored, anything else as source text.
fn load_program(path: &Path) -> Result<Ast> {
    let text = read_text(path)?;
    let ast = if path.extension().is_some_and(|e| e == "json") {
        Ast::from_json(&text).with_context(|| path.display().to_string())?
    } else {
        minilang::parse(&text)
            .with_context(|| path.display().to_string())?
            .with_source_id(stem(path))
    };
    Ok(ast)
}

fn no_config(g: &Global, command: &str) -> Result<()> {
    match &g.config {
        Some(_) => Err(usage(format!("--config applies to train, not {command}"))),
        None => Ok(()),
    }
}

pub fn parse(g: &Global, a: ParseArgs) -> Result<()> {
    no_config(g, "parse")?;
    let mut ast = load_program(&a.file)?;
    if a.normalize {
        ast = normalize(&ast)?;
    }
    if a.stats {
        let s = tree_stats(&ast);
        let kinds: BTreeMap<&str, usize> = s.kind_histogram.iter().map(|(k, n)| (k.as_str(), *n)).collect();
        let out = json!({
            "source_id": ast.source_id(),
            "node_count": s.node_count,
            "depth": s.depth,
            "kinds": kinds,
        });
        println!("{out}");
    }
    match &a.output {
        Some(path) => write_text(path, &ast.to_json())?,
        None if !a.stats => println!("{}", ast.to_json()),
        None => {}
    }
    Ok(())
}

pub fn gen(g: &Global, a: GenArgs) -> Result<()> {
    no_config(g, "gen")?;
    let family: Family = a.family.parse().map_err(usage)?;
    let seed = g.seed.unwrap_or(0);
    let mut cfg = GenConfig::new(family, a.n, seed);
    cfg.max_loop_depth = a.max_depth;
    cfg.max_statements = a.max_statements;
    cfg.validate()?;
    let corpus = generate_corpus(&cfg)?;
    let manifest = corpus_to_manifest(&corpus, &a.output)?;
    g.log.event(
        "gen",
        json!({ "programs": corpus.len(), "family": family.name(), "seed": seed, "manifest": manifest }),
        || format!("wrote {} {} programs to {}", corpus.len(), family, manifest.display()),
    );
    println!("{}", manifest.display());
    Ok(())
}

pub fn pairs(g: &Global, a: PairsArgs) -> Result<()> {
    no_config(g, "pairs")?;
    let seed = g.seed.unwrap_or(0);
    let opts = |seed| PairOptions {
        ratio: a.ratio,
        symmetric: a.symmetric,
        cross_problem: a.cross_problem_pairs,
        seed,
    };
    if !(a.ratio > 0.0 && a.ratio <= 1.0) {
        return Err(usage(format!("--ratio {} outside (0, 1]", a.ratio)));
    }
    let subs = load_manifest(&a.manifest)?;
    let n = subs.len();
    match (a.test_fraction, &a.test_out) {
        (Some(frac), Some(test_out)) => {
            let (fit, held) = split_submissions(subs, frac, seed)?;
            let train = generate_pairs_with(fit, &opts(derive_seed(seed, 1)))?;
            let test = generate_pairs_with(held, &opts(derive_seed(seed, 2)))?.with_split(Split::Test);
            save_pairs(&train, &a.output)?;
            save_pairs(&test, test_out)?;
            g.log.event(
                "pairs",
                json!({ "submissions": n, "train_pairs": train.len(), "test_pairs": test.len(), "seed": seed }),
                || format!("{n} submissions: {} train pairs, {} test pairs", train.len(), test.len()),
            );
        }
        _ => {
            let ds = generate_pairs_with(subs, &opts(seed))?;
            save_pairs(&ds, &a.output)?;
            g.log.event("pairs", json!({ "submissions": n, "pairs": ds.len(), "seed": seed }), || {
                format!("{n} submissions: {} pairs", ds.len())
            });
        }
    }
    Ok(())
}

fn base_config(g: &Global) -> Result<TrainConfig> {
    let mut cfg = match &g.config {
        Some(path) => TrainConfig::from_json(&read_text(path)?).with_context(|| path.display().to_string())?,
        None => TrainConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_flags(cfg: &mut TrainConfig, a: &TrainArgs) -> Result<()> {
    if let Some(e) = &a.encoder {
        cfg.encoder = e.parse::<EncoderKind>().map_err(usage)?;
    }
    if let Some(v) = &a.arch {
        cfg.architecture.variant = v.parse::<Variant>().map_err(usage)?;
    }
    if let Some(l) = a.layers {
        cfg.architecture.layers = l;
        cfg.gcn_layers = l;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(d => d, lambda => lambda, epochs => epochs, lr => learning_rate, batch_size => batch_size, patience => patience);
    Ok(())
}

/// `layers=1,2;d=50,100` expands to the cartesian product, layers outer.
fn grid(spec: &str, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
    let mut layers = vec![None];
    let mut widths = vec![None];
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("grid entry '{part}' is not key=v1,v2")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<usize>().map(Some))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| usage(format!("grid values for '{key}' must be positive integers")))?;
        match key.trim() {
            "layers" => layers = values,
            "d" => widths = values,
            other => return Err(usage(format!("unknown grid key '{other}' (expected layers or d)"))),
        }
    }
    let mut out = Vec::new();
    for l in &layers {
        for d in &widths {
            let mut cfg = base.clone();
            if let Some(l) = l {
                cfg.architecture.layers = *l;
                cfg.gcn_layers = *l;
            }
            if let Some(d) = d {
                cfg.d = *d;
            }
            cfg.validate()?;
            out.push(cfg);
        }
    }
    Ok(out)
}

fn log_epoch(g: &Global, run: Option<usize>, m: &EpochMetrics) {
    g.log.event(
        "epoch",
        json!({
            "run": run,
            "epoch": m.epoch,
            "train_loss": m.train_loss,
            "train_accuracy": m.train_accuracy,
            "valid_accuracy": m.valid_accuracy,
        }),
        || {
            format!(
                "epoch {:>3}  loss {:.5}  train acc {:.4}  valid acc {:.4}",
                m.epoch + 1,
                m.train_loss,
                m.train_accuracy,
                m.valid_accuracy
            )
        },
    );
}

fn run_trainer(g: &Global, t: &mut Trainer, run: Option<usize>, checkpoint: Option<&PathBuf>) -> Result<()> {
    while !t.finished() {
        let m = t.run_epoch()?;
        log_epoch(g, run, &m);
        if let Some(path) = checkpoint {
            t.save_checkpoint(path)?;
        }
    }
    Ok(())
}

pub fn train(g: &Global, a: TrainArgs) -> Result<()> {
    let mut cfg = base_config(g)?;
    apply_flags(&mut cfg, &a)?;
    let resume_only = [a.encoder.is_some(), a.arch.is_some(), a.layers.is_some(), a.d.is_some()]
        .into_iter()
        .chain([a.lambda.is_some(), a.lr.is_some(), a.batch_size.is_some(), a.patience.is_some()])
        .chain([g.config.is_some()])
        .any(|set| set);
    if a.resume.is_some() && resume_only {
        return Err(usage("--resume takes its settings from the checkpoint; only --epochs may be given"));
    }
    let configs = match &a.grid {
        Some(spec) => grid(spec, &cfg)?,
        None => {
            cfg.validate()?;
            vec![cfg]
        }
    };

    let train_all = load_pairs(&a.pairs)?;
    let (train_ds, valid_ds): (PairDataset, PairDataset) = match &a.valid {
        Some(path) => (train_all, load_pairs(path)?),
        None => holdout_pairs(&train_all, a.valid_fraction, derive_seed(configs[0].seed, 3))?,
    };

    if let Some(path) = &a.resume {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut t = Trainer::resume(&bytes, a.epochs, &train_ds, &valid_ds)
            .with_context(|| format!("resuming from {}", path.display()))?;
        run_trainer(g, &mut t, None, a.checkpoint.as_ref())?;
        return finish(g, &a.output, t.outcome().bundle, t.outcome().best_epoch, t.log());
    }

    let mut best: Option<(f64, ModelBundle, usize)> = None;
    for (i, cfg) in configs.iter().enumerate() {
        let run = a.grid.as_ref().map(|_| i);
        let mut t = Trainer::new(cfg.clone(), &train_ds, &valid_ds)?;
        run_trainer(g, &mut t, run, a.checkpoint.as_ref())?;
        let outcome = t.outcome();
        let acc = outcome.log.get(outcome.best_epoch).map_or(f64::NAN, |m| m.valid_accuracy);
        if a.grid.is_some() {
            let row = json!({
                "layers": cfg.architecture.layers,
                "d": cfg.d,
                "best_epoch": outcome.best_epoch,
                "valid_accuracy": acc,
            });
            println!("{row}");
        }
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, outcome.bundle, outcome.best_epoch));
        }
        if a.grid.is_none() {
            let (_, bundle, epoch) = best.take().expect("one run");
            return finish(g, &a.output, bundle, epoch, &outcome.log);
        }
    }
    let (acc, bundle, epoch) = best.expect("grid is never empty");
    save_model(&bundle, &a.output)?;
    g.log.event(
        "saved",
        json!({ "path": a.output, "layers": bundle.config.architecture.layers, "d": bundle.config.d, "valid_accuracy": acc, "best_epoch": epoch }),
        || format!("best run (layers {}, d {}) saved to {}", bundle.config.architecture.layers, bundle.config.d, a.output.display()),
    );
    Ok(())
}

fn finish(g: &Global, output: &Path, bundle: ModelBundle, best_epoch: usize, log: &[EpochMetrics]) -> Result<()> {
    save_model(&bundle, output)?;
    let acc = log.get(best_epoch).map(|m| m.valid_accuracy);
    g.log.event(
        "saved",
        json!({ "path": output, "best_epoch": best_epoch, "valid_accuracy": acc }),
        || format!("best epoch {} saved to {}", best_epoch + 1, output.display()),
    );
    Ok(())
}

fn tagged(specs: &[String], flag: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for s in specs {
        let (tag, path) = match s.split_once('=') {
            Some((t, p)) => (t.to_string(), PathBuf::from(p)),
            None => (stem(Path::new(s)), PathBuf::from(s)),
        };
        if out.insert(tag.clone(), path).is_some() {
            return Err(usage(format!("{flag}: tag '{tag}' given twice")));
        }
    }
    Ok(out)
}

pub fn eval(g: &Global, a: EvalArgs) -> Result<()> {
    no_config(g, "eval")?;
    let model_paths = tagged(&a.model, "--model")?;
    let pair_paths = tagged(&a.pairs, "--pairs")?;
    let single = model_paths.len() == 1 && pair_paths.len() == 1;
    if !single && a.report.is_some() {
        return Err(usage("--report needs exactly one --model and one --pairs"));
    }
    let models = model_paths
        .iter()
        .map(|(t, p)| Ok((t.clone(), load_model(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let datasets = pair_paths
        .iter()
        .map(|(t, p)| Ok((t.clone(), load_pairs(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    if single {
        let (mtag, bundle) = models.iter().next().expect("one model");
        let (dtag, ds) = datasets.iter().next().expect("one pair set");
        let report = eval::report(bundle, ds, a.deltas.as_deref())?;
        g.log.event(
            "eval",
            json!({ "model": mtag, "pairs": dtag, "n_pairs": report.metrics.n_pairs, "accuracy": report.metrics.accuracy, "auc": report.metrics.auc }),
            || format!("{mtag} on {dtag}: {} pairs, accuracy {:.4}, AUC {:.4}", report.metrics.n_pairs, report.metrics.accuracy, report.metrics.auc),
        );
        let text = serde_json::to_string_pretty(&report)?;
        match &a.report {
            Some(path) => write_text(path, &text)?,
            None => println!("{text}"),
        }
        if let Some(path) = &a.csv {
            let m = CrossMatrix {
                rows: vec![mtag.clone()],
                cols: vec![dtag.clone()],
                accuracy: vec![vec![report.metrics.accuracy]],
            };
            write_text(path, &m.to_csv())?;
        }
        return Ok(());
    }

    let matrix = eval::cross_eval(&models, &datasets)?;
    match &a.csv {
        Some(path) => write_text(path, &matrix.to_csv())?,
        None => print!("{}", matrix.to_csv()),
    }
    g.log.event("eval", json!({ "models": matrix.rows, "pairs": matrix.cols }), || {
        format!("{} x {} accuracy matrix", matrix.rows.len(), matrix.cols.len())
    });
    Ok(())
}

pub fn predict(g: &Global, a: PredictArgs) -> Result<()> {
    no_config(g, "predict")?;
    let bundle = load_model(&a.model)?;
    let first = load_program(&a.first)?;
    let second = load_program(&a.second)?;
    let (p, label) = bundle.predict(&first, &second)?;
    let verdict = if label == 1 { "second is faster or equal" } else { "first is faster" };
    println!(
        "{}",
        json!({ "first": first.source_id(), "second": second.source_id(), "probability": p, "label": label, "verdict": verdict })
    );
    Ok(())
}

pub fn export_embeddings(g: &Global, a: ExportArgs) -> Result<()> {
    no_config(g, "export-embeddings")?;
    let bundle = load_model(&a.model)?;
    let asts = a.files.iter().map(|f| load_program(f)).collect::<Result<Vec<_>>>()?;
    let (trees, nodes) = eval::export_embeddings(&bundle, &asts)?;
    write_text(&a.out_trees, &trees)?;
    write_text(&a.out_nodes, &nodes)?;
    g.log.event("export", json!({ "trees": asts.len(), "kinds": bundle.embeddings.rows() }), || {
        format!("{} tree encodings, {} node embeddings", asts.len(), bundle.embeddings.rows())
    });
    Ok(())
}
