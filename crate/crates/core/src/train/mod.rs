//! Mini-batch training of embeddings, encoder and classifier on labelled
//! pairs, plus model persistence and prediction.

mod file;
pub mod optim;

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::Ast;
use crate::classifier::{bce_loss, decide, ClassifierParams};
use crate::embed::{build_vocab, init_embeddings, EmbeddingTable, NodeVocab, RowGrads};
use crate::encoder::{node_rows, Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::eval;
use crate::gcn::{GcnEncoder, DEFAULT_LAYERS};
use crate::linalg::sigmoid;
use crate::pairs::PairDataset;
use crate::params::Parameters;
use crate::par;
use crate::treelstm::{Architecture, TreeLstmEncoder, Variant};

pub use file::{Sections, FORMAT_VERSION, MAGIC};
use file::{f64s_from_bytes, f64s_to_bytes, Reader};
use optim::{Adam, AdamConfig, LazyAdam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub encoder: EncoderKind,
    pub architecture: Architecture,
    /// Depth of the GCN baseline; ignored by the tree-LSTM.
    pub gcn_layers: usize,
    /// Hidden width (tree-LSTM) or layer width (GCN).
    pub d: usize,
    /// Embedding length.
    pub lambda: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a better validation accuracy; 0
    /// disables early stopping.
    pub patience: usize,
    pub seed: u64,
    pub threshold: f64,
    pub unknown_slot: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderKind::TreeLstm,
            architecture: Architecture {
                variant: Variant::Uni,
                layers: 1,
            },
            gcn_layers: DEFAULT_LAYERS,
            d: 100,
            lambda: 120,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            patience: 10,
            seed: 0,
            threshold: 0.5,
            unknown_slot: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("lambda", self.lambda),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("gcn_layers", self.gcn_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        self.architecture.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sorted keys, no whitespace.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_value(self).expect("config serializes").to_string()
    }
}

/// Independent sub-seed `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_EMBED: u64 = 1;
const STREAM_ENCODER: u64 = 2;
const STREAM_SHUFFLE: u64 = 1 << 32;

/// Everything needed to encode and compare programs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: TrainConfig,
    pub vocab: NodeVocab,
    pub embeddings: EmbeddingTable,
    pub encoder: Encoder,
    pub classifier: ClassifierParams,
}

fn empty_encoder(config: &TrainConfig) -> Result<Encoder> {
    Ok(match config.encoder {
        EncoderKind::TreeLstm => Encoder::TreeLstm(TreeLstmEncoder::zeros(config.architecture, config.lambda, config.d)?),
        EncoderKind::Gcn => Encoder::Gcn(GcnEncoder::zeros(config.lambda, config.d, config.gcn_layers)?),
    })
}

impl ModelBundle {
    /// Fresh parameters: random embeddings and encoder, zero classifier.
    pub fn init(config: TrainConfig, vocab: NodeVocab) -> Result<Self> {
        config.validate()?;
        let embeddings = init_embeddings(&vocab, config.lambda, derive_seed(config.seed, STREAM_EMBED))?;
        let enc_seed = derive_seed(config.seed, STREAM_ENCODER);
        let encoder = match config.encoder {
            EncoderKind::TreeLstm => {
                Encoder::TreeLstm(TreeLstmEncoder::init(config.architecture, config.lambda, config.d, enc_seed)?)
            }
            EncoderKind::Gcn => Encoder::Gcn(GcnEncoder::init(config.lambda, config.d, config.gcn_layers, enc_seed)?),
        };
        let classifier = ClassifierParams::zeros(encoder.output_dim());
        Ok(ModelBundle {
            config,
            vocab,
            embeddings,
            encoder,
            classifier,
        })
    }

    pub fn encode(&self, ast: &Ast) -> Result<Vec<f64>> {
        self.encoder.encode(ast, &self.embeddings, &self.vocab)
    }

    pub fn probability(&self, z_first: &[f64], z_second: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.classifier.logit(z_first, z_second)?))
    }

    /// Probability that `b` is at least as fast as `a`, and the label at the
    /// bundle threshold.
    pub fn predict(&self, a: &Ast, b: &Ast) -> Result<(f64, u8)> {
        let p = self.probability(&self.encode(a)?, &self.encode(b)?)?;
        Ok((p, decide(p, self.config.threshold)))
    }

    fn check(&self) -> Result<()> {
        if self.embeddings.rows() != self.vocab.rows() || self.embeddings.dim() != self.config.lambda {
            return Err(Error::Shape(format!(
                "embedding table {}x{} does not fit vocabulary of {} rows and lambda {}",
                self.embeddings.rows(),
                self.embeddings.dim(),
                self.vocab.rows(),
                self.config.lambda
            )));
        }
        if self.classifier.latent_dim() != self.encoder.output_dim() {
            return Err(Error::Shape("classifier width differs from encoder output".into()));
        }
        Ok(())
    }

    fn push_sections(&self, s: &mut Sections) {
        s.push("config", self.config.to_canonical_json().into_bytes());
        let vocab = VocabFile {
            kinds: self.vocab.kinds().iter().map(|k| k.as_str().to_string()).collect(),
            unknown_slot: self.vocab.unknown_slot(),
        };
        s.push("vocab", serde_json::to_string(&vocab).expect("vocab serializes").into_bytes());
        let mut emb = Vec::new();
        emb.extend_from_slice(&(self.embeddings.rows() as u64).to_le_bytes());
        emb.extend_from_slice(&(self.embeddings.dim() as u64).to_le_bytes());
        emb.extend_from_slice(&f64s_to_bytes(self.embeddings.as_slice()));
        s.push("embeddings", emb);
        s.push("encoder", f64s_to_bytes(&self.encoder.to_flat()));
        s.push("classifier", f64s_to_bytes(&self.classifier.to_flat()));
    }

    fn from_sections(s: &Sections) -> Result<Self> {
        let config_text = std::str::from_utf8(s.require("config")?)
            .map_err(|_| Error::Corrupt("config is not UTF-8".into()))?;
        let config = TrainConfig::from_json(config_text)?;
        let vocab: VocabFile = serde_json::from_slice(s.require("vocab")?)
            .map_err(|e| Error::Corrupt(format!("vocab: {e}")))?;
        let vocab = NodeVocab::from_kinds(vocab.kinds.iter().map(|k| k.as_str().into()), vocab.unknown_slot);
        let mut r = Reader::new(s.require("embeddings")?);
        let rows = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let data = r.f64s()?;
        r.finish()?;
        let embeddings = EmbeddingTable::from_data(rows, dim, data)?;
        let mut encoder = empty_encoder(&config)?;
        encoder
            .load_flat(&f64s_from_bytes(s.require("encoder")?)?)
            .map_err(|e| Error::Corrupt(format!("encoder: {e}")))?;
        let mut classifier = ClassifierParams::zeros(encoder.output_dim());
        classifier
            .load_flat(&f64s_from_bytes(s.require("classifier")?)?)
            .map_err(|e| Error::Corrupt(format!("classifier: {e}")))?;
        let bundle = ModelBundle {
            config,
            vocab,
            embeddings,
            encoder,
            classifier,
        };
        bundle.check()?;
        Ok(bundle)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = Sections::default();
        self.push_sections(&mut s);
        s.to_file_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let s = Sections::from_file_bytes(bytes)?;
        if s.get("state").is_some() {
            return Err(Error::Corrupt("this is a training checkpoint, not a model".into()));
        }
        Self::from_sections(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    kinds: Vec<String>,
    unknown_slot: bool,
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bundle.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes)
}

pub fn predict(bundle: &ModelBundle, a: &Ast, b: &Ast) -> Result<(f64, u8)> {
    bundle.predict(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub bundle: ModelBundle,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
}

struct Prepared {
    topo: crate::ast::Topology,
    rows: Vec<usize>,
}

/// Training state that can be advanced one epoch at a time and saved.
pub struct Trainer<'d> {
    train: &'d PairDataset,
    valid: &'d PairDataset,
    prepared: Vec<Option<Prepared>>,
    current: ModelBundle,
    opt_encoder: Adam,
    opt_classifier: Adam,
    opt_embeddings: LazyAdam,
    epoch: usize,
    best: ModelBundle,
    best_accuracy: f64,
    best_epoch: usize,
    stale: usize,
    log: Vec<EpochMetrics>,
}

impl<'d> Trainer<'d> {
    pub fn new(config: TrainConfig, train: &'d PairDataset, valid: &'d PairDataset) -> Result<Self> {
        config.validate()?;
        check_datasets(train, valid)?;
        let used = train.used_submissions();
        let mut vocab = build_vocab(used.iter().map(|&i| &train.submissions[i].ast));
        vocab.set_unknown_slot(config.unknown_slot);
        let current = ModelBundle::init(config, vocab)?;
        Self::assemble(train, valid, current.clone(), current)
    }

    fn assemble(
        train: &'d PairDataset,
        valid: &'d PairDataset,
        current: ModelBundle,
        best: ModelBundle,
    ) -> Result<Self> {
        let used = train.used_submissions();
        let prepared = train
            .submissions
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !used.contains(&i) {
                    return Ok(None);
                }
                let topo = s.ast.topology();
                let rows = node_rows(&topo, &current.vocab)?;
                Ok(Some(Prepared { topo, rows }))
            })
            .collect::<Result<Vec<_>>>()?;
        let adam = AdamConfig::new(current.config.learning_rate);
        Ok(Trainer {
            train,
            valid,
            prepared,
            opt_encoder: Adam::new(adam, current.encoder.param_count()),
            opt_classifier: Adam::new(adam, current.classifier.param_count()),
            opt_embeddings: LazyAdam::new(adam, current.embeddings.rows(), current.embeddings.dim()),
            current,
            epoch: 0,
            best,
            best_accuracy: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.current.config
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn current(&self) -> &ModelBundle {
        &self.current
    }

    pub fn log(&self) -> &[EpochMetrics] {
        &self.log
    }

    /// True once the epoch budget is spent or early stopping triggered.
    pub fn finished(&self) -> bool {
        let cfg = self.config();
        self.epoch >= cfg.epochs || (cfg.patience > 0 && self.stale >= cfg.patience)
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let cfg = self.current.config.clone();
        let mut order: Vec<usize> = (0..self.train.pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_SHUFFLE + self.epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let loss = self.step(batch).map_err(|e| match e {
                Error::Diverged { .. } => Error::Diverged {
                    epoch: self.epoch,
                    batch: b,
                },
                other => other,
            })?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / order.len() as f64;
        let train_accuracy = eval::accuracy_of(&self.current, self.train)?;
        let valid_accuracy = eval::accuracy_of(&self.current, self.valid)?;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            train_loss,
            train_accuracy,
            valid_accuracy,
        };
        if valid_accuracy > self.best_accuracy {
            self.best_accuracy = valid_accuracy;
            self.best_epoch = self.epoch;
            self.best = self.current.clone();
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.log.push(metrics);
        self.epoch += 1;
        Ok(metrics)
    }

    /// One optimizer step on a batch; returns the summed pair loss.
    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let pairs: Vec<_> = batch.iter().map(|&i| self.train.pairs[i]).collect();
        let uniq: Vec<usize> = pairs
            .iter()
            .flat_map(|p| [p.first, p.second])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos = |s: usize| uniq.binary_search(&s).expect("submission in batch");
        let model = &self.current;
        let prepared = &self.prepared;
        let traces = par::map(&uniq, |&s| {
            let p = prepared[s].as_ref().expect("prepared");
            model.encoder.forward(&p.topo, &p.rows, &model.embeddings)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let out_dim = model.encoder.output_dim();
        let mut cls_grad = ClassifierParams::zeros(out_dim);
        let mut dz = vec![vec![0.0; out_dim]; uniq.len()];
        let inv = 1.0 / pairs.len() as f64;
        let mut loss_sum = 0.0;
        for p in &pairs {
            let (a, b) = (pos(p.first), pos(p.second));
            let (za, zb) = (traces[a].output(), traces[b].output());
            let prob = sigmoid(model.classifier.logit(za, zb)?);
            let (loss, dlogit) = bce_loss(prob, p.label);
            if !loss.is_finite() || !prob.is_finite() {
                return Err(Error::Diverged { epoch: 0, batch: 0 });
            }
            loss_sum += loss;
            let dlogit = dlogit * inv;
            cls_grad.accumulate(za, zb, dlogit);
            let (ga, gb) = model.classifier.input_grads(dlogit);
            crate::linalg::add_assign(&mut dz[a], &ga);
            crate::linalg::add_assign(&mut dz[b], &gb);
        }

        let idx: Vec<usize> = (0..uniq.len()).collect();
        let grads = par::map(&idx, |&k| {
            if dz[k].iter().all(|g| *g == 0.0) {
                return Ok(None);
            }
            model.encoder.backward(&traces[k], &dz[k]).map(Some)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut enc_grad = model.encoder.zeros_like();
        let mut row_grad = RowGrads::default();
        for (g, rows) in grads.into_iter().flatten() {
            enc_grad.add_scaled(&g, 1.0);
            row_grad.merge(&rows);
        }

        self.opt_encoder.step(&mut self.current.encoder, &enc_grad);
        self.opt_classifier.step(&mut self.current.classifier, &cls_grad);
        self.opt_embeddings.step(&mut self.current.embeddings, &row_grad);
        Ok(loss_sum)
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.finished() {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn outcome(&self) -> TrainOutcome {
        TrainOutcome {
            bundle: self.best.clone(),
            best_epoch: self.best_epoch,
            log: self.log.clone(),
        }
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut s = Sections::default();
        self.current.push_sections(&mut s);
        let mut state = Vec::new();
        for v in [self.epoch, self.best_epoch, self.stale, self.log.len()] {
            state.extend_from_slice(&(v as u64).to_le_bytes());
        }
        state.extend_from_slice(&self.best_accuracy.to_le_bytes());
        for m in &self.log {
            state.extend_from_slice(&(m.epoch as u64).to_le_bytes());
            for v in [m.train_loss, m.train_accuracy, m.valid_accuracy] {
                state.extend_from_slice(&v.to_le_bytes());
            }
        }
        s.push("state", state);
        for (name, opt) in [("opt.encoder", &self.opt_encoder), ("opt.classifier", &self.opt_classifier)] {
            s.push(name, moments_to_bytes(opt.t, &opt.m, &opt.v));
        }
        let e = &self.opt_embeddings;
        s.push("opt.embeddings", moments_to_bytes(e.t, &e.m, &e.v));
        let mut best = Sections::default();
        self.best.push_sections(&mut best);
        s.push("best", best.to_payload());
        s.to_file_bytes()
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Continues from a checkpoint. `epochs` replaces the stored budget
    /// when given; every other setting comes from the checkpoint.
    pub fn resume(
        bytes: &[u8],
        epochs: Option<usize>,
        train: &'d PairDataset,
        valid: &'d PairDataset,
    ) -> Result<Self> {
        check_datasets(train, valid)?;
        let s = Sections::from_file_bytes(bytes)?;
        let mut current = ModelBundle::from_sections(&s)?;
        if let Some(e) = epochs {
            current.config.epochs = e;
            current.config.validate()?;
        }
        let mut best = ModelBundle::from_sections(&Sections::from_payload(s.require("best")?)?)?;
        best.config.epochs = current.config.epochs;
        let mut t = Self::assemble(train, valid, current, best)?;
        let mut r = Reader::new(s.require("state")?);
        t.epoch = r.u64()? as usize;
        t.best_epoch = r.u64()? as usize;
        t.stale = r.u64()? as usize;
        let n_log = r.u64()? as usize;
        t.best_accuracy = r.f64()?;
        for _ in 0..n_log {
            t.log.push(EpochMetrics {
                epoch: r.u64()? as usize,
                train_loss: r.f64()?,
                train_accuracy: r.f64()?,
                valid_accuracy: r.f64()?,
            });
        }
        r.finish()?;
        moments_from_bytes(s.require("opt.encoder")?, &mut t.opt_encoder.t, &mut t.opt_encoder.m, &mut t.opt_encoder.v)?;
        moments_from_bytes(
            s.require("opt.classifier")?,
            &mut t.opt_classifier.t,
            &mut t.opt_classifier.m,
            &mut t.opt_classifier.v,
        )?;
        let e = &mut t.opt_embeddings;
        moments_from_bytes(s.require("opt.embeddings")?, &mut e.t, &mut e.m, &mut e.v)?;
        Ok(t)
    }
}

fn moments_to_bytes(t: u64, m: &[f64], v: &[f64]) -> Vec<u8> {
    let mut out = t.to_le_bytes().to_vec();
    out.extend_from_slice(&f64s_to_bytes(m));
    out.extend_from_slice(&f64s_to_bytes(v));
    out
}

fn moments_from_bytes(bytes: &[u8], t: &mut u64, m: &mut Vec<f64>, v: &mut Vec<f64>) -> Result<()> {
    let mut r = Reader::new(bytes);
    *t = r.u64()?;
    let (nm, nv) = (r.f64s()?, r.f64s()?);
    r.finish()?;
    if nm.len() != m.len() || nv.len() != v.len() {
        return Err(Error::Corrupt("optimizer state does not fit the model".into()));
    }
    *m = nm;
    *v = nv;
    Ok(())
}

fn check_datasets(train: &PairDataset, valid: &PairDataset) -> Result<()> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("training and validation pair sets must be non-empty".into()));
    }
    train.check()?;
    valid.check()?;
    let train_ids: BTreeSet<&str> = train
        .used_submissions()
        .into_iter()
        .map(|i| train.submissions[i].source_id.as_str())
        .collect();
    if let Some(shared) = valid
        .used_submissions()
        .into_iter()
        .map(|i| valid.submissions[i].source_id.as_str())
        .find(|id| train_ids.contains(id))
    {
        return Err(Error::Data(format!(
            "submission '{shared}' appears in both training and validation pairs"
        )));
    }
    Ok(())
}

/// Trains to completion and returns the best-validation bundle.
pub fn train(config: TrainConfig, train_pairs: &PairDataset, valid_pairs: &PairDataset) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, train_pairs, valid_pairs)?;
    t.run()?;
    Ok(t.outcome())
}
