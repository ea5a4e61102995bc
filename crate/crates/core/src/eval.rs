//! Accuracy, ROC/AUC, threshold sensitivity, cross-dataset matrices and
//! embedding export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::ast::Ast;
use crate::classifier::decide;
use crate::error::{Error, Result};
use crate::pairs::PairDataset;
use crate::par;
use crate::train::ModelBundle;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub n_pairs: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub threshold: f64,
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub roc: Vec<(f64, f64)>,
}

/// ROC points from sweeping the threshold down through every distinct score.
/// Equal scores form one step. With a class missing the curve is the
/// diagonal.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    points
}

/// Trapezoidal area under a curve given as points sorted by x.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| decide(**s, threshold) == **l)
        .count();
    correct as f64 / scores.len() as f64
}

pub fn metrics_from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Metrics> {
    if scores.is_empty() {
        return Err(Error::Data("cannot evaluate an empty pair set".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape("one score per label required".into()));
    }
    let roc = roc_curve(scores, labels);
    Ok(Metrics {
        n_pairs: scores.len(),
        accuracy: accuracy(scores, labels, threshold),
        auc: auc(&roc),
        threshold,
        roc,
    })
}

/// Encodes every referenced submission once, then scores each pair.
pub fn score_pairs(bundle: &ModelBundle, dataset: &PairDataset) -> Result<Vec<f64>> {
    let used: Vec<usize> = dataset.used_submissions().into_iter().collect();
    let encoded = par::map(&used, |&i| bundle.encode(&dataset.submissions[i].ast))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let z = |s: usize| &encoded[used.binary_search(&s).expect("used submission")];
    dataset
        .pairs
        .iter()
        .map(|p| bundle.probability(z(p.first), z(p.second)))
        .collect()
}

pub fn labels(dataset: &PairDataset) -> Vec<u8> {
    dataset.pairs.iter().map(|p| p.label).collect()
}

pub fn accuracy_of(bundle: &ModelBundle, dataset: &PairDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate an empty pair set".into()));
    }
    Ok(accuracy(&score_pairs(bundle, dataset)?, &labels(dataset), bundle.config.threshold))
}

pub fn evaluate(bundle: &ModelBundle, dataset: &PairDataset) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate an empty pair set".into()));
    }
    metrics_from_scores(&score_pairs(bundle, dataset)?, &labels(dataset), bundle.config.threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub min_delta_ms: f64,
    pub n_pairs: usize,
    /// `None` when no pair survives the filter.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
}

/// Accuracy restricted to pairs with `|Δt| >= delta`, for each delta in
/// ascending order.
pub fn sensitivity_from_scores(dataset: &PairDataset, scores: &[f64], threshold: f64, deltas: &[f64]) -> SensitivityTable {
    let mut deltas = deltas.to_vec();
    deltas.sort_by(f64::total_cmp);
    let rows = deltas
        .into_iter()
        .map(|min_delta_ms| {
            let (mut n, mut correct) = (0usize, 0usize);
            for (p, s) in dataset.pairs.iter().zip(scores) {
                if dataset.delta(p) >= min_delta_ms {
                    n += 1;
                    correct += usize::from(decide(*s, threshold) == p.label);
                }
            }
            SensitivityRow {
                min_delta_ms,
                n_pairs: n,
                accuracy: (n > 0).then(|| correct as f64 / n as f64),
            }
        })
        .collect();
    SensitivityTable { rows }
}

pub fn sensitivity_sweep(bundle: &ModelBundle, dataset: &PairDataset, deltas: &[f64]) -> Result<SensitivityTable> {
    let scores = score_pairs(bundle, dataset)?;
    Ok(sensitivity_from_scores(dataset, &scores, bundle.config.threshold, deltas))
}

/// Linear interpolation between closest ranks of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `{0, p25, p50, p75, p90}` of the pairs' `|Δt|`.
pub fn default_deltas(dataset: &PairDataset) -> Vec<f64> {
    let mut d: Vec<f64> = dataset.pairs.iter().map(|p| dataset.delta(p)).collect();
    d.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    out.extend([0.25, 0.5, 0.75, 0.9].iter().map(|&q| quantile(&d, q)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub sensitivity: Vec<SensitivityRow>,
}

pub fn report(bundle: &ModelBundle, dataset: &PairDataset, deltas: Option<&[f64]>) -> Result<Report> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate an empty pair set".into()));
    }
    let scores = score_pairs(bundle, dataset)?;
    let threshold = bundle.config.threshold;
    let metrics = metrics_from_scores(&scores, &labels(dataset), threshold)?;
    let defaults;
    let deltas = match deltas {
        Some(d) => d,
        None => {
            defaults = default_deltas(dataset);
            &defaults
        }
    };
    Ok(Report {
        metrics,
        sensitivity: sensitivity_from_scores(dataset, &scores, threshold, deltas).rows,
    })
}

/// Rows are training tags, columns test tags.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub accuracy: Vec<Vec<f64>>,
}

impl CrossMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train\\test");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.accuracy) {
            out.push_str(r);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// `accuracy[i][j]` = accuracy of bundle `i` on dataset `j`. Every bundle
/// tag needs a dataset with the same tag.
pub fn cross_eval(
    bundles: &BTreeMap<String, ModelBundle>,
    datasets: &BTreeMap<String, PairDataset>,
) -> Result<CrossMatrix> {
    if let Some(tag) = bundles.keys().find(|t| !datasets.contains_key(*t)) {
        return Err(Error::Data(format!("no dataset for tag '{tag}'")));
    }
    let accuracy = bundles
        .values()
        .map(|b| datasets.values().map(|d| accuracy_of(b, d)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossMatrix {
        rows: bundles.keys().cloned().collect(),
        cols: datasets.keys().cloned().collect(),
        accuracy,
    })
}

pub const UNKNOWN_KIND_LABEL: &str = "<unknown>";

/// Tree encodings (`source_id,z1..zd`, input order) and node embeddings
/// (`kind,e1..eλ`, vocabulary order, unknown slot last).
pub fn export_embeddings(bundle: &ModelBundle, asts: &[Ast]) -> Result<(String, String)> {
    let encoded = par::map(asts, |a| bundle.encode(a)).into_iter().collect::<Result<Vec<_>>>()?;
    let d = bundle.encoder.output_dim();
    let mut trees = String::from("source_id");
    for k in 1..=d {
        let _ = write!(trees, ",z{k}");
    }
    trees.push('\n');
    for (a, z) in asts.iter().zip(&encoded) {
        trees.push_str(&csv_field(a.source_id()));
        for v in z {
            let _ = write!(trees, ",{v}");
        }
        trees.push('\n');
    }
    let lambda = bundle.embeddings.dim();
    let mut nodes = String::from("kind");
    for k in 1..=lambda {
        let _ = write!(nodes, ",e{k}");
    }
    nodes.push('\n');
    let mut names: Vec<&str> = bundle.vocab.kinds().iter().map(|k| k.as_str()).collect();
    if bundle.vocab.unknown_slot() {
        names.push(UNKNOWN_KIND_LABEL);
    }
    for (r, name) in names.iter().enumerate() {
        nodes.push_str(&csv_field(name));
        for v in bundle.embeddings.row(r) {
            let _ = write!(nodes, ",{v}");
        }
        nodes.push('\n');
    }
    Ok((trees, nodes))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fraction of pairs whose hard label flips when the two programs are
/// swapped. The architecture does not force this, so it is measured.
pub fn swap_consistency(bundle: &ModelBundle, dataset: &PairDataset) -> Result<f64> {
    let used: BTreeSet<usize> = dataset.used_submissions();
    let used: Vec<usize> = used.into_iter().collect();
    let encoded = par::map(&used, |&i| bundle.encode(&dataset.submissions[i].ast))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let z = |s: usize| &encoded[used.binary_search(&s).expect("used")];
    let mut flipped = 0usize;
    for p in &dataset.pairs {
        let fwd = decide(bundle.probability(z(p.first), z(p.second))?, bundle.config.threshold);
        let back = decide(bundle.probability(z(p.second), z(p.first))?, bundle.config.threshold);
        flipped += usize::from(fwd != back);
    }
    Ok(flipped as f64 / dataset.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let acc = accuracy(&[0.9, 0.2, 0.7], &[1, 1, 1], 0.5);
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_constant_auc() {
        let m = metrics_from_scores(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(m.auc, 1.0);
        let c = metrics_from_scores(&[0.4; 6], &[1, 0, 1, 0, 0, 1], 0.5).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.roc, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn roc_endpoints_and_monotone() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.9, 0.05];
        let labels = [0, 0, 1, 1, 1, 0, 1];
        let roc = roc_curve(&scores, &labels);
        assert_eq!(roc[0], (0.0, 0.0));
        assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        // One step per distinct score.
        assert_eq!(roc.len(), 1 + 6);
    }

    #[test]
    fn single_class_auc_is_half() {
        let m = metrics_from_scores(&[0.2, 0.9], &[1, 1], 0.5).unwrap();
        assert_eq!(m.auc, 0.5);
        assert!(metrics_from_scores(&[], &[], 0.5).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(quantile(&v, 0.0), 0.0);
        assert_eq!(quantile(&v, 0.5), 20.0);
        assert_eq!(quantile(&v, 0.9), 36.0);
        assert_eq!(quantile(&v, 1.0), 40.0);
    }

    #[test]
    fn cross_matrix_csv() {
        let m = CrossMatrix {
            rows: vec!["a".into()],
            cols: vec!["a".into(), "b".into()],
            accuracy: vec![vec![1.0, 0.5]],
        };
        assert_eq!(m.to_csv(), "train\\test,a,b\na,1,0.5\n");
    }
}
