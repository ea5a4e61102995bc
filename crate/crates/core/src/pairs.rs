//! Ordered code pairs labelled from runtimes, plus sampling and splitting.
//!
//! A pair `(a, b)` gets label 1 when `t_a >= t_b`, i.e. the second program
//! is faster or equivalent.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{load_ast, Ast};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub source_id: String,
    pub ast: Ast,
    pub runtime_ms: f64,
    pub problem_tag: String,
}

impl Submission {
    pub fn new(ast: Ast, runtime_ms: f64, problem_tag: impl Into<String>) -> Result<Self> {
        if !runtime_ms.is_finite() || runtime_ms <= 0.0 {
            return Err(Error::Data(format!(
                "submission '{}' has runtime {runtime_ms}, expected a positive finite value",
                ast.source_id()
            )));
        }
        Ok(Submission {
            source_id: ast.source_id().to_string(),
            ast,
            runtime_ms,
            problem_tag: problem_tag.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePair {
    pub first: usize,
    pub second: usize,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Pairs index into `submissions`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub submissions: Vec<Submission>,
    pub pairs: Vec<CodePair>,
    pub split: Split,
    pub seed: u64,
}

pub fn label(t_first: f64, t_second: f64) -> u8 {
    u8::from(t_first >= t_second)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub ratio: f64,
    pub symmetric: bool,
    /// Allow pairs whose programs solve different problems.
    pub cross_problem: bool,
    pub seed: u64,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            ratio: 1.0,
            symmetric: false,
            cross_problem: false,
            seed: 0,
        }
    }
}

/// Samples `⌈ratio · N(N-1)⌉` ordered pairs without replacement, keeping
/// both ends within the same problem tag.
pub fn generate_pairs(submissions: Vec<Submission>, ratio: f64, symmetric: bool, seed: u64) -> Result<PairDataset> {
    generate_pairs_with(
        submissions,
        &PairOptions {
            ratio,
            symmetric,
            cross_problem: false,
            seed,
        },
    )
}

pub fn generate_pairs_with(submissions: Vec<Submission>, opts: &PairOptions) -> Result<PairDataset> {
    if submissions.len() < 2 {
        return Err(Error::Data(format!(
            "pair generation needs at least 2 submissions, found {}",
            submissions.len()
        )));
    }
    if !(opts.ratio > 0.0 && opts.ratio <= 1.0) {
        return Err(Error::Config(format!("pair ratio {} outside (0, 1]", opts.ratio)));
    }
    let mut universe = Vec::new();
    for a in 0..submissions.len() {
        for b in 0..submissions.len() {
            if a != b && (opts.cross_problem || submissions[a].problem_tag == submissions[b].problem_tag) {
                universe.push((a, b));
            }
        }
    }
    let wanted = (opts.ratio * universe.len() as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    universe.shuffle(&mut rng);
    universe.truncate(wanted);
    let chosen = if opts.symmetric {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(2 * wanted);
        for &(a, b) in &universe {
            for p in [(a, b), (b, a)] {
                if seen.insert(p) {
                    out.push(p);
                }
            }
        }
        out.truncate(wanted);
        out
    } else {
        universe
    };
    let pairs = chosen
        .into_iter()
        .map(|(a, b)| CodePair {
            first: a,
            second: b,
            label: label(submissions[a].runtime_ms, submissions[b].runtime_ms),
        })
        .collect();
    Ok(PairDataset {
        submissions,
        pairs,
        split: Split::Train,
        seed: opts.seed,
    })
}

/// Disjoint partition with `round(test_fraction · n)` test submissions.
pub fn split_submissions(
    submissions: Vec<Submission>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Submission>, Vec<Submission>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n = submissions.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Data(format!(
            "splitting {n} submissions at {test_fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test: BTreeSet<usize> = order[..n_test].iter().copied().collect();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, s) in submissions.into_iter().enumerate() {
        if test.contains(&i) {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, held))
}

/// Holds out `round(fraction · n)` of the submissions used by `dataset` and
/// keeps the pairs that fall entirely on one side. Pairs straddling the cut
/// are dropped.
pub fn holdout_pairs(dataset: &PairDataset, fraction: f64, seed: u64) -> Result<(PairDataset, PairDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let mut used: Vec<usize> = dataset.used_submissions().into_iter().collect();
    let n_held = (fraction * used.len() as f64).round() as usize;
    used.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held: BTreeSet<usize> = used[..n_held].iter().copied().collect();
    let side = |keep_held: bool| PairDataset {
        submissions: dataset.submissions.clone(),
        pairs: dataset
            .pairs
            .iter()
            .filter(|p| held.contains(&p.first) == keep_held && held.contains(&p.second) == keep_held)
            .copied()
            .collect(),
        split: dataset.split,
        seed: dataset.seed,
    };
    let (fit, valid) = (side(false), side(true));
    if fit.is_empty() || valid.is_empty() {
        return Err(Error::Data(format!(
            "holding out {n_held} of {} submissions leaves no pairs on one side",
            used.len()
        )));
    }
    Ok((fit, valid))
}

/// Keeps pairs with `|t_first - t_second| >= min_delta_ms`.
pub fn filter_by_threshold(dataset: &PairDataset, min_delta_ms: f64) -> PairDataset {
    PairDataset {
        submissions: dataset.submissions.clone(),
        pairs: dataset
            .pairs
            .iter()
            .filter(|p| dataset.delta(p) >= min_delta_ms)
            .copied()
            .collect(),
        split: dataset.split,
        seed: dataset.seed,
    }
}

impl PairDataset {
    pub fn delta(&self, pair: &CodePair) -> f64 {
        (self.submissions[pair.first].runtime_ms - self.submissions[pair.second].runtime_ms).abs()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Indices of submissions referenced by at least one pair.
    pub fn used_submissions(&self) -> BTreeSet<usize> {
        self.pairs.iter().flat_map(|p| [p.first, p.second]).collect()
    }

    pub fn check(&self) -> Result<()> {
        for p in &self.pairs {
            if p.first >= self.submissions.len() || p.second >= self.submissions.len() {
                return Err(Error::Data(format!(
                    "pair ({}, {}) refers past {} submissions",
                    p.first,
                    p.second,
                    self.submissions.len()
                )));
            }
            if p.first == p.second {
                return Err(Error::Data(format!("self-pair on submission {}", p.first)));
            }
            let expected = label(self.submissions[p.first].runtime_ms, self.submissions[p.second].runtime_ms);
            if p.label != expected {
                return Err(Error::Data(format!(
                    "pair ({}, {}) labelled {} but runtimes give {expected}",
                    p.first, p.second, p.label
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = PairsFile {
            split: self.split,
            seed: self.seed,
            submissions: self
                .submissions
                .iter()
                .map(|s| SubmissionEntry {
                    source_id: s.source_id.clone(),
                    runtime_ms: s.runtime_ms,
                    problem_tag: s.problem_tag.clone(),
                    ast: serde_json::from_str(&s.ast.to_json()).expect("AST JSON is valid"),
                })
                .collect(),
            pairs: self.pairs.clone(),
        };
        serde_json::to_string(&file).expect("pairs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PairsFile = serde_json::from_str(text).map_err(|e| Error::Data(format!("pairs file: {e}")))?;
        let submissions = file
            .submissions
            .into_iter()
            .map(|e| {
                let ast = Ast::from_json(&e.ast.to_string())?.with_source_id(e.source_id);
                Submission::new(ast, e.runtime_ms, e.problem_tag)
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = PairDataset {
            submissions,
            pairs: file.pairs,
            split: file.split,
            seed: file.seed,
        };
        ds.check()?;
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsFile {
    split: Split,
    seed: u64,
    submissions: Vec<SubmissionEntry>,
    pairs: Vec<CodePair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmissionEntry {
    source_id: String,
    runtime_ms: f64,
    problem_tag: String,
    ast: serde_json::Value,
}

pub fn save_pairs(dataset: &PairDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PairDataset::from_json(&text).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub const MANIFEST_HEADER: [&str; 4] = ["source_id", "ast_path", "runtime_ms", "problem_tag"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub source_id: String,
    pub ast_path: String,
    /// One value, or several separated by `;` which are averaged.
    pub runtime_ms: String,
    pub problem_tag: String,
}

pub fn parse_runtime(field: &str) -> Result<f64> {
    let values = field
        .split(';')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Data(format!("bad runtime value '{v}'"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Reads a manifest; relative AST paths are resolved against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Submission>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Data(format!(
            "{}: header must be {}",
            path.display(),
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), line + 1)))?;
        let ast_path: PathBuf = base.join(&row.ast_path);
        let ast = load_ast(&ast_path)
            .map_err(|e| Error::Data(format!("{}: {e}", ast_path.display())))?
            .with_source_id(row.source_id);
        let runtime = parse_runtime(&row.runtime_ms)?;
        out.push(Submission::new(ast, runtime, row.problem_tag)?);
    }
    Ok(out)
}

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AstNode;

    fn sub(id: &str, t: f64, tag: &str) -> Submission {
        let ast = Ast::new(id, None, 0, vec![AstNode { id: 0, kind: "root".into(), children: vec![] }]).unwrap();
        Submission::new(ast, t, tag).unwrap()
    }

    fn subs(ts: &[f64]) -> Vec<Submission> {
        ts.iter().enumerate().map(|(i, t)| sub(&format!("s{i}"), *t, "p")).collect()
    }

    #[test]
    fn holdout_sides_share_no_submission() {
        let ds = generate_pairs(subs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]), 1.0, false, 3).unwrap();
        let (fit, valid) = holdout_pairs(&ds, 0.3, 9).unwrap();
        assert_eq!(valid.used_submissions().len(), 3);
        assert!(fit.used_submissions().is_disjoint(&valid.used_submissions()));
        assert_eq!(fit.len(), 7 * 6);
        assert_eq!(valid.len(), 3 * 2);
        assert_eq!(holdout_pairs(&ds, 0.3, 9).unwrap().1, valid);
        assert!(holdout_pairs(&ds, 0.01, 9).is_err());
    }

    #[test]
    fn full_ratio_enumerates_ordered_pairs() {
        let ds = generate_pairs(subs(&[1.0, 2.0, 3.0, 4.0]), 1.0, false, 3).unwrap();
        assert_eq!(ds.len(), 12);
        assert!(ds.pairs.iter().all(|p| p.first != p.second));
    }

    #[test]
    fn labels_follow_runtime_order() {
        let ds = generate_pairs(subs(&[100.0, 50.0]), 1.0, false, 0).unwrap();
        for p in &ds.pairs {
            let expected = if p.first == 0 { 1 } else { 0 };
            assert_eq!(p.label, expected);
        }
        let tied = generate_pairs(subs(&[7.0, 7.0]), 1.0, false, 0).unwrap();
        assert!(tied.pairs.iter().all(|p| p.label == 1));
    }

    #[test]
    fn too_few_submissions() {
        assert!(generate_pairs(subs(&[1.0]), 1.0, false, 0).is_err());
    }

    #[test]
    fn ratio_rounds_up() {
        let ds = generate_pairs(subs(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.75, false, 1).unwrap();
        assert_eq!(ds.len(), 15);
    }

    #[test]
    fn symmetric_adds_reverse_orders() {
        let ds = generate_pairs(subs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 0.5, true, 2).unwrap();
        assert_eq!(ds.len(), 15);
        let set: BTreeSet<(usize, usize)> = ds.pairs.iter().map(|p| (p.first, p.second)).collect();
        assert_eq!(set.len(), 15);
        let mirrored = ds.pairs.iter().filter(|p| set.contains(&(p.second, p.first))).count();
        assert!(mirrored >= 14);
    }

    #[test]
    fn pairs_stay_within_problem_unless_asked() {
        let mut s = subs(&[1.0, 2.0, 3.0]);
        s.push(sub("q0", 4.0, "q"));
        s.push(sub("q1", 5.0, "q"));
        let ds = generate_pairs(s.clone(), 1.0, false, 0).unwrap();
        assert_eq!(ds.len(), 6 + 2);
        let opts = PairOptions {
            cross_problem: true,
            ..PairOptions::default()
        };
        assert_eq!(generate_pairs_with(s, &opts).unwrap().len(), 20);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (train, test) = split_submissions(subs(&[1.0; 10]), 0.2, 5).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let a: BTreeSet<_> = train.iter().map(|s| s.source_id.clone()).collect();
        let b: BTreeSet<_> = test.iter().map(|s| s.source_id.clone()).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 10);
        let (train2, _) = split_submissions(subs(&[1.0; 10]), 0.2, 5).unwrap();
        assert_eq!(train, train2);
        assert!(split_submissions(subs(&[1.0; 3]), 0.1, 0).is_err());
    }

    #[test]
    fn threshold_filter() {
        let mut ds = generate_pairs(subs(&[0.0 + 1.0, 2.0, 51.0, 451.0]), 1.0, false, 0).unwrap();
        ds.pairs = vec![
            CodePair { first: 0, second: 1, label: 0 },
            CodePair { first: 0, second: 2, label: 0 },
            CodePair { first: 2, second: 3, label: 0 },
        ];
        assert_eq!(filter_by_threshold(&ds, 0.0).pairs, ds.pairs);
        assert_eq!(filter_by_threshold(&ds, 100.0).len(), 1);
        assert!(filter_by_threshold(&ds, 1000.0).is_empty());
    }

    #[test]
    fn json_round_trip() {
        let ds = generate_pairs(subs(&[3.0, 1.0, 2.0]), 1.0, true, 9).unwrap().with_split(Split::Test);
        let back = PairDataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn runtime_lists_are_averaged() {
        assert_eq!(parse_runtime("10;20;30").unwrap(), 20.0);
        assert_eq!(parse_runtime("4.5").unwrap(), 4.5);
        assert!(parse_runtime("x").is_err());
    }

    #[test]
    fn bad_runtime_rejected() {
        let ast = Ast::new("x", None, 0, vec![AstNode { id: 0, kind: "root".into(), children: vec![] }]).unwrap();
        assert!(Submission::new(ast.clone(), f64::NAN, "p").is_err());
        assert!(Submission::new(ast, 0.0, "p").is_err());
    }
}
