//! Node-kind vocabulary and the trainable embedding table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{Ast, NodeKind};
use crate::error::{Error, Result};

/// Dense ids for node kinds, assigned in lexicographic order of kind name.
/// With the unknown slot enabled, unregistered kinds map to id `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVocab {
    kinds: Vec<NodeKind>,
    index: HashMap<NodeKind, usize>,
    unknown_slot: bool,
}

impl NodeVocab {
    pub fn from_kinds(kinds: impl IntoIterator<Item = NodeKind>, unknown_slot: bool) -> Self {
        let kinds: Vec<NodeKind> = kinds.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = kinds.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        NodeVocab {
            kinds,
            index,
            unknown_slot,
        }
    }

    /// Number of registered kinds (`D`).
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Rows the embedding table needs: `D`, or `D + 1` with the unknown slot.
    pub fn rows(&self) -> usize {
        self.kinds.len() + usize::from(self.unknown_slot)
    }

    pub fn unknown_slot(&self) -> bool {
        self.unknown_slot
    }

    pub fn set_unknown_slot(&mut self, enabled: bool) {
        self.unknown_slot = enabled;
    }

    pub fn id(&self, kind: &NodeKind) -> Option<usize> {
        self.index.get(kind).copied()
    }

    /// Table row for `kind`, falling back to the unknown slot.
    pub fn row(&self, kind: &NodeKind) -> Result<usize> {
        match self.index.get(kind) {
            Some(&i) => Ok(i),
            None if self.unknown_slot => Ok(self.kinds.len()),
            None => Err(Error::UnknownKind(kind.to_string())),
        }
    }

    /// Kinds in id order.
    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }
}

/// Builds the vocabulary over every kind seen in `asts`. The unknown slot is
/// enabled.
pub fn build_vocab<'a>(asts: impl IntoIterator<Item = &'a Ast>) -> NodeVocab {
    let kinds = asts
        .into_iter()
        .flat_map(|a| a.nodes().iter().map(|n| n.kind.clone()));
    NodeVocab::from_kinds(kinds, true)
}

/// Row-major `rows × dim` matrix of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_data(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "embedding data has {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite embedding entry {v}")));
        }
        Ok(EmbeddingTable { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Uniform(-1/sqrt(dim), 1/sqrt(dim)) initialization from a ChaCha8 stream.
pub fn init_embeddings(vocab: &NodeVocab, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim < 1 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let a = 1.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..vocab.rows() * dim).map(|_| rng.gen_range(-a..a)).collect();
    Ok(EmbeddingTable {
        rows: vocab.rows(),
        dim,
        data,
    })
}

pub fn lookup<'t>(table: &'t EmbeddingTable, vocab: &NodeVocab, kind: &NodeKind) -> Result<&'t [f64]> {
    let r = vocab.row(kind)?;
    if r >= table.rows {
        return Err(Error::Shape(format!("row {r} outside a table of {} rows", table.rows)));
    }
    Ok(table.row(r))
}

/// Gradient for the rows of an embedding table that a pass actually touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowGrads {
    rows: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn add(&mut self, row: usize, grad: &[f64]) {
        let slot = self.rows.entry(row).or_insert_with(|| vec![0.0; grad.len()]);
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += g;
        }
    }

    pub fn merge(&mut self, other: &RowGrads) {
        for (&r, g) in &other.rows {
            self.add(r, g);
        }
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.rows.get(&row).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&r, g)| (r, g.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.rows.values_mut() {
            for v in g {
                *v *= factor;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AstNode;

    fn tree(kinds: &[&str]) -> Ast {
        let mut nodes = vec![AstNode {
            id: 0,
            kind: "root".into(),
            children: (1..=kinds.len() as u64).collect(),
        }];
        for (i, k) in kinds.iter().enumerate() {
            nodes.push(AstNode {
                id: i as u64 + 1,
                kind: (*k).into(),
                children: vec![],
            });
        }
        Ast::new("t", None, 0, nodes).unwrap()
    }

    #[test]
    fn ids_are_lexicographic() {
        let v = NodeVocab::from_kinds(["if_statement".into(), "for_statement".into()], false);
        assert_eq!(v.len(), 2);
        assert_eq!(v.id(&"for_statement".into()), Some(0));
        assert_eq!(v.id(&"if_statement".into()), Some(1));
    }

    #[test]
    fn repeated_kind_gets_one_id() {
        let trees: Vec<Ast> = (0..5).map(|_| tree(&["for_statement", "for_statement"])).collect();
        let v = build_vocab(&trees);
        // root + for_statement
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn disjoint_kinds_add_up() {
        let a = Ast::new(
            "a",
            None,
            0,
            vec![
                AstNode { id: 0, kind: "a".into(), children: vec![1, 2] },
                AstNode { id: 1, kind: "b".into(), children: vec![] },
                AstNode { id: 2, kind: "c".into(), children: vec![] },
            ],
        )
        .unwrap();
        let b = Ast::new(
            "b",
            None,
            0,
            vec![
                AstNode { id: 0, kind: "d".into(), children: vec![1, 2] },
                AstNode { id: 1, kind: "e".into(), children: vec![] },
                AstNode { id: 2, kind: "f".into(), children: vec![] },
            ],
        )
        .unwrap();
        assert_eq!(build_vocab([&a, &b]).len(), 6);
    }

    #[test]
    fn init_shape_bounds_and_determinism() {
        let v = NodeVocab::from_kinds(["a".into(), "b".into()], false);
        let t = init_embeddings(&v, 120, 1).unwrap();
        assert_eq!((t.rows(), t.dim()), (2, 120));
        assert_eq!(init_embeddings(&v, 120, 1).unwrap(), t);
        assert_ne!(init_embeddings(&v, 120, 2).unwrap(), t);

        let v3 = NodeVocab::from_kinds(["a".into(), "b".into(), "c".into()], false);
        let t = init_embeddings(&v3, 4, 7).unwrap();
        assert_eq!(t.as_slice().len(), 12);
        assert!(t.as_slice().iter().all(|x| *x > -0.5 && *x < 0.5));
        assert!(init_embeddings(&v3, 0, 7).is_err());
    }

    #[test]
    fn lookup_with_and_without_unknown_slot() {
        let mut v = NodeVocab::from_kinds(["a".into(), "b".into()], true);
        let t = init_embeddings(&v, 3, 0).unwrap();
        assert_eq!(t.rows(), 3);
        assert_eq!(lookup(&t, &v, &"b".into()).unwrap(), t.row(1));
        assert_eq!(lookup(&t, &v, &"zzz".into()).unwrap(), t.row(2));
        v.set_unknown_slot(false);
        assert!(matches!(lookup(&t, &v, &"zzz".into()), Err(Error::UnknownKind(_))));
    }
}
