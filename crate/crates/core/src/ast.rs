//! AST data model, JSON ingest/export and function-level normalization.
//!
//! A tree is stored as a flat list of nodes in serialization order. Node ids
//! are local to one tree; the global identity of a construct is its
//! [`NodeKind`] name, which the embedding vocabulary maps to a row.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kind name of the synthetic root created by [`normalize`].
pub const ROOT_KIND: &str = "root";

/// Kinds that [`normalize`] treats as function definitions. The first is what
/// the bundled mini-language emits, the others cover common frontends.
pub const FUNCTION_KINDS: &[&str] = &["function_def", "function_definition", "SgFunctionDefinition"];

#[derive(Debug, Error, PartialEq)]
pub enum AstError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty tree: no nodes")]
    Empty,
    #[error("empty node kind at node {0}")]
    EmptyKind(u64),
    #[error("duplicate node id {0}")]
    DuplicateId(u64),
    #[error("missing root: node {0} does not exist")]
    MissingRoot(u64),
    #[error("node {node} references missing child {child}")]
    MissingChild { node: u64, child: u64 },
    #[error("cycle at node {0}")]
    Cycle(u64),
    #[error("node {0} has more than one parent")]
    MultipleParents(u64),
    #[error("orphan node {0} is not reachable from the root")]
    Orphan(u64),
    #[error("invalid runtime {0} (must be finite and non-negative)")]
    InvalidRuntime(f64),
    #[error("empty result: no function definitions found")]
    EmptyResult,
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Syntactic category of a node, e.g. `for_statement`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeKind(String);

impl NodeKind {
    pub fn new(name: impl Into<String>) -> Self {
        NodeKind(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeKind {
    fn from(s: &str) -> Self {
        NodeKind(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AstNode {
    pub id: u64,
    pub kind: NodeKind,
    pub children: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AstFile {
    source_id: String,
    runtime_ms: Option<f64>,
    root: u64,
    nodes: Vec<AstNode>,
}

/// A validated, immutable tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    source_id: String,
    runtime_ms: Option<f64>,
    root: u64,
    nodes: Vec<AstNode>,
    slot: HashMap<u64, usize>,
}

impl Ast {
    /// Builds a tree, checking every structural invariant.
    pub fn new(
        source_id: impl Into<String>,
        runtime_ms: Option<f64>,
        root: u64,
        nodes: Vec<AstNode>,
    ) -> Result<Self, AstError> {
        if nodes.is_empty() {
            return Err(AstError::Empty);
        }
        if let Some(t) = runtime_ms {
            if !t.is_finite() || t < 0.0 {
                return Err(AstError::InvalidRuntime(t));
            }
        }
        let mut slot = HashMap::with_capacity(nodes.len());
        for (pos, node) in nodes.iter().enumerate() {
            if node.kind.as_str().is_empty() {
                return Err(AstError::EmptyKind(node.id));
            }
            if slot.insert(node.id, pos).is_some() {
                return Err(AstError::DuplicateId(node.id));
            }
        }
        if !slot.contains_key(&root) {
            return Err(AstError::MissingRoot(root));
        }
        let mut parent: HashMap<u64, u64> = HashMap::with_capacity(nodes.len());
        for node in &nodes {
            for &child in &node.children {
                if child == node.id {
                    return Err(AstError::Cycle(child));
                }
                if !slot.contains_key(&child) {
                    return Err(AstError::MissingChild { node: node.id, child });
                }
                if parent.insert(child, node.id).is_some() {
                    return Err(AstError::MultipleParents(child));
                }
            }
        }
        if parent.contains_key(&root) {
            // Something points back at the root.
            return Err(AstError::Cycle(root));
        }
        // With at most one parent per node and a parentless root, anything
        // unreachable is either an orphan or sits on a cycle.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let pos = slot[&id];
            seen[pos] = true;
            stack.extend(nodes[pos].children.iter().copied());
        }
        if let Some(pos) = seen.iter().position(|s| !s) {
            let id = nodes[pos].id;
            // Walk up the parent chain: if it loops, report the cycle.
            let mut cur = id;
            let mut steps = 0;
            while let Some(&p) = parent.get(&cur) {
                cur = p;
                steps += 1;
                if cur == id || steps > nodes.len() {
                    return Err(AstError::Cycle(id));
                }
            }
            return Err(AstError::Orphan(id));
        }
        Ok(Ast {
            source_id: source_id.into(),
            runtime_ms,
            root,
            nodes,
            slot,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, AstError> {
        let file: AstFile = serde_json::from_str(text).map_err(|e| AstError::Parse(e.to_string()))?;
        Ast::new(file.source_id, file.runtime_ms, file.root, file.nodes)
    }

    /// Canonical JSON: keys sorted, nodes in stored order, no whitespace.
    pub fn to_json(&self) -> String {
        let file = AstFile {
            source_id: self.source_id.clone(),
            runtime_ms: self.runtime_ms,
            root: self.root,
            nodes: self.nodes.clone(),
        };
        // Going through `Value` sorts object keys.
        let value = serde_json::to_value(&file).expect("AST serializes");
        serde_json::to_string(&value).expect("AST serializes")
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn runtime_ms(&self) -> Option<f64> {
        self.runtime_ms
    }

    pub fn with_runtime(mut self, runtime_ms: Option<f64>) -> Result<Self, AstError> {
        if let Some(t) = runtime_ms {
            if !t.is_finite() || t < 0.0 {
                return Err(AstError::InvalidRuntime(t));
            }
        }
        self.runtime_ms = runtime_ms;
        Ok(self)
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: u64) -> Option<&AstNode> {
        self.slot.get(&id).map(|&p| &self.nodes[p])
    }

    /// Ids in pre-order (parent before children, children in stored order).
    pub fn pre_order(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            let node = &self.nodes[self.slot[&id]];
            stack.extend(node.children.iter().rev().copied());
        }
        out
    }

    /// Ids in post-order (children before parent).
    pub fn post_order(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                out.push(id);
                continue;
            }
            stack.push((id, true));
            let node = &self.nodes[self.slot[&id]];
            stack.extend(node.children.iter().rev().map(|&c| (c, false)));
        }
        out
    }

    /// Compact, index-based view used by the encoders.
    pub fn topology(&self) -> Topology {
        Topology::from_ast(self)
    }
}

pub fn load_ast(path: impl AsRef<Path>) -> Result<Ast, AstError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AstError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ast::from_json(&text)
}

pub fn save_ast(ast: &Ast, path: impl AsRef<Path>) -> Result<(), AstError> {
    let path = path.as_ref();
    fs::write(path, ast.to_json()).map_err(|e| AstError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Keeps only function-definition subtrees and hangs them, in source order,
/// under a fresh root of kind [`ROOT_KIND`]. Ids are renumbered in pre-order,
/// so a tree already in that shape is returned unchanged.
pub fn normalize(ast: &Ast) -> Result<Ast, AstError> {
    let is_function = |kind: &NodeKind| FUNCTION_KINDS.contains(&kind.as_str());

    // Topmost function definitions in pre-order.
    let mut functions = Vec::new();
    let mut stack = vec![ast.root];
    while let Some(id) = stack.pop() {
        let node = ast.node(id).expect("validated");
        if is_function(&node.kind) {
            functions.push(id);
        } else {
            stack.extend(node.children.iter().rev().copied());
        }
    }
    if functions.is_empty() {
        return Err(AstError::EmptyResult);
    }

    let mut nodes = vec![AstNode {
        id: 0,
        kind: NodeKind::new(ROOT_KIND),
        children: Vec::with_capacity(functions.len()),
    }];
    for f in functions {
        let new_id = copy_subtree(ast, f, &mut nodes);
        nodes[0].children.push(new_id);
    }
    Ast::new(ast.source_id.clone(), ast.runtime_ms, 0, nodes)
}

fn copy_subtree(ast: &Ast, id: u64, out: &mut Vec<AstNode>) -> u64 {
    let node = ast.node(id).expect("validated");
    let new_id = out.len() as u64;
    out.push(AstNode {
        id: new_id,
        kind: node.kind.clone(),
        children: Vec::with_capacity(node.children.len()),
    });
    for &child in &node.children {
        let c = copy_subtree(ast, child, out);
        out[new_id as usize].children.push(c);
    }
    new_id
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub node_count: usize,
    pub depth: usize,
    pub kind_histogram: BTreeMap<NodeKind, usize>,
}

/// Node count, depth (a single node has depth 1) and kind histogram.
pub fn tree_stats(ast: &Ast) -> TreeStats {
    let mut kind_histogram = BTreeMap::new();
    let mut depth = 0;
    let mut stack = vec![(ast.root, 1usize)];
    let mut count = 0;
    while let Some((id, level)) = stack.pop() {
        let node = ast.node(id).expect("validated");
        count += 1;
        depth = depth.max(level);
        *kind_histogram.entry(node.kind.clone()).or_insert(0) += 1;
        stack.extend(node.children.iter().map(|&c| (c, level + 1)));
    }
    TreeStats {
        node_count: count,
        depth,
        kind_histogram,
    }
}

/// Positional view of a tree: node `p` has kind `kinds[p]`, its children
/// sorted by ascending original id, and its parent. Position 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub kinds: Vec<NodeKind>,
    pub children: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    /// Children before parents.
    pub post_order: Vec<usize>,
}

impl Topology {
    pub fn from_ast(ast: &Ast) -> Self {
        let pre = ast.pre_order();
        let pos: HashMap<u64, usize> = pre.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        let n = pre.len();
        let mut kinds = Vec::with_capacity(n);
        let mut children = Vec::with_capacity(n);
        let mut parent = vec![None; n];
        for (p, &id) in pre.iter().enumerate() {
            let node = ast.node(id).expect("validated");
            kinds.push(node.kind.clone());
            // Canonical summation order: ascending child id.
            let mut ids = node.children.clone();
            ids.sort_unstable();
            let cs: Vec<usize> = ids.iter().map(|c| pos[c]).collect();
            for &c in &cs {
                parent[c] = Some(p);
            }
            children.push(cs);
        }
        let post_order = ast.post_order().iter().map(|id| pos[id]).collect();
        Topology {
            kinds,
            children,
            parent,
            post_order,
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Parents before children (pre-order positions are `0..n`).
    pub fn pre_order(&self) -> impl DoubleEndedIterator<Item = usize> {
        0..self.kinds.len()
    }
}
