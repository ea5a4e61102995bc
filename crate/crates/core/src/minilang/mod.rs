//! A small C-like language and its lowering to [`Ast`].
//!
//! The lowered tree keeps structure only. Identifier names, literal values
//! and declared types are dropped; every node kind comes from [`VOCABULARY`].
//! The grammar is documented in `docs/grammar.md`.

mod lexer;
mod parser;
pub mod syntax;

use thiserror::Error;

use crate::ast::{Ast, AstError, AstNode, NodeKind, ROOT_KIND};

pub use lexer::{tokenize, Token, TokenKind};
use syntax::*;

#[derive(Debug, Error, PartialEq)]
pub enum MiniLangError {
    #[error("lexical error at {line}:{col}: {message}")]
    Lex { line: usize, col: usize, message: String },
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("duplicate function {name} at {line}:{col}")]
    DuplicateFunction { name: String, line: usize, col: usize },
    #[error("cannot print tree: {0}")]
    Print(String),
    #[error(transparent)]
    Ast(#[from] AstError),
}

/// Bumped whenever a kind is added, removed or renamed.
pub const VOCABULARY_VERSION: u32 = 1;

/// Every node kind [`parse`] can emit.
pub const VOCABULARY: &[&str] = &[
    "root",
    "function_def",
    "param",
    "block",
    "if_statement",
    "for_statement",
    "while_statement",
    "return_statement",
    "expr_statement",
    "decl_statement",
    "var_decl",
    "array_decl",
    "empty_statement",
    "empty_expr",
    "add_op",
    "sub_op",
    "mul_op",
    "div_op",
    "mod_op",
    "lt_op",
    "gt_op",
    "le_op",
    "ge_op",
    "eq_op",
    "ne_op",
    "and_op",
    "or_op",
    "assign_op",
    "plus_assign_op",
    "minus_assign_op",
    "neg_op",
    "not_op",
    "pre_increment_op",
    "pre_decrement_op",
    "post_increment_op",
    "post_decrement_op",
    "call_expr",
    "index_expr",
    "var_ref",
    "int_literal",
    "string_literal",
    "char_literal",
];

pub fn parse_unit(source: &str) -> Result<SourceUnit, MiniLangError> {
    let tokens = tokenize(source)?;
    parser::Parser::new(&tokens).parse_unit()
}

/// Parses source into an already-normalized tree (root over functions).
pub fn parse(source: &str) -> Result<Ast, MiniLangError> {
    let unit = parse_unit(source)?;
    if unit.functions.is_empty() {
        return Err(AstError::EmptyResult.into());
    }
    Ok(lower(&unit, "")?)
}

/// Lowers a syntax tree. Node ids follow pre-order.
pub fn lower(unit: &SourceUnit, source_id: &str) -> Result<Ast, AstError> {
    let mut b = Builder::default();
    let root = b.push(ROOT_KIND);
    for f in &unit.functions {
        let fid = b.push("function_def");
        b.link(root, fid);
        for _ in &f.params {
            let p = b.push("param");
            b.link(fid, p);
        }
        let block = b.stmt(&Stmt::Block(f.body.clone()));
        b.link(fid, block);
    }
    Ast::new(source_id, None, root, b.nodes)
}

#[derive(Default)]
struct Builder {
    nodes: Vec<AstNode>,
}

impl Builder {
    fn push(&mut self, kind: &str) -> u64 {
        let id = self.nodes.len() as u64;
        self.nodes.push(AstNode {
            id,
            kind: NodeKind::new(kind),
            children: Vec::new(),
        });
        id
    }

    fn link(&mut self, parent: u64, child: u64) {
        self.nodes[parent as usize].children.push(child);
    }

    fn with_children(&mut self, kind: &str, build: impl FnOnce(&mut Self) -> Vec<u64>) -> u64 {
        let id = self.push(kind);
        for c in build(self) {
            self.link(id, c);
        }
        id
    }

    fn stmt(&mut self, stmt: &Stmt) -> u64 {
        match stmt {
            Stmt::Block(body) => {
                let id = self.push("block");
                for s in body {
                    let c = self.stmt(s);
                    self.link(id, c);
                }
                id
            }
            Stmt::If(cond, then, els) => self.with_children("if_statement", |b| {
                let mut cs = vec![b.expr(cond), b.stmt(then)];
                if let Some(e) = els {
                    cs.push(b.stmt(e));
                }
                cs
            }),
            Stmt::For(init, cond, step, body) => self.with_children("for_statement", |b| {
                let init = match init {
                    Some(ForInit::Decl(d)) => b.decl(d),
                    Some(ForInit::Expr(e)) => b.expr(e),
                    None => b.push("empty_expr"),
                };
                let cond = b.opt_expr(cond.as_ref());
                let step = b.opt_expr(step.as_ref());
                vec![init, cond, step, b.stmt(body)]
            }),
            Stmt::While(cond, body) => self.with_children("while_statement", |b| vec![b.expr(cond), b.stmt(body)]),
            Stmt::Return(value) => self.with_children("return_statement", |b| value.iter().map(|v| b.expr(v)).collect()),
            Stmt::Expr(e) => self.with_children("expr_statement", |b| vec![b.expr(e)]),
            Stmt::Decl(d) => self.decl(d),
            Stmt::Empty => self.push("empty_statement"),
        }
    }

    fn decl(&mut self, decl: &Decl) -> u64 {
        self.with_children("decl_statement", |b| {
            decl.vars
                .iter()
                .map(|v| {
                    if let Some(size) = &v.array_size {
                        b.with_children("array_decl", |b| vec![b.expr(size)])
                    } else {
                        b.with_children("var_decl", |b| v.init.iter().map(|e| b.expr(e)).collect())
                    }
                })
                .collect()
        })
    }

    fn opt_expr(&mut self, e: Option<&Expr>) -> u64 {
        match e {
            Some(e) => self.expr(e),
            None => self.push("empty_expr"),
        }
    }

    fn expr(&mut self, e: &Expr) -> u64 {
        match e {
            Expr::Int(_) => self.push("int_literal"),
            Expr::Str(_) => self.push("string_literal"),
            Expr::Char(_) => self.push("char_literal"),
            Expr::Var(_) => self.push("var_ref"),
            Expr::Binary(op, l, r) => self.with_children(op.kind(), |b| vec![b.expr(l), b.expr(r)]),
            Expr::Assign(op, l, r) => self.with_children(op.kind(), |b| vec![b.expr(l), b.expr(r)]),
            Expr::Unary(op, inner) => self.with_children(op.kind(), |b| vec![b.expr(inner)]),
            Expr::Call(_, args) => self.with_children("call_expr", |b| args.iter().map(|a| b.expr(a)).collect()),
            Expr::Index(base, idx) => self.with_children("index_expr", |b| vec![b.expr(base), b.expr(idx)]),
        }
    }
}

/// Prints a tree built from [`VOCABULARY`] kinds back to source, using
/// placeholder names (`f0`, `p0`, `v`, `g`). Parsing the result gives back
/// the same tree.
pub fn print_ast(ast: &Ast) -> Result<String, MiniLangError> {
    Ok(raise(ast)?.to_string())
}

/// Inverse of [`lower`] up to names, values and types.
pub fn raise(ast: &Ast) -> Result<SourceUnit, MiniLangError> {
    let r = Raiser { ast };
    let root = r.node(ast.root())?;
    if root.kind.as_str() != ROOT_KIND {
        return Err(MiniLangError::Print(format!("expected '{ROOT_KIND}' at the root, found '{}'", root.kind)));
    }
    let mut unit = SourceUnit::default();
    for (i, &fid) in root.children.iter().enumerate() {
        let f = r.node(fid)?;
        r.expect_kind(f, "function_def")?;
        let Some((&body, params)) = f.children.split_last() else {
            return Err(MiniLangError::Print(format!("function node {fid} has no body")));
        };
        let mut ps = Vec::new();
        for (k, &p) in params.iter().enumerate() {
            r.expect_kind(r.node(p)?, "param")?;
            ps.push(Param {
                ty: "int".into(),
                name: format!("p{k}"),
                is_array: false,
            });
        }
        let Stmt::Block(body) = r.stmt(body)? else {
            return Err(MiniLangError::Print(format!("function node {fid} body is not a block")));
        };
        unit.functions.push(Function {
            ret_ty: "int".into(),
            name: format!("f{i}"),
            params: ps,
            body,
        });
    }
    Ok(unit)
}

/// True if `stmt` ends in an `if` without `else`, which would capture a
/// following `else` when printed.
fn open_if(stmt: &Stmt) -> bool {
    match stmt {
        Stmt::If(_, _, None) => true,
        Stmt::If(_, _, Some(e)) => open_if(e),
        Stmt::For(_, _, _, body) | Stmt::While(_, body) => open_if(body),
        _ => false,
    }
}

struct Raiser<'a> {
    ast: &'a Ast,
}

impl Raiser<'_> {
    fn node(&self, id: u64) -> Result<&AstNode, MiniLangError> {
        self.ast
            .node(id)
            .ok_or_else(|| MiniLangError::Print(format!("missing node {id}")))
    }

    fn expect_kind(&self, node: &AstNode, kind: &str) -> Result<(), MiniLangError> {
        if node.kind.as_str() == kind {
            Ok(())
        } else {
            Err(MiniLangError::Print(format!("expected '{kind}' at node {}, found '{}'", node.id, node.kind)))
        }
    }

    fn arity(&self, node: &AstNode, n: usize) -> Result<(), MiniLangError> {
        if node.children.len() == n {
            Ok(())
        } else {
            Err(MiniLangError::Print(format!(
                "node {} ({}) has {} children, expected {n}",
                node.id,
                node.kind,
                node.children.len()
            )))
        }
    }

    fn stmt(&self, id: u64) -> Result<Stmt, MiniLangError> {
        let n = self.node(id)?;
        let c = &n.children;
        Ok(match n.kind.as_str() {
            "block" => Stmt::Block(c.iter().map(|&s| self.stmt(s)).collect::<Result<_, _>>()?),
            "if_statement" => {
                if c.len() != 2 && c.len() != 3 {
                    return Err(MiniLangError::Print(format!("if node {id} needs 2 or 3 children")));
                }
                let then = self.stmt(c[1])?;
                let els = match c.get(2) {
                    Some(&e) if open_if(&then) => {
                        return Err(MiniLangError::Print(format!(
                            "if node {id}: else would bind to a nested if (node {e})"
                        )))
                    }
                    Some(&e) => Some(Box::new(self.stmt(e)?)),
                    None => None,
                };
                Stmt::If(self.expr(c[0])?, Box::new(then), els)
            }
            "for_statement" => {
                self.arity(n, 4)?;
                let init_node = self.node(c[0])?;
                let init = match init_node.kind.as_str() {
                    "empty_expr" => None,
                    "decl_statement" => Some(ForInit::Decl(self.decl(init_node)?)),
                    _ => Some(ForInit::Expr(self.expr(c[0])?)),
                };
                Stmt::For(init, self.opt_expr(c[1])?, self.opt_expr(c[2])?, Box::new(self.stmt(c[3])?))
            }
            "while_statement" => {
                self.arity(n, 2)?;
                Stmt::While(self.expr(c[0])?, Box::new(self.stmt(c[1])?))
            }
            "return_statement" => match c.as_slice() {
                [] => Stmt::Return(None),
                [e] => Stmt::Return(Some(self.expr(*e)?)),
                _ => return Err(MiniLangError::Print(format!("return node {id} has too many children"))),
            },
            "expr_statement" => {
                self.arity(n, 1)?;
                Stmt::Expr(self.expr(c[0])?)
            }
            "decl_statement" => Stmt::Decl(self.decl(n)?),
            "empty_statement" => {
                self.arity(n, 0)?;
                Stmt::Empty
            }
            other => return Err(MiniLangError::Print(format!("'{other}' at node {id} is not a statement"))),
        })
    }

    fn decl(&self, n: &AstNode) -> Result<Decl, MiniLangError> {
        if n.children.is_empty() {
            return Err(MiniLangError::Print(format!("declaration node {} is empty", n.id)));
        }
        let mut vars = Vec::new();
        for (k, &v) in n.children.iter().enumerate() {
            let vn = self.node(v)?;
            let name = format!("v{k}");
            let var = match vn.kind.as_str() {
                "var_decl" => match vn.children.as_slice() {
                    [] => VarDecl {
                        name,
                        array_size: None,
                        init: None,
                    },
                    [e] => VarDecl {
                        name,
                        array_size: None,
                        init: Some(self.expr(*e)?),
                    },
                    _ => return Err(MiniLangError::Print(format!("var_decl node {v} has too many children"))),
                },
                "array_decl" => {
                    self.arity(vn, 1)?;
                    VarDecl {
                        name,
                        array_size: Some(self.expr(vn.children[0])?),
                        init: None,
                    }
                }
                other => return Err(MiniLangError::Print(format!("'{other}' at node {v} is not a declarator"))),
            };
            vars.push(var);
        }
        Ok(Decl { ty: "int".into(), vars })
    }

    fn opt_expr(&self, id: u64) -> Result<Option<Expr>, MiniLangError> {
        if self.node(id)?.kind.as_str() == "empty_expr" {
            Ok(None)
        } else {
            self.expr(id).map(Some)
        }
    }

    fn expr(&self, id: u64) -> Result<Expr, MiniLangError> {
        let n = self.node(id)?;
        let c = &n.children;
        let kind = n.kind.as_str();
        let leaf = |e: Expr| -> Result<Expr, MiniLangError> {
            self.arity(n, 0)?;
            Ok(e)
        };
        if let Some(op) = BinOp::ALL.iter().find(|op| op.kind() == kind) {
            self.arity(n, 2)?;
            return Ok(Expr::Binary(*op, Box::new(self.expr(c[0])?), Box::new(self.expr(c[1])?)));
        }
        for op in [AssignOp::Assign, AssignOp::PlusAssign, AssignOp::MinusAssign] {
            if op.kind() == kind {
                self.arity(n, 2)?;
                return Ok(Expr::Assign(op, Box::new(self.expr(c[0])?), Box::new(self.expr(c[1])?)));
            }
        }
        for op in [
            UnaryOp::Neg,
            UnaryOp::Not,
            UnaryOp::PreInc,
            UnaryOp::PreDec,
            UnaryOp::PostInc,
            UnaryOp::PostDec,
        ] {
            if op.kind() == kind {
                self.arity(n, 1)?;
                return Ok(Expr::Unary(op, Box::new(self.expr(c[0])?)));
            }
        }
        match kind {
            "int_literal" => leaf(Expr::Int("0".into())),
            "string_literal" => leaf(Expr::Str("\"s\"".into())),
            "char_literal" => leaf(Expr::Char("'c'".into())),
            "var_ref" => leaf(Expr::Var("v".into())),
            "call_expr" => Ok(Expr::Call(
                "g".into(),
                c.iter().map(|&a| self.expr(a)).collect::<Result<_, _>>()?,
            )),
            "index_expr" => {
                self.arity(n, 2)?;
                Ok(Expr::Index(Box::new(self.expr(c[0])?), Box::new(self.expr(c[1])?)))
            }
            other => Err(MiniLangError::Print(format!("'{other}' at node {id} is not an expression"))),
        }
    }
}
