//! Concrete syntax of the mini-language, before lowering to [`crate::ast::Ast`].

use std::fmt::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            BinOp::Add => "add_op",
            BinOp::Sub => "sub_op",
            BinOp::Mul => "mul_op",
            BinOp::Div => "div_op",
            BinOp::Mod => "mod_op",
            BinOp::Lt => "lt_op",
            BinOp::Gt => "gt_op",
            BinOp::Le => "le_op",
            BinOp::Ge => "ge_op",
            BinOp::Eq => "eq_op",
            BinOp::Ne => "ne_op",
            BinOp::And => "and_op",
            BinOp::Or => "or_op",
        }
    }

    pub const ALL: [BinOp; 13] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::Lt,
        BinOp::Gt,
        BinOp::Le,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::And,
        BinOp::Or,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Assign,
    PlusAssign,
    MinusAssign,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Assign => "=",
            AssignOp::PlusAssign => "+=",
            AssignOp::MinusAssign => "-=",
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            AssignOp::Assign => "assign_op",
            AssignOp::PlusAssign => "plus_assign_op",
            AssignOp::MinusAssign => "minus_assign_op",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
}

impl UnaryOp {
    pub fn kind(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg_op",
            UnaryOp::Not => "not_op",
            UnaryOp::PreInc => "pre_increment_op",
            UnaryOp::PreDec => "pre_decrement_op",
            UnaryOp::PostInc => "post_increment_op",
            UnaryOp::PostDec => "post_decrement_op",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(String),
    Str(String),
    Char(String),
    Var(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Assign(AssignOp, Box<Expr>, Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Call(String, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub array_size: Option<Expr>,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub ty: String,
    pub vars: Vec<VarDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForInit {
    Decl(Decl),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    For(Option<ForInit>, Option<Expr>, Option<Expr>, Box<Stmt>),
    While(Expr, Box<Stmt>),
    Return(Option<Expr>),
    Expr(Expr),
    Decl(Decl),
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: String,
    pub name: String,
    pub is_array: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub ret_ty: String,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

/// A parsed translation unit: function definitions in source order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceUnit {
    pub functions: Vec<Function>,
}

// Pretty printing. Binary and assignment expressions are fully
// parenthesized, which keeps the printer independent of precedence.

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(s) | Expr::Str(s) | Expr::Char(s) | Expr::Var(s) => f.write_str(s),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Assign(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Unary(op, e) => match op {
                UnaryOp::Neg => write!(f, "(-{e})"),
                UnaryOp::Not => write!(f, "(!{e})"),
                UnaryOp::PreInc => write!(f, "(++{e})"),
                UnaryOp::PreDec => write!(f, "(--{e})"),
                UnaryOp::PostInc => write!(f, "({e}++)"),
                UnaryOp::PostDec => write!(f, "({e}--)"),
            },
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Index(base, idx) => write!(f, "{base}[{idx}]"),
        }
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.ty)?;
        for (i, v) in self.vars.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&v.name)?;
            if let Some(size) = &v.array_size {
                write!(f, "[{size}]")?;
            }
            if let Some(init) = &v.init {
                write!(f, " = {init}")?;
            }
        }
        Ok(())
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn write_stmt(out: &mut String, stmt: &Stmt, level: usize) {
    indent(out, level);
    match stmt {
        Stmt::Block(body) => {
            out.push_str("{\n");
            for s in body {
                write_stmt(out, s, level + 1);
            }
            indent(out, level);
            out.push_str("}\n");
        }
        Stmt::If(cond, then, els) => {
            let _ = writeln!(out, "if ({cond})");
            write_stmt(out, then, level + 1);
            if let Some(e) = els {
                indent(out, level);
                out.push_str("else\n");
                write_stmt(out, e, level + 1);
            }
        }
        Stmt::For(init, cond, step, body) => {
            out.push_str("for (");
            match init {
                Some(ForInit::Decl(d)) => {
                    let _ = write!(out, "{d}");
                }
                Some(ForInit::Expr(e)) => {
                    let _ = write!(out, "{e}");
                }
                None => {}
            }
            out.push_str("; ");
            if let Some(c) = cond {
                let _ = write!(out, "{c}");
            }
            out.push_str("; ");
            if let Some(s) = step {
                let _ = write!(out, "{s}");
            }
            out.push_str(")\n");
            write_stmt(out, body, level + 1);
        }
        Stmt::While(cond, body) => {
            let _ = writeln!(out, "while ({cond})");
            write_stmt(out, body, level + 1);
        }
        Stmt::Return(Some(e)) => {
            let _ = writeln!(out, "return {e};");
        }
        Stmt::Return(None) => out.push_str("return;\n"),
        Stmt::Expr(e) => {
            let _ = writeln!(out, "{e};");
        }
        Stmt::Decl(d) => {
            let _ = writeln!(out, "{d};");
        }
        Stmt::Empty => out.push_str(";\n"),
    }
}

impl fmt::Display for SourceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = write!(out, "{} {}(", func.ret_ty, func.name);
            for (k, p) in func.params.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{} {}{}", p.ty, p.name, if p.is_array { "[]" } else { "" });
            }
            out.push_str(")\n");
            write_stmt(&mut out, &Stmt::Block(func.body.clone()), 0);
        }
        f.write_str(&out)
    }
}
