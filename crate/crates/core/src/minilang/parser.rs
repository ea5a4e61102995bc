//! Recursive-descent parser. Statements are parsed by straightforward
//! descent; binary expressions use precedence climbing over the C table:
//!
//! | level | operators          | assoc |
//! |-------|--------------------|-------|
//! | 1     | `=` `+=` `-=`      | right |
//! | 2     | `\|\|`             | left  |
//! | 3     | `&&`               | left  |
//! | 4     | `==` `!=`          | left  |
//! | 5     | `<` `>` `<=` `>=`  | left  |
//! | 6     | `+` `-`            | left  |
//! | 7     | `*` `/` `%`        | left  |
//! | 8     | prefix `-` `!` `++` `--` |  |
//! | 9     | postfix call, index, `++`, `--` | |

use std::collections::HashSet;

use super::lexer::{Token, TokenKind, TYPE_KEYWORDS};
use super::syntax::*;
use super::MiniLangError;

pub struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

fn binary_op(text: &str) -> Option<(BinOp, u8)> {
    let op = match text {
        "||" => (BinOp::Or, 2),
        "&&" => (BinOp::And, 3),
        "==" => (BinOp::Eq, 4),
        "!=" => (BinOp::Ne, 4),
        "<" => (BinOp::Lt, 5),
        ">" => (BinOp::Gt, 5),
        "<=" => (BinOp::Le, 5),
        ">=" => (BinOp::Ge, 5),
        "+" => (BinOp::Add, 6),
        "-" => (BinOp::Sub, 6),
        "*" => (BinOp::Mul, 7),
        "/" => (BinOp::Div, 7),
        "%" => (BinOp::Mod, 7),
        _ => return None,
    };
    Some(op)
}

fn assign_op(text: &str) -> Option<AssignOp> {
    match text {
        "=" => Some(AssignOp::Assign),
        "+=" => Some(AssignOp::PlusAssign),
        "-=" => Some(AssignOp::MinusAssign),
        _ => None,
    }
}

impl<'t> Parser<'t> {
    pub fn new(tokens: &'t [Token]) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_text(&self) -> Option<&'t str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::StringLiteral && t.kind != TokenKind::CharLiteral)
    }

    fn at_type(&self) -> bool {
        self.peek()
            .is_some_and(|t| t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str()))
    }

    fn advance(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> MiniLangError {
        match self.peek() {
            Some(t) => MiniLangError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {expected}, found '{}'", t.text),
            },
            None => {
                let (line, col) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.col + t.text.chars().count()))
                    .unwrap_or((1, 1));
                MiniLangError::Syntax {
                    line,
                    col,
                    message: format!("expected {expected}, found end of input"),
                }
            }
        }
    }

    fn expect(&mut self, text: &str) -> Result<(), MiniLangError> {
        if self.at(text) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("'{text}'")))
        }
    }

    fn expect_ident(&mut self) -> Result<String, MiniLangError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn expect_type(&mut self) -> Result<String, MiniLangError> {
        if self.at_type() {
            Ok(self.advance().expect("checked").text.clone())
        } else {
            Err(self.error("type name"))
        }
    }

    pub fn parse_unit(&mut self) -> Result<SourceUnit, MiniLangError> {
        let mut unit = SourceUnit::default();
        let mut names = HashSet::new();
        while let Some(start) = self.peek() {
            let func = self.parse_function()?;
            if !names.insert(func.name.clone()) {
                return Err(MiniLangError::DuplicateFunction {
                    name: func.name,
                    line: start.line,
                    col: start.col,
                });
            }
            unit.functions.push(func);
        }
        Ok(unit)
    }

    fn parse_function(&mut self) -> Result<Function, MiniLangError> {
        let ret_ty = self.expect_type()?;
        let name = self.expect_ident()?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.at(")") {
            loop {
                let ty = self.expect_type()?;
                let name = self.expect_ident()?;
                let is_array = if self.at("[") {
                    self.pos += 1;
                    self.expect("]")?;
                    true
                } else {
                    false
                };
                params.push(Param { ty, name, is_array });
                if self.at(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        let body = self.parse_block()?;
        Ok(Function {
            ret_ty,
            name,
            params,
            body,
        })
    }

    fn parse_block(&mut self) -> Result<Vec<Stmt>, MiniLangError> {
        self.expect("{")?;
        let mut body = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error("'}'"));
            }
            body.push(self.parse_stmt()?);
        }
        self.pos += 1;
        Ok(body)
    }

    fn parse_stmt(&mut self) -> Result<Stmt, MiniLangError> {
        if self.at("{") {
            return Ok(Stmt::Block(self.parse_block()?));
        }
        if self.at(";") {
            self.pos += 1;
            return Ok(Stmt::Empty);
        }
        if self.at_type() {
            let decl = self.parse_decl()?;
            self.expect(";")?;
            return Ok(Stmt::Decl(decl));
        }
        match self.peek_text() {
            Some("if") if self.peek().unwrap().kind == TokenKind::Keyword => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let then = Box::new(self.parse_stmt()?);
                let els = if self.at("else") {
                    self.pos += 1;
                    Some(Box::new(self.parse_stmt()?))
                } else {
                    None
                };
                Ok(Stmt::If(cond, then, els))
            }
            Some("while") => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                Ok(Stmt::While(cond, Box::new(self.parse_stmt()?)))
            }
            Some("for") => {
                self.pos += 1;
                self.expect("(")?;
                let init = if self.at(";") {
                    None
                } else if self.at_type() {
                    Some(ForInit::Decl(self.parse_decl()?))
                } else {
                    Some(ForInit::Expr(self.parse_expr()?))
                };
                self.expect(";")?;
                let cond = if self.at(";") { None } else { Some(self.parse_expr()?) };
                self.expect(";")?;
                let step = if self.at(")") { None } else { Some(self.parse_expr()?) };
                self.expect(")")?;
                Ok(Stmt::For(init, cond, step, Box::new(self.parse_stmt()?)))
            }
            Some("return") => {
                self.pos += 1;
                let value = if self.at(";") { None } else { Some(self.parse_expr()?) };
                self.expect(";")?;
                Ok(Stmt::Return(value))
            }
            Some("else") => Err(self.error("statement")),
            _ => {
                let e = self.parse_expr()?;
                self.expect(";")?;
                Ok(Stmt::Expr(e))
            }
        }
    }

    fn parse_decl(&mut self) -> Result<Decl, MiniLangError> {
        let ty = self.expect_type()?;
        let mut vars = Vec::new();
        loop {
            let name = self.expect_ident()?;
            let mut var = VarDecl {
                name,
                array_size: None,
                init: None,
            };
            if self.at("[") {
                self.pos += 1;
                var.array_size = Some(self.parse_expr()?);
                self.expect("]")?;
            } else if self.at("=") {
                self.pos += 1;
                var.init = Some(self.parse_assignment()?);
            }
            vars.push(var);
            if self.at(",") {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(Decl { ty, vars })
    }

    pub fn parse_expr(&mut self) -> Result<Expr, MiniLangError> {
        self.parse_assignment()
    }

    fn parse_assignment(&mut self) -> Result<Expr, MiniLangError> {
        let lhs = self.parse_binary(2)?;
        if let Some(op) = self.peek().filter(|t| t.kind == TokenKind::Operator).and_then(|t| assign_op(&t.text)) {
            self.pos += 1;
            let rhs = self.parse_assignment()?;
            return Ok(Expr::Assign(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn parse_binary(&mut self, min_prec: u8) -> Result<Expr, MiniLangError> {
        let mut lhs = self.parse_unary()?;
        while let Some((op, prec)) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Operator)
            .and_then(|t| binary_op(&t.text))
        {
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.parse_binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, MiniLangError> {
        let op = match self.peek() {
            Some(t) if t.kind == TokenKind::Operator => match t.text.as_str() {
                "-" => Some(UnaryOp::Neg),
                "!" => Some(UnaryOp::Not),
                "++" => Some(UnaryOp::PreInc),
                "--" => Some(UnaryOp::PreDec),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let e = self.parse_unary()?;
            return Ok(Expr::Unary(op, Box::new(e)));
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<Expr, MiniLangError> {
        let mut e = self.parse_primary()?;
        loop {
            if self.at("[") {
                self.pos += 1;
                let idx = self.parse_expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if self.at("++") {
                self.pos += 1;
                e = Expr::Unary(UnaryOp::PostInc, Box::new(e));
            } else if self.at("--") {
                self.pos += 1;
                e = Expr::Unary(UnaryOp::PostDec, Box::new(e));
            } else {
                return Ok(e);
            }
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, MiniLangError> {
        let Some(t) = self.peek() else {
            return Err(self.error("expression"));
        };
        match t.kind {
            TokenKind::IntLiteral => {
                self.pos += 1;
                Ok(Expr::Int(t.text.clone()))
            }
            TokenKind::StringLiteral => {
                self.pos += 1;
                Ok(Expr::Str(t.text.clone()))
            }
            TokenKind::CharLiteral => {
                self.pos += 1;
                Ok(Expr::Char(t.text.clone()))
            }
            TokenKind::Identifier => {
                self.pos += 1;
                if self.at("(") {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !self.at(")") {
                        loop {
                            args.push(self.parse_assignment()?);
                            if self.at(",") {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(")")?;
                    Ok(Expr::Call(t.text.clone(), args))
                } else {
                    Ok(Expr::Var(t.text.clone()))
                }
            }
            TokenKind::Punctuation if t.text == "(" => {
                self.pos += 1;
                let e = self.parse_expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }
}
