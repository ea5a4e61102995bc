//! Random mini-language programs whose "runtime" is a closed-form weighted
//! statement count: every simple statement (expression, declaration, return)
//! costs `multiplier^depth`, where `depth` is the number of enclosing loops.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{normalize, save_ast, Ast};
use crate::error::{Error, Result};
use crate::minilang::syntax::{AssignOp, BinOp, Decl, Expr, ForInit, Function, Param, SourceUnit, Stmt, UnaryOp, VarDecl};
use crate::minilang;
use crate::pairs::{write_manifest, ManifestRow};

/// Minimum coefficient of variation of corpus costs.
pub const MIN_CV: f64 = 0.3;
const RETRY_BUDGET: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Cost dominated by loop nesting (multiplier 10).
    LoopDepth,
    /// Cost is the plain statement count (multiplier 1).
    StatementCount,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::LoopDepth => "loop-depth",
            Family::StatementCount => "statement-count",
        }
    }

    pub fn cost_model(self) -> CostModel {
        match self {
            Family::LoopDepth => CostModel { multiplier: 10 },
            Family::StatementCount => CostModel { multiplier: 1 },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "loop-depth" => Ok(Family::LoopDepth),
            "statement-count" => Ok(Family::StatementCount),
            other => Err(format!("unknown family '{other}' (expected loop-depth or statement-count)")),
        }
    }
}

/// One unit per simple statement, times `multiplier` per enclosing loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub multiplier: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { multiplier: 10 }
    }
}

impl CostModel {
    pub fn statement_cost(&self, depth: usize) -> f64 {
        f64::from(self.multiplier).powi(depth as i32)
    }

    /// Closed form from per-depth statement counts.
    pub fn cost(&self, counts_by_depth: &[usize]) -> f64 {
        counts_by_depth
            .iter()
            .enumerate()
            .map(|(d, &n)| n as f64 * self.statement_cost(d))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_programs: usize,
    pub max_loop_depth: usize,
    /// Upper bound on simple statements per program, excluding the final return.
    pub max_statements: usize,
    /// Relative weight of opening a loop versus emitting a simple statement.
    pub loop_iteration_weight: f64,
    pub seed: u64,
    pub family: Family,
    pub cost: CostModel,
}

impl GenConfig {
    pub fn new(family: Family, n_programs: usize, seed: u64) -> Self {
        GenConfig {
            n_programs,
            max_loop_depth: 3,
            max_statements: 12,
            loop_iteration_weight: 1.0,
            seed,
            family,
            cost: family.cost_model(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_programs == 0 || self.max_statements == 0 {
            return Err(Error::Config("program count and statement bound must be positive".into()));
        }
        if !(self.loop_iteration_weight.is_finite() && self.loop_iteration_weight > 0.0) {
            return Err(Error::Config("loop weight must be positive".into()));
        }
        if self.cost.multiplier == 0 {
            return Err(Error::Config("cost multiplier must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProgram {
    pub source_id: String,
    pub source: String,
    pub cost: f64,
    pub family: Family,
}

/// Generates `n_programs` sources. Whole corpora are redrawn until the cost
/// coefficient of variation reaches [`MIN_CV`].
pub fn generate_corpus(config: &GenConfig) -> Result<Vec<SynthProgram>> {
    config.validate()?;
    let mut best_cv = 0.0f64;
    for attempt in 0..RETRY_BUDGET {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(attempt);
        let corpus: Vec<SynthProgram> = (0..config.n_programs)
            .map(|i| {
                let (unit, cost) = generate_program(config, &mut rng);
                SynthProgram {
                    source_id: format!("{}_{i:04}", config.family.name()),
                    source: unit.to_string(),
                    cost,
                    family: config.family,
                }
            })
            .collect();
        let cv = coefficient_of_variation(&corpus.iter().map(|p| p.cost).collect::<Vec<_>>());
        if cv >= MIN_CV {
            return Ok(corpus);
        }
        best_cv = best_cv.max(cv);
    }
    Err(Error::Config(format!(
        "infeasible generator config: cost variation {best_cv:.3} stays below {MIN_CV} after {RETRY_BUDGET} attempts"
    )))
}

pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if mean == 0.0 {
        0.0
    } else {
        var.sqrt() / mean
    }
}

/// One program and its closed-form cost.
pub fn generate_program(config: &GenConfig, rng: &mut impl Rng) -> (SourceUnit, f64) {
    let mut g = Gen {
        config,
        rng,
        counts: vec![0; config.max_loop_depth + 1],
    };
    let mut budget = g.rng.gen_range(1..=config.max_statements);
    let mut body = g.block(0, &mut budget);
    body.push(Stmt::Return(Some(g.atom())));
    g.counts[0] += 1;
    let cost = config.cost.cost(&g.counts);
    let function = Function {
        ret_ty: "int".into(),
        name: "f".into(),
        params: vec![
            Param {
                ty: "int".into(),
                name: "n".into(),
                is_array: false,
            },
            Param {
                ty: "int".into(),
                name: "a".into(),
                is_array: true,
            },
        ],
        body,
    };
    (
        SourceUnit {
            functions: vec![function],
        },
        cost,
    )
}

struct Gen<'a, R> {
    config: &'a GenConfig,
    rng: &'a mut R,
    counts: Vec<usize>,
}

impl<R: Rng> Gen<'_, R> {
    fn block(&mut self, depth: usize, budget: &mut usize) -> Vec<Stmt> {
        let mut out = Vec::new();
        while *budget > 0 {
            let loop_w = if depth < self.config.max_loop_depth {
                self.config.loop_iteration_weight
            } else {
                0.0
            };
            let if_w = 0.3;
            let roll = self.rng.gen::<f64>() * (loop_w + if_w + 1.0);
            if roll < loop_w {
                let mut inner = self.rng.gen_range(1..=*budget);
                *budget -= inner;
                let body = Stmt::Block(self.block(depth + 1, &mut inner));
                out.push(self.loop_stmt(depth, body));
            } else if roll < loop_w + if_w {
                let mut inner = self.rng.gen_range(1..=*budget);
                *budget -= inner;
                let cond = self.binary();
                if inner >= 2 && self.rng.gen_bool(0.4) {
                    let mut then_budget = self.rng.gen_range(1..inner);
                    let mut else_budget = inner - then_budget;
                    let then = Stmt::Block(self.block(depth, &mut then_budget));
                    let els = Stmt::Block(self.block(depth, &mut else_budget));
                    out.push(Stmt::If(cond, Box::new(then), Some(Box::new(els))));
                } else {
                    let then = Stmt::Block(self.block(depth, &mut inner));
                    out.push(Stmt::If(cond, Box::new(then), None));
                }
            } else {
                *budget -= 1;
                self.counts[depth] += 1;
                out.push(self.simple());
            }
        }
        out
    }

    fn loop_stmt(&mut self, depth: usize, body: Stmt) -> Stmt {
        let bound = if self.rng.gen_bool(0.5) {
            Expr::Var("n".into())
        } else {
            Expr::Int(self.rng.gen_range(2..1000).to_string())
        };
        if self.rng.gen_bool(0.6) {
            let i = format!("i{depth}");
            Stmt::For(
                Some(ForInit::Decl(Decl {
                    ty: "int".into(),
                    vars: vec![VarDecl {
                        name: i.clone(),
                        array_size: None,
                        init: Some(Expr::Int("0".into())),
                    }],
                })),
                Some(Expr::Binary(BinOp::Lt, Box::new(Expr::Var(i.clone())), Box::new(bound))),
                Some(Expr::Unary(UnaryOp::PostInc, Box::new(Expr::Var(i)))),
                Box::new(body),
            )
        } else {
            let w = format!("w{depth}");
            Stmt::While(Expr::Binary(BinOp::Lt, Box::new(Expr::Var(w)), Box::new(bound)), Box::new(body))
        }
    }

    fn var(&mut self) -> Expr {
        Expr::Var(format!("v{}", self.rng.gen_range(0..4)))
    }

    fn atom(&mut self) -> Expr {
        if self.rng.gen_bool(0.7) {
            self.var()
        } else {
            Expr::Int(self.rng.gen_range(0..100).to_string())
        }
    }

    fn binary(&mut self) -> Expr {
        const OPS: [BinOp; 6] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Lt, BinOp::Gt, BinOp::Eq];
        let op = OPS[self.rng.gen_range(0..OPS.len())];
        Expr::Binary(op, Box::new(self.atom()), Box::new(self.atom()))
    }

    fn expr(&mut self) -> Expr {
        if self.rng.gen_bool(0.5) {
            self.atom()
        } else {
            self.binary()
        }
    }

    fn simple(&mut self) -> Stmt {
        match self.rng.gen_range(0..4) {
            0 => Stmt::Decl(Decl {
                ty: "int".into(),
                vars: vec![VarDecl {
                    name: format!("v{}", self.rng.gen_range(0..4)),
                    array_size: None,
                    init: Some(self.expr()),
                }],
            }),
            1 => {
                let op = [AssignOp::Assign, AssignOp::PlusAssign, AssignOp::MinusAssign][self.rng.gen_range(0..3)];
                let target = self.var();
                Stmt::Expr(Expr::Assign(op, Box::new(target), Box::new(self.expr())))
            }
            2 => {
                let idx = self.var();
                let target = Expr::Index(Box::new(Expr::Var("a".into())), Box::new(idx));
                Stmt::Expr(Expr::Assign(AssignOp::Assign, Box::new(target), Box::new(self.expr())))
            }
            _ => Stmt::Expr(Expr::Call("g".into(), vec![self.atom()])),
        }
    }
}

/// Independent walker over a lowered tree: counts simple statements weighted
/// by `multiplier^(enclosing loops)`. A declaration in a `for` header is not a
/// statement of its own.
pub fn reference_cost(ast: &Ast, model: &CostModel) -> f64 {
    let topo = ast.topology();
    let mut total = 0.0;
    for v in 0..topo.len() {
        let kind = topo.kinds[v].as_str();
        if !matches!(kind, "expr_statement" | "decl_statement" | "return_statement") {
            continue;
        }
        if let Some(p) = topo.parent[v] {
            if topo.kinds[p].as_str() == "for_statement" && topo.children[p][0] == v {
                continue;
            }
        }
        let mut depth = 0;
        let mut cur = topo.parent[v];
        while let Some(p) = cur {
            if matches!(topo.kinds[p].as_str(), "for_statement" | "while_statement") {
                depth += 1;
            }
            cur = topo.parent[p];
        }
        total += model.statement_cost(depth);
    }
    total
}

/// Parses, normalizes and writes every program as `<source_id>.json` plus its
/// `.c` source, then `manifest.csv`. Returns the manifest path.
pub fn corpus_to_manifest(corpus: &[SynthProgram], out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(corpus.len());
    for p in corpus {
        let ast = program_ast(p)?;
        let file = format!("{}.json", p.source_id);
        save_ast(&ast, out_dir.join(&file))?;
        let src_path = out_dir.join(format!("{}.c", p.source_id));
        std::fs::write(&src_path, &p.source).map_err(|e| Error::io(&src_path, e))?;
        rows.push(ManifestRow {
            source_id: p.source_id.clone(),
            ast_path: file,
            runtime_ms: p.cost.to_string(),
            problem_tag: p.family.name().to_string(),
        });
    }
    let manifest = out_dir.join("manifest.csv");
    write_manifest(&rows, &manifest)?;
    Ok(manifest)
}

/// Normalized tree of a generated program, carrying its cost as runtime.
pub fn program_ast(program: &SynthProgram) -> Result<Ast> {
    let ast = normalize(&minilang::parse(&program.source)?)?
        .with_source_id(program.source_id.clone())
        .with_runtime(Some(program.cost))?;
    Ok(ast)
}
