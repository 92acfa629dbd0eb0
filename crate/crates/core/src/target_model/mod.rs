//! Declarative target programs: a control-flow graph of branch blocks, each
//! comparing a branch distance against zero, with one designated target edge.

mod exec;
mod expr;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exec::{execute, run, BranchVisit, ExecutionTrace, NaturalSteering, Steering};
pub use expr::{eval_distance, Bindings, Expr};

pub const DEFAULT_MAX_STEPS: u64 = 4096;

/// Comparison of the branch distance against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Predicate {
    pub const ALL: [Predicate; 6] =
        [Predicate::Eq, Predicate::Ne, Predicate::Lt, Predicate::Le, Predicate::Gt, Predicate::Ge];

    pub fn holds(self, distance: i64) -> bool {
        match self {
            Predicate::Eq => distance == 0,
            Predicate::Ne => distance != 0,
            Predicate::Lt => distance < 0,
            Predicate::Le => distance <= 0,
            Predicate::Gt => distance > 0,
            Predicate::Ge => distance >= 0,
        }
    }

    /// The predicate guarding the false edge.
    pub fn negate(self) -> Predicate {
        match self {
            Predicate::Eq => Predicate::Ne,
            Predicate::Ne => Predicate::Eq,
            Predicate::Lt => Predicate::Ge,
            Predicate::Le => Predicate::Gt,
            Predicate::Gt => Predicate::Le,
            Predicate::Ge => Predicate::Lt,
        }
    }

    /// Predicate that must hold for the edge in direction `dir` to be taken.
    pub fn for_direction(self, dir: bool) -> Predicate {
        if dir {
            self
        } else {
            self.negate()
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Predicate::Eq => "==",
            Predicate::Ne => "!=",
            Predicate::Lt => "<",
            Predicate::Le => "<=",
            Predicate::Gt => ">",
            Predicate::Ge => ">=",
        };
        f.write_str(s)
    }
}

/// Edge out of a branch block: the block index plus the direction taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub block: usize,
    pub dir: bool,
}

impl Edge {
    pub fn new(block: usize, dir: bool) -> Self {
        Edge { block, dir }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Successor {
    Block(usize),
    Exit,
}

/// `var = memory[addr]`, valid for `0 <= addr < bound`. Out-of-range
/// addresses fault. Cell `a` holds `table[a]` when a table is given and `a`
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Load {
    pub var: String,
    pub addr: Expr,
    pub bound: u64,
    pub table: Option<Vec<i64>>,
}

impl Load {
    pub fn read(&self, addr: i64) -> Option<i64> {
        if addr < 0 || addr as u64 >= self.bound {
            return None;
        }
        Some(match &self.table {
            Some(t) => t[addr as usize],
            None => addr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchBlock {
    pub id: String,
    pub loads: Vec<Load>,
    pub distance: Expr,
    pub predicate: Predicate,
    pub true_succ: Successor,
    pub false_succ: Successor,
}

impl BranchBlock {
    pub fn successor(&self, dir: bool) -> Successor {
        if dir {
            self.true_succ
        } else {
            self.false_succ
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetProgram {
    input_length: usize,
    blocks: Vec<BranchBlock>,
    entry: usize,
    target: Edge,
    max_steps: u64,
}

impl TargetProgram {
    pub fn input_length(&self) -> usize {
        self.input_length
    }

    pub fn blocks(&self) -> &[BranchBlock] {
        &self.blocks
    }

    pub fn block(&self, idx: usize) -> &BranchBlock {
        &self.blocks[idx]
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn target(&self) -> Edge {
        self.target
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn block_index(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }

    /// `"<block id>:T"` or `"<block id>:F"`.
    pub fn edge_label(&self, edge: Edge) -> String {
        format!("{}:{}", self.blocks[edge.block].id, if edge.dir { 'T' } else { 'F' })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let desc: ProgramDescription = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        TargetProgram::from_description(desc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.description()).expect("program description serializes")
    }

    pub fn from_description(desc: ProgramDescription) -> Result<Self> {
        let invalid = |msg: String| Err(Error::Validation(msg));
        if desc.input_length == 0 {
            return invalid("input_length must be at least 1".into());
        }
        if desc.max_steps == 0 {
            return invalid("max_steps must be at least 1".into());
        }
        let mut index = HashMap::new();
        for (i, b) in desc.blocks.iter().enumerate() {
            if b.id == EXIT {
                return invalid(format!("block id `{EXIT}` is reserved"));
            }
            if index.insert(b.id.as_str(), i).is_some() {
                return invalid(format!("duplicate block id `{}`", b.id));
            }
        }
        let resolve = |name: &str, ctx: &str| -> Result<Successor> {
            if name == EXIT {
                return Ok(Successor::Exit);
            }
            index
                .get(name)
                .map(|&i| Successor::Block(i))
                .ok_or_else(|| Error::Validation(format!("{ctx} references missing block `{name}`")))
        };

        let mut blocks = Vec::with_capacity(desc.blocks.len());
        for b in &desc.blocks {
            let mut bound_vars: Vec<&str> = Vec::new();
            let check_expr = |e: &Expr, bound_vars: &[&str], what: &str| -> Result<()> {
                let mut err = None;
                e.visit(&mut |node| match node {
                    Expr::Input(j) if *j >= desc.input_length && err.is_none() => {
                        err = Some(format!(
                            "block `{}` {what}: input[{j}] out of range for input_length {}",
                            b.id, desc.input_length
                        ));
                    }
                    Expr::Var(v) if !bound_vars.contains(&v.as_str()) && err.is_none() => {
                        err = Some(format!("block `{}` {what}: unbound variable `{v}`", b.id));
                    }
                    _ => {}
                });
                err.map_or(Ok(()), |m| Err(Error::Validation(m)))
            };
            let mut loads = Vec::with_capacity(b.loads.len());
            for l in &b.loads {
                check_expr(&l.addr, &bound_vars, "load address")?;
                if l.bound == 0 {
                    return invalid(format!("block `{}`: load bound must be positive", b.id));
                }
                if let Some(t) = &l.table {
                    if t.len() as u64 != l.bound {
                        return invalid(format!(
                            "block `{}`: load table has {} cells, bound is {}",
                            b.id,
                            t.len(),
                            l.bound
                        ));
                    }
                }
                bound_vars.push(&l.var);
                loads.push(Load { var: l.var.clone(), addr: l.addr.clone(), bound: l.bound, table: l.table.clone() });
            }
            check_expr(&b.distance, &bound_vars, "distance")?;
            blocks.push(BranchBlock {
                id: b.id.clone(),
                loads,
                distance: b.distance.clone(),
                predicate: b.predicate,
                true_succ: resolve(&b.true_succ, &format!("block `{}` true_succ", b.id))?,
                false_succ: resolve(&b.false_succ, &format!("block `{}` false_succ", b.id))?,
            });
        }
        let entry = *index
            .get(desc.entry.as_str())
            .ok_or_else(|| Error::Validation(format!("entry block `{}` does not exist", desc.entry)))?;
        let target_block = *index
            .get(desc.target.block.as_str())
            .ok_or_else(|| Error::Validation(format!("target block `{}` does not exist", desc.target.block)))?;
        Ok(TargetProgram {
            input_length: desc.input_length,
            blocks,
            entry,
            target: Edge::new(target_block, desc.target.dir == Direction::True),
            max_steps: desc.max_steps,
        })
    }

    pub fn description(&self) -> ProgramDescription {
        let succ = |s: Successor| match s {
            Successor::Exit => EXIT.to_string(),
            Successor::Block(i) => self.blocks[i].id.clone(),
        };
        ProgramDescription {
            input_length: self.input_length,
            entry: self.blocks[self.entry].id.clone(),
            max_steps: self.max_steps,
            target: TargetSpec {
                block: self.blocks[self.target.block].id.clone(),
                dir: if self.target.dir { Direction::True } else { Direction::False },
            },
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockSpec {
                    id: b.id.clone(),
                    loads: b
                        .loads
                        .iter()
                        .map(|l| LoadSpec {
                            var: l.var.clone(),
                            addr: l.addr.clone(),
                            bound: l.bound,
                            table: l.table.clone(),
                        })
                        .collect(),
                    distance: b.distance.clone(),
                    predicate: b.predicate,
                    true_succ: succ(b.true_succ),
                    false_succ: succ(b.false_succ),
                })
                .collect(),
        }
    }
}

/// Reads and validates a program description file.
pub fn load_program(path: impl AsRef<Path>) -> Result<TargetProgram> {
    let text = std::fs::read_to_string(path)?;
    TargetProgram::from_json(&text)
}

const EXIT: &str = "exit";

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

/// On-disk program description (UTF-8 JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramDescription {
    pub input_length: usize,
    pub entry: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    pub target: TargetSpec,
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub block: String,
    pub dir: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "true")]
    True,
    #[serde(rename = "false")]
    False,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub id: String,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    pub distance: Expr,
    pub predicate: Predicate,
    pub true_succ: String,
    pub false_succ: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub var: String,
    pub addr: Expr,
    pub bound: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<i64>>,
}
