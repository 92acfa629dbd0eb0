//! Branch-distance expressions.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Integer expression over input bytes and load-bound variables, evaluated
/// in wrapping signed 64-bit arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(i64),
    Input(usize),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn input(j: usize) -> Expr {
        Expr::Input(j)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, input: &[u8], bindings: &Bindings<'_>) -> Result<i64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Input(j) => {
                i64::from(*input.get(*j).ok_or(Error::InputLengthMismatch { expected: j + 1, got: input.len() })?)
            }
            Expr::Var(name) => bindings.get(name).ok_or_else(|| Error::UnboundVariable(name.clone()))?,
            Expr::Add(a, b) => a.eval(input, bindings)?.wrapping_add(b.eval(input, bindings)?),
            Expr::Sub(a, b) => a.eval(input, bindings)?.wrapping_sub(b.eval(input, bindings)?),
            Expr::Mul(a, b) => a.eval(input, bindings)?.wrapping_mul(b.eval(input, bindings)?),
        })
    }

    /// Calls `f` on every node, parents before children.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Input byte indices referenced anywhere in the expression.
    pub fn input_refs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Input(j) = e {
                out.push(*j);
            }
        });
        out
    }

    fn from_value(v: &Value) -> Result<Expr> {
        match v {
            Value::Number(n) => n
                .as_i64()
                .map(Expr::Const)
                .ok_or_else(|| Error::Parse(format!("expression literal {n} is not a 64-bit integer"))),
            Value::Array(items) => {
                let head = items
                    .first()
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Parse(format!("expression {v} has no operator")))?;
                match (head, items.len()) {
                    ("input", 2) => items[1]
                        .as_u64()
                        .map(|j| Expr::Input(j as usize))
                        .ok_or_else(|| Error::Parse(format!("bad input index in {v}"))),
                    ("var", 2) => items[1]
                        .as_str()
                        .map(Expr::var)
                        .ok_or_else(|| Error::Parse(format!("bad variable name in {v}"))),
                    ("add" | "sub" | "mul", 3) => {
                        let a = Expr::from_value(&items[1])?;
                        let b = Expr::from_value(&items[2])?;
                        Ok(match head {
                            "add" => Expr::add(a, b),
                            "sub" => Expr::sub(a, b),
                            _ => Expr::mul(a, b),
                        })
                    }
                    _ => Err(Error::Parse(format!("unknown expression form {v}"))),
                }
            }
            _ => Err(Error::Parse(format!("unknown expression form {v}"))),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Expr::Const(c) => s.serialize_i64(*c),
            Expr::Input(j) => {
                let mut seq = s.serialize_seq(Some(2))?;
                seq.serialize_element("input")?;
                seq.serialize_element(j)?;
                seq.end()
            }
            Expr::Var(name) => {
                let mut seq = s.serialize_seq(Some(2))?;
                seq.serialize_element("var")?;
                seq.serialize_element(name)?;
                seq.end()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let op = match self {
                    Expr::Add(..) => "add",
                    Expr::Sub(..) => "sub",
                    _ => "mul",
                };
                let mut seq = s.serialize_seq(Some(3))?;
                seq.serialize_element(op)?;
                seq.serialize_element(a)?;
                seq.serialize_element(b)?;
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Expr::from_value(&v).map_err(de::Error::custom)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Input(j) => write!(f, "input[{j}]"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

/// Variables bound by the loads of the block being evaluated. Later
/// bindings shadow earlier ones.
#[derive(Debug, Default, Clone)]
pub struct Bindings<'a> {
    slots: Vec<(&'a str, i64)>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Bindings { slots: Vec::new() }
    }

    pub fn bind(&mut self, name: &'a str, value: i64) {
        self.slots.push((name, value));
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.slots.iter().rev().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

/// Evaluates a branch-distance expression against `input`.
pub fn eval_distance(expr: &Expr, input: &[u8], bindings: &Bindings<'_>) -> Result<i64> {
    expr.eval(input, bindings)
}
