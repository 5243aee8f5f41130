//! CellScript: a small deterministic imperative language for notebook cells.

pub mod ast;
pub mod cfg;
mod lexer;
pub mod notebook;
mod parser;
pub mod printer;
pub mod usedef;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use ast::{Expr, Literal, Stmt, StmtKind};
pub use cfg::{build_cfg, build_cfg_concat, Cfg, CfgNode, NodeId, NodeKind};
pub use notebook::{CellSource, NotebookFile};
pub use parser::{parse_cell, parse_expr};
pub use printer::pretty_print;
pub use usedef::{use_def, UseDef};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at line {line}, column {col}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl SyntaxError {
    pub fn new(line: u32, col: u32, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line,
            col,
            message: message.into(),
        }
    }
}

/// One step of a qualified name. Attribute access and string subscripts share `Key`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Accessor {
    Key(String),
    Index(i64),
}

/// A possibly qualified name such as `x`, `df.col` or `lst[3]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName {
    pub base: String,
    pub path: Vec<Accessor>,
}

impl QualifiedName {
    pub fn simple(base: impl Into<String>) -> QualifiedName {
        QualifiedName {
            base: base.into(),
            path: Vec::new(),
        }
    }

    pub fn is_simple(&self) -> bool {
        self.path.is_empty()
    }

    pub fn child(&self, acc: Accessor) -> QualifiedName {
        let mut path = self.path.clone();
        path.push(acc);
        QualifiedName {
            base: self.base.clone(),
            path,
        }
    }

    pub fn key(&self, k: impl Into<String>) -> QualifiedName {
        self.child(Accessor::Key(k.into()))
    }

    pub fn index(&self, i: i64) -> QualifiedName {
        self.child(Accessor::Index(i))
    }

    pub fn parent(&self) -> Option<QualifiedName> {
        if self.path.is_empty() {
            return None;
        }
        Some(QualifiedName {
            base: self.base.clone(),
            path: self.path[..self.path.len() - 1].to_vec(),
        })
    }

    pub fn base_name(&self) -> QualifiedName {
        QualifiedName::simple(self.base.clone())
    }

    /// All proper prefixes, shortest first: `a.b.c` gives `a`, `a.b`.
    pub fn prefixes(&self) -> Vec<QualifiedName> {
        (0..self.path.len())
            .map(|n| QualifiedName {
                base: self.base.clone(),
                path: self.path[..n].to_vec(),
            })
            .collect()
    }

    pub fn starts_with(&self, other: &QualifiedName) -> bool {
        self.base == other.base && self.path.len() >= other.path.len() && self.path[..other.path.len()] == other.path[..]
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        for acc in &self.path {
            match acc {
                Accessor::Key(k) if ast::is_identifier(k) => write!(f, ".{k}")?,
                Accessor::Key(k) => write!(f, "[{}]", ast::quote_str(k))?,
                Accessor::Index(i) => write!(f, "[{i}]")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid qualified name: {0}")]
pub struct BadName(pub String);

impl FromStr for QualifiedName {
    type Err = BadName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadName(s.to_string());
        let expr = parse_expr(s).map_err(|_| bad())?;
        fn walk(e: &Expr) -> Option<QualifiedName> {
            match e {
                Expr::Name(n) => Some(QualifiedName::simple(n.clone())),
                Expr::Attr { value, attr } => Some(walk(value)?.key(attr.clone())),
                Expr::Subscript { value, index } => {
                    let base = walk(value)?;
                    match index.as_ref() {
                        Expr::Literal(Literal::Str(k)) => Some(base.key(k.clone())),
                        Expr::Literal(Literal::Int(i)) => Some(base.index(*i)),
                        Expr::Unary {
                            op: ast::UnaryOp::Neg,
                            operand,
                        } => match operand.as_ref() {
                            Expr::Literal(Literal::Int(i)) => Some(base.index(-*i)),
                            _ => None,
                        },
                        _ => None,
                    }
                }
                _ => None,
            }
        }
        walk(&expr).ok_or_else(bad)
    }
}

impl Serialize for QualifiedName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
