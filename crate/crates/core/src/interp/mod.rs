//! Tracing interpreter for CellScript notebooks.
//!
//! Each statement runs under one of several trace modes. The first execution of a statement
//! ever records its runtime-refined reads; later executions in another cell run reuse the
//! recorded reads; repeats within the same cell run (loop iterations, repeated calls) emit no
//! lineage events. Builtins suspend tracing until they return.

mod builtins;
mod exec;
pub mod scope;
pub mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use indexmap::IndexMap;
use serde::Serialize;

use crate::checker::{RuntimeContext, SymbolInfo};
use crate::lang::ast::Stmt;
use crate::lang::{build_cfg, parse_cell, Accessor, Cfg, QualifiedName, SyntaxError};
use crate::lineage::LineageGraph;

pub use value::{Builtin, FuncObj, Value};

/// Statement identity for bounded instrumentation: (defining cell key, pre-order id).
pub(crate) type StmtKey = (u64, u32);

#[derive(Clone, Debug)]
pub struct CellEntry {
    pub source: String,
    pub parsed: Result<Rc<Vec<Stmt>>, SyntaxError>,
    /// Hash of cell id and source. Editing a cell changes it.
    pub key: u64,
    cfg: Rc<Cfg>,
}

impl CellEntry {
    fn new(id: &str, source: &str) -> CellEntry {
        let mut h = std::hash::DefaultHasher::new();
        id.hash(&mut h);
        source.hash(&mut h);
        let parsed = parse_cell(source).map(Rc::new);
        let cfg = Rc::new(build_cfg(parsed.as_deref().map(|s| s.as_slice()).unwrap_or(&[])));
        CellEntry {
            source: source.to_string(),
            parsed,
            key: h.finish(),
            cfg,
        }
    }

    /// Control-flow graph of the statements, built once per edit.
    pub fn cfg(&self) -> &Cfg {
        &self.cfg
    }

    /// Parsed statements, or none if the cell does not parse.
    pub fn statements(&self) -> &[Stmt] {
        match &self.parsed {
            Ok(s) => s,
            Err(_) => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Statement executions allowed per cell run.
    pub max_steps: u64,
    pub max_call_depth: u32,
    pub max_collection_len: usize,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits {
            max_steps: 2_000_000,
            max_call_depth: 48,
            max_collection_len: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecStatus {
    Ok,
    Error {
        message: String,
        /// 1-based index of the failing top-level statement; 0 for syntax errors.
        statement_index: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LineageEvent {
    Assign { name: String, ts: u64, parents: Vec<String> },
    Mutate { names: Vec<String>, ts: u64 },
    Delete { name: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecResult {
    pub counter: u64,
    #[serde(flatten)]
    pub status: ExecStatus,
    pub stdout: String,
    pub lineage_events: Vec<LineageEvent>,
}

impl ExecResult {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum NotebookError {
    #[error("unknown cell '{0}'")]
    UnknownCell(String),
    #[error("cell '{0}' already exists")]
    DuplicateCell(String),
}

#[derive(Clone, Debug)]
pub struct NotebookState {
    cells: IndexMap<String, CellEntry>,
    exec_counter: u64,
    pub(crate) globals: BTreeMap<String, Value>,
    pub(crate) lineage: LineageGraph,
    cell_timestamps: BTreeMap<String, u64>,
    pub(crate) statement_seen: HashSet<StmtKey>,
    pub(crate) recorded: HashMap<StmtKey, BTreeSet<QualifiedName>>,
    tracing: bool,
    pub(crate) next_object: u64,
    pub limits: Limits,
}

impl Default for NotebookState {
    fn default() -> Self {
        NotebookState::new()
    }
}

impl NotebookState {
    pub fn new() -> NotebookState {
        NotebookState::with_tracing(true)
    }

    /// With `tracing` off the notebook only executes: no lineage is kept.
    pub fn with_tracing(tracing: bool) -> NotebookState {
        NotebookState {
            cells: IndexMap::new(),
            exec_counter: 0,
            globals: BTreeMap::new(),
            lineage: LineageGraph::new(),
            cell_timestamps: BTreeMap::new(),
            statement_seen: HashSet::new(),
            recorded: HashMap::new(),
            tracing,
            next_object: 1,
            limits: Limits::default(),
        }
    }

    pub fn from_cells<'a>(cells: impl IntoIterator<Item = (&'a str, &'a str)>) -> NotebookState {
        let mut nb = NotebookState::new();
        for (id, src) in cells {
            nb.upsert_cell(id, src, None);
        }
        nb
    }

    pub fn tracing(&self) -> bool {
        self.tracing
    }

    pub fn exec_counter(&self) -> u64 {
        self.exec_counter
    }

    pub fn lineage(&self) -> &LineageGraph {
        &self.lineage
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(|k| k.as_str())
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &CellEntry)> {
        self.cells.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn cell(&self, id: &str) -> Option<&CellEntry> {
        self.cells.get(id)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.cells.get_index_of(id)
    }

    /// Timestamp of a cell's latest execution; 0 if never executed.
    pub fn cell_timestamp(&self, id: &str) -> u64 {
        self.cell_timestamps.get(id).copied().unwrap_or(0)
    }

    pub fn cell_timestamps(&self) -> &BTreeMap<String, u64> {
        &self.cell_timestamps
    }

    pub fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    pub fn global_names(&self) -> impl Iterator<Item = &str> {
        self.globals.keys().map(|k| k.as_str())
    }

    /// Creates or replaces a cell. New cells go at `position` (clamped) or the end; an
    /// existing cell keeps its place unless a position is given.
    pub fn upsert_cell(&mut self, id: &str, source: &str, position: Option<usize>) {
        let entry = CellEntry::new(id, source);
        match self.cells.get_index_of(id) {
            Some(i) => {
                self.cells[i] = entry;
                if let Some(p) = position {
                    let p = p.min(self.cells.len() - 1);
                    self.cells.move_index(i, p);
                }
            }
            None => {
                self.cells.insert(id.to_string(), entry);
                if let Some(p) = position {
                    let p = p.min(self.cells.len() - 1);
                    self.cells.move_index(self.cells.len() - 1, p);
                }
            }
        }
    }

    pub fn delete_cell(&mut self, id: &str) -> Result<(), NotebookError> {
        self.cells
            .shift_remove(id)
            .ok_or_else(|| NotebookError::UnknownCell(id.to_string()))?;
        self.cell_timestamps.remove(id);
        Ok(())
    }

    /// Runs a cell. The execution counter advances even when the cell fails to parse.
    pub fn execute_cell(&mut self, id: &str) -> Result<ExecResult, NotebookError> {
        let entry = self
            .cells
            .get(id)
            .cloned()
            .ok_or_else(|| NotebookError::UnknownCell(id.to_string()))?;
        self.exec_counter += 1;
        let counter = self.exec_counter;
        let stmts = match &entry.parsed {
            Ok(s) => s.clone(),
            Err(e) => {
                return Ok(ExecResult {
                    counter,
                    status: ExecStatus::Error {
                        message: format!("SyntaxError: {e}"),
                        statement_index: 0,
                    },
                    stdout: String::new(),
                    lineage_events: Vec::new(),
                });
            }
        };
        let (status, stdout, lineage_events) = exec::run_cell(self, &stmts, entry.key, counter);
        self.cell_timestamps.insert(id.to_string(), counter);
        Ok(ExecResult {
            counter,
            status,
            stdout,
            lineage_events,
        })
    }

    /// Convenience: upsert then execute.
    pub fn run_source(&mut self, id: &str, source: &str) -> ExecResult {
        self.upsert_cell(id, source, None);
        self.execute_cell(id).expect("cell was just inserted")
    }

    /// `{"name": value}` for every global, in name order.
    pub fn globals_dump(&self) -> serde_json::Value {
        serde_json::Value::Object(self.globals.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
    }

    /// Runtime value currently reachable under a qualified name.
    pub fn value_at(&self, name: &QualifiedName) -> Option<Value> {
        let mut v = self.globals.get(&name.base)?.clone();
        for acc in &name.path {
            v = match (&v, acc) {
                (Value::Dict(d), Accessor::Key(k)) => d.entries.borrow().get(k)?.clone(),
                (Value::List(l), Accessor::Index(i)) => {
                    let items = l.items.borrow();
                    let idx = if *i < 0 { items.len() as i64 + i } else { *i };
                    items.get(usize::try_from(idx).ok()?)?.clone()
                }
                _ => return None,
            };
        }
        Some(v)
    }
}

impl RuntimeContext for NotebookState {
    /// Free globals of the runtime callee and, transitively, of the functions it calls.
    fn callee_globals(&self, callee: &QualifiedName) -> Option<BTreeSet<QualifiedName>> {
        let Some(Value::Func(f)) = self.value_at(callee) else {
            return None;
        };
        let mut out = BTreeSet::new();
        let mut seen = HashSet::new();
        let mut stack = vec![f];
        while let Some(f) = stack.pop() {
            if !seen.insert(f.id) {
                continue;
            }
            out.extend(f.free_globals.uses.iter().cloned());
            for c in &f.free_globals.callees {
                if let Some(Value::Func(g)) = self.value_at(c) {
                    stack.push(g);
                }
            }
        }
        Some(out)
    }

    fn symbol(&self, name: &QualifiedName) -> Option<SymbolInfo> {
        self.lineage.lookup(name).map(|s| SymbolInfo { ts: s.ts, stale: s.stale })
    }
}
