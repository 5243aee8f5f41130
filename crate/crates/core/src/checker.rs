//! Liveness and initialized-variable analyses over cell CFGs, plus runtime resolution of
//! live symbols.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::lang::cfg::{build_cfg, Cfg};
use crate::lang::ast::Stmt;
use crate::lang::QualifiedName;

pub type NameSet = BTreeSet<QualifiedName>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LivenessResult {
    /// LIVE(c): names live at the cell's entry.
    pub live_at_top: NameSet,
    pub live_in: Vec<NameSet>,
    pub live_out: Vec<NameSet>,
    /// Worklist pops until the fixed point.
    pub iterations: usize,
}

/// Backward may-analysis: LIVE_in = USE ∪ (LIVE_out − DEF), LIVE_out = ∪ LIVE_in(succ).
pub fn liveness(cfg: &Cfg) -> LivenessResult {
    let n = cfg.len();
    let mut live_in = vec![NameSet::new(); n];
    let mut live_out = vec![NameSet::new(); n];
    let mut queued = vec![true; n];
    let mut work: VecDeque<usize> = cfg.post_order().into_iter().collect();
    let mut iterations = 0;
    while let Some(b) = work.pop_front() {
        queued[b] = false;
        iterations += 1;
        let node = &cfg.nodes[b];
        let mut out = NameSet::new();
        for &s in &node.succs {
            out.extend(live_in[s].iter().cloned());
        }
        let mut inn: NameSet = out.difference(&node.defs).cloned().collect();
        inn.extend(node.uses.iter().cloned());
        live_out[b] = out;
        if inn != live_in[b] {
            live_in[b] = inn;
            for &p in &node.preds {
                if !queued[p] {
                    queued[p] = true;
                    work.push_back(p);
                }
            }
        }
    }
    LivenessResult {
        live_at_top: live_in[cfg.entry].clone(),
        live_in,
        live_out,
        iterations,
    }
}

/// A set that is either finite or the complement of a finite set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymSet {
    Finite(NameSet),
    /// Everything except the listed names.
    AllExcept(NameSet),
}

impl SymSet {
    pub fn universe() -> SymSet {
        SymSet::AllExcept(NameSet::new())
    }

    pub fn intersect(&self, other: &SymSet) -> SymSet {
        use SymSet::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Finite(a.intersection(b).cloned().collect()),
            (Finite(a), AllExcept(b)) | (AllExcept(b), Finite(a)) => Finite(a.difference(b).cloned().collect()),
            (AllExcept(a), AllExcept(b)) => AllExcept(a.union(b).cloned().collect()),
        }
    }

    pub fn union_finite(&self, add: &NameSet) -> SymSet {
        match self {
            SymSet::Finite(a) => SymSet::Finite(a.union(add).cloned().collect()),
            SymSet::AllExcept(a) => SymSet::AllExcept(a.difference(add).cloned().collect()),
        }
    }

    pub fn contains(&self, q: &QualifiedName) -> bool {
        match self {
            SymSet::Finite(a) => a.contains(q),
            SymSet::AllExcept(a) => !a.contains(q),
        }
    }

    pub fn finite(&self) -> Option<&NameSet> {
        match self {
            SymSet::Finite(a) => Some(a),
            SymSet::AllExcept(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeadResult {
    /// DEAD(c): names overwritten on every path through the cell.
    pub dead_at_bottom: NameSet,
    pub dead_in: Vec<SymSet>,
    pub dead_out: Vec<SymSet>,
    pub iterations: usize,
}

/// Forward must-analysis: DEAD_out = (DEF − USE) ∪ DEAD_in, DEAD_in = ∩ DEAD_out(pred).
/// Every node starts at the universal set; the entry's input is empty.
pub fn dead(cfg: &Cfg) -> DeadResult {
    let n = cfg.len();
    let mut dead_in = vec![SymSet::universe(); n];
    let mut dead_out = vec![SymSet::universe(); n];
    let mut queued = vec![true; n];
    let mut work: VecDeque<usize> = cfg.reverse_post_order().into_iter().collect();
    let gen: Vec<NameSet> = cfg
        .nodes
        .iter()
        .map(|nd| nd.defs.difference(&nd.uses).cloned().collect())
        .collect();
    let mut iterations = 0;
    while let Some(b) = work.pop_front() {
        queued[b] = false;
        iterations += 1;
        let node = &cfg.nodes[b];
        let inn = if b == cfg.entry {
            SymSet::Finite(NameSet::new())
        } else {
            let mut acc = SymSet::universe();
            for &p in &node.preds {
                acc = acc.intersect(&dead_out[p]);
            }
            acc
        };
        let out = inn.union_finite(&gen[b]);
        dead_in[b] = inn;
        if out != dead_out[b] {
            dead_out[b] = out;
            for &s in &node.succs {
                if !queued[s] {
                    queued[s] = true;
                    work.push_back(s);
                }
            }
        }
    }
    let dead_at_bottom = dead_out[cfg.exit]
        .finite()
        .cloned()
        .expect("exit is reachable from the entry, so its set is finite");
    DeadResult {
        dead_at_bottom,
        dead_in,
        dead_out,
        iterations,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolInfo {
    pub ts: u64,
    pub stale: bool,
}

/// Runtime facts the checker may consult.
pub trait RuntimeContext {
    /// Global names read by the notebook function currently reachable as `callee`, or `None`
    /// when it is not a notebook function.
    fn callee_globals(&self, callee: &QualifiedName) -> Option<NameSet>;
    fn symbol(&self, name: &QualifiedName) -> Option<SymbolInfo>;
}

/// `cfg` with each node's USE set extended by the free globals of its runtime callees.
/// Borrows when no callee resolves to a notebook function.
pub fn resolve_cfg<'c>(cfg: &'c Cfg, ctx: &dyn RuntimeContext) -> Cow<'c, Cfg> {
    let mut out = Cow::Borrowed(cfg);
    for i in 0..cfg.nodes.len() {
        for c in &cfg.nodes[i].callees {
            if let Some(globals) = ctx.callee_globals(c) {
                out.to_mut().nodes[i].uses.extend(globals);
            }
        }
    }
    out
}

/// Maps live names to their shadow symbols, dropping names without one.
pub fn resolve_live_symbols(raw_live: &NameSet, ctx: &dyn RuntimeContext) -> BTreeMap<QualifiedName, SymbolInfo> {
    raw_live
        .iter()
        .filter_map(|q| ctx.symbol(q).map(|s| (q.clone(), s)))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Classification {
    pub stale_syms: NameSet,
    pub fresh_syms: NameSet,
}

impl Classification {
    pub fn is_stale(&self) -> bool {
        !self.stale_syms.is_empty()
    }

    pub fn is_fresh(&self) -> bool {
        self.stale_syms.is_empty() && !self.fresh_syms.is_empty()
    }
}

/// Splits resolved live symbols into stale ones and fresh ones (non-stale, newer than the cell).
pub fn classify_live(live: &BTreeMap<QualifiedName, SymbolInfo>, cell_ts: u64) -> Classification {
    let mut c = Classification::default();
    for (q, info) in live {
        if info.stale {
            c.stale_syms.insert(q.clone());
        } else if info.ts > cell_ts {
            c.fresh_syms.insert(q.clone());
        }
    }
    c
}

/// Live analysis of a resolved CFG, returning the resolved live symbols.
pub fn live_symbols(resolved: &Cfg, ctx: &dyn RuntimeContext) -> BTreeMap<QualifiedName, SymbolInfo> {
    resolve_live_symbols(&liveness(resolved).live_at_top, ctx)
}

/// Full pipeline for one cell: CFG, callee resolution, liveness, classification.
pub fn classify_cell(stmts: &[Stmt], cell_ts: u64, ctx: &dyn RuntimeContext) -> Classification {
    let cfg = build_cfg(stmts);
    classify_live(&live_symbols(&resolve_cfg(&cfg, ctx), ctx), cell_ts)
}
