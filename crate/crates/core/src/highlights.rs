//! Cell highlights: stale, fresh and refresher cells plus their per-step deltas.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::checker::{self, NameSet, RuntimeContext};
use crate::interp::NotebookState;
use crate::lang::cfg::{build_cfg, build_cfg_concat, Cfg};

pub type CellSet = BTreeSet<String>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisCounts {
    pub liveness_runs: usize,
    pub dead_runs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightReport {
    pub counter: u64,
    pub stale: CellSet,
    pub fresh: CellSet,
    pub refresher: CellSet,
    pub new_fresh: CellSet,
    pub new_refresher: CellSet,
    #[serde(skip)]
    pub analysis_counts: AnalysisCounts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefresherAlgo {
    #[default]
    Fast,
    Naive,
}

impl std::str::FromStr for RefresherAlgo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fast" => Ok(RefresherAlgo::Fast),
            "naive" => Ok(RefresherAlgo::Naive),
            other => Err(format!("unknown refresher algorithm '{other}' (expected fast or naive)")),
        }
    }
}

/// Per-cell checker output at one counter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StaleFresh {
    pub stale: CellSet,
    pub fresh: CellSet,
    /// STALE(c) for each stale cell.
    pub stale_syms: BTreeMap<String, NameSet>,
    pub counts: AnalysisCounts,
}

fn resolved_cfg<'s>(state: &'s NotebookState, id: &str) -> Cow<'s, Cfg> {
    match state.cell(id) {
        Some(c) => checker::resolve_cfg(c.cfg(), state),
        None => Cow::Owned(build_cfg(&[])),
    }
}

/// One liveness analysis and classification per cell.
pub fn compute_stale_fresh(state: &NotebookState) -> StaleFresh {
    let mut out = StaleFresh::default();
    for id in state.cell_ids() {
        let cfg = resolved_cfg(state, id);
        out.counts.liveness_runs += 1;
        let live = checker::live_symbols(&cfg, state);
        let class = checker::classify_live(&live, state.cell_timestamp(id));
        if class.is_stale() {
            out.stale.insert(id.to_string());
            out.stale_syms.insert(id.to_string(), class.stale_syms);
        } else if class.is_fresh() {
            out.fresh.insert(id.to_string());
        }
    }
    out
}

/// STALE(c_r ⊕ c_s): stale live symbols of the two cells concatenated.
pub fn stale_of_concat(state: &NotebookState, c_r: &str, c_s: &str) -> NameSet {
    let stmts = |id: &str| state.cell(id).map(|c| c.statements()).unwrap_or(&[]);
    let cfg = build_cfg_concat(&[stmts(c_r), stmts(c_s)]);
    stale_live(&checker::resolve_cfg(&cfg, state), state)
}

/// STALE(c) for a single cell, whether or not it is classified stale.
pub fn stale_of_cell(state: &NotebookState, id: &str) -> NameSet {
    stale_live(&resolved_cfg(state, id), state)
}

fn stale_live(cfg: &Cfg, ctx: &dyn RuntimeContext) -> NameSet {
    checker::live_symbols(cfg, ctx)
        .into_iter()
        .filter(|(_, info)| info.stale)
        .map(|(q, _)| q)
        .collect()
}

/// DEAD(c) over the runtime-resolved CFG.
pub fn dead_of_cell(state: &NotebookState, id: &str) -> NameSet {
    checker::dead(&resolved_cfg(state, id)).dead_at_bottom
}

/// Pairwise concatenation: one liveness analysis per (non-stale, stale) pair.
pub fn compute_refresher_naive(state: &NotebookState, sf: &StaleFresh, counts: &mut AnalysisCounts) -> CellSet {
    let mut out = CellSet::new();
    for c_r in state.cell_ids().filter(|c| !sf.stale.contains(*c)) {
        for (c_s, stale) in &sf.stale_syms {
            counts.liveness_runs += 1;
            let after = stale_of_concat(state, c_r, c_s);
            if stale.difference(&after).next().is_some() {
                out.insert(c_r.to_string());
            }
        }
    }
    out
}

/// One dead analysis per non-stale cell, then a lookup through the inverted index
/// symbol → cells where it is dead.
pub fn compute_refresher_fast(state: &NotebookState, sf: &StaleFresh, counts: &mut AnalysisCounts) -> CellSet {
    if sf.stale.is_empty() {
        return CellSet::new();
    }
    let mut dead_index: BTreeMap<_, CellSet> = BTreeMap::new();
    for c_r in state.cell_ids().filter(|c| !sf.stale.contains(*c)) {
        counts.dead_runs += 1;
        for q in dead_of_cell(state, c_r) {
            dead_index.entry(q).or_default().insert(c_r.to_string());
        }
    }
    let mut out = CellSet::new();
    for stale in sf.stale_syms.values() {
        for q in stale {
            if let Some(cells) = dead_index.get(q) {
                out.extend(cells.iter().cloned());
            }
        }
    }
    out
}

/// ΔH_f and ΔH_r against the previous report; a missing predecessor counts as empty.
pub fn compute_deltas(previous: Option<&HighlightReport>, current: &HighlightReport) -> (CellSet, CellSet) {
    match previous {
        None => (current.fresh.clone(), current.refresher.clone()),
        Some(p) => (
            current.fresh.difference(&p.fresh).cloned().collect(),
            current.refresher.difference(&p.refresher).cloned().collect(),
        ),
    }
}

pub fn compute_report(state: &NotebookState, previous: Option<&HighlightReport>, algo: RefresherAlgo) -> HighlightReport {
    let sf = compute_stale_fresh(state);
    let mut counts = sf.counts;
    let refresher = match algo {
        RefresherAlgo::Fast => compute_refresher_fast(state, &sf, &mut counts),
        RefresherAlgo::Naive => compute_refresher_naive(state, &sf, &mut counts),
    };
    let mut report = HighlightReport {
        counter: state.exec_counter(),
        stale: sf.stale,
        fresh: sf.fresh,
        refresher,
        new_fresh: CellSet::new(),
        new_refresher: CellSet::new(),
        analysis_counts: counts,
    };
    let (new_fresh, new_refresher) = compute_deltas(previous, &report);
    report.new_fresh = new_fresh;
    report.new_refresher = new_refresher;
    report
}
