#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cellguard::lang::{use_def, Stmt, StmtKind};
use cellguard::lineage::LineageGraph;
use cellguard::QualifiedName;

pub const AGG_C1: &str = "def custom_agg(col):
    return len(col) * 2
def aggregate(df, fns):
    out = {}
    for k in list(fns):
        out[k] = fns[k](df[k])
    return out
df_x = {\"A\": [1, 2], \"B\": [3, 4, 5]}
df_y = {\"A\": [6], \"B\": [7, 8]}
";
pub const AGG_C2: &str = "agg_by_col = {\"A\": lambda col: len(col), \"B\": custom_agg}\n";
pub const AGG_C3: &str = "df_agg_x = aggregate(df_x, agg_by_col)\ndf_agg_y = aggregate(df_y, agg_by_col)\n";

pub fn agg_c1_edited() -> String {
    AGG_C1.replace("* 2", "* 3")
}

pub fn q(s: &str) -> QualifiedName {
    s.parse().expect("valid qualified name")
}

pub fn names(items: &[&str]) -> BTreeSet<QualifiedName> {
    items.iter().map(|s| q(s)).collect()
}

pub fn cells(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Stale symbols by brute force: iterate "some parent is newer or stale" from the empty set
/// until nothing changes.
pub fn stale_fixed_point(g: &LineageGraph) -> BTreeSet<QualifiedName> {
    let ts: BTreeMap<u64, u64> = g.symbols().map(|s| (s.id, s.ts)).collect();
    let mut stale: BTreeSet<u64> = BTreeSet::new();
    loop {
        let mut changed = false;
        for s in g.symbols() {
            if stale.contains(&s.id) {
                continue;
            }
            if s.parents.iter().any(|p| ts[p] > s.ts || stale.contains(p)) {
                stale.insert(s.id);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    g.symbols().filter(|s| stale.contains(&s.id)).map(|s| s.name.clone()).collect()
}

/// One step along an execution path: what the statement (or condition) reads and writes.
#[derive(Clone, Debug)]
pub struct Step {
    pub uses: BTreeSet<QualifiedName>,
    pub defs: BTreeSet<QualifiedName>,
}

/// Every entry-to-exit path through loop-free top-level code, as step sequences.
pub fn enumerate_paths(stmts: &[Stmt]) -> Vec<Vec<Step>> {
    let mut done = Vec::new();
    let open = walk(stmts, vec![Vec::new()], &mut done);
    done.extend(open);
    done
}

fn walk(stmts: &[Stmt], mut open: Vec<Vec<Step>>, done: &mut Vec<Vec<Step>>) -> Vec<Vec<Step>> {
    for s in stmts {
        if open.is_empty() {
            break;
        }
        open = match &s.kind {
            StmtKind::If { branches, orelse } => {
                let mut next = Vec::new();
                let mut pending = open;
                for (cond, body) in branches {
                    let ud = cellguard::lang::usedef::expr_use(cond, &Default::default());
                    for p in &mut pending {
                        p.push(Step { uses: ud.uses.clone(), defs: BTreeSet::new() });
                    }
                    next.extend(walk(body, pending.clone(), done));
                }
                next.extend(walk(orelse, pending, done));
                next
            }
            StmtKind::While { .. } | StmtKind::For { .. } => panic!("loop in loop-free code"),
            StmtKind::Return(_) => {
                let ud = use_def(s);
                for mut p in open {
                    p.push(Step { uses: ud.uses.clone(), defs: ud.defs.clone() });
                    done.push(p);
                }
                Vec::new()
            }
            _ => {
                let ud = use_def(s);
                for p in &mut open {
                    p.push(Step { uses: ud.uses.clone(), defs: ud.defs.clone() });
                }
                open
            }
        };
    }
    open
}

/// Union over paths of names read before any write on that path.
pub fn live_oracle(paths: &[Vec<Step>]) -> BTreeSet<QualifiedName> {
    let mut live = BTreeSet::new();
    for p in paths {
        let mut written = BTreeSet::new();
        for step in p {
            live.extend(step.uses.difference(&written).cloned());
            written.extend(step.defs.iter().cloned());
        }
    }
    live
}

/// Intersection over paths of names overwritten along the path. A statement that reads the
/// name it writes (`x += 1`) does not count as overwriting it.
pub fn dead_oracle(paths: &[Vec<Step>]) -> BTreeSet<QualifiedName> {
    let mut out: Option<BTreeSet<QualifiedName>> = None;
    for p in paths {
        let written: BTreeSet<QualifiedName> =
            p.iter().flat_map(|s| s.defs.difference(&s.uses).cloned().collect::<Vec<_>>()).collect();
        out = Some(match out {
            None => written,
            Some(acc) => acc.intersection(&written).cloned().collect(),
        });
    }
    out.unwrap_or_default()
}

/// Number of entry-to-exit paths in a CFG, by depth-first enumeration. Only for acyclic graphs.
pub fn cfg_path_count(cfg: &cellguard::lang::Cfg) -> usize {
    fn go(cfg: &cellguard::lang::Cfg, n: usize, memo: &mut BTreeMap<usize, usize>) -> usize {
        if n == cfg.exit {
            return 1;
        }
        if let Some(&c) = memo.get(&n) {
            return c;
        }
        let c = cfg.nodes[n].succs.iter().map(|&s| go(cfg, s, memo)).sum();
        memo.insert(n, c);
        c
    }
    go(cfg, cfg.entry, &mut BTreeMap::new())
}
