//! Statement-granularity control-flow graphs.

use std::collections::BTreeSet;

use super::ast::{Stmt, StmtKind};
use super::usedef::{expr_use, function_free_globals, function_locals, use_def_scoped, Locals, UseDef};
use super::QualifiedName;

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub enum NodeKind {
    Entry,
    Exit,
    Simple,
    /// `if`/`elif` condition.
    Cond,
    /// `while` condition or `for` iterator; owns the back edge.
    LoopHead,
    Join,
    /// Function definition. The body is not inlined.
    Def {
        name: String,
        body: Box<Cfg>,
        free_globals: UseDef,
    },
}

#[derive(Clone, Debug)]
pub struct CfgNode {
    pub kind: NodeKind,
    /// Pre-order id of the statement this node was built from.
    pub stmt_id: Option<u32>,
    pub uses: BTreeSet<QualifiedName>,
    pub defs: BTreeSet<QualifiedName>,
    pub callees: BTreeSet<QualifiedName>,
    pub succs: Vec<NodeId>,
    pub preds: Vec<NodeId>,
}

impl CfgNode {
    fn new(kind: NodeKind, stmt_id: Option<u32>, ud: UseDef) -> CfgNode {
        CfgNode {
            kind,
            stmt_id,
            uses: ud.uses,
            defs: ud.defs,
            callees: ud.callees,
            succs: Vec::new(),
            preds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub nodes: Vec<CfgNode>,
    pub entry: NodeId,
    pub exit: NodeId,
}

impl Cfg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 2
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.succs.len()).sum()
    }

    /// Post-order from the entry (successors before the node).
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<(NodeId, usize)> = vec![(self.entry, 0)];
        seen[self.entry] = true;
        while let Some((n, i)) = stack.pop() {
            if i < self.nodes[n].succs.len() {
                stack.push((n, i + 1));
                let s = self.nodes[n].succs[i];
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                order.push(n);
            }
        }
        order
    }

    pub fn reverse_post_order(&self) -> Vec<NodeId> {
        let mut o = self.post_order();
        o.reverse();
        o
    }

    /// Edges `(from, to)` where `to` dominates-by-order `from`, i.e. loop back edges.
    pub fn back_edges(&self) -> Vec<(NodeId, NodeId)> {
        let rpo = self.reverse_post_order();
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, n) in rpo.iter().enumerate() {
            pos[*n] = i;
        }
        let mut out = Vec::new();
        for (n, node) in self.nodes.iter().enumerate() {
            for &s in &node.succs {
                if pos[s] <= pos[n] {
                    out.push((n, s));
                }
            }
        }
        out
    }

    fn add(&mut self, node: CfgNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn edge(&mut self, from: NodeId, to: NodeId) {
        if !self.nodes[from].succs.contains(&to) {
            self.nodes[from].succs.push(to);
            self.nodes[to].preds.push(from);
        }
    }
}

/// Builds the CFG of a cell at notebook scope.
pub fn build_cfg(stmts: &[Stmt]) -> Cfg {
    build_cfg_concat(&[stmts])
}

/// CFG of several statement lists run back to back, with a join node between consecutive
/// segments.
pub fn build_cfg_concat(segments: &[&[Stmt]]) -> Cfg {
    build_scoped(segments, &Locals::new())
}

fn build_scoped(segments: &[&[Stmt]], locals: &Locals) -> Cfg {
    let mut b = Builder {
        cfg: Cfg {
            nodes: Vec::new(),
            entry: 0,
            exit: 1,
        },
    };
    b.cfg.add(CfgNode::new(NodeKind::Entry, None, UseDef::default()));
    b.cfg.add(CfgNode::new(NodeKind::Exit, None, UseDef::default()));
    let mut frontier = vec![b.cfg.entry];
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 && !frontier.is_empty() {
            let j = b.node(NodeKind::Join, None, UseDef::default(), &frontier);
            frontier = vec![j];
        }
        frontier = b.block(seg, frontier, locals);
    }
    let exit = b.cfg.exit;
    for f in frontier {
        b.cfg.edge(f, exit);
    }
    b.cfg
}

struct Builder {
    cfg: Cfg,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, stmt_id: Option<u32>, ud: UseDef, from: &[NodeId]) -> NodeId {
        let id = self.cfg.add(CfgNode::new(kind, stmt_id, ud));
        for &f in from {
            self.cfg.edge(f, id);
        }
        id
    }

    fn block(&mut self, stmts: &[Stmt], mut frontier: Vec<NodeId>, locals: &Locals) -> Vec<NodeId> {
        for s in stmts {
            if frontier.is_empty() {
                break;
            }
            frontier = self.stmt(s, frontier, locals);
        }
        frontier
    }

    fn stmt(&mut self, s: &Stmt, frontier: Vec<NodeId>, locals: &Locals) -> Vec<NodeId> {
        let id = Some(s.id);
        match &s.kind {
            StmtKind::If { branches, orelse } => {
                let mut out = Vec::new();
                let mut pending = frontier;
                for (cond, body) in branches {
                    let c = self.node(NodeKind::Cond, id, expr_use(cond, locals), &pending);
                    out.extend(self.block(body, vec![c], locals));
                    pending = vec![c];
                }
                if orelse.is_empty() {
                    out.extend(pending);
                } else {
                    out.extend(self.block(orelse, pending, locals));
                }
                if out.is_empty() {
                    return out;
                }
                vec![self.node(NodeKind::Join, id, UseDef::default(), &out)]
            }
            StmtKind::While { body, .. } => {
                let head = self.node(NodeKind::LoopHead, id, use_def_scoped(s, locals), &frontier);
                let tail = self.block(body, vec![head], locals);
                for t in tail {
                    self.cfg.edge(t, head);
                }
                vec![head]
            }
            StmtKind::For { var, body, .. } => {
                let head = self.node(NodeKind::LoopHead, id, use_def_scoped(s, locals), &frontier);
                let mut inner = locals.clone();
                inner.insert(var.clone());
                let tail = self.block(body, vec![head], &inner);
                for t in tail {
                    self.cfg.edge(t, head);
                }
                vec![head]
            }
            StmtKind::FuncDef { name, params, body } => {
                let fn_locals = function_locals(params, body);
                let mut body_scope = locals.clone();
                body_scope.extend(fn_locals);
                let body_cfg = build_scoped(&[body.as_slice()], &body_scope);
                let free = function_free_globals(params, body, locals);
                let kind = NodeKind::Def {
                    name: name.clone(),
                    body: Box::new(body_cfg),
                    free_globals: free,
                };
                vec![self.node(kind, id, use_def_scoped(s, locals), &frontier)]
            }
            StmtKind::Return(_) => {
                let n = self.node(NodeKind::Simple, id, use_def_scoped(s, locals), &frontier);
                let exit = self.cfg.exit;
                self.cfg.edge(n, exit);
                Vec::new()
            }
            _ => vec![self.node(NodeKind::Simple, id, use_def_scoped(s, locals), &frontier)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_cell;

    fn cfg(src: &str) -> Cfg {
        build_cfg(&parse_cell(src).unwrap())
    }

    #[test]
    fn straight_line_is_a_chain() {
        let g = cfg("x = 1\ny = x\n");
        assert_eq!(g.len(), 4);
        assert_eq!(g.nodes[g.entry].succs, vec![2]);
        assert_eq!(g.nodes[2].succs, vec![3]);
        assert_eq!(g.nodes[3].succs, vec![g.exit]);
    }

    #[test]
    fn if_else_is_a_diamond() {
        let g = cfg("if c:\n    x = 1\nelse:\n    x = 2\n");
        let join = g.nodes[g.exit].preds[0];
        assert!(matches!(g.nodes[join].kind, NodeKind::Join));
        assert_eq!(g.nodes[join].preds.len(), 2);
        assert!(g.back_edges().is_empty());
    }

    #[test]
    fn loops_have_back_and_bypass_edges() {
        let g = cfg("while c:\n    x = x + 1\n");
        let head = g.nodes[g.entry].succs[0];
        assert_eq!(g.back_edges().len(), 1);
        assert!(g.nodes[head].succs.contains(&g.exit));
    }

    #[test]
    fn function_bodies_are_separate() {
        let g = cfg("def f(a):\n    if a:\n        return x\n    return 0\n");
        let NodeKind::Def { body, free_globals, .. } = &g.nodes[2].kind else {
            panic!()
        };
        assert!(g.nodes[2].uses.is_empty());
        assert_eq!(free_globals.uses.len(), 1);
        assert_eq!(body.nodes[body.exit].preds.len(), 2);
        assert_eq!(body.nodes[body.entry].preds.len(), 0);
    }

    #[test]
    fn statements_after_return_are_unreachable_and_skipped() {
        let g = cfg("def f():\n    return 1\n    y = 2\n");
        let NodeKind::Def { body, .. } = &g.nodes[2].kind else {
            panic!()
        };
        assert_eq!(body.len(), 3);
    }

    #[test]
    fn concat_inserts_join() {
        let a = parse_cell("x = 1").unwrap();
        let b = parse_cell("y = x").unwrap();
        let g = build_cfg_concat(&[&a, &b]);
        assert!(matches!(g.nodes[3].kind, NodeKind::Join));
        assert_eq!(g.len(), 5);
    }
}
