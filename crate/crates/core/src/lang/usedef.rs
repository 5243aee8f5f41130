//! Static USE/DEF extraction.
//!
//! Reads of a qualified name contribute the name and all of its prefixes. A subscript with a
//! non-constant index stops the qualified path at the container; the index expression's own
//! uses are added separately.

use std::collections::BTreeSet;

use super::ast::{is_builtin, Expr, Literal, Stmt, StmtKind, UnaryOp};
use super::QualifiedName;

pub type Locals = BTreeSet<String>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UseDef {
    pub uses: BTreeSet<QualifiedName>,
    pub defs: BTreeSet<QualifiedName>,
    /// Statically named call targets, resolved against runtime values by the checker.
    pub callees: BTreeSet<QualifiedName>,
}

impl UseDef {
    fn extend(&mut self, other: UseDef) {
        self.uses.extend(other.uses);
        self.defs.extend(other.defs);
        self.callees.extend(other.callees);
    }
}

/// USE/DEF of a statement at notebook (global) scope.
pub fn use_def(stmt: &Stmt) -> UseDef {
    use_def_scoped(stmt, &Locals::new())
}

/// USE/DEF of a statement whose enclosing scope binds `locals`. For compound statements only
/// the header (condition, iterable, definition) is described.
pub fn use_def_scoped(stmt: &Stmt, locals: &Locals) -> UseDef {
    let mut ud = UseDef::default();
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            expr_into(value, locals, &mut ud);
            target_into(target, locals, &mut ud, false);
        }
        StmtKind::AugAssign { target, value, .. } => {
            expr_into(value, locals, &mut ud);
            target_into(target, locals, &mut ud, true);
        }
        StmtKind::Expr(e) => expr_into(e, locals, &mut ud),
        StmtKind::If { branches, .. } => {
            if let Some((cond, _)) = branches.first() {
                expr_into(cond, locals, &mut ud);
            }
        }
        StmtKind::While { cond, .. } => expr_into(cond, locals, &mut ud),
        StmtKind::For { iter, .. } => expr_into(iter, locals, &mut ud),
        StmtKind::FuncDef { name, .. } => {
            if !locals.contains(name) {
                ud.defs.insert(QualifiedName::simple(name.clone()));
            }
        }
        StmtKind::Return(Some(e)) => expr_into(e, locals, &mut ud),
        StmtKind::Return(None) | StmtKind::Pass => {}
        StmtKind::Del(target) => target_into(target, locals, &mut ud, false),
    }
    ud
}

/// Uses and callees of a single expression.
pub fn expr_use(e: &Expr, locals: &Locals) -> UseDef {
    let mut ud = UseDef::default();
    expr_into(e, locals, &mut ud);
    ud
}

/// Names local to a function body: parameters, plainly assigned names, loop variables and
/// nested definitions.
pub fn function_locals(params: &[String], body: &[Stmt]) -> Locals {
    let mut locals: Locals = params.iter().cloned().collect();
    collect_bound(body, &mut locals);
    locals
}

fn collect_bound(body: &[Stmt], out: &mut Locals) {
    for s in body {
        match &s.kind {
            StmtKind::Assign {
                target: Expr::Name(n),
                ..
            }
            | StmtKind::AugAssign {
                target: Expr::Name(n),
                ..
            }
            | StmtKind::Del(Expr::Name(n)) => {
                out.insert(n.clone());
            }
            StmtKind::FuncDef { name, .. } => {
                out.insert(name.clone());
            }
            StmtKind::For { var, body, .. } => {
                out.insert(var.clone());
                collect_bound(body, out);
            }
            StmtKind::While { body, .. } => collect_bound(body, out),
            StmtKind::If { branches, orelse } => {
                for (_, b) in branches {
                    collect_bound(b, out);
                }
                collect_bound(orelse, out);
            }
            _ => {}
        }
    }
}

/// Global names a function may read when called, including those of nested definitions.
/// `outer` holds enclosing non-global bindings (closures over them are not global reads).
pub fn function_free_globals(params: &[String], body: &[Stmt], outer: &Locals) -> UseDef {
    let mut locals = function_locals(params, body);
    locals.extend(outer.iter().cloned());
    let mut ud = UseDef::default();
    body_uses(body, &locals, &mut ud);
    ud.defs.clear();
    ud
}

fn body_uses(body: &[Stmt], locals: &Locals, ud: &mut UseDef) {
    for s in body {
        ud.extend(use_def_scoped(s, locals));
        match &s.kind {
            StmtKind::If { branches, orelse } => {
                for (i, (cond, b)) in branches.iter().enumerate() {
                    if i > 0 {
                        expr_into(cond, locals, ud);
                    }
                    body_uses(b, locals, ud);
                }
                body_uses(orelse, locals, ud);
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => body_uses(body, locals, ud),
            StmtKind::FuncDef { params, body, .. } => {
                ud.extend(function_free_globals(params, body, locals));
            }
            _ => {}
        }
    }
}

fn constant_accessor(index: &Expr) -> Option<super::Accessor> {
    match index {
        Expr::Literal(Literal::Str(k)) => Some(super::Accessor::Key(k.clone())),
        Expr::Literal(Literal::Int(i)) => Some(super::Accessor::Index(*i)),
        Expr::Unary {
            op: UnaryOp::Neg,
            operand,
        } => match operand.as_ref() {
            Expr::Literal(Literal::Int(i)) => Some(super::Accessor::Index(i.checked_neg()?)),
            _ => None,
        },
        _ => None,
    }
}

/// Static qualified path of an access chain.
///
/// Returns the longest constant path, whether the whole chain was constant, and records the
/// uses of dynamic index expressions and of non-name bases into `ud`.
fn chain_path(e: &Expr, locals: &Locals, ud: &mut UseDef) -> (Option<QualifiedName>, bool) {
    match e {
        Expr::Name(n) => {
            if is_builtin(n) || locals.contains(n) {
                (None, false)
            } else {
                (Some(QualifiedName::simple(n.clone())), true)
            }
        }
        Expr::Attr { value, attr } => {
            let (base, exact) = chain_path(value, locals, ud);
            match base {
                Some(q) if exact => (Some(q.key(attr.clone())), true),
                other => (other, false),
            }
        }
        Expr::Subscript { value, index } => {
            let (base, exact) = chain_path(value, locals, ud);
            match constant_accessor(index) {
                Some(acc) => match base {
                    Some(q) if exact => (Some(q.child(acc)), true),
                    other => (other, false),
                },
                None => {
                    expr_into(index, locals, ud);
                    (base, false)
                }
            }
        }
        other => {
            expr_into(other, locals, ud);
            (None, false)
        }
    }
}

fn add_with_prefixes(q: QualifiedName, ud: &mut UseDef) {
    for p in q.prefixes() {
        ud.uses.insert(p);
    }
    ud.uses.insert(q);
}

fn expr_into(e: &Expr, locals: &Locals, ud: &mut UseDef) {
    match e {
        Expr::Name(_) | Expr::Attr { .. } | Expr::Subscript { .. } => {
            if let (Some(q), _) = chain_path(e, locals, ud) {
                add_with_prefixes(q, ud);
            }
        }
        Expr::Call { func, args } => {
            match func.as_ref() {
                Expr::Attr { value, attr } if attr == "append" => expr_into(value, locals, ud),
                f => {
                    let (q, exact) = chain_path(f, locals, ud);
                    if let Some(q) = q {
                        if exact {
                            ud.callees.insert(q.clone());
                        }
                        add_with_prefixes(q, ud);
                    }
                }
            }
            for a in args {
                expr_into(a, locals, ud);
            }
        }
        Expr::Lambda { params, body } => {
            let mut inner = locals.clone();
            inner.extend(params.iter().cloned());
            let mut sub = UseDef::default();
            expr_into(body, &inner, &mut sub);
            ud.uses.extend(sub.uses);
        }
        Expr::Literal(_) => {}
        Expr::List(items) => {
            for i in items {
                expr_into(i, locals, ud);
            }
        }
        Expr::Dict(entries) => {
            for (k, v) in entries {
                expr_into(k, locals, ud);
                expr_into(v, locals, ud);
            }
        }
        Expr::Unary { operand, .. } => expr_into(operand, locals, ud),
        Expr::Binary { left, right, .. } | Expr::Compare { left, right, .. } => {
            expr_into(left, locals, ud);
            expr_into(right, locals, ud);
        }
    }
}

fn target_into(target: &Expr, locals: &Locals, ud: &mut UseDef, reads_target: bool) {
    match target {
        Expr::Name(n) => {
            if !locals.contains(n) {
                let q = QualifiedName::simple(n.clone());
                if reads_target {
                    ud.uses.insert(q.clone());
                }
                ud.defs.insert(q);
            }
        }
        Expr::Attr { value, .. } | Expr::Subscript { value, .. } => {
            let (container, _) = chain_path(value, locals, ud);
            if let Some(c) = container {
                add_with_prefixes(c, ud);
            }
            let (full, exact) = chain_path(target, locals, ud);
            if let (Some(q), true) = (full, exact) {
                if reads_target {
                    ud.uses.insert(q.clone());
                }
                ud.defs.insert(q);
            }
        }
        other => expr_into(other, locals, ud),
    }
}
