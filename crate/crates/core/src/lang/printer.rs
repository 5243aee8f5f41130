use super::ast::{Expr, Stmt, StmtKind};

/// Renders statements back to CellScript. Compound subexpressions are fully parenthesized,
/// so the output re-parses to the same tree.
pub fn pretty_print(stmts: &[Stmt]) -> String {
    let mut out = String::new();
    for s in stmts {
        print_stmt(s, 0, &mut out);
    }
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn block(body: &[Stmt], level: usize, out: &mut String) {
    if body.is_empty() {
        indent(level, out);
        out.push_str("pass\n");
    }
    for s in body {
        print_stmt(s, level, out);
    }
}

fn print_stmt(s: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            expr(target, out);
            out.push_str(" = ");
            expr(value, out);
            out.push('\n');
        }
        StmtKind::AugAssign { target, op, value } => {
            expr(target, out);
            out.push_str(&format!(" {}= ", op.symbol()));
            expr(value, out);
            out.push('\n');
        }
        StmtKind::Expr(e) => {
            expr(e, out);
            out.push('\n');
        }
        StmtKind::If { branches, orelse } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(level, out);
                    out.push_str("elif ");
                } else {
                    out.push_str("if ");
                }
                expr(cond, out);
                out.push_str(":\n");
                block(body, level + 1, out);
            }
            if !orelse.is_empty() {
                indent(level, out);
                out.push_str("else:\n");
                block(orelse, level + 1, out);
            }
        }
        StmtKind::While { cond, body } => {
            out.push_str("while ");
            expr(cond, out);
            out.push_str(":\n");
            block(body, level + 1, out);
        }
        StmtKind::For { var, iter, body } => {
            out.push_str(&format!("for {var} in "));
            expr(iter, out);
            out.push_str(":\n");
            block(body, level + 1, out);
        }
        StmtKind::FuncDef { name, params, body } => {
            out.push_str(&format!("def {name}({}):\n", params.join(", ")));
            block(body, level + 1, out);
        }
        StmtKind::Return(value) => {
            out.push_str("return");
            if let Some(v) = value {
                out.push(' ');
                expr(v, out);
            }
            out.push('\n');
        }
        StmtKind::Del(target) => {
            out.push_str("del ");
            expr(target, out);
            out.push('\n');
        }
        StmtKind::Pass => out.push_str("pass\n"),
    }
}

fn is_atomic(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Name(_)
            | Expr::Attr { .. }
            | Expr::Subscript { .. }
            | Expr::Call { .. }
            | Expr::Literal(_)
            | Expr::List(_)
            | Expr::Dict(_)
    )
}

fn atom(e: &Expr, out: &mut String) {
    if is_atomic(e) {
        expr(e, out);
    } else {
        out.push('(');
        expr(e, out);
        out.push(')');
    }
}

fn list(items: &[Expr], out: &mut String) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        atom(item, out);
    }
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Name(n) => out.push_str(n),
        Expr::Attr { value, attr } => {
            atom(value, out);
            out.push('.');
            out.push_str(attr);
        }
        Expr::Subscript { value, index } => {
            atom(value, out);
            out.push('[');
            expr(index, out);
            out.push(']');
        }
        Expr::Call { func, args } => {
            atom(func, out);
            out.push('(');
            list(args, out);
            out.push(')');
        }
        Expr::Lambda { params, body } => {
            out.push_str("lambda");
            if !params.is_empty() {
                out.push(' ');
                out.push_str(&params.join(", "));
            }
            out.push_str(": ");
            atom(body, out);
        }
        Expr::Literal(l) => out.push_str(&l.to_string()),
        Expr::List(items) => {
            out.push('[');
            list(items, out);
            out.push(']');
        }
        Expr::Dict(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                atom(k, out);
                out.push_str(": ");
                atom(v, out);
            }
            out.push('}');
        }
        Expr::Unary { op, operand } => {
            out.push_str(match op {
                super::ast::UnaryOp::Neg => "-",
                super::ast::UnaryOp::Not => "not ",
            });
            atom(operand, out);
        }
        Expr::Binary { op, left, right } => {
            atom(left, out);
            out.push_str(&format!(" {} ", op.symbol()));
            atom(right, out);
        }
        Expr::Compare { op, left, right } => {
            atom(left, out);
            out.push_str(&format!(" {} ", op.symbol()));
            atom(right, out);
        }
    }
}
