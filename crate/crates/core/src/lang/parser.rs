use std::rc::Rc;

use super::ast::{is_builtin, BinOp, CmpOp, Expr, Literal, Span, Stmt, StmtKind, UnaryOp};
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

/// Parses a whole cell into its statement list.
pub fn parse_cell(text: &str) -> Result<Vec<Stmt>, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        func_depth: 0,
        next_id: 0,
    };
    let mut stmts = Vec::new();
    while !parser.at(&Tok::Eof) {
        stmts.push(parser.statement()?);
    }
    Ok(stmts)
}

/// Parses a standalone expression (used by tests and tooling).
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        func_depth: 0,
        next_id: 0,
    };
    let e = parser.expr()?;
    if parser.at(&Tok::Newline) {
        parser.pos += 1;
    }
    if !parser.at(&Tok::Eof) {
        return Err(parser.error_here("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    func_depth: u32,
    next_id: u32,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(&self.peek().tok, Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Kw(k) if *k == kw)
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: impl Into<String>) -> SyntaxError {
        let t = self.peek();
        SyntaxError::new(t.line, t.col, msg)
    }

    fn unexpected(&self) -> SyntaxError {
        let desc = match &self.peek().tok {
            Tok::Name(n) => format!("unexpected name '{n}'"),
            Tok::Kw(k) => format!("unexpected keyword '{k}'"),
            Tok::Int(_) | Tok::Float(_) => "unexpected number".to_string(),
            Tok::Str(_) => "unexpected string".to_string(),
            Tok::Op(o) => format!("unexpected '{o}'"),
            Tok::Newline => "unexpected end of line".to_string(),
            Tok::Indent => "unexpected indent".to_string(),
            Tok::Dedent => "unexpected dedent".to_string(),
            Tok::Eof => "unexpected end of input".to_string(),
        };
        self.error_here(desc)
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.at_op(op) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.at_kw(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expect_newline(&mut self) -> Result<(), SyntaxError> {
        if self.at(&Tok::Newline) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn binding_name(&mut self) -> Result<String, SyntaxError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Name(n) => {
                if is_builtin(&n) {
                    return Err(SyntaxError::new(t.line, t.col, format!("cannot rebind builtin '{n}'")));
                }
                self.advance();
                Ok(n)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        let start = self.peek().clone();
        let span = Span {
            line: start.line,
            col: start.col,
        };
        let id = self.next_id;
        self.next_id += 1;
        let kind = match &start.tok {
            Tok::Kw("if") => self.if_stmt()?,
            Tok::Kw("while") => {
                self.advance();
                let cond = self.expr()?;
                self.expect_op(":")?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Kw("for") => {
                self.advance();
                let var = self.binding_name()?;
                self.expect_kw("in")?;
                let iter = self.expr()?;
                self.expect_op(":")?;
                let body = self.block()?;
                StmtKind::For { var, iter, body }
            }
            Tok::Kw("def") => {
                self.advance();
                let name = self.binding_name()?;
                self.expect_op("(")?;
                let params = self.params(")")?;
                self.expect_op(")")?;
                self.expect_op(":")?;
                self.func_depth += 1;
                let body = self.block();
                self.func_depth -= 1;
                StmtKind::FuncDef {
                    name,
                    params,
                    body: Rc::new(body?),
                }
            }
            Tok::Indent => return Err(self.unexpected()),
            _ => {
                let kind = self.simple_stmt()?;
                self.expect_newline()?;
                kind
            }
        };
        Ok(Stmt { kind, span, id })
    }

    fn params(&mut self, close: &str) -> Result<Vec<String>, SyntaxError> {
        let mut params = Vec::new();
        while !self.at_op(close) {
            let p = self.binding_name()?;
            if params.contains(&p) {
                return Err(self.error_here(format!("duplicate parameter '{p}'")));
            }
            params.push(p);
            if self.at_op(",") {
                self.advance();
            } else {
                break;
            }
        }
        Ok(params)
    }

    fn if_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("if")?;
        let mut branches = Vec::new();
        let cond = self.expr()?;
        self.expect_op(":")?;
        branches.push((cond, self.block()?));
        let mut orelse = Vec::new();
        loop {
            if self.at_kw("elif") {
                self.advance();
                let cond = self.expr()?;
                self.expect_op(":")?;
                branches.push((cond, self.block()?));
            } else if self.at_kw("else") {
                self.advance();
                self.expect_op(":")?;
                orelse = self.block()?;
                break;
            } else {
                break;
            }
        }
        Ok(StmtKind::If { branches, orelse })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_newline()?;
        if !self.at(&Tok::Indent) {
            return Err(self.error_here("expected an indented block"));
        }
        self.advance();
        let mut body = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            body.push(self.statement()?);
        }
        if self.at(&Tok::Dedent) {
            self.advance();
        }
        Ok(body)
    }

    fn simple_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        if self.at_kw("pass") {
            self.advance();
            return Ok(StmtKind::Pass);
        }
        if self.at_kw("return") {
            if self.func_depth == 0 {
                return Err(self.error_here("'return' outside function"));
            }
            self.advance();
            if self.at(&Tok::Newline) {
                return Ok(StmtKind::Return(None));
            }
            return Ok(StmtKind::Return(Some(self.expr()?)));
        }
        if self.at_kw("del") {
            self.advance();
            let t = self.peek().clone();
            let target = self.expr()?;
            self.check_target(&target, &t)?;
            return Ok(StmtKind::Del(target));
        }

        let t = self.peek().clone();
        let first = self.expr()?;
        if self.at_op("=") {
            self.check_target(&first, &t)?;
            self.advance();
            let value = self.expr()?;
            return Ok(StmtKind::Assign { target: first, value });
        }
        let aug = match &self.peek().tok {
            Tok::Op("+=") => Some(BinOp::Add),
            Tok::Op("-=") => Some(BinOp::Sub),
            Tok::Op("*=") => Some(BinOp::Mul),
            Tok::Op("/=") => Some(BinOp::Div),
            Tok::Op("//=") => Some(BinOp::FloorDiv),
            Tok::Op("%=") => Some(BinOp::Mod),
            _ => None,
        };
        if let Some(op) = aug {
            self.check_target(&first, &t)?;
            self.advance();
            let value = self.expr()?;
            return Ok(StmtKind::AugAssign {
                target: first,
                op,
                value,
            });
        }
        Ok(StmtKind::Expr(first))
    }

    fn check_target(&self, target: &Expr, at: &Token) -> Result<(), SyntaxError> {
        match target {
            Expr::Name(n) if is_builtin(n) => {
                Err(SyntaxError::new(at.line, at.col, format!("cannot rebind builtin '{n}'")))
            }
            e if e.is_assignable() => Ok(()),
            _ => Err(SyntaxError::new(at.line, at.col, "invalid assignment target")),
        }
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_kw("lambda") {
            self.advance();
            let params = self.params(":")?;
            self.expect_op(":")?;
            let body = self.expr()?;
            return Ok(Expr::Lambda {
                params,
                body: Rc::new(body),
            });
        }
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.and_expr()?;
        while self.at_kw("or") {
            self.advance();
            let right = self.and_expr()?;
            left = Expr::Binary {
                op: BinOp::Or,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.not_expr()?;
        while self.at_kw("and") {
            self.advance();
            let right = self.not_expr()?;
            left = Expr::Binary {
                op: BinOp::And,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_kw("not") {
            self.advance();
            let operand = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(operand),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let left = self.additive()?;
        let op = match &self.peek().tok {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            _ => return Ok(left),
        };
        self.advance();
        let right = self.additive()?;
        if matches!(&self.peek().tok, Tok::Op("==" | "!=" | "<" | "<=" | ">" | ">=")) {
            return Err(self.error_here("chained comparisons are not supported"));
        }
        Ok(Expr::Compare {
            op,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.multiplicative()?;
            left = Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.unary()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.unary()?;
            left = Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_op("-") {
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                operand: Box::new(operand),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            if self.at_op(".") {
                self.advance();
                match self.advance().tok {
                    Tok::Name(attr) => {
                        e = Expr::Attr {
                            value: Box::new(e),
                            attr,
                        }
                    }
                    _ => {
                        self.pos -= 1;
                        return Err(self.error_here("expected attribute name"));
                    }
                }
            } else if self.at_op("[") {
                self.advance();
                let index = self.expr()?;
                self.expect_op("]")?;
                e = Expr::Subscript {
                    value: Box::new(e),
                    index: Box::new(index),
                };
            } else if self.at_op("(") {
                self.advance();
                let mut args = Vec::new();
                while !self.at_op(")") {
                    args.push(self.expr()?);
                    if self.at_op(",") {
                        self.advance();
                    } else {
                        break;
                    }
                }
                self.expect_op(")")?;
                e = Expr::Call {
                    func: Box::new(e),
                    args,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let t = self.peek().clone();
        let e = match t.tok {
            Tok::Name(n) => Expr::Name(n),
            Tok::Int(v) => Expr::Literal(Literal::Int(v)),
            Tok::Float(v) => Expr::Literal(Literal::Float(v)),
            Tok::Str(s) => Expr::Literal(Literal::Str(s)),
            Tok::Kw("True") => Expr::Literal(Literal::Bool(true)),
            Tok::Kw("False") => Expr::Literal(Literal::Bool(false)),
            Tok::Kw("None") => Expr::Literal(Literal::None),
            Tok::Op("(") => {
                self.advance();
                let inner = self.expr()?;
                self.expect_op(")")?;
                return Ok(inner);
            }
            Tok::Op("[") => {
                self.advance();
                let mut items = Vec::new();
                while !self.at_op("]") {
                    items.push(self.expr()?);
                    if self.at_op(",") {
                        self.advance();
                    } else {
                        break;
                    }
                }
                self.expect_op("]")?;
                return Ok(Expr::List(items));
            }
            Tok::Op("{") => {
                self.advance();
                let mut entries = Vec::new();
                while !self.at_op("}") {
                    let k = self.expr()?;
                    self.expect_op(":")?;
                    let v = self.expr()?;
                    entries.push((k, v));
                    if self.at_op(",") {
                        self.advance();
                    } else {
                        break;
                    }
                }
                self.expect_op("}")?;
                return Ok(Expr::Dict(entries));
            }
            _ => return Err(self.unexpected()),
        };
        self.advance();
        Ok(e)
    }
}
