use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::lang::ast::{BinOp, CmpOp, Expr, Literal, Stmt, StmtKind, UnaryOp};
use crate::lang::usedef::{expr_use, function_free_globals, function_locals, use_def_scoped, Locals};
use crate::lang::{Accessor, QualifiedName};
use crate::lineage::{ObjectId, ParentMode};

use super::scope::{Lookup, Scope, ScopeKind};
use super::value::{Builtin, DictObj, FuncBody, FuncObj, ListObj, Origin, Value};
use super::{ExecStatus, LineageEvent, NotebookState, StmtKey};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RtError {
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for RtError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

pub(crate) fn err<T>(kind: &'static str, message: impl Into<String>) -> Result<T, RtError> {
    Err(RtError {
        kind,
        message: message.into(),
    })
}

pub(crate) type Res<T> = Result<T, RtError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// First execution ever: record refined reads.
    Full,
    /// Seen in an earlier run: reuse recorded reads.
    Replay,
    /// Already executed during this run.
    Off,
    /// Inside a builtin.
    Suspended,
}

#[derive(Debug)]
enum Effect {
    BindGlobal {
        name: String,
        object: Option<ObjectId>,
        aug: bool,
    },
    MemberStore {
        container: ObjectId,
        acc: Accessor,
        object: Option<ObjectId>,
        aug: bool,
    },
    Append {
        container: ObjectId,
    },
    DeleteGlobal {
        name: String,
    },
    DeleteMember {
        container: ObjectId,
        acc: Accessor,
    },
}

#[derive(Debug)]
struct Trace {
    key: StmtKey,
    mode: Mode,
    reads: BTreeMap<QualifiedName, Option<ObjectId>>,
    /// Reads of callee return statements.
    propagated: BTreeSet<QualifiedName>,
    effects: Vec<Effect>,
}

enum Flow {
    Normal,
    Return(Value),
}

pub(crate) struct Interp<'a> {
    pub st: &'a mut NotebookState,
    counter: u64,
    pub stdout: String,
    events: Vec<LineageEvent>,
    executed_now: HashSet<StmtKey>,
    traces: Vec<Trace>,
    suspended: u32,
    depth: u32,
    steps: u64,
    return_reads: Option<BTreeSet<QualifiedName>>,
}

pub(crate) fn run_cell(
    st: &mut NotebookState,
    stmts: &[Stmt],
    cell_key: u64,
    counter: u64,
) -> (ExecStatus, String, Vec<LineageEvent>) {
    let mut it = Interp {
        st,
        counter,
        stdout: String::new(),
        events: Vec::new(),
        executed_now: HashSet::new(),
        traces: Vec::new(),
        suspended: 0,
        depth: 0,
        steps: 0,
        return_reads: None,
    };
    let origin = Origin { cell_key };
    let mut status = ExecStatus::Ok;
    for (i, s) in stmts.iter().enumerate() {
        if let Err(e) = it.exec_stmt(s, &None, &origin) {
            status = ExecStatus::Error {
                message: e.to_string(),
                statement_index: i + 1,
            };
            break;
        }
    }
    (status, it.stdout, it.events)
}

impl<'a> Interp<'a> {
    fn new_object_id(&mut self) -> ObjectId {
        let id = self.st.next_object;
        self.st.next_object += 1;
        id
    }

    pub(crate) fn new_list(&mut self, items: Vec<Value>) -> Res<Value> {
        if items.len() > self.st.limits.max_collection_len {
            return err("MemoryError", "list too large");
        }
        let id = self.new_object_id();
        Ok(Value::List(Rc::new(ListObj {
            id,
            items: RefCell::new(items),
        })))
    }

    fn new_dict(&mut self, entries: IndexMap<String, Value>) -> Value {
        let id = self.new_object_id();
        Value::Dict(Rc::new(DictObj {
            id,
            entries: RefCell::new(entries),
        }))
    }

    pub(crate) fn limits(&self) -> super::Limits {
        self.st.limits
    }

    // ---- tracing ----

    fn begin(&mut self, key: StmtKey) -> bool {
        if !self.st.tracing() {
            return false;
        }
        let mode = if self.suspended > 0 {
            Mode::Suspended
        } else if !self.executed_now.insert(key) {
            Mode::Off
        } else if self.st.statement_seen.contains(&key) {
            Mode::Replay
        } else {
            Mode::Full
        };
        self.traces.push(Trace {
            key,
            mode,
            reads: BTreeMap::new(),
            propagated: BTreeSet::new(),
            effects: Vec::new(),
        });
        true
    }

    fn record_read(&mut self, q: &QualifiedName, obj: Option<ObjectId>) {
        if self.suspended > 0 {
            return;
        }
        if let Some(t) = self.traces.last_mut() {
            if t.mode == Mode::Full {
                t.reads.insert(q.clone(), obj);
            }
        }
    }

    fn effect(&mut self, e: Effect) {
        if let Some(t) = self.traces.last_mut() {
            t.effects.push(e);
        }
    }

    /// Applies the lineage rule of a completed statement.
    fn finish(&mut self, stmt: &Stmt, scope: &Option<Rc<Scope>>) {
        let t = self.traces.pop().expect("trace pushed by begin");
        let counter = self.counter;
        let reads: BTreeSet<QualifiedName> = match t.mode {
            Mode::Full => {
                let mut r: BTreeSet<QualifiedName> = t.reads.keys().cloned().collect();
                let locals = Scope::bound_names(scope);
                r.extend(use_def_scoped(stmt, &locals).uses);
                r.extend(t.propagated.iter().cloned());
                for (q, obj) in &t.reads {
                    if !q.is_simple() {
                        self.st.lineage.touch_member(q, *obj);
                    }
                }
                self.st.recorded.insert(t.key, r.clone());
                self.st.statement_seen.insert(t.key);
                r
            }
            Mode::Replay => {
                let mut r = self.st.recorded.get(&t.key).cloned().unwrap_or_default();
                // Members dropped by a rebinding since the first run come back on read.
                for q in r.iter().filter(|q| !q.is_simple()) {
                    if self.st.lineage.id_of(q).is_none() {
                        let obj = self.st.value_at(q).and_then(|v| v.object_id());
                        self.st.lineage.touch_member(q, obj);
                    }
                }
                r.extend(t.propagated.iter().cloned());
                r
            }
            Mode::Off | Mode::Suspended => BTreeSet::new(),
        };
        let tracked = matches!(t.mode, Mode::Full | Mode::Replay);
        if matches!(stmt.kind, StmtKind::Return(_)) {
            // A repeated call still feeds its recorded return reads to the call site.
            let ret = match t.mode {
                Mode::Full | Mode::Replay => Some(reads.clone()),
                Mode::Off => self.st.recorded.get(&t.key).cloned(),
                Mode::Suspended => None,
            };
            if let Some(ret) = ret {
                self.return_reads.get_or_insert_with(BTreeSet::new).extend(ret);
            }
        }
        for e in t.effects {
            self.apply_effect(e, &reads, tracked, counter, t.key);
        }
    }

    fn apply_effect(&mut self, e: Effect, reads: &BTreeSet<QualifiedName>, tracked: bool, counter: u64, key: StmtKey) {
        let lg = &mut self.st.lineage;
        match e {
            Effect::BindGlobal { name, object, aug } => {
                let q = QualifiedName::simple(name);
                let existing = lg.lookup(&q).map(|s| s.object);
                if tracked || existing.is_none() {
                    let reads = if tracked {
                        reads.clone()
                    } else {
                        self.st.recorded.get(&key).cloned().unwrap_or_default()
                    };
                    let lg = &mut self.st.lineage;
                    if existing.is_some_and(|o| o != object) {
                        lg.delete_members(&q);
                    }
                    let id = if aug {
                        let mut r = reads;
                        r.insert(q.clone());
                        lg.update(&q, &r, counter, object, ParentMode::Augment)
                    } else {
                        lg.apply_assignment(&q, &reads, counter, object)
                    };
                    let sym = lg.get(id).unwrap();
                    let mut parents: Vec<String> = sym.parents.iter().map(|p| lg.get(*p).unwrap().name.to_string()).collect();
                    parents.sort();
                    self.events.push(LineageEvent::Assign {
                        name: q.to_string(),
                        ts: sym.ts,
                        parents,
                    });
                } else if existing != Some(object) {
                    lg.delete_members(&q);
                    lg.rebind_object(&q, object);
                }
            }
            Effect::MemberStore {
                container,
                acc,
                object,
                aug,
            } => {
                let Some(aliases) = lg.aliases().aliases(container) else {
                    return;
                };
                let members: Vec<QualifiedName> = aliases
                    .iter()
                    .filter_map(|a| lg.get(*a))
                    .map(|s| s.name.child(acc.clone()))
                    .collect();
                for m in &members {
                    let existing = lg.lookup(m).map(|s| s.object);
                    if existing.is_some_and(|o| o != object) {
                        lg.delete_members(m);
                    }
                    if tracked {
                        let mode = if aug { ParentMode::Augment } else { ParentMode::Replace };
                        lg.update(m, reads, counter, object, mode);
                    } else if existing.is_some() {
                        lg.rebind_object(m, object);
                    }
                }
                if tracked {
                    self.mutate(container, reads, counter);
                }
            }
            Effect::Append { container } => {
                if tracked {
                    self.mutate(container, reads, counter);
                }
            }
            Effect::DeleteGlobal { name } => {
                let q = QualifiedName::simple(name);
                if lg.delete_symbol(&q).is_ok() {
                    self.events.push(LineageEvent::Delete { name: q.to_string() });
                }
            }
            Effect::DeleteMember { container, acc } => {
                let Some(aliases) = lg.aliases().aliases(container) else {
                    return;
                };
                let names: Vec<QualifiedName> = aliases.iter().filter_map(|a| lg.get(*a)).map(|s| s.name.clone()).collect();
                for base in names {
                    match &acc {
                        // Removing a list element shifts the indices after it.
                        Accessor::Index(_) => {
                            for m in lg.members_of(&base) {
                                if m.path.len() == base.path.len() + 1 && matches!(m.path.last(), Some(Accessor::Index(_))) {
                                    let _ = lg.delete_symbol(&m);
                                }
                            }
                        }
                        Accessor::Key(_) => {
                            let m = base.child(acc.clone());
                            if lg.delete_symbol(&m).is_ok() {
                                self.events.push(LineageEvent::Delete { name: m.to_string() });
                            }
                        }
                    }
                }
                if tracked {
                    self.mutate(container, reads, counter);
                }
            }
        }
    }

    fn mutate(&mut self, container: ObjectId, reads: &BTreeSet<QualifiedName>, counter: u64) {
        if let Ok(ids) = self.st.lineage.record_mutation(container, reads, counter) {
            let mut names: Vec<String> = ids
                .iter()
                .filter_map(|i| self.st.lineage.get(*i))
                .map(|s| s.name.to_string())
                .collect();
            names.sort();
            self.events.push(LineageEvent::Mutate { names, ts: counter });
        }
    }

    // ---- statements ----

    fn step(&mut self) -> Res<()> {
        self.steps += 1;
        if self.steps > self.st.limits.max_steps {
            return err("TimeoutError", "step limit exceeded");
        }
        Ok(())
    }

    fn exec_block(&mut self, stmts: &[Stmt], scope: &Option<Rc<Scope>>, origin: &Origin) -> Res<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.exec_stmt(s, scope, origin)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(&mut self, s: &Stmt, scope: &Option<Rc<Scope>>, origin: &Origin) -> Res<Flow> {
        self.step()?;
        let traced = self.begin((origin.cell_key, s.id));
        match self.exec_stmt_inner(s, scope, origin) {
            Ok(flow) => {
                if traced {
                    self.finish(s, scope);
                }
                Ok(flow)
            }
            Err(e) => {
                if traced {
                    self.traces.pop();
                }
                Err(e)
            }
        }
    }

    fn exec_stmt_inner(&mut self, s: &Stmt, scope: &Option<Rc<Scope>>, origin: &Origin) -> Res<Flow> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value, scope)?;
                self.assign(target, v, scope, false)?;
            }
            StmtKind::AugAssign { target, op, value } => {
                let cur = self.eval(target, scope)?;
                let rhs = self.eval(value, scope)?;
                let v = self.binary(*op, cur, rhs)?;
                self.assign(target, v, scope, true)?;
            }
            StmtKind::Expr(e) => {
                self.eval(e, scope)?;
            }
            StmtKind::If { branches, orelse } => {
                for (cond, body) in branches {
                    if self.eval(cond, scope)?.truthy() {
                        return self.exec_block(body, scope, origin);
                    }
                }
                return self.exec_block(orelse, scope, origin);
            }
            StmtKind::While { cond, body } => {
                while self.eval(cond, scope)?.truthy() {
                    self.step()?;
                    if let Flow::Return(v) = self.exec_block(body, scope, origin)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::For { var, iter, body } => {
                let it = self.eval(iter, scope)?;
                let items: Vec<Value> = match &it {
                    Value::List(l) => l.items.borrow().clone(),
                    Value::Dict(d) => d.entries.borrow().keys().map(|k| Value::Str(k.as_str().into())).collect(),
                    Value::Str(s) => s.chars().map(|c| Value::Str(c.to_string().into())).collect(),
                    other => return err("TypeError", format!("'{}' object is not iterable", other.type_name())),
                };
                let in_fn = Scope::in_function(scope);
                let body_scope = if in_fn {
                    scope.clone()
                } else {
                    let mut declared = Locals::new();
                    declared.insert(var.clone());
                    Some(Scope::new(ScopeKind::Loop, declared, scope.clone()))
                };
                for item in items {
                    self.step()?;
                    match Scope::owner(&body_scope, var) {
                        Some(owner) => {
                            owner.vars.borrow_mut().insert(var.clone(), item);
                        }
                        None => return err("InternalError", "loop variable has no scope"),
                    }
                    if let Flow::Return(v) = self.exec_block(body, &body_scope, origin)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::FuncDef { name, params, body } => {
                let outer = Scope::bound_names(scope);
                let f = FuncObj {
                    id: self.new_object_id(),
                    name: name.clone(),
                    params: params.clone(),
                    body: FuncBody::Block(body.clone()),
                    locals: function_locals(params, body),
                    closure: scope.clone(),
                    origin: origin.clone(),
                    free_globals: function_free_globals(params, body, &outer),
                };
                self.bind_name(name, Value::Func(Rc::new(f)), scope, false);
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e, scope)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Del(target) => self.delete(target, scope)?,
            StmtKind::Pass => {}
        }
        Ok(Flow::Normal)
    }

    fn bind_name(&mut self, name: &str, v: Value, scope: &Option<Rc<Scope>>, aug: bool) {
        match Scope::owner(scope, name) {
            Some(owner) => {
                owner.vars.borrow_mut().insert(name.to_string(), v);
            }
            None => {
                let object = v.object_id();
                self.st.globals.insert(name.to_string(), v);
                self.effect(Effect::BindGlobal {
                    name: name.to_string(),
                    object,
                    aug,
                });
            }
        }
    }

    fn assign(&mut self, target: &Expr, v: Value, scope: &Option<Rc<Scope>>, aug: bool) -> Res<()> {
        match target {
            Expr::Name(n) => {
                self.bind_name(n, v, scope, aug);
                Ok(())
            }
            Expr::Attr { value, attr } => {
                let (container, _) = self.eval_access(value, scope)?;
                match &container {
                    Value::Dict(d) => {
                        let object = v.object_id();
                        d.entries.borrow_mut().insert(attr.clone(), v);
                        self.effect(Effect::MemberStore {
                            container: d.id,
                            acc: Accessor::Key(attr.clone()),
                            object,
                            aug,
                        });
                        Ok(())
                    }
                    other => err("TypeError", format!("cannot set attribute on '{}'", other.type_name())),
                }
            }
            Expr::Subscript { value, index } => {
                let (container, _) = self.eval_access(value, scope)?;
                let idx = self.eval(index, scope)?;
                let object = v.object_id();
                match (&container, idx) {
                    (Value::Dict(d), Value::Str(k)) => {
                        d.entries.borrow_mut().insert(k.to_string(), v);
                        self.effect(Effect::MemberStore {
                            container: d.id,
                            acc: Accessor::Key(k.to_string()),
                            object,
                            aug,
                        });
                        Ok(())
                    }
                    (Value::List(l), Value::Int(i)) => {
                        let pos = {
                            let mut items = l.items.borrow_mut();
                            let pos = normalize_index(i, items.len())?;
                            items[pos] = v;
                            pos
                        };
                        self.effect(Effect::MemberStore {
                            container: l.id,
                            acc: Accessor::Index(pos as i64),
                            object,
                            aug,
                        });
                        Ok(())
                    }
                    (c, i) => err(
                        "TypeError",
                        format!("cannot assign '{}' index on '{}'", i.type_name(), c.type_name()),
                    ),
                }
            }
            _ => err("SyntaxError", "invalid assignment target"),
        }
    }

    fn delete(&mut self, target: &Expr, scope: &Option<Rc<Scope>>) -> Res<()> {
        match target {
            Expr::Name(n) => match Scope::owner(scope, n) {
                Some(owner) => match owner.vars.borrow_mut().remove(n) {
                    Some(_) => Ok(()),
                    None => err("UnboundLocalError", format!("local variable '{n}' referenced before assignment")),
                },
                None => {
                    if self.st.globals.remove(n).is_none() {
                        return err("NameError", format!("name '{n}' is not defined"));
                    }
                    self.effect(Effect::DeleteGlobal { name: n.clone() });
                    Ok(())
                }
            },
            Expr::Attr { value, attr } => {
                let (container, _) = self.eval_access(value, scope)?;
                match &container {
                    Value::Dict(d) => {
                        if d.entries.borrow_mut().shift_remove(attr).is_none() {
                            return err("KeyError", format!("'{attr}'"));
                        }
                        self.effect(Effect::DeleteMember {
                            container: d.id,
                            acc: Accessor::Key(attr.clone()),
                        });
                        Ok(())
                    }
                    other => err("TypeError", format!("cannot delete attribute of '{}'", other.type_name())),
                }
            }
            Expr::Subscript { value, index } => {
                let (container, _) = self.eval_access(value, scope)?;
                let idx = self.eval(index, scope)?;
                match (&container, idx) {
                    (Value::Dict(d), Value::Str(k)) => {
                        if d.entries.borrow_mut().shift_remove(k.as_ref()).is_none() {
                            return err("KeyError", format!("'{k}'"));
                        }
                        self.effect(Effect::DeleteMember {
                            container: d.id,
                            acc: Accessor::Key(k.to_string()),
                        });
                        Ok(())
                    }
                    (Value::List(l), Value::Int(i)) => {
                        let pos = {
                            let mut items = l.items.borrow_mut();
                            let pos = normalize_index(i, items.len())?;
                            items.remove(pos);
                            pos
                        };
                        self.effect(Effect::DeleteMember {
                            container: l.id,
                            acc: Accessor::Index(pos as i64),
                        });
                        Ok(())
                    }
                    (c, i) => err(
                        "TypeError",
                        format!("cannot delete '{}' index of '{}'", i.type_name(), c.type_name()),
                    ),
                }
            }
            _ => err("SyntaxError", "invalid del target"),
        }
    }

    // ---- expressions ----

    pub(crate) fn eval(&mut self, e: &Expr, scope: &Option<Rc<Scope>>) -> Res<Value> {
        match e {
            Expr::Name(_) | Expr::Attr { .. } | Expr::Subscript { .. } => Ok(self.eval_access(e, scope)?.0),
            Expr::Literal(l) => Ok(match l {
                Literal::Int(i) => Value::Int(*i),
                Literal::Float(f) => Value::Float(*f),
                Literal::Str(s) => Value::Str(s.as_str().into()),
                Literal::Bool(b) => Value::Bool(*b),
                Literal::None => Value::None,
            }),
            Expr::List(items) => {
                let mut vals = Vec::with_capacity(items.len());
                for i in items {
                    vals.push(self.eval(i, scope)?);
                }
                self.new_list(vals)
            }
            Expr::Dict(entries) => {
                let mut map = IndexMap::new();
                for (k, v) in entries {
                    let key = match self.eval(k, scope)? {
                        Value::Str(s) => s.to_string(),
                        other => return err("TypeError", format!("dict keys must be str, not {}", other.type_name())),
                    };
                    let val = self.eval(v, scope)?;
                    map.insert(key, val);
                }
                Ok(self.new_dict(map))
            }
            Expr::Lambda { params, body } => {
                let outer = Scope::bound_names(scope);
                let locals: Locals = params.iter().cloned().collect();
                let mut inner = outer.clone();
                inner.extend(locals.iter().cloned());
                let mut free = expr_use(body, &inner);
                free.defs.clear();
                let f = FuncObj {
                    id: self.new_object_id(),
                    name: "<lambda>".to_string(),
                    params: params.clone(),
                    body: FuncBody::Lambda(body.clone()),
                    locals,
                    closure: scope.clone(),
                    origin: Origin { cell_key: 0 },
                    free_globals: free,
                };
                Ok(Value::Func(Rc::new(f)))
            }
            Expr::Call { func, args } => {
                if let Expr::Attr { value, attr } = func.as_ref() {
                    if attr == "append" {
                        let (target, _) = self.eval_access(value, scope)?;
                        let mut vals = Vec::with_capacity(args.len());
                        for a in args {
                            vals.push(self.eval(a, scope)?);
                        }
                        return match target {
                            Value::List(l) => self.append(&l, vals),
                            other => err("TypeError", format!("'{}' object has no method append", other.type_name())),
                        };
                    }
                }
                let (f, _) = self.eval_access(func, scope)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, scope)?);
                }
                self.call_value(&f, vals)
            }
            Expr::Unary { op, operand } => {
                let v = self.eval(operand, scope)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
                        Value::Float(f) => Ok(Value::Float(-f)),
                        Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                        other => err("TypeError", format!("bad operand type for unary -: '{}'", other.type_name())),
                    },
                }
            }
            Expr::Binary { op, left, right } => match op {
                BinOp::And => {
                    let l = self.eval(left, scope)?;
                    if !l.truthy() {
                        Ok(l)
                    } else {
                        self.eval(right, scope)
                    }
                }
                BinOp::Or => {
                    let l = self.eval(left, scope)?;
                    if l.truthy() {
                        Ok(l)
                    } else {
                        self.eval(right, scope)
                    }
                }
                _ => {
                    let l = self.eval(left, scope)?;
                    let r = self.eval(right, scope)?;
                    self.binary(*op, l, r)
                }
            },
            Expr::Compare { op, left, right } => {
                let l = self.eval(left, scope)?;
                let r = self.eval(right, scope)?;
                compare(*op, &l, &r).map(Value::Bool)
            }
        }
    }

    /// Evaluates a name/attribute/subscript chain, recording the concrete qualified names read.
    fn eval_access(&mut self, e: &Expr, scope: &Option<Rc<Scope>>) -> Res<(Value, Option<QualifiedName>)> {
        match e {
            Expr::Name(n) => match Scope::lookup(scope, n) {
                Lookup::Found(v) => Ok((v, None)),
                Lookup::Unbound => err("UnboundLocalError", format!("local variable '{n}' referenced before assignment")),
                Lookup::NotLocal => {
                    if let Some(v) = self.st.globals.get(n) {
                        let v = v.clone();
                        let q = QualifiedName::simple(n.clone());
                        self.record_read(&q, v.object_id());
                        Ok((v, Some(q)))
                    } else if let Some(b) = Builtin::from_name(n) {
                        Ok((Value::Builtin(b), None))
                    } else {
                        err("NameError", format!("name '{n}' is not defined"))
                    }
                }
            },
            Expr::Attr { value, attr } => {
                let (base, q) = self.eval_access(value, scope)?;
                match &base {
                    Value::Dict(d) => {
                        let v = d.entries.borrow().get(attr).cloned();
                        match v {
                            Some(v) => {
                                let q = q.map(|q| q.key(attr.clone()));
                                if let Some(q) = &q {
                                    self.record_read(q, v.object_id());
                                }
                                Ok((v, q))
                            }
                            None => err("KeyError", format!("'{attr}'")),
                        }
                    }
                    Value::List(l) if attr == "append" => Ok((Value::Append(l.clone()), None)),
                    other => err("AttributeError", format!("'{}' object has no attribute '{attr}'", other.type_name())),
                }
            }
            Expr::Subscript { value, index } => {
                let (base, q) = self.eval_access(value, scope)?;
                let idx = self.eval(index, scope)?;
                let (v, acc) = match (&base, &idx) {
                    (Value::List(l), Value::Int(i)) => {
                        let items = l.items.borrow();
                        let pos = normalize_index(*i, items.len())?;
                        (items[pos].clone(), Some(Accessor::Index(pos as i64)))
                    }
                    (Value::Dict(d), Value::Str(k)) => match d.entries.borrow().get(k.as_ref()) {
                        Some(v) => (v.clone(), Some(Accessor::Key(k.to_string()))),
                        None => return err("KeyError", format!("'{k}'")),
                    },
                    (Value::Str(s), Value::Int(i)) => {
                        let chars: Vec<char> = s.chars().collect();
                        let pos = normalize_index(*i, chars.len())?;
                        (Value::Str(chars[pos].to_string().into()), None)
                    }
                    (b, i) => {
                        return err(
                            "TypeError",
                            format!("'{}' indices are not supported on '{}'", i.type_name(), b.type_name()),
                        )
                    }
                };
                let q = match (q, acc) {
                    (Some(q), Some(acc)) => Some(q.child(acc)),
                    _ => None,
                };
                if let Some(q) = &q {
                    self.record_read(q, v.object_id());
                }
                Ok((v, q))
            }
            other => Ok((self.eval(other, scope)?, None)),
        }
    }

    pub(crate) fn append(&mut self, l: &Rc<ListObj>, mut args: Vec<Value>) -> Res<Value> {
        if args.len() != 1 {
            return err("TypeError", format!("append() takes exactly one argument ({} given)", args.len()));
        }
        if l.items.borrow().len() >= self.st.limits.max_collection_len {
            return err("MemoryError", "list too large");
        }
        l.items.borrow_mut().push(args.pop().unwrap());
        self.effect(Effect::Append { container: l.id });
        Ok(Value::None)
    }

    pub(crate) fn call_value(&mut self, f: &Value, args: Vec<Value>) -> Res<Value> {
        match f {
            Value::Builtin(b) => {
                self.suspended += 1;
                let r = self.call_builtin(*b, args);
                self.suspended -= 1;
                r
            }
            Value::Func(func) => self.call_func(func, args),
            Value::Append(l) => {
                let l = l.clone();
                self.append(&l, args)
            }
            other => err("TypeError", format!("'{}' object is not callable", other.type_name())),
        }
    }

    fn call_func(&mut self, f: &Rc<FuncObj>, args: Vec<Value>) -> Res<Value> {
        if args.len() != f.params.len() {
            return err(
                "TypeError",
                format!("{}() takes {} arguments but {} were given", f.name, f.params.len(), args.len()),
            );
        }
        if self.depth >= self.st.limits.max_call_depth {
            return err("RecursionError", "maximum recursion depth exceeded");
        }
        let frame = Scope::new(ScopeKind::Function, f.locals.clone(), f.closure.clone());
        {
            let mut vars = frame.vars.borrow_mut();
            for (p, a) in f.params.iter().zip(args) {
                vars.insert(p.clone(), a);
            }
        }
        let frame = Some(frame);
        self.depth += 1;
        let saved = self.return_reads.take();
        let result = match &f.body {
            FuncBody::Block(body) => self.exec_block(body, &frame, &f.origin).map(|flow| match flow {
                Flow::Return(v) => v,
                Flow::Normal => Value::None,
            }),
            FuncBody::Lambda(body) => self.eval(body, &frame),
        };
        let propagated = std::mem::replace(&mut self.return_reads, saved);
        self.depth -= 1;
        if let (Some(p), true) = (propagated, self.suspended == 0) {
            if let Some(t) = self.traces.last_mut() {
                if matches!(t.mode, Mode::Full | Mode::Replay) {
                    t.propagated.extend(p);
                }
            }
        }
        result
    }

    pub(crate) fn emit(&mut self, text: &str) {
        self.stdout.push_str(text);
    }

    pub(crate) fn binary(&mut self, op: BinOp, l: Value, r: Value) -> Res<Value> {
        use Value::*;
        let num = |v: &Value| match v {
            Int(i) => Some(*i as f64),
            Float(f) => Some(*f),
            Bool(b) => Some(*b as i64 as f64),
            _ => Option::None,
        };
        let int = |v: &Value| match v {
            Int(i) => Some(*i),
            Bool(b) => Some(*b as i64),
            _ => Option::None,
        };
        match (op, &l, &r) {
            (BinOp::Add, Str(a), Str(b)) => Ok(Str(format!("{a}{b}").into())),
            (BinOp::Add, List(a), List(b)) => {
                let mut items = a.items.borrow().clone();
                items.extend(b.items.borrow().iter().cloned());
                self.new_list(items)
            }
            (BinOp::Mul, Str(s), _) | (BinOp::Mul, _, Str(s)) if int(&l).or(int(&r)).is_some() => {
                let n = if let Str(_) = l { int(&r) } else { int(&l) }.unwrap_or(0).max(0) as usize;
                if s.len().saturating_mul(n) > self.st.limits.max_collection_len {
                    return err("MemoryError", "string too large");
                }
                Ok(Str(s.repeat(n).into()))
            }
            (BinOp::Mul, List(a), _) | (BinOp::Mul, _, List(a)) if int(&l).or(int(&r)).is_some() => {
                let n = if let List(_) = l { int(&r) } else { int(&l) }.unwrap_or(0).max(0) as usize;
                let items = a.items.borrow();
                if items.len().saturating_mul(n) > self.st.limits.max_collection_len {
                    return err("MemoryError", "list too large");
                }
                let mut out = Vec::with_capacity(items.len() * n);
                for _ in 0..n {
                    out.extend(items.iter().cloned());
                }
                drop(items);
                self.new_list(out)
            }
            _ => {
                if let (Some(a), Some(b)) = (int(&l), int(&r)) {
                    return int_op(op, a, b);
                }
                match (num(&l), num(&r)) {
                    (Some(a), Some(b)) => float_op(op, a, b),
                    _ => err(
                        "TypeError",
                        format!(
                            "unsupported operand types for {}: '{}' and '{}'",
                            op.symbol(),
                            l.type_name(),
                            r.type_name()
                        ),
                    ),
                }
            }
        }
    }
}

fn overflow() -> RtError {
    RtError {
        kind: "OverflowError",
        message: "integer overflow".to_string(),
    }
}

fn zero_div() -> RtError {
    RtError {
        kind: "ZeroDivisionError",
        message: "division by zero".to_string(),
    }
}

fn int_op(op: BinOp, a: i64, b: i64) -> Res<Value> {
    let v = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div => {
            if b == 0 {
                return Err(zero_div());
            }
            return Ok(Value::Float(a as f64 / b as f64));
        }
        BinOp::FloorDiv => {
            if b == 0 {
                return Err(zero_div());
            }
            a.checked_div(b)
                .map(|q| if a % b != 0 && ((a < 0) != (b < 0)) { q - 1 } else { q })
        }
        BinOp::Mod => {
            if b == 0 {
                return Err(zero_div());
            }
            a.checked_rem(b).map(|r| if r != 0 && ((r < 0) != (b < 0)) { r + b } else { r })
        }
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators are evaluated lazily"),
    };
    v.map(Value::Int).ok_or_else(overflow)
}

fn float_op(op: BinOp, a: f64, b: f64) -> Res<Value> {
    Ok(Value::Float(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(zero_div());
            }
            a / b
        }
        BinOp::FloorDiv => {
            if b == 0.0 {
                return Err(zero_div());
            }
            (a / b).floor()
        }
        BinOp::Mod => {
            if b == 0.0 {
                return Err(zero_div());
            }
            let r = a % b;
            if r != 0.0 && ((r < 0.0) != (b < 0.0)) {
                r + b
            } else {
                r
            }
        }
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators are evaluated lazily"),
    }))
}

fn compare(op: CmpOp, l: &Value, r: &Value) -> Res<bool> {
    match op {
        CmpOp::Eq => return Ok(l.equals(r)),
        CmpOp::Ne => return Ok(!l.equals(r)),
        _ => {}
    }
    let ord = match (l, r) {
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        _ => {
            let num = |v: &Value| match v {
                Value::Int(i) => Some(*i as f64),
                Value::Float(f) => Some(*f),
                Value::Bool(b) => Some(*b as i64 as f64),
                _ => None,
            };
            match (num(l), num(r)) {
                (Some(a), Some(b)) => match a.partial_cmp(&b) {
                    Some(o) => o,
                    None => return Ok(false),
                },
                _ => {
                    return err(
                        "TypeError",
                        format!(
                            "'{}' not supported between '{}' and '{}'",
                            op.symbol(),
                            l.type_name(),
                            r.type_name()
                        ),
                    )
                }
            }
        }
    };
    Ok(match op {
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Le => ord.is_le(),
        CmpOp::Gt => ord.is_gt(),
        CmpOp::Ge => ord.is_ge(),
        CmpOp::Eq | CmpOp::Ne => unreachable!(),
    })
}

fn normalize_index(i: i64, len: usize) -> Res<usize> {
    let idx = if i < 0 { len as i64 + i } else { i };
    if idx < 0 || idx as usize >= len {
        return err("IndexError", "list index out of range");
    }
    Ok(idx as usize)
}
