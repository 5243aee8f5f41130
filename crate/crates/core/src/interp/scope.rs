use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::lang::usedef::Locals;

use super::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScopeKind {
    /// A call frame. Names in `declared` are local even before assignment.
    Function,
    /// The variable of a `for` loop at notebook scope.
    Loop,
}

#[derive(Debug)]
pub struct Scope {
    pub kind: ScopeKind,
    pub declared: Locals,
    pub vars: RefCell<HashMap<String, Value>>,
    pub parent: Option<Rc<Scope>>,
}

pub enum Lookup {
    Found(Value),
    /// Declared local of a function frame, not yet assigned.
    Unbound,
    NotLocal,
}

impl Scope {
    pub fn new(kind: ScopeKind, declared: Locals, parent: Option<Rc<Scope>>) -> Rc<Scope> {
        Rc::new(Scope {
            kind,
            declared,
            vars: RefCell::new(HashMap::new()),
            parent,
        })
    }

    pub fn lookup(scope: &Option<Rc<Scope>>, name: &str) -> Lookup {
        let mut cur = scope.clone();
        while let Some(s) = cur {
            if let Some(v) = s.vars.borrow().get(name) {
                return Lookup::Found(v.clone());
            }
            if s.declared.contains(name) {
                return Lookup::Unbound;
            }
            cur = s.parent.clone();
        }
        Lookup::NotLocal
    }

    /// The scope that owns `name` for assignment, if any; `None` means a global.
    pub fn owner(scope: &Option<Rc<Scope>>, name: &str) -> Option<Rc<Scope>> {
        let mut cur = scope.clone();
        while let Some(s) = cur {
            if s.declared.contains(name) {
                return Some(s);
            }
            if s.kind == ScopeKind::Function {
                return None;
            }
            cur = s.parent.clone();
        }
        None
    }

    /// Every name bound by an enclosing non-global scope.
    pub fn bound_names(scope: &Option<Rc<Scope>>) -> Locals {
        let mut out = Locals::new();
        let mut cur = scope.clone();
        while let Some(s) = cur {
            out.extend(s.declared.iter().cloned());
            cur = s.parent.clone();
        }
        out
    }

    /// True inside a call frame.
    pub fn in_function(scope: &Option<Rc<Scope>>) -> bool {
        let mut cur = scope.clone();
        while let Some(s) = cur {
            if s.kind == ScopeKind::Function {
                return true;
            }
            cur = s.parent.clone();
        }
        false
    }
}
