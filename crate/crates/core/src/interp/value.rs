use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::lang::ast::{Expr, Stmt};
use crate::lang::usedef::UseDef;
use crate::lineage::ObjectId;

use super::scope::Scope;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Print,
    Len,
    Range,
    Map,
    List,
    Sample,
    Fail,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "print" => Builtin::Print,
            "len" => Builtin::Len,
            "range" => Builtin::Range,
            "map" => Builtin::Map,
            "list" => Builtin::List,
            "sample" => Builtin::Sample,
            "fail" => Builtin::Fail,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Print => "print",
            Builtin::Len => "len",
            Builtin::Range => "range",
            Builtin::Map => "map",
            Builtin::List => "list",
            Builtin::Sample => "sample",
            Builtin::Fail => "fail",
        }
    }
}

#[derive(Debug)]
pub struct ListObj {
    pub id: ObjectId,
    pub items: RefCell<Vec<Value>>,
}

#[derive(Debug)]
pub struct DictObj {
    pub id: ObjectId,
    pub entries: RefCell<IndexMap<String, Value>>,
}

#[derive(Debug)]
pub enum FuncBody {
    Block(Rc<Vec<Stmt>>),
    Lambda(Rc<Expr>),
}

/// Where a function was defined; statement keys inside it are derived from this.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Origin {
    pub cell_key: u64,
}

#[derive(Debug)]
pub struct FuncObj {
    pub id: ObjectId,
    pub name: String,
    pub params: Vec<String>,
    pub body: FuncBody,
    /// Names bound in the function's own frame.
    pub locals: crate::lang::usedef::Locals,
    pub closure: Option<Rc<Scope>>,
    pub origin: Origin,
    /// Global names the body may read, and the names it calls.
    pub free_globals: UseDef,
}

#[derive(Clone, Debug)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    List(Rc<ListObj>),
    Dict(Rc<DictObj>),
    Func(Rc<FuncObj>),
    Builtin(Builtin),
    /// `lst.append` bound to its list.
    Append(Rc<ListObj>),
}

impl Value {
    pub fn object_id(&self) -> Option<ObjectId> {
        match self {
            Value::List(l) => Some(l.id),
            Value::Dict(d) => Some(d.id),
            Value::Func(f) => Some(f.id),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Dict(_) => "dict",
            Value::Func(_) => "function",
            Value::Builtin(_) => "builtin",
            Value::Append(_) => "method",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.items.borrow().is_empty(),
            Value::Dict(d) => !d.entries.borrow().is_empty(),
            Value::Func(_) | Value::Builtin(_) | Value::Append(_) => true,
        }
    }

    /// Structural equality; functions compare by identity.
    pub fn equals(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::None, Value::None) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => (*a as f64) == *b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                Rc::ptr_eq(a, b) || {
                    let (x, y) = (a.items.borrow(), b.items.borrow());
                    x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| p.equals(q))
                }
            }
            (Value::Dict(a), Value::Dict(b)) => {
                Rc::ptr_eq(a, b) || {
                    let (x, y) = (a.entries.borrow(), b.entries.borrow());
                    x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| v.equals(w)))
                }
            }
            (Value::Func(a), Value::Func(b)) => Rc::ptr_eq(a, b),
            (Value::Builtin(a), Value::Builtin(b)) => a == b,
            (Value::Append(a), Value::Append(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }

    /// JSON rendering used for globals dumps. Object identities are not included.
    pub fn to_json(&self) -> serde_json::Value {
        self.to_json_depth(0)
    }

    fn to_json_depth(&self, depth: usize) -> serde_json::Value {
        use serde_json::json;
        if depth > 64 {
            return json!("<deep>");
        }
        match self {
            Value::None => serde_json::Value::Null,
            Value::Bool(b) => json!(b),
            Value::Int(i) => json!(i),
            Value::Float(f) if f.is_finite() => json!(f),
            Value::Float(f) => json!(format_float(*f)),
            Value::Str(s) => json!(s.as_ref()),
            Value::List(l) => serde_json::Value::Array(l.items.borrow().iter().map(|v| v.to_json_depth(depth + 1)).collect()),
            Value::Dict(d) => serde_json::Value::Object(
                d.entries
                    .borrow()
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json_depth(depth + 1)))
                    .collect(),
            ),
            Value::Func(f) => json!({ "function": f.name }),
            Value::Builtin(b) => json!({ "builtin": b.name() }),
            Value::Append(_) => json!({ "method": "append" }),
        }
    }

    fn write_repr(&self, f: &mut fmt::Formatter<'_>, quoted: bool, depth: usize) -> fmt::Result {
        if depth > 32 {
            return f.write_str("...");
        }
        match self {
            Value::None => f.write_str("None"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(v) => f.write_str(&format_float(*v)),
            Value::Str(s) if quoted => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            Value::Str(s) => f.write_str(s),
            Value::List(l) => {
                f.write_str("[")?;
                for (i, v) in l.items.borrow().iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    v.write_repr(f, true, depth + 1)?;
                }
                f.write_str("]")
            }
            Value::Dict(d) => {
                f.write_str("{")?;
                for (i, (k, v)) in d.entries.borrow().iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "'{k}': ")?;
                    v.write_repr(f, true, depth + 1)?;
                }
                f.write_str("}")
            }
            Value::Func(func) => write!(f, "<function {}>", func.name),
            Value::Builtin(b) => write!(f, "<builtin {}>", b.name()),
            Value::Append(_) => f.write_str("<method append>"),
        }
    }
}

/// `print` form: strings unquoted at top level.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_repr(f, false, 0)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v.fract() == 0.0 && v.abs() < 1e16 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}
