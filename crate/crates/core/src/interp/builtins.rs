use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::exec::{err, Interp, Res};
use super::value::{Builtin, Value};

/// `sample` shuffles with this seed on every call, so results depend only on the input.
const SAMPLE_SEED: u64 = 0x5eed_ce11;

impl Interp<'_> {
    pub(crate) fn call_builtin(&mut self, b: Builtin, args: Vec<Value>) -> Res<Value> {
        match b {
            Builtin::Print => {
                let line: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                self.emit(&line.join(" "));
                self.emit("\n");
                Ok(Value::None)
            }
            Builtin::Len => {
                let [x] = one(args, "len")?;
                let n = match &x {
                    Value::List(l) => l.items.borrow().len(),
                    Value::Dict(d) => d.entries.borrow().len(),
                    Value::Str(s) => s.chars().count(),
                    other => return err("TypeError", format!("object of type '{}' has no len()", other.type_name())),
                };
                Ok(Value::Int(n as i64))
            }
            Builtin::Range => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| match a {
                        Value::Int(i) => Ok(*i),
                        Value::Bool(b) => Ok(*b as i64),
                        other => err("TypeError", format!("range() expects int, got {}", other.type_name())),
                    })
                    .collect::<Res<_>>()?;
                let (start, stop, step) = match ints.as_slice() {
                    [n] => (0, *n, 1),
                    [a, b] => (*a, *b, 1),
                    [a, b, s] => (*a, *b, *s),
                    _ => return err("TypeError", format!("range() takes 1 to 3 arguments ({} given)", ints.len())),
                };
                if step == 0 {
                    return err("ValueError", "range() step must not be zero");
                }
                let span = if step > 0 {
                    (stop as i128 - start as i128).max(0)
                } else {
                    (start as i128 - stop as i128).max(0)
                };
                let count = (span + step.unsigned_abs() as i128 - 1) / step.unsigned_abs() as i128;
                if count > self.limits().max_collection_len as i128 {
                    return err("MemoryError", "range too large");
                }
                let items = (0..count as i64).map(|k| Value::Int(start + k * step)).collect();
                self.new_list(items)
            }
            Builtin::Map => {
                if args.len() != 2 {
                    return err("TypeError", format!("map() takes 2 arguments ({} given)", args.len()));
                }
                let f = args[0].clone();
                let items = iterate(&args[1])?;
                let mut out = Vec::with_capacity(items.len());
                for x in items {
                    out.push(self.call_value(&f, vec![x])?);
                }
                self.new_list(out)
            }
            Builtin::List => {
                let [x] = one(args, "list")?;
                let items = iterate(&x)?;
                self.new_list(items)
            }
            Builtin::Sample => {
                let [x] = one(args, "sample")?;
                let mut items = iterate(&x)?;
                let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
                items.shuffle(&mut rng);
                self.new_list(items)
            }
            Builtin::Fail => {
                let msg = args.first().map(|a| a.to_string()).unwrap_or_else(|| "fail() called".to_string());
                err("Failure", msg)
            }
        }
    }
}

fn one(args: Vec<Value>, name: &str) -> Res<[Value; 1]> {
    let n = args.len();
    <[Value; 1]>::try_from(args)
        .or_else(|_| err("TypeError", format!("{name}() takes exactly one argument ({n} given)")))
}

fn iterate(v: &Value) -> Res<Vec<Value>> {
    Ok(match v {
        Value::List(l) => l.items.borrow().clone(),
        Value::Dict(d) => d.entries.borrow().keys().map(|k| Value::Str(k.as_str().into())).collect(),
        Value::Str(s) => s.chars().map(|c| Value::Str(c.to_string().into())).collect(),
        other => return err("TypeError", format!("'{}' object is not iterable", other.type_name())),
    })
}
