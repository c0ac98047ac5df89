use std::fmt;
use std::rc::Rc;

use crate::ad::{Num, NumNode};
use crate::ast::Lambda;
use crate::cps::K;
use crate::symbol::Symbol;

/// Step limit. `Infinite` is a sentinel and never compares equal to a count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    Finite(u64),
    Infinite,
}

impl Limit {
    pub fn reached(self, n: u64) -> bool {
        self == Limit::Finite(n)
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Finite(l) => write!(f, "{l}"),
            Limit::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone)]
pub enum Value {
    Num(Num),
    Bool(bool),
    Empty,
    Pair(Rc<(Value, Value)>),
    Closure(Rc<Closure>),
    Capsule(Rc<Capsule>),
    Bottom,
    /// Step counts and budgets. Not numeric leaves: they are never taped.
    Count(u64),
    Limit(Limit),
}

pub struct Closure {
    pub lam: Rc<Lambda>,
    pub env: Env,
}

/// A paused computation: the continuation and a closure to apply to ⊥.
pub struct Capsule {
    pub k: Kont,
    pub f: Value,
}

/// Continuations as the two pipelines represent them: defunctionalized frames
/// for the CPS interpreter, target closures for converted code.
#[derive(Clone)]
pub enum Kont {
    Frames(K),
    Target(Value),
}

/// Flat persistent environment; later entries shadow earlier ones.
#[derive(Clone)]
pub struct Env(Rc<[(Symbol, Value)]>);

impl Env {
    pub fn empty() -> Env {
        thread_local! {
            static EMPTY: Env = Env(Rc::from(Vec::new()));
        }
        EMPTY.with(|e| e.clone())
    }

    pub fn from_entries(entries: Vec<(Symbol, Value)>) -> Env {
        Env(Rc::from(entries))
    }

    pub fn lookup(&self, s: Symbol) -> Option<&Value> {
        self.0.iter().rev().find(|(k, _)| *k == s).map(|(_, v)| v)
    }

    pub fn extend(&self, s: Symbol, v: Value) -> Env {
        Env(self.0.iter().cloned().chain(std::iter::once((s, v))).collect())
    }

    /// Bindings for the given names that are present, in the given order.
    pub fn restrict(&self, names: &[Symbol]) -> Env {
        if names.is_empty() {
            return Env::empty();
        }
        let entries: Vec<_> = names
            .iter()
            .filter_map(|s| self.lookup(*s).map(|v| (*s, v.clone())))
            .collect();
        Env(Rc::from(entries))
    }

    pub fn entries(&self) -> &[(Symbol, Value)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn ptr(&self) -> usize {
        self.0.as_ptr() as *const u8 as usize
    }
}

impl Value {
    pub fn real(x: f64) -> Value {
        Value::Num(Num::real(x))
    }

    pub fn cons(a: Value, b: Value) -> Value {
        Value::Pair(Rc::new((a, b)))
    }

    pub fn list(items: impl IntoIterator<Item = Value>) -> Value {
        let items: Vec<Value> = items.into_iter().collect();
        items
            .into_iter()
            .rev()
            .fold(Value::Empty, |acc, v| Value::cons(v, acc))
    }

    pub fn closure(lam: Rc<Lambda>, env: Env) -> Value {
        Value::Closure(Rc::new(Closure { lam, env }))
    }

    pub fn as_num(&self) -> Option<&Num> {
        match self {
            Value::Num(n) => Some(n),
            _ => None,
        }
    }

    /// Innermost real of a numeric value.
    pub fn as_f64(&self) -> Option<f64> {
        self.as_num().map(|n| n.re())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Empty => "empty list",
            Value::Pair(_) => "pair",
            Value::Closure(_) => "procedure",
            Value::Capsule(_) => "capsule",
            Value::Bottom => "bottom",
            Value::Count(_) => "count",
            Value::Limit(_) => "limit",
        }
    }

    /// Ground values are built from reals, booleans, the empty list and pairs.
    pub fn is_ground(&self) -> bool {
        let mut stack = vec![self];
        while let Some(v) = stack.pop() {
            match v {
                Value::Num(_) | Value::Bool(_) | Value::Empty => {}
                Value::Pair(p) => {
                    stack.push(&p.0);
                    stack.push(&p.1);
                }
                _ => return false,
            }
        }
        true
    }

    /// Same pair/leaf shape, with numbers matching numbers anywhere.
    pub fn congruent(&self, other: &Value) -> bool {
        let mut stack = vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            match (a, b) {
                (Value::Num(_), Value::Num(_)) | (Value::Empty, Value::Empty) => {}
                (Value::Bool(x), Value::Bool(y)) if x == y => {}
                (Value::Pair(p), Value::Pair(q)) => {
                    stack.push((&p.0, &q.0));
                    stack.push((&p.1, &q.1));
                }
                _ => return false,
            }
        }
        true
    }

    /// Equality of ground values comparing reals by bit pattern.
    pub fn bits_eq(&self, other: &Value) -> bool {
        let mut stack = vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            match (a, b) {
                (Value::Num(x), Value::Num(y)) => {
                    if x.level() != 0 || y.level() != 0 || x.re().to_bits() != y.re().to_bits() {
                        return false;
                    }
                }
                (Value::Empty, Value::Empty) | (Value::Bottom, Value::Bottom) => {}
                (Value::Bool(x), Value::Bool(y)) if x == y => {}
                (Value::Count(x), Value::Count(y)) if x == y => {}
                (Value::Pair(p), Value::Pair(q)) => {
                    stack.push((&p.0, &q.0));
                    stack.push((&p.1, &q.1));
                }
                _ => return false,
            }
        }
        true
    }

    /// Numeric leaves of a ground value in left-to-right order.
    pub fn ground_leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(v) = stack.pop() {
            match v {
                Value::Num(n) => out.push(n.re()),
                Value::Pair(p) => {
                    stack.push(&p.1);
                    stack.push(&p.0);
                }
                _ => {}
            }
        }
        out
    }

    /// Rebuilds a ground value with its numeric leaves replaced in order.
    pub fn with_leaves(&self, leaves: &mut impl Iterator<Item = f64>) -> Value {
        match self {
            Value::Num(_) => Value::real(leaves.next().unwrap_or(0.0)),
            Value::Pair(p) => {
                let a = p.0.with_leaves(leaves);
                let b = p.1.with_leaves(leaves);
                Value::cons(a, b)
            }
            v => v.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Value {
        Value::real(x)
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, n: &Num) -> fmt::Result {
    match n.node() {
        NumNode::Real(x) => {
            if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
                write!(f, "{x:.0}")
            } else {
                write!(f, "{x}")
            }
        }
        NumNode::Dual(d) => {
            write!(f, "#<dual{} ", d.level)?;
            write_num(f, &d.primal)?;
            f.write_str(" ")?;
            write_num(f, &d.tangent)?;
            f.write_str(">")
        }
        NumNode::Tape(t) => {
            write!(f, "#<tape{} ", t.level)?;
            write_num(f, &t.primal)?;
            f.write_str(">")
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write_num(f, n),
            Value::Bool(true) => f.write_str("#t"),
            Value::Bool(false) => f.write_str("#f"),
            Value::Empty => f.write_str("()"),
            Value::Pair(p) => {
                write!(f, "({}", p.0)?;
                let mut rest = &p.1;
                loop {
                    match rest {
                        Value::Empty => break,
                        Value::Pair(q) => {
                            write!(f, " {}", q.0)?;
                            rest = &q.1;
                        }
                        other => {
                            write!(f, " . {other}")?;
                            break;
                        }
                    }
                }
                f.write_str(")")
            }
            Value::Closure(_) => f.write_str("#<procedure>"),
            Value::Capsule(_) => f.write_str("#<capsule>"),
            Value::Bottom => f.write_str("#<bottom>"),
            Value::Count(n) => write!(f, "{n}"),
            Value::Limit(l) => write!(f, "{l}"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
