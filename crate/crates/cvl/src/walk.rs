//! Structural traversal of values, including closure environments and
//! captured continuations, in one fixed order: pair car before cdr,
//! environment entries in order, capsule continuation before closure,
//! continuation frames from innermost outwards with fields in declaration
//! order.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::ad::Num;
use crate::cps::{Frame, FrameKind, K};
use crate::error::EvalResult;
use crate::value::{Capsule, Closure, Env, Kont, Value};

fn rc_addr<T: ?Sized>(r: &Rc<T>) -> usize {
    Rc::as_ptr(r) as *const u8 as usize
}

/// Distinct numeric nodes in first-occurrence order.
pub fn distinct_nums(v: &Value) -> Vec<Num> {
    let mut w = Visit::default();
    w.value(v);
    w.out
}

/// Number of numeric leaf positions when shared structure is expanded.
pub fn count_nums(v: &Value) -> usize {
    let mut n = 0;
    let _ = map_tree(v, &mut |x: &Num| {
        n += 1;
        Ok(x.clone())
    });
    n
}

#[derive(Default)]
struct Visit {
    nums: HashSet<usize>,
    nodes: HashSet<usize>,
    out: Vec<Num>,
}

impl Visit {
    fn value(&mut self, v: &Value) {
        let mut cur = v;
        loop {
            match cur {
                Value::Num(n) => {
                    if self.nums.insert(n.identity()) {
                        self.out.push(n.clone());
                    }
                    return;
                }
                Value::Pair(p) => {
                    if !self.nodes.insert(rc_addr(p)) {
                        return;
                    }
                    self.value(&p.0);
                    cur = &p.1;
                }
                Value::Closure(c) => {
                    if self.nodes.insert(rc_addr(c)) {
                        self.env(&c.env);
                    }
                    return;
                }
                Value::Capsule(c) => {
                    if !self.nodes.insert(rc_addr(c)) {
                        return;
                    }
                    self.kont(&c.k);
                    cur = &c.f;
                }
                _ => return,
            }
        }
    }

    fn env(&mut self, e: &Env) {
        if self.nodes.insert(e.ptr()) {
            for (_, v) in e.entries() {
                self.value(v);
            }
        }
    }

    fn kont(&mut self, k: &Kont) {
        match k {
            Kont::Target(v) => self.value(v),
            Kont::Frames(k) => {
                let mut cur = k;
                while let Some(fr) = cur {
                    if !self.nodes.insert(rc_addr(fr)) {
                        break;
                    }
                    self.frame(&fr.kind);
                    cur = &fr.next;
                }
            }
        }
    }

    fn frame(&mut self, kind: &FrameKind) {
        match kind {
            FrameKind::AppArg { env, .. }
            | FrameKind::If { env, .. }
            | FrameKind::BinRhs { env, .. }
            | FrameKind::Tern1 { env, .. } => self.env(env),
            FrameKind::AppCall { f } => self.value(f),
            FrameKind::Bin { lhs, .. } => self.value(lhs),
            FrameKind::Tern2 { v1, env, .. } => {
                self.value(v1);
                self.env(env);
            }
            FrameKind::Tern3 { v1, v2, .. } => {
                self.value(v1);
                self.value(v2);
            }
            FrameKind::Unary(_) | FrameKind::Resume => {}
        }
    }
}

/// Rebuilds `v` with every distinct numeric node replaced by `f` of it.
/// `f` is called once per distinct node, in `distinct_nums` order; shared
/// structure stays shared.
pub fn map_nums(v: &Value, f: &mut dyn FnMut(&Num) -> EvalResult<Num>) -> EvalResult<Value> {
    Mapper::new(true, f).value(v)
}

/// Like `map_nums` but expands sharing: `f` is called once per leaf
/// position.
pub fn map_tree(v: &Value, f: &mut dyn FnMut(&Num) -> EvalResult<Num>) -> EvalResult<Value> {
    Mapper::new(false, f).value(v)
}

struct Mapper<'a> {
    memo: bool,
    f: &'a mut dyn FnMut(&Num) -> EvalResult<Num>,
    nums: HashMap<usize, Num>,
    values: HashMap<usize, Value>,
    envs: HashMap<usize, Env>,
    frames: HashMap<usize, K>,
}

impl<'a> Mapper<'a> {
    fn new(memo: bool, f: &'a mut dyn FnMut(&Num) -> EvalResult<Num>) -> Self {
        Mapper {
            memo,
            f,
            nums: HashMap::new(),
            values: HashMap::new(),
            envs: HashMap::new(),
            frames: HashMap::new(),
        }
    }

    fn num(&mut self, n: &Num) -> EvalResult<Num> {
        if !self.memo {
            return (self.f)(n);
        }
        if let Some(m) = self.nums.get(&n.identity()) {
            return Ok(m.clone());
        }
        let m = (self.f)(n)?;
        self.nums.insert(n.identity(), m.clone());
        Ok(m)
    }

    fn cached(&self, addr: usize) -> Option<Value> {
        if self.memo {
            self.values.get(&addr).cloned()
        } else {
            None
        }
    }

    fn remember(&mut self, addr: usize, v: &Value) {
        if self.memo {
            self.values.insert(addr, v.clone());
        }
    }

    fn value(&mut self, v: &Value) -> EvalResult<Value> {
        match v {
            Value::Num(n) => Ok(Value::Num(self.num(n)?)),
            Value::Pair(_) => self.list(v),
            Value::Closure(c) => {
                let addr = rc_addr(c);
                if let Some(m) = self.cached(addr) {
                    return Ok(m);
                }
                let env = self.env(&c.env)?;
                let m = Value::Closure(Rc::new(Closure {
                    lam: c.lam.clone(),
                    env,
                }));
                self.remember(addr, &m);
                Ok(m)
            }
            Value::Capsule(c) => {
                let addr = rc_addr(c);
                if let Some(m) = self.cached(addr) {
                    return Ok(m);
                }
                let k = self.kont(&c.k)?;
                let f = self.value(&c.f)?;
                let m = Value::Capsule(Rc::new(Capsule { k, f }));
                self.remember(addr, &m);
                Ok(m)
            }
            _ => Ok(v.clone()),
        }
    }

    // Pair chains are handled iteratively along the cdr.
    fn list(&mut self, v: &Value) -> EvalResult<Value> {
        let mut spine = Vec::new();
        let mut cur = v;
        let tail = loop {
            match cur {
                Value::Pair(p) => {
                    if let Some(m) = self.cached(rc_addr(p)) {
                        break m;
                    }
                    let car = self.value(&p.0)?;
                    spine.push((rc_addr(p), car));
                    cur = &p.1;
                }
                other => break self.value(other)?,
            }
        };
        let mut acc = tail;
        while let Some((addr, car)) = spine.pop() {
            acc = Value::cons(car, acc);
            self.remember(addr, &acc);
        }
        Ok(acc)
    }

    fn env(&mut self, e: &Env) -> EvalResult<Env> {
        if e.is_empty() {
            return Ok(e.clone());
        }
        if self.memo {
            if let Some(m) = self.envs.get(&e.ptr()) {
                return Ok(m.clone());
            }
        }
        let mut entries = Vec::with_capacity(e.len());
        for (s, v) in e.entries() {
            entries.push((*s, self.value(v)?));
        }
        let m = Env::from_entries(entries);
        if self.memo {
            self.envs.insert(e.ptr(), m.clone());
        }
        Ok(m)
    }

    fn kont(&mut self, k: &Kont) -> EvalResult<Kont> {
        match k {
            Kont::Target(v) => Ok(Kont::Target(self.value(v)?)),
            Kont::Frames(k) => Ok(Kont::Frames(self.frames(k)?)),
        }
    }

    fn frames(&mut self, k: &K) -> EvalResult<K> {
        let mut rebuilt = Vec::new();
        let mut cur = k;
        let bottom: K = loop {
            match cur {
                None => break None,
                Some(fr) => {
                    let addr = rc_addr(fr);
                    if self.memo {
                        if let Some(m) = self.frames.get(&addr) {
                            break m.clone();
                        }
                    }
                    let kind = self.frame(&fr.kind)?;
                    rebuilt.push((addr, kind));
                    cur = &fr.next;
                }
            }
        };
        let mut acc = bottom;
        while let Some((addr, kind)) = rebuilt.pop() {
            acc = Some(Rc::new(Frame { kind, next: acc }));
            if self.memo {
                self.frames.insert(addr, acc.clone());
            }
        }
        Ok(acc)
    }

    fn frame(&mut self, kind: &FrameKind) -> EvalResult<FrameKind> {
        Ok(match kind {
            FrameKind::AppArg { env, arg } => FrameKind::AppArg {
                env: self.env(env)?,
                arg: arg.clone(),
            },
            FrameKind::AppCall { f } => FrameKind::AppCall { f: self.value(f)? },
            FrameKind::If { env, then_, else_ } => FrameKind::If {
                env: self.env(env)?,
                then_: then_.clone(),
                else_: else_.clone(),
            },
            FrameKind::Unary(op) => FrameKind::Unary(*op),
            FrameKind::BinRhs { op, env, rhs } => FrameKind::BinRhs {
                op: *op,
                env: self.env(env)?,
                rhs: rhs.clone(),
            },
            FrameKind::Bin { op, lhs } => FrameKind::Bin {
                op: *op,
                lhs: self.value(lhs)?,
            },
            FrameKind::Tern1 { op, env, e2, e3 } => FrameKind::Tern1 {
                op: *op,
                env: self.env(env)?,
                e2: e2.clone(),
                e3: e3.clone(),
            },
            FrameKind::Tern2 { op, v1, env, e3 } => {
                let v1 = self.value(v1)?;
                FrameKind::Tern2 {
                    op: *op,
                    v1,
                    env: self.env(env)?,
                    e3: e3.clone(),
                }
            }
            FrameKind::Tern3 { op, v1, v2 } => {
                let v1 = self.value(v1)?;
                FrameKind::Tern3 {
                    op: *op,
                    v1,
                    v2: self.value(v2)?,
                }
            }
            FrameKind::Resume => FrameKind::Resume,
        })
    }
}
