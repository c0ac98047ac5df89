//! Numeric tower for nested forward and reverse mode.
//!
//! Every numeric value is a shared node. Node identity matters: the reverse
//! operator maps each distinct input node to one tape cell, which keeps
//! cotangent accumulation order the same whether or not a computation is
//! split into checkpointed pieces.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::ast::UnOp;
use crate::ctx::Ctx;
use crate::error::{EvalError, EvalResult};
use crate::value::Value;
use crate::walk;

#[derive(Clone)]
pub struct Num(Rc<NumNode>);

pub enum NumNode {
    Real(f64),
    Dual(Dual),
    Tape(TapeCell),
}

pub struct Dual {
    pub level: u32,
    pub primal: Num,
    pub tangent: Num,
}

pub struct TapeCell {
    pub level: u32,
    pub primal: Num,
    pub parents: Parents,
    pub cot: RefCell<Num>,
}

/// Parent cells with the local partial derivative of this cell w.r.t. each.
pub enum Parents {
    Leaf,
    One(Num, Num),
    Two(Num, Num, Num, Num),
}

thread_local! {
    static ZERO: Num = Num(Rc::new(NumNode::Real(0.0)));
    static ONE: Num = Num(Rc::new(NumNode::Real(1.0)));
    static MINUS_ONE: Num = Num(Rc::new(NumNode::Real(-1.0)));
}

impl Num {
    pub fn real(x: f64) -> Num {
        Num(Rc::new(NumNode::Real(x)))
    }

    pub fn zero() -> Num {
        ZERO.with(|z| z.clone())
    }

    fn one() -> Num {
        ONE.with(|z| z.clone())
    }

    fn minus_one() -> Num {
        MINUS_ONE.with(|z| z.clone())
    }

    pub fn node(&self) -> &NumNode {
        &self.0
    }

    pub fn level(&self) -> u32 {
        match &*self.0 {
            NumNode::Real(_) => 0,
            NumNode::Dual(d) => d.level,
            NumNode::Tape(t) => t.level,
        }
    }

    /// Innermost real.
    pub fn re(&self) -> f64 {
        let mut n = self;
        loop {
            match &*n.0 {
                NumNode::Real(x) => return *x,
                NumNode::Dual(d) => n = &d.primal,
                NumNode::Tape(t) => n = &t.primal,
            }
        }
    }

    pub fn identity(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Num) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub fn as_tape(&self) -> Option<&TapeCell> {
        match &*self.0 {
            NumNode::Tape(t) => Some(t),
            _ => None,
        }
    }

    fn is_one(&self) -> bool {
        ONE.with(|o| o.ptr_eq(self))
    }
}

struct Registry {
    level: u32,
    cells: Vec<Num>,
}

/// Perturbation level counter and tape registries of active reverse
/// invocations.
pub struct AdState {
    epsilon: u32,
    registries: Vec<Registry>,
    live: usize,
    peak: usize,
    limit: Option<usize>,
}

impl Default for AdState {
    fn default() -> Self {
        AdState::new()
    }
}

impl AdState {
    pub fn new() -> AdState {
        AdState {
            epsilon: 0,
            registries: Vec::new(),
            live: 0,
            peak: 0,
            limit: None,
        }
    }

    pub fn epsilon(&self) -> u32 {
        self.epsilon
    }

    /// Live tape cells across all active registries.
    pub fn live_cells(&self) -> usize {
        self.live
    }

    pub fn peak_cells(&self) -> usize {
        self.peak
    }

    pub fn reset_peak(&mut self) {
        self.peak = self.live;
    }

    pub fn set_cell_limit(&mut self, limit: Option<usize>) {
        self.limit = limit;
    }

    fn new_cell(&mut self, level: u32, primal: Num, parents: Parents) -> EvalResult<Num> {
        if let Some(limit) = self.limit {
            if self.live >= limit {
                return Err(EvalError::TapeLimit(limit));
            }
        }
        let cell = Num(Rc::new(NumNode::Tape(TapeCell {
            level,
            primal,
            parents,
            cot: RefCell::new(Num::zero()),
        })));
        let reg = self
            .registries
            .iter_mut()
            .rev()
            .find(|r| r.level == level)
            .expect("tape cell created outside its reverse operator");
        reg.cells.push(cell.clone());
        self.live += 1;
        self.peak = self.peak.max(self.live);
        Ok(cell)
    }
}

// ---- lifted arithmetic ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

impl Arith {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Arith::Add => a + b,
            Arith::Sub => a - b,
            Arith::Mul => a * b,
            Arith::Div => a / b,
        }
    }
}

enum Top<'a> {
    Dual(Option<&'a Num>, Option<&'a Num>),
    Tape(bool, bool),
}

/// Splits an operand at level `e` into its primal and, if it lives at that
/// level, its tangent (duals) or a marker that it is a tape cell.
fn split(a: &Num, e: u32) -> (Num, Option<&Num>, bool) {
    match &*a.0 {
        NumNode::Dual(d) if d.level == e => (d.primal.clone(), Some(&d.tangent), false),
        NumNode::Tape(t) if t.level == e => (t.primal.clone(), None, true),
        _ => (a.clone(), None, false),
    }
}

pub fn arith(st: &mut AdState, op: Arith, a: &Num, b: &Num) -> EvalResult<Num> {
    let e = a.level().max(b.level());
    if e == 0 {
        return Ok(Num::real(op.apply(a.re(), b.re())));
    }
    let (ap, at, a_tape) = split(a, e);
    let (bp, bt, b_tape) = split(b, e);
    let top = if a_tape || b_tape {
        Top::Tape(a_tape, b_tape)
    } else {
        Top::Dual(at, bt)
    };
    let p = arith(st, op, &ap, &bp)?;
    match top {
        Top::Dual(at, bt) => {
            let tangent = match op {
                Arith::Add => match (at, bt) {
                    (Some(x), Some(y)) => arith(st, Arith::Add, x, y)?,
                    (Some(x), None) => x.clone(),
                    (None, Some(y)) => y.clone(),
                    (None, None) => unreachable!(),
                },
                Arith::Sub => match (at, bt) {
                    (Some(x), Some(y)) => arith(st, Arith::Sub, x, y)?,
                    (Some(x), None) => x.clone(),
                    (None, Some(y)) => neg(st, y)?,
                    (None, None) => unreachable!(),
                },
                Arith::Mul | Arith::Div => {
                    let (da, db) = partials(st, op, &ap, &bp, &p)?;
                    let ta = match at {
                        Some(x) => Some(arith(st, Arith::Mul, &da, x)?),
                        None => None,
                    };
                    let tb = match bt {
                        Some(y) => Some(arith(st, Arith::Mul, &db, y)?),
                        None => None,
                    };
                    match (ta, tb) {
                        (Some(x), Some(y)) => arith(st, Arith::Add, &x, &y)?,
                        (Some(x), None) => x,
                        (None, Some(y)) => y,
                        (None, None) => unreachable!(),
                    }
                }
            };
            Ok(Num(Rc::new(NumNode::Dual(Dual {
                level: e,
                primal: p,
                tangent,
            }))))
        }
        Top::Tape(a_tape, b_tape) => {
            let (da, db) = partials(st, op, &ap, &bp, &p)?;
            let parents = match (a_tape, b_tape) {
                (true, true) => Parents::Two(a.clone(), da, b.clone(), db),
                (true, false) => Parents::One(a.clone(), da),
                (false, true) => Parents::One(b.clone(), db),
                (false, false) => unreachable!(),
            };
            st.new_cell(e, p, parents)
        }
    }
}

fn partials(st: &mut AdState, op: Arith, a: &Num, b: &Num, p: &Num) -> EvalResult<(Num, Num)> {
    Ok(match op {
        Arith::Add => (Num::one(), Num::one()),
        Arith::Sub => (Num::one(), Num::minus_one()),
        Arith::Mul => (b.clone(), a.clone()),
        Arith::Div => {
            let da = arith(st, Arith::Div, &Num::one(), b)?;
            let q = arith(st, Arith::Div, p, b)?;
            (da, neg(st, &q)?)
        }
    })
}

pub fn add(st: &mut AdState, a: &Num, b: &Num) -> EvalResult<Num> {
    arith(st, Arith::Add, a, b)
}

pub fn mul(st: &mut AdState, a: &Num, b: &Num) -> EvalResult<Num> {
    if a.is_one() {
        return Ok(b.clone());
    }
    arith(st, Arith::Mul, a, b)
}

pub fn neg(st: &mut AdState, a: &Num) -> EvalResult<Num> {
    unary(st, UnOp::Neg, a)
}

/// Numeric unary builtins. `floor` yields a constant.
pub fn unary(st: &mut AdState, op: UnOp, a: &Num) -> EvalResult<Num> {
    let e = a.level();
    if e == 0 || op == UnOp::Floor {
        let x = a.re();
        let y = match op {
            UnOp::Neg => -x,
            UnOp::Sqrt => x.sqrt(),
            UnOp::Sin => x.sin(),
            UnOp::Cos => x.cos(),
            UnOp::Exp => x.exp(),
            UnOp::Log => x.ln(),
            UnOp::Atan => x.atan(),
            UnOp::Floor => x.floor(),
            _ => unreachable!("non-numeric unary op"),
        };
        return Ok(Num::real(y));
    }
    let (ap, at, is_tape) = split(a, e);
    let at = at.cloned();
    let p = unary(st, op, &ap)?;
    let d = match op {
        UnOp::Neg => Num::minus_one(),
        UnOp::Sqrt => {
            let two_p = arith(st, Arith::Add, &p, &p)?;
            arith(st, Arith::Div, &Num::one(), &two_p)?
        }
        UnOp::Sin => unary(st, UnOp::Cos, &ap)?,
        UnOp::Cos => {
            let s = unary(st, UnOp::Sin, &ap)?;
            neg(st, &s)?
        }
        UnOp::Exp => p.clone(),
        UnOp::Log => arith(st, Arith::Div, &Num::one(), &ap)?,
        UnOp::Atan => {
            let sq = arith(st, Arith::Mul, &ap, &ap)?;
            let den = arith(st, Arith::Add, &Num::one(), &sq)?;
            arith(st, Arith::Div, &Num::one(), &den)?
        }
        _ => unreachable!(),
    };
    if is_tape {
        st.new_cell(e, p, Parents::One(a.clone(), d))
    } else {
        let at = at.expect("dual operand");
        let tangent = if op == UnOp::Neg {
            unary(st, UnOp::Neg, &at)?
        } else {
            arith(st, Arith::Mul, &d, &at)?
        };
        Ok(Num(Rc::new(NumNode::Dual(Dual {
            level: e,
            primal: p,
            tangent,
        }))))
    }
}

// ---- forward mode ----

/// Pairs each numeric leaf of `x` with the matching leaf of `dx` as a dual
/// number at `level`.
pub fn bundle(level: u32, x: &Value, dx: &Value) -> EvalResult<Value> {
    match (x, dx) {
        (Value::Num(p), Value::Num(t)) => Ok(Value::Num(Num(Rc::new(NumNode::Dual(Dual {
            level,
            primal: p.clone(),
            tangent: t.clone(),
        }))))),
        (Value::Pair(a), Value::Pair(b)) => {
            let car = bundle(level, &a.0, &b.0)?;
            let cdr = bundle(level, &a.1, &b.1)?;
            Ok(Value::cons(car, cdr))
        }
        (Value::Empty, Value::Empty) => Ok(Value::Empty),
        (Value::Bool(p), Value::Bool(q)) if p == q => Ok(x.clone()),
        _ => {
            if !x.is_ground() {
                return Err(EvalError::NonGround("j* input"));
            }
            if !dx.is_ground() {
                return Err(EvalError::NonGround("j* tangent"));
            }
            Err(EvalError::ShapeMismatch(format!("primal {x} and tangent {dx}")))
        }
    }
}

/// Splits level-`level` duals into primal and tangent. Lower-level leaves
/// pass through with a zero tangent.
pub fn unbundle(level: u32, y: &Value) -> EvalResult<(Value, Value)> {
    match y {
        Value::Num(n) => {
            let l = n.level();
            if l > level {
                return Err(EvalError::Level {
                    expected: level,
                    found: l,
                });
            }
            match &*n.0 {
                NumNode::Dual(d) if d.level == level => {
                    Ok((Value::Num(d.primal.clone()), Value::Num(d.tangent.clone())))
                }
                _ => Ok((y.clone(), Value::Num(Num::zero()))),
            }
        }
        Value::Pair(p) => {
            let (a, da) = unbundle(level, &p.0)?;
            let (b, db) = unbundle(level, &p.1)?;
            Ok((Value::cons(a, b), Value::cons(da, db)))
        }
        Value::Empty | Value::Bool(_) => Ok((y.clone(), y.clone())),
        _ => Err(EvalError::NonGround("j* output")),
    }
}

pub type Apply<'a> = dyn FnMut(&mut Ctx, Value, Value) -> EvalResult<Value> + 'a;

/// `(y, ẏ)` with `ẏ = J f(x) · ẋ`.
pub fn forward_j(
    ctx: &mut Ctx,
    apply: &mut Apply<'_>,
    f: Value,
    x: &Value,
    dx: &Value,
) -> EvalResult<(Value, Value)> {
    ctx.ad.epsilon += 1;
    let level = ctx.ad.epsilon;
    let r = bundle(level, x, dx)
        .and_then(|xd| apply(ctx, f, xd))
        .and_then(|yd| unbundle(level, &yd));
    ctx.ad.epsilon -= 1;
    r
}

// ---- reverse mode ----

/// Cotangent for the output of a reverse invocation.
pub enum Seed<'a> {
    /// Ground cotangent congruent with the output; duplicated output cells
    /// receive one contribution per position.
    Tree(&'a Value),
    /// One cotangent per distinct numeric node of the output, in traversal
    /// order. Used between checkpointing stages where outputs are capsules.
    Flat(&'a [Num]),
}

pub struct Reverse {
    /// Primal output, if requested.
    pub y: Value,
    /// Cotangent per distinct numeric node of the input, traversal order.
    pub xbar: Vec<Num>,
}

/// Copies later occurrences of repeated numeric nodes so that every leaf
/// position holds its own node.
pub fn unshare(ctx: &mut Ctx, x: &Value) -> EvalResult<Value> {
    let mut seen = std::collections::HashSet::new();
    walk::map_tree(x, &mut |n: &Num| {
        if seen.insert(n.identity()) {
            return Ok(n.clone());
        }
        match &*n.0 {
            NumNode::Real(v) => Ok(Num::real(*v)),
            NumNode::Dual(d) => Ok(Num(Rc::new(NumNode::Dual(Dual {
                level: d.level,
                primal: d.primal.clone(),
                tangent: d.tangent.clone(),
            })))),
            NumNode::Tape(t) => {
                let level = t.level;
                let primal = t.primal.clone();
                ctx.ad.new_cell(level, primal, Parents::One(n.clone(), Num::one()))
            }
        }
    })
}

/// Core of the reverse operator. Input nodes become fresh tape cells (one per
/// distinct node), `apply` runs the taping sweep, outputs are seeded and the
/// registry is swept in reverse creation order.
pub fn reverse_core(
    ctx: &mut Ctx,
    apply: &mut Apply<'_>,
    f: Value,
    x: &Value,
    seed: Seed<'_>,
    want_y: bool,
) -> EvalResult<Reverse> {
    ctx.ad.epsilon += 1;
    let level = ctx.ad.epsilon;
    ctx.ad.registries.push(Registry {
        level,
        cells: Vec::new(),
    });
    let r = reverse_body(ctx, apply, level, f, x, seed, want_y);
    let reg = ctx.ad.registries.pop().expect("registry stack");
    ctx.ad.live -= reg.cells.len();
    drop_cells(reg.cells);
    ctx.ad.epsilon -= 1;
    r
}

fn reverse_body(
    ctx: &mut Ctx,
    apply: &mut Apply<'_>,
    level: u32,
    f: Value,
    x: &Value,
    seed: Seed<'_>,
    want_y: bool,
) -> EvalResult<Reverse> {
    let mut inputs = Vec::new();
    let xt = walk::map_nums(x, &mut |n: &Num| {
        let c = ctx.ad.new_cell(level, n.clone(), Parents::Leaf)?;
        inputs.push(c.clone());
        Ok(c)
    })?;
    let yt = apply(ctx, f, xt)?;
    match seed {
        Seed::Tree(ybar) => seed_tree(ctx, level, &yt, ybar)?,
        Seed::Flat(ybar) => {
            let outs = walk::distinct_nums(&yt);
            if outs.len() != ybar.len() {
                return Err(EvalError::ShapeMismatch(format!(
                    "output has {} numeric nodes, cotangent has {}",
                    outs.len(),
                    ybar.len()
                )));
            }
            for (o, g) in outs.iter().zip(ybar) {
                accumulate(ctx, level, o, g)?;
            }
        }
    }
    sweep(ctx, level)?;
    let xbar = inputs
        .iter()
        .map(|c| c.as_tape().expect("input cell").cot.borrow().clone())
        .collect();
    let y = if want_y {
        strip(&yt, level)?
    } else {
        Value::Bottom
    };
    Ok(Reverse { y, xbar })
}

fn accumulate(ctx: &mut Ctx, level: u32, out: &Num, g: &Num) -> EvalResult<()> {
    if let Some(t) = out.as_tape() {
        if t.level == level {
            let cur = t.cot.borrow().clone();
            let next = add(&mut ctx.ad, &cur, g)?;
            *t.cot.borrow_mut() = next;
        }
    }
    Ok(())
}

fn seed_tree(ctx: &mut Ctx, level: u32, y: &Value, ybar: &Value) -> EvalResult<()> {
    match (y, ybar) {
        (Value::Num(o), Value::Num(g)) => accumulate(ctx, level, o, g),
        (Value::Pair(p), Value::Pair(q)) => {
            seed_tree(ctx, level, &p.0, &q.0)?;
            seed_tree(ctx, level, &p.1, &q.1)
        }
        (Value::Empty, Value::Empty) => Ok(()),
        (Value::Bool(a), Value::Bool(b)) if a == b => Ok(()),
        _ => {
            if !y.is_ground() {
                Err(EvalError::NonGround("*j output"))
            } else {
                Err(EvalError::ShapeMismatch(format!("output {y} and cotangent {ybar}")))
            }
        }
    }
}

fn sweep(ctx: &mut Ctx, level: u32) -> EvalResult<()> {
    let idx = ctx
        .ad
        .registries
        .iter()
        .rposition(|r| r.level == level)
        .expect("registry for sweep");
    let n = ctx.ad.registries[idx].cells.len();
    for i in (0..n).rev() {
        let cell = ctx.ad.registries[idx].cells[i].clone();
        let t = cell.as_tape().expect("tape cell");
        let g = t.cot.borrow().clone();
        match &t.parents {
            Parents::Leaf => {}
            Parents::One(p, d) => push_back(ctx, p, d, &g)?,
            Parents::Two(p, dp, q, dq) => {
                push_back(ctx, p, dp, &g)?;
                push_back(ctx, q, dq, &g)?;
            }
        }
    }
    Ok(())
}

fn push_back(ctx: &mut Ctx, parent: &Num, partial: &Num, g: &Num) -> EvalResult<()> {
    let t = parent.as_tape().expect("parent is a tape cell");
    let contrib = mul(&mut ctx.ad, partial, g)?;
    let cur = t.cot.borrow().clone();
    let next = add(&mut ctx.ad, &cur, &contrib)?;
    *t.cot.borrow_mut() = next;
    Ok(())
}

/// Replaces level-`level` tape cells by their primals.
fn strip(y: &Value, level: u32) -> EvalResult<Value> {
    walk::map_nums(y, &mut |n: &Num| match &*n.0 {
        NumNode::Tape(t) if t.level == level => Ok(t.primal.clone()),
        _ => {
            if n.level() > level {
                Err(EvalError::Level {
                    expected: level,
                    found: n.level(),
                })
            } else {
                Ok(n.clone())
            }
        }
    })
}

/// Tape cells link to their parents; drop the registry back to front so the
/// chain is released without deep recursion.
fn drop_cells(cells: Vec<Num>) {
    let mut cells = cells;
    while let Some(c) = cells.pop() {
        drop(c);
    }
}

/// User-level reverse operator: ground input and cotangent, returns
/// `(y, x̄)` with `x̄` shaped like `x`.
pub fn reverse_j(
    ctx: &mut Ctx,
    apply: &mut Apply<'_>,
    f: Value,
    x: &Value,
    ybar: &Value,
) -> EvalResult<(Value, Value)> {
    if !ybar.is_ground() {
        return Err(EvalError::NonGround("*j cotangent"));
    }
    let x = unshare(ctx, x)?;
    let r = reverse_core(ctx, apply, f, &x, Seed::Tree(ybar), true)?;
    let xbar = rebuild_cotangent(&x, &r.xbar)?;
    Ok((r.y, xbar))
}

/// Places per-node cotangents back into the shape of `x`.
pub fn rebuild_cotangent(x: &Value, xbar: &[Num]) -> EvalResult<Value> {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    for (i, n) in walk::distinct_nums(x).iter().enumerate() {
        ids.insert(n.identity(), i);
    }
    walk::map_nums(x, &mut |n: &Num| Ok(xbar[ids[&n.identity()]].clone()))
}
