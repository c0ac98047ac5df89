//! CPS conversion that threads a continuation, a step count and a step
//! limit through every clause, and the direct-style evaluator extended to run
//! the converted code.
//!
//! Every clause site becomes a limit check over the clause body. The body
//! reads the continuation, count and limit from `#k`, `#n` and `#l`, which
//! the check binds; a count expression passed down (`n + 1`) is thus
//! evaluated once and the body is never duplicated.

use std::cell::Cell;
use std::rc::Rc;

use crate::ad;
use crate::ast::{BinOp, Expr, ExprRef, Lambda, TernOp};
use crate::ctx::Ctx;
use crate::drivers;
use crate::error::{EvalError, EvalResult};
use crate::interrupt::{install_defs, ran_to_completion, Pipeline};
use crate::prim;
use crate::symbol::{reserved, Symbol};
use crate::syntax::Program;
use crate::value::{Capsule, Env, Kont, Limit, Value};

fn rc(e: Expr) -> ExprRef {
    Rc::new(e)
}

fn var(s: Symbol) -> ExprRef {
    rc(Expr::Var(s))
}

fn succ(e: ExprRef) -> ExprRef {
    rc(Expr::Succ(e))
}

fn lambda3(x: Symbol, body: ExprRef) -> ExprRef {
    let r = reserved();
    rc(Expr::Lambda(Lambda::new(vec![r.n, r.l, x], body)))
}

fn lambda4(x: Symbol, body: ExprRef) -> Rc<Lambda> {
    let r = reserved();
    Lambda::new(vec![r.k, r.n, r.l, x], body)
}

/// `k n l v` with the enclosing clause's names.
fn call_k(n: ExprRef, v: ExprRef) -> ExprRef {
    let r = reserved();
    rc(Expr::AppK(var(r.k), vec![n, var(r.l), v].into_boxed_slice()))
}

thread_local! {
    static GENSYM: Cell<u32> = const { Cell::new(0) };
}

fn fresh(stem: &str) -> Symbol {
    let i = GENSYM.with(|g| {
        let i = g.get();
        g.set(i + 1);
        i
    });
    Symbol::intern(&format!("#{stem}{i}"))
}

/// Converts a user expression for continuation `k`, count `n` and limit `l`
/// (all expressions).
pub fn convert(e: &ExprRef, k: ExprRef, n: ExprRef, l: ExprRef) -> EvalResult<ExprRef> {
    let r = reserved();
    let body = clause(e)?;
    Ok(rc(Expr::LimitCheck {
        k,
        n,
        l,
        lam: Lambda::new(vec![r.k, r.n, r.l, r.ignored], body),
    }))
}

/// Converts with the enclosing clause's `#k`, `#n` and `#l`.
fn convert_here(e: &ExprRef, n: ExprRef) -> EvalResult<ExprRef> {
    let r = reserved();
    convert(e, var(r.k), n, var(r.l))
}

/// Evaluates `args` left to right, each under the continuation built so far,
/// then runs `last` with the values bound to fresh names. The first argument
/// is evaluated with count `n + 1`, accounting for the clause itself.
fn sequence(args: &[&ExprRef], last: impl FnOnce(&[Symbol]) -> ExprRef) -> EvalResult<ExprRef> {
    let r = reserved();
    let names: Vec<Symbol> = (0..args.len()).map(|_| fresh("v")).collect();
    let mut body = last(&names);
    for i in (0..args.len()).rev() {
        let kont = lambda3(names[i], body);
        let n = if i == 0 { succ(var(r.n)) } else { var(r.n) };
        body = convert(args[i], kont, n, var(r.l))?;
    }
    Ok(body)
}

fn clause(e: &ExprRef) -> EvalResult<ExprRef> {
    let r = reserved();
    Ok(match &**e {
        Expr::Const(_) | Expr::Var(_) => call_k(succ(var(r.n)), e.clone()),
        Expr::Lambda(lam) if lam.arity() == 1 => {
            let body = convert_here(&lam.body, var(r.n))?;
            let target = rc(Expr::Lambda(lambda4(lam.params[0], body)));
            call_k(succ(var(r.n)), target)
        }
        Expr::App(a, b) => sequence(&[a, b], |v| {
            rc(Expr::AppK(
                var(v[0]),
                vec![var(r.k), var(r.n), var(r.l), var(v[1])].into_boxed_slice(),
            ))
        })?,
        Expr::If(c, t, f) => {
            let t = convert_here(t, var(r.n))?;
            let f = convert_here(f, var(r.n))?;
            sequence(&[c], |v| rc(Expr::If(var(v[0]), t, f)))?
        }
        Expr::Unary(op, a) => {
            let op = *op;
            sequence(&[a], |v| call_k(var(r.n), rc(Expr::Unary(op, var(v[0])))))?
        }
        Expr::Binary(op, a, b) => {
            let op = *op;
            sequence(&[a, b], |v| {
                call_k(var(r.n), rc(Expr::Binary(op, var(v[0]), var(v[1]))))
            })?
        }
        Expr::Ternary(op, a, b, c) if *op != TernOp::Interrupt => {
            let op = *op;
            sequence(&[a, b, c], |v| {
                call_k(
                    var(r.n),
                    rc(Expr::Ternary(op, var(v[0]), var(v[1]), var(v[2]))),
                )
            })?
        }
        _ => {
            return Err(EvalError::Unsupported(format!(
                "`{e}` cannot be converted"
            )))
        }
    })
}

fn identity_k() -> ExprRef {
    let r = reserved();
    lambda3(r.v, var(r.v))
}

/// Converts a top-level expression: identity continuation, count 0, no limit.
pub fn convert_top(e: &ExprRef) -> EvalResult<ExprRef> {
    convert(
        e,
        identity_k(),
        rc(Expr::Const(Value::Count(0))),
        rc(Expr::Const(Value::Limit(Limit::Infinite))),
    )
}

// ---- extended evaluator ----

pub enum Outcome {
    Value(Value),
    Interrupted(Rc<Capsule>),
}

fn arity_error(expected: usize, got: usize) -> EvalError {
    EvalError::Arity { expected, got }
}

/// Evaluates a converted expression. Tail positions (applications of
/// continuations and targets, branches, limit checks) loop.
pub fn eval_ext(ctx: &mut Ctx, env: &Env, e: &ExprRef) -> EvalResult<Outcome> {
    let mut env = env.clone();
    let mut e = e.clone();
    loop {
        let next = match &*e {
            Expr::AppK(f, args) => {
                let fv = atom(ctx, &env, f)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args.iter() {
                    vals.push(atom(ctx, &env, a)?);
                }
                let (new_env, body) = bind(fv, vals)?;
                env = new_env;
                body
            }
            Expr::If(c, t, f) => {
                if prim::truthy(&atom(ctx, &env, c)?) {
                    t.clone()
                } else {
                    f.clone()
                }
            }
            Expr::LimitCheck { k, n, l, lam } => {
                let kv = atom(ctx, &env, k)?;
                let nv = atom(ctx, &env, n)?;
                let lv = atom(ctx, &env, l)?;
                let (Value::Count(nc), Value::Limit(lc)) = (&nv, &lv) else {
                    return Err(EvalError::Type {
                        op: "limit check",
                        expected: "a count and a limit",
                        found: nv.type_name(),
                    });
                };
                if lc.reached(*nc) {
                    let f = Value::closure(lam.clone(), env.clone());
                    return Ok(Outcome::Interrupted(Rc::new(Capsule {
                        k: Kont::Target(kv),
                        f,
                    })));
                }
                let r = reserved();
                env = Env::from_entries(
                    env.entries()
                        .iter()
                        .cloned()
                        .chain([(r.k, kv), (r.n, nv), (r.l, lv), (r.ignored, Value::Bottom)])
                        .collect(),
                );
                lam.body.clone()
            }
            Expr::Ternary(TernOp::Interrupt, f, x, b) => {
                let r = reserved();
                let fv = atom(ctx, &env, f)?;
                let xv = atom(ctx, &env, x)?;
                let budget = match atom(ctx, &env, b)? {
                    Value::Count(b) if b > 0 => b,
                    other => {
                        return Err(EvalError::Budget(format!(
                            "interrupt budget must be a positive count, got {other}"
                        )))
                    }
                };
                let kv = ctx.lookup(&env, r.k)?;
                let lim = match ctx.lookup(&env, r.l)? {
                    Value::Limit(l) => l,
                    other => {
                        return Err(EvalError::Type {
                            op: "interrupt",
                            expected: "a limit",
                            found: other.type_name(),
                        })
                    }
                };
                match lim {
                    Limit::Finite(lc) if budget > lc => {
                        let args = vec![kv, Value::Count(0), Value::Limit(lim), xv];
                        let (ne, body) = bind(fv, args)?;
                        return match eval_ext(ctx, &ne, &body)? {
                            Outcome::Interrupted(c) => Ok(Outcome::Interrupted(Rc::new(Capsule {
                                k: c.k.clone(),
                                f: make_i_b(c.f.clone(), budget - lc),
                            }))),
                            done => Ok(done),
                        };
                    }
                    _ => {
                        let args = vec![kv, Value::Count(0), Value::Limit(Limit::Finite(budget)), xv];
                        let (ne, body) = bind(fv, args)?;
                        env = ne;
                        body
                    }
                }
            }
            Expr::Resume(z) => {
                let r = reserved();
                let zv = atom(ctx, &env, z)?;
                let lv = ctx.lookup(&env, r.l)?;
                match zv {
                    Value::Capsule(c) => {
                        let Kont::Target(kv) = &c.k else {
                            return Err(EvalError::Type {
                                op: "resume",
                                expected: "a capsule of converted code",
                                found: "an interpreter capsule",
                            });
                        };
                        let args = vec![kv.clone(), Value::Count(0), lv, Value::Bottom];
                        let (ne, body) = bind(c.f.clone(), args)?;
                        env = ne;
                        body
                    }
                    other => {
                        return Err(EvalError::Type {
                            op: "resume",
                            expected: "a capsule",
                            found: other.type_name(),
                        })
                    }
                }
            }
            _ => return Ok(Outcome::Value(atom(ctx, &env, &e)?)),
        };
        e = next;
    }
}

/// Binds a continuation or target closure to its arguments.
fn bind(f: Value, args: Vec<Value>) -> EvalResult<(Env, ExprRef)> {
    match f {
        Value::Closure(c) => {
            if c.lam.arity() != args.len() {
                return Err(arity_error(c.lam.arity(), args.len()));
            }
            let mut entries = c.env.entries().to_vec();
            entries.extend(c.lam.params.iter().copied().zip(args));
            Ok((Env::from_entries(entries), c.lam.body.clone()))
        }
        other => Err(EvalError::NotAFunction(other.type_name())),
    }
}

/// Expressions in argument position: constants, variables, closures,
/// successors and primitive operations on those.
fn atom(ctx: &mut Ctx, env: &Env, e: &ExprRef) -> EvalResult<Value> {
    match &**e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Var(s) => ctx.lookup(env, *s),
        Expr::Lambda(lam) => Ok(Value::closure(lam.clone(), env.restrict(&lam.fv))),
        Expr::Succ(a) => match atom(ctx, env, a)? {
            Value::Count(n) => Ok(Value::Count(n + 1)),
            other => Err(EvalError::Type {
                op: "1+",
                expected: "a count",
                found: other.type_name(),
            }),
        },
        Expr::Unary(op, a) => {
            let v = atom(ctx, env, a)?;
            prim::unary(&mut ctx.ad, *op, v)
        }
        Expr::Binary(op, a, b) => {
            let x = atom(ctx, env, a)?;
            let y = atom(ctx, env, b)?;
            prim::binary(&mut ctx.ad, *op, x, y)
        }
        Expr::Ternary(op, a, b, c) => {
            let f = atom(ctx, env, a)?;
            let x = atom(ctx, env, b)?;
            let d = atom(ctx, env, c)?;
            let (y, g) = match op {
                TernOp::ForwardJ => ad::forward_j(ctx, &mut portal, f, &x, &d)?,
                TernOp::ReverseJ => ad::reverse_j(ctx, &mut portal, f, &x, &d)?,
                TernOp::CheckpointJ => drivers::checkpoint_j(ctx, &PipelineB, f, &x, &d)?,
                TernOp::Interrupt => {
                    return Err(EvalError::Unsupported(
                        "interrupt outside tail position".into(),
                    ))
                }
            };
            Ok(Value::cons(y, g))
        }
        _ => Err(EvalError::Unsupported(format!(
            "`{e}` in argument position of converted code"
        ))),
    }
}

fn run_target(ctx: &mut Ctx, f: Value, k: Value, l: Limit, x: Value) -> EvalResult<Outcome> {
    let (env, body) = bind(f, vec![k, Value::Count(0), Value::Limit(l), x])?;
    eval_ext(ctx, &env, &body)
}

/// Continuation for target calls made from outside converted code. It
/// returns the final count with the value, so a resumed capsule (whose
/// continuation chain ends here) reports its steps like a fresh call.
fn top_k() -> Value {
    let r = reserved();
    let body = rc(Expr::Binary(BinOp::Cons, var(r.n), var(r.v)));
    Value::closure(Lambda::new(vec![r.n, r.l, r.v], body), Env::empty())
}

fn split_top(v: Value) -> EvalResult<(u64, Value)> {
    if let Value::Pair(p) = &v {
        if let Value::Count(n) = p.0 {
            return Ok((n, p.1.clone()));
        }
    }
    Err(EvalError::Type {
        op: "top continuation",
        expected: "a count and a value",
        found: v.type_name(),
    })
}

/// Calls a target closure from outside converted code: `Ok((steps, value))`
/// when it finishes, `Err(capsule)` when it stops at the limit.
fn call_top(ctx: &mut Ctx, f: Value, l: Limit, x: Value) -> EvalResult<Result<(u64, Value), Value>> {
    let k = TOP.with(|v| v.clone());
    match run_target(ctx, f, k, l, x)? {
        Outcome::Value(v) => split_top(v).map(Ok),
        Outcome::Interrupted(c) => Ok(Err(Value::Capsule(c))),
    }
}

/// Applies a target closure with count 0 and no limit. An escaping capsule
/// becomes an ordinary value.
pub fn portal(ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value> {
    Ok(match call_top(ctx, f, Limit::Infinite, x)? {
        Ok((_, v)) => v,
        Err(z) => z,
    })
}

thread_local! {
    static TOP: Value = top_k();
    static I_LAMBDA: Rc<Lambda> = {
        let r = reserved();
        lambda4(
            r.x,
            rc(Expr::Ternary(TernOp::Interrupt, var(r.f), var(r.x), var(r.budget))),
        )
    };
    static R_VALUE: Value = {
        let r = reserved();
        Value::closure(lambda4(r.z, rc(Expr::Resume(var(r.z)))), Env::empty())
    };
}

fn make_i_b(f: Value, l: u64) -> Value {
    let r = reserved();
    let env = Env::from_entries(vec![(r.f, f), (r.budget, Value::Count(l))]);
    Value::closure(I_LAMBDA.with(|lam| lam.clone()), env)
}

/// Converted code run by the extended direct-style evaluator.
#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineB;

impl PipelineB {
    fn eval_converted(ctx: &mut Ctx, e: &ExprRef) -> EvalResult<Value> {
        let c = convert_top(e)?;
        match eval_ext(ctx, &Env::empty(), &c)? {
            Outcome::Value(v) => Ok(v),
            Outcome::Interrupted(c) => Ok(Value::Capsule(c)),
        }
    }
}

impl Pipeline for PipelineB {
    fn name(&self) -> &'static str {
        "b"
    }

    fn install(&self, ctx: &mut Ctx, prog: &Program) -> EvalResult<()> {
        install_defs(ctx, prog, PipelineB::eval_converted)
    }

    fn eval(&self, ctx: &mut Ctx, e: &ExprRef) -> EvalResult<Value> {
        PipelineB::eval_converted(ctx, e)
    }

    fn apply(&self, ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value> {
        portal(ctx, f, x)
    }

    fn primops(&self, ctx: &mut Ctx, f: &Value, x: &Value) -> EvalResult<u64> {
        match call_top(ctx, f.clone(), Limit::Infinite, x.clone())? {
            Ok((n, _)) => Ok(n),
            Err(_) => Err(EvalError::Interrupted),
        }
    }

    fn interrupt(&self, ctx: &mut Ctx, f: &Value, x: &Value, l: u64) -> EvalResult<Value> {
        if l == 0 {
            return Err(EvalError::Budget("interrupt needs a positive step limit".into()));
        }
        match call_top(ctx, f.clone(), Limit::Finite(l), x.clone())? {
            Err(z) => Ok(z),
            Ok((n, _)) => Err(ran_to_completion(l, n)),
        }
    }

    fn make_i(&self, f: Value, l: u64) -> Value {
        make_i_b(f, l)
    }

    fn make_r(&self) -> Value {
        R_VALUE.with(|v| v.clone())
    }
}
