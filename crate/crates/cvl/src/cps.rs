//! Step-counting CPS evaluator. Continuations are defunctionalized frames so
//! captured state stays inspectable; the evaluator is a loop over an explicit
//! machine state and only recurses on the host stack at AD and interruption
//! portals.

use std::rc::Rc;

use crate::ad;
use crate::ast::{BinOp, Expr, ExprRef, Lambda, TernOp, UnOp};
use crate::ctx::Ctx;
use crate::drivers;
use crate::error::{EvalError, EvalResult};
use crate::interrupt;
use crate::prim;
use crate::symbol::reserved;
use crate::value::{Capsule, Env, Kont, Limit, Value};

pub type K = Option<Rc<Frame>>;

pub struct Frame {
    pub kind: FrameKind,
    pub next: K,
}

impl Drop for Frame {
    // Long continuation chains would otherwise drop recursively.
    fn drop(&mut self) {
        let mut next = self.next.take();
        while let Some(rc) = next {
            match Rc::try_unwrap(rc) {
                Ok(mut fr) => next = fr.next.take(),
                Err(_) => break,
            }
        }
    }
}

pub enum FrameKind {
    /// Callee evaluated next is followed by this argument.
    AppArg { env: Env, arg: ExprRef },
    AppCall { f: Value },
    If { env: Env, then_: ExprRef, else_: ExprRef },
    Unary(UnOp),
    BinRhs { op: BinOp, env: Env, rhs: ExprRef },
    Bin { op: BinOp, lhs: Value },
    Tern1 { op: TernOp, env: Env, e2: ExprRef, e3: ExprRef },
    Tern2 { op: TernOp, v1: Value, env: Env, e3: ExprRef },
    Tern3 { op: TernOp, v1: Value, v2: Value },
    Resume,
}

fn push(kind: FrameKind, next: K) -> K {
    Some(Rc::new(Frame { kind, next }))
}

pub enum St {
    Eval(Env, ExprRef),
    Ret(Value),
    Apply(Value, Value),
}

pub enum Outcome {
    Done { value: Value, steps: u64 },
    Interrupted(Rc<Capsule>),
}

/// Runs the machine from `st` with continuation `k`, count `n` and limit `l`.
pub fn run(ctx: &mut Ctx, k: K, n: u64, l: Limit, st: St) -> EvalResult<Outcome> {
    let mut k = k;
    let mut n = n;
    let mut l = l;
    let mut st = st;
    loop {
        st = match st {
            St::Eval(env, e) => {
                if l.reached(n) {
                    let lam = Lambda::new(vec![reserved().ignored], e);
                    // Unrestricted, so a resumed run lays out its state exactly
                    // like an uninterrupted one.
                    return Ok(Outcome::Interrupted(Rc::new(Capsule {
                        k: Kont::Frames(k),
                        f: Value::closure(lam, env),
                    })));
                }
                n += 1;
                match &*e {
                    Expr::Const(v) => St::Ret(v.clone()),
                    Expr::Var(s) => St::Ret(ctx.lookup(&env, *s)?),
                    Expr::Lambda(lam) if lam.arity() == 1 => {
                        St::Ret(Value::closure(lam.clone(), env.restrict(&lam.fv)))
                    }
                    Expr::App(a, b) => {
                        k = push(
                            FrameKind::AppArg {
                                env: env.clone(),
                                arg: b.clone(),
                            },
                            k,
                        );
                        St::Eval(env, a.clone())
                    }
                    Expr::If(c, t, f) => {
                        k = push(
                            FrameKind::If {
                                env: env.clone(),
                                then_: t.clone(),
                                else_: f.clone(),
                            },
                            k,
                        );
                        St::Eval(env, c.clone())
                    }
                    Expr::Unary(op, a) => {
                        k = push(FrameKind::Unary(*op), k);
                        St::Eval(env, a.clone())
                    }
                    Expr::Binary(op, a, b) => {
                        k = push(
                            FrameKind::BinRhs {
                                op: *op,
                                env: env.clone(),
                                rhs: b.clone(),
                            },
                            k,
                        );
                        St::Eval(env, a.clone())
                    }
                    Expr::Ternary(op, a, b, c) => {
                        k = push(
                            FrameKind::Tern1 {
                                op: *op,
                                env: env.clone(),
                                e2: b.clone(),
                                e3: c.clone(),
                            },
                            k,
                        );
                        St::Eval(env, a.clone())
                    }
                    Expr::Resume(a) => {
                        k = push(FrameKind::Resume, k);
                        St::Eval(env, a.clone())
                    }
                    _ => {
                        return Err(EvalError::Unsupported(format!(
                            "`{e}` in the CPS evaluator"
                        )))
                    }
                }
            }
            St::Ret(v) => {
                let Some(fr) = k.take() else {
                    return Ok(Outcome::Done { value: v, steps: n });
                };
                k = fr.next.clone();
                match &fr.kind {
                    FrameKind::AppArg { env, arg } => {
                        k = push(FrameKind::AppCall { f: v }, k);
                        St::Eval(env.clone(), arg.clone())
                    }
                    FrameKind::AppCall { f } => St::Apply(f.clone(), v),
                    FrameKind::If { env, then_, else_ } => {
                        let e = if prim::truthy(&v) { then_ } else { else_ };
                        St::Eval(env.clone(), e.clone())
                    }
                    FrameKind::Unary(op) => St::Ret(prim::unary(&mut ctx.ad, *op, v)?),
                    FrameKind::BinRhs { op, env, rhs } => {
                        k = push(FrameKind::Bin { op: *op, lhs: v }, k);
                        St::Eval(env.clone(), rhs.clone())
                    }
                    FrameKind::Bin { op, lhs } => {
                        St::Ret(prim::binary(&mut ctx.ad, *op, lhs.clone(), v)?)
                    }
                    FrameKind::Tern1 { op, env, e2, e3 } => {
                        k = push(
                            FrameKind::Tern2 {
                                op: *op,
                                v1: v,
                                env: env.clone(),
                                e3: e3.clone(),
                            },
                            k,
                        );
                        St::Eval(env.clone(), e2.clone())
                    }
                    FrameKind::Tern2 { op, v1, env, e3 } => {
                        k = push(
                            FrameKind::Tern3 {
                                op: *op,
                                v1: v1.clone(),
                                v2: v,
                            },
                            k,
                        );
                        St::Eval(env.clone(), e3.clone())
                    }
                    FrameKind::Tern3 { op, v1, v2 } => match op {
                        TernOp::Interrupt => {
                            let budget = match v {
                                Value::Count(b) if b > 0 => b,
                                other => {
                                    return Err(EvalError::Budget(format!(
                                        "interrupt budget must be a positive count, got {other}"
                                    )))
                                }
                            };
                            match l {
                                Limit::Finite(lc) if budget > lc => {
                                    // The context's limit is tighter: run under it
                                    // and re-arm the remainder on the capsule.
                                    let inner = St::Apply(v1.clone(), v2.clone());
                                    return match run(ctx, k, 0, l, inner)? {
                                        Outcome::Interrupted(c) => {
                                            Ok(Outcome::Interrupted(Rc::new(Capsule {
                                                k: c.k.clone(),
                                                f: interrupt::make_i_a(c.f.clone(), budget - lc),
                                            })))
                                        }
                                        done => Ok(done),
                                    };
                                }
                                _ => {
                                    n = 0;
                                    l = Limit::Finite(budget);
                                    St::Apply(v1.clone(), v2.clone())
                                }
                            }
                        }
                        _ => St::Ret(ad_operator(ctx, *op, v1.clone(), v2, &v)?),
                    },
                    FrameKind::Resume => match v {
                        Value::Capsule(c) => {
                            let Kont::Frames(ck) = &c.k else {
                                return Err(EvalError::Type {
                                    op: "resume",
                                    expected: "a capsule of this evaluator",
                                    found: "a converted capsule",
                                });
                            };
                            k = ck.clone();
                            n = 0;
                            St::Apply(c.f.clone(), Value::Bottom)
                        }
                        other => {
                            return Err(EvalError::Type {
                                op: "resume",
                                expected: "a capsule",
                                found: other.type_name(),
                            })
                        }
                    },
                }
            }
            St::Apply(f, x) => match f {
                Value::Closure(c) if c.lam.arity() == 1 => {
                    St::Eval(c.env.extend(c.lam.params[0], x), c.lam.body.clone())
                }
                Value::Closure(c) => {
                    return Err(EvalError::Arity {
                        expected: c.lam.arity(),
                        got: 1,
                    })
                }
                other => return Err(EvalError::NotAFunction(other.type_name())),
            },
        };
    }
}

/// The AD operators as single atomic steps of the enclosing computation.
fn ad_operator(ctx: &mut Ctx, op: TernOp, f: Value, x: &Value, d: &Value) -> EvalResult<Value> {
    let (y, g) = match op {
        TernOp::ForwardJ => ad::forward_j(ctx, &mut portal, f, x, d)?,
        TernOp::ReverseJ => ad::reverse_j(ctx, &mut portal, f, x, d)?,
        TernOp::CheckpointJ => drivers::checkpoint_j(ctx, &interrupt::PipelineA, f, x, d)?,
        TernOp::Interrupt => unreachable!("handled by the evaluator"),
    };
    Ok(Value::cons(y, g))
}

/// Applies `f` to `x` with a fresh count and no limit. A capsule escaping
/// from below becomes an ordinary value.
pub fn portal(ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value> {
    match run(ctx, None, 0, Limit::Infinite, St::Apply(f, x))? {
        Outcome::Done { value, .. } => Ok(value),
        Outcome::Interrupted(c) => Ok(Value::Capsule(c)),
    }
}

/// Evaluates a closed expression at top level.
pub fn eval_top(ctx: &mut Ctx, e: &ExprRef) -> EvalResult<Value> {
    match run(ctx, None, 0, Limit::Infinite, St::Eval(Env::empty(), e.clone()))? {
        Outcome::Done { value, .. } => Ok(value),
        Outcome::Interrupted(c) => Ok(Value::Capsule(c)),
    }
}
