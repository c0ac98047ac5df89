//! Direct-style evaluator for source programs. Tail positions loop instead
//! of recursing so iterative programs run in constant host stack.

use crate::ad;
use crate::ast::{Expr, ExprRef, TernOp};
use crate::ctx::Ctx;
use crate::error::{EvalError, EvalResult};
use crate::prim;
use crate::value::{Env, Value};

pub fn eval(ctx: &mut Ctx, env: &Env, e: &ExprRef) -> EvalResult<Value> {
    let mut env = env.clone();
    let mut e = e.clone();
    loop {
        let next = match &*e {
            Expr::Const(v) => return Ok(v.clone()),
            Expr::Var(s) => return ctx.lookup(&env, *s),
            Expr::Lambda(lam) if lam.arity() == 1 => {
                return Ok(Value::closure(lam.clone(), env.restrict(&lam.fv)))
            }
            Expr::App(a, b) => {
                let f = eval(ctx, &env, a)?;
                let x = eval(ctx, &env, b)?;
                match f {
                    Value::Closure(c) if c.lam.arity() == 1 => {
                        env = c.env.extend(c.lam.params[0], x);
                        c.lam.body.clone()
                    }
                    Value::Closure(c) => {
                        return Err(EvalError::Arity {
                            expected: c.lam.arity(),
                            got: 1,
                        })
                    }
                    other => return Err(EvalError::NotAFunction(other.type_name())),
                }
            }
            Expr::If(c, t, f) => {
                if prim::truthy(&eval(ctx, &env, c)?) {
                    t.clone()
                } else {
                    f.clone()
                }
            }
            Expr::Unary(op, a) => {
                let v = eval(ctx, &env, a)?;
                return prim::unary(&mut ctx.ad, *op, v);
            }
            Expr::Binary(op, a, b) => {
                let x = eval(ctx, &env, a)?;
                let y = eval(ctx, &env, b)?;
                return prim::binary(&mut ctx.ad, *op, x, y);
            }
            Expr::Ternary(op, a, b, c) => {
                let f = eval(ctx, &env, a)?;
                let x = eval(ctx, &env, b)?;
                let d = eval(ctx, &env, c)?;
                let (y, g) = match op {
                    TernOp::ForwardJ => ad::forward_j(ctx, &mut apply, f, &x, &d)?,
                    // Without interruption the checkpointing operator can only
                    // be its plain counterpart; both return the same pair.
                    TernOp::ReverseJ | TernOp::CheckpointJ => {
                        ad::reverse_j(ctx, &mut apply, f, &x, &d)?
                    }
                    TernOp::Interrupt => {
                        return Err(EvalError::Unsupported(
                            "interrupt in the direct evaluator".into(),
                        ))
                    }
                };
                return Ok(Value::cons(y, g));
            }
            _ => {
                return Err(EvalError::Unsupported(format!(
                    "`{e}` in the direct evaluator"
                )))
            }
        };
        e = next;
    }
}

pub fn apply(ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value> {
    match f {
        Value::Closure(c) if c.lam.arity() == 1 => {
            let env = c.env.extend(c.lam.params[0], x);
            eval(ctx, &env, &c.lam.body)
        }
        Value::Closure(c) => Err(EvalError::Arity {
            expected: c.lam.arity(),
            got: 1,
        }),
        other => Err(EvalError::NotAFunction(other.type_name())),
    }
}
