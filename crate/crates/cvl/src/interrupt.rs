//! The general-purpose interruption and resumption interface, shared by both
//! evaluation pipelines.

use std::rc::Rc;

use crate::ast::{Expr, ExprRef, Lambda, TernOp};
use crate::ctx::Ctx;
use crate::cps::{self, Outcome, St};
use crate::error::{EvalError, EvalResult};
use crate::symbol::reserved;
use crate::syntax::Program;
use crate::value::{Env, Limit, Value};

/// Counted steps spent inside an `I` wrapper before the wrapped function
/// starts: the interrupt clause and its three variable references.
pub const PREAMBLE_I: u64 = 4;
/// Counted steps spent inside `R` before resumption: the resume clause and
/// its variable reference.
pub const PREAMBLE_R: u64 = 2;

/// One evaluation pipeline seen through the interruption interface.
pub trait Pipeline {
    fn name(&self) -> &'static str;

    /// Installs top-level definitions.
    fn install(&self, ctx: &mut Ctx, prog: &Program) -> EvalResult<()>;

    /// Evaluates a closed top-level expression.
    fn eval(&self, ctx: &mut Ctx, e: &ExprRef) -> EvalResult<Value>;

    /// Applies `f` to `x` with count 0 and no limit. An escaping capsule is
    /// returned as a value.
    fn apply(&self, ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value>;

    /// Number of steps of `f x`.
    fn primops(&self, ctx: &mut Ctx, f: &Value, x: &Value) -> EvalResult<u64>;

    /// Capsule for the state of `f x` after exactly `l` steps.
    fn interrupt(&self, ctx: &mut Ctx, f: &Value, x: &Value, l: u64) -> EvalResult<Value>;

    /// Finishes a computation paused in a capsule.
    fn resume(&self, ctx: &mut Ctx, z: &Value) -> EvalResult<Value> {
        let r = self.make_r();
        self.apply(ctx, r, z.clone())
    }

    /// `λx. interrupt f x l` as a closure of this pipeline.
    fn make_i(&self, f: Value, l: u64) -> Value;

    /// `λz. resume z` as a closure of this pipeline.
    fn make_r(&self) -> Value;
}

fn check_budget(l: u64) -> EvalResult<()> {
    if l == 0 {
        return Err(EvalError::Budget("interrupt needs a positive step limit".into()));
    }
    Ok(())
}

pub(crate) fn ran_to_completion(limit: u64, steps: u64) -> EvalError {
    EvalError::RanToCompletion { limit, steps }
}

/// The CPS interpreter.
#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineA;

thread_local! {
    static I_LAMBDA: Rc<Lambda> = {
        let r = reserved();
        let body: ExprRef = Rc::new(Expr::Ternary(
            TernOp::Interrupt,
            Rc::new(Expr::Var(r.f)),
            Rc::new(Expr::Var(r.x)),
            Rc::new(Expr::Var(r.budget)),
        ));
        Lambda::new(vec![r.x], body)
    };
    static R_VALUE: Value = {
        let r = reserved();
        let body: ExprRef = Rc::new(Expr::Resume(Rc::new(Expr::Var(r.z))));
        Value::closure(Lambda::new(vec![r.z], body), Env::empty())
    };
}

pub(crate) fn make_i_a(f: Value, l: u64) -> Value {
    let r = reserved();
    let env = Env::from_entries(vec![(r.f, f), (r.budget, Value::Count(l))]);
    Value::closure(I_LAMBDA.with(|lam| lam.clone()), env)
}

impl Pipeline for PipelineA {
    fn name(&self) -> &'static str {
        "a"
    }

    fn install(&self, ctx: &mut Ctx, prog: &Program) -> EvalResult<()> {
        install_defs(ctx, prog, |ctx, e| cps::eval_top(ctx, e))
    }

    fn eval(&self, ctx: &mut Ctx, e: &ExprRef) -> EvalResult<Value> {
        cps::eval_top(ctx, e)
    }

    fn apply(&self, ctx: &mut Ctx, f: Value, x: Value) -> EvalResult<Value> {
        cps::portal(ctx, f, x)
    }

    fn primops(&self, ctx: &mut Ctx, f: &Value, x: &Value) -> EvalResult<u64> {
        match cps::run(ctx, None, 0, Limit::Infinite, St::Apply(f.clone(), x.clone()))? {
            Outcome::Done { steps, .. } => Ok(steps),
            Outcome::Interrupted(_) => Err(EvalError::Interrupted),
        }
    }

    fn interrupt(&self, ctx: &mut Ctx, f: &Value, x: &Value, l: u64) -> EvalResult<Value> {
        check_budget(l)?;
        match cps::run(ctx, None, 0, Limit::Finite(l), St::Apply(f.clone(), x.clone()))? {
            Outcome::Interrupted(c) => Ok(Value::Capsule(c)),
            Outcome::Done { steps, .. } => Err(ran_to_completion(l, steps)),
        }
    }

    fn make_i(&self, f: Value, l: u64) -> Value {
        make_i_a(f, l)
    }

    fn make_r(&self) -> Value {
        R_VALUE.with(|r| r.clone())
    }
}

/// Installs definitions in order. Lambdas are installed first so that
/// non-function definitions may call any function.
pub(crate) fn install_defs(
    ctx: &mut Ctx,
    prog: &Program,
    mut eval: impl FnMut(&mut Ctx, &ExprRef) -> EvalResult<Value>,
) -> EvalResult<()> {
    for (name, e) in &prog.defs {
        if matches!(&**e, Expr::Lambda(_)) {
            let v = eval(ctx, e)?;
            ctx.globals.insert(*name, v);
        }
    }
    for (name, e) in &prog.defs {
        if !matches!(&**e, Expr::Lambda(_)) {
            let v = eval(ctx, e)?;
            ctx.globals.insert(*name, v);
        }
    }
    Ok(())
}

/// Structural budget chain of nested `I` wrappers, outermost first.
pub fn wrapper_budgets(f: &Value) -> Vec<u64> {
    let r = reserved();
    let mut out = Vec::new();
    let mut cur = f.clone();
    loop {
        let Value::Closure(c) = &cur else { break };
        let is_wrapper = matches!(&*c.lam.body, Expr::Ternary(TernOp::Interrupt, ..));
        if !is_wrapper {
            break;
        }
        match c.env.lookup(r.budget) {
            Some(Value::Count(b)) => out.push(*b),
            _ => break,
        }
        let Some(inner) = c.env.lookup(r.f).cloned() else { break };
        cur = inner;
    }
    out
}
