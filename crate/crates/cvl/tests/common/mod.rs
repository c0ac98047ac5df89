#![allow(dead_code)]

use cvl::convert::PipelineB;
use cvl::interrupt::{Pipeline, PipelineA};
use cvl::symbol::Symbol;
use cvl::value::Env;
use cvl::{direct, syntax, Ctx, EvalResult, Value};

/// Installs `defs` under `p` and returns the context with `f` and the value
/// of `input`.
pub fn setup<P: Pipeline>(p: &P, defs: &str, input: &str) -> (Ctx, Value, Value) {
    let src = format!("{defs}\n(define %input {input})\n");
    let prog = syntax::parse_program(&src).expect("parse");
    let mut ctx = Ctx::new();
    p.install(&mut ctx, &prog).expect("install");
    let f = ctx.globals[&Symbol::intern("f")].clone();
    let x = ctx.globals[&Symbol::intern("%input")].clone();
    (ctx, f, x)
}

pub fn eval_with<P: Pipeline>(p: &P, src: &str) -> EvalResult<Value> {
    let prog = syntax::parse_program(src).expect("parse");
    let mut ctx = Ctx::new();
    p.install(&mut ctx, &prog)?;
    let mut last = Value::Bottom;
    for e in &prog.exprs {
        last = p.eval(&mut ctx, e)?;
    }
    Ok(last)
}

pub fn eval_a(src: &str) -> EvalResult<Value> {
    eval_with(&PipelineA, src)
}

pub fn eval_b(src: &str) -> EvalResult<Value> {
    eval_with(&PipelineB, src)
}

pub fn eval_direct(src: &str) -> EvalResult<Value> {
    let prog = syntax::parse_program(src).expect("parse");
    let mut ctx = Ctx::new();
    for (name, e) in &prog.defs {
        if matches!(&**e, cvl::ast::Expr::Lambda(_)) {
            let v = direct::eval(&mut ctx, &Env::empty(), e)?;
            ctx.globals.insert(*name, v);
        }
    }
    for (name, e) in &prog.defs {
        if !matches!(&**e, cvl::ast::Expr::Lambda(_)) {
            let v = direct::eval(&mut ctx, &Env::empty(), e)?;
            ctx.globals.insert(*name, v);
        }
    }
    let mut last = Value::Bottom;
    for e in &prog.exprs {
        last = direct::eval(&mut ctx, &Env::empty(), e)?;
    }
    Ok(last)
}

pub fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("expected a number, got {v}"))
}

pub fn pair(v: &Value) -> (Value, Value) {
    match v {
        Value::Pair(p) => (p.0.clone(), p.1.clone()),
        other => panic!("expected a pair, got {other}"),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
