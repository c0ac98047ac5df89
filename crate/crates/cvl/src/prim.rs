use crate::ad::{self, AdState, Arith};
use crate::ast::{BinOp, UnOp};
use crate::error::{EvalError, EvalResult};
use crate::value::Value;

fn num<'a>(op: &'static str, v: &'a Value) -> EvalResult<&'a ad::Num> {
    v.as_num().ok_or(EvalError::Type {
        op,
        expected: "a number",
        found: v.type_name(),
    })
}

pub fn unary(st: &mut AdState, op: UnOp, v: Value) -> EvalResult<Value> {
    match op {
        UnOp::IsZero => Ok(Value::Bool(num(op.name(), &v)?.re() == 0.0)),
        UnOp::IsNull => Ok(Value::Bool(matches!(v, Value::Empty))),
        UnOp::IsPair => Ok(Value::Bool(matches!(v, Value::Pair(_)))),
        UnOp::Car | UnOp::Cdr => match v {
            Value::Pair(p) => Ok(if op == UnOp::Car {
                p.0.clone()
            } else {
                p.1.clone()
            }),
            other => Err(EvalError::Type {
                op: op.name(),
                expected: "a pair",
                found: other.type_name(),
            }),
        },
        _ => {
            let a = num(op.name(), &v)?;
            Ok(Value::Num(ad::unary(st, op, a)?))
        }
    }
}

pub fn binary(st: &mut AdState, op: BinOp, a: Value, b: Value) -> EvalResult<Value> {
    let arith = match op {
        BinOp::Cons => return Ok(Value::cons(a, b)),
        BinOp::Add => Arith::Add,
        BinOp::Sub => Arith::Sub,
        BinOp::Mul => Arith::Mul,
        BinOp::Div => Arith::Div,
        BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Gt | BinOp::Ge => {
            let x = num(op.name(), &a)?.re();
            let y = num(op.name(), &b)?.re();
            return Ok(Value::Bool(match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Eq => x == y,
                BinOp::Gt => x > y,
                _ => x >= y,
            }));
        }
    };
    let x = num(op.name(), &a)?;
    let y = num(op.name(), &b)?;
    if arith == Arith::Div && y.re() == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(Value::Num(ad::arith(st, arith, x, y)?))
}

pub fn truthy(v: &Value) -> bool {
    !matches!(v, Value::Bool(false))
}
