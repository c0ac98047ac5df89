use std::fmt;
use std::rc::Rc;

use crate::symbol::Symbol;
use crate::value::Value;

pub type ExprRef = Rc<Expr>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Atan,
    Floor,
    IsZero,
    IsNull,
    IsPair,
    Car,
    Cdr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
    Cons,
}

/// Three-operand special forms. `Interrupt` never appears in parsed source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TernOp {
    ForwardJ,
    ReverseJ,
    CheckpointJ,
    Interrupt,
}

impl UnOp {
    pub fn name(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Sqrt => "sqrt",
            UnOp::Sin => "sin",
            UnOp::Cos => "cos",
            UnOp::Exp => "exp",
            UnOp::Log => "log",
            UnOp::Atan => "atan",
            UnOp::Floor => "floor",
            UnOp::IsZero => "zero?",
            UnOp::IsNull => "null?",
            UnOp::IsPair => "pair?",
            UnOp::Car => "car",
            UnOp::Cdr => "cdr",
        }
    }
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Cons => "cons",
        }
    }
}

impl TernOp {
    pub fn name(self) -> &'static str {
        match self {
            TernOp::ForwardJ => "j*",
            TernOp::ReverseJ => "*j",
            TernOp::CheckpointJ => "checkpoint-*j",
            TernOp::Interrupt => "interrupt",
        }
    }
}

/// A lambda with one parameter (source), three (`λ3 n l x`, converted
/// continuations) or four (`λ4 k n l x`, converted functions).
pub struct Lambda {
    pub params: Box<[Symbol]>,
    pub body: ExprRef,
    /// Free variables of the lambda, first-occurrence order.
    pub fv: Box<[Symbol]>,
}

impl Lambda {
    pub fn new(params: Vec<Symbol>, body: ExprRef) -> Rc<Lambda> {
        let mut fv = Vec::new();
        let mut bound = params.clone();
        collect_fv(&body, &mut bound, &mut fv);
        Rc::new(Lambda {
            params: params.into_boxed_slice(),
            body,
            fv: fv.into_boxed_slice(),
        })
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

pub enum Expr {
    Const(Value),
    Var(Symbol),
    Lambda(Rc<Lambda>),
    App(ExprRef, ExprRef),
    If(ExprRef, ExprRef, ExprRef),
    Unary(UnOp, ExprRef),
    Binary(BinOp, ExprRef, ExprRef),
    Ternary(TernOp, ExprRef, ExprRef, ExprRef),
    Resume(ExprRef),
    /// `A3`/`A4` application in converted code: callee then 3 or 4 arguments.
    AppK(ExprRef, Box<[ExprRef]>),
    /// Successor on step counts in converted code.
    Succ(ExprRef),
    /// `if n = l then ⟦k, λ4 k n l _. e⟧ else (λ4 k n l _. e) k n l ⊥`, with
    /// the continuation, count and limit given as expressions.
    LimitCheck {
        k: ExprRef,
        n: ExprRef,
        l: ExprRef,
        lam: Rc<Lambda>,
    },
}

impl Expr {
    pub fn is_converted_form(&self) -> bool {
        match self {
            Expr::AppK(..) | Expr::Succ(_) | Expr::LimitCheck { .. } => true,
            Expr::Lambda(l) => l.arity() != 1,
            _ => false,
        }
    }

    /// Node count, used to check conversion growth.
    pub fn size(&self) -> usize {
        1 + match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Lambda(l) => l.body.size(),
            Expr::LimitCheck { k, n, l, lam } => k.size() + n.size() + l.size() + lam.body.size(),
            Expr::App(a, b) | Expr::Binary(_, a, b) => a.size() + b.size(),
            Expr::If(a, b, c) | Expr::Ternary(_, a, b, c) => a.size() + b.size() + c.size(),
            Expr::Unary(_, a) | Expr::Resume(a) | Expr::Succ(a) => a.size(),
            Expr::AppK(f, args) => f.size() + args.iter().map(|a| a.size()).sum::<usize>(),
        }
    }
}

fn push_unique(out: &mut Vec<Symbol>, s: Symbol) {
    if !out.contains(&s) {
        out.push(s);
    }
}

fn collect_fv(e: &Expr, bound: &mut Vec<Symbol>, out: &mut Vec<Symbol>) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(s) => {
            if !bound.contains(s) {
                push_unique(out, *s);
            }
        }
        Expr::Lambda(l) => {
            for s in l.fv.iter() {
                if !bound.contains(s) {
                    push_unique(out, *s);
                }
            }
        }
        Expr::LimitCheck { k, n, l, lam } => {
            collect_fv(k, bound, out);
            collect_fv(n, bound, out);
            collect_fv(l, bound, out);
            for s in lam.fv.iter() {
                if !bound.contains(s) {
                    push_unique(out, *s);
                }
            }
        }
        Expr::App(a, b) | Expr::Binary(_, a, b) => {
            collect_fv(a, bound, out);
            collect_fv(b, bound, out);
        }
        Expr::If(a, b, c) | Expr::Ternary(_, a, b, c) => {
            collect_fv(a, bound, out);
            collect_fv(b, bound, out);
            collect_fv(c, bound, out);
        }
        Expr::Unary(_, a) | Expr::Resume(a) | Expr::Succ(a) => collect_fv(a, bound, out),
        Expr::AppK(f, args) => {
            collect_fv(f, bound, out);
            for a in args.iter() {
                collect_fv(a, bound, out);
            }
        }
    }
}

/// Free variables of an expression in first-occurrence order.
pub fn free_vars(e: &Expr) -> Vec<Symbol> {
    let mut out = Vec::new();
    collect_fv(e, &mut Vec::new(), &mut out);
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v @ (Value::Pair(_) | Value::Empty)) => write!(f, "'{v}"),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(s) => write!(f, "{s}"),
            Expr::Lambda(l) => {
                let tag = match l.arity() {
                    1 => "lambda",
                    3 => "lambda3",
                    _ => "lambda4",
                };
                write!(f, "({tag} (")?;
                for (i, p) in l.params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ") {})", l.body)
            }
            Expr::App(a, b) => write!(f, "({a} {b})"),
            Expr::If(a, b, c) => write!(f, "(if {a} {b} {c})"),
            Expr::Unary(op, a) => write!(f, "({} {a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({} {a} {b})", op.name()),
            Expr::Ternary(op, a, b, c) => write!(f, "({} {a} {b} {c})", op.name()),
            Expr::Resume(a) => write!(f, "(resume {a})"),
            Expr::AppK(g, args) => {
                write!(f, "({g}")?;
                for a in args.iter() {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Expr::Succ(a) => write!(f, "(1+ {a})"),
            Expr::LimitCheck { k, n, l, lam } => {
                write!(f, "(limit-check {k} {n} {l} {})", lam.body)
            }
        }
    }
}
