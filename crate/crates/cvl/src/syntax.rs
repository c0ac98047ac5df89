//! S-expression reader and expander to core expressions.

use std::collections::HashSet;
use std::rc::Rc;

use crate::ast::{BinOp, Expr, ExprRef, Lambda, TernOp, UnOp};
use crate::error::ParseError;
use crate::symbol::Symbol;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Clone, Debug)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    })
}

// ---- reader ----

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            chars: src.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let c = match self.chars.peek() {
            None => return Ok(None),
            Some(&c) => c,
        };
        match c {
            '(' | '[' => {
                self.bump();
                let close = if c == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => return err(start, "unclosed parenthesis"),
                        Some(&d) if d == close => {
                            self.bump();
                            break;
                        }
                        Some(&d) if d == ')' || d == ']' => {
                            return err(self.pos, "mismatched closing bracket")
                        }
                        _ => match self.read()? {
                            Some(s) => items.push(s),
                            None => return err(start, "unclosed parenthesis"),
                        },
                    }
                }
                Ok(Some(Sexp::List(items, start)))
            }
            ')' | ']' => err(start, "unexpected closing bracket"),
            '\'' => {
                self.bump();
                match self.read()? {
                    Some(s) => Ok(Some(Sexp::List(
                        vec![Sexp::Atom("quote".into(), start), s],
                        start,
                    ))),
                    None => err(start, "quote without datum"),
                }
            }
            _ => {
                let mut tok = String::new();
                while let Some(&d) = self.chars.peek() {
                    if d.is_whitespace() || "()[]';".contains(d) {
                        break;
                    }
                    tok.push(d);
                    self.bump();
                }
                Ok(Some(Sexp::Atom(tok, start)))
            }
        }
    }
}

pub fn read_all(src: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    while let Some(s) = r.read()? {
        out.push(s);
    }
    Ok(out)
}

fn parse_number(tok: &str) -> Option<f64> {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let first = body.chars().next()?;
    let numeric_start = first.is_ascii_digit()
        || (first == '.' && body[1..].starts_with(|c: char| c.is_ascii_digit()));
    if !numeric_start {
        return None;
    }
    tok.parse::<f64>().ok()
}

// ---- expander ----

/// Parsed program: top-level definitions in order and the expressions
/// following them. The last expression is the program's result.
pub struct Program {
    pub defs: Vec<(Symbol, ExprRef)>,
    pub exprs: Vec<ExprRef>,
}

impl Program {
    pub fn main(&self) -> Option<&ExprRef> {
        self.exprs.last()
    }
}

fn unary_builtin(name: &str) -> Option<UnOp> {
    Some(match name {
        "neg" => UnOp::Neg,
        "sqrt" => UnOp::Sqrt,
        "sin" => UnOp::Sin,
        "cos" => UnOp::Cos,
        "exp" => UnOp::Exp,
        "log" => UnOp::Log,
        "atan" => UnOp::Atan,
        "floor" => UnOp::Floor,
        "zero?" => UnOp::IsZero,
        "null?" => UnOp::IsNull,
        "pair?" => UnOp::IsPair,
        "car" => UnOp::Car,
        "cdr" => UnOp::Cdr,
        _ => return None,
    })
}

fn binary_builtin(name: &str) -> Option<BinOp> {
    Some(match name {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "/" => BinOp::Div,
        "<" => BinOp::Lt,
        "<=" => BinOp::Le,
        "=" => BinOp::Eq,
        ">" => BinOp::Gt,
        ">=" => BinOp::Ge,
        "cons" => BinOp::Cons,
        _ => return None,
    })
}

fn ternary_form(name: &str) -> Option<TernOp> {
    Some(match name {
        "j*" => TernOp::ForwardJ,
        "*j" => TernOp::ReverseJ,
        "checkpoint-*j" => TernOp::CheckpointJ,
        _ => return None,
    })
}

const SPECIAL: &[&str] = &[
    "lambda", "if", "let", "let*", "define", "quote", "cond", "and", "or", "not", "list", "else",
];

struct Expander {
    scope: Vec<Symbol>,
    globals: HashSet<Symbol>,
}

fn rc(e: Expr) -> ExprRef {
    Rc::new(e)
}

impl Expander {
    fn is_bound(&self, s: Symbol) -> bool {
        self.scope.contains(&s) || self.globals.contains(&s)
    }

    fn fresh(&mut self, base: &str) -> Symbol {
        debug_assert!(EXPANDER_PREFIXES.contains(&base));
        let n = GENSYM.with(|g| {
            g.set(g.get() + 1);
            g.get()
        });
        Symbol::intern(&format!("#{base}{n}"))
    }

    fn symbol(&self, s: &Sexp) -> Result<Symbol, ParseError> {
        match s {
            Sexp::Atom(t, p) => {
                if parse_number(t).is_some() || (t.starts_with('#') && !is_expander_name(t)) {
                    return err(*p, format!("`{t}` cannot be used as a variable"));
                }
                if SPECIAL.contains(&t.as_str()) || ternary_form(t).is_some() {
                    return err(*p, format!("`{t}` is a reserved keyword"));
                }
                Ok(Symbol::intern(t))
            }
            Sexp::List(_, p) => err(*p, "expected an identifier"),
        }
    }

    fn expr(&mut self, s: &Sexp) -> Result<ExprRef, ParseError> {
        match s {
            Sexp::Atom(t, p) => self.atom(t, *p),
            Sexp::List(items, p) => self.list(items, *p),
        }
    }

    fn atom(&mut self, t: &str, p: Pos) -> Result<ExprRef, ParseError> {
        if let Some(x) = parse_number(t) {
            return Ok(rc(Expr::Const(Value::real(x))));
        }
        match t {
            "#t" | "true" => return Ok(rc(Expr::Const(Value::Bool(true)))),
            "#f" | "false" => return Ok(rc(Expr::Const(Value::Bool(false)))),
            _ => {}
        }
        if t.starts_with('#') && !is_expander_name(t) {
            return err(p, format!("unknown literal `{t}`"));
        }
        let s = Symbol::intern(t);
        if self.is_bound(s) {
            return Ok(rc(Expr::Var(s)));
        }
        // Builtins in argument position become curried procedures.
        if let Some(op) = unary_builtin(t) {
            let a = self.fresh("a");
            return Ok(rc(Expr::Lambda(Lambda::new(
                vec![a],
                rc(Expr::Unary(op, rc(Expr::Var(a)))),
            ))));
        }
        if let Some(op) = binary_builtin(t) {
            let a = self.fresh("a");
            let b = self.fresh("b");
            let inner = Lambda::new(
                vec![b],
                rc(Expr::Binary(op, rc(Expr::Var(a)), rc(Expr::Var(b)))),
            );
            return Ok(rc(Expr::Lambda(Lambda::new(vec![a], rc(Expr::Lambda(inner))))));
        }
        if SPECIAL.contains(&t) || ternary_form(t).is_some() {
            return err(p, format!("`{t}` is a keyword, not a value"));
        }
        Ok(rc(Expr::Var(s)))
    }

    fn lambda(&mut self, params: &[Symbol], body: &Sexp) -> Result<ExprRef, ParseError> {
        let depth = self.scope.len();
        self.scope.extend_from_slice(params);
        let b = self.expr(body);
        self.scope.truncate(depth);
        let mut e = b?;
        for p in params.iter().rev() {
            e = rc(Expr::Lambda(Lambda::new(vec![*p], e)));
        }
        Ok(e)
    }

    fn params(&self, s: &Sexp) -> Result<Vec<Symbol>, ParseError> {
        match s {
            Sexp::List(ps, p) => {
                if ps.is_empty() {
                    return err(*p, "lambda needs at least one parameter");
                }
                ps.iter().map(|x| self.symbol(x)).collect()
            }
            Sexp::Atom(_, p) => err(*p, "expected a parameter list"),
        }
    }

    fn bindings(&mut self, s: &Sexp) -> Result<Vec<(Symbol, Sexp)>, ParseError> {
        let items = match s {
            Sexp::List(items, _) => items,
            Sexp::Atom(_, p) => return err(*p, "expected a binding list"),
        };
        items
            .iter()
            .map(|b| match b {
                Sexp::List(kv, p) if kv.len() == 2 => Ok((self.symbol(&kv[0])?, kv[1].clone())),
                other => err(other.pos(), "binding must be (name expr)"),
            })
            .collect()
    }

    fn args(&mut self, items: &[Sexp]) -> Result<Vec<ExprRef>, ParseError> {
        items.iter().map(|a| self.expr(a)).collect()
    }

    fn list(&mut self, items: &[Sexp], p: Pos) -> Result<ExprRef, ParseError> {
        let head = match items.first() {
            None => return err(p, "empty application"),
            Some(h) => h,
        };
        let name = match head {
            Sexp::Atom(t, _) if parse_number(t).is_none() => {
                let s = Symbol::intern(t);
                if self.is_bound(s) {
                    None
                } else {
                    Some(t.as_str())
                }
            }
            _ => None,
        };
        let n_args = items.len() - 1;
        let arity = |want: usize| -> Result<(), ParseError> {
            if n_args == want {
                Ok(())
            } else {
                err(p, format!("`{}` expects {want} operands, got {n_args}", name.unwrap_or("form")))
            }
        };
        if let Some(name) = name {
            match name {
                "quote" => {
                    arity(1)?;
                    return Ok(rc(Expr::Const(datum(&items[1])?)));
                }
                "lambda" => {
                    arity(2)?;
                    let ps = self.params(&items[1])?;
                    return self.lambda(&ps, &items[2]);
                }
                "if" => {
                    arity(3)?;
                    let c = self.expr(&items[1])?;
                    let t = self.expr(&items[2])?;
                    let e = self.expr(&items[3])?;
                    return Ok(rc(Expr::If(c, t, e)));
                }
                "let" => {
                    arity(2)?;
                    let bs = self.bindings(&items[1])?;
                    if bs.is_empty() {
                        return self.expr(&items[2]);
                    }
                    let names: Vec<Symbol> = bs.iter().map(|(s, _)| *s).collect();
                    let mut f = self.lambda(&names, &items[2])?;
                    for (_, e) in &bs {
                        let a = self.expr(e)?;
                        f = rc(Expr::App(f, a));
                    }
                    return Ok(f);
                }
                "let*" => {
                    arity(2)?;
                    let bs = self.bindings(&items[1])?;
                    return self.let_star(&bs, &items[2]);
                }
                "define" => return err(p, "`define` is only allowed at top level"),
                "cond" => return self.cond(&items[1..], p),
                "and" => {
                    let args = self.args(&items[1..])?;
                    let mut it = args.into_iter().rev();
                    return Ok(match it.next() {
                        None => rc(Expr::Const(Value::Bool(true))),
                        Some(last) => it.fold(last, |acc, a| {
                            rc(Expr::If(a, acc, rc(Expr::Const(Value::Bool(false)))))
                        }),
                    });
                }
                "or" => {
                    let args = self.args(&items[1..])?;
                    let mut it = args.into_iter().rev();
                    let mut acc = match it.next() {
                        None => return Ok(rc(Expr::Const(Value::Bool(false)))),
                        Some(last) => last,
                    };
                    for a in it {
                        let t = self.fresh("or");
                        let body = rc(Expr::If(rc(Expr::Var(t)), rc(Expr::Var(t)), acc));
                        acc = rc(Expr::App(rc(Expr::Lambda(Lambda::new(vec![t], body))), a));
                    }
                    return Ok(acc);
                }
                "not" => {
                    arity(1)?;
                    let a = self.expr(&items[1])?;
                    return Ok(rc(Expr::If(
                        a,
                        rc(Expr::Const(Value::Bool(false))),
                        rc(Expr::Const(Value::Bool(true))),
                    )));
                }
                "list" => {
                    let args = self.args(&items[1..])?;
                    return Ok(args
                        .into_iter()
                        .rev()
                        .fold(rc(Expr::Const(Value::Empty)), |acc, a| {
                            rc(Expr::Binary(BinOp::Cons, a, acc))
                        }));
                }
                "else" => return err(p, "`else` outside of cond"),
                _ => {}
            }
            if let Some(op) = ternary_form(name) {
                arity(3)?;
                let a = self.args(&items[1..])?;
                return Ok(rc(Expr::Ternary(op, a[0].clone(), a[1].clone(), a[2].clone())));
            }
            if let Some(op) = unary_builtin(name) {
                arity(1)?;
                let a = self.expr(&items[1])?;
                return Ok(rc(Expr::Unary(op, a)));
            }
            if let Some(op) = binary_builtin(name) {
                let args = self.args(&items[1..])?;
                return self.binary_call(op, name, args, p);
            }
        }
        let mut f = self.expr(head)?;
        if n_args == 0 {
            return err(p, "procedure call without arguments");
        }
        for a in &items[1..] {
            let a = self.expr(a)?;
            f = rc(Expr::App(f, a));
        }
        Ok(f)
    }

    fn binary_call(
        &mut self,
        op: BinOp,
        name: &str,
        args: Vec<ExprRef>,
        p: Pos,
    ) -> Result<ExprRef, ParseError> {
        let variadic = matches!(op, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div);
        if !variadic && args.len() != 2 {
            return err(p, format!("`{name}` expects 2 operands, got {}", args.len()));
        }
        if args.is_empty() {
            return err(p, format!("`{name}` expects at least 1 operand"));
        }
        if args.len() == 1 {
            let a = args.into_iter().next().unwrap();
            return Ok(match op {
                BinOp::Sub => rc(Expr::Unary(UnOp::Neg, a)),
                BinOp::Div => rc(Expr::Binary(BinOp::Div, rc(Expr::Const(Value::real(1.0))), a)),
                _ => a,
            });
        }
        let mut it = args.into_iter();
        let first = it.next().unwrap();
        Ok(it.fold(first, |acc, a| rc(Expr::Binary(op, acc, a))))
    }

    fn let_star(&mut self, bs: &[(Symbol, Sexp)], body: &Sexp) -> Result<ExprRef, ParseError> {
        match bs.split_first() {
            None => self.expr(body),
            Some(((name, e), rest)) => {
                let init = self.expr(e)?;
                self.scope.push(*name);
                let inner = self.let_star(rest, body);
                self.scope.pop();
                let f = rc(Expr::Lambda(Lambda::new(vec![*name], inner?)));
                Ok(rc(Expr::App(f, init)))
            }
        }
    }

    fn cond(&mut self, clauses: &[Sexp], p: Pos) -> Result<ExprRef, ParseError> {
        let (first, rest) = match clauses.split_first() {
            None => return Ok(rc(Expr::Const(Value::Bool(false)))),
            Some(x) => x,
        };
        match first {
            Sexp::List(kv, q) if kv.len() == 2 => {
                if matches!(&kv[0], Sexp::Atom(t, _) if t == "else") {
                    if !rest.is_empty() {
                        return err(*q, "`else` must be the last cond clause");
                    }
                    return self.expr(&kv[1]);
                }
                let c = self.expr(&kv[0])?;
                let t = self.expr(&kv[1])?;
                let e = self.cond(rest, p)?;
                Ok(rc(Expr::If(c, t, e)))
            }
            other => err(other.pos(), "cond clause must be (test expr)"),
        }
    }
}

fn define_target(s: &Sexp) -> Option<Symbol> {
    match s {
        Sexp::List(items, _) if items.len() == 3 => match (&items[0], &items[1]) {
            (Sexp::Atom(d, _), Sexp::Atom(name, _)) if d == "define" => Some(Symbol::intern(name)),
            (Sexp::Atom(d, _), Sexp::List(sig, _)) if d == "define" => match sig.first() {
                Some(Sexp::Atom(name, _)) => Some(Symbol::intern(name)),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    }
}

/// Quoted data: numbers, booleans and lists of them.
fn datum(s: &Sexp) -> Result<Value, ParseError> {
    match s {
        Sexp::Atom(t, q) => match t.as_str() {
            "#t" | "true" => Ok(Value::Bool(true)),
            "#f" | "false" => Ok(Value::Bool(false)),
            _ => parse_number(t)
                .map(Value::real)
                .ok_or_else(|| ParseError {
                    line: q.line,
                    col: q.col,
                    msg: format!("cannot quote `{t}`; only numbers, booleans and lists"),
                }),
        },
        Sexp::List(items, _) => {
            let vals = items.iter().map(datum).collect::<Result<Vec<_>, _>>()?;
            Ok(Value::list(vals))
        }
    }
}

const EXPANDER_PREFIXES: [&str; 3] = ["a", "b", "or"];

thread_local! {
    static GENSYM: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Names the expander itself generates may be read back, so printed core
/// expressions parse again. Fresh names never repeat within a process.
fn is_expander_name(t: &str) -> bool {
    let rest = &t[1..];
    let digits = rest.trim_start_matches(|c: char| c.is_ascii_lowercase());
    let prefix = &rest[..rest.len() - digits.len()];
    !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit())
        && EXPANDER_PREFIXES.contains(&prefix)
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let forms = read_all(src)?;
    let mut ex = Expander {
        scope: Vec::new(),
        globals: forms.iter().filter_map(define_target).collect(),
    };
    let mut defs = Vec::new();
    let mut exprs = Vec::new();
    for form in &forms {
        let is_define = matches!(form, Sexp::List(items, _)
            if matches!(items.first(), Some(Sexp::Atom(d, _)) if d == "define"));
        if !is_define {
            exprs.push(ex.expr(form)?);
            continue;
        }
        let (items, p) = match form {
            Sexp::List(items, p) => (items, *p),
            _ => unreachable!(),
        };
        if items.len() != 3 {
            return err(p, "define expects a name and one expression");
        }
        match &items[1] {
            Sexp::Atom(..) => {
                let name = ex.symbol(&items[1])?;
                defs.push((name, ex.expr(&items[2])?));
            }
            Sexp::List(sig, q) => {
                if sig.len() < 2 {
                    return err(*q, "function definition needs at least one parameter");
                }
                let name = ex.symbol(&sig[0])?;
                let params: Vec<Symbol> =
                    sig[1..].iter().map(|x| ex.symbol(x)).collect::<Result<_, _>>()?;
                defs.push((name, ex.lambda(&params, &items[2])?));
            }
        }
    }
    Ok(Program { defs, exprs })
}

/// Parses a single expression with no definitions.
pub fn parse_expr(src: &str) -> Result<ExprRef, ParseError> {
    let prog = parse_program(src)?;
    if !prog.defs.is_empty() || prog.exprs.len() != 1 {
        return err(Pos { line: 1, col: 1 }, "expected exactly one expression");
    }
    Ok(prog.exprs[0].clone())
}
