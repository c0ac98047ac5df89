mod common;

use common::*;
use cvl::ast::{free_vars, BinOp, Expr, TernOp};
use cvl::corpus;
use cvl::symbol::Symbol;
use cvl::syntax::{parse_expr, parse_program};
use cvl::value::Env;
use cvl::{direct, Ctx, EvalError, Value};

fn names(v: Vec<Symbol>) -> Vec<&'static str> {
    v.into_iter().map(|s| s.name()).collect()
}

#[test]
fn parses_identity_lambda() {
    let e = parse_expr("(lambda (x) x)").unwrap();
    let Expr::Lambda(l) = &*e else { panic!("not a lambda: {e}") };
    assert_eq!(names(l.params.to_vec()), ["x"]);
    assert!(matches!(&*l.body, Expr::Var(s) if s.name() == "x"));
}

#[test]
fn parses_application_of_square() {
    let e = parse_expr("((lambda (x) (* x x)) 3)").unwrap();
    let Expr::App(f, a) = &*e else { panic!("not an application") };
    let Expr::Lambda(l) = &**f else { panic!("callee not a lambda") };
    assert!(matches!(&*l.body, Expr::Binary(BinOp::Mul, a, b)
        if matches!((&**a, &**b), (Expr::Var(_), Expr::Var(_)))));
    assert!(matches!(&**a, Expr::Const(v) if v.as_f64() == Some(3.0)));
}

#[test]
fn parses_checkpoint_form() {
    let e = parse_expr("(checkpoint-*j f x 1.0)").unwrap();
    assert!(matches!(&*e, Expr::Ternary(TernOp::CheckpointJ, f, x, d)
        if matches!((&**f, &**x, &**d), (Expr::Var(_), Expr::Var(_), Expr::Const(_)))));
}

#[test]
fn multi_argument_lambdas_are_curried() {
    let e = parse_expr("(lambda (a b) (+ a b))").unwrap();
    let Expr::Lambda(outer) = &*e else { panic!() };
    assert_eq!(outer.arity(), 1);
    assert!(matches!(&*outer.body, Expr::Lambda(inner) if inner.arity() == 1));
    assert_eq!(num(&eval_a("((lambda (a b) (- a b)) 7 2)").unwrap()), 5.0);
}

#[test]
fn parse_errors_carry_positions() {
    let err = parse_program("(define (f x)\n  (+ x 1)\n").err().expect("parse error");
    assert_eq!(err.line, 1);
    let err = parse_program("(f 1))").err().expect("parse error");
    assert_eq!((err.line, err.col), (1, 6));
    let err = parse_program("\n  (if 1 2)").err().expect("parse error");
    assert_eq!(err.line, 2);
    assert!(parse_program("(lambda x)").is_err());
    assert!(parse_program("(sin 1 2)").is_err());
}

#[test]
fn user_programs_never_contain_internal_forms() {
    assert!(parse_program("(interrupt f x 3)").is_ok_and(|p| {
        !matches!(&**p.main().unwrap(), Expr::Ternary(TernOp::Interrupt, ..))
    }));
    assert!(parse_program("(resume z)")
        .is_ok_and(|p| !matches!(&**p.main().unwrap(), Expr::Resume(_))));
}

#[test]
fn free_variables() {
    let fv = |s: &str| names(free_vars(&parse_expr(s).unwrap()));
    assert!(fv("(lambda (x) x)").is_empty());
    assert_eq!(fv("(lambda (x) (+ x y))"), ["y"]);
    assert_eq!(fv("(f (lambda (z) f))"), ["f"]);
    assert_eq!(fv("(g (lambda (x) (h x y)) x)"), ["g", "h", "y", "x"]);
}

#[test]
fn direct_evaluation_examples() {
    for eval in [eval_direct, eval_a, eval_b] {
        assert_eq!(num(&eval("((lambda (x) (* x x)) 3)").unwrap()), 9.0);
        assert_eq!(num(&eval("(if (< 1 2) 10 20)").unwrap()), 10.0);
        assert_eq!(num(&eval("(car (cons 1 2))").unwrap()), 1.0);
        assert_eq!(num(&eval("((lambda (x) ((lambda (x) x) 2)) 1)").unwrap()), 2.0);
    }
}

#[test]
fn apply_examples() {
    let mut ctx = Ctx::new();
    let id = direct::eval(&mut ctx, &Env::empty(), &parse_expr("(lambda (x) x)").unwrap()).unwrap();
    assert_eq!(num(&direct::apply(&mut ctx, id, Value::real(7.0)).unwrap()), 7.0);

    let env = Env::empty().extend(Symbol::intern("y"), Value::real(2.0));
    let k = direct::eval(&mut ctx, &env, &parse_expr("(lambda (x) y)").unwrap()).unwrap();
    assert_eq!(num(&direct::apply(&mut ctx, k, Value::real(0.0)).unwrap()), 2.0);

    let err = direct::apply(&mut ctx, Value::real(3.0), Value::real(0.0)).err().unwrap();
    assert!(matches!(err, EvalError::NotAFunction(_)));
}

#[test]
fn closures_capture_exactly_their_free_variables() {
    let v = eval_a("((lambda (a b c) (lambda (x) (+ x b))) 1 2 3)").unwrap();
    let Value::Closure(c) = v else { panic!() };
    let bound: Vec<_> = c.env.entries().iter().map(|(s, _)| s.name()).collect();
    assert_eq!(bound, ["b"]);
}

#[test]
fn evaluation_errors() {
    for eval in [eval_direct, eval_a, eval_b] {
        assert!(matches!(eval("(+ 1 nope)"), Err(EvalError::Unbound(_))));
        assert!(matches!(eval("(1 2)"), Err(EvalError::NotAFunction(_))));
        assert!(matches!(eval("(/ 1 0)"), Err(EvalError::DivisionByZero)));
        assert!(matches!(eval("(car 5)"), Err(EvalError::Type { .. })));
        assert!(matches!(eval("(+ 1 (cons 1 2))"), Err(EvalError::Type { .. })));
    }
}

#[test]
fn sugar_forms() {
    let src = "
        ; comment
        (define (fact n) (if (zero? n) 1 (* n (fact (- n 1)))))
        (define (sign x) (cond ((< x 0) -1) ((> x 0) 1) (else 0)))
        (define (both a b) (and a b))
        (define (either a b) (or a b))
        (list (fact 5)
              (let ((a 2) (b 3)) (* a b))
              (let* ((a 2) (b (* a a))) b)
              (sign -3) (sign 0)
              (both #t #f) (either #f 7) (not #f))";
    for eval in [eval_direct, eval_a, eval_b] {
        let v = eval(src).unwrap();
        assert_eq!(v.to_string(), "(120 6 4 -1 0 #f 7 #t)");
    }
}

#[test]
fn quoted_data() {
    let v = eval_a("(cdr '(1 2 3))").unwrap();
    assert_eq!(v.to_string(), "(2 3)");
    assert_eq!(eval_a("(null? '())").unwrap().to_string(), "#t");
}

#[test]
fn evaluators_agree_on_corpus() {
    for e in corpus::entries().iter() {
        let src = e.primal();
        let d = eval_direct(&src).unwrap();
        let a = eval_a(&src).unwrap();
        let b = eval_b(&src).unwrap();
        assert!(d.bits_eq(&a), "{}: direct {d} vs A {a}", e.name);
        assert!(a.bits_eq(&b), "{}: A {a} vs B {b}", e.name);
    }
}

#[test]
fn evaluation_is_repeatable() {
    let src = corpus::entries()[4].primal();
    let first = eval_a(&src).unwrap();
    for _ in 0..3 {
        assert!(eval_a(&src).unwrap().bits_eq(&first));
    }
}

#[test]
fn printing_round_trips_on_sugar() {
    for src in ["(lambda (x) (- x))", "(lambda (v) (cond ((null? v) '()) (else (or (car v) #f))))"] {
        let once = parse_expr(src).unwrap().to_string();
        assert_eq!(parse_expr(&once).unwrap().to_string(), once);
    }
}

#[test]
fn printing_round_trips() {
    for e in corpus::entries() {
        let prog = parse_program(&e.primal()).unwrap();
        for (_, body) in prog.defs.iter() {
            let once = body.to_string();
            let again = parse_expr(&once)
                .unwrap_or_else(|err| panic!("{}: reparse of {once}: {err}", e.name))
                .to_string();
            assert_eq!(once, again, "{}", e.name);
        }
    }
}
