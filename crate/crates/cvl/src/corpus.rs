//! A small corpus of differentiable programs used by `selftest` and the test
//! suites. Each entry defines `f` and names an input and an output
//! cotangent.

use crate::harness::{build_example, BenchmarkParams, Mode};

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    /// Definitions, including `f`.
    pub defs: String,
    /// Expression for the input.
    pub input: String,
    /// Expression for the output cotangent.
    pub cotangent: String,
    /// Differentiable in a neighbourhood of the input.
    pub smooth: bool,
}

impl Entry {
    fn new(name: &str, defs: &str, input: &str, cotangent: &str) -> Entry {
        Entry {
            name: name.into(),
            defs: defs.into(),
            input: input.into(),
            cotangent: cotangent.into(),
            smooth: true,
        }
    }

    /// The program `defs (op f input cotangent)`.
    pub fn program(&self, op: &str) -> String {
        format!("{}\n({op} f {} {})\n", self.defs, self.input, self.cotangent)
    }

    /// The program `defs (f input)`.
    pub fn primal(&self) -> String {
        format!("{}\n(f {})\n", self.defs, self.input)
    }

    /// The program evaluating `f` at `input` with `input` replaced.
    pub fn primal_at(&self, input: &str) -> String {
        format!("{}\n(f {input})\n", self.defs)
    }
}

const LIST_UTILS: &str = "
(define (map g v) (if (null? v) '() (cons (g (car v)) (map g (cdr v)))))
(define (fold g acc v) (if (null? v) acc (fold g (g acc (car v)) (cdr v))))
";

pub fn entries() -> Vec<Entry> {
    let mut out = vec![
        Entry::new("cube", "(define (f x) (* x (* x x)))", "1.5", "1.0"),
        Entry::new(
            "quartic",
            "(define (f x) (+ (- (* 3 (* (* x x) (* x x))) (* 2 (* x x))) (- x 7)))",
            "0.7",
            "1.0",
        ),
        Entry::new(
            "horner",
            "(define (horner cs x acc) (if (null? cs) acc (horner (cdr cs) x (+ (* acc x) (car cs)))))
             (define (f x) (horner (list 1.5 -2 0.25 3 -1 0.5) x 0))",
            "1.2",
            "1.0",
        ),
        Entry::new(
            "trig",
            "(define (f x) (* (sin (cos x)) (exp (/ x 3))))",
            "0.4",
            "1.0",
        ),
        Entry::new(
            "sin-chain",
            "(define (loop x i) (if (zero? i) x (loop (sin (* 1.01 x)) (- i 1))))
             (define (f x) (loop x 20))",
            "0.5",
            "1.0",
        ),
        Entry::new(
            "transcendental",
            "(define (f x) (+ (atan (* x x)) (* (log (+ 1 (* x x))) (sqrt (+ 2 x)))))",
            "0.9",
            "2.0",
        ),
        Entry::new(
            "pair-in",
            "(define (f p) (let ((a (car p)) (b (cdr p))) (+ (* a b) (sin a))))",
            "(cons 0.3 1.7)",
            "1.0",
        ),
        Entry::new(
            "pair-out",
            "(define (f p) (let ((a (car p)) (b (cdr p))) (cons (* a (* b b)) (/ a b))))",
            "(cons 1.3 0.6)",
            "(cons 1.0 0.5)",
        ),
        Entry::new(
            "list-norm",
            &format!(
                "{LIST_UTILS}
                 (define (f v) (sqrt (fold (lambda (acc y) (+ acc (* y y))) 0 v)))"
            ),
            "(list 1.0 -2.0 0.5 3.0)",
            "1.0",
        ),
        Entry::new(
            "closure-map",
            &format!(
                "{LIST_UTILS}
                 (define (f x) (fold + 0 (map (lambda (y) (sin (* y x))) (list 1 2 3 4))))"
            ),
            "0.3",
            "1.0",
        ),
        Entry::new(
            "branch",
            "(define (f x) (if (> x 1) (* x (* x x)) (sin x)))",
            "1.25",
            "1.0",
        ),
        Entry::new(
            "newton-sqrt",
            "(define (iter x y)
               (if (< (abs (- (* y y) x)) 1e-12) y (iter x (/ (+ y (/ x y)) 2))))
             (define (abs a) (if (< a 0) (- 0 a) a))
             (define (f x) (iter x x))",
            "2.5",
            "1.0",
        ),
        Entry::new(
            "grow-until",
            "(define (grow x n) (if (> x 10) (* x n) (grow (+ (* 1.3 x) (sin x)) (+ n 1))))
             (define (f x) (grow x 1))",
            "0.8",
            "1.0",
        ),
        Entry {
            smooth: false,
            ..Entry::new(
                "floor-step",
                "(define (f x) (+ (* x (floor (* 3 x))) (* 0.5 x)))",
                "1.1",
                "1.0",
            )
        },
    ];
    for (n, l) in [(10, 8), (4, 64), (2, 256)] {
        out.push(example_entry(n, l));
    }
    out
}

/// The adaptive-grid benchmark as a corpus entry.
pub fn example_entry(n: usize, l: u64) -> Entry {
    let src = build_example(&BenchmarkParams::new(n, l), Mode::Reverse)
        .expect("valid benchmark parameters");
    // Drop the final `(*j f x0 1.0)` line; the rest defines f and x0.
    let defs = src
        .trim_end()
        .rsplit_once('\n')
        .map(|(d, _)| d.to_string())
        .unwrap_or_default();
    Entry::new(&format!("example-n{n}-l{l}"), &defs, "x0", "1.0")
}
