//! Running programs under a chosen pipeline and checkpoint configuration,
//! collecting evaluator-level metrics, and the adaptive-grid benchmark.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::ad;
use crate::ast::{Expr, TernOp};
use crate::convert::PipelineB;
use crate::ctx::Ctx;
use crate::drivers::{self, CheckpointConfig, Event};
use crate::error::EvalError;
use crate::interrupt::{Pipeline, PipelineA};
use crate::syntax::{self, Program};
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Reverse,
    Checkpoint,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Reverse => "reverse",
            Mode::Checkpoint => "checkpoint",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reverse" => Ok(Mode::Reverse),
            "checkpoint" => Ok(Mode::Checkpoint),
            _ => Err(format!("unknown mode `{s}` (reverse or checkpoint)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    A,
    B,
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PipelineKind::A => "a",
            PipelineKind::B => "b",
        })
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a" | "A" => Ok(PipelineKind::A),
            "b" | "B" => Ok(PipelineKind::B),
            _ => Err(format!("unknown pipeline `{s}` (a or b)")),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub mode: String,
    pub algorithm: String,
    pub split: String,
    pub criterion: String,
    pub alpha: u64,
    pub pipeline: String,
    pub n: u64,
    pub l: u64,
    #[serde(rename = "L")]
    pub big_l: u64,
    pub peak_tape: u64,
    pub peak_snapshots: u64,
    pub recompute_steps: u64,
    pub leaves: u64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "mode,algorithm,split,criterion,alpha,pipeline,n,l,L,peak_tape,peak_snapshots,recompute_steps,leaves,wall_ms";

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub pipeline: PipelineKind,
    /// Overrides the operator of a top-level `*j`/`checkpoint-*j` call.
    pub mode: Option<Mode>,
    pub checkpoint: CheckpointConfig,
    pub trace: bool,
    pub cell_limit: Option<usize>,
    /// Benchmark parameters copied into the metrics row.
    pub n: u64,
    pub l: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            pipeline: PipelineKind::A,
            mode: None,
            checkpoint: CheckpointConfig::default(),
            trace: false,
            cell_limit: None,
            n: 0,
            l: 0,
        }
    }
}

pub struct RunOutput {
    pub value: Value,
    pub metrics: RunMetrics,
    pub trace: Vec<Event>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("parse error at {0}")]
    Parse(#[from] crate::error::ParseError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("program has no expression to evaluate")]
    NoMain,
    #[error("invalid benchmark parameters: {0}")]
    Params(String),
}

pub fn run_source(src: &str, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let prog = syntax::parse_program(src)?;
    match opts.pipeline {
        PipelineKind::A => run_program(&PipelineA, &prog, opts),
        PipelineKind::B => run_program(&PipelineB, &prog, opts),
    }
}

pub fn run_program<P: Pipeline>(
    pipe: &P,
    prog: &Program,
    opts: &RunOptions,
) -> Result<RunOutput, RunError> {
    let mut ctx = Ctx::with_checkpoint(opts.checkpoint);
    ctx.ad.set_cell_limit(opts.cell_limit);
    pipe.install(&mut ctx, prog)?;
    let main = prog.main().ok_or(RunError::NoMain)?;
    for e in &prog.exprs[..prog.exprs.len() - 1] {
        pipe.eval(&mut ctx, e)?;
    }

    let ad_call = match &**main {
        Expr::Ternary(op @ (TernOp::ReverseJ | TernOp::CheckpointJ), f, x, d) => {
            Some((*op, f, x, d))
        }
        _ => None,
    };
    let (value, mode, big_l, wall_ms) = match ad_call {
        Some((op, f, x, d)) => {
            let f = pipe.eval(&mut ctx, f)?;
            let x = pipe.eval(&mut ctx, x)?;
            let d = pipe.eval(&mut ctx, d)?;
            let mode = opts.mode.unwrap_or(if op == TernOp::CheckpointJ {
                Mode::Checkpoint
            } else {
                Mode::Reverse
            });
            let big_l = pipe.primops(&mut ctx, &f, &x)?;
            ctx.trace = opts.trace.then(Vec::new);
            ctx.reset_metrics();
            let t0 = Instant::now();
            let (y, g) = match mode {
                Mode::Reverse => {
                    let mut apply = |c: &mut Ctx, f: Value, x: Value| pipe.apply(c, f, x);
                    ad::reverse_j(&mut ctx, &mut apply, f, &x, &d)?
                }
                Mode::Checkpoint => drivers::checkpoint_j(&mut ctx, pipe, f, &x, &d)?,
            };
            let ms = t0.elapsed().as_millis() as u64;
            (Value::cons(y, g), mode, big_l, ms)
        }
        None => {
            ctx.trace = opts.trace.then(Vec::new);
            ctx.reset_metrics();
            let t0 = Instant::now();
            let v = pipe.eval(&mut ctx, main)?;
            let ms = t0.elapsed().as_millis() as u64;
            let mode = if ctx.stats.leaves > 0 {
                Mode::Checkpoint
            } else {
                Mode::Reverse
            };
            (v, mode, ctx.stats.steps, ms)
        }
    };

    let cp = &opts.checkpoint;
    let metrics = RunMetrics {
        mode: mode.to_string(),
        algorithm: cp.algorithm.to_string(),
        split: cp.split.to_string(),
        criterion: cp.criterion.to_string(),
        alpha: cp.alpha,
        pipeline: pipe.name().to_string(),
        n: opts.n,
        l: opts.l,
        big_l,
        peak_tape: ctx.ad.peak_cells() as u64,
        peak_snapshots: ctx.stats.peak_snapshots,
        recompute_steps: ctx.stats.recompute_steps,
        leaves: ctx.stats.leaves,
        wall_ms,
    };
    Ok(RunOutput {
        value,
        metrics,
        trace: ctx.trace.take().unwrap_or_default(),
    })
}

pub fn write_csv<W: Write>(out: W, rows: &[RunMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(mut out: W, events: &[Event]) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

// ---- the adaptive-grid benchmark ----

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkParams {
    /// State dimension, even.
    pub n: usize,
    /// Outer iterations.
    pub l: u64,
    /// Inner-loop hyperparameter.
    pub phi: f64,
}

impl BenchmarkParams {
    pub fn new(n: usize, l: u64) -> Self {
        BenchmarkParams { n, l, phi: 1.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(format!("state dimension must be even and ≥ 2, got {}", self.n));
        }
        if self.l < 1 {
            return Err("outer loop needs at least one iteration".into());
        }
        if !self.phi.is_finite() || self.phi < 0.0 {
            return Err(format!("phi must be finite and non-negative, got {}", self.phi));
        }
        Ok(())
    }

    /// Multiplier in the inner-duration formula: 1013·⌊3^φ⌋.
    pub fn multiplier(&self) -> u64 {
        1013 * 3f64.powf(self.phi).floor() as u64
    }

    /// Inner-loop duration at outer iteration `i` (1-based).
    pub fn inner(&self, i: u64) -> u64 {
        let lg = |x: u64| 63 - x.leading_zeros() as u64;
        let r = (self.multiplier() % self.l) * (i % self.l) % self.l;
        1 << (lg(self.l) - lg(1 + r))
    }

    /// Initial state.
    pub fn initial_state(&self) -> Vec<f64> {
        (0..self.n).map(|j| ((j + 1) as f64).sin()).collect()
    }
}

/// Source of the benchmark: `f` maps the state to the sum of the state after
/// `l` outer iterations, and the program's result is `op f x 1`.
pub fn build_example(p: &BenchmarkParams, mode: Mode) -> Result<String, String> {
    p.validate()?;
    let mut s = String::new();
    let op = match mode {
        Mode::Reverse => "*j",
        Mode::Checkpoint => "checkpoint-*j",
    };
    let _ = writeln!(s, "; adaptive-grid example, n = {}, l = {}", p.n, p.l);
    s.push_str(EXAMPLE_PRELUDE);
    let _ = writeln!(s, "(define l {})", p.l);
    let _ = writeln!(s, "(define multiplier {})", p.multiplier());
    s.push_str(EXAMPLE_BODY);
    s.push_str("(define x0 (list");
    for v in p.initial_state() {
        let _ = write!(s, " {v:?}");
    }
    s.push_str("))\n");
    let _ = writeln!(s, "({op} f x0 1.0)");
    Ok(s)
}

/// Builds and runs the benchmark. The mode in `opts` selects the operator.
pub fn run_benchmark(p: &BenchmarkParams, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let mode = opts.mode.unwrap_or(Mode::Reverse);
    let src = build_example(p, mode).map_err(RunError::Params)?;
    let opts = RunOptions {
        mode: Some(mode),
        n: p.n as u64,
        l: p.l,
        ..opts.clone()
    };
    run_source(&src, &opts)
}

const EXAMPLE_PRELUDE: &str = "\
(define (sum v) (sum-acc v 0))
(define (sum-acc v acc) (if (null? v) acc (sum-acc (cdr v) (+ acc (car v)))))
(define (sum-squares v acc)
  (if (null? v) acc (sum-squares (cdr v) (+ acc (* (car v) (car v))))))
(define (reverse-onto v acc) (if (null? v) acc (reverse-onto (cdr v) (cons (car v) acc))))

; Rotates (v0 v1), (v2 v3), ... by the angle with cosine c and sine s.
(define (rotate-pairs v c s acc)
  (if (null? v)
      (reverse-onto acc '())
      (let ((a (car v)) (b (car (cdr v))))
        (rotate-pairs (cdr (cdr v)) c s
                      (cons (+ (* s a) (* c b)) (cons (- (* c a) (* s b)) acc))))))

(define (last v) (if (null? (cdr v)) (car v) (last (cdr v))))
(define (but-last v acc)
  (if (null? (cdr v)) (reverse-onto acc '()) (but-last (cdr v) (cons (car v) acc))))

; Odd-even pairs, then even-odd pairs with the last coordinate paired with
; the first.
(define (step v c s)
  (let* ((w (rotate-pairs v c s '()))
         (u (rotate-pairs (reverse-onto (reverse-onto (cdr w) '()) (list (car w))) c s '())))
    (cons (last u) (but-last u '()))))

(define (ilg x acc) (if (< x 2) acc (ilg (floor (/ x 2)) (+ acc 1))))
(define (pow2 k acc) (if (zero? k) acc (pow2 (- k 1) (* 2 acc))))
(define (modulo a b) (- a (* b (floor (/ a b)))))
";

const EXAMPLE_BODY: &str = "\
(define (duration i)
  (pow2 (- (ilg l 0) (ilg (+ 1 (modulo (* (modulo multiplier l) i) l)) 0)) 1))
(define (inner v j c s) (if (zero? j) v (inner (step v c s) (- j 1) c s)))
(define (outer v i c s)
  (if (> i l) v (outer (inner v (duration i) c s) (+ i 1) c s)))
(define (f x)
  (let* ((theta (* 0.01 (sqrt (sum-squares x 0))))
         (c (cos theta))
         (s (sin theta)))
    (sum (outer x 1 c s))))
";

/// Host reference of the benchmark function.
pub fn example_reference(p: &BenchmarkParams, x: &[f64]) -> f64 {
    let theta = 0.01 * x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (c, s) = (theta.cos(), theta.sin());
    let mut v = x.to_vec();
    let n = v.len();
    for i in 1..=p.l {
        for _ in 0..p.inner(i) {
            for j in (0..n).step_by(2) {
                let (a, b) = (v[j], v[j + 1]);
                v[j] = c * a - s * b;
                v[j + 1] = s * a + c * b;
            }
            for j in (1..n).step_by(2) {
                let k = (j + 1) % n;
                let (a, b) = (v[j], v[k]);
                v[j] = c * a - s * b;
                v[k] = s * a + c * b;
            }
        }
    }
    v.iter().sum()
}

/// Runs `f` on a thread with a large stack.
pub fn with_big_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(1 << 28)
        .spawn(f)
        .expect("spawn evaluator thread")
        .join()
        .unwrap_or_else(|e| std::panic::resume_unwind(e))
}
