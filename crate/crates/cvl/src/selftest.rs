//! Quick invariant checks bundled with the library, run by `cvl selftest`.

use crate::corpus;
use crate::drivers::{
    coalesce, eta, plan, plan_with, schedule_oracle, Algorithm, CheckpointConfig, Criterion,
    Schedule, Split,
};
use crate::harness::{run_source, Mode, PipelineKind, RunOptions};
use crate::convert::PipelineB;
use crate::interrupt::{Pipeline, PipelineA};
use crate::symbol::Symbol;
use crate::syntax;
use crate::{Ctx, Value};

pub struct Check {
    pub name: &'static str,
    pub result: Result<String, String>,
}

/// Runs every check, reporting each as it finishes.
pub fn run(mut report: impl FnMut(&Check)) -> bool {
    let checks: [(&'static str, fn() -> Result<String, String>); 6] = [
        ("eta-and-pick", eta_and_pick),
        ("binomial-split-optimal", binomial_optimal),
        ("tree-correspondence", tree_correspondence),
        ("interrupt-resume", interrupt_resume),
        ("pipeline-parity", pipeline_parity),
        ("checkpoint-interchangeable", interchangeable),
    ];
    let mut ok = true;
    for (name, f) in checks {
        let c = Check { name, result: f() };
        ok &= c.result.is_ok();
        report(&c);
    }
    ok
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eta_and_pick() -> Result<String, String> {
    ensure(eta(2, 2) == 6 && eta(3, 3) == 20, || "eta mismatch".into())?;
    let mut cases = 0;
    for n in [100u64, 1000, 12345, 99999] {
        for d in 1..=6 {
            let (_, t) = crate::drivers::pick(Criterion::FixedSpace(d), n, 64).map_err(|e| e.to_string())?;
            let segs = n.div_ceil(64);
            ensure(eta(d, t) >= segs && (t == 1 || eta(d, t - 1) < segs), || {
                format!("pick(fixed-space={d}, {n}) gave t={t}")
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases"))
}

fn binomial_optimal() -> Result<String, String> {
    let sched = Schedule {
        alpha: 1,
        split: Split::Binomial,
        min_part: 1,
    };
    for d in 1..=4u64 {
        for l in 2..=20u64 {
            let cfg = CheckpointConfig {
                algorithm: Algorithm::Binary,
                split: Split::Binomial,
                criterion: Criterion::FixedSpace(d),
                alpha: 1,
            };
            let p = plan_with(&cfg, &sched, l).map_err(|e| e.to_string())?;
            let want = schedule_oracle(l as usize, d as usize);
            ensure(p.stats.recompute_steps == want, || {
                format!("L={l} d={d}: {} vs optimum {want}", p.stats.recompute_steps)
            })?;
        }
    }
    Ok("L ≤ 20, d ≤ 4".into())
}

fn tree_correspondence() -> Result<String, String> {
    for (d, n) in [(2u64, 5000u64), (3, 20000), (4, 777), (2, 64 * 9)] {
        let cfg = |algorithm| CheckpointConfig {
            algorithm,
            split: Split::Binomial,
            criterion: Criterion::FixedSpace(d),
            alpha: 64,
        };
        let bin = plan(&cfg(Algorithm::Binary), n).map_err(|e| e.to_string())?;
        let tv = plan(&cfg(Algorithm::Treeverse), n).map_err(|e| e.to_string())?;
        ensure(coalesce(&bin.events) == tv.events, || format!("d={d} n={n}: traces differ"))?;
    }
    Ok("4 settings".into())
}

fn setup<P: Pipeline>(p: &P, entry: &corpus::Entry) -> Result<(Ctx, Value, Value), String> {
    let src = format!("{}\n(define %input {})\n", entry.defs, entry.input);
    let prog = syntax::parse_program(&src).map_err(|e| e.to_string())?;
    let mut ctx = Ctx::new();
    p.install(&mut ctx, &prog).map_err(|e| e.to_string())?;
    let f = ctx.globals[&Symbol::intern("f")].clone();
    let x = ctx.globals[&Symbol::intern("%input")].clone();
    Ok((ctx, f, x))
}

fn small_entries() -> Vec<corpus::Entry> {
    corpus::entries()
        .into_iter()
        .filter(|e| !e.name.starts_with("example"))
        .collect()
}

fn interrupt_resume() -> Result<String, String> {
    let pairs = interrupt_resume_on(&PipelineA)? + interrupt_resume_on(&PipelineB)?;
    Ok(format!("{pairs} pairs"))
}

fn interrupt_resume_on<P: Pipeline>(p: &P) -> Result<usize, String> {
    let mut pairs = 0;
    for e in small_entries() {
        let (mut ctx, f, x) = setup(p, &e)?;
        let err = |e: crate::EvalError| e.to_string();
        let y = p.apply(&mut ctx, f.clone(), x.clone()).map_err(err)?;
        let n = p.primops(&mut ctx, &f, &x).map_err(err)?;
        for l in [1, n / 3, n / 2, n - 1] {
            if l == 0 || l >= n {
                continue;
            }
            let z = p.interrupt(&mut ctx, &f, &x, l).map_err(err)?;
            let r = p.make_r();
            let y2 = p.resume(&mut ctx, &z).map_err(err)?;
            let steps = p.primops(&mut ctx, &r, &z).map_err(err)?;
            ensure(y.bits_eq(&y2), || format!("{} {}: resume at {l} changed the result", p.name(), e.name))?;
            ensure(steps == n - l, || {
                format!("{} {}: resumption took {steps} steps, expected {}", p.name(), e.name, n - l)
            })?;
            pairs += 1;
        }
    }
    Ok(pairs)
}

fn pipeline_parity() -> Result<String, String> {
    let entries = small_entries();
    for e in &entries {
        let (mut ca, fa, xa) = setup(&PipelineA, e)?;
        let (mut cb, fb, xb) = setup(&PipelineB, e)?;
        let na = PipelineA.primops(&mut ca, &fa, &xa).map_err(|e| e.to_string())?;
        let nb = PipelineB.primops(&mut cb, &fb, &xb).map_err(|e| e.to_string())?;
        ensure(na == nb, || format!("{}: primops {na} vs {nb}", e.name))?;
    }
    Ok(format!("{} programs", entries.len()))
}

fn interchangeable() -> Result<String, String> {
    let entries = small_entries();
    for e in &entries {
        for pipeline in [PipelineKind::A, PipelineKind::B] {
            for algorithm in [Algorithm::Bisect, Algorithm::Binary, Algorithm::Treeverse] {
                let mut opts = RunOptions {
                    pipeline,
                    mode: Some(Mode::Reverse),
                    checkpoint: CheckpointConfig {
                        algorithm,
                        split: Split::Binomial,
                        criterion: Criterion::FixedSpace(2),
                        alpha: 8,
                    },
                    ..RunOptions::default()
                };
                let src = e.program("*j");
                let r = run_source(&src, &opts).map_err(|e| e.to_string())?;
                opts.mode = Some(Mode::Checkpoint);
                let c = run_source(&src, &opts).map_err(|e| e.to_string())?;
                ensure(r.value.bits_eq(&c.value), || {
                    format!("{} ({pipeline}, {algorithm}): {} vs {}", e.name, r.value, c.value)
                })?;
            }
        }
    }
    Ok(format!("{} programs", entries.len()))
}
