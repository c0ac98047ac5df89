mod common;

use common::*;
use cvl::drivers::{Algorithm, CheckpointConfig, Criterion, Split};
use cvl::harness::{
    build_example, example_reference, run_benchmark, run_source, write_csv, write_trace,
    BenchmarkParams, Mode, PipelineKind, RunMetrics, RunOptions, CSV_HEADER,
};

/// Inner-loop durations recomputed from the definition with plain loops.
fn durations(l: u64, phi: f64) -> Vec<u64> {
    let floor_lg = |mut x: u64| {
        let mut k = 0;
        while x >= 2 {
            x /= 2;
            k += 1;
        }
        k
    };
    let m = 1013 * (3f64.powf(phi).floor() as u64);
    (1..=l)
        .map(|i| 2u64.pow(floor_lg(l) - floor_lg(1 + (m * i) % l)))
        .collect()
}

fn opts(mode: Mode, algorithm: Algorithm, alpha: u64) -> RunOptions {
    RunOptions {
        mode: Some(mode),
        checkpoint: CheckpointConfig {
            algorithm,
            split: Split::Bisection,
            criterion: Criterion::Logarithmic,
            alpha,
        },
        ..RunOptions::default()
    }
}

fn leaves_of(v: &cvl::Value) -> (f64, Vec<f64>) {
    let (y, g) = pair(v);
    (num(&y), g.ground_leaves())
}

#[test]
fn parameter_validation() {
    assert!(BenchmarkParams::new(2, 1).validate().is_ok());
    assert!(BenchmarkParams::new(3, 4).validate().is_err());
    assert!(BenchmarkParams::new(0, 4).validate().is_err());
    assert!(BenchmarkParams::new(4, 0).validate().is_err());
    let p = BenchmarkParams { phi: -1.0, ..BenchmarkParams::new(4, 4) };
    assert!(p.validate().is_err());
    assert!(build_example(&BenchmarkParams::new(5, 2), Mode::Reverse).is_err());
}

#[test]
fn inner_durations_follow_the_definition() {
    assert_eq!(BenchmarkParams::new(2, 4).multiplier(), 3039);
    for l in [1u64, 2, 3, 7, 16, 100, 1024, 8192] {
        for phi in [0.0, 1.0, 2.5] {
            let p = BenchmarkParams { phi, ..BenchmarkParams::new(2, l) };
            let want = durations(l, phi);
            let got: Vec<u64> = (1..=l).map(|i| p.inner(i)).collect();
            assert_eq!(got, want, "l={l} phi={phi}");
            assert!(got.iter().all(|m| m.is_power_of_two() && *m <= l.next_power_of_two()));
        }
    }
    let total = |l| durations(l, 1.0).iter().sum::<u64>();
    assert_eq!(total(1), 1);
    assert_eq!(total(8192), 106_497);
}

#[test]
fn smallest_benchmark_matches_host_reference_and_differences() {
    let p = BenchmarkParams::new(2, 1);
    let out = run_benchmark(&p, &opts(Mode::Reverse, Algorithm::Bisect, 64)).unwrap();
    let (y, g) = leaves_of(&out.value);
    let x = p.initial_state();
    let yr = example_reference(&p, &x);
    assert!(rel_err(y, yr) <= 1e-14, "{y} vs {yr}");
    for i in 0..x.len() {
        let h = 1e-6;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (example_reference(&p, &xp) - example_reference(&p, &xm)) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "[{i}] fd {fd} vs ad {}", g[i]);
    }
}

#[test]
fn host_reference_tracks_the_interpreter() {
    for (n, l) in [(4, 4), (6, 5), (2, 16)] {
        let p = BenchmarkParams::new(n, l);
        let out = run_benchmark(&p, &opts(Mode::Reverse, Algorithm::Bisect, 64)).unwrap();
        let (y, _) = leaves_of(&out.value);
        assert!(rel_err(y, example_reference(&p, &p.initial_state())) <= 1e-12, "n={n} l={l}");
    }
}

#[test]
fn checkpointing_reproduces_reverse_on_the_benchmark() {
    let p = BenchmarkParams::new(4, 32);
    let rev = run_benchmark(&p, &opts(Mode::Reverse, Algorithm::Bisect, 64)).unwrap();
    for alg in [Algorithm::Bisect, Algorithm::Binary, Algorithm::Treeverse] {
        for kind in [PipelineKind::A, PipelineKind::B] {
            let o = RunOptions { pipeline: kind, ..opts(Mode::Checkpoint, alg, 64) };
            let cp = run_benchmark(&p, &o).unwrap();
            assert!(cp.value.bits_eq(&rev.value), "{alg} {kind:?}");
            assert_eq!(cp.metrics.big_l, rev.metrics.big_l);
            assert!(cp.metrics.leaves > 1);
            assert!(cp.metrics.peak_tape < rev.metrics.peak_tape, "{alg} {kind:?}");
        }
    }
}

#[test]
fn metrics_rows_and_csv() {
    let p = BenchmarkParams::new(2, 4);
    let a = run_benchmark(&p, &opts(Mode::Checkpoint, Algorithm::Treeverse, 16)).unwrap();
    let b = run_benchmark(&p, &opts(Mode::Checkpoint, Algorithm::Treeverse, 16)).unwrap();
    let strip = |m: &RunMetrics| RunMetrics { wall_ms: 0, ..m.clone() };
    assert_eq!(strip(&a.metrics), strip(&b.metrics));
    assert!(a.value.bits_eq(&b.value));
    let m = &a.metrics;
    assert_eq!((m.n, m.l, m.alpha), (2, 4, 16));
    assert_eq!((m.mode.as_str(), m.algorithm.as_str(), m.pipeline.as_str()), ("checkpoint", "treeverse", "a"));
    assert_eq!(m.criterion, "log");

    let mut buf = Vec::new();
    write_csv(&mut buf, &[a.metrics.clone(), b.metrics.clone()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    let cols = CSV_HEADER.split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
    assert!(lines[1].starts_with("checkpoint,treeverse,bisection,log,16,a,2,4,"));
}

#[test]
fn program_runs_report_their_mode() {
    let src = "(define (f x) (* x (sin x))) (checkpoint-*j f 0.5 1.0)";
    let out = run_source(src, &RunOptions::default()).unwrap();
    assert_eq!(out.metrics.mode, "checkpoint");
    let forced = RunOptions { mode: Some(Mode::Reverse), ..RunOptions::default() };
    let rev = run_source(src, &forced).unwrap();
    assert_eq!(rev.metrics.mode, "reverse");
    assert!(rev.value.bits_eq(&out.value));
    let plain = run_source("(define (f x) (* x x)) (f 3)", &RunOptions::default()).unwrap();
    assert_eq!(num(&plain.value), 9.0);
    assert_eq!(plain.metrics.leaves, 0);
    assert!(run_source("(define y 1)", &RunOptions::default()).is_err());
    assert!(run_source("(f", &RunOptions::default()).is_err());
}

#[test]
fn traces_are_json_lines() {
    let src = "(define (f x) (sin (* x (* x x)))) (checkpoint-*j f 0.5 1.0)";
    let o = RunOptions { trace: true, ..opts(Mode::Checkpoint, Algorithm::Binary, 8) };
    let out = run_source(src, &o).unwrap();
    assert!(!out.trace.is_empty());
    let mut buf = Vec::new();
    write_trace(&mut buf, &out.trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), out.trace.len());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("event").is_some_and(|e| e.is_string()));
    }
    assert!(text.lines().next().unwrap().contains("\"seed\""));
}
