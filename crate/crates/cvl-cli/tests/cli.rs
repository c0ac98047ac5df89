use std::io::Write;
use std::process::{Command, Output};

fn cvl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvl"))
        .args(args)
        .output()
        .expect("run cvl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn program(src: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".cvl").tempfile().unwrap();
    f.write_all(src.as_bytes()).unwrap();
    f
}

const HEADER: &str = "mode,algorithm,split,criterion,alpha,pipeline,n,l,L,peak_tape,peak_snapshots,recompute_steps,leaves,wall_ms";

#[test]
fn run_prints_value_and_metrics() {
    let f = program("(define (f x) (* x x))\n(*j f 3 1)\n");
    let o = cvl(&["run", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "(9 . 6)");
    assert_eq!(lines[1], HEADER);
    assert!(lines[2].starts_with("reverse,bisect,bisection,log,64,a,0,0,3,"));
}

#[test]
fn run_with_checkpointing_options_and_files() {
    let f = program("(define (f x) (sin (* x (* x x))))\n(*j f 0.7 1)\n");
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let trace = dir.path().join("t.jsonl");
    let base = cvl(&["run", f.path().to_str().unwrap()]);
    let o = cvl(&[
        "run",
        f.path().to_str().unwrap(),
        "--mode",
        "checkpoint",
        "--algorithm",
        "treeverse",
        "--split",
        "binomial",
        "--criterion",
        "fixed-space=2",
        "--alpha",
        "8",
        "--pipeline",
        "b",
        "--metrics",
        metrics.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), stdout(&base).lines().next().unwrap());
    let csv = std::fs::read_to_string(&metrics).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("checkpoint,treeverse,binomial,fixed-space=2,8,b,"), "{row}");
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.lines().count() > 2);
}

#[test]
fn evaluation_errors_exit_one() {
    let f = program("(car 5)\n");
    let o = cvl(&["run", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = cvl(&["run", "/nonexistent/file.cvl"]);
    assert_eq!(o.status.code(), Some(1));
    let f = program("(define (f x) (+ x 1)\n");
    assert_eq!(cvl(&["run", f.path().to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let f = program("(+ 1 2)\n");
    let p = f.path().to_str().unwrap();
    for args in [
        vec!["run", p, "--criterion", "log"],
        vec!["run", p, "--alpha", "2"],
        vec!["run", p, "--algorithm", "zigzag"],
        vec!["run", p, "--criterion", "fixed-space=0", "--algorithm", "binary"],
        vec!["bench", "example", "--n", "3", "--l", "4"],
        vec!["bench", "example", "--n", "2"],
        vec!["frobnicate"],
    ] {
        assert_eq!(cvl(&args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(cvl(&["--help"]).status.code(), Some(0));
}

#[test]
fn bench_emits_one_row_per_l() {
    let o = cvl(&[
        "bench", "example", "--n", "2", "--l-list", "1,2,4", "--mode", "checkpoint", "--algorithm", "binary",
        "--alpha", "16",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 4);
    for (row, l) in lines[1..].iter().zip([1, 2, 4]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[..8], ["checkpoint", "binary", "bisection", "log", "16", "a", "2", &l.to_string()]);
    }
}

#[test]
fn selftest_passes() {
    let o = cvl(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().count() >= 6);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}
