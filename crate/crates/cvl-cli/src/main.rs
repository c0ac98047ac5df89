use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvl::drivers::{Algorithm, CheckpointConfig, Criterion, Split};
use cvl::harness::{
    self, run_benchmark, run_source, BenchmarkParams, Mode, PipelineKind, RunMetrics, RunOptions,
};

/// Interpreter for a small functional language with reverse-mode AD and
/// divide-and-conquer checkpointing.
#[derive(Parser)]
#[command(name = "cvl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a program and print its result and a metrics row.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
        /// Write the driver trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the built-in benchmark.
    Bench {
        #[command(subcommand)]
        which: Bench,
    },
    /// Run the bundled invariant checks.
    Selftest,
}

#[derive(Subcommand)]
enum Bench {
    /// The adaptive-grid rotation example.
    Example {
        /// State dimension (even).
        #[arg(long)]
        n: usize,
        /// Outer iterations.
        #[arg(long, conflicts_with = "l_list", required_unless_present = "l_list")]
        l: Option<u64>,
        /// Comma-separated outer iteration counts, one row each.
        #[arg(long, value_delimiter = ',')]
        l_list: Option<Vec<u64>>,
        /// Inner-loop hyperparameter.
        #[arg(long, default_value_t = 1.0)]
        phi: f64,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

#[derive(Args)]
struct CommonOpts {
    /// reverse or checkpoint; overrides the operator of a top-level AD call.
    #[arg(long)]
    mode: Option<Mode>,
    /// bisect, binary or treeverse.
    #[arg(long, default_value = "bisect")]
    algorithm: Algorithm,
    /// bisection or binomial.
    #[arg(long, default_value = "bisection")]
    split: Split,
    /// fixed-space=D, fixed-time=T or log. Not used by bisect.
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Base-case step count.
    #[arg(long, default_value_t = 64)]
    alpha: u64,
    /// a (CPS interpreter) or b (CPS-converted code).
    #[arg(long, default_value = "a")]
    pipeline: PipelineKind,
    /// Write metrics rows to this CSV file instead of stdout.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

impl CommonOpts {
    fn run_options(&self) -> Result<RunOptions, String> {
        if self.criterion.is_some() && self.algorithm == Algorithm::Bisect {
            return Err("--criterion has no effect with --algorithm bisect".into());
        }
        if self.alpha < cvl::drivers::MIN_ALPHA {
            return Err(format!("--alpha must be at least {}", cvl::drivers::MIN_ALPHA));
        }
        Ok(RunOptions {
            pipeline: self.pipeline,
            mode: self.mode,
            checkpoint: CheckpointConfig {
                algorithm: self.algorithm,
                split: self.split,
                criterion: self.criterion.unwrap_or(Criterion::Logarithmic),
                alpha: self.alpha,
            },
            ..RunOptions::default()
        })
    }
}

enum Failure {
    Usage(String),
    Eval(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Eval(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match harness::with_big_stack(move || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Eval(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { file, opts, trace } => {
            let mut run = opts.run_options().map_err(Failure::Usage)?;
            run.trace = trace.is_some();
            let src = std::fs::read_to_string(&file)
                .map_err(|e| Failure::Eval(format!("{}: {e}", file.display())))?;
            let out = run_source(&src, &run).map_err(|e| Failure::Eval(e.to_string()))?;
            println!("{}", out.value);
            emit_metrics(opts.metrics.as_ref(), &[out.metrics])?;
            if let Some(path) = trace {
                harness::write_trace(BufWriter::new(File::create(path)?), &out.trace)?;
            }
            Ok(())
        }
        Command::Bench {
            which:
                Bench::Example {
                    n,
                    l,
                    l_list,
                    phi,
                    opts,
                },
        } => {
            let run = opts.run_options().map_err(Failure::Usage)?;
            let ls = l_list.or(l.map(|l| vec![l])).unwrap_or_default();
            let mut rows = Vec::with_capacity(ls.len());
            for l in ls {
                let p = BenchmarkParams { n, l, phi };
                p.validate().map_err(Failure::Usage)?;
                let out = run_benchmark(&p, &run).map_err(|e| Failure::Eval(e.to_string()))?;
                rows.push(out.metrics);
            }
            emit_metrics(opts.metrics.as_ref(), &rows)
        }
        Command::Selftest => {
            let ok = cvl::selftest::run(|c| match &c.result {
                Ok(detail) => println!("PASS {}: {detail}", c.name),
                Err(why) => println!("FAIL {}: {why}", c.name),
            });
            if ok {
                Ok(())
            } else {
                Err(Failure::Eval("self-test failed".into()))
            }
        }
    }
}

fn emit_metrics(path: Option<&PathBuf>, rows: &[RunMetrics]) -> Result<(), Failure> {
    let res = match path {
        Some(p) => harness::write_csv(BufWriter::new(File::create(p)?), rows),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            let r = harness::write_csv(&mut lock, rows);
            lock.flush()?;
            r
        }
    };
    res.map_err(|e| Failure::Eval(e.to_string()))
}
