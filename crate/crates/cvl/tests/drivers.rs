mod common;

use common::*;
use cvl::convert::PipelineB;
use cvl::corpus;
use cvl::drivers::{
    coalesce, eta, pick, plan, plan_with, schedule_oracle, Algorithm, CheckpointConfig, Criterion,
    Event, Plan, Role, Schedule, Split, MIN_ALPHA, UNBOUNDED,
};
use cvl::interrupt::{Pipeline, PipelineA};
use cvl::{Ctx, Value};
use proptest::prelude::*;

/// C(n, k) by Pascal's rule, independent of the library's product form.
fn binom(n: u64, k: u64) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k as usize).copied().unwrap_or(0)
}

/// C(n, k) by the product formula, saturating; for arguments where the
/// Pascal row would be too long.
fn binom_big(n: u64, k: u64) -> u128 {
    let k = k.min(n - k) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul(n as u128 - i) / (i + 1);
    }
    c
}

/// Least total advancement for reversing `l` unit steps with `d` stored
/// states, in closed form.
fn optimal_recompute(l: u64, d: u64) -> u64 {
    if l <= 1 {
        return 0;
    }
    let t = (1..).find(|&t| binom(d + t, t) >= l as u128).unwrap();
    t * l - binom(d + t, t - 1) as u64
}

fn cfg(algorithm: Algorithm, split: Split, criterion: Criterion, alpha: u64) -> CheckpointConfig {
    CheckpointConfig {
        algorithm,
        split,
        criterion,
        alpha,
    }
}

fn leaves(p: &Plan) -> Vec<(u64, u64)> {
    p.events
        .iter()
        .filter_map(|e| match e {
            Event::Leaf { from, to } => Some((*from, *to)),
            _ => None,
        })
        .collect()
}

#[test]
fn eta_examples() {
    assert_eq!(eta(1, 1), 2);
    assert_eq!(eta(2, 2), 6);
    assert_eq!(eta(2, 3), 10);
    assert_eq!(eta(3, 3), 20);
    assert_eq!(eta(0, 5), 1);
    assert_eq!(eta(UNBOUNDED, 1), UNBOUNDED);
    assert_eq!(eta(200, 200), UNBOUNDED);
}

#[test]
fn pick_examples() {
    let a = 64;
    // C(11,3) = 165 < 200 ≤ C(12,3) = 220.
    assert_eq!(pick(Criterion::FixedSpace(3), 200 * a, a).unwrap(), (3, 9));
    // C(12,6) = 924 < 1000 ≤ C(14,7) = 3432.
    assert_eq!(pick(Criterion::Logarithmic, 1000 * a, a).unwrap(), (7, 7));
    assert_eq!(pick(Criterion::FixedTime(2), 50 * a, a).unwrap(), (9, 2));
    assert_eq!(pick(Criterion::FixedSpace(5), a, a).unwrap(), (5, 1));
    assert!(pick(Criterion::FixedSpace(0), 100, a).is_err());
    assert!(pick(Criterion::FixedTime(0), 100, a).is_err());
    assert!(pick(Criterion::Logarithmic, 0, a).is_err());
}

#[test]
fn criterion_and_algorithm_parsing() {
    assert_eq!("fixed-space=3".parse::<Criterion>().unwrap(), Criterion::FixedSpace(3));
    assert_eq!("fixed-time=12".parse::<Criterion>().unwrap(), Criterion::FixedTime(12));
    assert_eq!("log".parse::<Criterion>().unwrap(), Criterion::Logarithmic);
    assert!("fixed-space=0".parse::<Criterion>().is_err());
    assert!("fixed-space".parse::<Criterion>().is_err());
    assert!("budget=3".parse::<Criterion>().is_err());
    assert_eq!("treeverse".parse::<Algorithm>().unwrap(), Algorithm::Treeverse);
    assert!("bogus".parse::<Algorithm>().is_err());
    assert_eq!("binomial".parse::<Split>().unwrap(), Split::Binomial);
    for c in [Criterion::FixedSpace(4), Criterion::FixedTime(2), Criterion::Logarithmic] {
        assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
    }
}

#[test]
fn bisection_midpoints() {
    let s = Schedule::new(10, Split::Bisection);
    assert_eq!(s.mid(3, 3, 0, 100).unwrap(), 50);
    assert_eq!(s.mid(3, 3, 20, 45).unwrap(), 32);
    assert!(s.mid(3, 3, 0, 10).is_err());
    // Never closer than the wrapper preamble to either end.
    let s = Schedule::new(1, Split::Binomial);
    let m = s.mid(1, 100, 0, 9).unwrap();
    assert!((s.min_part..=9 - s.min_part).contains(&m));
}

#[test]
fn bisect_tree_for_four_leaves() {
    let a = 16;
    let p = plan(&cfg(Algorithm::Bisect, Split::Bisection, Criterion::Logarithmic, a), 4 * a).unwrap();
    use Event::*;
    let expect = vec![
        Seed { steps: 4 * a },
        Snapshot { id: 0, at: 0, role: Role::Gold },
        Advance { from: 0, to: 2 * a },
        Snapshot { id: 1, at: 2 * a, role: Role::Pink },
        Advance { from: 2 * a, to: 3 * a },
        Leaf { from: 3 * a, to: 4 * a },
        Leaf { from: 2 * a, to: 3 * a },
        Release { id: 1 },
        Snapshot { id: 2, at: 0, role: Role::Extend },
        Advance { from: 0, to: a },
        Leaf { from: a, to: 2 * a },
        Leaf { from: 0, to: a },
        Release { id: 2 },
        Release { id: 0 },
        Done,
    ];
    assert_eq!(p.events, expect);
    assert_eq!(p.stats.recompute_steps, 4 * a);
    assert_eq!(p.stats.peak_snapshots, 2);
    assert_eq!(p.stats.leaves, 4);
}

#[test]
fn bisect_recompute_on_powers_of_two() {
    let a = MIN_ALPHA;
    for k in 0..12u32 {
        let n = a << k;
        let p = plan(&cfg(Algorithm::Bisect, Split::Bisection, Criterion::Logarithmic, a), n).unwrap();
        assert_eq!(p.stats.recompute_steps, n / 2 * k as u64, "k={k}");
        assert_eq!(p.stats.peak_snapshots, k as u64, "k={k}");
        assert_eq!(p.stats.leaves, 1 << k);
    }
}

#[test]
fn schedule_oracle_examples() {
    assert_eq!(schedule_oracle(1, 1), 0);
    assert_eq!(schedule_oracle(2, 1), 1);
    assert_eq!(schedule_oracle(3, 1), 3);
    assert_eq!(schedule_oracle(4, 1), 6);
    // η(2,2) = 6 steps fit two sweeps.
    assert_eq!(schedule_oracle(6, 2), 2 * 6 - 4);
    for l in 1..=30u64 {
        for d in 1..=5u64 {
            assert_eq!(schedule_oracle(l as usize, d as usize), optimal_recompute(l, d), "l={l} d={d}");
        }
    }
}

#[test]
fn binomial_split_attains_the_optimum() {
    let unit = Schedule {
        alpha: 1,
        split: Split::Binomial,
        min_part: 1,
    };
    for d in 1..=5u64 {
        for l in 2..=40u64 {
            let c = cfg(Algorithm::Binary, Split::Binomial, Criterion::FixedSpace(d), 1);
            let p = plan_with(&c, &unit, l).unwrap();
            assert_eq!(p.stats.recompute_steps, optimal_recompute(l, d), "l={l} d={d}");
            assert!(p.stats.peak_snapshots <= d);
        }
    }
}

#[test]
fn budget_exhaustion_leaves_long_leaves() {
    // Two states and one sweep cover only η(2,1) = 3 segments.
    let a = 16;
    let c = cfg(Algorithm::Binary, Split::Bisection, Criterion::FixedSpace(1), a);
    let p = plan(&c, 100 * a).unwrap();
    assert!(leaves(&p).iter().any(|(f, t)| t - f > a));
}

fn arb_config() -> impl Strategy<Value = (CheckpointConfig, u64)> {
    let alg = prop_oneof![Just(Algorithm::Bisect), Just(Algorithm::Binary), Just(Algorithm::Treeverse)];
    let split = prop_oneof![Just(Split::Bisection), Just(Split::Binomial)];
    let crit = prop_oneof![
        (1u64..6).prop_map(Criterion::FixedSpace),
        (1u64..6).prop_map(Criterion::FixedTime),
        Just(Criterion::Logarithmic)
    ];
    (alg, split, crit, MIN_ALPHA..80, 1u64..20_000)
        .prop_map(|(a, s, c, alpha, n)| (cfg(a, s, c, alpha), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pick_is_minimal(d in 1u64..8, t in 1u64..8, n in 1u64..1_000_000, alpha in 1u64..200) {
        let fits = |d: u64, t: u64| binom_big(d + t, t).saturating_mul(alpha as u128) >= n as u128;
        let (pd, pt) = pick(Criterion::FixedSpace(d), n, alpha).unwrap();
        prop_assert_eq!(pd, d);
        prop_assert!(fits(d, pt) && (pt == 1 || !fits(d, pt - 1)));
        let (pd, pt) = pick(Criterion::FixedTime(t), n, alpha).unwrap();
        prop_assert_eq!(pt, t);
        prop_assert!(fits(pd, t) && (pd == 1 || !fits(pd - 1, t)));
        let (pd, pt) = pick(Criterion::Logarithmic, n, alpha).unwrap();
        prop_assert_eq!(pd, pt);
        prop_assert!(fits(pd, pd) && (pd == 1 || !fits(pd - 1, pd - 1)));
    }

    #[test]
    fn eta_matches_pascal(d in 0u64..40, t in 0u64..40) {
        prop_assert_eq!(eta(d, t) as u128, binom(d + t, t).min(UNBOUNDED as u128));
        prop_assert_eq!(eta(d, t), eta(t, d));
    }

    #[test]
    fn plans_reverse_every_step_exactly_once((c, n) in arb_config()) {
        let p = plan(&c, n).unwrap();
        let ls = leaves(&p);
        prop_assert_eq!(ls.first().map(|l| l.1), Some(n));
        prop_assert_eq!(ls.last().map(|l| l.0), Some(0));
        for w in ls.windows(2) {
            prop_assert_eq!(w[0].0, w[1].1);
        }
        prop_assert!(ls.iter().all(|(f, t)| f < t));
        prop_assert_eq!(p.stats.live_snapshots, 0);
        prop_assert_eq!(p.stats.leaves as usize, ls.len());
        prop_assert_eq!(p.events.first(), Some(&Event::Seed { steps: n }));
        prop_assert_eq!(p.events.last(), Some(&Event::Done));
        if c.algorithm == Algorithm::Bisect {
            prop_assert!(ls.iter().all(|(f, t)| t - f <= c.alpha));
        } else {
            let (d, t) = pick(c.criterion, n, c.alpha).unwrap();
            prop_assert!(p.stats.peak_snapshots <= d);
            prop_assert!(p.stats.recompute_steps <= t * n);
        }
    }

    #[test]
    fn treeverse_is_the_coalesced_binary_tree((c, n) in arb_config()) {
        prop_assume!(c.algorithm != Algorithm::Bisect);
        let bin = plan(&CheckpointConfig { algorithm: Algorithm::Binary, ..c }, n).unwrap();
        let tv = plan(&CheckpointConfig { algorithm: Algorithm::Treeverse, ..c }, n).unwrap();
        prop_assert_eq!(coalesce(&bin.events), tv.events);
        prop_assert_eq!(bin.stats.recompute_steps, tv.stats.recompute_steps);
        prop_assert_eq!(bin.stats.peak_snapshots, tv.stats.peak_snapshots);
    }

    #[test]
    fn binomial_leaves_fit_when_the_budget_covers_the_run(d in 1u64..5, segs in 2u64..400, tv: bool) {
        let alpha = 16;
        let n = segs * alpha;
        let alg = if tv { Algorithm::Treeverse } else { Algorithm::Binary };
        let p = plan(&cfg(alg, Split::Binomial, Criterion::FixedSpace(d), alpha), n).unwrap();
        prop_assert!(leaves(&p).iter().all(|(f, t)| t - f <= alpha));
    }
}

fn checkpoint_with<P: Pipeline>(p: &P, e: &corpus::Entry, c: CheckpointConfig) -> Value {
    let (mut ctx, f, x) = setup(p, &e.defs, &e.input);
    ctx.checkpoint = c;
    let ybar = p.eval(&mut ctx, &cvl::syntax::parse_expr(&e.cotangent).unwrap()).unwrap();
    let (y, xbar) = cvl::drivers::checkpoint_j(&mut ctx, p, f, &x, &ybar).unwrap();
    Value::cons(y, xbar)
}

fn reverse_with<P: Pipeline>(p: &P, e: &corpus::Entry) -> Value {
    let (mut ctx, f, x) = setup(p, &e.defs, &e.input);
    let ybar = p.eval(&mut ctx, &cvl::syntax::parse_expr(&e.cotangent).unwrap()).unwrap();
    let (y, xbar) = cvl::ad::reverse_j(&mut ctx, &mut |c: &mut Ctx, f, x| p.apply(c, f, x), f, &x, &ybar).unwrap();
    Value::cons(y, xbar)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drivers_reproduce_plain_reverse((c, _) in arb_config(), idx in 0usize..14, use_b: bool) {
        let entries: Vec<_> = corpus::entries().into_iter().filter(|e| !e.name.starts_with("example")).collect();
        let e = &entries[idx % entries.len()];
        let (want, got) = if use_b {
            (reverse_with(&PipelineB, e), checkpoint_with(&PipelineB, e, c))
        } else {
            (reverse_with(&PipelineA, e), checkpoint_with(&PipelineA, e, c))
        };
        prop_assert!(want.bits_eq(&got), "{}: {} vs {}", e.name, want, got);
    }
}

#[test]
fn recorded_trace_matches_the_plan() {
    let e = corpus::example_entry(2, 8);
    let c = cfg(Algorithm::Treeverse, Split::Binomial, Criterion::FixedSpace(3), 32);
    let (mut ctx, f, x) = setup(&PipelineA, &e.defs, &e.input);
    ctx.checkpoint = c;
    ctx.trace = Some(Vec::new());
    let n = PipelineA.primops(&mut ctx, &f, &x).unwrap();
    let ybar = PipelineA.eval(&mut ctx, &cvl::syntax::parse_expr(&e.cotangent).unwrap()).unwrap();
    cvl::drivers::checkpoint_j(&mut ctx, &PipelineA, f, &x, &ybar).unwrap();
    let p = plan(&c, n).unwrap();
    assert_eq!(ctx.trace.unwrap(), p.events);
    assert_eq!(ctx.stats.recompute_steps, p.stats.recompute_steps);
    assert_eq!(ctx.stats.peak_snapshots, p.stats.peak_snapshots);
}

#[test]
fn alpha_below_minimum_is_rejected() {
    let c = cfg(Algorithm::Bisect, Split::Bisection, Criterion::Logarithmic, MIN_ALPHA - 1);
    assert!(plan(&c, 1000).is_err());
    let e = &corpus::entries()[0];
    let (mut ctx, f, x) = setup(&PipelineA, &e.defs, &e.input);
    ctx.checkpoint = c;
    assert!(cvl::drivers::checkpoint_j(&mut ctx, &PipelineA, f, &x, &Value::real(1.0)).is_err());
}
