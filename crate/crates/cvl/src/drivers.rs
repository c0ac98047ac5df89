//! Divide-and-conquer checkpointing on top of the interruption interface:
//! binary bisection, binary with snapshot/recompute budgets, and treeverse.
//!
//! Every driver is written once against [`Exec`], which is either the real
//! evaluator or a dry run that only does the step arithmetic. The dry run is
//! what the schedule tests inspect.

use serde::Serialize;

use crate::ad::{self, Num, Seed};
use crate::ctx::{Ctx, DriverStats};
use crate::error::{EvalError, EvalResult};
use crate::interrupt::{Pipeline, PREAMBLE_I};
use crate::value::Value;

/// Budget value standing for "unbounded".
pub const UNBOUNDED: u64 = u64::MAX;

/// Smallest accepted leaf bound. Keeps every split part at least as long as
/// the `I` wrapper preamble so interruptions never land inside one.
pub const MIN_ALPHA: u64 = 2 * PREAMBLE_I;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bisect,
    Binary,
    Treeverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Bisection,
    Binomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    FixedSpace(u64),
    FixedTime(u64),
    Logarithmic,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criterion::FixedSpace(d) => write!(f, "fixed-space={d}"),
            Criterion::FixedTime(t) => write!(f, "fixed-time={t}"),
            Criterion::Logarithmic => f.write_str("log"),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Bisect => "bisect",
            Algorithm::Binary => "binary",
            Algorithm::Treeverse => "treeverse",
        })
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Bisection => "bisection",
            Split::Binomial => "binomial",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bisect" => Ok(Algorithm::Bisect),
            "binary" => Ok(Algorithm::Binary),
            "treeverse" => Ok(Algorithm::Treeverse),
            _ => Err(format!("unknown algorithm `{s}` (bisect, binary or treeverse)")),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bisection" => Ok(Split::Bisection),
            "binomial" => Ok(Split::Binomial),
            _ => Err(format!("unknown split `{s}` (bisection or binomial)")),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    /// `fixed-space=D`, `fixed-time=T` or `log`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "log" || s == "logarithmic" {
            return Ok(Criterion::Logarithmic);
        }
        let (key, val) = s
            .split_once('=')
            .ok_or_else(|| format!("bad criterion `{s}` (fixed-space=D, fixed-time=T or log)"))?;
        let v: u64 = val
            .parse()
            .map_err(|_| format!("bad criterion value `{val}`"))?;
        if v == 0 {
            return Err("criterion value must be positive".into());
        }
        match key {
            "fixed-space" => Ok(Criterion::FixedSpace(v)),
            "fixed-time" => Ok(Criterion::FixedTime(v)),
            _ => Err(format!("unknown criterion `{key}`")),
        }
    }
}

/// Settings used by `checkpoint-*j`. `criterion` is ignored by `Bisect`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointConfig {
    pub algorithm: Algorithm,
    pub split: Split,
    pub criterion: Criterion,
    pub alpha: u64,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        CheckpointConfig {
            algorithm: Algorithm::Bisect,
            split: Split::Bisection,
            criterion: Criterion::Logarithmic,
            alpha: 64,
        }
    }
}

/// Gold snapshots hold the caller's own argument, pink ones a capsule.
/// `Extend` marks a left child of the binary tree that keeps its parent's
/// snapshot alive rather than taking a new one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Gold,
    Pink,
    Extend,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Seed { steps: u64 },
    Advance { from: u64, to: u64 },
    Snapshot { id: u64, at: u64, role: Role },
    Release { id: u64 },
    Leaf { from: u64, to: u64 },
    Done,
}

/// Drops `Extend` snapshots and their releases and renumbers the remaining
/// snapshots by first appearance. This turns a binary tree trace into the
/// trace of the n-ary tree obtained by merging each maximal chain of left
/// branches into its head.
pub fn coalesce(events: &[Event]) -> Vec<Event> {
    let mut extended = std::collections::HashSet::new();
    let mut renum = std::collections::HashMap::new();
    let mut out = Vec::new();
    for ev in events {
        match ev {
            Event::Snapshot { id, at, role } => {
                if *role == Role::Extend {
                    extended.insert(*id);
                    continue;
                }
                let n = renum.len() as u64;
                renum.insert(*id, n);
                out.push(Event::Snapshot {
                    id: n,
                    at: *at,
                    role: *role,
                });
            }
            Event::Release { id } => {
                if extended.contains(id) {
                    continue;
                }
                out.push(Event::Release {
                    id: renum.get(id).copied().unwrap_or(*id),
                });
            }
            other => out.push(other.clone()),
        }
    }
    out
}

// ---- budgets ----

/// η(d, t) = C(d + t, t), saturating at `UNBOUNDED`.
pub fn eta(d: u64, t: u64) -> u64 {
    if d == UNBOUNDED || t == UNBOUNDED {
        return UNBOUNDED;
    }
    let k = d.min(t) as u128;
    let m = d.max(t) as u128;
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (m + i) / i;
        if c >= UNBOUNDED as u128 {
            return UNBOUNDED;
        }
    }
    c as u64
}

/// Solves `η(d, t)·α ≥ n` for the parameter the criterion leaves free.
/// Returns `(d, t)`.
pub fn pick(criterion: Criterion, n: u64, alpha: u64) -> EvalResult<(u64, u64)> {
    if n == 0 {
        return Err(EvalError::Budget("pick needs a positive step count".into()));
    }
    if alpha == 0 {
        return Err(EvalError::Budget("leaf bound must be positive".into()));
    }
    let fits = |d: u64, t: u64| eta(d, t).saturating_mul(alpha) >= n;
    let smallest = |f: &dyn Fn(u64) -> bool| (1..).find(|&v| f(v)).expect("η is unbounded");
    match criterion {
        Criterion::FixedSpace(d) => {
            if d == 0 {
                return Err(EvalError::Budget("fixed space needs d ≥ 1".into()));
            }
            Ok((d, smallest(&|t| fits(d, t))))
        }
        Criterion::FixedTime(t) => {
            if t == 0 {
                return Err(EvalError::Budget("fixed time needs t ≥ 1".into()));
            }
            Ok((smallest(&|d| fits(d, t)), t))
        }
        Criterion::Logarithmic => {
            let d = smallest(&|d| fits(d, d));
            Ok((d, d))
        }
    }
}

fn dec(b: u64) -> u64 {
    if b == UNBOUNDED {
        b
    } else {
        b - 1
    }
}

/// Split arithmetic shared by all drivers.
#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub alpha: u64,
    pub split: Split,
    /// Lower bound on both parts of a split.
    pub min_part: u64,
}

impl Schedule {
    pub fn new(alpha: u64, split: Split) -> Schedule {
        Schedule {
            alpha,
            split,
            min_part: PREAMBLE_I,
        }
    }

    /// Split point of `[σ, φ]` under budgets `(δ, τ)`.
    pub fn mid(&self, delta: u64, tau: u64, sigma: u64, phi: u64) -> EvalResult<u64> {
        let len = phi.saturating_sub(sigma);
        if len <= self.alpha || len < 2 * self.min_part.max(1) {
            return Err(EvalError::Budget(format!(
                "interval [{sigma}, {phi}] is too short to split"
            )));
        }
        let left = match self.split {
            Split::Bisection => len / 2,
            Split::Binomial => self.binomial_left(len, delta, tau),
        };
        let lo = self.min_part.max(1);
        Ok(sigma + left.clamp(lo, len - lo))
    }

    /// Largest left part, in whole segments of α steps, such that the left
    /// part is reversible within (δ, τ−1), the right part within (δ−1, τ),
    /// and the right part is no longer than (δ−1, τ−1) allows.
    fn binomial_left(&self, len: u64, delta: u64, tau: u64) -> u64 {
        let segs = len.div_ceil(self.alpha);
        if delta == 0 || tau == 0 {
            return len / 2;
        }
        let hi = eta(delta, dec(tau)).min(segs - 1);
        let lo = segs.saturating_sub(eta(dec(delta), tau)).max(1);
        if lo > hi {
            return len / 2;
        }
        let pref = segs.saturating_sub(eta(dec(delta), dec(tau)));
        pref.clamp(lo, hi) * self.alpha
    }
}

// ---- the drivers, generic over execution ----

/// What the drivers need from an evaluator.
pub trait Exec {
    type F: Clone;
    type X: Clone;
    type Cot;
    fn record(&mut self, ev: Event);
    fn stats(&mut self) -> &mut DriverStats;
    fn interrupt(&mut self, f: &Self::F, x: &Self::X, l: u64) -> EvalResult<Self::X>;
    fn wrap(&mut self, f: Self::F, l: u64) -> Self::F;
    fn resumer(&mut self) -> Self::F;
    /// Reverse sweep over `f x`; returns the primal output when asked for.
    fn reverse(
        &mut self,
        f: Self::F,
        x: &Self::X,
        seed: Self::Cot,
        want_y: bool,
    ) -> EvalResult<(Value, Self::Cot)>;
}

fn snapshot<E: Exec>(e: &mut E, at: u64, role: Role) -> u64 {
    let st = e.stats();
    let id = st.next_snapshot;
    st.next_snapshot += 1;
    if role != Role::Extend {
        st.live_snapshots += 1;
        st.peak_snapshots = st.peak_snapshots.max(st.live_snapshots);
    }
    e.record(Event::Snapshot { id, at, role });
    id
}

fn release<E: Exec>(e: &mut E, id: u64, role: Role) {
    if role != Role::Extend {
        e.stats().live_snapshots -= 1;
    }
    e.record(Event::Release { id });
}

fn advance<E: Exec>(e: &mut E, f: &E::F, x: &E::X, from: u64, to: u64) -> EvalResult<E::X> {
    e.stats().recompute_steps += to - from;
    e.record(Event::Advance { from, to });
    e.interrupt(f, x, to - from)
}

fn leaf<E: Exec>(
    e: &mut E,
    f: E::F,
    x: &E::X,
    seed: E::Cot,
    want_y: bool,
    from: u64,
    to: u64,
) -> EvalResult<(Value, E::Cot)> {
    e.stats().leaves += 1;
    e.record(Event::Leaf { from, to });
    e.reverse(f, x, seed, want_y)
}

/// Binary bisection: halve the step count until it is at most α.
#[allow(clippy::too_many_arguments)]
pub fn bisect<E: Exec>(
    e: &mut E,
    alpha: u64,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    len: u64,
    at: u64,
    want_y: bool,
    role: Role,
) -> EvalResult<(Value, E::Cot)> {
    if len <= alpha {
        return leaf(e, f, &x, seed, want_y, at, at + len);
    }
    let id = snapshot(e, at, role);
    let half = len / 2;
    let z = advance(e, &f, &x, at, at + half)?;
    let r = e.resumer();
    let (y, zbar) = bisect(e, alpha, r, z, seed, len - half, at + half, want_y, Role::Pink)?;
    let g = e.wrap(f, half);
    let (_, xbar) = bisect(e, alpha, g, x, zbar, half, at, false, Role::Extend)?;
    release(e, id, role);
    Ok((y, xbar))
}

/// Binary checkpointing with a snapshot budget δ (spent on right branches)
/// and a recompute budget τ (spent on left branches).
#[allow(clippy::too_many_arguments)]
pub fn binary<E: Exec>(
    e: &mut E,
    sched: &Schedule,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    delta: u64,
    tau: u64,
    len: u64,
    at: u64,
    want_y: bool,
    role: Role,
) -> EvalResult<(Value, E::Cot)> {
    if len <= sched.alpha || delta == 0 || tau == 0 {
        return leaf(e, f, &x, seed, want_y, at, at + len);
    }
    let id = snapshot(e, at, role);
    let kappa = sched.mid(delta, tau, 0, len)?;
    let z = advance(e, &f, &x, at, at + kappa)?;
    let r = e.resumer();
    let (y, zbar) = binary(
        e,
        sched,
        r,
        z,
        seed,
        dec(delta),
        tau,
        len - kappa,
        at + kappa,
        want_y,
        Role::Pink,
    )?;
    let g = e.wrap(f, kappa);
    let (_, xbar) = binary(
        e,
        sched,
        g,
        x,
        zbar,
        delta,
        dec(tau),
        kappa,
        at,
        false,
        Role::Extend,
    )?;
    release(e, id, role);
    Ok((y, xbar))
}

/// Treeverse in absolute step coordinates: `f x` is the state at `β`, the
/// node covers `[σ, φ]`.
#[allow(clippy::too_many_arguments)]
pub fn treeverse<E: Exec>(
    e: &mut E,
    sched: &Schedule,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    delta: u64,
    tau: u64,
    beta: u64,
    sigma: u64,
    phi: u64,
    want_y: bool,
) -> EvalResult<(Value, E::Cot)> {
    if sigma > beta {
        let z = advance(e, &f, &x, beta, sigma)?;
        let r = e.resumer();
        first(e, sched, r, z, seed, dec(delta), tau, sigma, phi, want_y, Role::Pink)
    } else {
        first(e, sched, f, x, seed, delta, tau, sigma, phi, want_y, Role::Gold)
    }
}

#[allow(clippy::too_many_arguments)]
fn first<E: Exec>(
    e: &mut E,
    sched: &Schedule,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    delta: u64,
    tau: u64,
    sigma: u64,
    phi: u64,
    want_y: bool,
    role: Role,
) -> EvalResult<(Value, E::Cot)> {
    if phi - sigma > sched.alpha && delta != 0 && tau != 0 {
        let id = snapshot(e, sigma, role);
        let kappa = sched.mid(delta, tau, sigma, phi)?;
        let (y, zbar) = treeverse(
            e,
            sched,
            f.clone(),
            x.clone(),
            seed,
            delta,
            tau,
            sigma,
            kappa,
            phi,
            want_y,
        )?;
        let (_, xbar) = rest(e, sched, f, x, zbar, delta, dec(tau), sigma, kappa)?;
        release(e, id, role);
        Ok((y, xbar))
    } else {
        let g = e.wrap(f, phi - sigma);
        leaf(e, g, &x, seed, want_y, sigma, phi)
    }
}

#[allow(clippy::too_many_arguments)]
fn rest<E: Exec>(
    e: &mut E,
    sched: &Schedule,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    delta: u64,
    tau: u64,
    sigma: u64,
    phi: u64,
) -> EvalResult<(Value, E::Cot)> {
    let mut seed = seed;
    let mut tau = tau;
    let mut phi = phi;
    while phi - sigma > sched.alpha && delta != 0 && tau != 0 {
        let kappa = sched.mid(delta, tau, sigma, phi)?;
        let (_, zbar) = treeverse(
            e,
            sched,
            f.clone(),
            x.clone(),
            seed,
            delta,
            tau,
            sigma,
            kappa,
            phi,
            false,
        )?;
        seed = zbar;
        tau = dec(tau);
        phi = kappa;
    }
    let g = e.wrap(f, phi - sigma);
    leaf(e, g, &x, seed, false, sigma, phi)
}

/// Runs the configured driver from the root. `n` is the step count of the
/// whole computation.
pub fn drive<E: Exec>(
    e: &mut E,
    config: &CheckpointConfig,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    n: u64,
) -> EvalResult<(Value, E::Cot)> {
    if config.alpha < MIN_ALPHA {
        return Err(EvalError::Budget(format!(
            "leaf bound {} is below the minimum of {MIN_ALPHA}",
            config.alpha
        )));
    }
    drive_unchecked(e, config, &Schedule::new(config.alpha, config.split), f, x, seed, n)
}

fn drive_unchecked<E: Exec>(
    e: &mut E,
    config: &CheckpointConfig,
    sched: &Schedule,
    f: E::F,
    x: E::X,
    seed: E::Cot,
    n: u64,
) -> EvalResult<(Value, E::Cot)> {
    e.record(Event::Seed { steps: n });
    let r = match config.algorithm {
        Algorithm::Bisect => bisect(e, sched.alpha, f, x, seed, n, 0, true, Role::Gold)?,
        Algorithm::Binary => {
            let (d, t) = pick(config.criterion, n, sched.alpha)?;
            binary(e, sched, f, x, seed, d, t, n, 0, true, Role::Gold)?
        }
        Algorithm::Treeverse => {
            let (d, t) = pick(config.criterion, n, sched.alpha)?;
            treeverse(e, sched, f, x, seed, d, t, 0, 0, n, true)?
        }
    };
    e.record(Event::Done);
    Ok(r)
}

// ---- real execution ----

pub enum Cot {
    Tree(Value),
    Flat(Vec<Num>),
}

struct Real<'a, P: Pipeline> {
    ctx: &'a mut Ctx,
    pipe: &'a P,
}

impl<P: Pipeline> Exec for Real<'_, P> {
    type F = Value;
    type X = Value;
    type Cot = Cot;

    fn record(&mut self, ev: Event) {
        self.ctx.record(ev);
    }

    fn stats(&mut self) -> &mut DriverStats {
        &mut self.ctx.stats
    }

    fn interrupt(&mut self, f: &Value, x: &Value, l: u64) -> EvalResult<Value> {
        self.pipe.interrupt(self.ctx, f, x, l)
    }

    fn wrap(&mut self, f: Value, l: u64) -> Value {
        self.pipe.make_i(f, l)
    }

    fn resumer(&mut self) -> Value {
        self.pipe.make_r()
    }

    fn reverse(&mut self, f: Value, x: &Value, seed: Cot, want_y: bool) -> EvalResult<(Value, Cot)> {
        let pipe = self.pipe;
        let mut apply = |c: &mut Ctx, f: Value, x: Value| pipe.apply(c, f, x);
        let r = match &seed {
            Cot::Tree(v) => ad::reverse_core(self.ctx, &mut apply, f, x, Seed::Tree(v), want_y)?,
            Cot::Flat(v) => ad::reverse_core(self.ctx, &mut apply, f, x, Seed::Flat(v), want_y)?,
        };
        Ok((r.y, Cot::Flat(r.xbar)))
    }
}

/// `checkpoint-*j`: same contract as `*j`, driven by the context's
/// checkpoint configuration.
pub fn checkpoint_j<P: Pipeline>(
    ctx: &mut Ctx,
    pipe: &P,
    f: Value,
    x: &Value,
    ybar: &Value,
) -> EvalResult<(Value, Value)> {
    if !ybar.is_ground() {
        return Err(EvalError::NonGround("checkpoint-*j cotangent"));
    }
    let config = ctx.checkpoint;
    let x = ad::unshare(ctx, x)?;
    let n = pipe.primops(ctx, &f, &x)?;
    ctx.stats.steps = ctx.stats.steps.max(n);
    let mut e = Real { ctx, pipe };
    let (y, xbar) = drive(&mut e, &config, f, x.clone(), Cot::Tree(ybar.clone()), n)?;
    let Cot::Flat(xbar) = xbar else {
        unreachable!("leaves return flat cotangents")
    };
    Ok((y, ad::rebuild_cotangent(&x, &xbar)?))
}

// ---- dry runs ----

/// The shape of a driver run computed without evaluating anything.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Plan {
    pub events: Vec<Event>,
    pub stats: DriverStats,
}

#[derive(Default)]
struct Dry {
    plan: Plan,
}

impl Exec for Dry {
    type F = ();
    type X = ();
    type Cot = ();

    fn record(&mut self, ev: Event) {
        self.plan.events.push(ev);
    }

    fn stats(&mut self) -> &mut DriverStats {
        &mut self.plan.stats
    }

    fn interrupt(&mut self, _: &(), _: &(), _: u64) -> EvalResult<()> {
        Ok(())
    }

    fn wrap(&mut self, _: (), _: u64) {}

    fn resumer(&mut self) {}

    fn reverse(&mut self, _: (), _: &(), _: (), _: bool) -> EvalResult<(Value, ())> {
        Ok((Value::Bottom, ()))
    }
}

/// Dry run of the configured driver over a computation of `n` steps.
pub fn plan(config: &CheckpointConfig, n: u64) -> EvalResult<Plan> {
    let mut e = Dry::default();
    e.plan.stats.steps = n;
    drive(&mut e, config, (), (), (), n)?;
    Ok(e.plan)
}

/// Dry run with an explicit schedule, which may use units other than
/// evaluator steps (no minimum on α).
pub fn plan_with(config: &CheckpointConfig, sched: &Schedule, n: u64) -> EvalResult<Plan> {
    let mut e = Dry::default();
    e.plan.stats.steps = n;
    drive_unchecked(&mut e, config, sched, (), (), (), n)?;
    Ok(e.plan)
}

/// Minimal total re-advancement, in segments, for reversing `l` unit
/// segments with at most `d` snapshots held at once. Reference oracle for
/// the binomial split.
pub fn schedule_oracle(l: usize, d: usize) -> u64 {
    // c[s][k]: cost for s segments with k snapshots.
    let inf = u64::MAX;
    let mut c = vec![vec![inf; d + 1]; l + 1];
    for row in c.iter_mut().take(l.min(1) + 1) {
        row.fill(0);
    }
    for k in 1..=d {
        for s in 2..=l {
            let mut best = inf;
            for left in 1..s {
                let (a, b) = (c[s - left][k - 1], c[left][k]);
                if a == inf || b == inf {
                    continue;
                }
                best = best.min(left as u64 + a + b);
            }
            c[s][k] = best;
        }
    }
    c[l][d]
}
