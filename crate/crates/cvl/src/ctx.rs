use std::collections::HashMap;

use crate::ad::AdState;
use crate::drivers::{CheckpointConfig, Event};
use crate::error::{EvalError, EvalResult};
use crate::symbol::Symbol;
use crate::value::{Env, Value};

/// Counters maintained by the checkpointing drivers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DriverStats {
    /// Steps of the most recent root computation.
    pub steps: u64,
    pub recompute_steps: u64,
    pub leaves: u64,
    pub live_snapshots: u64,
    pub peak_snapshots: u64,
    pub next_snapshot: u64,
}

/// Evaluation context shared by all evaluators.
pub struct Ctx {
    pub ad: AdState,
    pub globals: HashMap<Symbol, Value>,
    pub checkpoint: CheckpointConfig,
    pub stats: DriverStats,
    pub trace: Option<Vec<Event>>,
}

impl Default for Ctx {
    fn default() -> Self {
        Ctx::new()
    }
}

impl Ctx {
    pub fn new() -> Ctx {
        Ctx {
            ad: AdState::new(),
            globals: HashMap::new(),
            checkpoint: CheckpointConfig::default(),
            stats: DriverStats::default(),
            trace: None,
        }
    }

    pub fn with_checkpoint(config: CheckpointConfig) -> Ctx {
        Ctx {
            checkpoint: config,
            ..Ctx::new()
        }
    }

    pub fn lookup(&self, env: &Env, s: Symbol) -> EvalResult<Value> {
        if let Some(v) = env.lookup(s) {
            return Ok(v.clone());
        }
        self.globals
            .get(&s)
            .cloned()
            .ok_or_else(|| EvalError::Unbound(s.name().to_string()))
    }

    pub fn record(&mut self, ev: Event) {
        if let Some(t) = &mut self.trace {
            t.push(ev);
        }
    }

    /// Clears driver counters and the tape high-water mark.
    pub fn reset_metrics(&mut self) {
        self.stats = DriverStats::default();
        self.ad.reset_peak();
        if let Some(t) = &mut self.trace {
            t.clear();
        }
    }
}
