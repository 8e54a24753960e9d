//! Independent replicas fanned out over a thread pool.
//!
//! Replica `i` runs with seed `replica_seed(base, i)` and owns all of its
//! streams, so results do not depend on scheduling; they are returned in
//! replica order.

use rayon::prelude::*;

use crate::engine::{Engine, EngineConfig, EngineCounters, EngineError, ProbeTally};
use crate::model::{ModelParams, DEFAULT_EPS_CONFIRM};
use crate::randomness::{replica_seed, StateDraws};
use crate::regeneration::{AttemptLedger, RegenerationBlock};
use crate::walker::CouplingCheck;
use crate::{Site, Time};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSpec {
    pub params: ModelParams,
    pub horizon: Time,
    pub eps_confirm: f64,
    pub probe_rate: f64,
    pub regeneration: bool,
    pub check_couplings: bool,
    /// Times at which `X` is recorded, ascending and `<= horizon`.
    pub snapshots: Vec<Time>,
}

impl ReplicaSpec {
    pub fn new(params: ModelParams, horizon: Time) -> Self {
        Self {
            params,
            horizon,
            eps_confirm: DEFAULT_EPS_CONFIRM,
            probe_rate: 0.0,
            regeneration: true,
            check_couplings: false,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub index: u64,
    pub seed: u64,
    pub blocks: Vec<RegenerationBlock>,
    /// The unfinished block at the horizon, when regeneration is tracked.
    pub censored: Option<RegenerationBlock>,
    pub ledger: AttemptLedger,
    pub x_final: Site,
    pub snapshots: Vec<Site>,
    pub probe: ProbeTally,
    pub counters: EngineCounters,
    pub couplings: CouplingCheck,
}

pub fn run_replica(spec: &ReplicaSpec, base_seed: u64, index: u64) -> Result<ReplicaResult, EngineError> {
    let seed = replica_seed(base_seed, index);
    let mut cfg = EngineConfig::new(spec.params, seed);
    cfg.eps_confirm = spec.eps_confirm;
    cfg.probe_rate = spec.probe_rate;
    cfg.regeneration = spec.regeneration;
    cfg.check_couplings = spec.check_couplings;
    let mut engine = Engine::new(cfg, StateDraws::new(seed, spec.params.rho))?;
    let mut snapshots = Vec::with_capacity(spec.snapshots.len());
    for &t in &spec.snapshots {
        engine.run_until(t)?;
        snapshots.push(engine.walker().x);
    }
    engine.run_until(spec.horizon)?;
    let (censored, ledger) = match engine.finish() {
        Some((b, l)) => (Some(b), l),
        None => (None, AttemptLedger::default()),
    };
    Ok(ReplicaResult {
        index,
        seed,
        x_final: engine.walker().x,
        blocks: engine.take_blocks(),
        censored,
        ledger,
        snapshots,
        probe: *engine.probe_tally(),
        counters: *engine.counters(),
        couplings: *engine.couplings(),
    })
}

/// Runs replicas `0..count` in parallel; the first error in replica order
/// wins.
pub fn run_replicas(spec: &ReplicaSpec, base_seed: u64, count: u64) -> Result<Vec<ReplicaResult>, EngineError> {
    run_replica_range(spec, base_seed, 0, count)
}

/// Replicas `start..start + count`; disjoint ranges give independent samples
/// under one base seed.
pub fn run_replica_range(
    spec: &ReplicaSpec,
    base_seed: u64,
    start: u64,
    count: u64,
) -> Result<Vec<ReplicaResult>, EngineError> {
    (start..start + count).into_par_iter().map(|i| run_replica(spec, base_seed, i)).collect()
}

/// Like [`run_replicas`] but keeps only what `f` extracts from each replica.
pub fn map_replicas<T: Send>(
    spec: &ReplicaSpec,
    base_seed: u64,
    count: u64,
    f: impl Fn(ReplicaResult) -> T + Sync,
) -> Result<Vec<T>, EngineError> {
    (0..count).into_par_iter().map(|i| run_replica(spec, base_seed, i).map(&f)).collect()
}

/// Non-first, non-censored blocks of all replicas, in replica order.
pub fn pooled_blocks(results: &[ReplicaResult]) -> Vec<RegenerationBlock> {
    results.iter().flat_map(|r| r.blocks.iter().copied()).collect()
}
