//! Event-driven simulation of one replica.
//!
//! The queue merges the four walker clocks, the probe clock and the arrow
//! processes of the active edges. Events are processed in order of
//! `(time, arrows < walker clocks < probe, key)`.
//!
//! Arrow processes are keyed by `(edge, epoch)` and start at the epoch start,
//! so an edge that goes quiet and later wakes up replays exactly the arrows it
//! would have had. After each confirmed regeneration everything left behind is
//! dropped and the epoch is bumped, which restarts the arrow streams from the
//! current time.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap as HashMap;
use std::fmt;

use thiserror::Error;

use crate::environment::{AgentRegistry, EnvironmentError, Geometry, StateSource};
use crate::model::{DerivedConstants, ModelError, ModelParams, DEFAULT_EPS_CONFIRM};
use crate::randomness::{EdgeArrowSource, ExpStream, RandomnessError, StreamKey, StreamKind};
use crate::regeneration::{AttemptLedger, EventFlags, RegenerationBlock, RegenerationError, RegenerationTracker};
use crate::walker::{walker_step, CouplingCheck, WalkerError, WalkerEvent, WalkerState};
use crate::{Site, Time};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Regeneration(#[from] RegenerationError),
    #[error(transparent)]
    Walker(#[from] WalkerError),
    #[error("invariant violated at t={time}: {what}")]
    Invariant { time: Time, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub params: ModelParams,
    pub replica_seed: u64,
    pub eps_confirm: f64,
    /// Rate of the density probe; 0 disables it.
    pub probe_rate: f64,
    pub regeneration: bool,
    /// Check the walker's pathwise inequalities at every step.
    pub check_couplings: bool,
    /// Recompute registry bookkeeping from scratch after every event (slow).
    pub check_invariants: bool,
    pub geometry: Geometry,
    pub trace: bool,
}

impl EngineConfig {
    pub fn new(params: ModelParams, replica_seed: u64) -> Self {
        Self {
            params,
            replica_seed,
            eps_confirm: DEFAULT_EPS_CONFIRM,
            probe_rate: 0.0,
            regeneration: true,
            check_couplings: false,
            check_invariants: false,
            geometry: Geometry::Line,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineCounters {
    pub events: u64,
    pub arrows: u64,
    pub walker_events: u64,
    pub probe_events: u64,
    pub right_jumps: u64,
    pub left_jumps: u64,
    pub regenerations: u64,
    pub max_marked: usize,
    pub max_active_edges: usize,
    pub max_levels: usize,
}

/// Probe observations of the state under the walker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProbeTally {
    pub observations: u64,
    pub ones: u64,
    /// Observations that found an agent the walker itself had already seen.
    pub on_walker_marked: u64,
}

impl ProbeTally {
    pub fn merge(&mut self, o: &ProbeTally) {
        self.observations += o.observations;
        self.ones += o.ones;
        self.on_walker_marked += o.on_walker_marked;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Arrow(Site),
    Walker(WalkerEvent),
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: Time,
    pub event: TraceEvent,
    pub x: Site,
    pub m: i64,
    pub observed: Option<u8>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let obs = self.observed.map_or("-".to_string(), |j| j.to_string());
        match self.event {
            TraceEvent::Arrow(e) => write!(f, "{:.17e}\tarrow:{}\t{}\t{}\t{}", self.time, e, self.x, self.m, obs),
            TraceEvent::Walker(w) => write!(f, "{:.17e}\t{}\t{}\t{}\t{}", self.time, w, self.x, self.m, obs),
            TraceEvent::Probe => write!(f, "{:.17e}\tprobe\t{}\t{}\t{}", self.time, self.x, self.m, obs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Edge(Site),
    Clock(WalkerEvent),
    Probe,
}

impl Kind {
    fn rank(&self) -> (u8, i64) {
        match *self {
            Kind::Edge(e) => (0, e),
            Kind::Clock(c) => (1, c.index() as i64),
            Kind::Probe => (2, 0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    time: Time,
    kind: Kind,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then_with(|| self.kind.rank().cmp(&other.kind.rank()))
    }
}

#[derive(Debug, Clone)]
struct EdgeSlot {
    source: EdgeArrowSource,
    /// An entry for this slot is in the queue.
    queued: bool,
}

pub struct Engine<S: StateSource> {
    cfg: EngineConfig,
    consts: DerivedConstants,
    rates: [f64; 4],
    now: Time,
    walker: WalkerState,
    registry: AgentRegistry,
    states: S,
    queue: BinaryHeap<Reverse<Entry>>,
    clocks: [ExpStream; 4],
    probe: ExpStream,
    edges: HashMap<Site, EdgeSlot>,
    epoch: u64,
    epoch_start: Time,
    tracker: Option<RegenerationTracker>,
    blocks: Vec<RegenerationBlock>,
    counters: EngineCounters,
    couplings: CouplingCheck,
    probe_tally: ProbeTally,
    trace: Vec<TraceRecord>,
    scratch: Vec<Site>,
}

impl<S: StateSource> Engine<S> {
    pub fn new(mut cfg: EngineConfig, states: S) -> Result<Self, EngineError> {
        cfg.params.validate()?;
        if matches!(cfg.geometry, Geometry::Ring(_)) {
            cfg.regeneration = false;
        }
        if !(cfg.probe_rate >= 0.0) || cfg.probe_rate.is_infinite() {
            return Err(RandomnessError::InvalidRate(cfg.probe_rate).into());
        }
        let consts = DerivedConstants::new(&cfg.params, cfg.eps_confirm)?;
        let c = cfg.params.clock_rates();
        let rates = [c.plus, c.minus, c.hat_plus, c.hat_minus];
        let key = |kind| StreamKey::new(kind, cfg.replica_seed, 0);
        let clocks = [
            ExpStream::new(key(StreamKind::ClockPlus), 0.0),
            ExpStream::new(key(StreamKind::ClockMinus), 0.0),
            ExpStream::new(key(StreamKind::ClockHatPlus), 0.0),
            ExpStream::new(key(StreamKind::ClockHatMinus), 0.0),
        ];
        let walker = WalkerState::at_origin();
        let tracker = cfg.regeneration.then(|| RegenerationTracker::new(consts.confirmation_gap, &walker));
        let mut engine = Self {
            cfg,
            consts,
            rates,
            now: 0.0,
            walker,
            registry: AgentRegistry::new(cfg.geometry),
            states,
            queue: BinaryHeap::new(),
            clocks,
            probe: ExpStream::new(key(StreamKind::Probe), 0.0),
            edges: HashMap::default(),
            epoch: 0,
            epoch_start: 0.0,
            tracker,
            blocks: Vec::new(),
            counters: EngineCounters::default(),
            couplings: CouplingCheck::default(),
            probe_tally: ProbeTally::default(),
            trace: Vec::new(),
            scratch: Vec::new(),
        };
        for ev in WalkerEvent::ALL {
            engine.schedule_clock(ev, 0.0)?;
        }
        engine.schedule_probe(0.0)?;
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn walker(&self) -> &WalkerState {
        &self.walker
    }

    pub fn registry(&self) -> &AgentRegistry {
        &self.registry
    }

    pub fn states(&self) -> &S {
        &self.states
    }

    pub fn counters(&self) -> &EngineCounters {
        &self.counters
    }

    pub fn couplings(&self) -> &CouplingCheck {
        &self.couplings
    }

    pub fn probe_tally(&self) -> &ProbeTally {
        &self.probe_tally
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn blocks(&self) -> &[RegenerationBlock] {
        &self.blocks
    }

    pub fn take_blocks(&mut self) -> Vec<RegenerationBlock> {
        std::mem::take(&mut self.blocks)
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Censored record for the unfinished block and the attempt ledger.
    pub fn finish(&self) -> Option<(RegenerationBlock, AttemptLedger)> {
        let mut w = self.walker;
        w.t = self.now;
        self.tracker.as_ref().map(|t| t.finish(&w))
    }

    fn schedule_clock(&mut self, ev: WalkerEvent, from: Time) -> Result<(), EngineError> {
        let t = self.clocks[ev.index()].next_event_time(from, self.rates[ev.index()])?;
        if t.is_finite() {
            self.queue.push(Reverse(Entry { time: t, kind: Kind::Clock(ev) }));
        }
        Ok(())
    }

    fn schedule_probe(&mut self, from: Time) -> Result<(), EngineError> {
        let t = self.probe.next_event_time(from, self.cfg.probe_rate)?;
        if t.is_finite() {
            self.queue.push(Reverse(Entry { time: t, kind: Kind::Probe }));
        }
        Ok(())
    }

    fn activate_edge(&mut self, e: Site) {
        let (seed, epoch, origin, now) = (self.cfg.replica_seed, self.epoch, self.epoch_start, self.now);
        let slot = self.edges.entry(e).or_insert_with(|| EdgeSlot {
            source: EdgeArrowSource::new(StreamKey::new(StreamKind::Edge(e), seed, epoch), origin),
            queued: false,
        });
        if slot.queued {
            return;
        }
        slot.source.skip_before(now);
        slot.queued = true;
        let time = slot.source.next_arrow_time();
        self.queue.push(Reverse(Entry { time, kind: Kind::Edge(e) }));
    }

    fn activate_new_edges(&mut self) {
        let mut buf = std::mem::take(&mut self.scratch);
        buf.extend(self.registry.drain_newly_active());
        for e in buf.drain(..) {
            if self.registry.is_active(e) {
                self.activate_edge(e);
            }
        }
        self.scratch = buf;
    }

    fn bump_epoch(&mut self) {
        self.epoch += 1;
        self.epoch_start = self.now;
        self.states.set_epoch(self.epoch);
        self.edges.clear();
        self.queue.retain(|Reverse(en)| !matches!(en.kind, Kind::Edge(_)));
        let mut buf = std::mem::take(&mut self.scratch);
        buf.clear();
        buf.extend(self.registry.active_edges());
        buf.sort_unstable();
        self.registry.drain_newly_active();
        for &e in &buf {
            self.activate_edge(e);
        }
        buf.clear();
        self.scratch = buf;
    }

    /// Time of the next queued event, if any.
    pub fn peek_time(&self) -> Option<Time> {
        self.queue.peek().map(|Reverse(e)| e.time)
    }

    /// Processes every event with time `<= t_end` and advances the clock to
    /// `t_end`.
    pub fn run_until(&mut self, t_end: Time) -> Result<(), EngineError> {
        while let Some(&Reverse(top)) = self.queue.peek() {
            if top.time > t_end {
                break;
            }
            self.queue.pop();
            self.process(top)?;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(())
    }

    /// Processes exactly one event; returns its time.
    pub fn step(&mut self) -> Result<Option<Time>, EngineError> {
        loop {
            let Some(Reverse(top)) = self.queue.pop() else { return Ok(None) };
            if self.process(top)? {
                return Ok(Some(top.time));
            }
        }
    }

    /// Returns false for stale entries that did not count as events.
    fn process(&mut self, en: Entry) -> Result<bool, EngineError> {
        let s = en.time;
        let flags = match en.kind {
            Kind::Edge(e) => {
                let active = self.registry.is_active(e);
                let slot = self.edges.get_mut(&e).expect("queued edges have slots");
                if !active {
                    slot.queued = false;
                    return Ok(false);
                }
                let t = slot.source.pop();
                debug_assert_eq!(t.to_bits(), s.to_bits());
                let next = slot.source.next_arrow_time();
                self.queue.push(Reverse(Entry { time: next, kind: Kind::Edge(e) }));
                self.now = s;
                self.registry.apply_arrow(e)?;
                self.counters.arrows += 1;
                self.record(TraceEvent::Arrow(e), None);
                EventFlags::default()
            }
            Kind::Clock(ev) => {
                self.now = s;
                let before = self.walker;
                let Engine { walker, registry, states, cfg, .. } = self;
                let out = walker_step(walker, ev, s, &cfg.params, |x| {
                    registry.observe_and_mark(x, s, states, true).map(|o| o.state)
                })??;
                self.schedule_clock(ev, s)?;
                self.counters.walker_events += 1;
                match out.dx {
                    1 => self.counters.right_jumps += 1,
                    -1 => self.counters.left_jumps += 1,
                    _ => {}
                }
                if self.cfg.check_couplings {
                    self.couplings.record(&before, &self.walker, ev);
                }
                self.record(TraceEvent::Walker(ev), out.observed);
                EventFlags { jump_attempted: true, m_increased: ev == WalkerEvent::Plus }
            }
            Kind::Probe => {
                self.now = s;
                let o = self.registry.observe_and_mark(self.walker.x, s, &mut self.states, false)?;
                self.schedule_probe(s)?;
                self.counters.probe_events += 1;
                self.probe_tally.observations += 1;
                self.probe_tally.ones += o.state as u64;
                self.probe_tally.on_walker_marked += o.was_walker_marked as u64;
                self.record(TraceEvent::Probe, Some(o.state));
                self.activate_new_edges();
                self.counters.events += 1;
                return Ok(true);
            }
        };
        self.counters.events += 1;
        if let Some(tracker) = self.tracker.as_mut() {
            let regenerated = tracker.after_event(flags, &self.walker, &mut self.registry, &mut self.blocks)?;
            self.counters.max_levels = self.counters.max_levels.max(tracker.depth());
            if regenerated {
                self.counters.regenerations += 1;
                self.bump_epoch();
            }
        }
        self.activate_new_edges();
        self.counters.max_marked = self.counters.max_marked.max(self.registry.len());
        self.counters.max_active_edges = self.counters.max_active_edges.max(self.registry.active_edge_count());
        if self.cfg.check_invariants {
            self.check_invariants()?;
        }
        Ok(true)
    }

    fn record(&mut self, event: TraceEvent, observed: Option<u8>) {
        if self.cfg.trace {
            self.trace.push(TraceRecord { time: self.now, event, x: self.walker.x, m: self.walker.m, observed });
        }
    }

    fn check_invariants(&mut self) -> Result<(), EngineError> {
        let time = self.now;
        let fail = |what: String| EngineError::Invariant { time, what };
        self.registry.check_invariants().map_err(fail)?;
        if self.cfg.probe_rate == 0.0 && self.registry.len() as u64 > self.walker.n_hat {
            return Err(fail(format!(
                "{} marked agents after {} observations",
                self.registry.len(),
                self.walker.n_hat
            )));
        }
        for e in self.registry.active_edges() {
            match self.edges.get(&e) {
                Some(slot) if slot.queued && slot.source.next_arrow_time() >= time => {}
                _ => return Err(fail(format!("active edge {e} has no pending arrow"))),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::FrozenStates;
    use crate::randomness::StateDraws;

    fn generic() -> ModelParams {
        ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.6).unwrap()
    }

    fn engine(seed: u64) -> Engine<StateDraws> {
        let mut cfg = EngineConfig::new(generic(), seed);
        cfg.check_couplings = true;
        cfg.check_invariants = true;
        Engine::new(cfg, StateDraws::new(seed, 0.6)).unwrap()
    }

    #[test]
    fn runs_and_regenerates() {
        let mut e = engine(11);
        e.run_until(300.0).unwrap();
        assert!(e.counters().regenerations > 0);
        assert_eq!(e.couplings().violations(), 0);
        let blocks = e.blocks();
        assert!(blocks[0].is_first);
        for b in blocks {
            assert!(b.duration > 0.0 && (b.is_first || b.displacement >= 0), "{b:?}");
        }
        let (_, ledger) = e.finish().unwrap();
        assert!(ledger.reconciles(), "{ledger:?}");
    }

    #[test]
    fn blocks_tile_the_trajectory() {
        let mut e = engine(5);
        e.run_until(200.0).unwrap();
        let mut t = 0.0;
        let mut x = 0;
        for b in e.blocks() {
            assert_eq!(b.start_time, t);
            t += b.duration;
            x += b.displacement;
        }
        let (c, _) = e.finish().unwrap();
        assert_eq!(c.start_time, t);
        assert_eq!(x + c.displacement, e.walker().x);
    }

    #[test]
    fn same_seed_same_run() {
        let run = |seed| {
            let mut e = engine(seed);
            e.run_until(100.0).unwrap();
            (e.walker().x, e.counters().events, e.blocks().iter().map(|b| b.duration.to_bits()).collect::<Vec<_>>())
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn homogeneous_walk_never_observes() {
        let p = ModelParams::homogeneous(3.0, 0.5, 0.5).unwrap();
        let mut e = Engine::new(EngineConfig::new(p, 1), StateDraws::new(1, 0.5)).unwrap();
        e.run_until(500.0).unwrap();
        assert_eq!(e.walker().n_hat, 0);
        assert!(e.registry().is_empty());
        assert_eq!(e.counters().max_marked, 0);
    }

    #[test]
    fn frozen_states_give_local_rates() {
        for j in [0u8, 1] {
            let r = crate::walker::effective_rates_check(&generic(), j, 10_000.0, 40 + j as u64);
            assert!(r.within(3.0), "{r:?}");
        }
    }

    #[test]
    fn equal_rates_ignore_states() {
        let p = ModelParams::homogeneous(3.0, 0.5, 0.5).unwrap();
        let a = crate::walker::effective_rates_check(&p, 0, 2_000.0, 9);
        let b = crate::walker::effective_rates_check(&p, 1, 2_000.0, 9);
        assert_eq!(a.right_rate, b.right_rate);
        assert_eq!(a.left_rate, b.left_rate);
    }

    #[test]
    fn probe_marks_without_moving_the_walker() {
        let mut with = EngineConfig::new(generic(), 8);
        with.probe_rate = 1.0;
        with.regeneration = false;
        let mut without = with;
        without.probe_rate = 0.0;
        // the probe consumes no walker randomness, but it does change which
        // agents are marked, so only the frozen environment is comparable
        let mut a = Engine::new(with, FrozenStates(1)).unwrap();
        let mut b = Engine::new(without, FrozenStates(1)).unwrap();
        a.run_until(50.0).unwrap();
        b.run_until(50.0).unwrap();
        assert_eq!(a.walker(), b.walker());
        assert!(a.probe_tally().observations > 0);
        assert_eq!(a.probe_tally().ones, a.probe_tally().observations);
    }
}
