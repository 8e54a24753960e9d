//! Brute-force oracle on a small torus.
//!
//! [`FullStateEngine`] stores every agent and applies every arrow of every
//! edge. The lazy [`Engine`] run on the same ring, with the same clock and
//! edge streams, must reproduce its walker trajectory event for event. The
//! lazy engine is fed fresh states by a [`TorusShadow`], a second full copy of
//! the interchange that answers "what is the state of the agent at site `x` at
//! time `t`" for agents the lazy engine has not marked yet.

use rand::Rng;

use crate::engine::{Engine, EngineConfig, EngineError, TraceEvent, TraceRecord};
use crate::environment::{Geometry, StateSource};
use crate::model::ModelParams;
use crate::randomness::{EdgeArrowSource, ExpStream, RandomnessError, StreamKey, StreamKind};
use crate::walker::{walker_step, WalkerEvent, WalkerState};
use crate::{Site, Time};

/// Initial states `η(x)`, drawn up front, one keyed draw per site.
pub fn initial_states(replica_seed: u64, n: u32, rho: f64) -> Vec<u8> {
    (0..n as u64)
        .map(|x| {
            let mut rng = StreamKey::new(StreamKind::StateDraw(x), replica_seed, u64::MAX).rng();
            rng.random_bool(rho) as u8
        })
        .collect()
}

/// Full interchange process on `Z / nZ`. Agent ids are initial sites.
#[derive(Debug, Clone)]
pub struct TorusInterchange {
    agent_at: Vec<usize>,
    eta: Vec<u8>,
    edges: Vec<EdgeArrowSource>,
}

impl TorusInterchange {
    pub fn new(replica_seed: u64, eta: Vec<u8>) -> Self {
        let n = eta.len();
        assert!(n >= 3, "ring needs at least three sites");
        let edges = (0..n as Site)
            .map(|e| EdgeArrowSource::new(StreamKey::new(StreamKind::Edge(e), replica_seed, 0), 0.0))
            .collect();
        Self { agent_at: (0..n).collect(), eta, edges }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `ξ(x) = η(γ(x))`.
    pub fn state_at(&self, x: Site) -> u8 {
        self.eta[self.agent_at[x.rem_euclid(self.len() as Site) as usize]]
    }

    pub fn agent_at(&self, x: Site) -> usize {
        self.agent_at[x.rem_euclid(self.len() as Site) as usize]
    }

    /// Earliest pending arrow; ties go to the lower edge.
    pub fn next_arrow(&self) -> (Time, usize) {
        let mut best = (Time::INFINITY, 0);
        for (e, src) in self.edges.iter().enumerate() {
            if src.next_arrow_time() < best.0 {
                best = (src.next_arrow_time(), e);
            }
        }
        best
    }

    pub fn apply_next(&mut self) -> (Time, usize) {
        let (t, e) = self.next_arrow();
        self.edges[e].pop();
        let f = (e + 1) % self.len();
        self.agent_at.swap(e, f);
        (t, e)
    }

    /// Applies every arrow strictly before `t`.
    pub fn advance_before(&mut self, t: Time) {
        while self.next_arrow().0 < t {
            self.apply_next();
        }
    }
}

/// State source backed by a full copy of the torus.
#[derive(Debug, Clone)]
pub struct TorusShadow(pub TorusInterchange);

impl StateSource for TorusShadow {
    fn draw(&mut self, _agent: u64, site: Site, time: Time) -> Result<u8, RandomnessError> {
        self.0.advance_before(time);
        Ok(self.0.state_at(site))
    }
}

/// Walker on a fully simulated torus.
#[derive(Debug, Clone)]
pub struct FullStateEngine {
    params: ModelParams,
    env: TorusInterchange,
    walker: WalkerState,
    clocks: [ExpStream; 4],
    next: [Time; 4],
    rates: [f64; 4],
    trace: Vec<TraceRecord>,
}

impl FullStateEngine {
    pub fn new(params: ModelParams, replica_seed: u64, eta: Vec<u8>) -> Result<Self, RandomnessError> {
        let c = params.clock_rates();
        let rates = [c.plus, c.minus, c.hat_plus, c.hat_minus];
        let kinds =
            [StreamKind::ClockPlus, StreamKind::ClockMinus, StreamKind::ClockHatPlus, StreamKind::ClockHatMinus];
        let mut clocks = kinds.map(|k| ExpStream::new(StreamKey::new(k, replica_seed, 0), 0.0));
        let mut next = [0.0; 4];
        for i in 0..4 {
            next[i] = clocks[i].next_event_time(0.0, rates[i])?;
        }
        Ok(Self {
            params,
            env: TorusInterchange::new(replica_seed, eta),
            walker: WalkerState::at_origin(),
            clocks,
            next,
            rates,
            trace: Vec::new(),
        })
    }

    pub fn walker(&self) -> &WalkerState {
        &self.walker
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Runs until `count` walker events have been recorded.
    pub fn run_walker_events(&mut self, count: usize) -> Result<(), EngineError> {
        while self.trace.len() < count {
            let (ta, _) = self.env.next_arrow();
            let (i, tc) =
                self.next.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("four clocks");
            if ta <= tc {
                self.env.apply_next();
                continue;
            }
            let ev = WalkerEvent::ALL[i];
            let env = &self.env;
            let out = walker_step(&mut self.walker, ev, tc, &self.params, |x| Ok::<u8, EngineError>(env.state_at(x)))??;
            self.next[i] = self.clocks[i].next_event_time(tc, self.rates[i])?;
            self.trace.push(TraceRecord {
                time: tc,
                event: TraceEvent::Walker(ev),
                x: self.walker.x,
                m: self.walker.m,
                observed: out.observed,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub seed: u64,
    pub compared: usize,
    pub first_mismatch: Option<usize>,
    pub lazy_arrows: u64,
    pub max_marked: usize,
}

impl OracleReport {
    pub fn matches(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Walker events of an engine trace.
pub fn walker_trace(trace: &[TraceRecord]) -> impl Iterator<Item = &TraceRecord> {
    trace.iter().filter(|r| matches!(r.event, TraceEvent::Walker(_)))
}

fn same(a: &TraceRecord, b: &TraceRecord) -> bool {
    a.time.to_bits() == b.time.to_bits() && a.event == b.event && a.x == b.x && a.m == b.m && a.observed == b.observed
}

/// Runs the lazy and the full-state engine on an `n`-site torus and compares
/// the first `events` walker events.
pub fn compare_on_torus(params: &ModelParams, n: u32, seed: u64, events: usize) -> Result<OracleReport, EngineError> {
    let eta = initial_states(seed, n, params.rho);
    let mut full = FullStateEngine::new(*params, seed, eta.clone())?;
    full.run_walker_events(events)?;

    let mut cfg = EngineConfig::new(*params, seed);
    cfg.geometry = Geometry::Ring(n);
    cfg.regeneration = false;
    cfg.trace = true;
    let shadow = TorusShadow(TorusInterchange::new(seed, eta));
    let mut lazy = Engine::new(cfg, shadow)?;
    let mut lazy_walker: Vec<TraceRecord> = Vec::with_capacity(events);
    while lazy_walker.len() < events {
        if lazy.step()?.is_none() {
            break;
        }
        lazy_walker.extend(walker_trace(&lazy.take_trace()).copied());
    }
    let first_mismatch = full.trace()[..events]
        .iter()
        .zip(&lazy_walker)
        .position(|(a, b)| !same(a, b))
        .or_else(|| (lazy_walker.len() < events).then_some(lazy_walker.len()));
    Ok(OracleReport {
        seed,
        compared: events,
        first_mismatch,
        lazy_arrows: lazy.counters().arrows,
        max_marked: lazy.counters().max_marked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interchange_is_a_permutation() {
        let mut t = TorusInterchange::new(3, vec![0, 1, 1, 0, 1]);
        for _ in 0..1000 {
            t.apply_next();
        }
        let mut seen: Vec<usize> = (0..5).map(|x| t.agent_at(x)).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        let ones: u8 = (0..5).map(|x| t.state_at(x)).sum();
        assert_eq!(ones, 3);
    }

    #[test]
    fn lazy_matches_full_state() {
        let p = ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.5).unwrap();
        let r = compare_on_torus(&p, 12, 17, 2_000).unwrap();
        assert!(r.matches(), "{r:?}");
        assert!(r.lazy_arrows > 0);
    }

    #[test]
    fn oracle_detects_a_wrong_environment() {
        // a lazy engine fed independent states must diverge from the torus
        let p = ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.5).unwrap();
        let eta = initial_states(17, 12, p.rho);
        let mut full = FullStateEngine::new(p, 17, eta).unwrap();
        full.run_walker_events(2_000).unwrap();
        let mut cfg = EngineConfig::new(p, 17);
        cfg.geometry = Geometry::Ring(12);
        cfg.trace = true;
        let mut lazy = Engine::new(cfg, crate::randomness::StateDraws::new(99, 0.5)).unwrap();
        lazy.run_until(full.walker().t).unwrap();
        let tr = lazy.take_trace();
        let diverged = walker_trace(&tr).zip(full.trace()).any(|(a, b)| !same(a, b));
        assert!(diverged);
    }
}
