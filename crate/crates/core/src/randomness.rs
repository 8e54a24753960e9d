//! Keyed, reproducible sources of exponential waiting times and Bernoulli
//! state draws.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is the little-endian
//! concatenation of four 64-bit words:
//!
//! ```text
//! [ replica_seed | kind tag | payload | epoch ]
//! ```
//!
//! with tags `1..=4` for the four walker clocks (`+`, `-`, `^+`, `^-`), `5` for
//! the arrow process of an edge (payload: the edge's left site, two's
//! complement), `6` for the probe clock, `7` for the state of an agent
//! (payload: agent id) and `8` for deriving per-replica seeds from a base
//! seed (payload: replica index). Distinct keys give independent streams and a
//! stream never depends on the order in which consumers are created.

use std::collections::HashSet;

use rand::distr::{Bernoulli, Distribution};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::Time;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RandomnessError {
    #[error("stream {key:?} asked for an event from {from} behind its frontier {frontier}")]
    FrontierRegression { key: StreamKey, from: Time, frontier: Time },
    #[error("agent {0} already has a stored state")]
    RepeatDraw(u64),
    #[error("invalid rate {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    ClockPlus,
    ClockMinus,
    ClockHatPlus,
    ClockHatMinus,
    /// Arrows between `x` and `x + 1`.
    Edge(i64),
    Probe,
    StateDraw(u64),
    Replica(u64),
}

impl StreamKind {
    fn tag_and_payload(self) -> (u64, u64) {
        match self {
            StreamKind::ClockPlus => (1, 0),
            StreamKind::ClockMinus => (2, 0),
            StreamKind::ClockHatPlus => (3, 0),
            StreamKind::ClockHatMinus => (4, 0),
            StreamKind::Edge(x) => (5, x as u64),
            StreamKind::Probe => (6, 0),
            StreamKind::StateDraw(agent) => (7, agent),
            StreamKind::Replica(i) => (8, i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub kind: StreamKind,
    pub replica_seed: u64,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(kind: StreamKind, replica_seed: u64, epoch: u64) -> Self {
        Self { kind, replica_seed, epoch }
    }

    pub fn seed_bytes(&self) -> [u8; 32] {
        let (tag, payload) = self.kind.tag_and_payload();
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip([self.replica_seed, tag, payload, self.epoch]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        seed
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed_bytes())
    }
}

/// Seed of replica `index` under `base_seed`: the first word of the keyed
/// stream `Replica(index)`.
pub fn replica_seed(base_seed: u64, index: u64) -> u64 {
    StreamKey::new(StreamKind::Replica(index), base_seed, 0).rng().next_u64()
}

/// A Poisson event stream sampled by memoryless exponential gaps.
#[derive(Debug, Clone)]
pub struct ExpStream {
    key: StreamKey,
    rng: ChaCha8Rng,
    frontier: Time,
}

impl ExpStream {
    pub fn new(key: StreamKey, origin: Time) -> Self {
        Self { key, rng: key.rng(), frontier: origin }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn frontier(&self) -> Time {
        self.frontier
    }

    /// `from + Exp(rate)`; `+inf` for a null process. Advances the frontier to
    /// the returned time.
    pub fn next_event_time(&mut self, from: Time, rate: f64) -> Result<Time, RandomnessError> {
        if from < self.frontier {
            return Err(RandomnessError::FrontierRegression { key: self.key, from, frontier: self.frontier });
        }
        if !(rate >= 0.0) || rate.is_infinite() {
            return Err(RandomnessError::InvalidRate(rate));
        }
        if rate == 0.0 {
            self.frontier = from;
            return Ok(Time::INFINITY);
        }
        let gap: f64 = Exp1.sample(&mut self.rng);
        let t = from + gap / rate;
        self.frontier = t;
        Ok(t)
    }
}

/// Rate-1 arrow process of one edge. Arrow times are a deterministic function
/// of the key and the origin, so independent consumers of the same edge see
/// the same arrows.
#[derive(Debug, Clone)]
pub struct EdgeArrowSource {
    stream: ExpStream,
    consumed: Time,
    next: Time,
}

impl EdgeArrowSource {
    pub fn new(key: StreamKey, origin: Time) -> Self {
        let mut stream = ExpStream::new(key, origin);
        let next = stream.next_event_time(origin, 1.0).expect("fresh stream");
        Self { stream, consumed: origin, next }
    }

    /// Time of the next arrow not yet consumed.
    pub fn next_arrow_time(&self) -> Time {
        self.next
    }

    /// Time up to which arrows have been consumed; the next arrow is always
    /// strictly later.
    pub fn frontier(&self) -> Time {
        self.consumed
    }

    /// Consumes the pending arrow and returns its time.
    pub fn pop(&mut self) -> Time {
        let t = self.next;
        self.consumed = t;
        self.next = self.stream.next_event_time(t, 1.0).expect("monotone arrows");
        t
    }

    /// Drops arrows strictly before `t`; they happened while nothing watched
    /// the edge.
    pub fn skip_before(&mut self, t: Time) {
        while self.next < t {
            self.pop();
        }
    }
}

/// Bernoulli(rho) states keyed by agent id, drawn at most once per agent.
#[derive(Debug, Clone)]
pub struct StateDraws {
    replica_seed: u64,
    epoch: u64,
    bernoulli: Bernoulli,
    drawn: HashSet<u64>,
}

impl StateDraws {
    pub fn new(replica_seed: u64, rho: f64) -> Self {
        Self {
            replica_seed,
            epoch: 0,
            bernoulli: Bernoulli::new(rho).expect("rho validated in [0, 1]"),
            drawn: HashSet::new(),
        }
    }

    pub fn set_epoch(&mut self, epoch: u64) {
        if epoch != self.epoch {
            self.epoch = epoch;
            self.drawn.clear();
        }
    }

    pub fn draw_state(&mut self, agent: u64) -> Result<u8, RandomnessError> {
        if !self.drawn.insert(agent) {
            return Err(RandomnessError::RepeatDraw(agent));
        }
        let mut rng = StreamKey::new(StreamKind::StateDraw(agent), self.replica_seed, self.epoch).rng();
        Ok(self.bernoulli.sample(&mut rng) as u8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(kind: StreamKind) -> StreamKey {
        StreamKey::new(kind, 0xdead_beef, 0)
    }

    #[test]
    fn null_process_never_fires() {
        let mut s = ExpStream::new(key(StreamKind::ClockHatPlus), 0.0);
        assert_eq!(s.next_event_time(1.5, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn frontier_regression_is_an_error() {
        let mut s = ExpStream::new(key(StreamKind::ClockPlus), 0.0);
        let t = s.next_event_time(0.0, 2.0).unwrap();
        assert!(matches!(s.next_event_time(t / 2.0, 2.0), Err(RandomnessError::FrontierRegression { .. })));
    }

    #[test]
    fn gap_mean_matches_rate() {
        let n = 100_000;
        let mut s = ExpStream::new(key(StreamKind::ClockPlus), 0.0);
        let mut t = 0.0;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let next = s.next_event_time(t, 2.5).unwrap();
            let g = next - t;
            sum += g;
            sum2 += g * g;
            t = next;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn same_key_is_bit_identical() {
        let run = || {
            let mut s = ExpStream::new(key(StreamKind::Edge(-17)), 0.0);
            let mut t = 0.0;
            (0..1000)
                .map(|_| {
                    t = s.next_event_time(t, 1.0).unwrap();
                    t.to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn keys_are_distinct_streams() {
        let a = key(StreamKind::Edge(3)).seed_bytes();
        let b = key(StreamKind::StateDraw(3)).seed_bytes();
        let c = StreamKey::new(StreamKind::Edge(3), 0xdead_beef, 1).seed_bytes();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn distinct_keys_look_independent() {
        let n = 10_000;
        let gaps = |k: StreamKind| {
            let mut s = ExpStream::new(key(k), 0.0);
            let mut t = 0.0;
            (0..n)
                .map(|_| {
                    let next = s.next_event_time(t, 1.0).unwrap();
                    let g = next - t;
                    t = next;
                    g
                })
                .collect::<Vec<f64>>()
        };
        let a = gaps(StreamKind::Edge(0));
        let b = gaps(StreamKind::Edge(1));
        let r = crate::stats::pearson(&a, &b);
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn edge_source_is_consumer_independent() {
        let k = key(StreamKind::Edge(5));
        let mut early = EdgeArrowSource::new(k, 0.0);
        let mut late = EdgeArrowSource::new(k, 0.0);
        late.skip_before(7.5);
        early.skip_before(3.0);
        early.skip_before(7.5);
        assert_eq!(early.next_arrow_time().to_bits(), late.next_arrow_time().to_bits());
        assert!(late.next_arrow_time() >= 7.5);
        assert!(late.next_arrow_time() > late.frontier());
    }

    #[test]
    fn degenerate_densities() {
        let mut ones = StateDraws::new(1, 1.0);
        let mut zeros = StateDraws::new(1, 0.0);
        for a in 0..1000 {
            assert_eq!(ones.draw_state(a).unwrap(), 1);
            assert_eq!(zeros.draw_state(a).unwrap(), 0);
        }
    }

    #[test]
    fn repeat_draw_rejected() {
        let mut d = StateDraws::new(1, 0.5);
        d.draw_state(4).unwrap();
        assert_eq!(d.draw_state(4), Err(RandomnessError::RepeatDraw(4)));
        d.set_epoch(1);
        assert!(d.draw_state(4).is_ok());
    }

    #[test]
    fn state_draw_concentration() {
        let n = 10_000u64;
        let mut d = StateDraws::new(99, 0.6);
        let ones: u64 = (0..n).map(|a| d.draw_state(a).unwrap() as u64).sum();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.6).abs() <= 3.0 * (0.24 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn replica_seeds_differ() {
        let s: HashSet<u64> = (0..1000).map(|i| replica_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
