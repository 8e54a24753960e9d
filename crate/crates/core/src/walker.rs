//! The walker driven by four independent clocks.
//!
//! `N+` (rate `min α`) and `N-` (rate `min β`) fire jumps regardless of the
//! environment. `N^+` (rate `max α - min α`) and `N^-` (rate `max β - min β`)
//! look at the state `j` under the walker and jump only when the local rate is
//! the larger one, which realizes the local rates `α_j`, `β_j` exactly.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelParams;
use crate::{Site, Time};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkerError {
    #[error("unknown walker event {0:?}")]
    UnknownEvent(String),
    #[error("walker event at t={at} does not follow t={current}")]
    NonIncreasingTime { at: Time, current: Time },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WalkerEvent {
    Plus,
    Minus,
    HatPlus,
    HatMinus,
}

impl WalkerEvent {
    pub const ALL: [WalkerEvent; 4] =
        [WalkerEvent::Plus, WalkerEvent::Minus, WalkerEvent::HatPlus, WalkerEvent::HatMinus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn observes(self) -> bool {
        matches!(self, WalkerEvent::HatPlus | WalkerEvent::HatMinus)
    }

    pub fn label(self) -> &'static str {
        match self {
            WalkerEvent::Plus => "N+",
            WalkerEvent::Minus => "N-",
            WalkerEvent::HatPlus => "N^+",
            WalkerEvent::HatMinus => "N^-",
        }
    }
}

impl fmt::Display for WalkerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WalkerEvent {
    type Err = WalkerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WalkerEvent::ALL.into_iter().find(|e| e.label() == s).ok_or_else(|| WalkerError::UnknownEvent(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WalkerState {
    pub t: Time,
    pub x: Site,
    /// Minimal walker: `+1` at `N+`, `-1` at `N-` and `N^-`.
    pub m: i64,
    /// Attempted jumps (all four clocks).
    pub n: u64,
    /// Environment observations (`N^+` and `N^-`).
    pub n_hat: u64,
}

impl WalkerState {
    pub fn at_origin() -> Self {
        Self { t: 0.0, x: 0, m: 0, n: 0, n_hat: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub dx: i8,
    pub observed: Option<u8>,
}

/// Applies one clock ring at time `s`. `observe` is called exactly once for
/// `N^+` and `N^-` rings, with the walker's site before the jump.
pub fn walker_step<E>(
    w: &mut WalkerState,
    event: WalkerEvent,
    s: Time,
    params: &ModelParams,
    observe: impl FnOnce(Site) -> Result<u8, E>,
) -> Result<Result<StepOutcome, E>, WalkerError> {
    if !(s > w.t) {
        return Err(WalkerError::NonIncreasingTime { at: s, current: w.t });
    }
    let (dx, dm, observed) = match event {
        WalkerEvent::Plus => (1, 1, None),
        WalkerEvent::Minus => (-1, -1, None),
        WalkerEvent::HatPlus => match observe(w.x) {
            Ok(j) => ((params.alpha(j) == params.alpha_max()) as i8, 0, Some(j)),
            Err(e) => return Ok(Err(e)),
        },
        WalkerEvent::HatMinus => match observe(w.x) {
            Ok(j) => (-((params.beta(j) == params.beta_max()) as i8), -1, Some(j)),
            Err(e) => return Ok(Err(e)),
        },
    };
    w.t = s;
    w.x += dx as Site;
    w.m += dm;
    w.n += 1;
    if event.observes() {
        w.n_hat += 1;
    }
    Ok(Ok(StepOutcome { dx, observed }))
}

/// Counts of walker-level pathwise inequality violations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CouplingCheck {
    pub steps: u64,
    pub m_domination: u64,
    pub jump_domination: u64,
    pub observation_count: u64,
}

impl CouplingCheck {
    /// Compares two consecutive states. Checking every step is equivalent to
    /// checking all pairs `s <= t`, since increments add up.
    pub fn record(&mut self, before: &WalkerState, after: &WalkerState, event: WalkerEvent) {
        self.steps += 1;
        let dx = after.x - before.x;
        let dm = after.m - before.m;
        let dn = (after.n - before.n) as i64;
        if dm > dx {
            self.m_domination += 1;
        }
        if dx.abs() > dn {
            self.jump_domination += 1;
        }
        let dh = after.n_hat - before.n_hat;
        if dh != event.observes() as u64 {
            self.observation_count += 1;
        }
    }

    pub fn violations(&self) -> u64 {
        self.m_domination + self.jump_domination + self.observation_count
    }

    pub fn merge(&mut self, other: &CouplingCheck) {
        self.steps += other.steps;
        self.m_domination += other.m_domination;
        self.jump_domination += other.jump_domination;
        self.observation_count += other.observation_count;
    }
}

/// Empirical jump rates in an environment frozen to state `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRates {
    pub state: u8,
    pub horizon: Time,
    pub right_rate: f64,
    pub right_se: f64,
    pub left_rate: f64,
    pub left_se: f64,
    pub expected_right: f64,
    pub expected_left: f64,
}

impl EffectiveRates {
    pub fn within(&self, k_se: f64) -> bool {
        (self.right_rate - self.expected_right).abs() <= k_se * self.right_se
            && (self.left_rate - self.expected_left).abs() <= k_se * self.left_se
    }
}

/// Runs the walker for `horizon` with every fresh agent in state `j` and
/// estimates its right and left jump rates (Poisson counts, SE = sqrt(n)/T).
pub fn effective_rates_check(params: &ModelParams, j: u8, horizon: Time, seed: u64) -> EffectiveRates {
    use crate::engine::{Engine, EngineConfig};
    use crate::environment::FrozenStates;

    // regeneration stays on: it prunes the marked agents left behind, which
    // would otherwise keep ever more edges active
    let cfg = EngineConfig::new(*params, seed);
    let mut engine = Engine::new(cfg, FrozenStates(j)).expect("valid parameters");
    engine.run_until(horizon).expect("frozen run");
    let right = engine.counters().right_jumps;
    let left = engine.counters().left_jumps;
    let rate = |k: u64| (k as f64 / horizon, (k as f64).sqrt() / horizon);
    let (rr, rse) = rate(right);
    let (lr, lse) = rate(left);
    EffectiveRates {
        state: j,
        horizon,
        right_rate: rr,
        right_se: rse.max(f64::MIN_POSITIVE),
        left_rate: lr,
        left_se: lse.max(f64::MIN_POSITIVE),
        expected_right: params.alpha(j),
        expected_left: params.beta(j),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic() -> ModelParams {
        ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.6).unwrap()
    }

    fn step(w: &mut WalkerState, e: WalkerEvent, s: Time, j: u8) -> StepOutcome {
        walker_step::<()>(w, e, s, &generic(), |_| Ok(j)).unwrap().unwrap()
    }

    #[test]
    fn plus_ring() {
        let mut w = WalkerState::at_origin();
        let out = step(&mut w, WalkerEvent::Plus, 0.5, 0);
        assert_eq!(out.dx, 1);
        assert_eq!((w.x, w.m, w.n, w.n_hat), (1, 1, 1, 0));
    }

    #[test]
    fn hat_plus_follows_the_larger_rate() {
        let mut w = WalkerState::at_origin();
        assert_eq!(step(&mut w, WalkerEvent::HatPlus, 0.1, 1).dx, 1);
        assert_eq!(step(&mut w, WalkerEvent::HatPlus, 0.2, 0).dx, 0);
        assert_eq!((w.x, w.m, w.n, w.n_hat), (1, 0, 2, 2));
    }

    #[test]
    fn hat_minus_always_decrements_m() {
        let mut w = WalkerState::at_origin();
        assert_eq!(step(&mut w, WalkerEvent::HatMinus, 0.1, 1).dx, -1);
        assert_eq!(step(&mut w, WalkerEvent::HatMinus, 0.2, 0).dx, 0);
        assert_eq!((w.x, w.m), (-1, -2));
    }

    #[test]
    fn time_must_increase() {
        let mut w = WalkerState::at_origin();
        step(&mut w, WalkerEvent::Minus, 1.0, 0);
        let r = walker_step::<()>(&mut w, WalkerEvent::Plus, 1.0, &generic(), |_| Ok(0));
        assert!(matches!(r, Err(WalkerError::NonIncreasingTime { .. })));
    }

    #[test]
    fn labels_round_trip() {
        for e in WalkerEvent::ALL {
            assert_eq!(e.label().parse::<WalkerEvent>().unwrap(), e);
        }
        assert!(matches!("N*".parse::<WalkerEvent>(), Err(WalkerError::UnknownEvent(_))));
    }

    #[test]
    fn coupling_check_flags_bad_steps() {
        let mut c = CouplingCheck::default();
        let a = WalkerState { t: 0.0, x: 0, m: 0, n: 0, n_hat: 0 };
        let bad = WalkerState { t: 1.0, x: 0, m: 1, n: 1, n_hat: 0 };
        c.record(&a, &bad, WalkerEvent::Plus);
        assert_eq!(c.m_domination, 1);
        let good = WalkerState { t: 1.0, x: 1, m: 1, n: 1, n_hat: 0 };
        let mut c = CouplingCheck::default();
        c.record(&a, &good, WalkerEvent::Plus);
        assert_eq!(c.violations(), 0);
    }
}
