//! Regeneration detection.
//!
//! A trial happens at the first event after the next attempted jump at which
//! the walker is strictly right of every marked agent. The trial fails if the
//! walker later falls onto the right-Poisson sentinel started just behind it;
//! a trial that never fails is a regeneration time.
//!
//! "Never" is decided by the minimal walker: `g* = (M - M_T + X_T) - Y`
//! bounds `X - Y` from below, and its decrements are dominated by a skip-free
//! walk with up-rate `min α` and down-rate `max β + 1`, whose ruin probability
//! from height `g` is `r^g`. Once `g* >= G` with `r^G <= eps` the attempt is
//! confirmed.
//!
//! Confirmation typically arrives long after the trial, and the next block
//! starts at the trial, not at the confirmation. The tracker therefore keeps a
//! chain of speculative levels: level `i` searches for (or holds) the attempt
//! that would end block `i`, and level `i + 1` is the block that starts at
//! that attempt's trial time. A failure at level `i` abandons every deeper
//! level; confirmation of the front level emits a block.

use thiserror::Error;

use crate::environment::{AgentRegistry, EnvironmentError, PathId, PathPurpose};
use crate::walker::WalkerState;
use crate::{Site, Time};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegenerationError {
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttemptStatus {
    Pending,
    Failed(Time),
    Confirmed(Time),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attempt {
    pub trial_time: Time,
    pub trial_position: Site,
    pub m_at_trial: i64,
    pub n_at_trial: u64,
    pub sentinel: PathId,
    pub status: AttemptStatus,
}

impl Attempt {
    /// True when the walker sits on or left of the sentinel.
    pub fn detect_failure(&self, w: &WalkerState, reg: &mut AgentRegistry) -> bool {
        w.x <= reg.path_position(self.sentinel)
    }

    /// Minimal-walker gap above the sentinel.
    pub fn g_star(&self, w: &WalkerState, reg: &mut AgentRegistry) -> i64 {
        (w.m - self.m_at_trial + self.trial_position) - reg.path_position(self.sentinel)
    }

    pub fn confirm_success(&self, w: &WalkerState, reg: &mut AgentRegistry, gap: i64) -> bool {
        self.g_star(w, reg) >= gap
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(self.status, AttemptStatus::Confirmed(_))
    }
}

/// Trial condition: the walker is strictly right of the rightmost marked agent.
pub fn detect_trial(w: &WalkerState, reg: &AgentRegistry) -> bool {
    reg.rightmost().is_none_or(|r| w.x > r)
}

/// One renewal block, measured between consecutive regeneration times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenerationBlock {
    pub index: u64,
    pub start_time: Time,
    pub duration: Time,
    pub displacement: i64,
    /// Failed trials before the successful one.
    pub attempts: u32,
    pub event_count: u64,
    pub is_first: bool,
    pub censored: bool,
    /// Time at which the closing trial was confirmed.
    pub confirmed_at: Time,
}

/// Attempt bookkeeping. Every created attempt ends up in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttemptLedger {
    pub created: u64,
    pub failed: u64,
    /// Pending or confirmed attempts of a speculative block that vanished
    /// because an earlier attempt failed.
    pub abandoned: u64,
    pub succeeded: u64,
    pub pending: u64,
    pub confirmed_open: u64,
}

impl AttemptLedger {
    pub fn reconciles(&self) -> bool {
        self.created == self.failed + self.abandoned + self.succeeded + self.pending + self.confirmed_open
    }

    pub fn merge(&mut self, o: &AttemptLedger) {
        self.created += o.created;
        self.failed += o.failed;
        self.abandoned += o.abandoned;
        self.succeeded += o.succeeded;
        self.pending += o.pending;
        self.confirmed_open += o.confirmed_open;
    }
}

#[derive(Debug, Clone)]
struct Level {
    start_time: Time,
    start_x: Site,
    start_n: u64,
    failures: u32,
    armed: bool,
    attempt: Option<Attempt>,
}

impl Level {
    fn new(w: &WalkerState) -> Self {
        Self { start_time: w.t, start_x: w.x, start_n: w.n, failures: 0, armed: false, attempt: None }
    }
}

/// What happened at the current event, from the tracker's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventFlags {
    pub jump_attempted: bool,
    pub m_increased: bool,
}

#[derive(Debug, Clone)]
pub struct RegenerationTracker {
    gap: i64,
    levels: Vec<Level>,
    emitted: u64,
    ledger: AttemptLedger,
}

impl RegenerationTracker {
    pub fn new(confirmation_gap: u32, w: &WalkerState) -> Self {
        Self { gap: confirmation_gap as i64, levels: vec![Level::new(w)], emitted: 0, ledger: AttemptLedger::default() }
    }

    pub fn blocks_emitted(&self) -> u64 {
        self.emitted
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Live sentinels, front block first.
    pub fn sentinels(&self) -> impl Iterator<Item = PathId> + '_ {
        self.levels.iter().filter_map(|l| l.attempt.map(|a| a.sentinel))
    }

    /// Processes the state right after an event. Emitted blocks are appended
    /// to `out`; the return value tells whether a regeneration was confirmed,
    /// after which everything left of the new block start has been pruned.
    pub fn after_event(
        &mut self,
        flags: EventFlags,
        w: &WalkerState,
        reg: &mut AgentRegistry,
        out: &mut Vec<RegenerationBlock>,
    ) -> Result<bool, RegenerationError> {
        if flags.jump_attempted {
            let last = self.levels.last_mut().expect("at least one level");
            last.armed = true;
        }

        self.check_failures(w, reg);

        let mut regenerated = false;
        if flags.m_increased {
            for level in self.levels.iter_mut() {
                if let Some(a) = level.attempt.as_mut() {
                    if !a.is_confirmed() && a.confirm_success(w, reg, self.gap) {
                        a.status = AttemptStatus::Confirmed(w.t);
                    }
                }
            }
            while self.levels.len() > 1 && self.levels[0].attempt.is_some_and(|a| a.is_confirmed()) {
                let front = self.levels.remove(0);
                let a = front.attempt.expect("checked above");
                let AttemptStatus::Confirmed(at) = a.status else { unreachable!() };
                let y = reg.path_position(a.sentinel);
                reg.remove_path(a.sentinel);
                reg.prune_left_of(y + 1, a.trial_time)?;
                out.push(RegenerationBlock {
                    index: self.emitted,
                    start_time: front.start_time,
                    duration: a.trial_time - front.start_time,
                    displacement: a.trial_position - front.start_x,
                    attempts: front.failures,
                    event_count: a.n_at_trial - front.start_n,
                    is_first: self.emitted == 0,
                    censored: false,
                    confirmed_at: at,
                });
                self.emitted += 1;
                self.ledger.succeeded += 1;
                regenerated = true;
            }
        }

        let last = self.levels.last_mut().expect("at least one level");
        if last.armed && last.attempt.is_none() && detect_trial(w, reg) {
            let sentinel = reg.spawn_y_path(w.t, w.x - 1, PathPurpose::FailureSentinel).id;
            last.attempt = Some(Attempt {
                trial_time: w.t,
                trial_position: w.x,
                m_at_trial: w.m,
                n_at_trial: w.n,
                sentinel,
                status: AttemptStatus::Pending,
            });
            self.ledger.created += 1;
            self.levels.push(Level::new(w));
        }
        Ok(regenerated)
    }

    fn check_failures(&mut self, w: &WalkerState, reg: &mut AgentRegistry) {
        // Sentinels are nondecreasing with depth, so the failing levels form
        // a suffix of the chain.
        let mut failing = None;
        for i in (0..self.levels.len()).rev() {
            let Some(a) = self.levels[i].attempt else { continue };
            if !a.detect_failure(w, reg) {
                break;
            }
            if !a.is_confirmed() {
                failing = Some(i);
            }
        }
        let Some(i) = failing else { return };
        for level in self.levels.drain(i + 1..) {
            if let Some(a) = level.attempt {
                reg.remove_path(a.sentinel);
                self.ledger.abandoned += 1;
            }
        }
        let level = &mut self.levels[i];
        let a = level.attempt.take().expect("failing level holds an attempt");
        reg.remove_path(a.sentinel);
        level.failures += 1;
        level.armed = false;
        self.ledger.failed += 1;
    }

    /// Closes the run: the unfinished front block is reported as censored and
    /// open attempts are counted.
    pub fn finish(&self, w: &WalkerState) -> (RegenerationBlock, AttemptLedger) {
        let mut ledger = self.ledger;
        for l in &self.levels {
            match l.attempt.map(|a| a.status) {
                Some(AttemptStatus::Pending) => ledger.pending += 1,
                Some(AttemptStatus::Confirmed(_)) => ledger.confirmed_open += 1,
                _ => {}
            }
        }
        let front = &self.levels[0];
        let block = RegenerationBlock {
            index: self.emitted,
            start_time: front.start_time,
            duration: w.t - front.start_time,
            displacement: w.x - front.start_x,
            attempts: front.failures,
            event_count: w.n - front.start_n,
            is_first: self.emitted == 0,
            censored: true,
            confirmed_at: Time::NAN,
        };
        (block, ledger)
    }

    pub fn ledger(&self) -> AttemptLedger {
        self.finish(&WalkerState::default()).1
    }
}

/// Probability that the skip-free comparison walk started at height `g` ever
/// reaches 0: `r^g` with `r = down / up`.
pub fn ruin_probability(up: f64, down: f64, g: u32) -> f64 {
    (down / up).min(1.0).powi(g as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{FrozenStates, Geometry};

    fn walker(t: Time, x: Site, m: i64, n: u64) -> WalkerState {
        WalkerState { t, x, m, n, n_hat: 0 }
    }

    const JUMP: EventFlags = EventFlags { jump_attempted: true, m_increased: true };
    const ARROW: EventFlags = EventFlags { jump_attempted: false, m_increased: false };

    #[test]
    fn empty_registry_trial_at_first_jump() {
        let mut reg = AgentRegistry::new(Geometry::Line);
        let mut tr = RegenerationTracker::new(3, &walker(0.0, 0, 0, 0));
        let mut out = Vec::new();
        // an arrow before any jump attempt cannot trigger a trial
        tr.after_event(ARROW, &walker(0.1, 0, 0, 0), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 1);
        tr.after_event(JUMP, &walker(0.2, 1, 1, 1), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 2);
        assert_eq!(tr.ledger().created, 1);
    }

    #[test]
    fn agent_under_walker_blocks_trial() {
        let mut reg = AgentRegistry::new(Geometry::Line);
        reg.observe_and_mark(1, 0.0, &mut FrozenStates(0), true).unwrap();
        let mut tr = RegenerationTracker::new(3, &walker(0.0, 0, 0, 0));
        let mut out = Vec::new();
        tr.after_event(JUMP, &walker(0.2, 1, 1, 1), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 1);
        // the agent is carried left by an arrow: trial without a walker jump
        reg.apply_arrow(0).unwrap();
        tr.after_event(ARROW, &walker(0.3, 1, 1, 1), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 2);
    }

    #[test]
    fn failure_then_confirmation_emits_one_block() {
        let mut reg = AgentRegistry::new(Geometry::Line);
        let mut tr = RegenerationTracker::new(2, &walker(0.0, 0, 0, 0));
        let mut out = Vec::new();
        tr.after_event(JUMP, &walker(1.0, 1, 1, 1), &mut reg, &mut out).unwrap();
        // walker steps back onto the sentinel at 0
        tr.after_event(
            EventFlags { jump_attempted: true, m_increased: false },
            &walker(2.0, 0, 0, 2),
            &mut reg,
            &mut out,
        )
        .unwrap();
        assert_eq!(tr.depth(), 1);
        assert_eq!(tr.ledger().failed, 1);
        // next attempted jump re-arms and trials at once
        tr.after_event(JUMP, &walker(3.0, 1, 1, 3), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 2);
        assert!(out.is_empty());
        // g* = (2 - 1 + 1) - 0 reaches the gap
        tr.after_event(JUMP, &walker(4.0, 2, 2, 4), &mut reg, &mut out).unwrap();
        assert_eq!(out.len(), 1);
        let b = out[0];
        assert_eq!((b.duration, b.displacement, b.attempts, b.event_count), (3.0, 1, 1, 3));
        assert!(b.is_first && !b.censored);
        let (cens, ledger) = tr.finish(&walker(6.0, 2, 2, 4));
        assert!(cens.censored);
        assert!(ledger.reconciles(), "{ledger:?}");
    }

    #[test]
    fn failure_abandons_deeper_levels() {
        let mut reg = AgentRegistry::new(Geometry::Line);
        let mut tr = RegenerationTracker::new(50, &walker(0.0, 0, 0, 0));
        let mut out = Vec::new();
        let mut x = 0;
        for k in 1..=5 {
            x += 1;
            tr.after_event(JUMP, &walker(k as f64, x, x, k), &mut reg, &mut out).unwrap();
        }
        assert_eq!(tr.depth(), 6);
        // four arrows sweep every sentinel onto site 4, still left of the walker
        for e in 0..4 {
            reg.apply_arrow(e).unwrap();
        }
        tr.after_event(ARROW, &walker(6.0, 5, 5, 5), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 6);
        reg.apply_arrow(4).unwrap();
        tr.after_event(ARROW, &walker(7.0, 5, 5, 5), &mut reg, &mut out).unwrap();
        assert_eq!(tr.depth(), 1);
        let l = tr.ledger();
        assert_eq!((l.failed, l.abandoned), (1, 4));
        assert!(l.reconciles());
        assert_eq!(reg.live_paths(), 0);
    }

    #[test]
    fn ruin_bound() {
        assert!((ruin_probability(2.5, 1.6, 5) - 0.64f64.powi(5)).abs() < 1e-15);
    }
}
