//! The part of the interchange process the walker can see: marked agents with
//! their stored states, right-Poisson paths, and the set of edges whose arrows
//! can move any of them.
//!
//! Agents that were never observed are not materialized. Conditionally on
//! everything the walker has seen, their states are still i.i.d.
//! Bernoulli(rho), so an unmarked site is answered by a fresh draw from a
//! [`StateSource`].

use std::collections::BTreeMap;

use rustc_hash::FxHashMap as HashMap;

use thiserror::Error;

use crate::randomness::{RandomnessError, StateDraws};
use crate::{Site, Time};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvironmentError {
    #[error("prune at site {bound}: agent {agent} marked at t={mark_time} sits at {position}, right of the bound")]
    PruneWithRightAgents { bound: Site, agent: u64, position: Site, mark_time: Time },
    #[error("site index overflow")]
    SiteOverflow,
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
}

/// Lattice the agents live on. `Ring(n)` is used by the small-torus oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Line,
    Ring(u32),
}

impl Geometry {
    pub fn wrap(&self, x: Site) -> Site {
        match *self {
            Geometry::Line => x,
            Geometry::Ring(n) => x.rem_euclid(n as Site),
        }
    }

    fn step(&self, x: Site, d: Site) -> Result<Site, EnvironmentError> {
        x.checked_add(d).map(|y| self.wrap(y)).ok_or(EnvironmentError::SiteOverflow)
    }
}

/// Supplies the state of a site whose agent has never been observed.
pub trait StateSource {
    fn draw(&mut self, agent: u64, site: Site, time: Time) -> Result<u8, RandomnessError>;

    /// Called when the engine discards all left-behind state.
    fn set_epoch(&mut self, _epoch: u64) {}
}

impl StateSource for StateDraws {
    fn draw(&mut self, agent: u64, _site: Site, _time: Time) -> Result<u8, RandomnessError> {
        self.draw_state(agent)
    }

    fn set_epoch(&mut self, epoch: u64) {
        StateDraws::set_epoch(self, epoch)
    }
}

/// Every fresh agent is in state `j`.
#[derive(Debug, Clone, Copy)]
pub struct FrozenStates(pub u8);

impl StateSource for FrozenStates {
    fn draw(&mut self, _agent: u64, _site: Site, _time: Time) -> Result<u8, RandomnessError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedAgent {
    pub id: u64,
    pub position: Site,
    pub state: u8,
    pub mark_time: Time,
    /// Observed by the walker itself (as opposed to only by the density probe).
    pub by_walker: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathPurpose {
    FailureSentinel,
    Diagnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathId(usize);

/// A path that starts at `(anchor_site, anchor_time)` and jumps right across
/// every arrow it meets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RightPoissonPath {
    pub id: PathId,
    pub anchor_time: Time,
    pub anchor_site: Site,
    pub purpose: PathPurpose,
}

#[derive(Debug, Clone)]
struct PathRecord {
    path: RightPoissonPath,
    group: usize,
    live: bool,
}

/// Paths that meet follow the same arrows forever after, so they are kept in
/// coalescing groups.
#[derive(Debug, Clone)]
struct PathGroup {
    position: Site,
    members: u32,
    parent: usize,
}

/// Result of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub state: u8,
    /// A marked agent already occupied the site.
    pub was_marked: bool,
    /// ... and the walker itself had observed it before.
    pub was_walker_marked: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArrowEffect {
    pub agents_moved: u8,
    pub paths_moved: bool,
}

#[derive(Debug, Clone)]
pub struct AgentRegistry {
    geometry: Geometry,
    marked: BTreeMap<Site, MarkedAgent>,
    next_agent: u64,
    paths: Vec<PathRecord>,
    groups: Vec<PathGroup>,
    group_at: HashMap<Site, usize>,
    edge_refs: HashMap<Site, u32>,
    newly_active: Vec<Site>,
}

impl AgentRegistry {
    pub fn new(geometry: Geometry) -> Self {
        if let Geometry::Ring(n) = geometry {
            assert!(n >= 3, "ring needs at least three sites");
        }
        Self {
            geometry,
            marked: BTreeMap::new(),
            next_agent: 0,
            paths: Vec::new(),
            groups: Vec::new(),
            group_at: HashMap::default(),
            edge_refs: HashMap::default(),
            newly_active: Vec::new(),
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.marked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marked.is_empty()
    }

    pub fn agent_at(&self, site: Site) -> Option<&MarkedAgent> {
        self.marked.get(&self.geometry.wrap(site))
    }

    pub fn agents(&self) -> impl Iterator<Item = &MarkedAgent> {
        self.marked.values()
    }

    /// Position of the rightmost marked agent; `None` stands for `-inf`.
    pub fn rightmost(&self) -> Option<Site> {
        self.marked.keys().next_back().copied()
    }

    pub fn is_active(&self, edge: Site) -> bool {
        self.edge_refs.contains_key(&edge)
    }

    pub fn active_edges(&self) -> impl Iterator<Item = Site> + '_ {
        self.edge_refs.keys().copied()
    }

    pub fn active_edge_count(&self) -> usize {
        self.edge_refs.len()
    }

    /// Edges that became active since the last call.
    pub fn drain_newly_active(&mut self) -> std::vec::Drain<'_, Site> {
        self.newly_active.drain(..)
    }

    fn inc_edge(&mut self, e: Site) {
        let r = self.edge_refs.entry(e).or_insert(0);
        *r += 1;
        if *r == 1 {
            self.newly_active.push(e);
        }
    }

    fn dec_edge(&mut self, e: Site) {
        match self.edge_refs.get_mut(&e) {
            Some(r) if *r > 1 => *r -= 1,
            Some(_) => {
                self.edge_refs.remove(&e);
            }
            None => debug_assert!(false, "edge {e} released more often than acquired"),
        }
    }

    fn agent_edges(&self, x: Site) -> Result<[Site; 2], EnvironmentError> {
        Ok([self.geometry.step(x, -1)?, x])
    }

    /// Returns the state at `site`, marking the agent there if it was not
    /// marked yet.
    pub fn observe_and_mark<S: StateSource + ?Sized>(
        &mut self,
        site: Site,
        time: Time,
        source: &mut S,
        by_walker: bool,
    ) -> Result<Observation, EnvironmentError> {
        let site = self.geometry.wrap(site);
        if let Some(agent) = self.marked.get_mut(&site) {
            let obs = Observation { state: agent.state, was_marked: true, was_walker_marked: agent.by_walker };
            agent.by_walker |= by_walker;
            return Ok(obs);
        }
        let id = self.next_agent;
        self.next_agent += 1;
        let state = source.draw(id, site, time)?;
        for e in self.agent_edges(site)? {
            self.inc_edge(e);
        }
        self.marked.insert(site, MarkedAgent { id, position: site, state, mark_time: time, by_walker });
        Ok(Observation { state, was_marked: false, was_walker_marked: false })
    }

    /// Applies an arrow on the edge `(x, x + 1)`: marked agents on its two
    /// ends swap, and right-Poisson paths at `x` cross to `x + 1`.
    pub fn apply_arrow(&mut self, x: Site) -> Result<ArrowEffect, EnvironmentError> {
        let x = self.geometry.wrap(x);
        let y = self.geometry.step(x, 1)?;
        let mut effect = ArrowEffect::default();
        let left = self.marked.remove(&x);
        let right = self.marked.remove(&y);
        match (&left, &right) {
            (Some(_), None) => {
                self.dec_edge(self.geometry.step(x, -1)?);
                self.inc_edge(y);
            }
            (None, Some(_)) => {
                self.dec_edge(y);
                self.inc_edge(self.geometry.step(x, -1)?);
            }
            _ => {}
        }
        if let Some(mut a) = left {
            a.position = y;
            self.marked.insert(y, a);
            effect.agents_moved += 1;
        }
        if let Some(mut b) = right {
            b.position = x;
            self.marked.insert(x, b);
            effect.agents_moved += 1;
        }
        if let Some(g) = self.group_at.remove(&x) {
            effect.paths_moved = true;
            self.dec_edge(x);
            match self.group_at.get(&y).copied() {
                Some(h) => {
                    self.groups[g].parent = h;
                    self.groups[h].members += self.groups[g].members;
                }
                None => {
                    self.groups[g].position = y;
                    self.group_at.insert(y, g);
                    self.inc_edge(y);
                }
            }
        }
        Ok(effect)
    }

    /// Starts a right-Poisson path at `(site, time)`. It shares the arrows of
    /// every other consumer of the same edges.
    pub fn spawn_y_path(&mut self, time: Time, site: Site, purpose: PathPurpose) -> RightPoissonPath {
        let site = self.geometry.wrap(site);
        let group = match self.group_at.get(&site).copied() {
            Some(g) => {
                self.groups[g].members += 1;
                g
            }
            None => {
                let g = self.groups.len();
                self.groups.push(PathGroup { position: site, members: 1, parent: g });
                self.group_at.insert(site, g);
                self.inc_edge(site);
                g
            }
        };
        let path = RightPoissonPath { id: PathId(self.paths.len()), anchor_time: time, anchor_site: site, purpose };
        self.paths.push(PathRecord { path, group, live: true });
        path
    }

    fn root(&mut self, mut g: usize) -> usize {
        let mut r = g;
        while self.groups[r].parent != r {
            r = self.groups[r].parent;
        }
        while self.groups[g].parent != r {
            let next = self.groups[g].parent;
            self.groups[g].parent = r;
            g = next;
        }
        r
    }

    pub fn path(&self, id: PathId) -> RightPoissonPath {
        self.paths[id.0].path
    }

    /// Current position of a path.
    pub fn path_position(&mut self, id: PathId) -> Site {
        let g = self.paths[id.0].group;
        let r = self.root(g);
        self.groups[r].position
    }

    pub fn remove_path(&mut self, id: PathId) {
        let rec = &mut self.paths[id.0];
        if !rec.live {
            return;
        }
        rec.live = false;
        let g = rec.group;
        let r = self.root(g);
        self.groups[r].members -= 1;
        if self.groups[r].members == 0 {
            let pos = self.groups[r].position;
            self.group_at.remove(&pos);
            self.dec_edge(pos);
        }
    }

    pub fn live_paths(&self) -> usize {
        self.paths.iter().filter(|p| p.live).count()
    }

    /// Discards every marked agent strictly left of `bound`. Agents marked at
    /// or before `marked_up_to` must all be discarded; finding one at or right
    /// of `bound` is an engine bug.
    pub fn prune_left_of(&mut self, bound: Site, marked_up_to: Time) -> Result<usize, EnvironmentError> {
        if let Some(a) = self.marked.range(bound..).map(|(_, a)| a).find(|a| a.mark_time <= marked_up_to) {
            return Err(EnvironmentError::PruneWithRightAgents {
                bound,
                agent: a.id,
                position: a.position,
                mark_time: a.mark_time,
            });
        }
        let keep = self.marked.split_off(&bound);
        let dropped = std::mem::replace(&mut self.marked, keep);
        for x in dropped.keys() {
            for e in self.agent_edges(*x)? {
                self.dec_edge(e);
            }
        }
        Ok(dropped.len())
    }

    /// Recomputes every derived quantity from scratch and compares.
    pub fn check_invariants(&mut self) -> Result<(), String> {
        let mut refs: HashMap<Site, u32> = HashMap::default();
        for (x, a) in &self.marked {
            if a.position != *x {
                return Err(format!("agent {} keyed at {} but positioned at {}", a.id, x, a.position));
            }
            for e in self.agent_edges(*x).map_err(|e| e.to_string())? {
                *refs.entry(e).or_insert(0) += 1;
            }
        }
        let live_groups: Vec<usize> =
            (0..self.paths.len()).filter(|&i| self.paths[i].live).map(|i| self.paths[i].group).collect();
        let mut roots: Vec<usize> = live_groups.into_iter().map(|g| self.root(g)).collect();
        roots.sort_unstable();
        roots.dedup();
        for r in roots {
            *refs.entry(self.groups[r].position).or_insert(0) += 1;
            if self.group_at.get(&self.groups[r].position) != Some(&r) {
                return Err(format!("path group {r} not indexed at its position"));
            }
        }
        if refs != self.edge_refs {
            return Err("edge reference counts drifted".into());
        }
        if self.rightmost() != self.marked.values().map(|a| a.position).max() {
            return Err("rightmost marked position is stale".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> AgentRegistry {
        AgentRegistry::new(Geometry::Line)
    }

    fn mark(reg: &mut AgentRegistry, x: Site, state: u8) {
        reg.observe_and_mark(x, 0.0, &mut FrozenStates(state), true).unwrap();
    }

    #[test]
    fn single_agent_crosses() {
        let mut reg = line();
        mark(&mut reg, 4, 1);
        mark(&mut reg, 1, 0);
        let eff = reg.apply_arrow(4).unwrap();
        assert_eq!(eff.agents_moved, 1);
        assert_eq!(reg.agent_at(5).unwrap().state, 1);
        assert!(reg.agent_at(4).is_none());
        assert_eq!(reg.rightmost(), Some(5));
        reg.check_invariants().unwrap();
        // the left agent moving does not change the rightmost position
        reg.apply_arrow(1).unwrap();
        assert_eq!(reg.rightmost(), Some(5));
        reg.check_invariants().unwrap();
    }

    #[test]
    fn two_agents_swap() {
        let mut reg = line();
        mark(&mut reg, 2, 0);
        mark(&mut reg, 3, 1);
        let before: Vec<Site> = reg.agents().map(|a| a.position).collect();
        reg.apply_arrow(2).unwrap();
        let after: Vec<Site> = reg.agents().map(|a| a.position).collect();
        assert_eq!(before, after);
        assert_eq!(reg.agent_at(2).unwrap().state, 1);
        assert_eq!(reg.agent_at(3).unwrap().state, 0);
        assert_eq!(reg.rightmost(), Some(3));
        reg.check_invariants().unwrap();
    }

    #[test]
    fn observation_is_memoized() {
        let mut reg = line();
        let first = reg.observe_and_mark(7, 1.0, &mut FrozenStates(1), true).unwrap();
        assert!(!first.was_marked);
        let second = reg.observe_and_mark(7, 2.0, &mut FrozenStates(0), true).unwrap();
        assert_eq!(second.state, 1);
        assert!(second.was_marked && second.was_walker_marked);
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn probe_marks_are_not_walker_marks() {
        let mut reg = line();
        reg.observe_and_mark(0, 0.0, &mut FrozenStates(1), false).unwrap();
        let o = reg.observe_and_mark(0, 1.0, &mut FrozenStates(1), true).unwrap();
        assert!(o.was_marked && !o.was_walker_marked);
        assert!(reg.agent_at(0).unwrap().by_walker);
    }

    #[test]
    fn full_density_marks_ones() {
        let mut reg = line();
        let mut draws = StateDraws::new(3, 1.0);
        let o = reg.observe_and_mark(-3, 0.5, &mut draws, true).unwrap();
        assert_eq!(o.state, 1);
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn y_path_moves_only_across_arrows() {
        let mut reg = line();
        let p = reg.spawn_y_path(0.0, 10, PathPurpose::Diagnostic);
        reg.apply_arrow(9).unwrap();
        reg.apply_arrow(11).unwrap();
        assert_eq!(reg.path_position(p.id), 10);
        reg.apply_arrow(10).unwrap();
        assert_eq!(reg.path_position(p.id), 11);
        reg.apply_arrow(11).unwrap();
        assert_eq!(reg.path_position(p.id), 12);
        reg.check_invariants().unwrap();
    }

    #[test]
    fn y_paths_coalesce() {
        let mut reg = line();
        let a = reg.spawn_y_path(0.0, 0, PathPurpose::Diagnostic);
        let b = reg.spawn_y_path(0.0, 1, PathPurpose::Diagnostic);
        let c = reg.spawn_y_path(0.0, 0, PathPurpose::Diagnostic);
        reg.apply_arrow(0).unwrap();
        assert_eq!(reg.path_position(a.id), 1);
        assert_eq!(reg.path_position(b.id), 1);
        assert_eq!(reg.path_position(c.id), 1);
        assert_eq!(reg.active_edge_count(), 1);
        reg.remove_path(a.id);
        reg.remove_path(b.id);
        assert_eq!(reg.active_edge_count(), 1);
        reg.apply_arrow(1).unwrap();
        assert_eq!(reg.path_position(c.id), 2);
        reg.remove_path(c.id);
        assert_eq!(reg.active_edge_count(), 0);
        reg.check_invariants().unwrap();
    }

    #[test]
    fn agents_left_of_a_path_stay_left() {
        let mut reg = line();
        mark(&mut reg, 5, 1);
        let p = reg.spawn_y_path(0.0, 5, PathPurpose::Diagnostic);
        // the agent under the path is dragged along, never ahead of it
        reg.apply_arrow(5).unwrap();
        assert_eq!(reg.path_position(p.id), 6);
        assert_eq!(reg.rightmost(), Some(6));
        reg.apply_arrow(6).unwrap();
        assert_eq!(reg.path_position(p.id), 7);
        assert_eq!(reg.rightmost(), Some(7));
    }

    #[test]
    fn prune_empty_is_noop() {
        let mut reg = line();
        assert_eq!(reg.prune_left_of(0, 1.0).unwrap(), 0);
        assert!(reg.is_empty());
        assert_eq!(reg.rightmost(), None);
    }

    #[test]
    fn prune_clears_left_agents() {
        let mut reg = line();
        for x in -20..-8 {
            mark(&mut reg, x, (x & 1) as u8);
        }
        assert_eq!(reg.len(), 12);
        assert_eq!(reg.prune_left_of(0, 0.0).unwrap(), 12);
        assert!(reg.is_empty());
        assert_eq!(reg.rightmost(), None);
        assert_eq!(reg.active_edge_count(), 0);
    }

    #[test]
    fn prune_detects_agents_on_the_right() {
        let mut reg = line();
        mark(&mut reg, -4, 0);
        mark(&mut reg, 3, 0);
        assert!(matches!(reg.prune_left_of(0, 0.0), Err(EnvironmentError::PruneWithRightAgents { position: 3, .. })));
        // agents marked after the cutoff time are allowed to stay
        reg.observe_and_mark(9, 5.0, &mut FrozenStates(1), true).unwrap();
        assert!(reg.prune_left_of(4, 0.0).is_ok());
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn ring_wraps() {
        let mut reg = AgentRegistry::new(Geometry::Ring(5));
        mark(&mut reg, 4, 1);
        reg.apply_arrow(4).unwrap();
        assert_eq!(reg.agent_at(0).unwrap().state, 1);
        assert_eq!(reg.agent_at(5).unwrap().state, 1);
        reg.check_invariants().unwrap();
    }

    #[test]
    fn newly_active_edges_are_reported() {
        let mut reg = line();
        mark(&mut reg, 0, 0);
        let mut e: Vec<Site> = reg.drain_newly_active().collect();
        e.sort();
        assert_eq!(e, vec![-1, 0]);
        reg.apply_arrow(0).unwrap();
        let e: Vec<Site> = reg.drain_newly_active().collect();
        assert_eq!(e, vec![1]);
        assert!(!reg.is_active(-1));
    }
}
