//! Finite constrained MDP over (AoI, usefulness) tuples.
//!
//! A state holds, for every attribute some actuator requires, its AoI in
//! `1..=max_aoi` and its usefulness level index in `1..=levels`. States are
//! numbered in mixed radix with digit `(Δ - 1) · levels + (j - 1)` per
//! attribute, first relevant attribute least significant, so the all-fresh,
//! lowest-usefulness state is index 0. Action 0 idles; action `a >= 1`
//! queries the `a`-th relevant attribute.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::config::{select_agent, slot_cost, SystemConfig};
use crate::error::{Error, Result};

/// Largest state space the exact solver will enumerate.
pub const MAX_STATES: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CmdpState {
    /// AoI per relevant attribute.
    pub aoi: Vec<u32>,
    /// 1-based usefulness level index per relevant attribute.
    pub level: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    relevant: Vec<usize>,
    max_aoi: u32,
    num_levels: usize,
    radix: usize,
    len: usize,
}

impl StateSpace {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let relevant = config.relevant_attributes();
        if relevant.is_empty() {
            return Err(Error::Contract("no relevant attributes".into()));
        }
        let radix = config.max_aoi as usize * config.num_levels();
        let states = (radix as u128).checked_pow(relevant.len() as u32).unwrap_or(u128::MAX);
        if states > MAX_STATES as u128 {
            return Err(Error::Capacity { states, limit: MAX_STATES });
        }
        Ok(Self {
            relevant,
            max_aoi: config.max_aoi,
            num_levels: config.num_levels(),
            radix,
            len: states as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_actions(&self) -> usize {
        self.relevant.len() + 1
    }

    /// 0-based attribute ids covered by the state, in digit order.
    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }

    pub fn max_aoi(&self) -> u32 {
        self.max_aoi
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    /// Attribute queried by `action`, or `None` for the idle action.
    pub fn action_attribute(&self, action: usize) -> Option<usize> {
        if action == 0 {
            None
        } else {
            self.relevant.get(action - 1).copied()
        }
    }

    /// Action that queries attribute `m`, if `m` is relevant.
    pub fn attribute_action(&self, m: usize) -> Option<usize> {
        self.relevant.iter().position(|&r| r == m).map(|p| p + 1)
    }

    pub fn encode(&self, state: &CmdpState) -> usize {
        debug_assert_eq!(state.aoi.len(), self.relevant.len());
        let mut index = 0;
        for pos in (0..self.relevant.len()).rev() {
            let digit = (state.aoi[pos] as usize - 1) * self.num_levels + (state.level[pos] - 1);
            index = index * self.radix + digit;
        }
        index
    }

    pub fn decode(&self, mut index: usize) -> CmdpState {
        let n = self.relevant.len();
        let mut aoi = Vec::with_capacity(n);
        let mut level = Vec::with_capacity(n);
        for _ in 0..n {
            let digit = index % self.radix;
            index /= self.radix;
            aoi.push((digit / self.num_levels) as u32 + 1);
            level.push(digit % self.num_levels + 1);
        }
        CmdpState { aoi, level }
    }

    /// Index of the all-initial state (Δ = 1, lowest level everywhere).
    pub fn initial_index(&self) -> usize {
        0
    }

    /// Encodes full per-attribute vectors (indexed by attribute id).
    pub fn encode_attributes(&self, aoi: &[u32], level: &[usize]) -> usize {
        self.relevant.iter().rev().fold(0, |index, &m| {
            index * self.radix + (aoi[m] as usize - 1) * self.num_levels + (level[m] - 1)
        })
    }

    /// Writes the tuple of `index` into per-attribute vectors.
    pub fn decode_into(&self, mut index: usize, aoi: &mut [u32], level: &mut [usize]) {
        for &m in &self.relevant {
            let digit = index % self.radix;
            index /= self.radix;
            aoi[m] = (digit / self.num_levels) as u32 + 1;
            level[m] = digit % self.num_levels + 1;
        }
    }
}

/// Total GoE of a decoded state.
pub fn state_goe(state: &CmdpState, config: &SystemConfig) -> f64 {
    state
        .aoi
        .iter()
        .zip(&state.level)
        .map(|(&d, &j)| config.composite.combine(d, config.usefulness.level(j)))
        .sum()
}

/// Sparse transition kernel, one row per (state, action).
#[derive(Debug, Clone)]
pub struct TransitionTable {
    space: StateSpace,
    offsets: Vec<usize>,
    successors: Vec<u32>,
    probs: Vec<f64>,
    weights: Vec<f64>,
    /// Prospect value of each state's total GoE.
    goe_value: Vec<f64>,
    /// Prospect value of each action's query cost.
    action_cost: Vec<f64>,
    discount: f64,
    /// States whose levels are all attainable.
    live: Vec<bool>,
}

impl TransitionTable {
    pub fn build(config: &SystemConfig) -> Result<Self> {
        let space = StateSpace::new(config)?;
        let num_actions = space.num_actions();
        let n_rel = space.relevant.len();
        let max_aoi = space.max_aoi;

        // Per relevant attribute: success probability of its selected agent
        // and the level pmf.
        let success: Vec<f64> = space
            .relevant
            .iter()
            .map(|&m| config.agents[select_agent(config, m)].success_prob(m))
            .collect();
        let failure: Vec<f64> = space
            .relevant
            .iter()
            .map(|&m| {
                let agent = &config.agents[select_agent(config, m)];
                let po = agent.observe_prob[m];
                (1.0 - po) + agent.erase_prob * po
            })
            .collect();

        let mut offsets = Vec::with_capacity(space.len * num_actions + 1);
        let mut successors = Vec::new();
        let mut probs = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(config.num_levels() + 1);
        offsets.push(0);
        for s in 0..space.len {
            let state = space.decode(s);
            let aged = CmdpState {
                aoi: state.aoi.iter().map(|&d| (d + 1).min(max_aoi)).collect(),
                level: state.level.clone(),
            };
            let aged_index = space.encode(&aged);
            for a in 0..num_actions {
                row.clear();
                if a == 0 {
                    row.push((aged_index, 1.0));
                } else {
                    let pos = a - 1;
                    let m = space.relevant[pos];
                    row.push((aged_index, failure[pos]));
                    for (j0, &pj) in config.usefulness.per_attribute_pmf[m].iter().enumerate() {
                        if pj <= 0.0 || success[pos] <= 0.0 {
                            continue;
                        }
                        let mut next = aged.clone();
                        next.aoi[pos] = 1;
                        next.level[pos] = j0 + 1;
                        push_merged(&mut row, space.encode(&next), pj * success[pos]);
                    }
                    row.retain(|&(_, p)| p > 0.0);
                }
                row.sort_by_key(|&(t, _)| t);
                for &(t, p) in &row {
                    successors.push(t as u32);
                    probs.push(p);
                }
                offsets.push(successors.len());
            }
            debug_assert_eq!(state.aoi.len(), n_rel);
        }

        let attainable: Vec<Vec<bool>> = space
            .relevant
            .iter()
            .zip(&success)
            .map(|(&m, &p)| {
                (0..space.num_levels)
                    .map(|j0| if p > 0.0 { config.usefulness.per_attribute_pmf[m][j0] > 0.0 } else { j0 == 0 })
                    .collect()
            })
            .collect();
        let live = (0..space.len)
            .map(|s| space.decode(s).level.iter().zip(&attainable).all(|(&j, ok)| ok[j - 1]))
            .collect();
        let weights = probs.iter().map(|&p| config.cpt.weight_unchecked(p)).collect();
        let goe_value = (0..space.len)
            .map(|s| config.cpt.goe_value(state_goe(&space.decode(s), config)))
            .collect();
        let action_cost = (0..num_actions).map(|a| slot_cost((a > 0) as usize, config)).collect();

        Ok(Self {
            space,
            offsets,
            successors,
            probs,
            weights,
            goe_value,
            action_cost,
            discount: config.discount,
            live,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len
    }

    pub fn num_actions(&self) -> usize {
        self.space.num_actions()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    fn row_range(&self, state: usize, action: usize) -> std::ops::Range<usize> {
        let r = state * self.num_actions() + action;
        self.offsets[r]..self.offsets[r + 1]
    }

    /// `(successor, probability)` pairs of a row, sorted by successor.
    pub fn row(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_range(state, action);
        self.successors[range.clone()]
            .iter()
            .zip(&self.probs[range])
            .map(|(&t, &p)| (t as usize, p))
    }

    /// Same as [`row`](Self::row) with probability-weighted masses.
    pub fn weighted_row(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_range(state, action);
        self.successors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Prospect value of the total GoE of `state`.
    pub fn goe_value(&self, state: usize) -> f64 {
        self.goe_value[state]
    }

    /// Prospect value of the query cost of `action`.
    pub fn action_cost(&self, action: usize) -> f64 {
        self.action_cost[action]
    }

    /// Net reward for landing in `next` after `action`.
    pub fn reward(&self, next: usize, action: usize, mu: f64) -> f64 {
        self.goe_value[next] - mu * self.action_cost[action]
    }

    /// Checks weak accessibility: the states split into a class `C` whose
    /// members reach each other under some policy and a set `T` that is
    /// transient under every policy.
    ///
    /// Only states whose usefulness levels can actually be produced by an
    /// update are considered (a never-refreshed attribute keeps its initial
    /// level). Returns `None` when the condition holds, otherwise a
    /// `(from, to)` pair where some policy traps `from` away from `to`.
    pub fn weak_accessibility_witness(&self) -> Option<(usize, usize)> {
        let start = self.live.iter().position(|&l| l)?;
        // Idling is deterministic and ends in a state closed under idling,
        // which therefore belongs to `C`.
        let mut hub = start;
        loop {
            let next = self.row(hub, 0).next().map_or(hub, |(t, _)| t);
            if next == hub {
                break;
            }
            hub = next;
        }
        weak_accessibility_core(self.num_states(), self.num_actions(), |s, a| self.row(s, a).collect(), &self.live, hub)
    }

    pub fn check_weak_accessibility(&self) -> (bool, Option<(usize, usize)>) {
        let witness = self.weak_accessibility_witness();
        (witness.is_none(), witness)
    }

    /// Writes `state,action,successor,probability` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state", "action", "successor", "probability"])?;
        for s in 0..self.num_states() {
            for a in 0..self.num_actions() {
                for (t, p) in self.row(s, a) {
                    w.write_record([s.to_string(), a.to_string(), t.to_string(), p.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn push_merged(row: &mut Vec<(usize, f64)>, target: usize, mass: f64) {
    match row.iter_mut().find(|(t, _)| *t == target) {
        Some(entry) => entry.1 += mass,
        None => row.push((target, mass)),
    }
}

/// Core of the weak accessibility check on an arbitrary finite model.
/// `hub` must lie in the candidate class `C`.
fn weak_accessibility_core<F>(n: usize, num_actions: usize, row: F, live: &[bool], hub: usize) -> Option<(usize, usize)>
where
    F: Fn(usize, usize) -> Vec<(usize, f64)>,
{
    let rows: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|s| {
            (0..num_actions)
                .map(|a| row(s, a).into_iter().filter(|&(t, p)| p > 0.0 && live[t]).map(|(t, _)| t).collect())
                .collect()
        })
        .collect();
    let mut forward = vec![Vec::new(); n];
    let mut backward = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| live[s]) {
        for succ in &rows[s] {
            for &t in succ {
                forward[s].push(t);
                backward[t].push(s);
            }
        }
    }
    let from_hub = reachable(&forward, hub);
    let to_hub = reachable(&backward, hub);
    // Shrink T to the largest subset some policy can keep the chain inside.
    let mut trapped: Vec<bool> = (0..n).map(|s| live[s] && !(from_hub[s] && to_hub[s])).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if trapped[s] && !rows[s].iter().any(|succ| succ.iter().all(|&t| trapped[t])) {
                trapped[s] = false;
                changed = true;
            }
        }
    }
    trapped.iter().position(|&x| x).map(|s| (s, hub))
}

fn reachable(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(s) = queue.pop_front() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tiny() -> SystemConfig {
        SystemConfig::from_toml_str(
            "[system]\nM = 1\nK = 1\nmax_aoi = 2\nlevels = 2\n[goals]\nrequired_sets = [[1]]\n",
        )
        .unwrap()
    }

    #[test]
    fn default_space_has_256_states() {
        let space = StateSpace::new(&SystemConfig::default()).unwrap();
        assert_eq!(space.len(), 256);
        assert_eq!(space.num_actions(), 3);
        assert_eq!(space.encode(&CmdpState { aoi: vec![1, 1], level: vec![1, 1] }), 0);
        assert_eq!(StateSpace::new(&tiny()).unwrap().len(), 4);
    }

    #[test]
    fn encode_decode_bijection() {
        let space = StateSpace::new(&SystemConfig::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..space.len() {
            let s = space.decode(i);
            assert!(s.aoi.iter().all(|&d| (1..=4).contains(&d)));
            assert!(s.level.iter().all(|&j| (1..=4).contains(&j)));
            assert_eq!(space.encode(&s), i);
            assert!(seen.insert(s));
        }
    }

    #[test]
    fn capacity_error_for_large_spaces() {
        let cfg = SystemConfig::default().with_num_attributes(5).unwrap();
        assert!(matches!(StateSpace::new(&cfg), Err(Error::Capacity { .. })));
        let cfg = SystemConfig::default().with_num_attributes(4).unwrap();
        assert_eq!(StateSpace::new(&cfg).unwrap().len(), 65536);
    }

    #[test]
    fn rows_are_normalized_and_idle_is_deterministic() {
        let table = TransitionTable::build(&SystemConfig::default()).unwrap();
        for s in 0..table.num_states() {
            for a in 0..table.num_actions() {
                let total: f64 = table.row(s, a).map(|(_, p)| p).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            }
            assert_eq!(table.row(s, 0).count(), 1);
        }
    }

    #[test]
    fn success_and_failure_masses() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let space = table.space();
        for s in [0, 17, 255] {
            for a in 1..3 {
                let pos = a - 1;
                let mut fail = 0.0;
                let mut succ = 0.0;
                for (t, p) in table.row(s, a) {
                    if space.decode(t).aoi[pos] == 1 {
                        succ += p;
                    } else {
                        fail += p;
                    }
                }
                assert_abs_diff_eq!(succ, 0.64, epsilon = 1e-12);
                assert_abs_diff_eq!(fail, 0.36, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn clamped_successors_merge() {
        let cfg = SystemConfig::from_toml_str(
            "[system]\nM = 1\nK = 1\nmax_aoi = 1\nlevels = 1\n[goals]\nrequired_sets = [[1]]\n",
        )
        .unwrap();
        let table = TransitionTable::build(&cfg).unwrap();
        assert_eq!(table.num_states(), 1);
        let row: Vec<_> = table.row(0, 1).collect();
        assert_eq!(row.len(), 1);
        assert_abs_diff_eq!(row[0].1, 1.0, epsilon = 1e-12);
        assert!(table.check_weak_accessibility().0);
    }

    #[test]
    fn reward_examples() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let space = table.space();
        let fresh = space.encode(&CmdpState { aoi: vec![1, 1], level: vec![4, 4] });
        assert_abs_diff_eq!(table.reward(fresh, 0, 0.0), 1.8f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            table.reward(fresh, 0, 0.0) - table.reward(fresh, 1, 2.0),
            2.0 * 0.5f64.sqrt(),
            epsilon = 1e-12
        );
        // u = (0.25, 0.25) at Δ = (2, 2) has total GoE 0.25
        let mut at_ref = cfg.clone();
        at_ref.cpt.goe_ref = 0.25;
        let t2 = TransitionTable::build(&at_ref).unwrap();
        let s = space.encode(&CmdpState { aoi: vec![2, 2], level: vec![1, 1] });
        assert_eq!(t2.reward(s, 0, 0.0), 0.0);
    }

    #[test]
    fn weak_accessibility() {
        let table = TransitionTable::build(&SystemConfig::default()).unwrap();
        assert_eq!(table.check_weak_accessibility(), (true, None));

        // A blind attribute keeps its initial level; its fresh states are
        // transient under every policy.
        let mut cfg = SystemConfig::default();
        for agent in &mut cfg.agents {
            agent.observe_prob[1] = 0.0;
        }
        assert_eq!(TransitionTable::build(&cfg).unwrap().check_weak_accessibility(), (true, None));
    }

    #[test]
    fn weak_accessibility_detects_competing_closed_classes() {
        // 0 -a1-> 1 and 0 -a2-> 2; states 1 and 2 absorb under every action.
        let rows = |s: usize, a: usize| -> Vec<(usize, f64)> {
            match (s, a) {
                (0, 0) => vec![(1, 1.0)],
                (0, _) => vec![(2, 1.0)],
                (t, _) => vec![(t, 1.0)],
            }
        };
        assert_eq!(weak_accessibility_core(3, 2, rows, &[true; 3], 1), Some((0, 1)));
        // Dropping state 2 leaves 0 transient and 1 as the class.
        let rows = |s: usize, _a: usize| -> Vec<(usize, f64)> { vec![(if s == 0 { 1 } else { s }, 1.0)] };
        assert_eq!(weak_accessibility_core(3, 2, rows, &[true, true, false], 1), None);
        // A transient cycle that some policy can sustain breaks the condition.
        let rows = |s: usize, a: usize| -> Vec<(usize, f64)> {
            match (s, a) {
                (0, 0) => vec![(1, 1.0)],
                (1, 0) => vec![(0, 1.0)],
                (_, _) => vec![(2, 1.0)],
            }
        };
        assert_eq!(weak_accessibility_core(3, 2, rows, &[true; 3], 2), Some((0, 2)));
    }

    #[test]
    fn kernel_dump_has_one_line_per_entry() {
        let table = TransitionTable::build(&tiny()).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let entries: usize = (0..4).map(|s| (0..2).map(|a| table.row(s, a).count()).sum::<usize>()).sum();
        assert_eq!(text.lines().count(), entries + 1);
        assert!(text.starts_with("state,action,successor,probability\n"));
    }

    proptest! {
        #[test]
        fn success_mass_matches_selected_agent(
            po in 0.01f64..0.99, pe in 0.01f64..1.0,
            w in proptest::collection::vec(0.01f64..1.0, 8),
        ) {
            let mut cfg = SystemConfig::default();
            let total: f64 = w.iter().sum();
            cfg.attributes[0].source_pmf = w.iter().map(|x| x / total).collect();
            cfg.usefulness = crate::config::UsefulnessModel::canonical(&cfg.attributes, 4).unwrap();
            for agent in &mut cfg.agents {
                agent.observe_prob[0] = po;
                agent.erase_prob = pe;
            }
            let table = TransitionTable::build(&cfg).unwrap();
            let space = table.space();
            for s in [0usize, 100, 255] {
                let succ: f64 = table.row(s, 1).filter(|&(t, _)| space.decode(t).aoi[0] == 1).map(|(_, p)| p).sum();
                prop_assert!((succ - (1.0 - pe) * po).abs() < 1e-12);
                let total: f64 = table.row(s, 1).map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn decode_encode_identity(aoi in proptest::collection::vec(1u32..=4, 2), level in proptest::collection::vec(1usize..=4, 2)) {
            let space = StateSpace::new(&SystemConfig::default()).unwrap();
            let s = CmdpState { aoi, level };
            prop_assert_eq!(space.decode(space.encode(&s)), s);
        }
    }
}
