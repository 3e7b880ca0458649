//! Decision rules mapping the current slot to the attributes to query.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::StateSpace;
use crate::config::SystemConfig;
use crate::env::{EnvState, Simulator};
use crate::error::{Error, Result};
use crate::solver::{sample_action, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Policy,
    Wrr,
    Lwgf,
    Uniform,
    Markovian,
    TabularQ,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::Policy,
        SchedulerKind::Wrr,
        SchedulerKind::Lwgf,
        SchedulerKind::Uniform,
        SchedulerKind::Markovian,
        SchedulerKind::TabularQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Policy => "policy",
            SchedulerKind::Wrr => "wrr",
            SchedulerKind::Lwgf => "lwgf",
            SchedulerKind::Uniform => "uniform",
            SchedulerKind::Markovian => "markovian",
            SchedulerKind::TabularQ => "tabular_q",
        }
    }

    /// Whether the scheduler needs a solved or trained policy table.
    pub fn needs_policy(self) -> bool {
        matches!(self, SchedulerKind::Policy | SchedulerKind::TabularQ)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "model_based" && *k == SchedulerKind::Policy))
            .ok_or_else(|| Error::config("scheduler.kind", format!("unknown scheduler `{s}`")))
    }
}

/// A stateful scheduler bound to one simulation run.
#[derive(Debug, Clone)]
pub enum Scheduler {
    /// Follows a CMDP policy table (solved or learned).
    Table { policy: Policy, space: StateSpace },
    /// Smooth weighted round-robin over the relevant attributes.
    Wrr { relevant: Vec<usize>, weights: Vec<f64>, current: Vec<f64> },
    /// Lowest weighted GoE of the previous slot first.
    Lwgf { relevant: Vec<usize>, weights: Vec<f64> },
    Uniform { relevant: Vec<usize> },
    /// Two-state query/idle chain, attributes served round-robin.
    Markovian { relevant: Vec<usize>, stay: f64, enter: f64, querying: bool, cursor: usize },
}

impl Scheduler {
    /// Builds a benchmark scheduler; `policy` is required for table kinds.
    pub fn new(kind: SchedulerKind, config: &SystemConfig, policy: Option<Policy>) -> Result<Self> {
        let relevant = config.relevant_attributes();
        let all_weights = config.importance_weights();
        if all_weights.len() != config.num_attributes
            || relevant.iter().any(|&m| !(all_weights[m] > 0.0 && all_weights[m].is_finite()))
        {
            return Err(Error::config("scheduler.weights", "need a positive weight for every required attribute"));
        }
        let weights: Vec<f64> = relevant.iter().map(|&m| all_weights[m]).collect();
        Ok(match kind {
            SchedulerKind::Policy | SchedulerKind::TabularQ => {
                let space = StateSpace::new(config)?;
                let policy = policy.ok_or_else(|| Error::Contract(format!("scheduler `{kind}` needs a policy")))?;
                policy.validate(space.len(), space.num_actions())?;
                Scheduler::Table { policy, space }
            }
            SchedulerKind::Wrr => Scheduler::Wrr { current: vec![0.0; relevant.len()], relevant, weights },
            SchedulerKind::Lwgf => Scheduler::Lwgf { relevant, weights },
            SchedulerKind::Uniform => Scheduler::Uniform { relevant },
            SchedulerKind::Markovian => {
                let rho = config.scheduler.rho;
                let target = config.cost_flex;
                if !(0.0..1.0).contains(&rho) {
                    return Err(Error::config("scheduler.rho", "must lie in [0, 1)"));
                }
                let (stay, enter) = markov_chain(rho, target);
                Scheduler::Markovian { relevant, stay, enter, querying: false, cursor: 0 }
            }
        })
    }

    /// Attributes (0-based) to query in the slot following `state`.
    pub fn decide(&mut self, sim: &Simulator, state: &EnvState, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        let limit = sim.config().query_limit;
        Ok(match self {
            Scheduler::Table { policy, space } => {
                let s = sim.state_index(space, state);
                if s >= space.len() {
                    return Err(Error::Contract(format!("state {s} out of range")));
                }
                let a = sample_action(policy, s, rng);
                space.action_attribute(a).into_iter().collect()
            }
            Scheduler::Wrr { relevant, weights, current } => {
                let total: f64 = weights.iter().sum();
                for (c, w) in current.iter_mut().zip(weights.iter()) {
                    *c += w;
                }
                let k = limit.min(relevant.len());
                let mut order: Vec<usize> = (0..relevant.len()).collect();
                order.sort_by(|&a, &b| current[b].total_cmp(&current[a]).then(a.cmp(&b)));
                order.truncate(k);
                for &i in &order {
                    current[i] -= total / k as f64;
                }
                order.into_iter().map(|i| relevant[i]).collect()
            }
            Scheduler::Lwgf { relevant, weights } => {
                let cfg = sim.config();
                let score = |i: usize| {
                    let m = relevant[i];
                    weights[i] * cfg.composite.combine(state.aoi[m], cfg.usefulness.level(state.level[m]))
                };
                let mut order: Vec<usize> = (0..relevant.len()).collect();
                order.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
                order.truncate(limit);
                order.into_iter().map(|i| relevant[i]).collect()
            }
            Scheduler::Uniform { relevant } => {
                let k = limit.min(relevant.len());
                sample(rng, relevant.len(), k).into_iter().map(|i| relevant[i]).collect()
            }
            Scheduler::Markovian { relevant, stay, enter, querying, cursor } => {
                let p = if *querying { *stay } else { *enter };
                *querying = rng.random::<f64>() < p;
                if !*querying {
                    return Ok(Vec::new());
                }
                let k = limit.min(relevant.len());
                let picked = (0..k).map(|i| relevant[(*cursor + i) % relevant.len()]).collect();
                *cursor = (*cursor + k) % relevant.len();
                picked
            }
        })
    }
}

/// `(p(query | query), p(query | idle))` for persistence `rho` and target
/// long-run query rate `target`.
pub fn markov_chain(rho: f64, target: f64) -> (f64, f64) {
    (rho + (1.0 - rho) * target, (1.0 - rho) * target)
}

/// Long-run query rate `b / (1 - a + b)` of the chain.
pub fn markov_stationary_rate(stay: f64, enter: f64) -> f64 {
    enter / (1.0 - stay + enter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn run(kind: SchedulerKind, cfg: &SystemConfig, slots: usize) -> Vec<Vec<usize>> {
        let sim = Simulator::new(cfg).unwrap();
        let mut sched = Scheduler::new(kind, cfg, None).unwrap();
        let mut state = sim.reset(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..slots)
            .map(|_| {
                let a = sched.decide(&sim, &state, &mut rng).unwrap();
                sim.step(&mut state, &a).unwrap();
                a
            })
            .collect()
    }

    #[test]
    fn parse_kinds() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("round_robin".parse::<SchedulerKind>().is_err());
    }

    #[test]
    fn lwgf_example() {
        let mut cfg = SystemConfig::default();
        cfg.scheduler.weights = Some(vec![1.0, 1.0]);
        let sim = Simulator::new(&cfg).unwrap();
        let mut state = sim.reset(1);
        // (0.75 / 2, 0.5 / 1) = (0.375, 0.5)
        state.aoi = vec![2, 1];
        state.level = vec![3, 2];
        let mut sched = Scheduler::new(SchedulerKind::Lwgf, &cfg, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sched.decide(&sim, &state, &mut rng).unwrap(), vec![0]);
    }

    #[test]
    fn lwgf_equal_usefulness_picks_stalest() {
        let mut cfg = SystemConfig::default();
        cfg.scheduler.weights = Some(vec![1.0, 1.0]);
        let sim = Simulator::new(&cfg).unwrap();
        let mut sched = Scheduler::new(SchedulerKind::Lwgf, &cfg, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = sim.reset(1);
        for aoi in [[1, 3], [4, 2], [2, 2]] {
            state.aoi = aoi.to_vec();
            state.level = vec![2, 2];
            let pick = sched.decide(&sim, &state, &mut rng).unwrap()[0];
            assert_eq!(state.aoi[pick], *aoi.iter().max().unwrap());
        }
    }

    #[test]
    fn markovian_example() {
        let (stay, enter) = markov_chain(0.5, 0.75);
        assert_abs_diff_eq!(stay, 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(enter, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(markov_stationary_rate(stay, enter), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn markovian_long_run_rate() {
        let cfg = SystemConfig::default();
        let slots = 100_000;
        let queries = run(SchedulerKind::Markovian, &cfg, slots).iter().filter(|a| !a.is_empty()).count();
        assert!((queries as f64 / slots as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn wrr_alternates_with_equal_weights() {
        let mut cfg = SystemConfig::default();
        cfg.scheduler.weights = Some(vec![2.0, 2.0]);
        let picks = run(SchedulerKind::Wrr, &cfg, 8);
        assert_eq!(picks, vec![vec![0], vec![1], vec![0], vec![1], vec![0], vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn uniform_queries_every_slot() {
        let picks = run(SchedulerKind::Uniform, &SystemConfig::default(), 1000);
        assert!(picks.iter().all(|a| a.len() == 1));
        let first = picks.iter().filter(|a| a[0] == 0).count();
        assert!((400..600).contains(&first));
    }

    #[test]
    fn table_kinds_need_a_policy() {
        assert!(matches!(
            Scheduler::new(SchedulerKind::Policy, &SystemConfig::default(), None),
            Err(Error::Contract(_))
        ));
        let bad = Policy::deterministic(vec![5; 256]);
        assert!(Scheduler::new(SchedulerKind::Policy, &SystemConfig::default(), Some(bad)).is_err());
    }

    #[test]
    fn top_l_for_larger_limits() {
        let mut cfg = SystemConfig::from_toml_str("[system]\nM = 3\nquery_limit = 2\n").unwrap();
        cfg.scheduler.weights = Some(vec![1.0, 1.0, 1.0]);
        for kind in [SchedulerKind::Wrr, SchedulerKind::Lwgf, SchedulerKind::Uniform, SchedulerKind::Markovian] {
            for a in run(kind, &cfg, 200) {
                assert!(a.len() <= 2);
                if kind != SchedulerKind::Markovian {
                    assert_eq!(a.len(), 2);
                }
                assert!(a.len() < 2 || a[0] != a[1]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn wrr_tracks_weight_proportions(w1 in 1u32..6, w2 in 1u32..6, slots in 10usize..400) {
            let mut cfg = SystemConfig::default();
            cfg.scheduler.weights = Some(vec![w1 as f64, w2 as f64]);
            let picks = run(SchedulerKind::Wrr, &cfg, slots);
            let first = picks.iter().filter(|a| a[0] == 0).count() as f64;
            let expected = slots as f64 * w1 as f64 / (w1 + w2) as f64;
            prop_assert!((first - expected).abs() <= 2.0, "{first} vs {expected}");
        }

        #[test]
        fn every_scheduler_respects_the_limit(limit in 1usize..=2, seed in 0u64..50) {
            let mut cfg = SystemConfig::from_toml_str("[system]\nquery_limit = 2\n").unwrap();
            cfg.query_limit = limit;
            cfg.seed = seed;
            for kind in [SchedulerKind::Wrr, SchedulerKind::Lwgf, SchedulerKind::Uniform, SchedulerKind::Markovian] {
                prop_assert!(run(kind, &cfg, 100).iter().all(|a| a.len() <= limit));
            }
        }
    }
}
