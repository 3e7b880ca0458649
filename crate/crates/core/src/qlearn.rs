//! Tabular Q-learning against the simulator, as a model-free counterpart of
//! the exact solver.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::StateSpace;
use crate::config::{max_budget, EtaMode, SystemConfig};
use crate::env::{slot_reward, Simulator};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::solver::{mixing_weight, sample_action, Policy, MU_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; num_states * num_actions], visits: vec![0; num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.num_actions + a]
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Highest-valued action of `s`, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        (1..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.num_states).map(|s| self.greedy_action(s)).collect()
    }

    /// Writes `state,action,value,visits` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state", "action", "value", "visits"])?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                w.write_record([s.to_string(), a.to_string(), self.value(s, a).to_string(), self.visits(s, a).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Step size `lr / (1 + visits)^lr_decay` for each state-action pair.
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Exploration decays linearly from `epsilon_start` to `epsilon_end`
    /// over the whole run.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub seed: u64,
    /// Start every episode from a uniformly drawn CMDP state and action
    /// instead of the all-initial state, so states only reachable at
    /// start-up get visited.
    pub exploring_starts: bool,
    /// Rollouts used to estimate a policy's discounted cost.
    pub cost_rollouts: usize,
    /// Stop the multiplier search once the bracket is narrower than this.
    pub mu_tolerance: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            episodes: 20,
            steps_per_episode: 10_000,
            learning_rate: 1.0,
            lr_decay: 0.8,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            seed: 0,
            exploring_starts: true,
            cost_rollouts: 400,
            mu_tolerance: 1e-2,
        }
    }
}

/// Trains a Q-table for the Lagrangian reward at multiplier `mu`.
pub fn train_tabular_q(config: &SystemConfig, mu: f64, settings: &TrainSettings) -> Result<(QTable, Vec<usize>)> {
    if config.query_limit != 1 {
        return Err(Error::Contract("tabular Q-learning needs query_limit = 1".into()));
    }
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("multiplier {mu} must be non-negative")));
    }
    let sim = Simulator::new(config)?;
    let space = StateSpace::new(config)?;
    let mut q = QTable::zeros(space.len(), space.num_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x9e37_79b9_7f4a_7c15);
    let total = (settings.episodes * settings.steps_per_episode).max(1);
    let mut step = 0usize;
    for episode in 0..settings.episodes {
        let mut env = sim.reset(settings.seed.wrapping_add(episode as u64));
        if settings.exploring_starts {
            sim.set_tuple(&space, &mut env, rng.random_range(0..space.len()));
        }
        let mut s = sim.state_index(&space, &env);
        for k in 0..settings.steps_per_episode {
            let frac = step as f64 / total as f64;
            let eps = settings.epsilon_start + (settings.epsilon_end - settings.epsilon_start) * frac;
            let explore = (k == 0 && settings.exploring_starts) || rng.random::<f64>() < eps;
            let a = if explore { rng.random_range(0..q.num_actions) } else { q.greedy_action(s) };
            let prev = env.clone();
            let action: Vec<usize> = space.action_attribute(a).into_iter().collect();
            sim.step(&mut env, &action)?;
            let r = slot_reward(&prev, &action, &env, mu, config);
            let next = sim.state_index(&space, &env);
            let idx = s * q.num_actions + a;
            let alpha = settings.learning_rate / (1.0 + q.visits[idx] as f64).powf(settings.lr_decay);
            let target = r + config.discount * q.max_value(next);
            q.values[idx] += alpha * (target - q.values[idx]);
            q.visits[idx] += 1;
            s = next;
            step += 1;
        }
    }
    let policy = q.greedy_policy();
    Ok((q, policy))
}

/// Monte-Carlo estimate of the discounted prospect cost of `policy` from the
/// initial state.
pub fn rollout_cost(config: &SystemConfig, policy: &Policy, rollouts: usize, seed: u64, exec: Execution) -> Result<f64> {
    let sim = Simulator::new(config)?;
    let space = StateSpace::new(config)?;
    // Truncate where the remaining discounted mass is negligible.
    let horizon = if config.discount == 0.0 { 1 } else { ((1e-10f64).ln() / config.discount.ln()).ceil() as usize };
    let costs = map_range(exec, rollouts, |k| -> Result<f64> {
        let seed = seed.wrapping_add(k as u64);
        let mut env = sim.reset(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
        for _ in 0..horizon {
            let a = sample_action(policy, sim.state_index(&space, &env), &mut rng);
            sim.step_action_index(&mut env, a)?;
        }
        Ok(env.discounted_cost)
    });
    let costs = costs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(costs.iter().sum::<f64>() / rollouts.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct QSolve {
    pub mu_star: f64,
    pub policy: Policy,
    /// Q-table behind the feasible component.
    pub table: QTable,
    pub cost_estimate: f64,
    pub outer_steps: usize,
}

/// Bisection on the multiplier with Q-learning as the inner solver and
/// rollout cost estimates as the feasibility test.
pub fn solve_tabular_q(config: &SystemConfig, settings: &TrainSettings, exec: Execution) -> Result<QSolve> {
    let budget = max_budget(config);
    let probe = |mu: f64| -> Result<(QTable, Vec<usize>, f64)> {
        let (q, p) = train_tabular_q(config, mu, settings)?;
        let c = rollout_cost(config, &Policy::deterministic(p.clone()), settings.cost_rollouts, settings.seed, exec)?;
        Ok((q, p, c))
    };
    let first = probe(0.0)?;
    if first.2 <= budget {
        return Ok(QSolve { mu_star: 0.0, policy: Policy::deterministic(first.1), table: first.0, cost_estimate: first.2, outer_steps: 0 });
    }
    let mut minus = first;
    let mut mu_minus = 0.0;
    let mut mu_plus = config.mu_hi_init;
    let mut plus = loop {
        let p = probe(mu_plus)?;
        if p.2 <= budget {
            break p;
        }
        minus = p;
        mu_minus = mu_plus;
        mu_plus *= 2.0;
        if mu_plus > MU_CAP {
            return Err(Error::Infeasible { mu_cap: MU_CAP });
        }
    };
    let mut mu_star = mu_plus;
    let mut outer_steps = 0;
    while mu_plus - mu_minus >= settings.mu_tolerance.max(config.mu_tolerance) {
        let mid = 0.5 * (mu_plus + mu_minus);
        let p = probe(mid)?;
        outer_steps += 1;
        mu_star = mid;
        if p.2 <= budget {
            mu_plus = mid;
            plus = p;
        } else {
            mu_minus = mid;
            minus = p;
        }
    }
    let (policy, cost_estimate) = if plus.2 < budget && minus.1 != plus.1 && minus.2 > plus.2 {
        let eta = match config.eta_mode {
            EtaMode::Computed => mixing_weight(minus.2, plus.2, budget),
            EtaMode::Fixed => config.mixing,
        };
        (Policy::Mixture { minus: minus.1, plus: plus.1.clone(), eta }, eta * minus.2 + (1.0 - eta) * plus.2)
    } else {
        (Policy::deterministic(plus.1.clone()), plus.2)
    };
    Ok(QSolve { mu_star, policy, table: plus.0, cost_estimate, outer_steps })
}
