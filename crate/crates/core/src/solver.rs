//! Model-based policy computation.
//!
//! Value iteration with span-seminorm stopping solves the Lagrangian problem
//! for a fixed multiplier μ; a bisection on μ then finds the smallest
//! multiplier whose greedy policy respects the discounted cost budget, and
//! mixes the two bracketing policies when the feasible one undershoots.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::TransitionTable;
use crate::config::{max_budget, EtaMode, SystemConfig};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};

/// Iteration cap shared by value iteration and policy evaluation.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Largest multiplier tried while expanding the initial bracket.
pub const MU_CAP: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Deterministic { table: Vec<usize> },
    /// Plays `minus` with probability `eta`, `plus` otherwise, per slot.
    Mixture { minus: Vec<usize>, plus: Vec<usize>, eta: f64 },
}

impl Policy {
    pub fn deterministic(table: Vec<usize>) -> Self {
        Policy::Deterministic { table }
    }

    pub fn num_states(&self) -> usize {
        match self {
            Policy::Deterministic { table } => table.len(),
            Policy::Mixture { plus, .. } => plus.len(),
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            Policy::Deterministic { .. } => None,
            Policy::Mixture { eta, .. } => Some(*eta),
        }
    }

    /// The table followed when the mixture picks its feasible component.
    pub fn primary(&self) -> &[usize] {
        match self {
            Policy::Deterministic { table } => table,
            Policy::Mixture { plus, .. } => plus,
        }
    }

    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        let check = |t: &[usize]| -> Result<()> {
            if t.len() != num_states {
                return Err(Error::PolicyFormat(format!("{} entries for {num_states} states", t.len())));
            }
            if let Some(a) = t.iter().find(|&&a| a >= num_actions) {
                return Err(Error::PolicyFormat(format!("action {a} out of range")));
            }
            Ok(())
        };
        match self {
            Policy::Deterministic { table } => check(table),
            Policy::Mixture { minus, plus, eta } => {
                if !(0.0..=1.0).contains(eta) {
                    return Err(Error::PolicyFormat(format!("eta {eta} outside [0, 1]")));
                }
                check(minus)?;
                check(plus)
            }
        }
    }
}

/// Draws the action for `state`; mixtures flip a fresh η-coin each call.
pub fn sample_action<R: Rng + ?Sized>(policy: &Policy, state: usize, rng: &mut R) -> usize {
    match policy {
        Policy::Deterministic { table } => table[state],
        Policy::Mixture { minus, plus, eta } => {
            if rng.random::<f64>() < *eta {
                minus[state]
            } else {
                plus[state]
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    /// Final iterate `V^(i)`.
    pub values: Vec<f64>,
    /// Greedy policy of the last sweep.
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// `sp(V^(i) - V^(i-1))` after every sweep.
    pub spans: Vec<f64>,
}

fn span(new: &[f64], old: &[f64]) -> f64 {
    let (lo, hi) = new
        .iter()
        .zip(old)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    hi - lo
}

/// `Σ w(p) (r_μ + γ V(s'))` for one state-action pair.
pub fn q_value(table: &TransitionTable, values: &[f64], state: usize, action: usize, mu: f64) -> f64 {
    let gamma = table.discount();
    table
        .weighted_row(state, action)
        .map(|(t, w)| w * (table.reward(t, action, mu) + gamma * values[t]))
        .sum()
}

fn greedy(table: &TransitionTable, values: &[f64], state: usize, mu: f64) -> (f64, usize) {
    let mut best = (q_value(table, values, state, 0, mu), 0);
    for a in 1..table.num_actions() {
        let q = q_value(table, values, state, a, mu);
        if q > best.0 {
            best = (q, a);
        }
    }
    best
}

/// Greedy policy with respect to `values` (lowest action index on ties).
pub fn greedy_policy(table: &TransitionTable, values: &[f64], mu: f64, exec: Execution) -> Vec<usize> {
    map_range(exec, table.num_states(), |s| greedy(table, values, s, mu).1)
}

/// Value iteration for the Lagrangian reward `r_μ`, from `V^(0) = 0` until
/// the span of successive differences drops below `span_tolerance`.
pub fn value_iteration(table: &TransitionTable, mu: f64, config: &SystemConfig, exec: Execution) -> Result<ValueIteration> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("multiplier {mu} must be non-negative")));
    }
    let n = table.num_states();
    let mut values = vec![0.0; n];
    let mut spans = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let sweep = map_range(exec, n, |s| greedy(table, &values, s, mu));
        let next: Vec<f64> = sweep.iter().map(|&(v, _)| v).collect();
        let sp = span(&next, &values);
        spans.push(sp);
        values = next;
        if sp < config.span_tolerance {
            return Ok(ValueIteration {
                values,
                policy: sweep.into_iter().map(|(_, a)| a).collect(),
                iterations: iteration,
                spans,
            });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, last_span: spans.last().copied().unwrap_or(f64::NAN) })
}

/// Fixed point of `V(s) = Σ w(p(s'|s,π(s))) (reward(s, π(s), s') + γ V(s'))`,
/// iterated from zero until successive sweeps differ by less than
/// `tolerance` in max norm.
pub fn evaluate<F>(table: &TransitionTable, actions: &[usize], reward: F, tolerance: f64, exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(usize, usize, usize) -> f64 + Sync + Send,
{
    let gamma = table.discount();
    let n = table.num_states();
    let mut values = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let next = map_range(exec, n, |s| {
            let a = actions[s];
            table.weighted_row(s, a).map(|(t, w)| w * (reward(s, a, t) + gamma * values[t])).sum::<f64>()
        });
        let diff = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if diff < tolerance {
            return Ok(values);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, last_span: f64::NAN })
}

fn mix(policy: &Policy, mut eval: impl FnMut(&[usize]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    match policy {
        Policy::Deterministic { table } => eval(table),
        Policy::Mixture { minus, plus, eta } => {
            let m = eval(minus)?;
            let p = eval(plus)?;
            Ok(m.iter().zip(&p).map(|(a, b)| eta * a + (1.0 - eta) * b).collect())
        }
    }
}

/// Expected discounted prospect cost of `policy` in every state.
pub fn cost_values(policy: &Policy, table: &TransitionTable, config: &SystemConfig, exec: Execution) -> Result<Vec<f64>> {
    mix(policy, |t| evaluate(table, t, |_, a, _| table.action_cost(a), config.eval_tolerance, exec))
}

/// Expected discounted prospect GoE of `policy` in every state.
pub fn objective_values(policy: &Policy, table: &TransitionTable, config: &SystemConfig, exec: Execution) -> Result<Vec<f64>> {
    mix(policy, |t| evaluate(table, t, |_, _, next| table.goe_value(next), config.eval_tolerance, exec))
}

/// Discounted prospect cost from the all-initial state.
pub fn evaluate_discounted_cost(policy: &Policy, table: &TransitionTable, config: &SystemConfig) -> Result<f64> {
    Ok(cost_values(policy, table, config, Execution::default())?[table.space().initial_index()])
}

/// Discounted prospect GoE from the all-initial state.
pub fn evaluate_objective(policy: &Policy, table: &TransitionTable, config: &SystemConfig) -> Result<f64> {
    Ok(objective_values(policy, table, config, Execution::default())?[table.space().initial_index()])
}

/// `clamp((C_max - C⁺) / (C⁻ - C⁺), 0, 1)`: the weight on the infeasible
/// component that spends the budget exactly.
pub fn mixing_weight(cost_minus: f64, cost_plus: f64, budget: f64) -> f64 {
    if cost_minus <= cost_plus {
        return 0.0;
    }
    ((budget - cost_plus) / (cost_minus - cost_plus)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub mu_star: f64,
    pub policy: Policy,
    /// Lagrangian value of the returned policy at `mu_star`, per state.
    pub value_function: Vec<f64>,
    /// Discounted prospect cost from the initial state.
    pub cost_value: f64,
    /// Discounted prospect GoE from the initial state.
    pub objective: f64,
    pub budget: f64,
    pub feasible: bool,
    /// Multipliers in the order they were solved.
    pub mu_history: Vec<f64>,
    /// Value-iteration sweeps per solve, aligned with `mu_history`.
    pub inner_iterations: Vec<usize>,
    /// Final span per solve, aligned with `mu_history`.
    pub span_history: Vec<f64>,
    /// Bisection midpoints evaluated.
    pub outer_steps: usize,
    /// Doublings of the upper multiplier before bisecting.
    pub bracket_expansions: usize,
    /// `max_s |C(s) - C(s_0)|` for the returned policy.
    pub cost_deviation: f64,
    /// `max_s |J(s) - J(s_0)|` for the returned policy.
    pub objective_deviation: f64,
    pub config_hash: String,
}

struct Probe {
    policy: Vec<usize>,
    cost: f64,
}

/// Lagrangian bisection for the budget-constrained problem.
pub fn bisection_solve(table: &TransitionTable, config: &SystemConfig, exec: Execution) -> Result<SolveReport> {
    let budget = max_budget(config);
    let s0 = table.space().initial_index();
    let mut mu_history = Vec::new();
    let mut inner_iterations = Vec::new();
    let mut span_history = Vec::new();
    let mut probe = |mu: f64| -> Result<Probe> {
        let vi = value_iteration(table, mu, config, exec)?;
        mu_history.push(mu);
        inner_iterations.push(vi.iterations);
        span_history.push(vi.spans.last().copied().unwrap_or(0.0));
        let cost = evaluate(table, &vi.policy, |_, a, _| table.action_cost(a), config.eval_tolerance, exec)?[s0];
        Ok(Probe { policy: vi.policy, cost })
    };

    let first = probe(0.0)?;
    let mut mu_star = 0.0;
    let mut outer_steps = 0;
    let mut bracket_expansions = 0;
    let policy = if first.cost <= budget {
        Policy::deterministic(first.policy)
    } else {
        let mut minus = first;
        let mut mu_minus = 0.0;
        let mut mu_plus = config.mu_hi_init;
        let mut plus = loop {
            let p = probe(mu_plus)?;
            if p.cost <= budget {
                break p;
            }
            minus = p;
            mu_minus = mu_plus;
            mu_plus *= 2.0;
            bracket_expansions += 1;
            if mu_plus > MU_CAP {
                return Err(Error::Infeasible { mu_cap: MU_CAP });
            }
        };
        mu_star = mu_plus;
        while mu_plus - mu_minus >= config.mu_tolerance {
            let mid = 0.5 * (mu_plus + mu_minus);
            let p = probe(mid)?;
            outer_steps += 1;
            mu_star = mid;
            if p.cost <= budget {
                mu_plus = mid;
                plus = p;
            } else {
                mu_minus = mid;
                minus = p;
            }
        }
        if plus.cost < budget && minus.policy != plus.policy && minus.cost > plus.cost {
            let eta = match config.eta_mode {
                EtaMode::Computed => mixing_weight(minus.cost, plus.cost, budget),
                EtaMode::Fixed => config.mixing,
            };
            Policy::Mixture { minus: minus.policy, plus: plus.policy, eta }
        } else {
            Policy::deterministic(plus.policy)
        }
    };

    let costs = cost_values(&policy, table, config, exec)?;
    let objectives = objective_values(&policy, table, config, exec)?;
    let value_function: Vec<f64> = objectives.iter().zip(&costs).map(|(j, c)| j - mu_star * c).collect();
    let deviation = |v: &[f64]| v.iter().map(|x| (x - v[s0]).abs()).fold(0.0, f64::max);
    Ok(SolveReport {
        mu_star,
        cost_value: costs[s0],
        objective: objectives[s0],
        budget,
        feasible: costs[s0] <= budget + FEASIBILITY_SLACK,
        cost_deviation: deviation(&costs),
        objective_deviation: deviation(&objectives),
        value_function,
        policy,
        mu_history,
        inner_iterations,
        span_history,
        outer_steps,
        bracket_expansions,
        config_hash: config.hash(),
    })
}

/// Absolute slack allowed when declaring a solved policy feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

// ----------------------------------------------------------------------------
// Policy CSV

/// Policy file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub policy: Policy,
    pub mu_star: f64,
    pub config_hash: String,
}

/// Writes `# key=value` header lines followed by
/// `state_index,action[,action_minus]` rows. For mixtures `action` is the
/// feasible component and `action_minus` is played with probability η.
pub fn write_policy_csv<W: Write>(file: &PolicyFile, mut writer: W) -> Result<()> {
    writeln!(writer, "# mu_star={}", file.mu_star)?;
    writeln!(writer, "# eta={}", file.policy.eta().unwrap_or(0.0))?;
    writeln!(writer, "# config_hash={}", file.config_hash)?;
    match &file.policy {
        Policy::Deterministic { table } => {
            writeln!(writer, "state_index,action")?;
            for (s, a) in table.iter().enumerate() {
                writeln!(writer, "{s},{a}")?;
            }
        }
        Policy::Mixture { minus, plus, .. } => {
            writeln!(writer, "state_index,action,action_minus")?;
            for (s, (a, b)) in plus.iter().zip(minus).enumerate() {
                writeln!(writer, "{s},{a},{b}")?;
            }
        }
    }
    Ok(())
}

/// Parses a file written by [`write_policy_csv`].
pub fn read_policy_csv<R: Read>(reader: R) -> Result<PolicyFile> {
    let bad = |msg: String| Error::PolicyFormat(msg);
    let mut mu_star = None;
    let mut eta = None;
    let mut config_hash = None;
    let mut header: Option<Vec<String>> = None;
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta.trim().split_once('=').ok_or_else(|| bad(format!("line {}: bad header", lineno + 1)))?;
            let value = value.trim();
            match key.trim() {
                "mu_star" => mu_star = Some(value.parse::<f64>().map_err(|_| bad(format!("bad mu_star `{value}`")))?),
                "eta" => eta = Some(value.parse::<f64>().map_err(|_| bad(format!("bad eta `{value}`")))?),
                "config_hash" => config_hash = Some(value.to_string()),
                _ => {}
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(cols) = &header else {
            if cells.first() != Some(&"state_index") || cells.get(1) != Some(&"action") {
                return Err(bad(format!("unexpected column header `{line}`")));
            }
            header = Some(cells.iter().map(|s| s.to_string()).collect());
            continue;
        };
        if cells.len() != cols.len() {
            return Err(bad(format!("line {}: expected {} columns", lineno + 1, cols.len())));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("line {}: `{s}` is not an index", lineno + 1)));
        let state = parse(cells[0])?;
        if state != plus.len() {
            return Err(bad(format!("line {}: expected state {}", lineno + 1, plus.len())));
        }
        plus.push(parse(cells[1])?);
        if cols.len() > 2 {
            minus.push(parse(cells[2])?);
        }
    }
    let cols = header.ok_or_else(|| bad("missing column header".into()))?;
    let policy = if cols.len() > 2 {
        Policy::Mixture { minus, plus, eta: eta.ok_or_else(|| bad("mixture without eta".into()))? }
    } else {
        Policy::deterministic(plus)
    };
    if let Some(e) = policy.eta() {
        if !(0.0..=1.0).contains(&e) {
            return Err(bad(format!("eta {e} outside [0, 1]")));
        }
    }
    Ok(PolicyFile {
        policy,
        mu_star: mu_star.ok_or_else(|| bad("missing mu_star".into()))?,
        config_hash: config_hash.ok_or_else(|| bad("missing config_hash".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> SystemConfig {
        SystemConfig::from_toml_str("[system]\nM = 1\nK = 1\nmax_aoi = 2\nlevels = 2\n[goals]\nrequired_sets = [[1]]\n")
            .unwrap()
    }

    /// Solves `(I - γ P_π) V = r_π` by Gaussian elimination.
    fn exact_values(table: &TransitionTable, actions: &[usize], reward: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let n = table.num_states();
        let g = table.discount();
        let mut a = vec![vec![0.0; n + 1]; n];
        for s in 0..n {
            a[s][s] += 1.0;
            for (t, p) in table.row(s, actions[s]) {
                a[s][t] -= g * p;
                a[s][n] += p * reward(actions[s], t);
            }
        }
        for c in 0..n {
            let pivot = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, pivot);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..n).map(|s| a[s][n] / a[s][s]).collect()
    }

    fn all_policies(n: usize, actions: usize) -> Vec<Vec<usize>> {
        (0..actions.pow(n as u32))
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let a = code % actions;
                        code /= actions;
                        a
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn myopic_limit() {
        let mut cfg = SystemConfig::default();
        cfg.discount = 0.0;
        let table = TransitionTable::build(&cfg).unwrap();
        let vi = value_iteration(&table, 1.0, &cfg, Execution::Sequential).unwrap();
        // The second sweep only confirms the first.
        assert_eq!(vi.iterations, 2);
        assert_eq!(vi.spans[1], 0.0);
        for s in 0..table.num_states() {
            let immediate = |a: usize| -> f64 { table.row(s, a).map(|(t, p)| p * table.reward(t, a, 1.0)).sum() };
            let best = (0..3).map(immediate).fold(f64::NEG_INFINITY, f64::max);
            assert_abs_diff_eq!(vi.values[s], best, epsilon = 1e-12);
            assert_eq!(immediate(vi.policy[s]), best);
        }
    }

    #[test]
    fn tiny_instance_matches_exhaustive_search() {
        let cfg = tiny();
        let table = TransitionTable::build(&cfg).unwrap();
        assert_eq!((table.num_states(), table.num_actions()), (4, 2));
        for mu in [0.0, 0.3, 1.0, 5.0] {
            let vi = value_iteration(&table, mu, &cfg, Execution::Sequential).unwrap();
            let best: Vec<f64> = (0..4)
                .map(|s| {
                    all_policies(4, 2)
                        .iter()
                        .map(|p| exact_values(&table, p, |a, t| table.reward(t, a, mu))[s])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let greedy = exact_values(&table, &vi.policy, |a, t| table.reward(t, a, mu));
            for s in 0..4 {
                assert_abs_diff_eq!(greedy[s], best[s], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn greedy_consistency() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let vi = value_iteration(&table, 0.7, &cfg, Execution::Parallel).unwrap();
        // The last iterate is a fixed point up to an additive constant.
        let backed: Vec<f64> = (0..table.num_states()).map(|s| greedy(&table, &vi.values, s, 0.7).0).collect();
        assert!(span(&backed, &vi.values) < cfg.span_tolerance);
        // And its greedy policy's exact value is a true fixed point.
        let exact = evaluate(&table, &vi.policy, |_, a, t| table.reward(t, a, 0.7), 1e-12, Execution::Parallel).unwrap();
        for s in 0..table.num_states() {
            let best = (0..3).map(|a| q_value(&table, &exact, s, a, 0.7)).fold(f64::NEG_INFINITY, f64::max);
            assert_abs_diff_eq!(exact[s], best, epsilon = cfg.span_tolerance);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let a = value_iteration(&table, 1.5, &cfg, Execution::Sequential).unwrap();
        let b = value_iteration(&table, 1.5, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn cost_examples() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let n = table.num_states();
        let never = Policy::deterministic(vec![0; n]);
        assert_eq!(evaluate_discounted_cost(&never, &table, &cfg).unwrap(), 0.0);
        let always = Policy::deterministic(vec![1; n]);
        let c = evaluate_discounted_cost(&always, &table, &cfg).unwrap();
        assert_abs_diff_eq!(c, 0.5f64.sqrt() / 0.1, epsilon = 1e-7);
        assert_abs_diff_eq!(c, 7.0711, epsilon = 1e-4);
        let mixed = Policy::Mixture { minus: vec![1; n], plus: vec![0; n], eta: 1.0 };
        assert_eq!(evaluate_discounted_cost(&mixed, &table, &cfg).unwrap(), c);
    }

    #[test]
    fn mixing_weight_example() {
        let budget = max_budget(&SystemConfig::default());
        assert_abs_diff_eq!(budget, 5.3033, epsilon = 1e-4);
        assert_abs_diff_eq!(mixing_weight(6.0, 4.0, budget), 0.6517, epsilon = 1e-4);
        assert_eq!(mixing_weight(6.0, 4.0, 10.0), 1.0);
        assert_eq!(mixing_weight(6.0, 4.0, 3.0), 0.0);
    }

    #[test]
    fn defaults_solve_within_step_bound() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let report = bisection_solve(&table, &cfg, Execution::Parallel).unwrap();
        assert!(report.outer_steps <= 24, "{} steps", report.outer_steps);
        assert!(report.feasible);
        assert!(report.cost_value <= report.budget + 1e-6);
        assert!(report.mu_star > 0.0);
        assert_eq!(report.mu_history.len(), report.inner_iterations.len());
        report.policy.validate(table.num_states(), table.num_actions()).unwrap();
    }

    #[test]
    fn generous_budget_exits_early() {
        let mut cfg = SystemConfig::default();
        cfg.cost_flex = 1.0;
        let table = TransitionTable::build(&cfg).unwrap();
        let report = bisection_solve(&table, &cfg, Execution::Parallel).unwrap();
        assert_eq!(report.mu_star, 0.0);
        assert_eq!(report.outer_steps, 0);
        assert_eq!(report.mu_history, vec![0.0]);
    }

    #[test]
    fn fixed_eta_is_used_verbatim() {
        let mut cfg = SystemConfig::default();
        cfg.eta_mode = EtaMode::Fixed;
        let table = TransitionTable::build(&cfg).unwrap();
        let report = bisection_solve(&table, &cfg, Execution::Parallel).unwrap();
        if let Some(eta) = report.policy.eta() {
            assert_eq!(eta, 0.5);
        }
    }

    #[test]
    fn budget_is_monotone_in_mu() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let costs: Vec<f64> = (0..=16)
            .map(|k| {
                let vi = value_iteration(&table, k as f64 * 0.5, &cfg, Execution::Parallel).unwrap();
                evaluate_discounted_cost(&Policy::deterministic(vi.policy), &table, &cfg).unwrap()
            })
            .collect();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{costs:?}");
        }
    }

    #[test]
    fn bracket_expands_from_small_start() {
        let mut cfg = SystemConfig::default();
        cfg.mu_hi_init = 1e-3;
        let table = TransitionTable::build(&cfg).unwrap();
        let report = bisection_solve(&table, &cfg, Execution::Parallel).unwrap();
        assert!(report.bracket_expansions > 0);
        assert!(report.feasible);
    }

    #[test]
    fn negligible_query_price_is_infeasible() {
        // Even μ = 2^20 cannot make a 1e-7 prospect cost outweigh GoE gains.
        let mut cfg = SystemConfig::default();
        cfg.cost_per_query = 1e-14;
        cfg.cost_flex = 0.1;
        let table = TransitionTable::build(&cfg).unwrap();
        assert!(matches!(bisection_solve(&table, &cfg, Execution::Parallel), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn sampling() {
        let det = Policy::deterministic(vec![2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_action(&det, 0, &mut rng) == 2));
        let never_minus = Policy::Mixture { minus: vec![1], plus: vec![0], eta: 0.0 };
        assert!((0..1000).all(|_| sample_action(&never_minus, 0, &mut rng) == 0));
        let half = Policy::Mixture { minus: vec![1], plus: vec![0], eta: 0.5 };
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_action(&half, 0, &mut rng) == 1).count();
        let freq = hits as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn policy_csv_round_trip_and_errors() {
        for policy in [
            Policy::deterministic(vec![0, 2, 1]),
            Policy::Mixture { minus: vec![1, 1, 2], plus: vec![0, 2, 0], eta: 0.25 },
        ] {
            let file = PolicyFile { policy, mu_star: 1.375, config_hash: "abcd".into() };
            let mut buf = Vec::new();
            write_policy_csv(&file, &mut buf).unwrap();
            assert_eq!(read_policy_csv(&buf[..]).unwrap(), file);
        }
        let bad = [
            "state_index,action\n0,1\n",
            "# mu_star=1\n# config_hash=x\nstate,action\n0,1\n",
            "# mu_star=1\n# config_hash=x\nstate_index,action\n1,1\n",
            "# mu_star=1\n# config_hash=x\nstate_index,action\n0,a\n",
            "# mu_star=1\n# config_hash=x\nstate_index,action,action_minus\n0,1,1\n",
            "# mu_star=1\n# eta=2\n# config_hash=x\nstate_index,action,action_minus\n0,1,1\n",
        ];
        for text in bad {
            assert!(matches!(read_policy_csv(text.as_bytes()), Err(Error::PolicyFormat(_))), "{text}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solved_policies_respect_budget(flex in 0.05f64..1.0, fc in 0.1f64..2.0) {
            let mut cfg = tiny();
            cfg.cost_flex = flex;
            cfg.cost_per_query = fc;
            let table = TransitionTable::build(&cfg).unwrap();
            let report = bisection_solve(&table, &cfg, Execution::Sequential).unwrap();
            prop_assert!(report.feasible);
            prop_assert!(report.cost_value <= report.budget + 1e-6);
        }
    }
}
