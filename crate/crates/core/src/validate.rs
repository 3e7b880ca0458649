//! Consistency checks between the analytic kernel and the simulator.

use serde::Serialize;

use crate::cmdp::TransitionTable;
use crate::config::{select_agent, SystemConfig};
use crate::env::Simulator;
use crate::error::Result;
use crate::exec::{map_range, Execution};

/// Largest L1 distance accepted between an empirical and an analytic row.
pub const AGREEMENT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Serialize)]
pub struct RowCheck {
    pub state: usize,
    pub action: usize,
    pub samples: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelCheck {
    pub num_states: usize,
    pub num_actions: usize,
    /// `max |Σ p - 1|` over all rows.
    pub max_row_error: f64,
    /// Per query action, `max |success mass - (1 - p_e) p_o|` over states.
    pub success_mass_error: Vec<f64>,
    pub weakly_accessible: bool,
    pub witness: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub kernel: KernelCheck,
    pub rows: Vec<RowCheck>,
    pub max_l1: f64,
    pub passed: bool,
}

pub fn check_kernel(table: &TransitionTable, config: &SystemConfig) -> KernelCheck {
    let space = table.space();
    let mut max_row_error: f64 = 0.0;
    let mut success_mass_error = vec![0.0f64; table.num_actions() - 1];
    for s in 0..table.num_states() {
        let aged: Vec<u32> = space.decode(s).aoi.iter().map(|&d| (d + 1).min(space.max_aoi())).collect();
        for a in 0..table.num_actions() {
            let total: f64 = table.row(s, a).map(|(_, p)| p).sum();
            max_row_error = max_row_error.max((total - 1.0).abs());
            if a == 0 {
                continue;
            }
            let pos = a - 1;
            let m = space.relevant()[pos];
            let agent = &config.agents[select_agent(config, m)];
            let expected = agent.success_prob(m);
            // Success lands the queried attribute at Δ = 1; when Δ would
            // otherwise also be 1 (Δ_max = 1) the branches coincide.
            let mass: f64 = if aged[pos] == 1 {
                expected
            } else {
                table.row(s, a).filter(|&(t, _)| space.decode(t).aoi[pos] == 1).map(|(_, p)| p).sum()
            };
            success_mass_error[pos] = success_mass_error[pos].max((mass - expected).abs());
        }
    }
    let (weakly_accessible, witness) = table.check_weak_accessibility();
    KernelCheck {
        num_states: table.num_states(),
        num_actions: table.num_actions(),
        max_row_error,
        success_mass_error,
        weakly_accessible,
        witness,
    }
}

/// Places the simulator in every CMDP state, takes every action
/// `samples_per_row` times and compares successor frequencies with the
/// analytic row.
pub fn env_kernel_agreement(
    table: &TransitionTable,
    config: &SystemConfig,
    samples_per_row: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<RowCheck>> {
    let sim = Simulator::new(config)?;
    let space = table.space();
    let actions = table.num_actions();
    map_range(exec, table.num_states() * actions, |row| -> Result<RowCheck> {
        let (state, action) = (row / actions, row % actions);
        let mut env = sim.reset(seed.wrapping_add(row as u64));
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for _ in 0..samples_per_row {
            sim.set_tuple(space, &mut env, state);
            sim.advance_action_index(&mut env, action)?;
            let next = sim.state_index(space, &env);
            match counts.iter_mut().find(|(t, _)| *t == next) {
                Some(c) => c.1 += 1,
                None => counts.push((next, 1)),
            }
        }
        let n = samples_per_row as f64;
        let analytic: Vec<(usize, f64)> = table.row(state, action).collect();
        let mut l1: f64 = analytic
            .iter()
            .map(|&(t, p)| {
                let k = counts.iter().find(|c| c.0 == t).map_or(0, |c| c.1);
                (k as f64 / n - p).abs()
            })
            .sum();
        l1 += counts.iter().filter(|c| !analytic.iter().any(|a| a.0 == c.0)).map(|c| c.1 as f64 / n).sum::<f64>();
        Ok(RowCheck { state, action, samples: samples_per_row, l1 })
    })
    .into_iter()
    .collect()
}

/// Kernel checks plus simulator agreement on every row.
pub fn validate(config: &SystemConfig, samples_per_row: usize, exec: Execution) -> Result<ValidationReport> {
    let table = TransitionTable::build(config)?;
    let kernel = check_kernel(&table, config);
    let rows = env_kernel_agreement(&table, config, samples_per_row, config.seed, exec)?;
    let max_l1 = rows.iter().map(|r| r.l1).fold(0.0, f64::max);
    let passed = kernel.max_row_error <= 1e-9
        && kernel.success_mass_error.iter().all(|&e| e <= 1e-12)
        && max_l1 <= AGREEMENT_TOLERANCE;
    Ok(ValidationReport { kernel, rows, max_l1, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_kernel_is_well_formed() {
        let cfg = SystemConfig::default();
        let table = TransitionTable::build(&cfg).unwrap();
        let k = check_kernel(&table, &cfg);
        assert_eq!((k.num_states, k.num_actions), (256, 3));
        assert!(k.max_row_error < 1e-12);
        assert!(k.success_mass_error.iter().all(|&e| e < 1e-12));
        assert!(k.weakly_accessible);
    }

    #[test]
    fn simulator_agrees_with_kernel() {
        let cfg = SystemConfig::from_toml_str("[system]\nM = 1\nK = 1\nmax_aoi = 3\nlevels = 3\n[goals]\nrequired_sets = [[1]]\n")
            .unwrap();
        let report = validate(&cfg, 20_000, Execution::Parallel).unwrap();
        assert!(report.passed, "max L1 {}", report.max_l1);
        assert_eq!(report.rows.len(), 9 * 2);
    }

    #[test]
    fn disagreement_is_detected() {
        // Simulate one channel, compare with the kernel of another.
        let cfg = SystemConfig::default();
        let mut other = cfg.clone();
        for a in &mut other.agents {
            a.erase_prob = 0.5;
        }
        let table = TransitionTable::build(&other).unwrap();
        let rows = env_kernel_agreement(&table, &cfg, 5_000, 0, Execution::Parallel).unwrap();
        let worst = rows.iter().map(|r| r.l1).fold(0.0, f64::max);
        assert!(worst > 0.2);
        assert!(rows.iter().filter(|r| r.action == 0).all(|r| r.l1 == 0.0));
    }
}
