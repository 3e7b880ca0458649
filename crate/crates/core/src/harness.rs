//! Multi-seed runs, parameter sweeps and their on-disk outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::TransitionTable;
use crate::config::SystemConfig;
use crate::env::{write_trace_csv, Simulator, TraceRecord};
use crate::error::{Error, Result};
use crate::exec::{map_range, map_slice, Execution};
use crate::qlearn::{solve_tabular_q, TrainSettings};
use crate::schedulers::{Scheduler, SchedulerKind};
use crate::solver::{bisection_solve, Policy};

/// Per-seed aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Time average of the per-slot CPT total GoE over slots 1..T.
    pub long_term_cpt_goe: f64,
    pub min_cpt_goe: f64,
    pub queries: usize,
    /// `Σ γ^(t-1) v(GoE_t)`.
    pub discounted_objective: f64,
    /// `Σ γ^(t-1) v⁺(f_c(a_t))`.
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    /// Undiscounted statistics of the per-slot CPT total GoE over all slots
    /// of all seeds.
    pub mean_cpt_goe: f64,
    pub min_cpt_goe: f64,
    pub max_cpt_goe: f64,
    /// Undiscounted mean of the raw total GoE.
    pub mean_goe: f64,
    /// Seed means of the discounted sums.
    pub discounted_objective: f64,
    pub discounted_cost: f64,
    /// Undiscounted mean per-slot CPT cost.
    pub mean_slot_cost: f64,
    pub query_count: usize,
    /// Share of slots with at least one query, in percent.
    pub query_percentage: f64,
    /// Share of queries whose update arrived, in percent.
    pub delivered_percentage: f64,
    /// Share of queries whose observation was correct, in percent.
    pub correct_percentage: f64,
    /// Sorted long-term CPT GoE of every seed.
    pub cdf: Vec<f64>,
    pub per_seed: Vec<SeedSummary>,
    /// Multiplier of the solved or trained policy, when one was used.
    pub mu_star: Option<f64>,
}

/// Summary plus the traces it was computed from, ordered by seed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub traces: Vec<(u64, Vec<TraceRecord>)>,
}

/// Seeds used by a run of `count` seeds.
pub fn seed_list(config: &SystemConfig, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| config.seed.wrapping_add(k)).collect()
}

/// Scheduler randomness is kept apart from the simulator's stream so every
/// scheduler faces the same source and channel draws.
fn scheduler_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0xa076_1d64_78bd_642f)
}

/// Solves (policy) or trains (tabular_q) the table a scheduler needs.
pub fn prepare_policy(config: &SystemConfig, kind: SchedulerKind, exec: Execution) -> Result<Option<(Policy, f64)>> {
    match kind {
        SchedulerKind::Policy => {
            let table = TransitionTable::build(config)?;
            let report = bisection_solve(&table, config, exec)?;
            Ok(Some((report.policy, report.mu_star)))
        }
        SchedulerKind::TabularQ => {
            let settings = TrainSettings { seed: config.seed, ..TrainSettings::default() };
            let solved = solve_tabular_q(config, &settings, exec)?;
            Ok(Some((solved.policy, solved.mu_star)))
        }
        _ => Ok(None),
    }
}

/// Simulates one seed for `config.horizon` slots.
pub fn simulate_seed(sim: &Simulator, scheduler: &Scheduler, seed: u64) -> Result<Vec<TraceRecord>> {
    let mut scheduler = scheduler.clone();
    let mut state = sim.reset(seed);
    let mut rng = scheduler_rng(seed);
    (0..sim.config().horizon)
        .map(|_| {
            let action = scheduler.decide(sim, &state, &mut rng)?;
            sim.step(&mut state, &action)
        })
        .collect()
}

/// Runs `num_seeds` independent simulations. Table schedulers use `policy`
/// when given, otherwise solve or train one in-process.
pub fn run(
    config: &SystemConfig,
    kind: SchedulerKind,
    num_seeds: usize,
    policy: Option<(Policy, f64)>,
    exec: Execution,
) -> Result<RunOutput> {
    if num_seeds == 0 {
        return Err(Error::Domain("at least one seed is required".into()));
    }
    let sim = Simulator::new(config)?;
    let policy = match policy {
        Some(p) => Some(p),
        None => prepare_policy(config, kind, exec)?,
    };
    let mu_star = policy.as_ref().map(|p| p.1);
    let scheduler = Scheduler::new(kind, config, policy.map(|p| p.0))?;
    let seeds = seed_list(config, num_seeds);
    let traces = map_slice(exec, &seeds, |&seed| simulate_seed(&sim, &scheduler, seed).map(|r| (seed, r)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut summary = summarize(kind.name(), config, &traces)?;
    summary.mu_star = mu_star;
    Ok(RunOutput { summary, traces })
}

/// Aggregates traces into a summary. Depends only on the trace contents, so
/// traces read back from disk reproduce the original summary.
pub fn summarize(scheduler: &str, config: &SystemConfig, traces: &[(u64, Vec<TraceRecord>)]) -> Result<RunSummary> {
    if traces.is_empty() || traces.iter().any(|(_, r)| r.is_empty()) {
        return Err(Error::Domain("cannot summarize empty traces".into()));
    }
    let gamma = config.discount;
    let mut per_seed = Vec::with_capacity(traces.len());
    let (mut slots, mut sum, mut sum_goe, mut sum_cost) = (0usize, 0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut queries, mut query_slots, mut delivered, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (seed, records) in traces {
        let (mut seed_sum, mut seed_min, mut obj, mut cost, mut power, mut seed_queries) =
            (0.0, f64::INFINITY, 0.0, 0.0, 1.0, 0usize);
        for r in records {
            seed_sum += r.cpt_goe;
            seed_min = seed_min.min(r.cpt_goe);
            obj += power * r.cpt_goe;
            cost += power * r.cost;
            power *= gamma;
            seed_queries += r.queries.len();
            query_slots += !r.queries.is_empty() as usize;
            delivered += r.queries.iter().filter(|q| q.delivered).count();
            correct += r.queries.iter().filter(|q| q.correct).count();
            sum_goe += r.goe;
            sum_cost += r.cost;
            hi = hi.max(r.cpt_goe);
        }
        slots += records.len();
        sum += seed_sum;
        lo = lo.min(seed_min);
        queries += seed_queries;
        per_seed.push(SeedSummary {
            seed: *seed,
            long_term_cpt_goe: seed_sum / records.len() as f64,
            min_cpt_goe: seed_min,
            queries: seed_queries,
            discounted_objective: obj,
            discounted_cost: cost,
        });
    }
    let n = per_seed.len() as f64;
    let pct = |k: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * k as f64 / of as f64 };
    let mut cdf: Vec<f64> = per_seed.iter().map(|s| s.long_term_cpt_goe).collect();
    cdf.sort_by(f64::total_cmp);
    Ok(RunSummary {
        scheduler: scheduler.to_string(),
        seeds: per_seed.iter().map(|s| s.seed).collect(),
        horizon: traces[0].1.len() as u64,
        mean_cpt_goe: sum / slots as f64,
        min_cpt_goe: lo,
        max_cpt_goe: hi,
        mean_goe: sum_goe / slots as f64,
        discounted_objective: per_seed.iter().map(|s| s.discounted_objective).sum::<f64>() / n,
        discounted_cost: per_seed.iter().map(|s| s.discounted_cost).sum::<f64>() / n,
        mean_slot_cost: sum_cost / slots as f64,
        query_count: queries,
        query_percentage: pct(query_slots, slots),
        delivered_percentage: pct(delivered, queries),
        correct_percentage: pct(correct, queries),
        cdf,
        per_seed,
        mu_star: None,
    })
}

/// Empirical CDF: sorted distinct values with fraction `k / n` of samples at
/// or below each.
pub fn compute_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical CDF of an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN in CDF sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

// ----------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    GoeRef,
    CostFlex,
    NumAttributes,
    QueryLimit,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GoeRef => "goe_ref",
            SweepAxis::CostFlex => "cost_flex",
            SweepAxis::NumAttributes => "num_attributes",
            SweepAxis::QueryLimit => "query_limit",
        }
    }

    /// Configuration for one sweep point.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let integer = |what: &str| -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(what, format!("{value} is not a positive integer")))
            }
        };
        let mut cfg = match self {
            SweepAxis::NumAttributes => config.with_num_attributes(integer("system.M")?)?,
            _ => config.clone(),
        };
        match self {
            SweepAxis::GoeRef => cfg.cpt.goe_ref = value,
            SweepAxis::CostFlex => cfg.cost_flex = value,
            SweepAxis::QueryLimit => cfg.query_limit = integer("system.query_limit")?,
            SweepAxis::NumAttributes => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::GoeRef, SweepAxis::CostFlex, SweepAxis::NumAttributes, SweepAxis::QueryLimit]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub scheduler: String,
    /// `ok`, or why the point was skipped.
    pub status: String,
    pub summary: Option<RunSummary>,
}

/// One run per (value, scheduler); rows are ordered by value, then by the
/// order of `kinds`.
pub fn sweep(
    config: &SystemConfig,
    axis: SweepAxis,
    values: &[f64],
    kinds: &[SchedulerKind],
    num_seeds: usize,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, SchedulerKind)> = values.iter().flat_map(|&v| kinds.iter().map(move |&k| (v, k))).collect();
    let configs = values.iter().map(|&v| axis.apply(config, v)).collect::<Result<Vec<_>>>()?;
    let rows = map_range(exec, points.len(), |i| -> Result<SweepRow> {
        let (value, kind) = points[i];
        let cfg = &configs[i / kinds.len()];
        let row = |status: &str, summary| SweepRow { axis, value, scheduler: kind.name().into(), status: status.into(), summary };
        if kind.needs_policy() && cfg.query_limit > 1 {
            return Ok(row("skipped: query_limit", None));
        }
        match run(cfg, kind, num_seeds, None, exec) {
            Ok(out) => Ok(row("ok", Some(out.summary))),
            Err(Error::Capacity { .. }) => Ok(row("skipped: capacity", None)),
            Err(e) => Err(e),
        }
    });
    rows.into_iter().collect()
}

// ----------------------------------------------------------------------------
// Output files

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `summary.json`, `cdf.csv` and `trace_seed{K}.csv` into `dir`.
pub fn write_run(dir: &Path, config: &SystemConfig, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = create(&dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &output.summary)?;
    writeln!(f)?;
    f.flush()?;
    write_cdf_csv(&compute_cdf(&output.summary.cdf)?, create(&dir.join("cdf.csv"))?)?;
    for (seed, records) in &output.traces {
        write_trace_csv(records, config.num_attributes, create(&dir.join(format!("trace_seed{seed}.csv")))?)?;
    }
    Ok(())
}

pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "fraction"])?;
    for (x, f) in cdf {
        w.write_record([x.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format sweep table, one line per (value, scheduler).
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "axis",
        "value",
        "scheduler",
        "status",
        "mean_cpt_goe",
        "min_cpt_goe",
        "max_cpt_goe",
        "discounted_objective",
        "discounted_cost",
        "query_percentage",
        "delivered_percentage",
        "correct_percentage",
        "mu_star",
    ])?;
    for r in rows {
        let mut line = vec![r.axis.name().to_string(), r.value.to_string(), r.scheduler.clone(), r.status.clone()];
        match &r.summary {
            Some(s) => line.extend(
                [
                    s.mean_cpt_goe,
                    s.min_cpt_goe,
                    s.max_cpt_goe,
                    s.discounted_objective,
                    s.discounted_cost,
                    s.query_percentage,
                    s.delivered_percentage,
                    s.correct_percentage,
                ]
                .iter()
                .map(f64::to_string)
                .chain(std::iter::once(s.mu_star.map(|m| m.to_string()).unwrap_or_default())),
            ),
            None => line.extend(std::iter::repeat_n(String::new(), 9)),
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}
