//! Slot-by-slot ground-truth simulator.
//!
//! Each slot draws a fresh realization of every attribute, serves the queried
//! attributes through their selected agents and erasure channels, and updates
//! the knowledge base, AoI and usefulness. The random draws of a slot do not
//! depend on the action, so two schedulers run on the same seed see the same
//! source, observation and channel outcomes.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::StateSpace;
use crate::config::{select_agent, slot_cost, usefulness_map, SystemConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Number of slots simulated so far.
    pub t: u64,
    /// Current realization of every attribute (1-based).
    pub truth: Vec<usize>,
    /// Knowledge base; 0 marks an attribute never updated.
    pub knowledge: Vec<usize>,
    pub aoi: Vec<u32>,
    /// Usefulness level index (1-based) of the last correct delivered update.
    pub level: Vec<usize>,
    /// Running `Σ γ^t · v⁺(f_c(queries_t))`.
    pub discounted_cost: f64,
    discount_power: f64,
    rng: ChaCha8Rng,
}

/// Outcome of one query within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    /// 0-based attribute.
    pub attribute: usize,
    /// 0-based agent.
    pub agent: usize,
    /// The update survived the erasure channel.
    pub delivered: bool,
    /// The observation matched the truth.
    pub correct: bool,
}

impl QueryOutcome {
    pub fn is_success(&self) -> bool {
        self.delivered && self.correct
    }
}

/// One logged slot. `t` is the index of the slot whose state is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub queries: Vec<QueryOutcome>,
    pub goe: f64,
    pub cpt_goe: f64,
    /// Prospect value of this slot's query cost.
    pub cost: f64,
    pub aoi: Vec<u32>,
    pub usefulness: Vec<f64>,
    /// Total GoE when a stale knowledge entry (y ≠ x) counts as useless.
    pub goe_strict: f64,
}

impl TraceRecord {
    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }
}

/// Simulator for one configuration. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SystemConfig,
    relevant: Vec<usize>,
    /// Selected agent per attribute.
    agents: Vec<usize>,
    /// Cumulative source pmf per attribute.
    cdfs: Vec<Vec<f64>>,
    /// Usefulness level index per (attribute, realization - 1).
    levels: Vec<Vec<usize>>,
}

impl Simulator {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let agents = (0..config.num_attributes).map(|m| select_agent(config, m)).collect();
        let cdfs = config
            .attributes
            .iter()
            .map(|a| {
                let mut acc = 0.0;
                a.source_pmf
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        let levels = config
            .attributes
            .iter()
            .map(|a| {
                (1..=a.cardinality)
                    .map(|i| usefulness_map(a, &config.usefulness.levels, i))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { relevant: config.relevant_attributes(), config: config.clone(), agents, cdfs, levels })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// Selected agent for `attribute`.
    pub fn agent_for(&self, attribute: usize) -> usize {
        self.agents[attribute]
    }

    /// State at slot 0: fresh AoI, lowest usefulness, empty knowledge base.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.config.num_attributes;
        let truth = (0..m).map(|a| self.draw_realization(a, rng.random())).collect();
        EnvState {
            t: 0,
            truth,
            knowledge: vec![0; m],
            aoi: vec![1; m],
            level: vec![1; m],
            discounted_cost: 0.0,
            discount_power: 1.0,
            rng,
        }
    }

    fn draw_realization(&self, attribute: usize, u: f64) -> usize {
        let cdf = &self.cdfs[attribute];
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) + 1
    }

    fn check_action(&self, action: &[usize]) -> Result<()> {
        if action.len() > self.config.query_limit {
            return Err(Error::Contract(format!(
                "{} queries exceed the limit of {}",
                action.len(),
                self.config.query_limit
            )));
        }
        for (i, m) in action.iter().enumerate() {
            if !self.relevant.contains(m) {
                return Err(Error::Contract(format!("attribute {} is not required by any actuator", m + 1)));
            }
            if action[..i].contains(m) {
                return Err(Error::Contract(format!("attribute {} queried twice", m + 1)));
            }
        }
        Ok(())
    }

    /// Advances the state one slot without building a trace record.
    /// `on_query` sees each query outcome in attribute order.
    pub fn advance(&self, state: &mut EnvState, action: &[usize], mut on_query: impl FnMut(QueryOutcome)) -> Result<()> {
        self.check_action(action)?;
        let cfg = &self.config;
        // Every slot consumes the same four draws per attribute whatever the
        // action.
        for m in 0..cfg.num_attributes {
            let u: [f64; 4] = [state.rng.random(), state.rng.random(), state.rng.random(), state.rng.random()];
            state.truth[m] = self.draw_realization(m, u[0]);
            let mut refreshed = false;
            if action.contains(&m) {
                let agent_idx = self.agents[m];
                let agent = &cfg.agents[agent_idx];
                let [_, u_obs, u_erase, u_wrong] = u;
                let truth = state.truth[m];
                let correct = u_obs < agent.observe_prob[m];
                let observed = if correct {
                    truth
                } else {
                    let others = cfg.attributes[m].cardinality - 1;
                    let k = ((u_wrong * others as f64) as usize).min(others - 1) + 1;
                    if k >= truth {
                        k + 1
                    } else {
                        k
                    }
                };
                let delivered = u_erase >= agent.erase_prob;
                if delivered {
                    state.knowledge[m] = observed;
                    if correct {
                        refreshed = true;
                        state.level[m] = self.levels[m][observed - 1];
                    }
                }
                on_query(QueryOutcome { attribute: m, agent: agent_idx, delivered, correct });
            }
            state.aoi[m] = if refreshed { 1 } else { (state.aoi[m] + 1).min(cfg.max_aoi) };
        }
        let cost = slot_cost(action.len(), cfg);
        state.discounted_cost += state.discount_power * cost;
        state.discount_power *= cfg.discount;
        state.t += 1;
        Ok(())
    }

    /// Advances one slot, querying the 0-based attributes in `action`.
    pub fn step(&self, state: &mut EnvState, action: &[usize]) -> Result<TraceRecord> {
        let cfg = &self.config;
        let mut queries = Vec::with_capacity(action.len());
        self.advance(state, action, |q| queries.push(q))?;
        queries.sort_by_key(|q| action.iter().position(|&m| m == q.attribute));
        let goe = goe_total(state, cfg);
        let goe_strict = self
            .relevant
            .iter()
            .map(|&m| {
                let u = if state.knowledge[m] == state.truth[m] {
                    cfg.usefulness.level(state.level[m])
                } else {
                    0.0
                };
                cfg.composite.combine(state.aoi[m], u)
            })
            .sum();
        Ok(TraceRecord {
            t: state.t,
            cost: slot_cost(queries.len(), cfg),
            queries,
            goe,
            cpt_goe: cfg.cpt.goe_value(goe),
            aoi: state.aoi.clone(),
            usefulness: state.level.iter().map(|&j| cfg.usefulness.level(j)).collect(),
            goe_strict,
        })
    }

    /// Advances with a CMDP action index and no trace record.
    pub fn advance_action_index(&self, state: &mut EnvState, action: usize) -> Result<()> {
        match action {
            0 => self.advance(state, &[], |_| {}),
            a if a <= self.relevant.len() => self.advance(state, &[self.relevant[a - 1]], |_| {}),
            _ => Err(Error::Contract(format!("action {action} out of range"))),
        }
    }

    /// Steps with a CMDP action index (0 idles, `a` queries the `a`-th
    /// relevant attribute).
    pub fn step_action_index(&self, state: &mut EnvState, action: usize) -> Result<TraceRecord> {
        match action {
            0 => self.step(state, &[]),
            a if a <= self.relevant.len() => self.step(state, &[self.relevant[a - 1]]),
            _ => Err(Error::Contract(format!("action {action} out of range"))),
        }
    }

    /// CMDP index of the current (AoI, usefulness) tuple.
    pub fn state_index(&self, space: &StateSpace, state: &EnvState) -> usize {
        space.encode_attributes(&state.aoi, &state.level)
    }

    /// Overwrites the AoI/usefulness tuple of the relevant attributes.
    pub fn set_tuple(&self, space: &StateSpace, state: &mut EnvState, index: usize) {
        space.decode_into(index, &mut state.aoi, &mut state.level);
    }
}

/// Sum of per-attribute GoE over the attributes some actuator requires.
pub fn goe_total(state: &EnvState, config: &SystemConfig) -> f64 {
    config
        .relevant_attributes()
        .into_iter()
        .map(|m| config.composite.combine(state.aoi[m], config.usefulness.level(state.level[m])))
        .sum()
}

/// Net reward `v(GoE(next)) - μ · v⁺(f_c(action))`.
pub fn slot_reward(_prev: &EnvState, action: &[usize], next: &EnvState, mu: f64, config: &SystemConfig) -> f64 {
    config.cpt.goe_value(goe_total(next, config)) - mu * slot_cost(action.len(), config)
}

// ----------------------------------------------------------------------------
// Trace CSV

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    let parts: Vec<String> = items.map(|x| x.to_string()).collect();
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join(";")
    }
}

/// Writes one row per slot: `t, action, agent, delivered, correct, goe,
/// cpt_goe, cost, delta_1..M, u_1..M, goe_strict`. Multi-query slots list
/// their queries separated by `;`; idle slots write `0`.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], num_attributes: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["t", "action", "agent", "delivered", "correct", "goe", "cpt_goe", "cost"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=num_attributes).map(|m| format!("delta_{m}")));
    header.extend((1..=num_attributes).map(|m| format!("u_{m}")));
    header.push("goe_strict".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            join(r.queries.iter().map(|q| q.attribute + 1)),
            join(r.queries.iter().map(|q| q.agent + 1)),
            join(r.queries.iter().map(|q| q.delivered as u8)),
            join(r.queries.iter().map(|q| q.correct as u8)),
            r.goe.to_string(),
            r.cpt_goe.to_string(),
            r.cost.to_string(),
        ];
        row.extend(r.aoi.iter().map(|d| d.to_string()));
        row.extend(r.usefulness.iter().map(|u| u.to_string()));
        row.push(r.goe_strict.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace written by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let m = headers.iter().filter(|h| h.starts_with("delta_")).count();
    let bad = |what: &str| Error::Domain(format!("malformed trace field `{what}`"));
    let list = |s: &str| -> Result<Vec<usize>> {
        if s == "0" {
            return Ok(Vec::new());
        }
        s.split(';').map(|x| x.parse().map_err(|_| bad(s))).collect()
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).ok_or_else(|| bad("missing column"));
        let num = |i: usize| -> Result<f64> { get(i)?.parse().map_err(|_| bad(&headers[i])) };
        let attrs = list(get(1)?)?;
        let flags = |i: usize| -> Result<Vec<usize>> {
            if attrs.is_empty() {
                Ok(Vec::new())
            } else {
                get(i)?.split(';').map(|x| x.parse().map_err(|_| bad(&headers[i]))).collect()
            }
        };
        let agents = flags(2)?;
        let delivered = flags(3)?;
        let correct = flags(4)?;
        if agents.len() != attrs.len() || delivered.len() != attrs.len() || correct.len() != attrs.len() {
            return Err(bad("query lists"));
        }
        let queries = (0..attrs.len())
            .map(|i| QueryOutcome {
                attribute: attrs[i] - 1,
                agent: agents[i] - 1,
                delivered: delivered[i] == 1,
                correct: correct[i] == 1,
            })
            .collect();
        let aoi = (0..m).map(|k| get(8 + k)?.parse().map_err(|_| bad("delta"))).collect::<Result<_>>()?;
        let usefulness = (0..m).map(|k| num(8 + m + k)).collect::<Result<_>>()?;
        out.push(TraceRecord {
            t: get(0)?.parse().map_err(|_| bad("t"))?,
            queries,
            goe: num(5)?,
            cpt_goe: num(6)?,
            cost: num(7)?,
            aoi,
            usefulness,
            goe_strict: num(8 + 2 * m)?,
        });
    }
    Ok(out)
}
