//! Experiment configuration and the shared model primitives built on it.
//!
//! Indices: attributes and agents are 0-based inside the crate and 1-based in
//! documents and exported files. Realizations are 1-based everywhere, with 0
//! reserved for "never updated" in the knowledge base. Usefulness level
//! indices are 1-based (`j` in `1..=levels`).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::beta::ln_beta;

use crate::cpt::{CptParams, Weighting};
use crate::error::{Error, Result};

const PMF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    /// 1-based attribute id.
    pub id: usize,
    pub cardinality: usize,
    pub source_pmf: Vec<f64>,
    pub alpha_shape: f64,
    pub beta_shape: f64,
    /// Point in (0, 1) fed to the usefulness mapping for each realization.
    pub value_grid: Vec<f64>,
}

impl AttributeSpec {
    /// Uniform source over `cardinality` realizations on the grid `i / (n + 1)`.
    pub fn uniform(id: usize, cardinality: usize, alpha_shape: f64, beta_shape: f64) -> Self {
        Self {
            id,
            cardinality,
            source_pmf: vec![1.0 / cardinality as f64; cardinality],
            alpha_shape,
            beta_shape,
            value_grid: default_grid(cardinality),
        }
    }

    fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("attributes[{}].{f}", self.id);
        if self.cardinality < 2 {
            return Err(Error::config(field("cardinality"), "must be >= 2"));
        }
        if !(self.alpha_shape > 0.0) || !(self.beta_shape > 0.0) {
            return Err(Error::config(field("alpha"), "Beta shapes must be positive"));
        }
        check_pmf(&self.source_pmf, self.cardinality, &field("pmf"))?;
        if self.value_grid.len() != self.cardinality {
            return Err(Error::config(field("value_grid"), "length must equal cardinality"));
        }
        if self.value_grid.iter().any(|&y| !(y > 0.0 && y < 1.0))
            || self.value_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::config(
                field("value_grid"),
                "must be strictly increasing inside (0, 1)",
            ));
        }
        Ok(())
    }
}

fn default_grid(cardinality: usize) -> Vec<f64> {
    (1..=cardinality).map(|i| i as f64 / (cardinality + 1) as f64).collect()
}

fn check_pmf(pmf: &[f64], len: usize, field: &str) -> Result<()> {
    if pmf.len() != len {
        return Err(Error::config(field, format!("expected {len} entries, got {}", pmf.len())));
    }
    if pmf.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::config(field, "probabilities must be non-negative"));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > PMF_TOL {
        return Err(Error::config(field, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessModel {
    /// Strictly increasing levels in (0, 1].
    pub levels: Vec<f64>,
    /// Per-attribute pmf over `levels`.
    pub per_attribute_pmf: Vec<Vec<f64>>,
}

impl UsefulnessModel {
    /// Canonical levels `j / n` with the pmf induced by each attribute's source.
    pub fn canonical(attributes: &[AttributeSpec], num_levels: usize) -> Result<Self> {
        let levels = canonical_levels(num_levels);
        let per_attribute_pmf = attributes
            .iter()
            .map(|a| usefulness_pmf(a, &levels))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, per_attribute_pmf })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level value for a 1-based level index.
    pub fn level(&self, j: usize) -> f64 {
        self.levels[j - 1]
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty()
            || self.levels.iter().any(|&v| !(v > 0.0 && v <= 1.0))
            || self.levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::config(
                "system.levels",
                "usefulness levels must be strictly increasing in (0, 1]",
            ));
        }
        for (m, pmf) in self.per_attribute_pmf.iter().enumerate() {
            check_pmf(pmf, self.levels.len(), &format!("usefulness[{}]", m + 1))?;
        }
        Ok(())
    }
}

pub fn canonical_levels(num_levels: usize) -> Vec<f64> {
    (1..=num_levels).map(|j| j as f64 / num_levels as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// 1-based agent id.
    pub id: usize,
    /// Probability of a correct observation, per attribute.
    pub observe_prob: Vec<f64>,
    pub erase_prob: f64,
}

impl AgentSpec {
    /// Probability an update about `attribute` arrives and is correct.
    pub fn success_prob(&self, attribute: usize) -> f64 {
        (1.0 - self.erase_prob) * self.observe_prob[attribute]
    }
}

/// How freshness and usefulness combine into a per-attribute GoE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GoeComposite {
    /// `u / Δ`.
    #[default]
    Ratio,
    /// `u · 2^-(Δ-1)`.
    Halving,
}

impl GoeComposite {
    pub fn combine(self, aoi: u32, usefulness: f64) -> f64 {
        match self {
            GoeComposite::Ratio => usefulness / aoi as f64,
            GoeComposite::Halving => usefulness * 0.5f64.powi(aoi as i32 - 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    /// Interpolate so the mixture meets the budget exactly.
    #[default]
    Computed,
    /// Use `mixing` as given.
    Fixed,
}

/// Scheduler selection carried in the configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    pub kind: String,
    /// Persistence of the Markovian query/idle chain.
    pub rho: f64,
    /// Importance weights; `None` counts actuators requiring each attribute.
    pub weights: Option<Vec<f64>>,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self { kind: "policy".into(), rho: 0.5, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_agents: usize,
    pub num_attributes: usize,
    pub num_actuators: usize,
    /// 0-based attribute sets, one per actuator.
    pub required_sets: Vec<Vec<usize>>,
    pub attributes: Vec<AttributeSpec>,
    pub agents: Vec<AgentSpec>,
    pub usefulness: UsefulnessModel,
    pub max_aoi: u32,
    pub discount: f64,
    pub cpt: CptParams,
    pub cost_per_query: f64,
    pub cost_flex: f64,
    pub query_limit: usize,
    pub horizon: usize,
    pub seed: u64,
    pub composite: GoeComposite,
    pub eval_tolerance: f64,
    pub span_tolerance: f64,
    pub mu_tolerance: f64,
    pub mixing: f64,
    pub eta_mode: EtaMode,
    pub mu_hi_init: f64,
    pub scheduler: SchedulerParams,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::from_document(Document::default()).expect("built-in defaults are valid")
    }
}

impl SystemConfig {
    /// Parses a TOML document; missing fields take the built-in defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: Document = toml::from_str(text).map_err(|e| Error::Schema {
            field: schema_field(&e),
            reason: e.message().to_string(),
        })?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn from_document(doc: Document) -> Result<Self> {
        let sys = doc.system.unwrap_or_default();
        let attr_docs = doc.attributes.unwrap_or_default();
        let agent_docs = doc.agents.unwrap_or_default();
        let goals = doc.goals.unwrap_or_default();

        let num_attributes = sys.m.unwrap_or(if attr_docs.is_empty() { 2 } else { attr_docs.len() });
        let num_agents = sys.n.unwrap_or(if agent_docs.is_empty() { 4 } else { agent_docs.len() });
        if num_attributes == 0 {
            return Err(Error::config("system.M", "at least one attribute is required"));
        }
        if num_agents == 0 {
            return Err(Error::config("system.N", "at least one agent is required"));
        }
        if attr_docs.len() > num_attributes {
            return Err(Error::config("attributes", "more entries than system.M"));
        }
        if agent_docs.len() > num_agents {
            return Err(Error::config("agents", "more entries than system.N"));
        }

        // Default shapes, then any later attribute reuses the last provided one.
        let defaults = [(0.5, 0.5), (2.0, 5.0)];
        let mut attributes = Vec::with_capacity(num_attributes);
        for m in 0..num_attributes {
            let d = attr_docs.get(m).or(attr_docs.last()).cloned().unwrap_or_default();
            let (da, db) = defaults[m.min(defaults.len() - 1)];
            let cardinality = d
                .cardinality
                .or(d.pmf.as_ref().map(Vec::len))
                .unwrap_or(8);
            let mut spec = AttributeSpec::uniform(
                m + 1,
                cardinality,
                d.alpha.unwrap_or(da),
                d.beta.unwrap_or(db),
            );
            if let Some(pmf) = d.pmf {
                spec.source_pmf = pmf;
            }
            attributes.push(spec);
        }

        let mut agents = Vec::with_capacity(num_agents);
        for n in 0..num_agents {
            let d = agent_docs.get(n).or(agent_docs.last()).cloned().unwrap_or_default();
            let mut observe = d.p_observe.unwrap_or_else(|| vec![0.8]);
            if observe.is_empty() {
                return Err(Error::config(format!("agents[{}].p_observe", n + 1), "empty"));
            }
            if observe.len() > num_attributes {
                return Err(Error::config(
                    format!("agents[{}].p_observe", n + 1),
                    "more entries than system.M",
                ));
            }
            let last = *observe.last().unwrap();
            observe.resize(num_attributes, last);
            agents.push(AgentSpec { id: n + 1, observe_prob: observe, erase_prob: d.p_erase.unwrap_or(0.2) });
        }

        let required_sets: Vec<Vec<usize>> = match goals.required_sets {
            Some(sets) => {
                if let Some(k) = sys.k {
                    if k != sets.len() {
                        return Err(Error::config("goals.required_sets", "length must equal system.K"));
                    }
                }
                sets.into_iter()
                    .map(|s| {
                        s.into_iter()
                            .map(|m| {
                                if m == 0 || m > num_attributes {
                                    Err(Error::config(
                                        "goals.required_sets",
                                        format!("attribute {m} outside 1..={num_attributes}"),
                                    ))
                                } else {
                                    Ok(m - 1)
                                }
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            None => vec![(0..num_attributes).collect(); sys.k.unwrap_or(4)],
        };

        let cpt_doc = doc.cpt.unwrap_or_default();
        let base = CptParams::default();
        let cpt = CptParams {
            alpha_gain: cpt_doc.alpha.unwrap_or(base.alpha_gain),
            beta_loss: cpt_doc.beta.unwrap_or(base.beta_loss),
            lambda_loss: cpt_doc.lambda.unwrap_or(base.lambda_loss),
            goe_ref: cpt_doc.goe_ref.unwrap_or(base.goe_ref),
            weighting: cpt_doc.weighting.unwrap_or(base.weighting),
            weighting_gamma: cpt_doc.weighting_gamma.unwrap_or(base.weighting_gamma),
        };
        let cost = doc.cost.unwrap_or_default();
        let solver = doc.solver.unwrap_or_default();
        let sched = doc.scheduler.unwrap_or_default();
        let base_sched = SchedulerParams::default();

        let num_levels = sys.levels.unwrap_or(4);
        if num_levels == 0 {
            return Err(Error::config("system.levels", "at least one usefulness level is required"));
        }
        for a in &attributes {
            a.validate()?;
        }
        let usefulness = UsefulnessModel::canonical(&attributes, num_levels)?;

        let config = SystemConfig {
            num_agents,
            num_attributes,
            num_actuators: required_sets.len(),
            required_sets,
            attributes,
            agents,
            usefulness,
            max_aoi: sys.max_aoi.unwrap_or(4),
            discount: solver.gamma.unwrap_or(0.9),
            cpt,
            cost_per_query: cost.per_query.unwrap_or(0.5),
            cost_flex: cost.flex.unwrap_or(0.75),
            query_limit: sys.query_limit.unwrap_or(1),
            horizon: sys.horizon.unwrap_or(1000),
            seed: sys.seed.unwrap_or(1),
            composite: doc.goe.and_then(|g| g.composite).unwrap_or_default(),
            eval_tolerance: solver.eval_tol.unwrap_or(1e-9),
            span_tolerance: solver.span_tol.unwrap_or(1e-6),
            mu_tolerance: solver.mu_tol.unwrap_or(1e-6),
            mixing: solver.eta.unwrap_or(0.5),
            eta_mode: solver.eta_mode.unwrap_or_default(),
            mu_hi_init: solver.mu_hi_init.unwrap_or(16.0),
            scheduler: SchedulerParams {
                kind: sched.kind.unwrap_or(base_sched.kind),
                rho: sched.rho.unwrap_or(base_sched.rho),
                weights: sched.weights,
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every model invariant.
    pub fn validate(&self) -> Result<()> {
        if self.attributes.len() != self.num_attributes {
            return Err(Error::config("attributes", "length must equal system.M"));
        }
        if self.agents.len() != self.num_agents || self.num_agents == 0 {
            return Err(Error::config("agents", "length must equal system.N"));
        }
        if self.required_sets.len() != self.num_actuators {
            return Err(Error::config("goals.required_sets", "length must equal system.K"));
        }
        for a in &self.attributes {
            a.validate()?;
        }
        self.usefulness.validate()?;
        if self.usefulness.per_attribute_pmf.len() != self.num_attributes {
            return Err(Error::config("usefulness", "one pmf per attribute is required"));
        }
        for agent in &self.agents {
            let field = format!("agents[{}]", agent.id);
            if agent.observe_prob.len() != self.num_attributes {
                return Err(Error::config(format!("{field}.p_observe"), "length must equal system.M"));
            }
            if agent.observe_prob.iter().any(|&p| !(0.0..1.0).contains(&p)) {
                return Err(Error::config(format!("{field}.p_observe"), "must lie in [0, 1)"));
            }
            if !(agent.erase_prob > 0.0 && agent.erase_prob <= 1.0) {
                return Err(Error::config(format!("{field}.p_erase"), "must lie in (0, 1]"));
            }
        }
        if self.required_sets.iter().flatten().any(|&m| m >= self.num_attributes) {
            return Err(Error::config("goals.required_sets", "attribute outside 1..=M"));
        }
        let relevant = self.relevant_attributes();
        if relevant.is_empty() {
            return Err(Error::config("goals.required_sets", "union of required sets is empty"));
        }
        if self.max_aoi < 1 {
            return Err(Error::config("system.max_aoi", "maximum AoI must be >= 1"));
        }
        if !(self.discount >= 0.0) {
            return Err(Error::config("solver.gamma", "discount must be >= 0"));
        }
        if !(self.discount < 1.0) {
            return Err(Error::config("solver.gamma", "discount must be < 1"));
        }
        self.cpt.validate()?;
        if self.query_limit < 1 || self.query_limit > relevant.len() {
            return Err(Error::config(
                "system.query_limit",
                format!("must lie in 1..={} (relevant attributes)", relevant.len()),
            ));
        }
        if !(self.cost_per_query > 0.0) || !self.cost_per_query.is_finite() {
            return Err(Error::config("cost.per_query", "must be positive"));
        }
        if !(self.cost_flex > 0.0 && self.cost_flex <= 1.0) {
            return Err(Error::config("cost.flex", "must lie in (0, 1]"));
        }
        if self.horizon == 0 {
            return Err(Error::config("system.horizon", "must be >= 1"));
        }
        for (name, v) in [
            ("solver.eval_tol", self.eval_tolerance),
            ("solver.span_tol", self.span_tolerance),
            ("solver.mu_tol", self.mu_tolerance),
            ("solver.mu_hi_init", self.mu_hi_init),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.mixing) {
            return Err(Error::config("solver.eta", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.scheduler.rho) {
            return Err(Error::config("scheduler.rho", "must lie in [0, 1)"));
        }
        if let Some(w) = &self.scheduler.weights {
            if w.len() != self.num_attributes || w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::config(
                    "scheduler.weights",
                    "one strictly positive weight per attribute is required",
                ));
            }
        }
        Ok(())
    }

    /// Sorted union of the required sets (0-based).
    pub fn relevant_attributes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.required_sets.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    pub fn num_levels(&self) -> usize {
        self.usefulness.len()
    }

    /// Importance weight per attribute: explicit, or the number of
    /// actuators requiring it.
    pub fn importance_weights(&self) -> Vec<f64> {
        if let Some(w) = &self.scheduler.weights {
            return w.clone();
        }
        (0..self.num_attributes)
            .map(|m| self.required_sets.iter().filter(|s| s.contains(&m)).count() as f64)
            .collect()
    }

    /// Short content hash identifying this configuration in exported files.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Same system with `m` attributes: extra attributes and observation
    /// probabilities repeat the last ones, and every actuator requires all
    /// attributes.
    pub fn with_num_attributes(&self, m: usize) -> Result<Self> {
        if m == self.num_attributes {
            return Ok(self.clone());
        }
        if m == 0 {
            return Err(Error::config("system.M", "at least one attribute is required"));
        }
        let mut cfg = self.clone();
        cfg.num_attributes = m;
        let last = self.attributes.last().expect("validated config has attributes").clone();
        cfg.attributes.truncate(m);
        while cfg.attributes.len() < m {
            let id = cfg.attributes.len() + 1;
            cfg.attributes.push(AttributeSpec { id, ..last.clone() });
        }
        for agent in &mut cfg.agents {
            let last = *agent.observe_prob.last().expect("validated agent");
            agent.observe_prob.resize(m, last);
        }
        cfg.required_sets = vec![(0..m).collect(); self.num_actuators];
        if let Some(w) = &mut cfg.scheduler.weights {
            let last = *w.last().expect("validated weights");
            w.resize(m, last);
        }
        cfg.usefulness = UsefulnessModel::canonical(&cfg.attributes, self.num_levels())?;
        cfg.query_limit = cfg.query_limit.min(m);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Maps realization `realization_index` (1-based) to a 1-based level index.
///
/// The capped Beta density at the realization's grid point is quantized onto
/// the canonical levels `j / n` by `ceil(g * n)`, clamped to `1..=n`.
pub fn usefulness_map(attr: &AttributeSpec, levels: &[f64], realization_index: usize) -> Result<usize> {
    if realization_index == 0 || realization_index > attr.cardinality {
        return Err(Error::Domain(format!(
            "realization {realization_index} outside 1..={}",
            attr.cardinality
        )));
    }
    let y = attr.value_grid[realization_index - 1];
    let g = capped_beta_density(y, attr.alpha_shape, attr.beta_shape);
    let n = levels.len();
    let j = (g * n as f64).ceil() as usize;
    Ok(j.clamp(1, n))
}

/// `min(1, y^(a-1) (1-y)^(b-1) / B(a, b))`.
pub fn capped_beta_density(y: f64, a: f64, b: f64) -> f64 {
    let log_density = (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln() - ln_beta(a, b);
    log_density.exp().min(1.0)
}

/// Probability of each usefulness level under the attribute's source pmf.
pub fn usefulness_pmf(attr: &AttributeSpec, levels: &[f64]) -> Result<Vec<f64>> {
    let mut pmf = vec![0.0; levels.len()];
    for (i, &p) in attr.source_pmf.iter().enumerate() {
        let j = usefulness_map(attr, levels, i + 1)?;
        pmf[j - 1] += p;
    }
    Ok(pmf)
}

/// Agent with the highest delivered-and-correct probability for `attribute`;
/// ties go to the lowest index.
pub fn select_agent(config: &SystemConfig, attribute: usize) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (n, agent) in config.agents.iter().enumerate() {
        let score = agent.success_prob(attribute);
        if score > best_score {
            best = n;
            best_score = score;
        }
    }
    best
}

/// `f_c`: free when idle, `cost_per_query` for a query.
pub fn query_cost(is_query: bool, config: &SystemConfig) -> f64 {
    if is_query {
        config.cost_per_query
    } else {
        0.0
    }
}

/// Prospect value of the cost of issuing `queries` queries in one slot.
pub fn slot_cost(queries: usize, config: &SystemConfig) -> f64 {
    config.cpt.value_gain_only(queries as f64 * config.cost_per_query, 0.0)
}

/// Discounted query-cost budget `C_flex · v⁺(f_c(1)) / (1 - γ)`.
pub fn max_budget(config: &SystemConfig) -> f64 {
    config.cost_flex * config.cpt.value_gain_only(query_cost(true, config), 0.0) / (1.0 - config.discount)
}

// ----------------------------------------------------------------------------
// Document schema

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    system: Option<SystemDoc>,
    attributes: Option<Vec<AttributeDoc>>,
    agents: Option<Vec<AgentDoc>>,
    goals: Option<GoalsDoc>,
    cpt: Option<CptDoc>,
    cost: Option<CostDoc>,
    solver: Option<SolverDoc>,
    scheduler: Option<SchedulerDoc>,
    goe: Option<GoeDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    query_limit: Option<usize>,
    horizon: Option<usize>,
    seed: Option<u64>,
    max_aoi: Option<u32>,
    levels: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeDoc {
    cardinality: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    pmf: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    p_observe: Option<Vec<f64>>,
    p_erase: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalsDoc {
    required_sets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptDoc {
    alpha: Option<f64>,
    beta: Option<f64>,
    lambda: Option<f64>,
    goe_ref: Option<f64>,
    weighting: Option<Weighting>,
    weighting_gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostDoc {
    per_query: Option<f64>,
    flex: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverDoc {
    gamma: Option<f64>,
    span_tol: Option<f64>,
    mu_tol: Option<f64>,
    eval_tol: Option<f64>,
    eta: Option<f64>,
    eta_mode: Option<EtaMode>,
    mu_hi_init: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchedulerDoc {
    kind: Option<String>,
    rho: Option<f64>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoeDoc {
    composite: Option<GoeComposite>,
}

fn schema_field(err: &toml::de::Error) -> String {
    // toml reports unknown keys as "unknown field `x`"; surface the key itself.
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    match err.span() {
        Some(span) => format!("bytes {}..{}", span.start, span.end),
        None => "document".to_string(),
    }
}
