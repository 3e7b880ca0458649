//! Line-delimited JSON environment server for external learners.
//!
//! Requests: `{"cmd":"spec"|"reset"|"step"|"set_mu", "seed"?, "action"?, "mu"?}`.
//! Every request gets exactly one response line; failures come back as
//! `{"err": "..."}` and leave the session usable.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};

use serde::Deserialize;
use serde_json::{json, Value};

use crate::cmdp::StateSpace;
use crate::config::{max_budget, slot_cost, SystemConfig};
use crate::env::{slot_reward, EnvState, Simulator};
use crate::error::Result;

pub const PROTOCOL_VERSION: &str = "1";
pub const EPISODE_LENGTH: u64 = 10_000;

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    Spec,
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Step {
        action: i64,
    },
    SetMu {
        mu: f64,
    },
}

pub struct Session {
    config: SystemConfig,
    sim: Simulator,
    space: StateSpace,
    env: Option<EnvState>,
    mu: f64,
    steps: u64,
    episode_length: u64,
    version: &'static str,
}

impl Session {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            sim: Simulator::new(config)?,
            space: StateSpace::new(config)?,
            env: None,
            mu: 0.0,
            steps: 0,
            episode_length: EPISODE_LENGTH,
            version: PROTOCOL_VERSION,
        })
    }

    pub fn with_episode_length(mut self, steps: u64) -> Self {
        self.episode_length = steps.max(1);
        self
    }

    pub fn version(&self) -> &str {
        self.version
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Handles one request line and returns the response line (no newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line.trim()) {
            Ok(req) => self.handle(req),
            Err(e) => Err(format!("malformed request: {e}")),
        };
        encode(&response.unwrap_or_else(|e| json!({ "err": e })))
    }

    fn handle(&mut self, req: Request) -> std::result::Result<Value, String> {
        match req {
            Request::Spec => Ok(json!({
                "n_states": self.space.len(),
                "n_actions": self.space.num_actions(),
                "gamma": self.config.discount,
                "budget": max_budget(&self.config),
                "version": self.version,
            })),
            Request::Reset { seed } => {
                let env = self.sim.reset(seed.unwrap_or(self.config.seed));
                self.steps = 0;
                let out = json!({ "state": self.sim.state_index(&self.space, &env), "obs": self.obs(&env), "t": 0 });
                self.env = Some(env);
                Ok(out)
            }
            Request::Step { action } => self.step(action),
            Request::SetMu { mu } => {
                if !mu.is_finite() || mu < 0.0 {
                    return Err("mu must be finite and non-negative".into());
                }
                self.mu = mu;
                Ok(json!({ "ok": true, "mu": mu }))
            }
        }
    }

    fn step(&mut self, action: i64) -> std::result::Result<Value, String> {
        if action < 0 || action as u64 >= self.space.num_actions() as u64 {
            return Err("action out of range".into());
        }
        if self.steps >= self.episode_length {
            return Err("episode finished; reset required".into());
        }
        let env = self.env.as_mut().ok_or("step before reset")?;
        let prev = env.clone();
        let record = self.sim.step_action_index(env, action as usize).map_err(|e| e.to_string())?;
        let attrs: Vec<usize> = record.queries.iter().map(|q| q.attribute).collect();
        let reward = slot_reward(&prev, &attrs, env, self.mu, &self.config);
        self.steps += 1;
        let env = self.env.as_ref().expect("active episode");
        Ok(json!({
            "state": self.sim.state_index(&self.space, env),
            "obs": self.obs(env),
            "reward": reward,
            "goe": record.goe,
            "cost": slot_cost(attrs.len(), &self.config),
            "t": self.steps,
            "done": self.steps >= self.episode_length,
        }))
    }

    fn obs(&self, env: &EnvState) -> Vec<f64> {
        let rel = self.space.relevant();
        let mut obs: Vec<f64> = rel.iter().map(|&m| env.aoi[m] as f64).collect();
        obs.extend(rel.iter().map(|&m| self.config.usefulness.level(env.level[m])));
        obs
    }
}

/// Serializes floats with 17 significant digits so values survive the trip.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

fn encode(value: &Value) -> String {
    use serde::Serialize;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Runs one session until end of input.
pub fn serve<R: BufRead, W: Write>(config: &SystemConfig, input: R, mut output: W) -> Result<()> {
    let mut session = Session::new(config)?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", session.handle_line(&line))?;
        output.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread and one independent session each.
pub fn serve_tcp(config: &SystemConfig, addr: impl ToSocketAddrs) -> Result<()> {
    let listener = TcpListener::bind(addr)?;
    serve_listener(config, listener)
}

pub fn serve_listener(config: &SystemConfig, listener: TcpListener) -> Result<()> {
    Session::new(config)?;
    for stream in listener.incoming() {
        let stream = stream?;
        let cfg = config.clone();
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve(&cfg, reader, stream);
        });
    }
    Ok(())
}
