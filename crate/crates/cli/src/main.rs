use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pullsched::cmdp::TransitionTable;
use pullsched::harness::{self, SweepAxis};
use pullsched::qlearn::{solve_tabular_q, TrainSettings};
use pullsched::schedulers::SchedulerKind;
use pullsched::solver::{bisection_solve, read_policy_csv, write_policy_csv, PolicyFile};
use pullsched::{gateway, validate, Execution, SystemConfig};

#[derive(Parser)]
#[command(name = "pullsched", version, about = "Query scheduling for pull-based status updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<SystemConfig> {
        let cfg = match &self.config {
            Some(p) => SystemConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SystemConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the constrained problem; writes policy.csv and solve_report.json.
    Solve {
        #[command(flatten)]
        common: Common,
        /// `policy` (model-based) or `tabular_q`.
        #[arg(long, default_value = "policy")]
        scheduler: SchedulerKind,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate one scheduler; writes summary.json, cdf.csv and per-seed traces.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "policy")]
        scheduler: SchedulerKind,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Policy file for table schedulers instead of solving in-process.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run several schedulers along one parameter axis; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// goe_ref, cost_flex, num_attributes or query_limit.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated scheduler list; every kind when omitted.
        #[arg(long, value_delimiter = ',')]
        scheduler: Vec<SchedulerKind>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Serve the environment over stdin/stdout or a TCP address.
    Gateway {
        #[command(flatten)]
        common: Common,
        /// e.g. 127.0.0.1:7070
        #[arg(long)]
        listen: Option<String>,
    },
    /// Check the transition kernel against itself and the simulator.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Simulated transitions per (state, action) row.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn solve(common: &Common, kind: SchedulerKind, out: &Path) -> Result<()> {
    let cfg = common.load()?;
    let exec = common.exec();
    let file = match kind {
        SchedulerKind::Policy => {
            let table = TransitionTable::build(&cfg)?;
            let report = bisection_solve(&table, &cfg, exec)?;
            write_json(&out.join("solve_report.json"), &report)?;
            eprintln!(
                "mu*={:.6} cost={:.6} budget={:.6} objective={:.6}",
                report.mu_star, report.cost_value, report.budget, report.objective
            );
            PolicyFile { policy: report.policy, mu_star: report.mu_star, config_hash: report.config_hash }
        }
        SchedulerKind::TabularQ => {
            let settings = TrainSettings { seed: cfg.seed, ..TrainSettings::default() };
            let solved = solve_tabular_q(&cfg, &settings, exec)?;
            solved.table.write_csv(create(&out.join("qtable.csv"))?)?;
            write_json(
                &out.join("solve_report.json"),
                &serde_json::json!({
                    "mu_star": solved.mu_star,
                    "cost_estimate": solved.cost_estimate,
                    "budget": pullsched::config::max_budget(&cfg),
                    "outer_steps": solved.outer_steps,
                    "config_hash": cfg.hash(),
                }),
            )?;
            PolicyFile { policy: solved.policy, mu_star: solved.mu_star, config_hash: cfg.hash() }
        }
        other => bail!("`{other}` has no policy to solve for"),
    };
    let mut f = create(&out.join("policy.csv"))?;
    write_policy_csv(&file, &mut f)?;
    f.flush()?;
    Ok(())
}

fn run(common: &Common, kind: SchedulerKind, seeds: usize, out: &Path, policy: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;
    let policy = match policy {
        Some(path) => {
            if !kind.needs_policy() {
                bail!("`{kind}` does not take a policy file");
            }
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let file = read_policy_csv(file)?;
            if file.config_hash != cfg.hash() {
                bail!("policy {} was solved for a different configuration", path.display());
            }
            Some((file.policy, file.mu_star))
        }
        None => None,
    };
    let output = harness::run(&cfg, kind, seeds, policy, common.exec())?;
    harness::write_run(out, &cfg, &output)?;
    let s = &output.summary;
    eprintln!(
        "{}: mean CPT GoE {:.4} (min {:.4}), queries in {:.1}% of slots",
        s.scheduler, s.mean_cpt_goe, s.min_cpt_goe, s.query_percentage
    );
    Ok(())
}

fn sweep(common: &Common, axis: SweepAxis, values: &[f64], kinds: &[SchedulerKind], seeds: usize, out: &Path) -> Result<()> {
    let cfg = common.load()?;
    let kinds = if kinds.is_empty() { SchedulerKind::ALL.to_vec() } else { kinds.to_vec() };
    let rows = harness::sweep(&cfg, axis, values, &kinds, seeds, common.exec())?;
    let mut f = create(&out.join("sweep.csv"))?;
    harness::write_sweep_csv(&rows, &mut f)?;
    f.flush()?;
    Ok(())
}

fn validate_cmd(common: &Common, samples: usize, out: Option<&Path>) -> Result<bool> {
    let cfg = common.load()?;
    let report = validate::validate(&cfg, samples, common.exec())?;
    let k = &report.kernel;
    println!("states {} actions {}", k.num_states, k.num_actions);
    println!("max row-sum error {:.3e}", k.max_row_error);
    println!("success-mass error {:?}", k.success_mass_error);
    println!("weakly accessible {} {:?}", k.weakly_accessible, k.witness);
    println!("max L1 over {} rows {:.4}", report.rows.len(), report.max_l1);
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    if let Some(dir) = out {
        write_json(&dir.join("validation.json"), &report)?;
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { common, scheduler, out } => solve(common, *scheduler, out).map(|_| true),
        Command::Run { common, scheduler, seeds, out, policy } => {
            run(common, *scheduler, *seeds, out, policy.as_deref()).map(|_| true)
        }
        Command::Sweep { common, axis, values, scheduler, seeds, out } => {
            sweep(common, *axis, values, scheduler, *seeds, out).map(|_| true)
        }
        Command::Gateway { common, listen } => common
            .load()
            .and_then(|cfg| match listen {
                Some(addr) => Ok(gateway::serve_tcp(&cfg, addr.as_str())?),
                None => Ok(gateway::serve(&cfg, io::stdin().lock(), io::stdout().lock())?),
            })
            .map(|_| true),
        Command::Validate { common, samples, out } => validate_cmd(common, *samples, out.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
