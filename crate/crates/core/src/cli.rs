//! Command-line front end. Exit codes: 0 success, 1 invalid input or failed
//! run, 2 usage error.

use crate::export::{write_outputs, RunRecord};
use crate::ippso::{run_baseline_fixed_antenna, run_baseline_local_only, run_ippso, RunError, RunResult};
use crate::scenario::{load_config, sample_scenario, ScenarioConfig};
use crate::validation::run_checks;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "fluid-mec", version, about = "Latency minimisation for fluid-antenna edge computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimise antenna positions and offloading for one scenario.
    Run(Common),
    /// Evaluate a fixed-array baseline.
    Baseline {
        #[arg(long, value_enum)]
        scheme: BaselineScheme,
        #[command(flatten)]
        common: Common,
    },
    /// Run every scheme over several antenna counts and seeds.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 6, 8])]
        antennas: Vec<usize>,
        /// Number of consecutive seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Check a configuration and run numerical self-checks on it.
    Validate {
        #[arg(long, default_value = "default")]
        config: PathBuf,
        /// Number of scenarios to check.
        #[arg(long, default_value_t = 5)]
        samples: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineScheme {
    Local,
    Fixed,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file, or `default` for the built-in parameters.
    #[arg(long, default_value = "default")]
    config: PathBuf,
    /// Scenario and optimiser seed; defaults to `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Outer (alternating) iterations.
    #[arg(long)]
    outer: Option<usize>,
    /// Swarm iterations per outer iteration.
    #[arg(long)]
    inner: Option<usize>,
    /// Evaluate particles on one thread.
    #[arg(long)]
    serial: bool,
    /// Write 0 for runtimes so outputs are byte-for-byte repeatable.
    #[arg(long)]
    reproducible: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = load_config(&self.config).map_err(|e| e.to_string())?;
        if let Some(k) = self.outer {
            cfg.outer_iterations = k;
        }
        if let Some(t) = self.inner {
            cfg.pso_iterations = t;
        }
        if self.serial {
            cfg.parallel = false;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn base_seed(&self, cfg: &ScenarioConfig) -> u64 {
        self.seed.unwrap_or(cfg.rng_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Ippso,
    Local,
    Fixed,
}

fn execute(cfg: &ScenarioConfig, seed: u64, job: Job) -> Result<(RunResult<f64>, f64), RunError> {
    let scenario = sample_scenario::<f64>(cfg, seed)?;
    let mut solver = cfg.ippso_config::<f64>();
    solver.rng_seed = seed;
    let start = Instant::now();
    let result = match job {
        Job::Ippso => run_ippso(&scenario, &solver)?,
        Job::Local => run_baseline_local_only(&scenario)?,
        Job::Fixed => run_baseline_fixed_antenna(&scenario, &solver)?,
    };
    Ok((result, start.elapsed().as_secs_f64()))
}

fn write(common: &Common, runs: &[(u64, RunResult<f64>, f64)]) -> Result<(), String> {
    let records: Vec<RunRecord<'_, f64>> = runs
        .iter()
        .map(|(seed, result, secs)| RunRecord {
            seed: *seed,
            result,
            runtime_seconds: if common.reproducible { 0.0 } else { *secs },
        })
        .collect();
    write_outputs(&common.out, &records).map_err(|e| e.to_string())?;
    eprintln!("wrote {}", common.out.display());
    Ok(())
}

fn run_jobs(common: &Common, jobs: &[(ScenarioConfig, u64, Job)]) -> Result<(), String> {
    let mut runs = Vec::with_capacity(jobs.len());
    for (i, (cfg, seed, job)) in jobs.iter().enumerate() {
        let (result, secs) = execute(cfg, *seed, *job).map_err(|e| format!("seed {seed}: {e}"))?;
        eprintln!(
            "[{}/{}] {} M={} seed={} total_latency={:.6e} s ({secs:.2} s)",
            i + 1,
            jobs.len(),
            result.scheme.name(),
            cfg.antenna_count,
            seed,
            result.total_latency
        );
        if !result.allocation_feasible {
            eprintln!("warning: latency caps could not all be met for seed {seed}");
        }
        runs.push((*seed, result, secs));
    }
    write(common, &runs)
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let seed = common.base_seed(&cfg);
            run_jobs(&common, &[(cfg, seed, Job::Ippso)])
        }
        Command::Baseline { scheme, common } => {
            let cfg = common.load()?;
            let seed = common.base_seed(&cfg);
            let job = match scheme {
                BaselineScheme::Local => Job::Local,
                BaselineScheme::Fixed => Job::Fixed,
            };
            run_jobs(&common, &[(cfg, seed, job)])
        }
        Command::Sweep { antennas, seeds, common } => {
            let cfg = common.load()?;
            let base = common.base_seed(&cfg);
            let mut jobs = Vec::new();
            for &m in &antennas {
                let sized = ScenarioConfig { antenna_count: m, ..cfg.clone() };
                sized.validate().map_err(|e| e.to_string())?;
                for seed in base..base + seeds {
                    for job in [Job::Ippso, Job::Fixed, Job::Local] {
                        jobs.push((sized.clone(), seed, job));
                    }
                }
            }
            run_jobs(&common, &jobs)
        }
        Command::Validate { config, samples } => {
            let cfg = load_config(&config).map_err(|e| e.to_string())?;
            println!("config ok: M={} N={} L={}", cfg.antenna_count, cfg.user_count, cfg.paths_per_user);
            let outcomes = run_checks(&cfg, cfg.rng_seed..cfg.rng_seed + samples.max(1));
            for c in &outcomes {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if outcomes.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err("self-checks failed".into())
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(cli_main(["fluid-mec"]), 2);
        assert_eq!(cli_main(["fluid-mec", "run", "--bogus"]), 2);
        assert_eq!(cli_main(["fluid-mec", "baseline", "--scheme", "nope"]), 2);
        assert_eq!(cli_main(["fluid-mec", "--help"]), 0);
    }

    #[test]
    fn bad_config_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "user_count = 5\nantenna_count = 4\n").unwrap();
        let out = dir.path().join("out");
        let args = ["fluid-mec", "run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
        assert_eq!(cli_main(args), 1);
        assert_eq!(cli_main(["fluid-mec", "validate", "--config", "/nonexistent/x.cfg"]), 1);
    }
}
