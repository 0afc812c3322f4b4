//! `slowmix` command-line runner: one subcommand per experiment, each
//! writing `result.csv`, `result.json` and `summary.txt` to an output
//! directory.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::{parse_n_list, parse_n_pow, EstimatorChoice, Experiment, ExperimentConfig, MapChoice, ObservableId};
use output::RunInfo;

const DEFAULT_OUT: &str = "slowmix-results";

#[derive(Parser, Debug)]
#[command(name = "slowmix", version, about = "Seeded Monte Carlo experiments on slowly mixing maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lp norms of Birkhoff sums across n
    Moments(RunArgs),
    /// Lp norms of iterated sums across n
    IteratedMoments(RunArgs),
    /// Autocorrelation decay
    Correlation(RunArgs),
    /// Decay of the theta^psi_n integral on a Young tower
    TowerPsi(RunArgs),
    /// Joint versus independent block sums under a bounded Lipschitz functional
    Weakdep(RunArgs),
    /// Functional correlation gap scan
    Fcb(RunArgs),
    /// Fast-slow endpoint law against its diffusion limit
    Fastslow(RunArgs),
    /// Exact property checks
    Selftest(RunArgs),
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Moments(a) => (Experiment::Moments, a),
            Command::IteratedMoments(a) => (Experiment::IteratedMoments, a),
            Command::Correlation(a) => (Experiment::Correlation, a),
            Command::TowerPsi(a) => (Experiment::TowerPsi, a),
            Command::Weakdep(a) => (Experiment::Weakdep, a),
            Command::Fcb(a) => (Experiment::Fcb, a),
            Command::Fastslow(a) => (Experiment::Fastslow, a),
            Command::Selftest(a) => (Experiment::Selftest, a),
        }
    }
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// JSON file with configuration keys; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    map: Option<MapChoice>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated list, e.g. 64,128,256
    #[arg(long, conflicts_with = "n_pow")]
    n_list: Option<String>,
    /// Powers of two lo:hi, e.g. 6:14
    #[arg(long)]
    n_pow: Option<String>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    orbit_len: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, value_enum)]
    v: Option<ObservableId>,
    #[arg(long, value_enum)]
    w: Option<ObservableId>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorChoice>,
    #[arg(long)]
    l_max: Option<u64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    ref_paths: Option<u64>,
    #[arg(long)]
    gk_orbits: Option<u64>,
    #[arg(long)]
    gk_orbit_len: Option<u64>,
    #[arg(long)]
    center_samples: Option<u64>,
    /// Smaller selftest instance counts
    #[arg(long)]
    quick: bool,
    /// Required
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 if an acceptance threshold fails
    #[arg(long)]
    check: bool,
}

impl RunArgs {
    fn overrides(&self, experiment: Experiment) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        m.insert("experiment".into(), json!(experiment));
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(key.to_string(), v);
            }
        };
        put("map", self.map.map(|x| json!(x)));
        put("alpha", self.alpha.map(|x| json!(x)));
        put("beta", self.beta.map(|x| json!(x)));
        put("theta", self.theta.map(|x| json!(x)));
        put("gamma", self.gamma.map(|x| json!(x)));
        put("p", self.p.map(|x| json!(x)));
        put("k", self.k.map(|x| json!(x)));
        put("q", self.q.map(|x| json!(x)));
        put("trials", self.trials.map(|x| json!(x)));
        put("orbit_len", self.orbit_len.map(|x| json!(x)));
        put("burn_in", self.burn_in.map(|x| json!(x)));
        put("v", self.v.map(|x| json!(x)));
        put("w", self.w.map(|x| json!(x)));
        put("estimator", self.estimator.map(|x| json!(x)));
        put("l_max", self.l_max.map(|x| json!(x)));
        put("xi", self.xi.map(|x| json!(x)));
        put("t_end", self.t_end.map(|x| json!(x)));
        put("dt", self.dt.map(|x| json!(x)));
        put("ref_paths", self.ref_paths.map(|x| json!(x)));
        put("gk_orbits", self.gk_orbits.map(|x| json!(x)));
        put("gk_orbit_len", self.gk_orbit_len.map(|x| json!(x)));
        put("center_samples", self.center_samples.map(|x| json!(x)));
        put("quick", self.quick.then_some(json!(true)));
        put("seed", self.seed.map(|x| json!(x)));
        put("output_dir", self.out.as_ref().map(|x| json!(x)));
        if let Some(s) = &self.n_list {
            m.insert("n_list".into(), json!(parse_n_list(s)?));
        }
        if let Some(s) = &self.n_pow {
            m.insert("n_list".into(), json!(parse_n_pow(s)?));
        }
        Ok(m)
    }
}

fn configure_threads(threads: Option<usize>) -> Result<usize> {
    #[cfg(feature = "parallel")]
    {
        use anyhow::Context as _;
        if let Some(n) = threads {
            anyhow::ensure!(n >= 1, "invalid `threads`: must be at least 1");
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("cannot build the worker pool")?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        anyhow::ensure!(threads.unwrap_or(1) >= 1, "invalid `threads`: must be at least 1");
        Ok(1)
    }
}

/// Runs one command; `Ok(false)` means a threshold failed under `--check`.
fn execute(cli: Cli) -> Result<bool> {
    let (experiment, args) = cli.command.split();
    let cfg = ExperimentConfig::from_sources(args.config.as_deref(), args.overrides(experiment)?)?;
    let threads = configure_threads(args.threads)?;
    let start = Instant::now();
    let outcome = run::run_experiment(&cfg)?;
    let info = RunInfo {
        threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    output::write_all(&dir, &cfg, &outcome, &info)?;
    print!("{}", output::summary_text(&cfg, &outcome, &info));
    println!("wrote {}", dir.display());
    let enforce = args.check || experiment == Experiment::Selftest;
    Ok(!enforce || outcome.all_checks_pass())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
