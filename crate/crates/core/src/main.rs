use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decprox::harness::{self, config, RunConfig, SweepConfig};
use decprox::{Error, Result};

#[derive(Parser)]
#[command(
    name = "decprox",
    version,
    about = "Decentralized proximal stochastic optimization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its metrics CSV and manifest.
    Run(RunFlags),
    /// Run a configuration over several agent counts and seeds.
    Sweep {
        /// Agent counts, e.g. `1,4,16`.
        #[arg(long)]
        agents: String,
        /// Seeds, e.g. `0..9` (inclusive) or `1,2,3`.
        #[arg(long)]
        seeds: String,
        /// Run cells concurrently.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Config file or manifest of `key=value` lines; flags may repeat its values but not contradict them.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `dasa` or `dasa-gt`.
    #[arg(long)]
    algorithm: Option<String>,
    /// `ring:<n>:<self_weight>`, `complete:<n>` or `random:<n>:<p>:<seed>`.
    #[arg(long)]
    topology: Option<String>,
    /// `phase:<d>:<s>:<noise>`, `quad:<d>:<hetero>:<noise>` or `linreg:<d>:<noise>`.
    #[arg(long)]
    problem: Option<String>,
    /// `zero`, `l1:<lambda>`, `box:<lo>:<hi>` or `l2ball:<r>`.
    #[arg(long)]
    prox: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// Communication rounds per iteration, or `auto`.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    chebyshev: bool,
    /// `const:<K>`, `dim:<alpha>`, `fixed:<alpha>` or `list:<a>,<b>,...`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// Number of iterations.
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    test_size: Option<String>,
    /// `zero`, `gauss:<scale>` or `auto`.
    #[arg(long)]
    init: Option<String>,
    /// Record wall-clock time in the CSV (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
    /// Verify runtime invariants every round.
    #[arg(long)]
    check_invariants: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut sources = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            sources.push(config::parse_pairs(&text)?);
        }
        let mut flags = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k.to_string(), v));
            }
        };
        put("algorithm", self.algorithm.clone());
        put("topology", self.topology.clone());
        put("problem", self.problem.clone());
        put("prox", self.prox.clone());
        put("gamma", self.gamma.clone());
        put("m", self.m.clone());
        put("chebyshev", self.chebyshev.then(|| "true".into()));
        put("schedule", self.schedule.clone());
        put("batch", self.batch.clone());
        put("K", self.k.clone());
        put("seed", self.seed.clone());
        put("eval_every", self.eval_every.clone());
        put("test_size", self.test_size.clone());
        put("init", self.init.clone());
        put("timing", self.timing.then(|| "true".into()));
        put(
            "check_invariants",
            self.check_invariants.then(|| "true".into()),
        );
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        sources.push(flags);
        RunConfig::from_map(&config::merge_pairs(&sources)?)
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(flags) => {
            let cfg = flags.resolve()?;
            let out = harness::run_single(&cfg)?;
            let last = out.records.last().expect("k = 0 is always recorded");
            println!(
                "rho={:.6} m={} k={} stationarity={:.6e} consensus_x={:.6e} test_loss={:.6e}",
                out.rho, out.rounds, last.k, last.stationarity, last.consensus_x, last.test_loss
            );
            println!("{}", out.csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            agents,
            seeds,
            parallel,
            run,
        } => {
            let sweep = SweepConfig {
                base: run.resolve()?,
                agents: config::parse_list::<u64>("agents", &agents)?
                    .into_iter()
                    .map(|n| n as usize)
                    .collect(),
                seeds: config::parse_list("seeds", &seeds)?,
                parallel,
            };
            let out = harness::run_speedup_suite(&sweep)?;
            println!("{}", harness::SUMMARY_HEADER);
            for r in &out.summary {
                println!(
                    "{},{},{},{:.6e},{:.6e}",
                    r.agents, r.runs_ok, r.runs_failed, r.stationarity, r.test_loss
                );
            }
            for c in out.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "n={} seed={}: {}",
                    c.agents,
                    c.seed,
                    c.error.as_deref().unwrap_or("")
                );
            }
            if out.failures() > 0 {
                eprintln!("{} sweep cell(s) failed", out.failures());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
