//! Experiment harness: single runs with CSV and manifest output, and
//! linear-speedup sweeps over agent counts and seeds.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use config::{parse_list, Rounds, RunConfig};

use crate::error::{Error, Result};
use crate::metrics::{CsvSink, MetricsRecord, MetricsSink};
use crate::solvers::{self, StepSchedule};

/// Files and records produced by a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub rho: f64,
    pub rounds: usize,
}

struct Tee<'a, W: Write> {
    csv: CsvSink<W>,
    records: &'a mut Vec<MetricsRecord>,
}

impl<W: Write> MetricsSink for Tee<'_, W> {
    fn record(&mut self, rec: &MetricsRecord) -> Result<()> {
        self.records.push(rec.clone());
        self.csv.record(rec)
    }
}

pub fn csv_path(dir: &Path, n: usize, seed: u64) -> PathBuf {
    dir.join(format!("metrics_{n}_{seed}.csv"))
}

pub fn manifest_path(dir: &Path, n: usize, seed: u64) -> PathBuf {
    dir.join(format!("manifest_{n}_{seed}.txt"))
}

/// Executes one run. The manifest is written before the first iteration and
/// metric rows are flushed as they are produced, so a diverging run leaves a
/// partial CSV behind together with the error.
pub fn run_single(cfg: &RunConfig) -> Result<RunOutput> {
    let w = cfg.topology.build()?;
    let n = w.n();
    let instance = cfg.problem.build(n, cfg.seed, cfg.test_size)?;
    let solver = cfg.solver_config(w.rho());
    solver.validate()?;

    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let manifest = manifest_path(&cfg.output, n, cfg.seed);
    let text = cfg.manifest(&[
        ("agents", n.to_string()),
        ("rho", format!("{:.16e}", w.rho())),
        ("m", solver.rounds.to_string()),
    ]);
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;

    let csv = csv_path(&cfg.output, n, cfg.seed);
    let file = File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut records = Vec::new();
    let mut sink = Tee {
        csv: CsvSink::new(BufWriter::new(file), &csv)?,
        records: &mut records,
    };
    solvers::run(&solver, &w, &instance, &cfg.prox, cfg.seed, &mut sink)?;
    Ok(RunOutput {
        csv,
        manifest,
        records,
        rho: w.rho(),
        rounds: solver.rounds,
    })
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub agents: Vec<usize>,
    pub seeds: Vec<u64>,
    pub parallel: bool,
}

/// Outcome of one (n, seed) cell of a sweep.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub agents: usize,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub error: Option<String>,
}

impl CellResult {
    /// Mean stationarity and test loss over the last 10% of evaluations.
    pub fn final_window(&self) -> Option<(f64, f64)> {
        if self.error.is_some() || self.records.is_empty() {
            return None;
        }
        let len = self.records.len();
        let tail = &self.records[len - len.div_ceil(10)..];
        let t = tail.len() as f64;
        Some((
            tail.iter().map(|r| r.stationarity).sum::<f64>() / t,
            tail.iter().map(|r| r.test_loss).sum::<f64>() / t,
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub agents: usize,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub stationarity: f64,
    pub test_loss: f64,
}

pub const SUMMARY_HEADER: &str = "n,runs_ok,runs_failed,final_stationarity,final_test_loss";

#[derive(Debug)]
pub struct SweepOutput {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

impl SweepOutput {
    pub fn failures(&self) -> usize {
        self.summary.iter().map(|r| r.runs_failed).sum()
    }
}

impl SweepConfig {
    /// Configuration of one cell: the base run resized to `n` agents with
    /// the constant `α = √(n/K)` schedule.
    pub fn cell_config(&self, n: usize, seed: u64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        cfg.topology = cfg.topology.with_agents(n);
        cfg.seed = seed;
        cfg.schedule = StepSchedule::constant_sqrt_nk(cfg.iterations)?;
        Ok(cfg)
    }
}

/// Runs every (n, seed) pair and writes `summary.csv`. Individual run
/// failures are counted, not propagated.
pub fn run_speedup_suite(sweep: &SweepConfig) -> Result<SweepOutput> {
    if sweep.agents.is_empty() || sweep.seeds.is_empty() {
        return Err(Error::Usage(
            "sweep needs at least one agent count and one seed".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &n in &sweep.agents {
        for &seed in &sweep.seeds {
            jobs.push((n, seed, sweep.cell_config(n, seed)?));
        }
    }
    let run_cell = |(n, seed, cfg): &(usize, u64, RunConfig)| match run_single(cfg) {
        Ok(out) => CellResult {
            agents: *n,
            seed: *seed,
            records: out.records,
            error: None,
        },
        Err(e) => CellResult {
            agents: *n,
            seed: *seed,
            records: Vec::new(),
            error: Some(e.to_string()),
        },
    };

    let cells: Vec<CellResult> = if sweep.parallel {
        let workers = std::thread::available_parallelism().map_or(1, |p| p.get());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; jobs.len()]);
        std::thread::scope(|s| {
            for _ in 0..workers.min(jobs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = jobs.get(i) else { break };
                    let res = run_cell(job);
                    slots.lock().expect("no panics while holding the lock")[i] = Some(res);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|c| c.expect("every job ran"))
            .collect()
    } else {
        jobs.iter().map(run_cell).collect()
    };

    let summary = summarize(&sweep.agents, &cells);
    let dir = &sweep.base.output;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary_path = dir.join("summary.csv");
    let mut text = format!("{SUMMARY_HEADER}\n");
    for r in &summary {
        text.push_str(&format!(
            "{},{},{},{:.16e},{:.16e}\n",
            r.agents, r.runs_ok, r.runs_failed, r.stationarity, r.test_loss
        ));
    }
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    Ok(SweepOutput {
        cells,
        summary,
        summary_path,
    })
}

fn summarize(agents: &[usize], cells: &[CellResult]) -> Vec<SummaryRow> {
    agents
        .iter()
        .map(|&n| {
            let windows: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.agents == n)
                .filter_map(CellResult::final_window)
                .collect();
            let total = cells.iter().filter(|c| c.agents == n).count();
            let ok = windows.len() as f64;
            SummaryRow {
                agents: n,
                runs_ok: windows.len(),
                runs_failed: total - windows.len(),
                stationarity: windows.iter().map(|w| w.0).sum::<f64>() / ok,
                test_loss: windows.iter().map(|w| w.1).sum::<f64>() / ok,
            }
        })
        .collect()
}
