//! Experiment sweeps: expand (mechanism, behavior, interarrival mean, seed)
//! into runs, execute them on a worker pool, and write `runs.csv` and
//! `agg.csv`. Output is sorted before writing, so it does not depend on
//! which worker finished first.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Mechanism, PerUser, SimConfig};
use crate::engine::{run, RunRecord};
use crate::metrics::{efficiency, mean_utility_per_host};
use crate::model::Behavior;

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "MARKET_SIM_THREADS";

pub const RUNS_FILE: &str = "runs.csv";
pub const AGG_FILE: &str = "agg.csv";

/// Interarrival means of the load sweep, in seconds.
pub const DEFAULT_SWEEP: [f64; 8] = [120.0, 100.0, 90.0, 80.0, 70.0, 60.0, 40.0, 20.0];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Parse(_))
    }
}

/// One (mechanism, behavior) pairing applied to every user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub mechanism: Mechanism,
    pub behavior: Behavior,
}

impl Cell {
    fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.mechanism
            .sort_cmp(&other.mechanism)
            .then(self.behavior.cmp(&other.behavior))
    }
}

/// The three configurations of the load experiment.
pub fn figure_cells() -> Vec<Cell> {
    vec![
        Cell {
            mechanism: Mechanism::ProportionalShare,
            behavior: Behavior::Obedient,
        },
        Cell {
            mechanism: Mechanism::ProportionalShare,
            behavior: Behavior::StrategicMax,
        },
        Cell {
            mechanism: Mechanism::MarketPS,
            behavior: Behavior::MarketStrategic,
        },
    ]
}

/// A sweep over mechanisms, behaviors, interarrival means and seeds.
///
/// Runs cover `mechanisms x behaviors`, plus any explicit `cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub base: SimConfig,
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default)]
    pub behaviors: Vec<Behavior>,
    #[serde(default)]
    pub cells: Vec<Cell>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker count; `None` means the environment override or all cores.
    #[serde(default)]
    pub parallelism: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentSpec {
    /// The load sweep over the default three cells.
    pub fn figure(seeds: usize) -> Self {
        Self {
            base: SimConfig::default(),
            sweep: DEFAULT_SWEEP.to_vec(),
            mechanisms: Vec::new(),
            behaviors: Vec::new(),
            cells: figure_cells(),
            seeds: (1..=seeds as u64).collect(),
            output: default_output(),
            parallelism: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Distinct cells, sorted.
    pub fn all_cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = self.cells.clone();
        for &mechanism in &self.mechanisms {
            for &behavior in &self.behaviors {
                cells.push(Cell { mechanism, behavior });
            }
        }
        cells.sort_by(Cell::sort_cmp);
        cells.dedup();
        cells
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, reason: &str| ConfigError::Invalid {
            field,
            reason: reason.to_string(),
        };
        if self.sweep.is_empty() {
            return Err(bad("sweep", "must list at least one interarrival mean"));
        }
        if self.sweep.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(bad("sweep", "interarrival means must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must list at least one seed"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("seeds", "seeds must be distinct"));
        }
        if self.all_cells().is_empty() {
            return Err(bad("cells", "no (mechanism, behavior) pair to run"));
        }
        if self.parallelism == Some(0) {
            return Err(bad("parallelism", "must be at least 1"));
        }
        for job in self.jobs() {
            job.config.validate()?;
        }
        Ok(())
    }

    /// Expands the sweep into one job per (cell, mu, seed), in output order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut mus = self.sweep.clone();
        mus.sort_by(f64::total_cmp);
        mus.dedup();
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        let mut jobs = Vec::new();
        for cell in self.all_cells() {
            for &mu in &mus {
                for &seed in &seeds {
                    let config = SimConfig {
                        mechanism: cell.mechanism,
                        behavior: PerUser::All(cell.behavior),
                        interarrival_mu: mu,
                        seed,
                        ..self.base.clone()
                    };
                    jobs.push(Job { cell, mu, seed, config });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub cell: Cell,
    pub mu: f64,
    pub seed: u64,
    pub config: SimConfig,
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub cell: Cell,
    pub mu: f64,
    pub seed: u64,
    pub mean_utility_per_host: f64,
    pub efficiency: f64,
    pub tasks_arrived: usize,
    pub tasks_completed: usize,
    pub tasks_expired: usize,
    pub total_spend: f64,
    pub final_balance_sum: f64,
}

impl RunRow {
    pub fn from_record(job: &Job, record: &RunRecord) -> Self {
        Self {
            cell: job.cell,
            mu: job.mu,
            seed: job.seed,
            mean_utility_per_host: mean_utility_per_host(record, job.config.n_users, job.config.horizon),
            efficiency: efficiency(record),
            tasks_arrived: record.tasks_arrived,
            tasks_completed: record.tasks_completed,
            tasks_expired: record.tasks_expired,
            total_spend: record.total_charges,
            final_balance_sum: record.balance_sum(),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// One row of `agg.csv`: statistics across seeds for a (cell, mu).
#[derive(Debug, Clone, PartialEq)]
pub struct AggRow {
    pub cell: Cell,
    pub mu: f64,
    pub n_seeds: usize,
    pub mean_utility_per_host: Moments,
    pub efficiency: Moments,
    pub tasks_completed: Moments,
    pub tasks_expired: Moments,
    pub total_spend: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunRow>,
    pub agg: Vec<AggRow>,
}

impl ExperimentResult {
    pub fn agg_for(&self, cell: Cell, mu: f64) -> Option<&AggRow> {
        self.agg.iter().find(|a| a.cell == cell && a.mu == mu)
    }
}

fn worker_count(spec: &ExperimentSpec) -> usize {
    spec.parallelism
        .or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every job of the sweep and aggregates across seeds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let jobs = spec.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(spec))
        .build()?;
    let runs: Vec<RunRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run(&job.config).map(|rec| RunRow::from_record(job, &rec)))
            .collect::<Result<_, _>>()
    })?;
    let agg = aggregate(&runs);
    Ok(ExperimentResult { runs, agg })
}

/// Groups consecutive rows sharing (cell, mu); rows must already be sorted.
pub fn aggregate(runs: &[RunRow]) -> Vec<AggRow> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let head = &runs[start];
        let end = runs[start..]
            .iter()
            .position(|r| r.cell != head.cell || r.mu != head.mu)
            .map_or(runs.len(), |off| start + off);
        let group = &runs[start..end];
        let col = |f: fn(&RunRow) -> f64| Moments::of(&group.iter().map(f).collect::<Vec<_>>());
        out.push(AggRow {
            cell: head.cell,
            mu: head.mu,
            n_seeds: group.len(),
            mean_utility_per_host: col(|r| r.mean_utility_per_host),
            efficiency: col(|r| r.efficiency),
            tasks_completed: col(|r| r.tasks_completed as f64),
            tasks_expired: col(|r| r.tasks_expired as f64),
            total_spend: col(|r| r.total_spend),
        });
        start = end;
    }
    out
}

/// Formats a number with 9 significant digits, `%.9g` style.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const RUNS_HEADER: &str = "mechanism,behavior,mu_s,arrival_rate_per_user,seed,mean_utility_per_host,efficiency,tasks_arrived,tasks_completed,tasks_expired,total_spend,final_balance_sum";
pub const AGG_HEADER: &str = "mechanism,behavior,mu_s,arrival_rate_per_user,n_seeds,mean_utility_per_host_mean,mean_utility_per_host_std,efficiency_mean,efficiency_std,tasks_completed_mean,tasks_completed_std,tasks_expired_mean,tasks_expired_std,total_spend_mean,total_spend_std";

pub fn runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.mechanism,
            r.cell.behavior,
            fmt_num(r.mu),
            fmt_num(1.0 / r.mu),
            r.seed,
            fmt_num(r.mean_utility_per_host),
            fmt_num(r.efficiency),
            r.tasks_arrived,
            r.tasks_completed,
            r.tasks_expired,
            fmt_num(r.total_spend),
            fmt_num(r.final_balance_sum),
        );
    }
    out
}

pub fn agg_csv(rows: &[AggRow]) -> String {
    let mut out = String::from(AGG_HEADER);
    out.push('\n');
    for a in rows {
        let mut line = format!(
            "{},{},{},{},{}",
            a.cell.mechanism,
            a.cell.behavior,
            fmt_num(a.mu),
            fmt_num(1.0 / a.mu),
            a.n_seeds
        );
        for m in [
            a.mean_utility_per_host,
            a.efficiency,
            a.tasks_completed,
            a.tasks_expired,
            a.total_spend,
        ] {
            let _ = write!(line, ",{},{}", fmt_num(m.mean), fmt_num(m.std));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Writes `runs.csv` and `agg.csv` into `dir`, creating it if needed.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let runs = dir.join(RUNS_FILE);
    std::fs::write(&runs, runs_csv(&result.runs)).map_err(io_err(&runs))?;
    let agg = dir.join(AGG_FILE);
    std::fs::write(&agg, agg_csv(&result.agg)).map_err(io_err(&agg))?;
    Ok(())
}
