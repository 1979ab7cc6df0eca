//! Seeded task arrival streams.
//!
//! Each user owns an independent ChaCha8 stream. Its seed is
//! `splitmix64(seed ^ splitmix64(user + 1))`, so user `i`'s tasks do not
//! change when other users are added or removed, and the same
//! `(seed, config)` produces bit-identical streams on every platform.
//! Gaussian draws are truncated by resampling, never by clamping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::SimConfig;
use crate::model::Task;

/// Smallest admissible interarrival gap, in seconds.
pub const INTERARRIVAL_FLOOR: f64 = 0.001;
/// Smallest admissible task size and relative deadline.
pub const TASK_FLOOR: f64 = 0.01;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one user's stream.
pub fn user_seed(seed: u64, user: usize) -> u64 {
    splitmix64(seed ^ splitmix64(user as u64 + 1))
}

pub fn user_rng(seed: u64, user: usize) -> StreamRng {
    ChaCha8Rng::seed_from_u64(user_seed(seed, user))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    /// Normal(mu, sigma) conditioned on `sample > floor`.
    GaussianTruncated { mu: f64, sigma: f64, floor: f64 },
    /// Uniform on the half-open interval `(lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl DistributionSpec {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::GaussianTruncated { mu, sigma, floor } => {
                if sigma == 0.0 {
                    return if mu > floor { mu } else { floor + f64::EPSILON };
                }
                let normal = Normal::new(mu, sigma).expect("sigma is finite and non-negative");
                loop {
                    let x = normal.sample(rng);
                    if x > floor {
                        return x;
                    }
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                hi - (hi - lo) * u
            }
        }
    }
}

pub fn sample_interarrival<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> f64 {
    DistributionSpec::GaussianTruncated {
        mu,
        sigma: mu / 2.0,
        floor: INTERARRIVAL_FLOOR,
    }
    .sample(rng)
}

/// Distributions for task attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDistributions {
    pub size: DistributionSpec,
    pub relative_deadline: DistributionSpec,
    pub value: DistributionSpec,
}

impl TaskDistributions {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            size: DistributionSpec::GaussianTruncated {
                mu: cfg.size_mu,
                sigma: cfg.size_sigma,
                floor: TASK_FLOOR,
            },
            relative_deadline: DistributionSpec::GaussianTruncated {
                mu: cfg.deadline_mu,
                sigma: cfg.deadline_sigma,
                floor: TASK_FLOOR,
            },
            value: DistributionSpec::Uniform {
                lo: cfg.value_range.0,
                hi: cfg.value_range.1,
            },
        }
    }
}

impl Default for TaskDistributions {
    fn default() -> Self {
        Self::from_config(&SimConfig::default())
    }
}

/// Draws one task arriving at `now`; the deadline is relative to arrival.
pub fn gen_task<R: Rng + ?Sized>(
    id: u64,
    owner: usize,
    now: f64,
    dists: &TaskDistributions,
    rng: &mut R,
) -> Task {
    let size = dists.size.sample(rng);
    let deadline = now + dists.relative_deadline.sample(rng);
    let value = dists.value.sample(rng);
    Task::new(id, owner, now, size, deadline, value)
}

/// Source of task arrivals for the engine.
pub trait Workload {
    /// Returns, in arrival order, every task of `user` arriving before `until`
    /// that has not been returned yet. Task ids are assigned by the caller.
    fn arrivals_before(&mut self, user: usize, until: f64, next_id: &mut u64) -> Vec<Task>;
}

/// Gaussian arrival process per user, as configured by a [`SimConfig`].
#[derive(Debug, Clone)]
pub struct GeneratedWorkload {
    interarrival_mu: f64,
    dists: TaskDistributions,
    streams: Vec<UserStream>,
}

#[derive(Debug, Clone)]
struct UserStream {
    rng: StreamRng,
    next_arrival: f64,
}

impl GeneratedWorkload {
    pub fn new(cfg: &SimConfig) -> Self {
        let streams = (0..cfg.n_users)
            .map(|u| {
                let mut rng = user_rng(cfg.seed, u);
                let next_arrival = sample_interarrival(cfg.interarrival_mu, &mut rng);
                UserStream { rng, next_arrival }
            })
            .collect();
        Self {
            interarrival_mu: cfg.interarrival_mu,
            dists: TaskDistributions::from_config(cfg),
            streams,
        }
    }
}

impl Workload for GeneratedWorkload {
    fn arrivals_before(&mut self, user: usize, until: f64, next_id: &mut u64) -> Vec<Task> {
        let s = &mut self.streams[user];
        let mut out = Vec::new();
        while s.next_arrival < until {
            let t = gen_task(*next_id, user, s.next_arrival, &self.dists, &mut s.rng);
            *next_id += 1;
            out.push(t);
            s.next_arrival += sample_interarrival(self.interarrival_mu, &mut s.rng);
        }
        out
    }
}

/// A fixed list of tasks, e.g. for hand-built scenarios and tests.
///
/// Task ids in the script are replaced by engine-assigned ids.
#[derive(Debug, Clone, Default)]
pub struct ScriptedWorkload {
    per_user: Vec<std::collections::VecDeque<Task>>,
}

impl ScriptedWorkload {
    pub fn new(n_users: usize, mut tasks: Vec<Task>) -> Self {
        tasks.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        let mut per_user = vec![std::collections::VecDeque::new(); n_users];
        for t in tasks {
            per_user[t.owner].push_back(t);
        }
        Self { per_user }
    }
}

impl Workload for ScriptedWorkload {
    fn arrivals_before(&mut self, user: usize, until: f64, next_id: &mut u64) -> Vec<Task> {
        let q = &mut self.per_user[user];
        let mut out = Vec::new();
        while q.front().is_some_and(|t| t.arrival_time < until) {
            let mut t = q.pop_front().unwrap();
            t.id = *next_id;
            *next_id += 1;
            out.push(t);
        }
        out
    }
}
