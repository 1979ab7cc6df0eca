//! Derived measures over finished runs: mean utility per host per unit time,
//! economic efficiency and windowed fairness.

use serde::{Deserialize, Serialize};

use crate::engine::RunRecord;
use crate::model::{Task, EPS};

/// Resource usage of every user over one window of simulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessWindow {
    pub start: f64,
    pub length: f64,
    /// Resource-units consumed per user.
    pub consumed: Vec<f64>,
    /// Whether the user had a runnable task at any step of the window.
    pub demanded: Vec<bool>,
}

impl FairnessWindow {
    pub fn new(start: f64, length: f64, n_users: usize) -> Self {
        Self {
            start,
            length,
            consumed: vec![0.0; n_users],
            demanded: vec![false; n_users],
        }
    }

    pub fn total(&self) -> f64 {
        self.consumed.iter().sum()
    }
}

/// Aggregate utility divided by `n_users * horizon`.
pub fn mean_utility_per_host(record: &RunRecord, n_users: usize, horizon: f64) -> f64 {
    if n_users == 0 || horizon <= 0.0 {
        return 0.0;
    }
    record.aggregate_utility / (n_users as f64 * horizon)
}

/// Achieved utility over the loose offline bound Σ value·size of all
/// arrivals. A run with no arrivals has efficiency 0.
pub fn efficiency(record: &RunRecord) -> f64 {
    efficiency_against(record, record.offered_utility)
}

/// Achieved utility over a caller-supplied upper bound, clamped to `[0, 1]`.
pub fn efficiency_against(record: &RunRecord, bound: f64) -> f64 {
    if bound <= 0.0 {
        return 0.0;
    }
    (record.aggregate_utility / bound).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRatios {
    /// `(window start, consumed_i / consumed_j)` for every evaluated window.
    pub per_window: Vec<(f64, f64)>,
    /// Total consumption of `i` over total of `j`, across evaluated windows.
    pub aggregate: Option<f64>,
}

/// Consumption ratio of user `i` to user `j`, window by window.
///
/// Windows where either user had no demand, or where `j` received nothing,
/// are skipped.
pub fn fairness_ratio(windows: &[FairnessWindow], i: usize, j: usize) -> FairnessRatios {
    let mut per_window = Vec::new();
    let (mut sum_i, mut sum_j) = (0.0, 0.0);
    for w in windows {
        if !(w.demanded[i] && w.demanded[j]) || w.consumed[j] <= 0.0 {
            continue;
        }
        per_window.push((w.start, w.consumed[i] / w.consumed[j]));
        sum_i += w.consumed[i];
        sum_j += w.consumed[j];
    }
    FairnessRatios {
        aggregate: (sum_j > 0.0).then(|| sum_i / sum_j),
        per_window,
    }
}

/// A task reduced to what a single-user schedule at step granularity cares about.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SlotJob {
    release: usize,
    /// Last step in which the task may receive its final slice.
    due: usize,
    slots: usize,
    utility: f64,
}

/// Mirrors the engine's discretization for one task running alone at full
/// capacity: released in the first step whose window contains the arrival,
/// needs `slots` whole steps, and its final step must end on time.
fn slot_job(task: &Task, dt: f64, capacity: f64, n_steps: usize) -> Option<SlotJob> {
    let mut release = (task.arrival_time / dt).floor().max(0.0) as usize;
    while release > 0 && task.arrival_time < release as f64 * dt {
        release -= 1;
    }
    while task.arrival_time >= release as f64 * dt + dt {
        release += 1;
    }
    let grant = capacity * dt;
    let mut accumulated = 0.0;
    let mut slots = 1;
    while grant + EPS < task.size - accumulated {
        accumulated += grant;
        slots += 1;
    }
    let last = (task.size - accumulated).max(0.0);
    let finish_offset = (last / capacity).min(dt);
    let mut due = None;
    let mut k = (task.deadline / dt).ceil() as usize + 1;
    loop {
        let clock = k as f64 * dt;
        if clock + finish_offset <= task.deadline && clock < task.deadline {
            due = Some(k);
            break;
        }
        if k == 0 {
            break;
        }
        k -= 1;
    }
    let due = due?.min(n_steps.checked_sub(1)?);
    if due < release || due - release + 1 < slots {
        return None;
    }
    Some(SlotJob {
        release,
        due,
        slots,
        utility: task.value * task.size,
    })
}

/// Earliest-due-date feasibility of a job set on unit slots.
fn edf_feasible(jobs: &[SlotJob]) -> bool {
    if jobs.is_empty() {
        return true;
    }
    let mut left: Vec<usize> = jobs.iter().map(|j| j.slots).collect();
    let start = jobs.iter().map(|j| j.release).min().unwrap();
    let end = jobs.iter().map(|j| j.due).max().unwrap();
    for k in start..=end {
        let pick = (0..jobs.len())
            .filter(|&i| left[i] > 0 && jobs[i].release <= k)
            .min_by_key(|&i| (jobs[i].due, i));
        if let Some(i) = pick {
            if k > jobs[i].due {
                return false;
            }
            left[i] -= 1;
        }
        if (0..jobs.len()).any(|i| left[i] > 0 && jobs[i].due <= k) {
            return false;
        }
    }
    left.iter().all(|&l| l == 0)
}

/// Maximum utility any single-user schedule can earn on `tasks`, with the
/// server handed to one task per step of length `dt`, over `n_steps` steps.
///
/// Enumerates every subset of tasks and keeps the most valuable one that
/// meets all deadlines. Exponential in the task count; meant for small
/// instances (up to about 16 tasks).
pub fn exact_single_user_optimum(tasks: &[Task], dt: f64, capacity: f64, n_steps: usize) -> f64 {
    assert!(tasks.len() <= 20, "exhaustive optimum is limited to 20 tasks");
    let jobs: Vec<SlotJob> = tasks
        .iter()
        .filter_map(|t| slot_job(t, dt, capacity, n_steps))
        .collect();
    let mut best: f64 = 0.0;
    let mut chosen = Vec::with_capacity(jobs.len());
    for mask in 0u32..(1 << jobs.len()) {
        chosen.clear();
        let mut utility = 0.0;
        for (i, job) in jobs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                chosen.push(*job);
                utility += job.utility;
            }
        }
        if utility > best && edf_feasible(&chosen) {
            best = utility;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::engine::{Simulation, TaskStatus};
    use crate::config::SimConfig;
    use crate::workload::ScriptedWorkload;

    fn record_with(aggregate: f64, offered: f64) -> RunRecord {
        let cfg = SimConfig {
            n_users: 1,
            horizon: 1.0,
            ..SimConfig::default()
        };
        let mut rec = Simulation::with_workload(cfg, ScriptedWorkload::new(1, vec![]))
            .unwrap()
            .run_to_end();
        rec.aggregate_utility = aggregate;
        rec.offered_utility = offered;
        rec
    }

    #[test]
    fn mean_utility_examples() {
        assert!((mean_utility_per_host(&record_with(500.0, 500.0), 10, 1000.0) - 0.05).abs() < 1e-15);
        assert_eq!(mean_utility_per_host(&record_with(0.0, 10.0), 10, 1000.0), 0.0);
        assert!((mean_utility_per_host(&record_with(10.0, 10.0), 1, 100.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn efficiency_bounds() {
        assert_eq!(efficiency(&record_with(12.0, 12.0)), 1.0);
        assert_eq!(efficiency(&record_with(0.0, 12.0)), 0.0);
        assert_eq!(efficiency(&record_with(0.0, 0.0)), 0.0);
    }

    #[test]
    fn fairness_skips_idle_windows() {
        let mut a = FairnessWindow::new(0.0, 60.0, 2);
        a.consumed = vec![40.0, 20.0];
        a.demanded = vec![true, true];
        let mut b = FairnessWindow::new(60.0, 60.0, 2);
        b.consumed = vec![60.0, 0.0];
        b.demanded = vec![true, false];
        let r = fairness_ratio(&[a.clone(), b.clone()], 0, 1);
        assert_eq!(r.per_window, vec![(0.0, 2.0)]);
        assert_eq!(r.aggregate, Some(2.0));
        let r = fairness_ratio(&[b], 0, 1);
        assert!(r.per_window.is_empty());
        assert_eq!(r.aggregate, None);
    }

    /// Exhaustive dynamic program over (step, slots still owed per job):
    /// every step may go to any released, unfinished, not-yet-overdue job
    /// or idle.
    fn exhaustive_best(jobs: &[SlotJob], horizon: usize) -> f64 {
        fn go(
            k: usize,
            left: Vec<usize>,
            jobs: &[SlotJob],
            horizon: usize,
            memo: &mut HashMap<(usize, Vec<usize>), f64>,
        ) -> f64 {
            if k == horizon {
                return 0.0;
            }
            if let Some(v) = memo.get(&(k, left.clone())) {
                return *v;
            }
            let mut best = go(k + 1, left.clone(), jobs, horizon, memo);
            for (i, j) in jobs.iter().enumerate() {
                if left[i] > 0 && j.release <= k && k <= j.due {
                    let mut next = left.clone();
                    next[i] -= 1;
                    let gain = if next[i] == 0 { j.utility } else { 0.0 };
                    best = best.max(gain + go(k + 1, next, jobs, horizon, memo));
                }
            }
            memo.insert((k, left), best);
            best
        }
        let left = jobs.iter().map(|j| j.slots).collect();
        go(0, left, jobs, horizon, &mut HashMap::new())
    }

    #[test]
    fn subset_edf_matches_exhaustive_schedule_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let jobs: Vec<SlotJob> = (0..n)
                .map(|_| {
                    let release = rng.random_range(0..6);
                    let slots = rng.random_range(1..4);
                    let due = release + rng.random_range(0..6);
                    SlotJob {
                        release,
                        due,
                        slots,
                        utility: rng.random_range(0.1..1.0),
                    }
                })
                .collect();
            let via_subsets = (0u32..(1 << n))
                .filter_map(|mask| {
                    let chosen: Vec<_> =
                        (0..n).filter(|i| mask & (1 << i) != 0).map(|i| jobs[i]).collect();
                    edf_feasible(&chosen).then(|| chosen.iter().map(|j| j.utility).sum::<f64>())
                })
                .fold(0.0, f64::max);
            let exhaustive = exhaustive_best(&jobs, 14);
            assert!(
                (via_subsets - exhaustive).abs() < 1e-12,
                "{jobs:?}: subsets {via_subsets} vs exhaustive {exhaustive}"
            );
        }
    }

    #[test]
    fn two_conflicting_tasks_only_one_fits() {
        let tasks = vec![
            Task::new(0, 0, 0.0, 10.0, 15.0, 0.4),
            Task::new(1, 0, 0.0, 10.0, 15.0, 0.9),
        ];
        let opt = exact_single_user_optimum(&tasks, 0.1, 1.0, 1000);
        assert!((opt - 9.0).abs() < 1e-12);

        // Efficiency of a run that completes only the lesser task.
        let mut rec = record_with(4.0, 13.0);
        rec.task_log.clear();
        assert!((efficiency_against(&rec, opt) - 4.0 / 9.0).abs() < 1e-12);
        assert!(efficiency_against(&rec, opt) >= efficiency(&rec));
    }

    #[test]
    fn engine_matches_optimum_on_easy_instance() {
        let tasks = vec![
            Task::new(0, 0, 0.0, 5.0, 30.0, 0.3),
            Task::new(0, 0, 2.0, 5.0, 30.0, 0.8),
        ];
        let cfg = SimConfig {
            n_users: 1,
            horizon: 40.0,
            ..SimConfig::default()
        };
        let rec = Simulation::with_workload(cfg.clone(), ScriptedWorkload::new(1, tasks.clone()))
            .unwrap()
            .run_to_end();
        assert!(rec.task_log.iter().all(|o| o.status == TaskStatus::Completed));
        let opt = exact_single_user_optimum(&tasks, cfg.dt, cfg.capacity, cfg.n_steps());
        assert!((rec.aggregate_utility - opt).abs() < 1e-9);
    }
}
