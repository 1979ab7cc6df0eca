//! Fixed-timestep simulation loop.
//!
//! Each step runs, in order:
//!
//! ```text
//! 1. enqueue tasks arriving in [clock, clock + dt)
//! 2. drop tasks whose deadline <= clock (counted expired, zero utility)
//! 3. every user picks a task and declares a weight or bid
//! 4. the mechanism turns declarations into shares
//! 5. running tasks accrue share * capacity * dt, capped at what they still need
//! 6. finished tasks are credited via task_utility
//! 7. income and charges (market and posted-price modes only)
//! 8. credit redistribution, when the interval elapses
//! 9. per-window usage is recorded
//! ```
//!
//! The clock is `step_index * dt`, so it never drifts.

use serde::{Deserialize, Serialize};

use crate::agents::{decide, AgentParams};
use crate::config::{ConfigError, Mechanism, SimConfig};
use crate::mechanisms::{
    charge_and_income, clamp_bids, fixed_price_allocate, market_allocate,
    proportional_share_allocate, redistribute,
};
use crate::metrics::FairnessWindow;
use crate::model::{task_utility, AllocationVector, Task, UserState, EPS};
use crate::workload::{GeneratedWorkload, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Finished by its deadline.
    Completed,
    /// Deadline passed first, or the task finished late.
    Expired,
    /// Still queued at the horizon.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: Task,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub utility: f64,
    pub resources: f64,
    pub spend: f64,
    pub income: f64,
    pub initial_balance: f64,
    pub final_balance: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_users: usize,
    pub horizon: f64,
    pub dt: f64,
    pub capacity: f64,
    pub steps: usize,
    pub users: Vec<UserSummary>,
    pub tasks_arrived: usize,
    pub tasks_completed: usize,
    pub tasks_expired: usize,
    pub tasks_pending: usize,
    /// Σ value·size over on-time completions.
    pub aggregate_utility: f64,
    /// Σ value·size over every arrived task.
    pub offered_utility: f64,
    pub total_delivered: f64,
    pub total_charges: f64,
    pub total_income: f64,
    pub windows: Vec<FairnessWindow>,
    pub task_log: Vec<TaskOutcome>,
}

impl RunRecord {
    fn empty(cfg: &SimConfig) -> Self {
        Self {
            n_users: cfg.n_users,
            horizon: cfg.horizon,
            dt: cfg.dt,
            capacity: cfg.capacity,
            steps: 0,
            users: Vec::new(),
            tasks_arrived: 0,
            tasks_completed: 0,
            tasks_expired: 0,
            tasks_pending: 0,
            aggregate_utility: 0.0,
            offered_utility: 0.0,
            total_delivered: 0.0,
            total_charges: 0.0,
            total_income: 0.0,
            windows: Vec::new(),
            task_log: Vec::new(),
        }
    }

    pub fn balance_sum(&self) -> f64 {
        self.users.iter().map(|u| u.final_balance).sum()
    }

    pub fn initial_balance_sum(&self) -> f64 {
        self.users.iter().map(|u| u.initial_balance).sum()
    }

    /// Utility recomputed from the task log.
    pub fn utility_from_log(&self) -> f64 {
        self.task_log
            .iter()
            .map(|o| task_utility(&o.task, o.task.completed_at))
            .sum()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub clock: f64,
    pub allocation: AllocationVector,
    pub delivered: f64,
    /// Capacity granted but not usable because a task needed less.
    pub forfeited: f64,
    pub completions: usize,
    pub expirations: usize,
    /// Credits charged and paid out as income during the step.
    pub charges: f64,
    pub income: f64,
}

/// Live simulation state.
pub struct Simulation {
    cfg: SimConfig,
    users: Vec<UserState>,
    workload: Box<dyn Workload + Send>,
    record: RunRecord,
    initial_balances: Vec<f64>,
    step_index: usize,
    next_task_id: u64,
    steps_per_window: usize,
    steps_per_redistribution: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("clock", &self.clock())
            .field("users", &self.users)
            .finish_non_exhaustive()
    }
}

fn steps_in(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

impl Simulation {
    /// Builds a simulation driven by the configured Gaussian workload.
    pub fn new(cfg: SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let workload = GeneratedWorkload::new(&cfg);
        Ok(Self::build(cfg, Box::new(workload)))
    }

    /// Builds a simulation with a caller-provided arrival source.
    pub fn with_workload(
        cfg: SimConfig,
        workload: impl Workload + Send + 'static,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self::build(cfg, Box::new(workload)))
    }

    fn build(cfg: SimConfig, workload: Box<dyn Workload + Send>) -> Self {
        let users = (0..cfg.n_users)
            .map(|i| UserState::new(i, cfg.behavior.get(i), cfg.income_rate.get(i)))
            .collect();
        let record = RunRecord::empty(&cfg);
        let initial_balances = vec![0.0; cfg.n_users];
        Self {
            initial_balances,
            steps_per_window: steps_in(cfg.fairness_window, cfg.dt),
            steps_per_redistribution: steps_in(cfg.redistribution_interval, cfg.dt),
            cfg,
            users,
            workload,
            record,
            step_index: 0,
            next_task_id: 0,
        }
    }

    /// Overrides starting balances. Must be called before the first step.
    pub fn set_initial_balances(&mut self, balances: &[f64]) {
        assert_eq!(self.step_index, 0, "balances can only be seeded before the run starts");
        for (u, &b) in self.users.iter_mut().zip(balances) {
            assert!(b >= 0.0, "balances must be non-negative");
            u.balance = b;
        }
        self.initial_balances = self.users.iter().map(|u| u.balance).collect();
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn clock(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn steps_taken(&self) -> usize {
        self.step_index
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.cfg.n_steps()
    }

    fn log(&mut self, task: Task, status: TaskStatus) {
        match status {
            TaskStatus::Completed => self.record.tasks_completed += 1,
            TaskStatus::Expired => self.record.tasks_expired += 1,
            TaskStatus::Pending => self.record.tasks_pending += 1,
        }
        self.record.task_log.push(TaskOutcome { task, status });
    }

    /// Advances the clock by one `dt`.
    pub fn step(&mut self) -> StepReport {
        let dt = self.cfg.dt;
        let cap = self.cfg.capacity;
        let clock = self.clock();
        let end = clock + dt;
        let n = self.users.len();

        // 1. arrivals
        for u in 0..n {
            let arrived = self.workload.arrivals_before(u, end, &mut self.next_task_id);
            for t in arrived {
                self.record.tasks_arrived += 1;
                self.record.offered_utility += t.value * t.size;
                self.users[u].queue.push(t);
            }
        }

        // 2. expiry
        let mut expirations = 0;
        for u in 0..n {
            let (dead, live): (Vec<Task>, Vec<Task>) = std::mem::take(&mut self.users[u].queue)
                .into_iter()
                .partition(|t| t.deadline <= clock);
            self.users[u].queue = live;
            expirations += dead.len();
            for t in dead {
                self.log(t, TaskStatus::Expired);
            }
        }

        // 3. decisions
        let params = AgentParams {
            max_weight: self.cfg.max_weight,
            dt,
        };
        let actions: Vec<_> = self.users.iter().map(|u| decide(u, clock, params)).collect();
        let declared: Vec<f64> = actions.iter().map(|a| a.declared).collect();

        // 4. allocation
        let (allocation, spend_rates) = match self.cfg.mechanism {
            Mechanism::ProportionalShare => (proportional_share_allocate(&declared), vec![0.0; n]),
            Mechanism::MarketPS => {
                let bids = clamp_bids(&self.users, &declared, dt);
                (market_allocate(&bids), bids)
            }
            Mechanism::FixedPrice(price) => {
                let cost = price * cap * dt;
                let willingness: Vec<f64> = declared
                    .iter()
                    .zip(&self.users)
                    .map(|(&w, u)| if u.balance + EPS >= cost { w } else { 0.0 })
                    .collect();
                let outcome = fixed_price_allocate(price, &willingness, cap);
                let mut rates = vec![0.0; n];
                if let Some(w) = outcome.winner {
                    rates[w] = outcome.charge_rate;
                }
                (outcome.allocation(n), rates)
            }
        };

        // 5-6. accrual and completion
        let mut delivered = 0.0;
        let mut forfeited = 0.0;
        let mut completions = 0;
        for (u, action) in actions.iter().enumerate() {
            let share = allocation.shares[u];
            let Some(task_id) = action.task_id else { continue };
            if share <= 0.0 {
                continue;
            }
            let rate = share * cap;
            let grant = rate * dt;
            let idx = self.users[u]
                .queue
                .iter()
                .position(|t| t.id == task_id)
                .expect("selected task is queued");
            let need = self.users[u].queue[idx].remaining();
            if grant + EPS >= need {
                let mut task = self.users[u].queue.remove(idx);
                task.accumulated = task.size;
                task.completed_at = Some(clock + (need / rate).min(dt));
                delivered += need;
                forfeited += (grant - need).max(0.0);
                self.record_window(clock, u, need);
                let gained = task_utility(&task, task.completed_at);
                let status = if gained > 0.0 {
                    TaskStatus::Completed
                } else {
                    TaskStatus::Expired
                };
                let user = &mut self.users[u];
                user.cumulative_resources += need;
                user.cumulative_utility += gained;
                self.record.aggregate_utility += gained;
                completions += 1;
                self.log(task, status);
            } else {
                self.users[u].queue[idx].accumulated += grant;
                self.users[u].cumulative_resources += grant;
                delivered += grant;
                self.record_window(clock, u, grant);
            }
        }
        self.record.total_delivered += delivered;

        // 7. economy
        let (mut charges, mut income) = (0.0, 0.0);
        if self.cfg.mechanism.has_economy() {
            charges = charge_and_income(&mut self.users, &spend_rates, dt).iter().sum::<f64>();
            income = self.users.iter().map(|u| u.income_rate * dt).sum::<f64>();
            self.record.total_charges += charges;
            self.record.total_income += income;
        }

        // 8. redistribution
        let tax = self.cfg.redistribution_tax;
        if tax > 0.0
            && self.cfg.mechanism.has_economy()
            && (self.step_index + 1).is_multiple_of(self.steps_per_redistribution)
        {
            let balances: Vec<f64> = self.users.iter().map(|u| u.balance).collect();
            for (u, b) in self.users.iter_mut().zip(redistribute(&balances, tax)) {
                u.balance = b;
            }
        }

        // 9. demand bookkeeping for fairness windows
        for (u, a) in actions.iter().enumerate() {
            if a.task_id.is_some() {
                self.window_mut(clock).demanded[u] = true;
            }
        }

        self.step_index += 1;
        self.record.steps = self.step_index;
        StepReport {
            clock,
            allocation,
            delivered,
            forfeited,
            completions,
            expirations,
            charges,
            income,
        }
    }

    fn window_mut(&mut self, clock: f64) -> &mut FairnessWindow {
        let idx = self.step_index / self.steps_per_window;
        let n = self.users.len();
        let len = self.steps_per_window as f64 * self.cfg.dt;
        while self.record.windows.len() <= idx {
            let start = self.record.windows.len() as f64 * len;
            self.record.windows.push(FairnessWindow::new(start, len, n));
        }
        debug_assert!(clock >= self.record.windows[idx].start - EPS);
        &mut self.record.windows[idx]
    }

    fn record_window(&mut self, clock: f64, user: usize, amount: f64) {
        self.window_mut(clock).consumed[user] += amount;
    }

    /// Runs the remaining steps and returns the completed record.
    pub fn run_to_end(mut self) -> RunRecord {
        while !self.is_finished() {
            self.step();
        }
        self.finish()
    }

    /// Closes the record at the current clock; queued tasks are logged as pending.
    pub fn finish(mut self) -> RunRecord {
        let users = std::mem::take(&mut self.users);
        for u in &users {
            for t in &u.queue {
                self.log(t.clone(), TaskStatus::Pending);
            }
        }
        self.record.users = users
            .iter()
            .zip(&self.initial_balances)
            .map(|(u, &initial_balance)| UserSummary {
                utility: u.cumulative_utility,
                resources: u.cumulative_resources,
                spend: u.cumulative_spend,
                income: u.cumulative_income,
                initial_balance,
                final_balance: u.balance,
            })
            .collect();
        self.record
    }
}

/// Executes a full run from a validated configuration.
pub fn run(cfg: &SimConfig) -> Result<RunRecord, ConfigError> {
    Ok(Simulation::new(cfg.clone())?.run_to_end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Behavior;
    use crate::workload::ScriptedWorkload;

    fn single_user_cfg() -> SimConfig {
        SimConfig {
            n_users: 1,
            horizon: 20.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn lone_task_finishes_after_its_size() {
        let w = ScriptedWorkload::new(1, vec![Task::new(0, 0, 0.0, 10.0, 100.0, 0.5)]);
        let rec = Simulation::with_workload(single_user_cfg(), w).unwrap().run_to_end();
        assert_eq!(rec.tasks_completed, 1);
        let done = rec.task_log[0].task.completed_at.unwrap();
        assert!((done - 10.0).abs() <= 0.1 + 1e-9, "completed at {done}");
        assert!((rec.aggregate_utility - 5.0).abs() < 1e-12);
    }

    #[test]
    fn no_users_no_activity() {
        let cfg = SimConfig {
            n_users: 0,
            ..single_user_cfg()
        };
        let mut sim = Simulation::build(cfg, Box::new(ScriptedWorkload::new(0, vec![])));
        let report = sim.step();
        assert!(report.allocation.is_empty());
        let rec = sim.finish();
        assert_eq!(rec.tasks_arrived, 0);
        assert_eq!(rec.aggregate_utility, 0.0);
        assert_eq!(rec.total_delivered, 0.0);
    }

    #[test]
    fn zero_horizon_runs_no_steps() {
        let cfg = SimConfig {
            horizon: 0.0,
            ..SimConfig::default()
        };
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.steps, 0);
        assert_eq!(rec.tasks_arrived, 0);
        assert_eq!(rec.aggregate_utility, 0.0);
    }

    #[test]
    fn deadline_miss_is_counted_expired() {
        let w = ScriptedWorkload::new(1, vec![Task::new(0, 0, 0.0, 10.0, 5.0, 0.5)]);
        let rec = Simulation::with_workload(single_user_cfg(), w).unwrap().run_to_end();
        assert_eq!(rec.tasks_expired, 1);
        assert_eq!(rec.tasks_completed, 0);
        assert_eq!(rec.aggregate_utility, 0.0);
    }

    #[test]
    fn completion_within_the_deadline_step_counts() {
        // Needs exactly 10 s; deadline 10.05 falls inside the last step.
        let w = ScriptedWorkload::new(1, vec![Task::new(0, 0, 0.0, 10.0, 10.05, 1.0)]);
        let rec = Simulation::with_workload(single_user_cfg(), w).unwrap().run_to_end();
        assert_eq!(rec.tasks_completed, 1);
        assert!((rec.aggregate_utility - 10.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig {
            capacity: -1.0,
            ..SimConfig::default()
        };
        assert_eq!(run(&cfg).unwrap_err().field(), "capacity");
    }

    #[test]
    fn market_users_start_broke_and_earn() {
        let cfg = SimConfig {
            n_users: 1,
            horizon: 1.0,
            mechanism: Mechanism::MarketPS,
            behavior: crate::config::PerUser::All(Behavior::MarketStrategic),
            ..SimConfig::default()
        };
        let rec = Simulation::with_workload(cfg, ScriptedWorkload::new(1, vec![]))
            .unwrap()
            .run_to_end();
        assert!((rec.users[0].final_balance - 1.0).abs() < 1e-12);
        assert_eq!(rec.total_charges, 0.0);
    }
}
