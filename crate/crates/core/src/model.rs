//! Domain types shared by the allocation rules, the agents and the engine.

use serde::{Deserialize, Serialize};

/// Tolerance used when comparing share sums and accumulated work.
pub const EPS: f64 = 1e-9;

/// A unit of CPU-bound work.
///
/// `size` is measured in resource-units (CPU-seconds of a unit-capacity
/// server). `deadline` is absolute simulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub owner: usize,
    pub arrival_time: f64,
    pub size: f64,
    pub deadline: f64,
    pub value: f64,
    pub accumulated: f64,
    pub completed_at: Option<f64>,
}

impl Task {
    pub fn new(id: u64, owner: usize, arrival_time: f64, size: f64, deadline: f64, value: f64) -> Self {
        Self {
            id,
            owner,
            arrival_time,
            size,
            deadline,
            value,
            accumulated: 0.0,
            completed_at: None,
        }
    }

    pub fn remaining(&self) -> f64 {
        (self.size - self.accumulated).max(0.0)
    }

    pub fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }

    /// Checks the structural invariants of a task.
    pub fn is_well_formed(&self) -> bool {
        let basic = self.size > 0.0
            && self.value > 0.0
            && self.value <= 1.0
            && self.deadline > self.arrival_time
            && self.accumulated >= 0.0
            && self.accumulated <= self.size;
        let completion = match self.completed_at {
            Some(t) => self.accumulated == self.size && t >= self.arrival_time,
            None => self.accumulated < self.size,
        };
        basic && completion
    }

    /// Utility this task yields if it completed at `completed_at`.
    pub fn utility(&self) -> f64 {
        task_utility(self, self.completed_at)
    }
}

/// `value * size` if the task finished by its deadline (inclusive), zero otherwise.
pub fn task_utility(task: &Task, completion_time: Option<f64>) -> f64 {
    match completion_time {
        Some(t) if t <= task.deadline => task.value * task.size,
        _ => 0.0,
    }
}

/// How a user declares weights or bids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Weight equals the selected task's value.
    Obedient,
    /// Always declares the maximum weight.
    StrategicMax,
    /// Spends `balance * value / (deadline - now)` credits per second.
    MarketStrategic,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Obedient => "obedient",
            Behavior::StrategicMax => "strategic_max",
            Behavior::MarketStrategic => "market_strategic",
        }
    }
}

impl std::fmt::Display for Behavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One user's queue, wallet and policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: usize,
    pub balance: f64,
    pub income_rate: f64,
    pub queue: Vec<Task>,
    pub behavior: Behavior,
    pub cumulative_utility: f64,
    pub cumulative_resources: f64,
    pub cumulative_spend: f64,
    pub cumulative_income: f64,
}

impl UserState {
    pub fn new(id: usize, behavior: Behavior, income_rate: f64) -> Self {
        Self {
            id,
            balance: 0.0,
            income_rate,
            queue: Vec::new(),
            behavior,
            cumulative_utility: 0.0,
            cumulative_resources: 0.0,
            cumulative_spend: 0.0,
            cumulative_income: 0.0,
        }
    }

    pub fn with_balance(mut self, balance: f64) -> Self {
        self.balance = balance;
        self
    }
}

/// Per-user fractions of server capacity for one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    pub shares: Vec<f64>,
}

impl AllocationVector {
    pub fn idle(n: usize) -> Self {
        Self { shares: vec![0.0; n] }
    }

    pub fn total(&self) -> f64 {
        self.shares.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

impl std::ops::Index<usize> for AllocationVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.shares[i]
    }
}
