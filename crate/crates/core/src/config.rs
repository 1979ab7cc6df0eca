//! Simulation parameters. Defaults follow the reference workload: 10 users,
//! 1000 s horizon, Gaussian interarrival/size/deadline, uniform values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Behavior;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn field(&self) -> &'static str {
        match self {
            ConfigError::Invalid { field, .. } => field,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Allocation rule run by the server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    ProportionalShare,
    #[serde(rename = "market_ps")]
    MarketPS,
    /// Posted price in credits per resource-unit.
    FixedPrice(f64),
}

impl Mechanism {
    fn rank(&self) -> u8 {
        match self {
            Mechanism::ProportionalShare => 0,
            Mechanism::MarketPS => 1,
            Mechanism::FixedPrice(_) => 2,
        }
    }

    /// Total order used to sort harness output.
    pub fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank()).then_with(|| match (self, other) {
            (Mechanism::FixedPrice(a), Mechanism::FixedPrice(b)) => a.total_cmp(b),
            _ => std::cmp::Ordering::Equal,
        })
    }

    /// Whether balances are tracked (income and charges).
    pub fn has_economy(&self) -> bool {
        !matches!(self, Mechanism::ProportionalShare)
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mechanism::ProportionalShare => f.write_str("ps"),
            Mechanism::MarketPS => f.write_str("market_ps"),
            Mechanism::FixedPrice(p) => write!(f, "fixed_price:{}", crate::harness::fmt_num(*p)),
        }
    }
}

/// A value that is either shared by all users or given per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Copy> PerUser<T> {
    pub fn get(&self, user: usize) -> T {
        match self {
            PerUser::All(v) => *v,
            PerUser::Each(vs) => vs[user],
        }
    }

    fn check_len(&self, n: usize, field: &'static str) -> Result<(), ConfigError> {
        match self {
            PerUser::Each(vs) if vs.len() != n => {
                Err(invalid(field, format!("expected {n} entries, got {}", vs.len())))
            }
            _ => Ok(()),
        }
    }

    fn values(&self) -> Vec<T> {
        match self {
            PerUser::All(v) => vec![*v],
            PerUser::Each(vs) => vs.clone(),
        }
    }
}

/// Full parameterization of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    pub horizon: f64,
    pub dt: f64,
    pub capacity: f64,
    pub mechanism: Mechanism,
    pub behavior: PerUser<Behavior>,
    pub interarrival_mu: f64,
    pub size_mu: f64,
    pub size_sigma: f64,
    pub deadline_mu: f64,
    pub deadline_sigma: f64,
    /// Values are drawn from `(lo, hi]`.
    pub value_range: (f64, f64),
    pub income_rate: PerUser<f64>,
    pub max_weight: f64,
    pub redistribution_tax: f64,
    pub redistribution_interval: f64,
    pub fairness_window: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 10,
            horizon: 1000.0,
            dt: 0.1,
            capacity: 1.0,
            mechanism: Mechanism::ProportionalShare,
            behavior: PerUser::All(Behavior::Obedient),
            interarrival_mu: 120.0,
            size_mu: 10.0,
            size_sigma: 5.0,
            deadline_mu: 75.0,
            deadline_sigma: 37.5,
            value_range: (0.0, 1.0),
            income_rate: PerUser::All(1.0),
            max_weight: 1.0,
            redistribution_tax: 0.0,
            redistribution_interval: 10.0,
            fairness_window: 60.0,
            seed: 1,
        }
    }
}

impl SimConfig {
    /// Interarrival standard deviation, tied to the mean.
    pub fn interarrival_sigma(&self) -> f64 {
        self.interarrival_mu / 2.0
    }

    /// Number of fixed-size steps covering the horizon.
    pub fn n_steps(&self) -> usize {
        if self.horizon <= 0.0 {
            return 0;
        }
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if self.n_users < 1 {
            return Err(invalid("n_users", "must be at least 1"));
        }
        if !finite_pos(self.dt) {
            return Err(invalid("dt", "must be a positive finite number"));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(invalid("horizon", "must be finite and non-negative"));
        }
        if self.horizon > 0.0 && self.horizon < self.dt {
            return Err(invalid("horizon", "must be at least dt"));
        }
        if !finite_pos(self.capacity) {
            return Err(invalid("capacity", "must be positive"));
        }
        if let Mechanism::FixedPrice(p) = self.mechanism {
            if !p.is_finite() || p < 0.0 {
                return Err(invalid("mechanism", "fixed price must be non-negative"));
            }
        }
        self.behavior.check_len(self.n_users, "behavior")?;
        self.income_rate.check_len(self.n_users, "income_rate")?;
        if self.income_rate.values().iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(invalid("income_rate", "must be non-negative"));
        }
        if !finite_pos(self.interarrival_mu) {
            return Err(invalid("interarrival_mu", "must be positive"));
        }
        if !finite_pos(self.size_mu) {
            return Err(invalid("size_mu", "must be positive"));
        }
        if !self.size_sigma.is_finite() || self.size_sigma < 0.0 {
            return Err(invalid("size_sigma", "must be non-negative"));
        }
        if !finite_pos(self.deadline_mu) {
            return Err(invalid("deadline_mu", "must be positive"));
        }
        if !self.deadline_sigma.is_finite() || self.deadline_sigma < 0.0 {
            return Err(invalid("deadline_sigma", "must be non-negative"));
        }
        let (lo, hi) = self.value_range;
        if !(lo >= 0.0 && hi > lo && hi <= 1.0) {
            return Err(invalid("value_range", "need 0 <= lo < hi <= 1"));
        }
        if !finite_pos(self.max_weight) {
            return Err(invalid("max_weight", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.redistribution_tax) {
            return Err(invalid("redistribution_tax", "must lie in [0, 1]"));
        }
        if !finite_pos(self.redistribution_interval) {
            return Err(invalid("redistribution_interval", "must be positive"));
        }
        if !finite_pos(self.fairness_window) {
            return Err(invalid("fairness_window", "must be positive"));
        }
        Ok(())
    }
}
