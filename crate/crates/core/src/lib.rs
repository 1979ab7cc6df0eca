//! Deterministic simulator of market-based CPU allocation.
//!
//! A single server is shared by users who each run one task at a time.
//! The server divides its capacity by proportional share (declared
//! weights), by a market (credit spending rates, with a fixed income per
//! user), or by a posted price. Users are obedient (weight = task value),
//! strategic (always the maximum weight) or market-strategic (budget their
//! credits across the task's remaining lifetime).
//!
//! ```
//! use market_sim::{run, SimConfig, metrics::mean_utility_per_host};
//!
//! let cfg = SimConfig { horizon: 100.0, ..SimConfig::default() };
//! let record = run(&cfg).unwrap();
//! assert!(mean_utility_per_host(&record, cfg.n_users, cfg.horizon) >= 0.0);
//! ```

pub mod agents;
pub mod config;
pub mod engine;
pub mod harness;
pub mod mechanisms;
pub mod metrics;
pub mod model;
pub mod workload;

pub use config::{ConfigError, Mechanism, PerUser, SimConfig};
pub use engine::{run, RunRecord, Simulation};
pub use model::{task_utility, AllocationVector, Behavior, Task, UserState};
