//! User behavior policies. Each step a user picks one task to run and
//! declares a weight (proportional share), a spending rate (market) or a
//! willingness-to-pay (posted price).

use crate::model::{Behavior, Task, UserState};

/// A user's decision for one step. `declared` is zero whenever no task is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub task_id: Option<u64>,
    pub declared: f64,
}

impl Action {
    pub const IDLE: Action = Action {
        task_id: None,
        declared: 0.0,
    };
}

/// Knobs shared by every policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    pub max_weight: f64,
    pub dt: f64,
}

/// The most valuable runnable task; ties go to the earlier deadline, then the lower id.
pub fn select_task(queue: &[Task], now: f64) -> Option<&Task> {
    queue
        .iter()
        .filter(|t| !t.is_complete() && t.deadline > now)
        .min_by(|a, b| {
            b.value
                .total_cmp(&a.value)
                .then_with(|| a.deadline.total_cmp(&b.deadline))
                .then_with(|| a.id.cmp(&b.id))
        })
}

fn act(user: &UserState, now: f64, declare: impl FnOnce(&Task) -> f64) -> Action {
    match select_task(&user.queue, now) {
        Some(task) => Action {
            task_id: Some(task.id),
            declared: declare(task).max(0.0),
        },
        None => Action::IDLE,
    }
}

/// Declares the selected task's true value.
pub fn obedient_action(user: &UserState, now: f64) -> Action {
    act(user, now, |t| t.value)
}

/// Declares the maximum weight for whatever task it runs.
pub fn strategic_max_action(user: &UserState, now: f64, max_weight: f64) -> Action {
    act(user, now, |_| max_weight)
}

/// Spends `balance * value / (deadline - now)` credits per second on the
/// most valuable task, capped so one step never costs more than the balance.
pub fn market_bid_action(user: &UserState, now: f64, dt: f64) -> Action {
    let Some(task) = select_task(&user.queue, now) else {
        return Action::IDLE;
    };
    let remaining = task.deadline - now;
    let rate = if remaining <= 0.0 || user.balance <= 0.0 {
        0.0
    } else {
        (user.balance * task.value / remaining).min(user.balance / dt)
    };
    Action {
        task_id: Some(task.id),
        declared: rate.max(0.0),
    }
}

/// Dispatches on the user's behavior tag.
pub fn decide(user: &UserState, now: f64, params: AgentParams) -> Action {
    match user.behavior {
        Behavior::Obedient => obedient_action(user, now),
        Behavior::StrategicMax => strategic_max_action(user, now, params.max_weight),
        Behavior::MarketStrategic => market_bid_action(user, now, params.dt),
    }
}
