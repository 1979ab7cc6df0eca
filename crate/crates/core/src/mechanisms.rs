//! Allocation rules and the credit economy.
//!
//! Every function here is pure: it maps per-user weights or bids for one
//! timestep to shares, or balances to balances. Ties resolve to the lowest
//! user index.

use crate::model::{AllocationVector, UserState};

/// Per-user declared weight, spending rate or willingness-to-pay. Entries are `>= 0`.
pub type BidVector = [f64];

fn proportional(weights: &BidVector) -> AllocationVector {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if total <= 0.0 {
        return AllocationVector::idle(weights.len());
    }
    AllocationVector {
        shares: weights
            .iter()
            .map(|&w| if w > 0.0 { w / total } else { 0.0 })
            .collect(),
    }
}

/// Grants user `i` the fraction `w_i / Σw`; an all-zero input leaves the server idle.
pub fn proportional_share_allocate(weights: &BidVector) -> AllocationVector {
    proportional(weights)
}

/// Market proportional share: the share is proportional to the user's own
/// spending rate, `b_i / Σb`.
pub fn market_allocate(bids: &BidVector) -> AllocationVector {
    proportional(bids)
}

/// Largest spending rate a user can sustain for one step without going negative.
pub fn affordable_rate(balance: f64, dt: f64) -> f64 {
    (balance / dt).max(0.0)
}

/// Clamps each requested rate into `[0, balance / dt]`.
pub fn clamp_bids(users: &[UserState], requested: &BidVector, dt: f64) -> Vec<f64> {
    users
        .iter()
        .zip(requested)
        .map(|(u, &r)| r.max(0.0).min(affordable_rate(u.balance, dt)))
        .collect()
}

/// Applies one step of income and spending.
///
/// `spend_rates` are credits per second actually charged this step; callers
/// pass zero for users without a running task. Rates above `balance / dt`
/// are clamped so balances stay non-negative. Returns the credits charged
/// per user.
pub fn charge_and_income(users: &mut [UserState], spend_rates: &BidVector, dt: f64) -> Vec<f64> {
    users
        .iter_mut()
        .zip(spend_rates)
        .map(|(user, &rate)| {
            let rate = rate.max(0.0).min(affordable_rate(user.balance, dt));
            let charge = (rate * dt).min(user.balance);
            let income = user.income_rate * dt;
            user.balance = (user.balance - charge) + income;
            user.cumulative_spend += charge;
            user.cumulative_income += income;
            charge
        })
        .collect()
}

/// Result of one posted-price round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPriceOutcome {
    pub winner: Option<usize>,
    /// Credits per second the winner pays while allocated.
    pub charge_rate: f64,
}

/// Sells the whole server at a posted price to the buyer willing to pay the most.
///
/// Only users with positive willingness that is at least `price` are
/// eligible. The winner receives share 1 and pays `price * capacity` per
/// second; with no eligible buyer the resource idles.
pub fn fixed_price_allocate(price: f64, willingness: &BidVector, capacity: f64) -> FixedPriceOutcome {
    let mut winner: Option<usize> = None;
    for (i, &w) in willingness.iter().enumerate() {
        if w <= 0.0 || w < price {
            continue;
        }
        match winner {
            Some(best) if willingness[best] >= w => {}
            _ => winner = Some(i),
        }
    }
    FixedPriceOutcome {
        winner,
        charge_rate: if winner.is_some() { price * capacity } else { 0.0 },
    }
}

impl FixedPriceOutcome {
    pub fn allocation(&self, n: usize) -> AllocationVector {
        let mut a = AllocationVector::idle(n);
        if let Some(w) = self.winner {
            a.shares[w] = 1.0;
        }
        a
    }
}

/// Moves every balance a fraction `tax` of the way toward the mean.
///
/// The transfer is computed so the total is preserved: the amount taken
/// from users above the mean is exactly the amount handed to those below.
pub fn redistribute(balances: &[f64], tax: f64) -> Vec<f64> {
    let n = balances.len();
    if n == 0 || tax == 0.0 {
        return balances.to_vec();
    }
    let total: f64 = balances.iter().sum();
    let mean = total / n as f64;
    let mut out: Vec<f64> = balances.iter().map(|&b| b + tax * (mean - b)).collect();
    // Absorb rounding residue in the largest balance.
    let residue = total - out.iter().sum::<f64>();
    if residue != 0.0 {
        let idx = out
            .iter()
            .enumerate()
            .fold(0, |best, (i, &b)| if b > out[best] { i } else { best });
        out[idx] += residue;
    }
    out
}
