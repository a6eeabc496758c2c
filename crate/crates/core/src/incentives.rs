//! Loan interest pricing and its per-block payment schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Block, Tokens};

#[derive(Debug, Error, PartialEq)]
pub enum InterestError {
    #[error("parameter {name} = {value} out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("loan duration must be at least one block")]
    ZeroDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestParams {
    /// Loan amount in tokens.
    pub loan_amount: f64,
    /// Exponent applied to the loan amount, in (0, 1].
    pub loaned_percentage_rate: f64,
    pub loan_duration_days: f64,
    /// Annual rate as a fraction (0.05 = 5%).
    pub annual_percentage_rate: f64,
    pub lender_reputation: f64,
    /// Reputation at which the sigmoid factor is one half.
    pub midpoint: f64,
    pub steepness: f64,
}

impl InterestParams {
    /// The reference parameter set: 500 tokens, exponent 0.75, 100 days,
    /// 5% APR, reputation and midpoint 0.5, steepness 20.
    pub fn reference() -> Self {
        InterestParams {
            loan_amount: 500.0,
            loaned_percentage_rate: 0.75,
            loan_duration_days: 100.0,
            annual_percentage_rate: 0.05,
            lender_reputation: 0.5,
            midpoint: 0.5,
            steepness: 20.0,
        }
    }

    pub fn validate(&self) -> Result<(), InterestError> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(InterestError::OutOfRange { name, value })
            }
        };
        check("loan_amount", self.loan_amount, self.loan_amount >= 0.0)?;
        check(
            "loaned_percentage_rate",
            self.loaned_percentage_rate,
            self.loaned_percentage_rate > 0.0 && self.loaned_percentage_rate <= 1.0,
        )?;
        check("loan_duration_days", self.loan_duration_days, self.loan_duration_days >= 0.0)?;
        check("annual_percentage_rate", self.annual_percentage_rate, self.annual_percentage_rate >= 0.0)?;
        check("lender_reputation", self.lender_reputation, (0.0..=1.0).contains(&self.lender_reputation))?;
        check("midpoint", self.midpoint, (0.0..=1.0).contains(&self.midpoint))?;
        check("steepness", self.steepness, self.steepness > 0.0)?;
        Ok(())
    }

    /// Logistic weight of the lender's reputation, strictly inside (0, 1).
    pub fn reputation_factor(&self) -> f64 {
        1.0 / (1.0 + (-self.steepness * (self.lender_reputation - self.midpoint)).exp())
    }
}

/// `max(0, amount^rate * sigmoid(R) + days/365 * apr)`.
pub fn total_interest(p: &InterestParams) -> Result<f64, InterestError> {
    p.validate()?;
    let amount_term = p.loan_amount.powf(p.loaned_percentage_rate) * p.reputation_factor();
    let time_term = p.loan_duration_days / 365.0 * p.annual_percentage_rate;
    Ok((amount_term + time_term).max(0.0))
}

pub fn round_half_up(x: f64) -> Tokens {
    (x + 0.5).floor().max(0.0) as Tokens
}

/// Per-block interest installments for a loan of `duration` blocks.
///
/// Every block pays `per_block` until the rounded total is reached; the last
/// block pays whatever is left, so the installments always sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestSchedule {
    pub total: Tokens,
    pub per_block: Tokens,
    pub duration: Block,
}

impl InterestSchedule {
    pub fn new(total_interest: f64, duration: Block) -> Result<Self, InterestError> {
        if duration == 0 {
            return Err(InterestError::ZeroDuration);
        }
        if !(total_interest >= 0.0 && total_interest.is_finite()) {
            return Err(InterestError::OutOfRange { name: "total_interest", value: total_interest });
        }
        Ok(InterestSchedule {
            total: round_half_up(total_interest),
            per_block: round_half_up(total_interest / duration as f64),
            duration,
        })
    }

    /// Schedule for an interest amount already expressed in tokens.
    pub fn for_tokens(total: Tokens, duration: Block) -> Result<Self, InterestError> {
        Self::new(total as f64, duration)
    }

    /// Amount due on the `k`-th block of the loan, `k` in `0..duration`.
    pub fn installment(&self, k: Block) -> Tokens {
        if k >= self.duration {
            return 0;
        }
        let paid_before = self.per_block.saturating_mul(k).min(self.total);
        if k + 1 == self.duration {
            self.total - paid_before
        } else {
            self.per_block.min(self.total - paid_before)
        }
    }

    /// Interest still owed once `k` installments have been paid.
    pub fn remaining_after(&self, k: Block) -> Tokens {
        if k >= self.duration {
            0
        } else {
            self.total - self.per_block.saturating_mul(k).min(self.total)
        }
    }

    pub fn installments(&self) -> impl Iterator<Item = Tokens> + '_ {
        (0..self.duration).map(|k| self.installment(k))
    }
}

/// Rounded per-block payment for the given parameters.
pub fn per_block_interest(p: &InterestParams, duration_blocks: Block) -> Result<InterestSchedule, InterestError> {
    let total = total_interest(p)?;
    InterestSchedule::new(total, duration_blocks)
}

/// Ledger-side pricing: maps a loan's amount, duration and lender reputation
/// onto the interest parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestPolicy {
    pub loaned_percentage_rate: f64,
    pub annual_percentage_rate: f64,
    pub midpoint: f64,
    pub steepness: f64,
    /// Converts agreement durations (blocks) into days. 7200 = 12 s blocks.
    pub blocks_per_day: u64,
}

impl Default for InterestPolicy {
    fn default() -> Self {
        InterestPolicy {
            loaned_percentage_rate: 0.75,
            annual_percentage_rate: 0.05,
            midpoint: 0.5,
            steepness: 20.0,
            blocks_per_day: 7200,
        }
    }
}

impl InterestPolicy {
    pub fn params(&self, amount: Tokens, duration: Block, lender_reputation: f64) -> InterestParams {
        InterestParams {
            loan_amount: amount as f64,
            loaned_percentage_rate: self.loaned_percentage_rate,
            loan_duration_days: duration as f64 / self.blocks_per_day.max(1) as f64,
            annual_percentage_rate: self.annual_percentage_rate,
            lender_reputation: lender_reputation.clamp(0.0, 1.0),
            midpoint: self.midpoint,
            steepness: self.steepness,
        }
    }

    pub fn schedule(&self, amount: Tokens, duration: Block, lender_reputation: f64) -> Result<InterestSchedule, InterestError> {
        per_block_interest(&self.params(amount, duration, lender_reputation), duration)
    }
}
