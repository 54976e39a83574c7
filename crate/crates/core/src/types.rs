//! Shared domain types: stake amounts, validators, checkpoints and votes.
//!
//! Everything on the protocol path is exact integer arithmetic. Threshold
//! checks cross-multiply in `u128` so that a one-unit margin around 1/3 or
//! 2/3 of the stake is always decided correctly.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest indivisible unit of stake.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct StakeAmount(pub u64);

impl StakeAmount {
    pub const ZERO: StakeAmount = StakeAmount(0);

    pub fn units(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_sub(self, rhs: StakeAmount) -> Option<StakeAmount> {
        self.0.checked_sub(rhs.0).map(StakeAmount)
    }

    pub fn saturating_sub(self, rhs: StakeAmount) -> StakeAmount {
        StakeAmount(self.0.saturating_sub(rhs.0))
    }
}

impl Add for StakeAmount {
    type Output = StakeAmount;
    fn add(self, rhs: StakeAmount) -> StakeAmount {
        StakeAmount(self.0.checked_add(rhs.0).expect("stake overflow"))
    }
}

impl AddAssign for StakeAmount {
    fn add_assign(&mut self, rhs: StakeAmount) {
        *self = *self + rhs;
    }
}

impl Sub for StakeAmount {
    type Output = StakeAmount;
    fn sub(self, rhs: StakeAmount) -> StakeAmount {
        StakeAmount(self.0.checked_sub(rhs.0).expect("stake underflow"))
    }
}

impl SubAssign for StakeAmount {
    fn sub_assign(&mut self, rhs: StakeAmount) {
        *self = *self - rhs;
    }
}

impl std::iter::Sum for StakeAmount {
    fn sum<I: Iterator<Item = StakeAmount>>(iter: I) -> StakeAmount {
        iter.fold(StakeAmount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for StakeAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StakeError {
    #[error("stake fraction requires a non-zero total")]
    ZeroTotal,
    #[error("part {part} exceeds total {total}")]
    PartExceedsTotal { part: u64, total: u64 },
}

/// `part / total` as an exact, reduced rational.
pub fn stake_fraction(part: StakeAmount, total: StakeAmount) -> Result<Ratio<u64>, StakeError> {
    if total.is_zero() {
        return Err(StakeError::ZeroTotal);
    }
    if part > total {
        return Err(StakeError::PartExceedsTotal {
            part: part.0,
            total: total.0,
        });
    }
    Ok(Ratio::new(part.0, total.0))
}

/// Fraction of stake a tally must reach, compared inclusively:
/// `part * denom >= total * numer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub numer: u64,
    pub denom: u64,
}

impl Threshold {
    pub const TWO_THIRDS: Threshold = Threshold { numer: 2, denom: 3 };

    pub fn is_met(self, part: StakeAmount, total: StakeAmount) -> bool {
        // An empty denominator never finalizes anything.
        if total.is_zero() {
            return false;
        }
        part.0 as u128 * self.denom as u128 >= total.0 as u128 * self.numer as u128
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::TWO_THIRDS
    }
}

/// `3 * part >= 2 * total`.
pub fn meets_two_thirds(part: StakeAmount, total: StakeAmount) -> bool {
    Threshold::TWO_THIRDS.is_met(part, total)
}

/// `3 * part > total`.
pub fn exceeds_one_third(part: StakeAmount, total: StakeAmount) -> bool {
    part.0 as u128 * 3 > total.0 as u128
}

/// `3 * part >= total`.
pub fn at_least_one_third(part: StakeAmount, total: StakeAmount) -> bool {
    part.0 as u128 * 3 >= total.0 as u128
}

/// Simulated time; one tick is one second.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn after(self, ticks: u64) -> SimTime {
        SimTime(self.0.saturating_add(ticks))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Index into a latency model's region list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointId(pub u64);

impl CheckpointId {
    pub const GENESIS: CheckpointId = CheckpointId(0);
}

impl fmt::Display for CheckpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cp{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ValidatorStatus {
    Active,
    Exiting { withdrawable_at: SimTime },
    Withdrawn,
    Slashed,
}

impl ValidatorStatus {
    /// Active and exiting deposits are both exposed to slashing and both vote.
    pub fn is_slashable(self) -> bool {
        matches!(
            self,
            ValidatorStatus::Active | ValidatorStatus::Exiting { .. }
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            ValidatorStatus::Active => "active",
            ValidatorStatus::Exiting { .. } => "exiting",
            ValidatorStatus::Withdrawn => "withdrawn",
            ValidatorStatus::Slashed => "slashed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorState {
    pub id: ValidatorId,
    pub region: RegionId,
    pub deposit: StakeAmount,
    pub status: ValidatorStatus,
    /// Scenario metadata only. Protocol logic never reads it.
    pub honest: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: CheckpointId,
    pub height: u64,
    pub parent: Option<CheckpointId>,
}

impl Checkpoint {
    pub fn genesis() -> Checkpoint {
        Checkpoint {
            id: CheckpointId::GENESIS,
            height: 0,
            parent: None,
        }
    }

    pub fn child_of(parent: &Checkpoint, id: CheckpointId) -> Checkpoint {
        Checkpoint {
            id,
            height: parent.height + 1,
            parent: Some(parent.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub voter: ValidatorId,
    pub target: CheckpointId,
    pub round: u32,
    /// Voter's deposit when the vote was cast.
    pub weight: StakeAmount,
}
