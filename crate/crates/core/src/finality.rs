//! Checkpoint finality: stake-weighted vote tallies, the 2/3 rule, double-vote
//! evidence, the deposit lifecycle and detection of conflicting finalizations.
//!
//! Finalization is one-step: a checkpoint whose tally in any round reaches the
//! threshold of the slashable stake becomes final together with every
//! ancestor that was not final yet. There is no justify/finalize pipeline.
//!
//! One `FinalityState` models one observer's view of the chain. Simulations
//! keep one instance per region and advance them independently.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    Checkpoint, CheckpointId, RegionId, SimTime, StakeAmount, Threshold, ValidatorId,
    ValidatorState, ValidatorStatus, Vote,
};

/// Four 30-day months in seconds.
pub const DEFAULT_WITHDRAWAL_DELAY: u64 = 4 * 30 * 24 * 3600;
pub const DEFAULT_VOTE_BUFFER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalityConfig {
    pub threshold: Threshold,
    pub withdrawal_delay: u64,
    pub vote_buffer_cap: usize,
}

impl Default for FinalityConfig {
    fn default() -> Self {
        FinalityConfig {
            threshold: Threshold::TWO_THIRDS,
            withdrawal_delay: DEFAULT_WITHDRAWAL_DELAY,
            vote_buffer_cap: DEFAULT_VOTE_BUFFER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinalityError {
    #[error("deposit amount must be positive")]
    ZeroDeposit,
    #[error("insufficient liquid supply: requested {requested}, available {available}")]
    InsufficientLiquidSupply { requested: u64, available: u64 },
    #[error("validator {0} already registered")]
    DuplicateValidator(ValidatorId),
    #[error("unknown validator {0}")]
    UnknownValidator(ValidatorId),
    #[error("validator {id} is {status}, expected {expected}")]
    InvalidStatus {
        id: ValidatorId,
        status: &'static str,
        expected: &'static str,
    },
    #[error("validator {id} not withdrawable until {withdrawable_at}")]
    NotYetWithdrawable {
        id: ValidatorId,
        withdrawable_at: SimTime,
    },
    #[error("checkpoint {id} at height {height} does not extend parent at height {parent_height}")]
    BadHeight {
        id: CheckpointId,
        height: u64,
        parent_height: u64,
    },
    #[error("checkpoint {0} has no parent")]
    MissingParent(CheckpointId),
    #[error("checkpoint {0} already known with different contents")]
    CheckpointMismatch(CheckpointId),
}

/// Two votes by the same validator for different checkpoints at one height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashingEvidence {
    pub offender: ValidatorId,
    pub vote_a: Vote,
    pub vote_b: Vote,
    pub detected_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgnoreReason {
    UnknownVoter,
    Slashed,
    Withdrawn,
    BufferFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteStatus {
    Counted,
    Duplicate,
    Buffered,
    Ignored(IgnoreReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteOutcome {
    pub vote: Vote,
    pub status: VoteStatus,
    pub evidence: Option<SlashingEvidence>,
    pub newly_finalized: Vec<CheckpointId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlashOutcome {
    Burned(StakeAmount),
    AlreadySlashed,
}

/// Per-round accumulated weight for a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    pub weight: StakeAmount,
    /// Weight contributed by each voter.
    pub voters: BTreeMap<ValidatorId, StakeAmount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SupplyBreakdown {
    pub active: StakeAmount,
    pub exiting: StakeAmount,
    pub liquid: StakeAmount,
    pub burned: StakeAmount,
    pub total: StakeAmount,
}

impl SupplyBreakdown {
    pub fn is_conserved(&self) -> bool {
        self.active.0 as u128
            + self.exiting.0 as u128
            + self.liquid.0 as u128
            + self.burned.0 as u128
            == self.total.0 as u128
    }
}

#[derive(Debug, Clone)]
pub struct FinalityState {
    config: FinalityConfig,
    total_supply: StakeAmount,
    liquid: StakeAmount,
    burned: StakeAmount,
    burned_by: BTreeMap<ValidatorId, StakeAmount>,
    checkpoints: BTreeMap<CheckpointId, Checkpoint>,
    tallies: BTreeMap<(CheckpointId, u32), Tally>,
    finalized: BTreeSet<CheckpointId>,
    finalization_order: Vec<CheckpointId>,
    validators: BTreeMap<ValidatorId, ValidatorState>,
    vote_log: Vec<Vote>,
    votes_by_height: BTreeMap<(ValidatorId, u64), Vec<Vote>>,
    evidence: BTreeMap<ValidatorId, SlashingEvidence>,
    pending_votes: VecDeque<Vote>,
    orphans: BTreeMap<CheckpointId, Vec<Checkpoint>>,
    epoch_voters: BTreeSet<ValidatorId>,
}

impl FinalityState {
    /// Fresh state holding only the (already final) genesis checkpoint.
    pub fn new(total_supply: StakeAmount, config: FinalityConfig) -> Self {
        let genesis = Checkpoint::genesis();
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert(genesis.id, genesis);
        FinalityState {
            config,
            total_supply,
            liquid: total_supply,
            burned: StakeAmount::ZERO,
            burned_by: BTreeMap::new(),
            checkpoints,
            tallies: BTreeMap::new(),
            finalized: BTreeSet::from([CheckpointId::GENESIS]),
            finalization_order: vec![CheckpointId::GENESIS],
            validators: BTreeMap::new(),
            vote_log: Vec::new(),
            votes_by_height: BTreeMap::new(),
            evidence: BTreeMap::new(),
            pending_votes: VecDeque::new(),
            orphans: BTreeMap::new(),
            epoch_voters: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> &FinalityConfig {
        &self.config
    }

    pub fn validator(&self, id: ValidatorId) -> Option<&ValidatorState> {
        self.validators.get(&id)
    }

    pub fn validators(&self) -> impl Iterator<Item = &ValidatorState> {
        self.validators.values()
    }

    pub fn checkpoint(&self, id: CheckpointId) -> Option<&Checkpoint> {
        self.checkpoints.get(&id)
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = &Checkpoint> {
        self.checkpoints.values()
    }

    pub fn is_finalized(&self, id: CheckpointId) -> bool {
        self.finalized.contains(&id)
    }

    pub fn finalized(&self) -> &BTreeSet<CheckpointId> {
        &self.finalized
    }

    /// Finalized checkpoints in the order this view finalized them.
    pub fn finalization_order(&self) -> &[CheckpointId] {
        &self.finalization_order
    }

    pub fn tally(&self, id: CheckpointId, round: u32) -> Option<&Tally> {
        self.tallies.get(&(id, round))
    }

    pub fn vote_log(&self) -> &[Vote] {
        &self.vote_log
    }

    pub fn evidence(&self) -> impl Iterator<Item = &SlashingEvidence> {
        self.evidence.values()
    }

    pub fn evidence_against(&self, id: ValidatorId) -> Option<&SlashingEvidence> {
        self.evidence.get(&id)
    }

    pub fn burned(&self) -> StakeAmount {
        self.burned
    }

    pub fn burned_from(&self, id: ValidatorId) -> StakeAmount {
        self.burned_by.get(&id).copied().unwrap_or_default()
    }

    pub fn liquid(&self) -> StakeAmount {
        self.liquid
    }

    pub fn total_supply(&self) -> StakeAmount {
        self.total_supply
    }

    pub fn pending_vote_count(&self) -> usize {
        self.pending_votes.len()
    }

    /// Denominator of the finality threshold: active plus exiting deposits.
    pub fn slashable_stake(&self) -> StakeAmount {
        self.validators
            .values()
            .filter(|v| v.status.is_slashable())
            .map(|v| v.deposit)
            .sum()
    }

    pub fn supply(&self) -> SupplyBreakdown {
        let mut active = StakeAmount::ZERO;
        let mut exiting = StakeAmount::ZERO;
        for v in self.validators.values() {
            match v.status {
                ValidatorStatus::Active => active += v.deposit,
                ValidatorStatus::Exiting { .. } => exiting += v.deposit,
                ValidatorStatus::Withdrawn | ValidatorStatus::Slashed => {}
            }
        }
        SupplyBreakdown {
            active,
            exiting,
            liquid: self.liquid,
            burned: self.burned,
            total: self.total_supply,
        }
    }

    /// Moves `amount` from the liquid pool into a new active validator.
    pub fn deposit(
        &mut self,
        id: ValidatorId,
        region: RegionId,
        amount: StakeAmount,
        honest: bool,
    ) -> Result<(), FinalityError> {
        if amount.is_zero() {
            return Err(FinalityError::ZeroDeposit);
        }
        if self.validators.contains_key(&id) {
            return Err(FinalityError::DuplicateValidator(id));
        }
        if amount > self.liquid {
            return Err(FinalityError::InsufficientLiquidSupply {
                requested: amount.0,
                available: self.liquid.0,
            });
        }
        self.liquid -= amount;
        self.validators.insert(
            id,
            ValidatorState {
                id,
                region,
                deposit: amount,
                status: ValidatorStatus::Active,
                honest,
            },
        );
        Ok(())
    }

    /// Starts the withdrawal delay. The deposit stays slashable until it ends.
    pub fn request_exit(&mut self, id: ValidatorId, at: SimTime) -> Result<SimTime, FinalityError> {
        let delay = self.config.withdrawal_delay;
        let v = self
            .validators
            .get_mut(&id)
            .ok_or(FinalityError::UnknownValidator(id))?;
        if v.status != ValidatorStatus::Active {
            return Err(FinalityError::InvalidStatus {
                id,
                status: v.status.label(),
                expected: "active",
            });
        }
        let withdrawable_at = at.after(delay);
        v.status = ValidatorStatus::Exiting { withdrawable_at };
        Ok(withdrawable_at)
    }

    /// Returns an exited deposit to the liquid pool.
    pub fn withdraw(&mut self, id: ValidatorId, at: SimTime) -> Result<StakeAmount, FinalityError> {
        let v = self
            .validators
            .get_mut(&id)
            .ok_or(FinalityError::UnknownValidator(id))?;
        match v.status {
            ValidatorStatus::Exiting { withdrawable_at } if at >= withdrawable_at => {
                let amount = v.deposit;
                v.deposit = StakeAmount::ZERO;
                v.status = ValidatorStatus::Withdrawn;
                self.liquid += amount;
                Ok(amount)
            }
            ValidatorStatus::Exiting { withdrawable_at } => {
                Err(FinalityError::NotYetWithdrawable {
                    id,
                    withdrawable_at,
                })
            }
            other => Err(FinalityError::InvalidStatus {
                id,
                status: other.label(),
                expected: "exiting",
            }),
        }
    }

    /// True when neither checkpoint is an ancestor of the other.
    pub fn conflicts(&self, a: CheckpointId, b: CheckpointId) -> bool {
        a != b && !self.is_ancestor(a, b) && !self.is_ancestor(b, a)
    }

    /// Whether `ancestor` lies on `descendant`'s parent chain (inclusive).
    pub fn is_ancestor(&self, ancestor: CheckpointId, descendant: CheckpointId) -> bool {
        let mut cursor = Some(descendant);
        while let Some(id) = cursor {
            if id == ancestor {
                return true;
            }
            cursor = self.checkpoints.get(&id).and_then(|c| c.parent);
        }
        false
    }

    /// Known checkpoint with the greatest height; ties go to the lowest id.
    pub fn head(&self) -> &Checkpoint {
        self.checkpoints
            .values()
            .max_by(|a, b| a.height.cmp(&b.height).then(b.id.cmp(&a.id)))
            .expect("genesis is always present")
    }

    /// Adds a checkpoint to the tree. Checkpoints whose parent is unknown are
    /// held until the parent arrives; votes waiting on any newly attached
    /// checkpoint are then processed and their outcomes returned.
    pub fn add_checkpoint(
        &mut self,
        cp: Checkpoint,
        at: SimTime,
    ) -> Result<Vec<VoteOutcome>, FinalityError> {
        if let Some(existing) = self.checkpoints.get(&cp.id) {
            if *existing != cp {
                return Err(FinalityError::CheckpointMismatch(cp.id));
            }
            return Ok(Vec::new());
        }
        let parent_id = cp.parent.ok_or(FinalityError::MissingParent(cp.id))?;
        let Some(parent) = self.checkpoints.get(&parent_id) else {
            let waiting = self.orphans.entry(parent_id).or_default();
            if !waiting.contains(&cp) {
                waiting.push(cp);
            }
            return Ok(Vec::new());
        };
        if cp.height != parent.height + 1 {
            return Err(FinalityError::BadHeight {
                id: cp.id,
                height: cp.height,
                parent_height: parent.height,
            });
        }

        let mut attached = vec![cp.id];
        self.checkpoints.insert(cp.id, cp);
        let mut queue = vec![attached[0]];
        while let Some(id) = queue.pop() {
            if let Some(children) = self.orphans.remove(&id) {
                let parent_height = self.checkpoints[&id].height;
                for child in children {
                    if child.height != parent_height + 1 {
                        log::warn!("dropping orphan {} with bad height", child.id);
                        continue;
                    }
                    queue.push(child.id);
                    attached.push(child.id);
                    self.checkpoints.insert(child.id, child);
                }
            }
        }

        let mut outcomes = Vec::new();
        let pending = std::mem::take(&mut self.pending_votes);
        for vote in pending {
            if self.checkpoints.contains_key(&vote.target) {
                outcomes.push(self.process_vote(vote, at));
            } else {
                self.pending_votes.push_back(vote);
            }
        }
        Ok(outcomes)
    }

    /// Counts one vote. Produces evidence when the voter already voted for a
    /// different checkpoint at the same height, and finalizes the target plus
    /// its non-final ancestors once the round's tally meets the threshold.
    pub fn process_vote(&mut self, vote: Vote, at: SimTime) -> VoteOutcome {
        let mut outcome = VoteOutcome {
            vote: vote.clone(),
            status: VoteStatus::Counted,
            evidence: None,
            newly_finalized: Vec::new(),
        };

        let Some(voter) = self.validators.get(&vote.voter) else {
            log::warn!("ignoring vote from unknown validator {}", vote.voter);
            outcome.status = VoteStatus::Ignored(IgnoreReason::UnknownVoter);
            return outcome;
        };
        match voter.status {
            ValidatorStatus::Slashed => {
                log::warn!("ignoring vote from slashed validator {}", vote.voter);
                outcome.status = VoteStatus::Ignored(IgnoreReason::Slashed);
                return outcome;
            }
            ValidatorStatus::Withdrawn => {
                log::warn!("ignoring vote from withdrawn validator {}", vote.voter);
                outcome.status = VoteStatus::Ignored(IgnoreReason::Withdrawn);
                return outcome;
            }
            ValidatorStatus::Active | ValidatorStatus::Exiting { .. } => {}
        }

        let Some(target) = self.checkpoints.get(&vote.target) else {
            if self.pending_votes.len() >= self.config.vote_buffer_cap {
                log::warn!("vote buffer full, dropping vote for {}", vote.target);
                outcome.status = VoteStatus::Ignored(IgnoreReason::BufferFull);
            } else {
                self.pending_votes.push_back(vote);
                outcome.status = VoteStatus::Buffered;
            }
            return outcome;
        };
        let height = target.height;

        let tally = self.tallies.entry((vote.target, vote.round)).or_default();
        if tally.voters.contains_key(&vote.voter) {
            outcome.status = VoteStatus::Duplicate;
            return outcome;
        }
        tally.voters.insert(vote.voter, vote.weight);
        tally.weight += vote.weight;
        let tally_weight = tally.weight;

        self.vote_log.push(vote.clone());
        self.epoch_voters.insert(vote.voter);
        let prior = self
            .votes_by_height
            .entry((vote.voter, height))
            .or_default();
        let conflicting = prior.iter().find(|p| p.target != vote.target).cloned();
        prior.push(vote.clone());

        if let Some(first) = conflicting {
            if let std::collections::btree_map::Entry::Vacant(slot) =
                self.evidence.entry(vote.voter)
            {
                let ev = SlashingEvidence {
                    offender: vote.voter,
                    vote_a: first,
                    vote_b: vote.clone(),
                    detected_at: at,
                };
                slot.insert(ev.clone());
                outcome.evidence = Some(ev);
            }
        }

        if !self.finalized.contains(&vote.target)
            && self
                .config
                .threshold
                .is_met(tally_weight, self.slashable_stake())
        {
            outcome.newly_finalized = self.finalize_with_ancestors(vote.target);
        }
        outcome
    }

    fn finalize_with_ancestors(&mut self, id: CheckpointId) -> Vec<CheckpointId> {
        let mut chain = Vec::new();
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            if self.finalized.contains(&c) {
                break;
            }
            chain.push(c);
            cursor = self.checkpoints.get(&c).and_then(|cp| cp.parent);
        }
        // Oldest first.
        chain.reverse();
        for c in &chain {
            self.finalized.insert(*c);
            self.finalization_order.push(*c);
        }
        chain
    }

    /// Records evidence observed elsewhere and burns the offender's deposit.
    pub fn apply_slash(&mut self, evidence: &SlashingEvidence) -> SlashOutcome {
        self.evidence
            .entry(evidence.offender)
            .or_insert_with(|| evidence.clone());
        match self.burn_validator(evidence.offender) {
            Some(amount) => SlashOutcome::Burned(amount),
            None => {
                log::debug!("validator {} already slashed", evidence.offender);
                SlashOutcome::AlreadySlashed
            }
        }
    }

    /// Removes a validator without double-vote evidence, burning its deposit.
    /// Used by off-chain coordination. `None` when there is nothing to burn.
    pub fn censor(&mut self, id: ValidatorId) -> Option<StakeAmount> {
        self.burn_validator(id)
    }

    fn burn_validator(&mut self, id: ValidatorId) -> Option<StakeAmount> {
        let v = self.validators.get_mut(&id)?;
        if !v.status.is_slashable() {
            return None;
        }
        let amount = v.deposit;
        v.deposit = StakeAmount::ZERO;
        v.status = ValidatorStatus::Slashed;
        self.burned += amount;
        *self.burned_by.entry(id).or_default() += amount;
        // Weight already spent on a finalization stays; open tallies drop it.
        for ((cp, _), tally) in self.tallies.iter_mut() {
            if self.finalized.contains(cp) {
                continue;
            }
            if let Some(w) = tally.voters.remove(&id) {
                tally.weight -= w;
            }
        }
        Some(amount)
    }

    /// Burns part of a validator's deposit without removing it.
    pub fn burn_partial(&mut self, id: ValidatorId, amount: StakeAmount) -> StakeAmount {
        let Some(v) = self.validators.get_mut(&id) else {
            return StakeAmount::ZERO;
        };
        if !v.status.is_slashable() {
            return StakeAmount::ZERO;
        }
        let amount = amount.min(v.deposit);
        v.deposit -= amount;
        self.burned += amount;
        *self.burned_by.entry(id).or_default() += amount;
        amount
    }

    /// Validators whose votes were counted since the last call.
    pub fn take_epoch_voters(&mut self) -> BTreeSet<ValidatorId> {
        std::mem::take(&mut self.epoch_voters)
    }

    /// Every pair of finalized checkpoints where neither descends from the other.
    pub fn detect_conflicting_finalizations(&self) -> BTreeSet<(CheckpointId, CheckpointId)> {
        let finalized: Vec<CheckpointId> = self.finalized.iter().copied().collect();
        let mut pairs = BTreeSet::new();
        for (i, &a) in finalized.iter().enumerate() {
            for &b in &finalized[i + 1..] {
                if self.conflicts(a, b) {
                    pairs.insert((a, b));
                }
            }
        }
        pairs
    }

    /// Deterministic text dump of validators, tallies, finalized set and burned total.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let supply = self.supply();
        let _ = writeln!(
            out,
            "supply total={} liquid={} burned={}",
            supply.total, supply.liquid, supply.burned
        );
        out.push_str("validators\n");
        for v in self.validators.values() {
            let _ = writeln!(
                out,
                "  {} region={} deposit={} status={}",
                v.id,
                v.region.0,
                v.deposit,
                v.status.label()
            );
        }
        out.push_str("tallies\n");
        for ((cp, round), t) in &self.tallies {
            let voters: Vec<String> = t.voters.keys().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "  {} round={} weight={} voters={}",
                cp,
                round,
                t.weight,
                voters.join(",")
            );
        }
        let finalized: Vec<String> = self.finalized.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "finalized {}", finalized.join(","));
        let _ = writeln!(out, "burned {}", self.burned);
        out
    }
}

/// Conflicting pairs among checkpoints finalized in any of the given views,
/// judged on the union of their checkpoint trees.
pub fn conflicting_across_views<'a, I>(views: I) -> BTreeSet<(CheckpointId, CheckpointId)>
where
    I: IntoIterator<Item = &'a FinalityState>,
{
    let mut tree: BTreeMap<CheckpointId, Option<CheckpointId>> = BTreeMap::new();
    let mut finalized = BTreeSet::new();
    for v in views {
        for cp in v.checkpoints.values() {
            tree.insert(cp.id, cp.parent);
        }
        finalized.extend(v.finalized.iter().copied());
    }
    let ancestor = |a: CheckpointId, d: CheckpointId| {
        let mut cursor = Some(d);
        while let Some(id) = cursor {
            if id == a {
                return true;
            }
            cursor = tree.get(&id).copied().flatten();
        }
        false
    };
    let finalized: Vec<CheckpointId> = finalized.into_iter().collect();
    let mut pairs = BTreeSet::new();
    for (i, &a) in finalized.iter().enumerate() {
        for &b in &finalized[i + 1..] {
            if !ancestor(a, b) && !ancestor(b, a) {
                pairs.insert((a, b));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(stakes: &[u64]) -> FinalityState {
        let total: u64 = stakes.iter().sum();
        let mut s = FinalityState::new(StakeAmount(total), FinalityConfig::default());
        for (i, &st) in stakes.iter().enumerate() {
            s.deposit(ValidatorId(i as u32), RegionId(0), StakeAmount(st), true)
                .unwrap();
        }
        s
    }

    fn vote(s: &FinalityState, voter: u32, target: u64) -> Vote {
        Vote {
            voter: ValidatorId(voter),
            target: CheckpointId(target),
            round: 0,
            weight: s.validator(ValidatorId(voter)).unwrap().deposit,
        }
    }

    fn add(s: &mut FinalityState, id: u64, parent: u64) {
        let p = s.checkpoint(CheckpointId(parent)).unwrap().clone();
        s.add_checkpoint(Checkpoint::child_of(&p, CheckpointId(id)), SimTime(0))
            .unwrap();
    }

    #[test]
    fn deposit_conservation() {
        let mut s = FinalityState::new(StakeAmount(100), FinalityConfig::default());
        s.deposit(ValidatorId(0), RegionId(0), StakeAmount(100), true)
            .unwrap();
        assert_eq!(s.liquid(), StakeAmount(0));
        assert_eq!(s.supply().active, StakeAmount(100));

        let mut s = FinalityState::new(StakeAmount(100), FinalityConfig::default());
        assert_eq!(
            s.deposit(ValidatorId(0), RegionId(0), StakeAmount(101), true),
            Err(FinalityError::InsufficientLiquidSupply {
                requested: 101,
                available: 100
            })
        );

        let mut s = FinalityState::new(StakeAmount(100), FinalityConfig::default());
        s.deposit(ValidatorId(0), RegionId(0), StakeAmount(50), true)
            .unwrap();
        s.deposit(ValidatorId(1), RegionId(0), StakeAmount(50), true)
            .unwrap();
        assert!(s.supply().is_conserved());
        assert_eq!(
            s.deposit(ValidatorId(1), RegionId(0), StakeAmount(0), true),
            Err(FinalityError::ZeroDeposit)
        );
    }

    #[test]
    fn exit_lifecycle() {
        let mut s = state_with(&[10, 20]);
        let d = s.config().withdrawal_delay;
        assert_eq!(s.request_exit(ValidatorId(0), SimTime(0)), Ok(SimTime(d)));
        assert!(matches!(
            s.request_exit(ValidatorId(0), SimTime(1)),
            Err(FinalityError::InvalidStatus { .. })
        ));
        assert!(matches!(
            s.request_exit(ValidatorId(9), SimTime(1)),
            Err(FinalityError::UnknownValidator(_))
        ));
        assert_eq!(
            s.withdraw(ValidatorId(0), SimTime(d - 1)),
            Err(FinalityError::NotYetWithdrawable {
                id: ValidatorId(0),
                withdrawable_at: SimTime(d)
            })
        );
        // still slashable while exiting
        assert_eq!(s.slashable_stake(), StakeAmount(30));
        assert_eq!(s.withdraw(ValidatorId(0), SimTime(d)), Ok(StakeAmount(10)));
        assert_eq!(s.liquid(), StakeAmount(10));
        assert_eq!(s.slashable_stake(), StakeAmount(20));
        assert!(s.supply().is_conserved());
    }

    #[test]
    fn slash_during_exit_window_burns() {
        let mut s = state_with(&[10, 20]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 0);
        s.request_exit(ValidatorId(0), SimTime(0)).unwrap();
        let v1 = vote(&s, 0, 1);
        let v2 = vote(&s, 0, 2);
        s.process_vote(v1, SimTime(1));
        let ev = s.process_vote(v2, SimTime(2)).evidence.unwrap();
        assert_eq!(s.apply_slash(&ev), SlashOutcome::Burned(StakeAmount(10)));
        let d = s.config().withdrawal_delay;
        assert!(s.withdraw(ValidatorId(0), SimTime(d)).is_err());
        assert_eq!(s.burned(), StakeAmount(10));
        assert!(s.supply().is_conserved());
    }

    #[test]
    fn finalizes_at_exact_two_thirds() {
        let mut s = state_with(&[1_000_000, 1_000_000, 1_000_000]);
        add(&mut s, 1, 0);
        let v = vote(&s, 0, 1);
        assert!(s.process_vote(v, SimTime(1)).newly_finalized.is_empty());
        let v = vote(&s, 1, 1);
        assert_eq!(
            s.process_vote(v, SimTime(2)).newly_finalized,
            vec![CheckpointId(1)]
        );
    }

    #[test]
    fn one_unit_short_does_not_finalize() {
        let mut s = state_with(&[1_999_999, 1_000_001]);
        add(&mut s, 1, 0);
        let v = vote(&s, 0, 1);
        let out = s.process_vote(v, SimTime(1));
        assert!(out.newly_finalized.is_empty());
        assert!(!s.is_finalized(CheckpointId(1)));
    }

    #[test]
    fn double_vote_yields_evidence_once() {
        let mut s = state_with(&[5, 5, 5]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 0);
        let a = vote(&s, 0, 1);
        let b = vote(&s, 0, 2);
        assert!(s.process_vote(a.clone(), SimTime(1)).evidence.is_none());
        let ev = s.process_vote(b.clone(), SimTime(2)).evidence.unwrap();
        assert_eq!(ev.offender, ValidatorId(0));
        assert_eq!(ev.vote_a, a);
        assert_eq!(ev.vote_b, b);
        assert_eq!(ev.detected_at, SimTime(2));
    }

    #[test]
    fn revote_in_later_round_is_not_evidence() {
        let mut s = state_with(&[5, 5, 5]);
        add(&mut s, 1, 0);
        let mut v = vote(&s, 0, 1);
        s.process_vote(v.clone(), SimTime(1));
        assert_eq!(
            s.process_vote(v.clone(), SimTime(1)).status,
            VoteStatus::Duplicate
        );
        v.round = 1;
        let out = s.process_vote(v, SimTime(2));
        assert_eq!(out.status, VoteStatus::Counted);
        assert!(out.evidence.is_none());
    }

    #[test]
    fn slash_then_vote_is_ignored() {
        let mut s = state_with(&[1_000_002, 999_999, 999_999]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 0);
        let a = vote(&s, 0, 1);
        let b = vote(&s, 0, 2);
        s.process_vote(a, SimTime(1));
        let ev = s.process_vote(b, SimTime(1)).evidence.unwrap();
        assert_eq!(
            s.apply_slash(&ev),
            SlashOutcome::Burned(StakeAmount(1_000_002))
        );
        assert_eq!(s.validator(ValidatorId(0)).unwrap().deposit, StakeAmount(0));
        assert_eq!(s.apply_slash(&ev), SlashOutcome::AlreadySlashed);
        add(&mut s, 3, 1);
        let late = Vote {
            voter: ValidatorId(0),
            target: CheckpointId(3),
            round: 0,
            weight: StakeAmount(1_000_002),
        };
        assert_eq!(
            s.process_vote(late, SimTime(5)).status,
            VoteStatus::Ignored(IgnoreReason::Slashed)
        );
        assert!(s.supply().is_conserved());
        assert_eq!(s.slashable_stake(), StakeAmount(1_999_998));
    }

    #[test]
    fn slashing_drops_weight_from_open_tallies_only() {
        let mut s = state_with(&[4, 3, 3]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 0);
        let a = vote(&s, 0, 1);
        let b = vote(&s, 1, 1);
        s.process_vote(a, SimTime(1));
        assert_eq!(
            s.process_vote(b, SimTime(1)).newly_finalized,
            vec![CheckpointId(1)]
        );
        let c = vote(&s, 0, 2);
        let ev = s.process_vote(c, SimTime(2)).evidence.unwrap();
        s.apply_slash(&ev);
        assert_eq!(s.tally(CheckpointId(1), 0).unwrap().weight, StakeAmount(7));
        assert_eq!(s.tally(CheckpointId(2), 0).unwrap().weight, StakeAmount(0));
        // 3 of remaining 6 is not enough for the second branch
        let d = vote(&s, 2, 2);
        assert!(s.process_vote(d, SimTime(3)).newly_finalized.is_empty());
    }

    #[test]
    fn cross_view_conflicts() {
        let mut eu = state_with(&[1]);
        let mut af = eu.clone();
        add(&mut eu, 1, 0);
        add(&mut af, 2, 0);
        let v = vote(&eu, 0, 1);
        eu.process_vote(v, SimTime(1));
        let v = vote(&af, 0, 2);
        af.process_vote(v, SimTime(1));
        assert!(eu.detect_conflicting_finalizations().is_empty());
        assert!(af.detect_conflicting_finalizations().is_empty());
        assert_eq!(
            conflicting_across_views([&eu, &af]),
            BTreeSet::from([(CheckpointId(1), CheckpointId(2))])
        );
    }

    #[test]
    fn finalizing_descendant_finalizes_ancestors() {
        let mut s = state_with(&[3]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 1);
        let v = vote(&s, 0, 2);
        assert_eq!(
            s.process_vote(v, SimTime(1)).newly_finalized,
            vec![CheckpointId(1), CheckpointId(2)]
        );
        assert!(s.detect_conflicting_finalizations().is_empty());
    }

    #[test]
    fn conflict_detection() {
        let mut s = state_with(&[1, 1, 1]);
        add(&mut s, 1, 0);
        add(&mut s, 2, 0);
        add(&mut s, 3, 1);
        // fork, only one branch final
        for voter in 0..3 {
            let v = vote(&s, voter, 3);
            s.process_vote(v, SimTime(1));
        }
        assert!(s.detect_conflicting_finalizations().is_empty());
        // second sibling finalized by double voters
        for voter in 0..3 {
            let v = vote(&s, voter, 2);
            s.process_vote(v, SimTime(2));
        }
        let pairs = s.detect_conflicting_finalizations();
        assert_eq!(
            pairs,
            BTreeSet::from([
                (CheckpointId(1), CheckpointId(2)),
                (CheckpointId(2), CheckpointId(3))
            ])
        );
    }

    #[test]
    fn votes_for_unknown_checkpoint_are_buffered() {
        let mut s = state_with(&[2, 1]);
        let early = Vote {
            voter: ValidatorId(0),
            target: CheckpointId(1),
            round: 0,
            weight: StakeAmount(2),
        };
        assert_eq!(
            s.process_vote(early, SimTime(0)).status,
            VoteStatus::Buffered
        );
        let outs = s
            .add_checkpoint(
                Checkpoint::child_of(&Checkpoint::genesis(), CheckpointId(1)),
                SimTime(3),
            )
            .unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].newly_finalized, vec![CheckpointId(1)]);
        assert_eq!(s.pending_vote_count(), 0);
    }

    #[test]
    fn vote_buffer_is_bounded() {
        let mut s = FinalityState::new(
            StakeAmount(10),
            FinalityConfig {
                vote_buffer_cap: 2,
                ..Default::default()
            },
        );
        s.deposit(ValidatorId(0), RegionId(0), StakeAmount(10), true)
            .unwrap();
        for t in 0..3u64 {
            let v = Vote {
                voter: ValidatorId(0),
                target: CheckpointId(100 + t),
                round: 0,
                weight: StakeAmount(10),
            };
            let status = s.process_vote(v, SimTime(0)).status;
            if t < 2 {
                assert_eq!(status, VoteStatus::Buffered);
            } else {
                assert_eq!(status, VoteStatus::Ignored(IgnoreReason::BufferFull));
            }
        }
    }

    #[test]
    fn orphan_checkpoints_attach_when_parent_arrives() {
        let mut s = state_with(&[1]);
        let c1 = Checkpoint::child_of(&Checkpoint::genesis(), CheckpointId(1));
        let c2 = Checkpoint::child_of(&c1, CheckpointId(2));
        s.add_checkpoint(c2, SimTime(0)).unwrap();
        assert!(s.checkpoint(CheckpointId(2)).is_none());
        s.add_checkpoint(c1, SimTime(1)).unwrap();
        assert_eq!(s.checkpoint(CheckpointId(2)).unwrap().height, 2);
        assert_eq!(s.head().id, CheckpointId(2));
    }

    #[test]
    fn bad_height_rejected() {
        let mut s = state_with(&[1]);
        let bad = Checkpoint {
            id: CheckpointId(1),
            height: 2,
            parent: Some(CheckpointId::GENESIS),
        };
        assert!(matches!(
            s.add_checkpoint(bad, SimTime(0)),
            Err(FinalityError::BadHeight { .. })
        ));
    }

    #[test]
    fn snapshot_is_stable() {
        let mut s = state_with(&[2, 1]);
        add(&mut s, 1, 0);
        let v = vote(&s, 0, 1);
        s.process_vote(v, SimTime(1));
        let snap = s.snapshot();
        assert_eq!(
            snap,
            "supply total=3 liquid=0 burned=0\n\
             validators\n  v0 region=0 deposit=2 status=active\n  v1 region=0 deposit=1 status=active\n\
             tallies\n  cp1 round=0 weight=2 voters=v0\n\
             finalized cp0,cp1\n\
             burned 0\n"
        );
        assert_eq!(snap, s.clone().snapshot());
    }
}
