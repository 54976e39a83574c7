//! Responses to attacks: the inactivity leak, off-chain soft-fork censoring,
//! branch selection after conflicting finality, and merchant observers.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::config::{BranchPreference, Rate};
use crate::economics;
use crate::finality::{FinalityState, SlashingEvidence};
use crate::types::{CheckpointId, RegionId, SimTime, StakeAmount, ValidatorId};

/// Burns `floor(deposit * rate)` from every slashable validator that is not in
/// `voters`. Returns what was taken from each.
pub fn apply_inactivity_leak(
    state: &mut FinalityState,
    rate: Rate,
    voters: &BTreeSet<ValidatorId>,
) -> BTreeMap<ValidatorId, StakeAmount> {
    let idle: Vec<(ValidatorId, StakeAmount)> = state
        .validators()
        .filter(|v| v.status.is_slashable() && !voters.contains(&v.id))
        .map(|v| (v.id, v.deposit))
        .collect();
    let mut leaked = BTreeMap::new();
    for (id, deposit) in idle {
        let cut = rate.apply_floor(deposit);
        if !cut.is_zero() {
            leaked.insert(id, state.burn_partial(id, cut));
        }
    }
    leaked
}

/// Consecutive missed epochs per validator, used to flag validators as offline.
#[derive(Debug, Clone, Default)]
pub struct OfflineTracker {
    streaks: BTreeMap<ValidatorId, u64>,
}

impl OfflineTracker {
    /// Records one epoch. Validators in `expected` but not in `voters` extend
    /// their streak; the rest reset.
    pub fn record(
        &mut self,
        expected: impl IntoIterator<Item = ValidatorId>,
        voters: &BTreeSet<ValidatorId>,
    ) {
        for id in expected {
            let s = self.streaks.entry(id).or_default();
            if voters.contains(&id) {
                *s = 0;
            } else {
                *s += 1;
            }
        }
    }

    pub fn streak(&self, id: ValidatorId) -> u64 {
        self.streaks.get(&id).copied().unwrap_or(0)
    }

    pub fn flagged(&self, t_offline: u64) -> BTreeSet<ValidatorId> {
        self.streaks
            .iter()
            .filter(|(_, s)| **s >= t_offline)
            .map(|(id, _)| *id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftFork {
    pub censored: BTreeSet<ValidatorId>,
    pub burned: StakeAmount,
    /// Velocity price on the surviving chain; `None` when nothing is liquid.
    pub post_fork_price: Option<f64>,
}

/// Censors every validator with evidence or an offline flag on `state` and
/// recomputes the velocity price over the remaining liquid supply.
pub fn resolve_by_soft_fork<'a>(
    state: &mut FinalityState,
    evidence: impl IntoIterator<Item = &'a SlashingEvidence>,
    offline_flags: &BTreeSet<ValidatorId>,
    demand: f64,
    velocity: f64,
) -> SoftFork {
    let mut censored = BTreeSet::new();
    let mut burned = StakeAmount::ZERO;
    for ev in evidence {
        if let crate::finality::SlashOutcome::Burned(a) = state.apply_slash(ev) {
            burned += a;
            censored.insert(ev.offender);
        }
    }
    for id in offline_flags {
        if let Some(a) = state.censor(*id) {
            burned += a;
            censored.insert(*id);
        }
    }
    let post_fork_price = economics::velocity_price(demand, velocity, state.liquid().0 as f64).ok();
    SoftFork {
        censored,
        burned,
        post_fork_price,
    }
}

/// When a view first finalized a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FinalityEvent {
    pub tick: u64,
    pub seq: u64,
    pub region: RegionId,
    pub checkpoint: CheckpointId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchChoice {
    pub survivor: CheckpointId,
    /// View whose chain is kept.
    pub region: RegionId,
}

/// Picks the surviving checkpoint among conflicting finalized ones.
///
/// Candidates are the checkpoints appearing in `conflicts`. Each is tied to
/// the view that finalized it first. `FirstFinalized` keeps the earliest;
/// `HighestBurned` keeps the one whose view burned the most attacker stake,
/// falling back to the earliest on ties.
pub fn select_surviving_branch(
    conflicts: &BTreeSet<(CheckpointId, CheckpointId)>,
    events: &[FinalityEvent],
    views: &[FinalityState],
    attackers: &BTreeSet<ValidatorId>,
    preference: BranchPreference,
) -> Option<BranchChoice> {
    let candidates: BTreeSet<CheckpointId> = conflicts.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let mut first: Vec<&FinalityEvent> = Vec::new();
    for ev in events {
        if candidates.contains(&ev.checkpoint)
            && !first.iter().any(|f| f.checkpoint == ev.checkpoint)
        {
            first.push(ev);
        }
    }
    // `events` is in trace order already.
    let chosen = match preference {
        BranchPreference::FirstFinalized => first.first().copied(),
        BranchPreference::HighestBurned => {
            let burned = |ev: &FinalityEvent| -> u64 {
                attackers
                    .iter()
                    .map(|a| views[ev.region.0].burned_from(*a).0)
                    .sum()
            };
            let best = first.iter().map(|e| burned(e)).max();
            best.and_then(|b| first.iter().find(|e| burned(e) == b).copied())
        }
    }?;
    Some(BranchChoice {
        survivor: chosen.checkpoint,
        region: chosen.region,
    })
}

/// A merchant waiting for a payment to be finalized in its region's view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MerchantObserver {
    pub region: RegionId,
    pub payment: CheckpointId,
    pub value: f64,
    pub accepted_at: Option<SimTime>,
    pub reverted: bool,
}

impl MerchantObserver {
    pub fn new(region: RegionId, payment: CheckpointId, value: f64) -> Self {
        MerchantObserver {
            region,
            payment,
            value,
            accepted_at: None,
            reverted: false,
        }
    }

    /// Accepts once the payment is final in `view`. Returns true on the accepting call.
    pub fn observe(&mut self, view: &FinalityState, at: SimTime) -> bool {
        if self.accepted_at.is_none() && view.is_finalized(self.payment) {
            self.accepted_at = Some(at);
            return true;
        }
        false
    }

    pub fn accepted(&self) -> bool {
        self.accepted_at.is_some()
    }

    /// Accepted, then lost the payment to the other branch.
    pub fn defrauded(&self) -> bool {
        self.accepted() && self.reverted
    }
}

/// Accept/reject per payment as seen from one view.
pub fn merchant_observer(
    view: &FinalityState,
    payments: &[CheckpointId],
) -> Vec<(CheckpointId, bool)> {
    payments
        .iter()
        .map(|p| (*p, view.is_finalized(*p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finality::FinalityConfig;
    use crate::types::{Checkpoint, Vote};

    fn state(stakes: &[(u64, bool)]) -> FinalityState {
        let total: u64 = stakes.iter().map(|s| s.0).sum::<u64>() + 1000;
        let mut s = FinalityState::new(StakeAmount(total), FinalityConfig::default());
        for (i, (st, honest)) in stakes.iter().enumerate() {
            s.deposit(
                ValidatorId(i as u32),
                RegionId(0),
                StakeAmount(*st),
                *honest,
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn leak_only_hits_idle_validators() {
        let mut s = state(&[(1_999_999, true), (1_000_001, false)]);
        let rate: Rate = "1/10".parse().unwrap();
        let voters = BTreeSet::from([ValidatorId(0)]);
        let leaked = apply_inactivity_leak(&mut s, rate, &voters);
        assert_eq!(
            leaked,
            BTreeMap::from([(ValidatorId(1), StakeAmount(100_000))])
        );
        assert_eq!(
            s.validator(ValidatorId(1)).unwrap().deposit,
            StakeAmount(900_001)
        );
        assert_eq!(s.slashable_stake(), StakeAmount(2_900_000));
        assert!(s.supply().is_conserved());
    }

    #[test]
    fn attacker_fraction_strictly_decreases() {
        let mut s = state(&[(2_000_000, true), (1_000_003, false)]);
        let rate: Rate = "1/20".parse().unwrap();
        let voters = BTreeSet::from([ValidatorId(0)]);
        let mut prev = (1_000_003u128, 3_000_003u128);
        for _ in 0..30 {
            apply_inactivity_leak(&mut s, rate, &voters);
            let a = s.validator(ValidatorId(1)).unwrap().deposit.0 as u128;
            let t = s.slashable_stake().0 as u128;
            // a/t < prev.0/prev.1
            assert!(a * prev.1 < prev.0 * t);
            prev = (a, t);
        }
    }

    #[test]
    fn offline_tracker_threshold() {
        let mut t = OfflineTracker::default();
        let all = [ValidatorId(0), ValidatorId(1)];
        let only0 = BTreeSet::from([ValidatorId(0)]);
        t.record(all, &only0);
        t.record(all, &only0);
        assert!(t.flagged(3).is_empty());
        t.record(all, &only0);
        assert_eq!(t.flagged(3), BTreeSet::from([ValidatorId(1)]));
        t.record(all, &BTreeSet::from([ValidatorId(0), ValidatorId(1)]));
        assert!(t.flagged(3).is_empty());
    }

    #[test]
    fn soft_fork_identity_without_flags() {
        let mut s = state(&[(10, true)]);
        let before = s.snapshot();
        let fork = resolve_by_soft_fork(&mut s, [], &BTreeSet::new(), 100.0, 1.0);
        assert!(fork.censored.is_empty());
        assert_eq!(s.snapshot(), before);
        assert_eq!(fork.post_fork_price, Some(100.0 / 1000.0));
    }

    #[test]
    fn soft_fork_burns_evidence_and_raises_price() {
        let mut s = state(&[(10, true), (6, false)]);
        let parent = Checkpoint::genesis();
        s.add_checkpoint(Checkpoint::child_of(&parent, CheckpointId(1)), SimTime(0))
            .unwrap();
        s.add_checkpoint(Checkpoint::child_of(&parent, CheckpointId(2)), SimTime(0))
            .unwrap();
        let mk = |t| Vote {
            voter: ValidatorId(1),
            target: CheckpointId(t),
            round: 0,
            weight: StakeAmount(6),
        };
        s.process_vote(mk(1), SimTime(1));
        let ev = s.process_vote(mk(2), SimTime(1)).evidence.unwrap();
        let p_before = economics::velocity_price(100.0, 1.0, s.liquid().0 as f64 + 6.0).unwrap();
        let fork = resolve_by_soft_fork(&mut s, [&ev], &BTreeSet::new(), 100.0, 1.0);
        assert_eq!(fork.censored, BTreeSet::from([ValidatorId(1)]));
        assert_eq!(fork.burned, StakeAmount(6));
        assert!(fork.post_fork_price.unwrap() >= p_before);
    }

    #[test]
    fn merchant_accepts_only_when_final() {
        let mut s = state(&[(10, true)]);
        s.add_checkpoint(
            Checkpoint::child_of(&Checkpoint::genesis(), CheckpointId(1)),
            SimTime(0),
        )
        .unwrap();
        let mut m = MerchantObserver::new(RegionId(0), CheckpointId(1), 5.0);
        assert!(!m.observe(&s, SimTime(1)));
        assert_eq!(
            merchant_observer(&s, &[CheckpointId(1)]),
            vec![(CheckpointId(1), false)]
        );
        s.process_vote(
            Vote {
                voter: ValidatorId(0),
                target: CheckpointId(1),
                round: 0,
                weight: StakeAmount(10),
            },
            SimTime(2),
        );
        assert!(m.observe(&s, SimTime(2)));
        assert!(!m.observe(&s, SimTime(3)));
        assert_eq!(m.accepted_at, Some(SimTime(2)));
        assert!(!m.defrauded());
    }
}
