//! Scenario driver: regional finality views advanced by the event queue, with
//! scripted attacker behaviour layered on top of honest voting.
//!
//! Honest validators vote once per height, for the first checkpoint their
//! region's view receives that does not conflict with anything it has
//! finalized. Each region keeps its own `FinalityState`; merchants watch the
//! view of their region.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::config::{AttackConfig, ConfigError, ResolutionConfig, ScenarioConfig};
use super::report::{
    CensorRecord, EpochRecord, EvidenceRecord, FinalityRecord, MerchantRecord, ScenarioReport,
    SupplyRecord,
};
use super::resolution::{
    apply_inactivity_leak, resolve_by_soft_fork, select_surviving_branch, FinalityEvent,
    MerchantObserver, OfflineTracker,
};
use crate::economics;
use crate::finality::{
    conflicting_across_views, FinalityConfig, FinalityError, FinalityState, SlashingEvidence,
    VoteOutcome,
};
use crate::netsim::{
    broadcast, EventQueue, LatencyModel, NetError, SimRng, StopAt, Trace, TracePayload,
};
use crate::output::RunManifest;
use crate::types::{
    exceeds_one_third, Checkpoint, CheckpointId, RegionId, SimTime, StakeAmount, ValidatorId, Vote,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Finality(#[from] FinalityError),
    #[error("scenario {name:?} does not configure a {expected} attack")]
    WrongStrategy {
        name: String,
        expected: &'static str,
    },
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub trace: Trace,
    /// Final per-region views, indexed by region.
    pub views: Vec<FinalityState>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Payload {
    EpochStart(u64),
    EpochEnd(u64),
    Checkpoint {
        to: RegionId,
        cp: Checkpoint,
    },
    Vote {
        to: RegionId,
        vote: Vote,
    },
    Evidence {
        to: RegionId,
        evidence: SlashingEvidence,
    },
    PublishBranch {
        region: RegionId,
        branch: usize,
    },
}

impl TracePayload for Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::EpochStart(_) | Payload::EpochEnd(_) => "timer_fire",
            Payload::Checkpoint { .. } => "deliver_checkpoint",
            Payload::Vote { .. } => "deliver_vote",
            Payload::Evidence { .. } => "deliver_evidence",
            Payload::PublishBranch { .. } => "scenario_action",
        }
    }

    fn canonical(&self) -> String {
        match self {
            Payload::EpochStart(e) => format!("epoch_start epoch={e}"),
            Payload::EpochEnd(e) => format!("epoch_end epoch={e}"),
            Payload::Checkpoint { to, cp } => format!(
                "checkpoint to={} id={} height={} parent={}",
                to.0,
                cp.id.0,
                cp.height,
                cp.parent
                    .map(|p| p.0.to_string())
                    .unwrap_or_else(|| "-".into())
            ),
            Payload::Vote { to, vote } => format!(
                "vote to={} voter={} target={} round={} weight={}",
                to.0, vote.voter.0, vote.target.0, vote.round, vote.weight
            ),
            Payload::Evidence { to, evidence } => format!(
                "evidence to={} offender={} a={} b={} at={}",
                to.0,
                evidence.offender.0,
                evidence.vote_a.target.0,
                evidence.vote_b.target.0,
                evidence.detected_at
            ),
            Payload::PublishBranch { region, branch } => {
                format!("publish_branch region={} branch={}", region.0, branch)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Member {
    id: ValidatorId,
    group: usize,
    region: RegionId,
    stake: StakeAmount,
    honest: bool,
    attacker: bool,
}

struct Driver<'a> {
    cfg: &'a ScenarioConfig,
    model: LatencyModel,
    rng: SimRng,
    views: Vec<FinalityState>,
    members: Vec<Member>,
    attackers: BTreeSet<ValidatorId>,
    proposer: RegionId,
    epoch_len: u64,
    next_cp: u64,
    voted_heights: BTreeMap<ValidatorId, BTreeSet<u64>>,
    offline_epochs: BTreeSet<(usize, u64)>,
    finality_events: Vec<FinalityEvent>,
    finalized_anywhere: BTreeSet<CheckpointId>,
    finalized_since_epoch_end: u64,
    merchants: Vec<MerchantObserver>,
    branch_parent: Option<Checkpoint>,
    evidence_log: Vec<(RegionId, SlashingEvidence)>,
    tracker: OfflineTracker,
    censored: Vec<CensorRecord>,
    epochs: Vec<EpochRecord>,
    leaked_honest: u64,
    leaked_attacker: u64,
    current_seq: u64,
}

impl<'a> Driver<'a> {
    fn epoch_of(&self, t: SimTime) -> u64 {
        t.0 / self.epoch_len
    }

    fn member(&self, id: ValidatorId) -> &Member {
        &self.members[id.0 as usize]
    }

    fn new_checkpoint(&mut self, parent: &Checkpoint) -> Checkpoint {
        self.next_cp += 1;
        Checkpoint::child_of(parent, CheckpointId(self.next_cp))
    }

    fn broadcast_checkpoint(
        &mut self,
        q: &mut EventQueue<Payload>,
        from: RegionId,
        cp: &Checkpoint,
    ) -> Result<(), ScenarioError> {
        for (to, at) in broadcast(from, q.now(), &self.model, &mut self.rng)? {
            q.schedule(at, Payload::Checkpoint { to, cp: cp.clone() })?;
        }
        Ok(())
    }

    fn cast_vote(
        &mut self,
        q: &mut EventQueue<Payload>,
        voter: ValidatorId,
        from: RegionId,
        target: &Checkpoint,
    ) -> Result<(), ScenarioError> {
        let view = &self.views[from.0];
        let Some(state) = view.validator(voter) else {
            return Ok(());
        };
        if !state.status.is_slashable() {
            return Ok(());
        }
        let vote = Vote {
            voter,
            target: target.id,
            round: 0,
            weight: state.deposit,
        };
        self.voted_heights
            .entry(voter)
            .or_default()
            .insert(target.height);
        for (to, at) in broadcast(from, q.now(), &self.model, &mut self.rng)? {
            q.schedule(
                at,
                Payload::Vote {
                    to,
                    vote: vote.clone(),
                },
            )?;
        }
        Ok(())
    }

    /// Whether protocol-following behaviour applies to this member right now.
    fn follows_protocol(&self, m: &Member, epoch: u64) -> bool {
        if self.offline_epochs.contains(&(m.group, epoch)) {
            return false;
        }
        if m.attacker {
            if let AttackConfig::Sabotage { start_epoch, .. } = self.cfg.attack {
                if epoch >= start_epoch {
                    return false;
                }
            }
        }
        true
    }

    fn maybe_vote(
        &mut self,
        q: &mut EventQueue<Payload>,
        region: RegionId,
        cp_id: CheckpointId,
    ) -> Result<(), ScenarioError> {
        let view = &self.views[region.0];
        let Some(cp) = view.checkpoint(cp_id).cloned() else {
            return Ok(());
        };
        if view.finalized().iter().any(|f| view.conflicts(*f, cp.id)) {
            return Ok(());
        }
        let epoch = self.epoch_of(q.now());
        let voters: Vec<ValidatorId> = self
            .members
            .iter()
            .filter(|m| m.region == region)
            .filter(|m| self.follows_protocol(m, epoch))
            .filter(|m| {
                !self
                    .voted_heights
                    .get(&m.id)
                    .is_some_and(|h| h.contains(&cp.height))
            })
            .map(|m| m.id)
            .collect();
        for v in voters {
            self.cast_vote(q, v, region, &cp)?;
        }
        Ok(())
    }

    fn handle_outcome(
        &mut self,
        q: &mut EventQueue<Payload>,
        region: RegionId,
        outcome: VoteOutcome,
    ) -> Result<(), ScenarioError> {
        let now = q.now();
        for cp in &outcome.newly_finalized {
            self.finality_events.push(FinalityEvent {
                tick: now.0,
                seq: self.current_seq,
                region,
                checkpoint: *cp,
            });
            if self.finalized_anywhere.insert(*cp) {
                self.finalized_since_epoch_end += 1;
            }
        }
        if !outcome.newly_finalized.is_empty() {
            let view = &self.views[region.0];
            for m in self.merchants.iter_mut().filter(|m| m.region == region) {
                m.observe(view, now);
            }
        }
        if let Some(ev) = outcome.evidence {
            // Reporting is automatic: slash locally and gossip the evidence.
            self.views[region.0].apply_slash(&ev);
            if !self
                .evidence_log
                .iter()
                .any(|(_, e)| e.offender == ev.offender)
            {
                self.evidence_log.push((region, ev.clone()));
            }
            for (to, at) in broadcast(region, now, &self.model, &mut self.rng)? {
                if to != region {
                    q.schedule(
                        at,
                        Payload::Evidence {
                            to,
                            evidence: ev.clone(),
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    fn handle(
        &mut self,
        q: &mut EventQueue<Payload>,
        ev: crate::netsim::SimEvent<Payload>,
    ) -> Result<(), ScenarioError> {
        self.current_seq = ev.seq;
        let now = q.now();
        match ev.payload {
            Payload::EpochStart(e) => self.on_epoch_start(q, e)?,
            Payload::EpochEnd(e) => self.on_epoch_end(e),
            Payload::Checkpoint { to, cp } => {
                let id = cp.id;
                let outcomes = self.views[to.0].add_checkpoint(cp, now)?;
                for o in outcomes {
                    self.handle_outcome(q, to, o)?;
                }
                self.maybe_vote(q, to, id)?;
            }
            Payload::Vote { to, vote } => {
                let outcome = self.views[to.0].process_vote(vote, now);
                self.handle_outcome(q, to, outcome)?;
            }
            Payload::Evidence { to, evidence } => {
                self.views[to.0].apply_slash(&evidence);
            }
            Payload::PublishBranch { region, branch } => self.publish_branch(q, region, branch)?,
        }
        Ok(())
    }

    fn on_epoch_start(
        &mut self,
        q: &mut EventQueue<Payload>,
        epoch: u64,
    ) -> Result<(), ScenarioError> {
        if let AttackConfig::DoubleSpend {
            merchant_regions,
            epoch: attack_epoch,
            second_branch_delay,
            ..
        } = &self.cfg.attack
        {
            if epoch == *attack_epoch {
                let a = self.model.region(&merchant_regions[0])?;
                let b = self.model.region(&merchant_regions[1])?;
                let now = q.now();
                q.schedule(
                    now,
                    Payload::PublishBranch {
                        region: a,
                        branch: 0,
                    },
                )?;
                q.schedule(
                    now.after(*second_branch_delay),
                    Payload::PublishBranch {
                        region: b,
                        branch: 1,
                    },
                )?;
                return Ok(());
            }
        }
        let parent = self.views[self.proposer.0].head().clone();
        let cp = self.new_checkpoint(&parent);
        self.broadcast_checkpoint(q, self.proposer, &cp)
    }

    /// One half of the equivocation: a checkpoint carrying the payment to the
    /// merchant in `region`, backed by the attacker's full stake.
    fn publish_branch(
        &mut self,
        q: &mut EventQueue<Payload>,
        region: RegionId,
        branch: usize,
    ) -> Result<(), ScenarioError> {
        let parent = match (&self.branch_parent, branch) {
            (Some(p), b) if b > 0 => p.clone(),
            _ => {
                let p = self.views[region.0].head().clone();
                self.branch_parent = Some(p.clone());
                p
            }
        };
        let cp = self.new_checkpoint(&parent);
        let value = match &self.cfg.attack {
            AttackConfig::DoubleSpend { v_attack, .. } => *v_attack,
            _ => 0.0,
        };
        self.merchants
            .push(MerchantObserver::new(region, cp.id, value));
        self.broadcast_checkpoint(q, region, &cp)?;
        let attackers: Vec<ValidatorId> = self.attackers.iter().copied().collect();
        for a in attackers {
            self.cast_vote(q, a, region, &cp)?;
        }
        Ok(())
    }

    fn on_epoch_end(&mut self, epoch: u64) {
        let voters: Vec<BTreeSet<ValidatorId>> = self
            .views
            .iter_mut()
            .map(|v| v.take_epoch_voters())
            .collect();
        let reference = self.proposer.0;
        let mut leaked_honest = 0u64;
        let mut leaked_attacker = 0u64;
        if let ResolutionConfig::InactivityLeak { rate, .. } = self.cfg.resolution {
            for (i, view) in self.views.iter_mut().enumerate() {
                let leaked = apply_inactivity_leak(view, rate, &voters[i]);
                if i == reference {
                    for (id, amount) in leaked {
                        if self.attackers.contains(&id) {
                            leaked_attacker += amount.0;
                        } else if self.members[id.0 as usize].honest {
                            leaked_honest += amount.0;
                        }
                    }
                }
            }
        }
        self.leaked_honest += leaked_honest;
        self.leaked_attacker += leaked_attacker;

        let mut censored_now = 0u64;
        if let ResolutionConfig::SoftForkCensor { t_offline, .. } = self.cfg.resolution {
            let expected: Vec<ValidatorId> = self.views[reference]
                .validators()
                .filter(|v| v.status.is_slashable())
                .map(|v| v.id)
                .collect();
            self.tracker.record(expected, &voters[reference]);
            let flagged: BTreeSet<ValidatorId> = self
                .tracker
                .flagged(t_offline)
                .into_iter()
                .filter(|id| {
                    self.views[reference]
                        .validator(*id)
                        .is_some_and(|v| v.status.is_slashable())
                })
                .collect();
            if !flagged.is_empty() {
                let mut burned_ref = BTreeMap::new();
                for (i, view) in self.views.iter_mut().enumerate() {
                    let before: BTreeMap<ValidatorId, StakeAmount> = flagged
                        .iter()
                        .map(|id| {
                            (
                                *id,
                                view.validator(*id).map(|v| v.deposit).unwrap_or_default(),
                            )
                        })
                        .collect();
                    resolve_by_soft_fork(
                        view,
                        [],
                        &flagged,
                        self.cfg.market.demand,
                        self.cfg.market.velocity,
                    );
                    if i == reference {
                        burned_ref = before;
                    }
                }
                for id in &flagged {
                    let m = self.member(*id);
                    self.censored.push(CensorRecord {
                        validator: id.to_string(),
                        group: self.cfg.groups[m.group].name.clone(),
                        honest: m.honest,
                        epoch,
                        burned: burned_ref.get(id).map(|a| a.0).unwrap_or(0),
                    });
                    censored_now += 1;
                }
            }
        }

        let view = &self.views[reference];
        let supply = view.supply();
        let attacker_deposit: u64 = self
            .attackers
            .iter()
            .filter_map(|a| view.validator(*a))
            .map(|v| v.deposit.0)
            .sum();
        self.epochs.push(EpochRecord {
            epoch,
            start_tick: epoch * self.epoch_len,
            new_finalizations: self.finalized_since_epoch_end,
            halted: self.finalized_since_epoch_end == 0,
            slashable: view.slashable_stake().0,
            attacker_deposit,
            burned: supply.burned.0,
            liquid: supply.liquid.0,
            leaked_honest,
            leaked_attacker,
            censored: censored_now,
        });
        self.finalized_since_epoch_end = 0;
    }
}

/// Runs a double-spend scenario; errors if the config scripts another attack.
pub fn run_double_spend(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    if !matches!(cfg.attack, AttackConfig::DoubleSpend { .. }) {
        return Err(ScenarioError::WrongStrategy {
            name: cfg.name.clone(),
            expected: "double_spend",
        });
    }
    run_scenario(cfg)
}

/// Runs a sabotage scenario; errors if the config scripts another attack.
pub fn run_sabotage(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    if !matches!(cfg.attack, AttackConfig::Sabotage { .. }) {
        return Err(ScenarioError::WrongStrategy {
            name: cfg.name.clone(),
            expected: "sabotage",
        });
    }
    run_scenario(cfg)
}

/// Runs any scenario to quiescence.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let model = cfg.latency.build()?;
    let proposer = match &cfg.proposer_region {
        Some(p) => model.region(p)?,
        None => RegionId(0),
    };
    let attacker_group = cfg.attack.attacker().map(|name| {
        cfg.groups
            .iter()
            .position(|g| g.name == name)
            .expect("validated")
    });

    let mut members = Vec::new();
    for (gi, g) in cfg.groups.iter().enumerate() {
        let region = model.region(&g.region)?;
        let n = g.validators as u64;
        let share = g.stake / n;
        let rem = g.stake % n;
        for k in 0..n {
            members.push(Member {
                id: ValidatorId(members.len() as u32),
                group: gi,
                region,
                stake: StakeAmount(share + if k == 0 { rem } else { 0 }),
                honest: g.honest,
                attacker: Some(gi) == attacker_group,
            });
        }
    }
    let attackers: BTreeSet<ValidatorId> = members
        .iter()
        .filter(|m| m.attacker)
        .map(|m| m.id)
        .collect();

    let fcfg = FinalityConfig {
        withdrawal_delay: cfg.withdrawal_delay,
        ..FinalityConfig::default()
    };
    let mut base = FinalityState::new(StakeAmount(cfg.total_supply), fcfg);
    // Honest stake first; the attacker then buys from what is left.
    for m in members.iter().filter(|m| !m.attacker) {
        base.deposit(m.id, m.region, m.stake, m.honest)
            .map_err(|e| ScenarioError::Infeasible(e.to_string()))?;
    }
    let pre_attack_liquid = base.liquid();
    let honest_stake = base.slashable_stake();
    if cfg.enforce_liquidity_cap
        && attacker_group.is_some()
        && pre_attack_liquid.0 as u128 * 2 < honest_stake.0 as u128
    {
        return Err(ScenarioError::Infeasible(format!(
            "liquid supply {pre_attack_liquid} is below half of existing stake {honest_stake}"
        )));
    }
    for m in members.iter().filter(|m| m.attacker) {
        base.deposit(m.id, m.region, m.stake, m.honest)
            .map_err(|e| {
                ScenarioError::Infeasible(format!("attacker cannot acquire stake: {e}"))
            })?;
    }
    let slashable_at_start = base.slashable_stake();
    let attacker_stake: StakeAmount = members.iter().filter(|m| m.attacker).map(|m| m.stake).sum();

    let precondition = match &cfg.attack {
        AttackConfig::DoubleSpend {
            merchant_regions,
            epsilon_units,
            ..
        } => {
            for r in merchant_regions {
                let rid = model.region(r)?;
                if !members.iter().any(|m| !m.attacker && m.region == rid) {
                    return Err(ScenarioError::Infeasible(format!(
                        "no non-attacker stake in merchant region {r:?}"
                    )));
                }
            }
            // attacker - slashable/3 >= 2 * epsilon
            attacker_stake.0 as u128 * 3
                >= slashable_at_start.0 as u128 + 6 * *epsilon_units as u128
        }
        AttackConfig::Sabotage { .. } => exceeds_one_third(attacker_stake, slashable_at_start),
        AttackConfig::None => false,
    };

    let offline_epochs = cfg
        .offline
        .iter()
        .map(|o| {
            (
                cfg.groups
                    .iter()
                    .position(|g| g.name == o.group)
                    .expect("validated"),
                o.epoch,
            )
        })
        .collect();

    let views = model.region_ids().map(|_| base.clone()).collect();
    let mut driver = Driver {
        cfg,
        model,
        rng: SimRng::new(cfg.seed),
        views,
        members,
        attackers,
        proposer,
        epoch_len: cfg.epoch_ticks(),
        next_cp: 0,
        voted_heights: BTreeMap::new(),
        offline_epochs,
        finality_events: Vec::new(),
        finalized_anywhere: BTreeSet::new(),
        finalized_since_epoch_end: 0,
        merchants: Vec::new(),
        branch_parent: None,
        evidence_log: Vec::new(),
        tracker: OfflineTracker::default(),
        censored: Vec::new(),
        epochs: Vec::new(),
        leaked_honest: 0,
        leaked_attacker: 0,
        current_seq: 0,
    };

    let mut queue: EventQueue<Payload> = EventQueue::new(cfg.max_events);
    for e in 1..=cfg.duration_epochs {
        queue.schedule(SimTime(e * driver.epoch_len), Payload::EpochStart(e))?;
        queue.schedule(SimTime((e + 1) * driver.epoch_len), Payload::EpochEnd(e))?;
    }
    queue.run_until(StopAt::Quiescence, |q, ev| driver.handle(q, ev))?;
    let events_processed = queue.processed();
    let trace = queue.into_trace();

    Ok(finish(
        driver,
        cfg,
        trace,
        events_processed,
        attacker_stake,
        slashable_at_start,
        pre_attack_liquid,
        precondition,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mut d: Driver<'_>,
    cfg: &ScenarioConfig,
    trace: Trace,
    events_processed: u64,
    attacker_stake: StakeAmount,
    slashable_at_start: StakeAmount,
    pre_attack_liquid: StakeAmount,
    precondition: bool,
) -> ScenarioRun {
    let conflicts = conflicting_across_views(d.views.iter());
    let choice = select_surviving_branch(
        &conflicts,
        &d.finality_events,
        &d.views,
        &d.attackers,
        cfg.resolution.branch_preference(),
    );
    let surviving = choice.map(|c| c.region).unwrap_or(d.proposer);

    if let Some(c) = choice {
        let view = &d.views[surviving.0];
        for m in d.merchants.iter_mut() {
            m.reverted = view.conflicts(m.payment, c.survivor);
        }
    }

    // Evidence seen anywhere is applied on the surviving chain.
    let evidence: Vec<SlashingEvidence> = d.evidence_log.iter().map(|(_, e)| e.clone()).collect();
    let fork = resolve_by_soft_fork(
        &mut d.views[surviving.0],
        evidence.iter(),
        &BTreeSet::new(),
        cfg.market.demand,
        cfg.market.velocity,
    );

    let view = &d.views[surviving.0];
    let attacker_burned: u64 = d.attackers.iter().map(|a| view.burned_from(*a).0).sum();
    let price_pre_attack = economics::velocity_price(
        cfg.market.demand,
        cfg.market.velocity,
        pre_attack_liquid.0 as f64,
    )
    .ok();
    let defrauded_value: f64 = d
        .merchants
        .iter()
        .filter(|m| m.defrauded())
        .map(|m| m.value)
        .sum();
    let attacker_net = price_pre_attack.map(|p| defrauded_value - attacker_burned as f64 * p);

    let (window_start, window_end) = match cfg.attack {
        AttackConfig::Sabotage { start_epoch, .. } => (start_epoch, cfg.duration_epochs),
        _ => (1, cfg.duration_epochs),
    };
    let in_window = |e: &&EpochRecord| e.epoch >= window_start && e.epoch <= window_end;
    let halt_epochs = d
        .epochs
        .iter()
        .filter(in_window)
        .filter(|e| e.halted)
        .count() as u64;
    let resume_epoch = d
        .epochs
        .iter()
        .filter(in_window)
        .find(|e| !e.halted)
        .map(|e| e.epoch);

    let region_name = |r: RegionId| d.model.name(r).to_string();
    let group_name = |id: ValidatorId| cfg.groups[d.members[id.0 as usize].group].name.clone();

    let finality_events: Vec<FinalityRecord> = d
        .finality_events
        .iter()
        .map(|e| FinalityRecord {
            tick: e.tick,
            region: region_name(e.region),
            checkpoint: e.checkpoint.0,
            height: d.views[e.region.0]
                .checkpoint(e.checkpoint)
                .map(|c| c.height)
                .unwrap_or(0),
        })
        .collect();

    let merchants: Vec<MerchantRecord> = d
        .merchants
        .iter()
        .map(|m| MerchantRecord {
            region: region_name(m.region),
            payment_checkpoint: m.payment.0,
            value: m.value,
            accepted: m.accepted(),
            accepted_at: m.accepted_at.map(|t| t.0),
            reverted: m.reverted,
            defrauded: m.defrauded(),
        })
        .collect();

    let slashing_evidence: Vec<EvidenceRecord> = d
        .evidence_log
        .iter()
        .map(|(r, e)| EvidenceRecord {
            offender: e.offender.to_string(),
            group: group_name(e.offender),
            region: region_name(*r),
            detected_at: e.detected_at.0,
            target_a: e.vote_a.target.0,
            target_b: e.vote_b.target.0,
        })
        .collect();

    let resolution_outcome = describe_resolution(
        cfg,
        &d,
        &conflicts,
        choice.map(|c| c.survivor),
        surviving,
        &fork.censored,
        resume_epoch,
        halt_epochs,
    );

    let supply = view.supply();
    let conserved = d.views.iter().all(|v| v.supply().is_conserved());
    let false_positive_censored = d.censored.iter().filter(|c| c.honest).count() as u64;

    let report = ScenarioReport {
        manifest: RunManifest::for_config(cfg),
        scenario: cfg.name.clone(),
        attack_kind: match cfg.attack {
            AttackConfig::None => "none",
            AttackConfig::DoubleSpend { .. } => "double_spend",
            AttackConfig::Sabotage { .. } => "sabotage",
        }
        .to_string(),
        attack_precondition_met: precondition,
        attacker_stake: attacker_stake.0,
        slashable_at_start: slashable_at_start.0,
        conflicting_finalizations: conflicts.iter().map(|(a, b)| [a.0, b.0]).collect(),
        finality_events,
        merchants_accepted: merchants.iter().filter(|m| m.accepted).count() as u64,
        merchants_defrauded: merchants.iter().filter(|m| m.defrauded).count() as u64,
        merchants,
        defrauded_value,
        slashing_evidence,
        attacker_stake_burned: attacker_burned,
        attacker_net,
        price_pre_attack,
        post_fork_price: fork.post_fork_price,
        finalization_halt_epochs: halt_epochs,
        resume_epoch,
        censored: d.censored.clone(),
        false_positive_censored,
        honest_leaked_units: d.leaked_honest,
        attacker_leaked_units: d.leaked_attacker,
        surviving_checkpoint: choice.map(|c| c.survivor.0),
        surviving_region: choice.map(|c| region_name(c.region)),
        resolution_outcome,
        supply: SupplyRecord {
            total: supply.total.0,
            active: supply.active.0,
            exiting: supply.exiting.0,
            liquid: supply.liquid.0,
            burned: supply.burned.0,
            conserved,
        },
        epochs: d.epochs.clone(),
        events_processed,
        trace_digest: trace.digest(),
    };
    ScenarioRun {
        report,
        trace,
        views: d.views,
    }
}

#[allow(clippy::too_many_arguments)]
fn describe_resolution(
    cfg: &ScenarioConfig,
    d: &Driver<'_>,
    conflicts: &BTreeSet<(CheckpointId, CheckpointId)>,
    survivor: Option<CheckpointId>,
    surviving: RegionId,
    censored_at_end: &BTreeSet<ValidatorId>,
    resume_epoch: Option<u64>,
    halt_epochs: u64,
) -> String {
    let mut parts = Vec::new();
    if let Some(s) = survivor {
        let reverted: BTreeSet<CheckpointId> = conflicts
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .filter(|c| d.views[surviving.0].conflicts(*c, s))
            .collect();
        let reverted: Vec<String> = reverted.iter().map(|c| c.to_string()).collect();
        parts.push(format!(
            "kept {} finalized in {}; reverted {}",
            s,
            d.model.name(surviving),
            reverted.join(",")
        ));
    } else {
        parts.push("no conflicting finalizations".to_string());
    }
    let slashed: BTreeSet<ValidatorId> = d
        .evidence_log
        .iter()
        .map(|(_, e)| e.offender)
        .chain(censored_at_end.iter().copied())
        .collect();
    if !slashed.is_empty() {
        let ids: Vec<String> = slashed.iter().map(|v| v.to_string()).collect();
        parts.push(format!("slashed for equivocation: {}", ids.join(",")));
    }
    if let AttackConfig::Sabotage { .. } = cfg.attack {
        let policy = match cfg.resolution {
            ResolutionConfig::None { .. } => "no resolution policy",
            ResolutionConfig::SoftForkCensor { .. } => "soft-fork censoring",
            ResolutionConfig::InactivityLeak { .. } => "inactivity leak",
        };
        match resume_epoch {
            Some(e) => parts.push(format!(
                "finality resumed at epoch {e} after {halt_epochs} halted epochs ({policy})"
            )),
            None => parts.push(format!(
                "finality halted for {halt_epochs} epochs ({policy})"
            )),
        }
    }
    if !d.censored.is_empty() {
        parts.push(format!(
            "{} validators censored as offline",
            d.censored.len()
        ));
    }
    parts.join("; ")
}
