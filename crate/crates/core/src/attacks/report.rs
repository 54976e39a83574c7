use serde::Serialize;

use crate::output::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub start_tick: u64,
    pub new_finalizations: u64,
    pub halted: bool,
    pub slashable: u64,
    pub attacker_deposit: u64,
    pub burned: u64,
    pub liquid: u64,
    pub leaked_honest: u64,
    pub leaked_attacker: u64,
    pub censored: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalityRecord {
    pub tick: u64,
    pub region: String,
    pub checkpoint: u64,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvidenceRecord {
    pub offender: String,
    pub group: String,
    pub region: String,
    pub detected_at: u64,
    pub target_a: u64,
    pub target_b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CensorRecord {
    pub validator: String,
    pub group: String,
    pub honest: bool,
    pub epoch: u64,
    pub burned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MerchantRecord {
    pub region: String,
    pub payment_checkpoint: u64,
    pub value: f64,
    pub accepted: bool,
    pub accepted_at: Option<u64>,
    pub reverted: bool,
    pub defrauded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupplyRecord {
    pub total: u64,
    pub active: u64,
    pub exiting: u64,
    pub liquid: u64,
    pub burned: u64,
    pub conserved: bool,
}

/// Outcome of one scenario run. Serialized with sorted keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub manifest: RunManifest,
    pub scenario: String,
    pub attack_kind: String,
    pub attack_precondition_met: bool,
    pub attacker_stake: u64,
    pub slashable_at_start: u64,
    pub conflicting_finalizations: Vec<[u64; 2]>,
    pub finality_events: Vec<FinalityRecord>,
    pub merchants: Vec<MerchantRecord>,
    pub merchants_accepted: u64,
    pub merchants_defrauded: u64,
    pub defrauded_value: f64,
    pub slashing_evidence: Vec<EvidenceRecord>,
    pub attacker_stake_burned: u64,
    /// Realized attack value minus burned stake at the pre-attack price.
    pub attacker_net: Option<f64>,
    pub price_pre_attack: Option<f64>,
    pub post_fork_price: Option<f64>,
    pub finalization_halt_epochs: u64,
    pub resume_epoch: Option<u64>,
    pub censored: Vec<CensorRecord>,
    pub false_positive_censored: u64,
    pub honest_leaked_units: u64,
    pub attacker_leaked_units: u64,
    pub surviving_checkpoint: Option<u64>,
    pub surviving_region: Option<String>,
    pub resolution_outcome: String,
    pub supply: SupplyRecord,
    pub epochs: Vec<EpochRecord>,
    pub events_processed: u64,
    pub trace_digest: String,
}
