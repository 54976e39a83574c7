#![allow(dead_code)]

use pos_finality::attacks::ScenarioConfig;
use pos_finality::finality::{FinalityConfig, FinalityState};
use pos_finality::{Checkpoint, CheckpointId, RegionId, SimTime, StakeAmount, ValidatorId, Vote};

pub const YEAR: f64 = 365.0 * 24.0 * 3600.0;

/// Per-block discount via `powf`, independent of the library's log form.
pub fn beta_oracle(annual: f64, block_seconds: f64) -> f64 {
    annual.powf(block_seconds / YEAR)
}

/// Reward multiple from the discounted reward stream and the stake cost.
pub fn alpha_oracle(beta: f64) -> f64 {
    // attacker holds half of n* = p/c and each unit costs c / (1 - beta)
    let (p, c) = (1.0, 1.0);
    let n_attack = p / c / 2.0;
    let unit = c / (1.0 - beta);
    n_attack * unit / p
}

/// Epochs of leak until honest stake regains two thirds.
pub fn leak_epochs(attacker: u64, honest: u64, num: u64, den: u64) -> u64 {
    let mut a = attacker as u128;
    let h = honest as u128;
    let mut k = 0;
    while 3 * h < 2 * (h + a) {
        a -= a * num as u128 / den as u128;
        k += 1;
        assert!(k < 10_000, "leak never restores finality");
    }
    k
}

/// Root of p_b / x - p_v / (n - x) by bisection.
pub fn deposit_by_bisection(p_b: f64, p_v: f64, n: f64) -> f64 {
    let f = |x: f64| p_b / x - p_v / (n - x);
    let (mut lo, mut hi) = (n * 1e-15, n * (1.0 - 1e-15));
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= n * 1e-17 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Attacker in US, honest stake split across EU and US.
pub fn sabotage_config(
    attacker: u64,
    honest: u64,
    resolution: &str,
    start: u64,
    duration: u64,
    seed: u64,
) -> ScenarioConfig {
    let eu = honest / 2;
    let us = honest - eu;
    let text = format!(
        r#"
schema = "posfin-scenario/1"
name = "sabotage_probe"
seed = {seed}
total_supply = 100_000_000
duration_epochs = {duration}
proposer_region = "EU"

[[groups]]
name = "attacker"
region = "US"
stake = {attacker}
honest = false

[[groups]]
name = "eu"
region = "EU"
stake = {eu}
honest = true
validators = 3

[[groups]]
name = "us"
region = "US"
stake = {us}
honest = true
validators = 2

[latency]
regions = ["EU", "US"]
default_delay = 40
self_delay = 4
jitter = 5

[attack]
kind = "sabotage"
attacker = "attacker"
start_epoch = {start}

[resolution]
{resolution}
"#
    );
    ScenarioConfig::from_toml(&text).unwrap()
}

/// Attacker equivocating across a partition between EU and AF.
pub fn double_spend_config(attacker: u64, eu: u64, af: u64, seed: u64) -> ScenarioConfig {
    let text = format!(
        r#"
schema = "posfin-scenario/1"
name = "double_spend_probe"
seed = {seed}
total_supply = 100_000_000
duration_epochs = 3
proposer_region = "EU"

[[groups]]
name = "attacker"
region = "EU"
stake = {attacker}
honest = false

[[groups]]
name = "eu"
region = "EU"
stake = {eu}
honest = true
validators = 2

[[groups]]
name = "af"
region = "AF"
stake = {af}
honest = true
validators = 2

[latency]
regions = ["EU", "AF"]
default_delay = 5
jitter = 3

[[latency.partitions]]
a = "EU"
b = "AF"
start = 3000
end = 4400

[attack]
kind = "double_spend"
attacker = "attacker"
merchant_regions = ["EU", "AF"]
epoch = 2
v_attack = 1000.0

[resolution]
policy = "soft_fork_censor"
"#
    );
    ScenarioConfig::from_toml(&text).unwrap()
}

pub struct Outcome {
    pub conflict: bool,
    pub offender_stake: u64,
    /// Validators that voted for two checkpoints but have no evidence.
    pub unaccused_double_voters: usize,
    pub total: u64,
}

/// Every validator votes for each checkpoint in its bit mask, in validator
/// order. Slashing is deferred so the denominator stays fixed.
pub fn play(stakes: &[u64], k: usize, masks: &[u32], slash_immediately: bool) -> Outcome {
    let total: u64 = stakes.iter().sum();
    let mut s = FinalityState::new(StakeAmount(total + 1), FinalityConfig::default());
    for (i, st) in stakes.iter().enumerate() {
        s.deposit(ValidatorId(i as u32), RegionId(0), StakeAmount(*st), true)
            .unwrap();
    }
    let g = Checkpoint::genesis();
    for c in 1..=k {
        s.add_checkpoint(Checkpoint::child_of(&g, CheckpointId(c as u64)), SimTime(0))
            .unwrap();
    }
    for (i, mask) in masks.iter().enumerate() {
        for c in 0..k {
            if mask & (1 << c) != 0 {
                let vote = Vote {
                    voter: ValidatorId(i as u32),
                    target: CheckpointId(c as u64 + 1),
                    round: 0,
                    weight: StakeAmount(stakes[i]),
                };
                let out = s.process_vote(vote, SimTime(1));
                if slash_immediately {
                    if let Some(ev) = out.evidence {
                        s.apply_slash(&ev);
                    }
                }
            }
        }
    }
    let offender_stake = (0..stakes.len())
        .filter(|i| s.evidence_against(ValidatorId(*i as u32)).is_some())
        .map(|i| stakes[i])
        .sum();
    let unaccused_double_voters = masks
        .iter()
        .enumerate()
        .filter(|(i, m)| {
            m.count_ones() >= 2 && s.evidence_against(ValidatorId(*i as u32)).is_none()
        })
        .count();
    Outcome {
        conflict: !s.detect_conflicting_finalizations().is_empty(),
        offender_stake,
        unaccused_double_voters,
        total,
    }
}

pub fn exhaust(stakes: &[u64], k: usize, slash_immediately: bool) -> (u64, u64) {
    let n = stakes.len();
    let per = 1u32 << k;
    let mut conflicts = 0;
    let mut counterexamples = 0;
    for code in 0..(per as u64).pow(n as u32) {
        let masks: Vec<u32> = (0..n)
            .map(|i| ((code / (per as u64).pow(i as u32)) % per as u64) as u32)
            .collect();
        let o = play(stakes, k, &masks, slash_immediately);
        if o.unaccused_double_voters > 0 {
            counterexamples += 1;
        } else if o.conflict {
            conflicts += 1;
            if 3 * o.offender_stake < o.total {
                counterexamples += 1;
            }
        }
    }
    (conflicts, counterexamples)
}
