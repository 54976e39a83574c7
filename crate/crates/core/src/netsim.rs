//! Deterministic discrete-event machinery: a `(fire_at, seq)`-ordered event
//! queue, region-to-region latency with partitions, and a line-oriented trace.
//!
//! Randomness, when used at all (per-delivery jitter), comes from a
//! `ChaCha8Rng` seeded with `seed_from_u64(seed)`. Nothing reads the wall
//! clock or OS entropy.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{RegionId, SimTime};

pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("event scheduled at {fire_at} but current time is {now}")]
    EventInPast { fire_at: SimTime, now: SimTime },
    #[error("event cap of {cap} exceeded; livelock suspected")]
    LivelockSuspected { cap: u64 },
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("region index {0} out of range")]
    RegionOutOfRange(usize),
    #[error("delay matrix must be {n}x{n}")]
    BadDelayMatrix { n: usize },
}

/// A pair of regions that cannot exchange messages during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: RegionId,
    pub b: RegionId,
    pub start: SimTime,
    pub end: SimTime,
}

impl Partition {
    fn separates(&self, from: RegionId, to: RegionId) -> bool {
        (self.a == from && self.b == to) || (self.a == to && self.b == from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    regions: Vec<String>,
    /// `delay[from][to]` in ticks; need not be symmetric.
    delay: Vec<Vec<u64>>,
    partitions: Vec<Partition>,
    /// Upper bound (inclusive) of uniform additive jitter per delivery.
    jitter: u64,
}

impl LatencyModel {
    pub fn uniform(regions: Vec<String>, delay: u64) -> Self {
        let n = regions.len();
        LatencyModel {
            regions,
            delay: vec![vec![delay; n]; n],
            partitions: Vec::new(),
            jitter: 0,
        }
    }

    pub fn new(regions: Vec<String>, delay: Vec<Vec<u64>>) -> Result<Self, NetError> {
        let n = regions.len();
        if delay.len() != n || delay.iter().any(|row| row.len() != n) {
            return Err(NetError::BadDelayMatrix { n });
        }
        Ok(LatencyModel {
            regions,
            delay,
            partitions: Vec::new(),
            jitter: 0,
        })
    }

    pub fn with_partition(mut self, p: Partition) -> Result<Self, NetError> {
        self.check(p.a)?;
        self.check(p.b)?;
        self.partitions.push(p);
        Ok(self)
    }

    pub fn with_jitter(mut self, jitter: u64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn set_delay(&mut self, from: RegionId, to: RegionId, ticks: u64) -> Result<(), NetError> {
        self.check(from)?;
        self.check(to)?;
        self.delay[from.0][to.0] = ticks;
        Ok(())
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn region_ids(&self) -> impl Iterator<Item = RegionId> {
        (0..self.regions.len()).map(RegionId)
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn jitter(&self) -> u64 {
        self.jitter
    }

    pub fn region(&self, name: &str) -> Result<RegionId, NetError> {
        self.regions
            .iter()
            .position(|r| r == name)
            .map(RegionId)
            .ok_or_else(|| NetError::UnknownRegion(name.to_string()))
    }

    pub fn name(&self, id: RegionId) -> &str {
        &self.regions[id.0]
    }

    fn check(&self, id: RegionId) -> Result<(), NetError> {
        if id.0 < self.regions.len() {
            Ok(())
        } else {
            Err(NetError::RegionOutOfRange(id.0))
        }
    }

    pub fn delay(&self, from: RegionId, to: RegionId) -> u64 {
        self.delay[from.0][to.0]
    }

    /// Arrival time of a message sent at `sent`. A message whose transit
    /// overlaps an active partition between the two regions waits for the
    /// partition to end and then takes the full link delay.
    pub fn arrival(&self, from: RegionId, to: RegionId, sent: SimTime, extra: u64) -> SimTime {
        let delay = self.delay(from, to) + extra;
        let mut arrive = sent.after(delay);
        if from == to {
            return arrive;
        }
        loop {
            let mut moved = false;
            for p in self.partitions.iter().filter(|p| p.separates(from, to)) {
                let depart = SimTime(arrive.0 - delay);
                if depart < p.end && arrive >= p.start {
                    arrive = p.end.after(delay);
                    moved = true;
                }
            }
            if !moved {
                return arrive;
            }
        }
    }
}

/// Seeded generator for jitter.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, max]`.
    pub fn upto(&mut self, max: u64) -> u64 {
        if max == 0 {
            0
        } else {
            self.0.gen_range(0..=max)
        }
    }
}

/// One delivery per region, including the sender's own.
pub fn broadcast(
    sender: RegionId,
    at: SimTime,
    model: &LatencyModel,
    rng: &mut SimRng,
) -> Result<Vec<(RegionId, SimTime)>, NetError> {
    model.check(sender)?;
    Ok(model
        .region_ids()
        .map(|to| {
            let extra = rng.upto(model.jitter);
            (to, model.arrival(sender, to, at, extra))
        })
        .collect())
}

/// Payloads know how to describe themselves for the trace.
pub trait TracePayload {
    fn kind(&self) -> &'static str;
    /// Canonical text form; the trace records a digest of it.
    fn canonical(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.fire_at, self.0.seq) == (other.0.fire_at, other.0.seq)
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0.fire_at, self.0.seq).cmp(&(other.0.fire_at, other.0.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAt {
    Time(SimTime),
    Quiescence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub tick: u64,
    pub seq: u64,
    pub kind: String,
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub lines: Vec<TraceLine>,
}

impl Trace {
    /// `tick seq event_kind payload_digest`, one event per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let _ = writeln!(out, "{} {} {} {}", l.tick, l.seq, l.kind, l.digest);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, String> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = raw.split(' ').collect();
            if parts.len() != 4 {
                return Err(format!("line {}: expected 4 fields", i + 1));
            }
            let tick = parts[0]
                .parse()
                .map_err(|_| format!("line {}: bad tick", i + 1))?;
            let seq = parts[1]
                .parse()
                .map_err(|_| format!("line {}: bad seq", i + 1))?;
            lines.push(TraceLine {
                tick,
                seq,
                kind: parts[2].to_string(),
                digest: parts[3].to_string(),
            });
        }
        Ok(Trace { lines })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

pub fn payload_digest(canonical: &str) -> String {
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Queued<P>>>,
    processed: u64,
    cap: u64,
    trace: Trace,
}

impl<P: TracePayload> EventQueue<P> {
    pub fn new(cap: u64) -> Self {
        EventQueue {
            now: SimTime(0),
            next_seq: 0,
            heap: BinaryHeap::new(),
            processed: 0,
            cap,
            trace: Trace::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<u64, NetError> {
        if fire_at < self.now {
            return Err(NetError::EventInPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued(SimEvent {
            fire_at,
            seq,
            payload,
        })));
        Ok(seq)
    }

    /// Pops the next event due at or before `stop`, advancing the clock and
    /// appending it to the trace.
    pub fn pop(&mut self, stop: StopAt) -> Result<Option<SimEvent<P>>, NetError> {
        let due = match (self.heap.peek(), stop) {
            (None, _) => false,
            (Some(_), StopAt::Quiescence) => true,
            (Some(Reverse(Queued(ev))), StopAt::Time(t)) => ev.fire_at <= t,
        };
        if !due {
            return Ok(None);
        }
        if self.processed >= self.cap {
            return Err(NetError::LivelockSuspected { cap: self.cap });
        }
        let Reverse(Queued(ev)) = self.heap.pop().expect("peeked");
        self.processed += 1;
        self.now = ev.fire_at;
        self.trace.lines.push(TraceLine {
            tick: ev.fire_at.0,
            seq: ev.seq,
            kind: ev.payload.kind().to_string(),
            digest: payload_digest(&ev.payload.canonical()),
        });
        Ok(Some(ev))
    }

    /// Drives `handler` over every due event. The handler may schedule more.
    pub fn run_until<E, F>(&mut self, stop: StopAt, mut handler: F) -> Result<(), E>
    where
        E: From<NetError>,
        F: FnMut(&mut Self, SimEvent<P>) -> Result<(), E>,
    {
        while let Some(ev) = self.pop(stop)? {
            handler(self, ev)?;
        }
        if let StopAt::Time(t) = stop {
            if t > self.now {
                self.now = t;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Msg(&'static str);

    impl TracePayload for Msg {
        fn kind(&self) -> &'static str {
            "msg"
        }
        fn canonical(&self) -> String {
            self.0.to_string()
        }
    }

    fn drain(q: &mut EventQueue<Msg>) -> Vec<&'static str> {
        let mut seen = Vec::new();
        q.run_until::<NetError, _>(StopAt::Quiescence, |_, ev| {
            seen.push(ev.payload.0);
            Ok(())
        })
        .unwrap();
        seen
    }

    #[test]
    fn same_tick_runs_in_insertion_order() {
        let mut q = EventQueue::new(100);
        q.schedule(SimTime(5), Msg("a")).unwrap();
        q.schedule(SimTime(5), Msg("b")).unwrap();
        q.schedule(SimTime(3), Msg("c")).unwrap();
        assert_eq!(drain(&mut q), vec!["c", "a", "b"]);
    }

    #[test]
    fn current_time_runs_before_later() {
        let mut q = EventQueue::new(100);
        q.schedule(SimTime(10), Msg("later")).unwrap();
        let mut order = Vec::new();
        q.schedule(SimTime(0), Msg("now")).unwrap();
        q.run_until::<NetError, _>(StopAt::Quiescence, |q, ev| {
            order.push(ev.payload.0);
            if ev.payload.0 == "now" {
                let t = q.now();
                q.schedule(t, Msg("same-tick"))?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(order, vec!["now", "same-tick", "later"]);
    }

    #[test]
    fn past_event_rejected() {
        let mut q = EventQueue::new(100);
        q.schedule(SimTime(7), Msg("x")).unwrap();
        q.pop(StopAt::Quiescence).unwrap();
        assert_eq!(
            q.schedule(SimTime(6), Msg("y")),
            Err(NetError::EventInPast {
                fire_at: SimTime(6),
                now: SimTime(7)
            })
        );
    }

    #[test]
    fn empty_queue_is_quiescent() {
        let mut q: EventQueue<Msg> = EventQueue::new(100);
        assert!(drain(&mut q).is_empty());
        assert_eq!(q.now(), SimTime(0));
    }

    #[test]
    fn stop_time_leaves_later_events() {
        let mut q = EventQueue::new(100);
        q.schedule(SimTime(1), Msg("a")).unwrap();
        q.schedule(SimTime(9), Msg("b")).unwrap();
        q.run_until::<NetError, _>(StopAt::Time(SimTime(5)), |_, _| Ok(()))
            .unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.now(), SimTime(5));
    }

    #[test]
    fn cap_exceeded_is_livelock() {
        let mut q = EventQueue::new(3);
        q.schedule(SimTime(0), Msg("seed")).unwrap();
        let err = q
            .run_until::<NetError, _>(StopAt::Quiescence, |q, _| {
                let t = q.now();
                q.schedule(t.after(1), Msg("again"))?;
                Ok(())
            })
            .unwrap_err();
        assert_eq!(err, NetError::LivelockSuspected { cap: 3 });
    }

    fn three() -> LatencyModel {
        LatencyModel::uniform(vec!["EU".into(), "AF".into(), "US".into()], 5)
    }

    #[test]
    fn uniform_broadcast() {
        let m = three();
        let mut rng = SimRng::new(1);
        let d = broadcast(RegionId(0), SimTime(10), &m, &mut rng).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|(_, t)| *t == SimTime(15)));
    }

    #[test]
    fn partition_holds_until_end() {
        let t = 1000;
        let m = three()
            .with_partition(Partition {
                a: RegionId(0),
                b: RegionId(1),
                start: SimTime(t),
                end: SimTime(t + 100),
            })
            .unwrap();
        let mut rng = SimRng::new(1);
        let d = broadcast(RegionId(0), SimTime(t), &m, &mut rng).unwrap();
        assert_eq!(d[1], (RegionId(1), SimTime(t + 100 + 5)));
        assert_eq!(d[2], (RegionId(2), SimTime(t + 5)));
        // reverse direction is also cut
        assert_eq!(
            m.arrival(RegionId(1), RegionId(0), SimTime(t + 50), 0),
            SimTime(t + 105)
        );
        // after the partition, normal delay
        assert_eq!(
            m.arrival(RegionId(1), RegionId(0), SimTime(t + 100), 0),
            SimTime(t + 105)
        );
    }

    #[test]
    fn self_delivery_with_zero_delay() {
        let mut m = three();
        m.set_delay(RegionId(0), RegionId(0), 0).unwrap();
        let mut rng = SimRng::new(1);
        let d = broadcast(RegionId(0), SimTime(4), &m, &mut rng).unwrap();
        assert_eq!(d[0], (RegionId(0), SimTime(4)));
    }

    #[test]
    fn unknown_region_is_error() {
        let m = three();
        assert_eq!(
            m.region("ASIA"),
            Err(NetError::UnknownRegion("ASIA".into()))
        );
        let mut rng = SimRng::new(1);
        assert!(broadcast(RegionId(7), SimTime(0), &m, &mut rng).is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let m = three().with_jitter(10);
        let a: Vec<_> = (0..20)
            .map(|i| broadcast(RegionId(0), SimTime(i), &m, &mut SimRng::new(42)).unwrap())
            .collect();
        let b: Vec<_> = (0..20)
            .map(|i| broadcast(RegionId(0), SimTime(i), &m, &mut SimRng::new(42)).unwrap())
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_roundtrip() {
        let mut q = EventQueue::new(10);
        q.schedule(SimTime(2), Msg("x")).unwrap();
        q.schedule(SimTime(1), Msg("y")).unwrap();
        drain(&mut q);
        let text = q.trace().render();
        assert_eq!(Trace::parse(&text).unwrap(), *q.trace());
        assert!(text.starts_with("1 1 msg "));
    }
}
