//! Deterministic discrete-event core.
//!
//! The engine owns a virtual clock and a priority queue of [`Event`]s keyed
//! by `(fire_at, sequence)`. Events that fire at the same instant are handed
//! out in the order they were scheduled. All randomness in a run flows through
//! named [`RngStream`]s derived from one global seed, so disabling one
//! stochastic process never perturbs the draws seen by another.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Simulated seconds since the start of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    #[inline]
    pub fn secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

/// Who an event is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    None,
    Session,
    Background(usize),
    Qpu(usize),
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A quantum job reaches the scheduler queue.
    JobArrival,
    ShotComplete,
    CpuStepComplete,
    CalibrationComplete,
    /// Eager calibration-expiry timer for a cached QPU.
    CalibrationExpiry,
    BackgroundArrival,
    FutureResolved,
    HorizonEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: Payload,
    /// Free-form tag used by handlers to discard stale timers.
    pub tag: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Virtual clock plus pending events.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    now: SimTime,
    next_seq: u64,
    processed: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
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

    /// Schedules an event. Scheduling before the current clock is rejected.
    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        kind: EventKind,
        payload: Payload,
        tag: u64,
    ) -> Result<u64, SimError> {
        if !(fire_at.0 >= self.now.0) || !fire_at.0.is_finite() {
            return Err(SimError::EventInPast {
                fire_at: fire_at.0,
                now: self.now.0,
            });
        }
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            fire_at,
            sequence,
            kind,
            payload,
            tag,
        });
        Ok(sequence)
    }

    pub fn schedule_in(
        &mut self,
        delay: f64,
        kind: EventKind,
        payload: Payload,
        tag: u64,
    ) -> Result<u64, SimError> {
        self.schedule(self.now + delay, kind, payload, tag)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.fire_at)
    }

    /// Pops the next event if it fires at or before `horizon`, advancing the clock.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<Event> {
        match self.heap.peek() {
            Some(e) if e.fire_at <= horizon => {
                let e = self.heap.pop().expect("peeked");
                debug_assert!(e.fire_at >= self.now);
                self.now = e.fire_at;
                self.processed += 1;
                Some(e)
            }
            _ => None,
        }
    }

    /// Drives `handler` over every event with `fire_at <= horizon`.
    ///
    /// On return the clock reads `min(horizon, last event time)` when the
    /// queue drained early, and `horizon` otherwise.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut EventQueue, Event) -> Result<(), SimError>,
    {
        while let Some(e) = self.pop_until(horizon) {
            handler(self, e)?;
        }
        if self.heap.peek().is_some() && self.now < horizon {
            self.now = horizon;
        }
        Ok(())
    }
}

/// A named, independently seeded random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    rng: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    /// Stream keyed by `(seed, name)`. The name selects a ChaCha stream id,
    /// so distinct names never share keystream.
    pub fn new(seed: u64, name: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(name.as_bytes()));
        Self {
            name: name.to_string(),
            rng,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        self.rng.gen_range(lo..hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        Normal::new(0.0, 1.0).expect("unit normal").sample(&mut self.rng)
    }

    /// Rademacher draw: +1 or -1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// `exp(N(mu, sigma^2))`.
pub fn sample_lognormal(stream: &mut RngStream, mu: f64, sigma: f64) -> Result<f64, SimError> {
    if !(sigma > 0.0) || !mu.is_finite() {
        return Err(SimError::InvalidParameter(format!(
            "lognormal requires sigma > 0 (got mu={mu}, sigma={sigma})"
        )));
    }
    let d = LogNormal::new(mu, sigma).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    Ok(d.sample(&mut stream.rng))
}

pub fn sample_exponential(stream: &mut RngStream, mean: f64) -> Result<f64, SimError> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(SimError::InvalidParameter(format!(
            "exponential requires mean > 0 (got {mean})"
        )));
    }
    let d = Exp::new(1.0 / mean).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    loop {
        let x = d.sample(&mut stream.rng);
        if x > 0.0 {
            return Ok(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_orders_by_time() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(3.0), EventKind::HorizonEnd, Payload::None, 0)
            .unwrap();
        q.schedule(SimTime(5.0), EventKind::JobArrival, Payload::None, 0)
            .unwrap();
        let e = q.pop_until(SimTime(10.0)).unwrap();
        assert_eq!(e.fire_at, SimTime(3.0));
        assert_eq!(q.now(), SimTime(3.0));
        assert_eq!(q.peek_time(), Some(SimTime(5.0)));
    }

    #[test]
    fn ties_are_fifo() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5.0), EventKind::JobArrival, Payload::None, 1)
            .unwrap();
        q.schedule(SimTime(5.0), EventKind::JobArrival, Payload::None, 2)
            .unwrap();
        assert_eq!(q.pop_until(SimTime(9.0)).unwrap().tag, 1);
        assert_eq!(q.pop_until(SimTime(9.0)).unwrap().tag, 2);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(3.0), EventKind::JobArrival, Payload::None, 0)
            .unwrap();
        q.pop_until(SimTime(10.0)).unwrap();
        let err = q
            .schedule(SimTime(2.0), EventKind::JobArrival, Payload::None, 0)
            .unwrap_err();
        assert!(err.to_string().contains("event in past"));
    }

    #[test]
    fn horizon_only_queue_ends_at_horizon() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(3000.0), EventKind::HorizonEnd, Payload::None, 0)
            .unwrap();
        q.run_until(SimTime(3000.0), |_, _| Ok(())).unwrap();
        assert_eq!(q.now(), SimTime(3000.0));
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut q = EventQueue::new();
        for t in [1.0, 2.0, 3.0] {
            q.schedule(SimTime(t), EventKind::JobArrival, Payload::None, 0)
                .unwrap();
        }
        let mut seen = 0;
        q.run_until(SimTime(2.5), |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 2);
        assert_eq!(q.now(), SimTime(2.5));
    }

    #[test]
    fn lognormal_mean_matches_closed_form() {
        let mut s = RngStream::new(11, "queue-delay");
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_lognormal(&mut s, 3.5, 0.8).unwrap())
            .sum::<f64>()
            / n as f64;
        let expected = (3.5f64 + 0.8 * 0.8 / 2.0).exp();
        assert!((expected - 45.60).abs() < 0.01);
        assert!((mean - expected).abs() / expected < 0.01, "mean {mean}");
    }

    #[test]
    fn lognormal_small_sigma_collapses_to_exp_mu() {
        let mut s = RngStream::new(3, "queue-delay");
        for _ in 0..100 {
            let x = sample_lognormal(&mut s, 3.5, 1e-9).unwrap();
            assert!((x - 3.5f64.exp()).abs() < 1e-6);
        }
        assert!((3.5f64.exp() - 33.12).abs() < 0.01);
    }

    #[test]
    fn lognormal_rejects_nonpositive_sigma() {
        let mut s = RngStream::new(0, "x");
        assert!(sample_lognormal(&mut s, 3.5, 0.0).is_err());
        assert!(sample_lognormal(&mut s, 3.5, -1.0).is_err());
    }

    #[test]
    fn same_seed_and_name_reproduce() {
        let mut a = RngStream::new(42, "qpu-jitter");
        let mut b = RngStream::new(42, "qpu-jitter");
        for _ in 0..100 {
            assert_eq!(
                sample_lognormal(&mut a, 3.5, 0.8).unwrap(),
                sample_lognormal(&mut b, 3.5, 0.8).unwrap()
            );
        }
        let mut c = RngStream::new(42, "background");
        let mut a = RngStream::new(42, "qpu-jitter");
        let same = (0..100).filter(|_| a.uniform() == c.uniform()).count();
        assert!(same < 3);
    }

    #[test]
    fn exponential_moments() {
        let mut s = RngStream::new(5, "background");
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_exponential(&mut s, 5.0).unwrap())
            .collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() < 0.05, "mean {mean}");
        let tail = draws.iter().filter(|&&x| x > 5.0).count() as f64 / n as f64;
        assert!((tail - (-1.0f64).exp()).abs() < 0.01, "tail {tail}");
        assert!(sample_exponential(&mut s, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn dequeue_is_sorted(times in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.schedule(SimTime(*t), EventKind::JobArrival, Payload::None, i as u64).unwrap();
            }
            let mut last: Option<(SimTime, u64)> = None;
            let mut n = 0;
            while let Some(e) = q.pop_until(SimTime(1e9)) {
                if let Some(prev) = last {
                    prop_assert!((e.fire_at, e.sequence) > prev);
                }
                last = Some((e.fire_at, e.sequence));
                n += 1;
            }
            prop_assert_eq!(n, times.len());
        }

        #[test]
        fn clock_never_decreases(times in proptest::collection::vec(0.0f64..50.0, 1..100), horizon in 0.0f64..60.0) {
            let mut q = EventQueue::new();
            for t in &times {
                q.schedule(SimTime(*t), EventKind::JobArrival, Payload::None, 0).unwrap();
            }
            let mut prev = SimTime::ZERO;
            q.run_until(SimTime(horizon), |q, e| {
                assert!(q.now() >= prev);
                assert!(e.fire_at.0 <= horizon);
                prev = q.now();
                Ok(())
            }).unwrap();
        }
    }
}
