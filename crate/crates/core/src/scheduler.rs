//! Dual-resource fair queuing score, job ordering and per-mode queue delays.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{sample_lognormal, RngStream, SimTime};
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    EFaaS,
    SBQ,
    PF,
    SR,
    PQ,
}

impl ModeKind {
    pub const ALL: [ModeKind; 5] = [
        ModeKind::EFaaS,
        ModeKind::SBQ,
        ModeKind::PF,
        ModeKind::SR,
        ModeKind::PQ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::EFaaS => "efaas",
            ModeKind::SBQ => "sbq",
            ModeKind::PF => "pf",
            ModeKind::SR => "sr",
            ModeKind::PQ => "pq",
        }
    }

    /// Modes whose sessions keep a warm calibration cache across iterations.
    pub fn is_session_aware(self) -> bool {
        self == ModeKind::EFaaS
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModeKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| SimError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_drift: f64,
    pub epsilon_margin: f64,
    pub mode: ModeKind,
    pub queue_mu: f64,
    pub queue_sigma: f64,
    pub cold_start_overhead: f64,
    pub pq_startup: f64,
    pub pq_warm: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 5.0,
            gamma: 1.0,
            tau_drift: 300.0,
            epsilon_margin: 5.0,
            mode: ModeKind::EFaaS,
            queue_mu: 3.5,
            queue_sigma: 0.8,
            cold_start_overhead: 6.0,
            pq_startup: 2.0,
            pq_warm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobKind {
    QuantumCircuit,
    ClassicalStep,
    BackgroundBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobEntry {
    pub id: u64,
    pub kind: JobKind,
    pub session: Option<usize>,
    pub e_s: bool,
    pub enqueued_at: SimTime,
    /// Session jobs count their wait from the end of the previous shot.
    pub wait_origin: SimTime,
    pub weight: f64,
    /// Background service time; zero for session jobs.
    pub service_time: f64,
}

impl JobEntry {
    pub fn wait(&self, now: SimTime) -> f64 {
        now - self.wait_origin
    }
}

/// `alpha * [E_s = 1] + beta * (tau - wait) / tau + gamma * W`, unclamped.
pub fn priority_score(job: &JobEntry, now: SimTime, cfg: &SchedulerConfig) -> f64 {
    let boost = if job.e_s { cfg.alpha } else { 0.0 };
    let drift = cfg.beta * (cfg.tau_drift - job.wait(now)) / cfg.tau_drift;
    boost + drift + cfg.gamma * job.weight
}

/// Index of the job to serve next: highest score, then earliest enqueue, then lowest id.
pub fn select_next<'a, I>(jobs: I, now: SimTime, cfg: &SchedulerConfig) -> Option<usize>
where
    I: IntoIterator<Item = &'a JobEntry>,
{
    let mut best: Option<(usize, f64, &JobEntry)> = None;
    for (i, j) in jobs.into_iter().enumerate() {
        let rho = priority_score(j, now, cfg);
        let better = match best {
            None => true,
            Some((_, br, bj)) => {
                rho > br
                    || (rho == br
                        && (j.enqueued_at < bj.enqueued_at
                            || (j.enqueued_at == bj.enqueued_at && j.id < bj.id)))
            }
        };
        if better {
            best = Some((i, rho, j));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Full dispatch order of a snapshot queue.
pub fn dispatch_order(jobs: &[JobEntry], now: SimTime, cfg: &SchedulerConfig) -> Vec<u64> {
    let mut rest: Vec<JobEntry> = jobs.to_vec();
    let mut out = Vec::with_capacity(jobs.len());
    while let Some(i) = select_next(rest.iter(), now, cfg) {
        out.push(rest.remove(i).id);
    }
    out
}

/// Per-mode queueing state carried across submissions of one session.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueueState {
    pub pilot_started: bool,
    pub reservation_held: bool,
}

/// Sampled waiting time charged to a submission before it may take a QPU.
///
/// Contention for busy QPUs is simulated separately and adds to this.
pub fn queue_delay(
    mode: ModeKind,
    stream: &mut RngStream,
    cfg: &SchedulerConfig,
    state: &mut QueueState,
) -> Result<f64, SimError> {
    match mode {
        ModeKind::SBQ => sample_lognormal(stream, cfg.queue_mu, cfg.queue_sigma),
        ModeKind::PF => Ok(sample_lognormal(stream, cfg.queue_mu, cfg.queue_sigma)? + cfg.cold_start_overhead),
        ModeKind::SR => {
            if state.reservation_held {
                Ok(0.0)
            } else {
                state.reservation_held = true;
                sample_lognormal(stream, cfg.queue_mu, cfg.queue_sigma)
            }
        }
        ModeKind::PQ => {
            if state.pilot_started {
                Ok(cfg.pq_warm)
            } else {
                state.pilot_started = true;
                Ok(cfg.pq_startup)
            }
        }
        // Hot iterators go straight to their cached QPU; cold submissions
        // only wait if every QPU is busy.
        ModeKind::EFaaS => Ok(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub job: u64,
    pub kind: JobKind,
    pub mode: ModeKind,
    pub rho: f64,
    pub qpu: Option<usize>,
    pub queue_delay: f64,
    pub drift_triggered: bool,
}
