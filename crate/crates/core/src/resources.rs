//! QPU pool with calibration-cache state machines, classical nodes and
//! background batch traffic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{sample_exponential, RngStream, SimTime};
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QpuState {
    Idle,
    SessionActive,
    CacheValid,
    CacheExpired,
    Recalibrating,
    BusyBackground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trigger {
    NewJob,
    ShotDone,
    NextTheta,
    Expire,
    RecalibStart,
    RecalibDone,
    JobDone,
    BgStart,
    BgDone,
}

impl fmt::Display for QpuState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Edge table of the calibration-cache automaton.
///
/// Besides the session cycle this admits a cold recalibration out of `Idle`
/// (a stale QPU picked up by a new job) and background work interleaved
/// from `Idle`.
pub fn next_state(state: QpuState, trigger: Trigger) -> Option<QpuState> {
    use QpuState::*;
    use Trigger::*;
    match (state, trigger) {
        (Idle, NewJob) => Some(SessionActive),
        (SessionActive, ShotDone) => Some(CacheValid),
        (CacheValid, NextTheta) => Some(SessionActive),
        (CacheValid, Expire) => Some(CacheExpired),
        (CacheExpired, RecalibStart) => Some(Recalibrating),
        (Idle, RecalibStart) => Some(Recalibrating),
        (Recalibrating, RecalibDone) => Some(SessionActive),
        (SessionActive, JobDone) => Some(Idle),
        // Session teardown while the cache is still warm.
        (CacheValid, JobDone) => Some(Idle),
        (Idle, BgStart) => Some(BusyBackground),
        (BusyBackground, BgDone) => Some(Idle),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub time: f64,
    pub qpu_id: usize,
    pub from: QpuState,
    pub to: QpuState,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftCause {
    /// Stale calibration discovered when a job was dispatched.
    Dispatch,
    /// Cache expiry timer fired while a session held the QPU.
    Expiry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub time: f64,
    pub qpu_id: usize,
    pub cause: DriftCause,
}

/// Calibration snapshot `C_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCache {
    pub created_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpuUnit {
    pub id: usize,
    pub state: QpuState,
    /// May precede the run start: QPUs enter the run part-way through a window.
    pub last_calib: SimTime,
    pub bound_session: Option<usize>,
    pub cache: Option<CalibrationCache>,
    /// Completion time of the in-flight recalibration, if any.
    pub pending_recalibration: Option<SimTime>,
    /// Held exclusively by a reservation or pilot; excluded from background work.
    pub reserved: bool,
    /// Expiry already handled for the current calibration window.
    pub expiry_logged: bool,
}

impl QpuUnit {
    pub fn new(id: usize, last_calib: SimTime) -> Self {
        Self {
            id,
            state: QpuState::Idle,
            last_calib,
            bound_session: None,
            cache: None,
            pending_recalibration: None,
            reserved: false,
            expiry_logged: false,
        }
    }

    pub fn calibration_age(&self, now: SimTime) -> f64 {
        now - self.last_calib
    }

    pub fn is_calibration_valid(&self, now: SimTime, tau_drift: f64) -> bool {
        is_calibration_valid(self, now, tau_drift)
    }

    pub fn is_free_for_background(&self) -> bool {
        self.state == QpuState::Idle && !self.reserved && self.bound_session.is_none()
    }

    /// Applies one automaton edge and appends it to `log`.
    pub fn transition(
        &mut self,
        trigger: Trigger,
        now: SimTime,
        log: &mut Vec<TransitionRecord>,
    ) -> Result<(), SimError> {
        let to = next_state(self.state, trigger).ok_or(SimError::IllegalTransition {
            qpu: self.id,
            state: self.state,
            trigger,
            time: now.0,
        })?;
        log.push(TransitionRecord {
            time: now.0,
            qpu_id: self.id,
            from: self.state,
            to,
            trigger,
        });
        self.state = to;
        Ok(())
    }

    /// `NextTheta` from `session`; rejected unless the cache belongs to it.
    pub fn next_theta(
        &mut self,
        session: usize,
        now: SimTime,
        log: &mut Vec<TransitionRecord>,
    ) -> Result<(), SimError> {
        if self.state == QpuState::CacheValid && self.bound_session != Some(session) {
            return Err(SimError::IllegalTransition {
                qpu: self.id,
                state: self.state,
                trigger: Trigger::NextTheta,
                time: now.0,
            });
        }
        self.transition(Trigger::NextTheta, now, log)
    }

    /// Starts a recalibration finishing at `now + t_calib`.
    ///
    /// Returns `None` when one is already in flight; the request is folded
    /// into it and no extra time is charged.
    pub fn trigger_recalibration(
        &mut self,
        now: SimTime,
        t_calib: f64,
        log: &mut Vec<TransitionRecord>,
    ) -> Result<Option<SimTime>, SimError> {
        if self.pending_recalibration.is_some() {
            return Ok(None);
        }
        self.transition(Trigger::RecalibStart, now, log)?;
        let done = now + t_calib;
        self.pending_recalibration = Some(done);
        Ok(Some(done))
    }

    pub fn complete_recalibration(
        &mut self,
        now: SimTime,
        log: &mut Vec<TransitionRecord>,
    ) -> Result<(), SimError> {
        if self.pending_recalibration != Some(now) {
            return Err(SimError::InvalidParameter(format!(
                "qpu {} has no recalibration due at {now}",
                self.id
            )));
        }
        self.transition(Trigger::RecalibDone, now, log)?;
        self.pending_recalibration = None;
        self.last_calib = now;
        self.expiry_logged = false;
        self.cache = Some(CalibrationCache { created_at: now });
        Ok(())
    }
}

/// `now - last_calib < tau_drift`.
pub fn is_calibration_valid(qpu: &QpuUnit, now: SimTime, tau_drift: f64) -> bool {
    now - qpu.last_calib < tau_drift
}

/// Replays a transition log through the automaton, one QPU at a time.
///
/// Every QPU starts `Idle`; each record must leave from the state the
/// previous record for that QPU entered, along a legal edge, with
/// non-decreasing timestamps.
pub fn replay_check(log: &[TransitionRecord], num_qpus: usize) -> Result<(), String> {
    let mut state = vec![QpuState::Idle; num_qpus];
    let mut last_t = vec![f64::NEG_INFINITY; num_qpus];
    for (i, r) in log.iter().enumerate() {
        let q = r.qpu_id;
        if q >= num_qpus {
            return Err(format!("record {i}: unknown qpu {q}"));
        }
        if r.from != state[q] {
            return Err(format!(
                "record {i}: qpu {q} leaves {:?} but automaton is in {:?}",
                r.from, state[q]
            ));
        }
        if next_state(r.from, r.trigger) != Some(r.to) {
            return Err(format!(
                "record {i}: no edge {:?} --{:?}--> {:?}",
                r.from, r.trigger, r.to
            ));
        }
        if r.time < last_t[q] {
            return Err(format!("record {i}: time goes backwards on qpu {q}"));
        }
        last_t[q] = r.time;
        state[q] = r.to;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalNode {
    pub id: usize,
    pub busy_until: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPool {
    pub nodes: Vec<ClassicalNode>,
}

impl ClassicalPool {
    pub fn new(size: usize) -> Self {
        Self {
            nodes: (0..size)
                .map(|id| ClassicalNode {
                    id,
                    busy_until: SimTime::ZERO,
                })
                .collect(),
        }
    }

    /// Books `duration` on the node that frees up first; returns (node, start).
    pub fn acquire(&mut self, now: SimTime, duration: f64) -> Option<(usize, SimTime)> {
        let node = self.nodes.iter_mut().min_by(|a, b| {
            a.busy_until
                .max(now)
                .cmp(&b.busy_until.max(now))
                .then(a.id.cmp(&b.id))
        })?;
        let start = node.busy_until.max(now);
        node.busy_until = start + duration;
        Some((node.id, start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundJob {
    pub arrival: SimTime,
    pub service_time: f64,
}

/// Poisson arrivals at `lambda_rate` on `[0, horizon)` with exponential service.
pub fn generate_background(
    stream: &mut RngStream,
    horizon: SimTime,
    lambda_rate: f64,
    mean_service: f64,
) -> Result<Vec<BackgroundJob>, SimError> {
    if !(lambda_rate >= 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "background rate must be >= 0, got {lambda_rate}"
        )));
    }
    let mut out = Vec::new();
    if lambda_rate == 0.0 {
        return Ok(out);
    }
    let mut t = 0.0;
    loop {
        t += sample_exponential(stream, 1.0 / lambda_rate)?;
        if t >= horizon.0 {
            break;
        }
        out.push(BackgroundJob {
            arrival: SimTime(t),
            service_time: sample_exponential(stream, mean_service)?,
        });
    }
    Ok(out)
}
