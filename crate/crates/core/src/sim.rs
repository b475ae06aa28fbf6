//! Event-driven simulation of one VQE session on a shared QPU pool.
//!
//! Iteration `k` becomes ready when shot `k - 1` ends. It then spends a
//! classical block, a network hop, a queueing interval, an optional
//! recalibration and the shot itself; `ttns` is the sum of these five parts.

use crate::config::{ExperimentConfig, JitterDist};
use crate::engine::{Event, EventKind, EventQueue, Payload, RngStream, SimTime};
use crate::error::SimError;
use crate::metrics::{
    compute_qdc_with, percentile, ConvergenceTime, IterationRecord, RunSummary, StopBound,
};
use crate::quantum::drift_fidelity;
use crate::resources::{
    generate_background, BackgroundJob, ClassicalPool, DriftCause, DriftEvent, QpuState, QpuUnit,
    TransitionRecord, Trigger,
};
use crate::scheduler::{
    priority_score, queue_delay, select_next, DecisionRecord, JobEntry, JobKind, ModeKind,
    QueueState, SchedulerConfig,
};
use crate::workload::{
    residual_classical_block, CircuitBenchmark, LazyTrace, QuantumFutureHandle, TrajectorySource,
    VqeDriver,
};

/// Identifies one simulation run.
#[derive(Debug, Clone, Copy)]
pub struct RunSpec<'a> {
    pub config: &'a ExperimentConfig,
    pub config_hash: &'a str,
    pub variant: &'a str,
    pub circuit: &'a CircuitBenchmark,
    pub mode: ModeKind,
    pub seed: u64,
}

impl RunSpec<'_> {
    pub fn run_id(&self) -> String {
        format!("{}-{}-{}-s{}", self.variant, self.mode, self.circuit.id, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub summary: RunSummary,
    pub transitions: Vec<TransitionRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub drift_events: Vec<DriftEvent>,
    /// Completed foreground shots.
    pub shot_intervals: Vec<(f64, f64)>,
    /// Completed background jobs.
    pub background_intervals: Vec<(f64, f64)>,
}

/// Builds the live VQE driver for a run.
pub fn make_driver(spec: &RunSpec) -> Result<VqeDriver, SimError> {
    let c = spec.config;
    VqeDriver::new(spec.circuit, spec.seed, c.spsa(), c.shots, c.detector(), c.theta_init_scale)
}

/// Runs one simulation with a private trajectory.
pub fn run_single(spec: &RunSpec) -> Result<RunOutput, SimError> {
    let mut trace = LazyTrace::new(make_driver(spec)?);
    let mut source = TrajectorySource::new(&mut trace, Box::new(|| make_driver(spec)));
    simulate(spec, &mut source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Classical,
    Submitted,
    Queued,
    Calibrating,
    Running,
    Done,
}

/// Timestamps of the iteration in progress.
#[derive(Debug, Clone, Copy, Default)]
struct Iter {
    ready: f64,
    submitted: f64,
    net: f64,
    dispatched: f64,
    shot_start: f64,
    qpu: usize,
    drift: bool,
    fidelity: f64,
}

struct Queued {
    entry: JobEntry,
    background: Option<usize>,
}

struct Sim<'s, 'a> {
    spec: &'s RunSpec<'a>,
    cfg: &'a ExperimentConfig,
    sched: SchedulerConfig,
    /// Ordering used for the shared queue; baselines are FIFO.
    order: SchedulerConfig,
    qpus: Vec<QpuUnit>,
    classical: ClassicalPool,
    jitter: RngStream,
    delays: RngStream,
    bg_place: RngStream,
    qstate: QueueState,
    queue: Vec<Queued>,
    background: Vec<BackgroundJob>,
    /// QPU and start time of each placed background job.
    bg_qpu: Vec<Option<(usize, f64)>>,
    next_job: u64,
    /// QPU the session holds between shots (cached or reserved).
    home: Option<usize>,
    /// Bumped on every calibration refresh of the cached QPU.
    epoch: u64,
    e_s: bool,
    phase: Phase,
    cur: Iter,
    future: Option<QuantumFutureHandle>,
    last_overlap: f64,
    completed: usize,
    converged: Option<f64>,
    hit_max_iter: bool,
    records: Vec<IterationRecord>,
    transitions: Vec<TransitionRecord>,
    decisions: Vec<DecisionRecord>,
    drift: Vec<DriftEvent>,
    shots: Vec<(f64, f64)>,
    bg_intervals: Vec<(f64, f64)>,
    max_bg_wait: f64,
}

/// Simulates `spec` drawing energies from `source`.
pub fn simulate(spec: &RunSpec, source: &mut TrajectorySource<'_>) -> Result<RunOutput, SimError> {
    spec.config.validate()?;
    let cfg = spec.config;
    let id = &spec.circuit.id;
    let sched = cfg.scheduler(spec.mode);
    let order = if spec.mode.is_session_aware() {
        sched
    } else {
        SchedulerConfig {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..sched
        }
    };
    let mut calib_init = RngStream::new(spec.seed, &format!("calib-init/{id}"));
    let qpus = (0..cfg.num_qpus)
        .map(|i| QpuUnit::new(i, SimTime(-calib_init.uniform_range(0.0, cfg.init_calib_age_max))))
        .collect();
    let mut bg_stream = RngStream::new(spec.seed, &format!("background/{id}"));
    let background = generate_background(&mut bg_stream, SimTime(cfg.horizon), cfg.lambda_bg, cfg.bg_service_mean)?;

    let mut sim = Sim {
        spec,
        cfg,
        sched,
        order,
        qpus,
        classical: ClassicalPool::new(cfg.num_classical),
        jitter: RngStream::new(spec.seed, &format!("qpu-jitter/{id}")),
        delays: RngStream::new(spec.seed, &format!("queue-delay/{id}")),
        bg_place: RngStream::new(spec.seed, &format!("bg-placement/{id}")),
        qstate: QueueState::default(),
        queue: Vec::new(),
        bg_qpu: vec![None; background.len()],
        background,
        next_job: 0,
        home: None,
        epoch: 0,
        e_s: false,
        phase: Phase::Classical,
        cur: Iter::default(),
        future: None,
        last_overlap: 0.0,
        completed: 0,
        converged: None,
        hit_max_iter: false,
        records: Vec::new(),
        transitions: Vec::new(),
        decisions: Vec::new(),
        drift: Vec::new(),
        shots: Vec::new(),
        bg_intervals: Vec::new(),
        max_bg_wait: 0.0,
    };

    let horizon = SimTime(cfg.horizon);
    let mut q = EventQueue::new();
    q.schedule(horizon, EventKind::HorizonEnd, Payload::None, 0)?;
    for (i, job) in sim.background.iter().enumerate() {
        q.schedule(job.arrival, EventKind::BackgroundArrival, Payload::Background(i), 0)?;
    }
    if cfg.max_iter > 0 {
        sim.start_iteration(&mut q)?;
    } else {
        sim.phase = Phase::Done;
        sim.hit_max_iter = true;
    }
    q.run_until(horizon, |q, ev| sim.handle(q, ev, source))?;
    sim.finish()
}

impl<'s, 'a> Sim<'s, 'a> {
    fn handle(&mut self, q: &mut EventQueue, ev: Event, source: &mut TrajectorySource<'_>) -> Result<(), SimError> {
        match (ev.kind, ev.payload) {
            (EventKind::CpuStepComplete, _) => {
                self.expect_phase(Phase::Classical, &ev)?;
                self.submit(q)
            }
            (EventKind::JobArrival, Payload::Session) => {
                self.expect_phase(Phase::Submitted, &ev)?;
                self.session_arrives(q)
            }
            (EventKind::CalibrationComplete, Payload::Qpu(id)) => {
                self.expect_phase(Phase::Calibrating, &ev)?;
                let now = q.now();
                self.qpus[id].complete_recalibration(now, &mut self.transitions)?;
                if self.spec.mode == ModeKind::EFaaS {
                    self.arm_expiry(q, id)?;
                }
                self.start_shot(q, id)
            }
            (EventKind::CalibrationExpiry, Payload::Qpu(id)) => {
                self.expire(q.now(), id, ev.tag);
                Ok(())
            }
            (EventKind::ShotComplete, Payload::Session) => {
                self.expect_phase(Phase::Running, &ev)?;
                self.session_shot_done(q, source)
            }
            (EventKind::ShotComplete, Payload::Background(i)) => {
                let (qpu, start) = self.bg_qpu[i].expect("background job placed");
                let now = q.now();
                self.qpus[qpu].transition(Trigger::BgDone, now, &mut self.transitions)?;
                self.bg_intervals.push((start, now.0));
                self.try_dispatch(q)
            }
            (EventKind::BackgroundArrival, Payload::Background(i)) => {
                let job = self.background[i];
                let entry = self.entry(JobKind::BackgroundBatch, q.now(), q.now(), job.service_time);
                self.queue.push(Queued {
                    entry,
                    background: Some(i),
                });
                self.try_dispatch(q)
            }
            (EventKind::HorizonEnd, _) => Ok(()),
            (kind, payload) => Err(SimError::InvalidParameter(format!(
                "unexpected event {kind:?} for {payload:?}"
            ))),
        }
    }

    fn expect_phase(&self, want: Phase, ev: &Event) -> Result<(), SimError> {
        if self.phase == want {
            Ok(())
        } else {
            Err(SimError::InvalidParameter(format!(
                "{:?} at {} while session is {:?}",
                ev.kind, ev.fire_at, self.phase
            )))
        }
    }

    fn entry(&mut self, kind: JobKind, now: SimTime, origin: SimTime, service: f64) -> JobEntry {
        let id = self.next_job;
        self.next_job += 1;
        let session = kind == JobKind::QuantumCircuit;
        JobEntry {
            id,
            kind,
            session: session.then_some(0),
            e_s: session && self.e_s,
            enqueued_at: now,
            wait_origin: origin,
            weight: if session {
                self.cfg.weight_session
            } else {
                self.cfg.weight_background
            },
            service_time: service,
        }
    }

    fn start_iteration(&mut self, q: &mut EventQueue) -> Result<(), SimError> {
        let now = q.now();
        self.phase = Phase::Classical;
        self.cur = Iter {
            ready: now.0,
            ..Iter::default()
        };
        // The initial parameters need no classical step.
        let block = if self.completed == 0 {
            0.0
        } else if self.spec.mode == ModeKind::EFaaS {
            residual_classical_block(self.cfg.t_cpu, self.last_overlap)
        } else {
            self.cfg.t_cpu
        };
        let (node, start) = self
            .classical
            .acquire(now, block)
            .ok_or_else(|| SimError::InvalidParameter("empty classical pool".into()))?;
        q.schedule(start + block, EventKind::CpuStepComplete, Payload::Node(node), 0)?;
        Ok(())
    }

    fn submit(&mut self, q: &mut EventQueue) -> Result<(), SimError> {
        let now = q.now();
        self.phase = Phase::Submitted;
        self.cur.submitted = now.0;
        let budget = if self.spec.mode == ModeKind::EFaaS {
            self.cfg.t_async
        } else {
            0.0
        };
        self.future = Some(QuantumFutureHandle::new(now, budget));
        // The pilot agent runs next to the QPU, so PQ pays no network hop.
        self.cur.net = if self.spec.mode == ModeKind::PQ {
            0.0
        } else {
            self.cfg.t_net
        };
        let delay = queue_delay(self.spec.mode, &mut self.delays, &self.sched, &mut self.qstate)?;
        q.schedule(now + (self.cur.net + delay), EventKind::JobArrival, Payload::Session, 0)?;
        Ok(())
    }

    fn session_arrives(&mut self, q: &mut EventQueue) -> Result<(), SimError> {
        let now = q.now();
        if let Some(home) = self.home {
            let entry = self.entry(JobKind::QuantumCircuit, now, SimTime(self.cur.ready), 0.0);
            return self.place_session(q, home, &entry);
        }
        self.phase = Phase::Queued;
        let entry = self.entry(JobKind::QuantumCircuit, now, SimTime(self.cur.ready), 0.0);
        self.queue.push(Queued {
            entry,
            background: None,
        });
        self.try_dispatch(q)
    }

    /// Pops queued jobs onto free QPUs until either runs out.
    fn try_dispatch(&mut self, q: &mut EventQueue) -> Result<(), SimError> {
        let now = q.now();
        loop {
            let free: Vec<usize> = self
                .qpus
                .iter()
                .filter(|u| u.is_free_for_background())
                .map(|u| u.id)
                .collect();
            if free.is_empty() || self.queue.is_empty() {
                return Ok(());
            }
            let i = select_next(self.queue.iter().map(|j| &j.entry), now, &self.order).expect("non-empty queue");
            let job = self.queue.remove(i);
            match job.background {
                None => {
                    let qpu = self.pick_qpu(&free, now);
                    self.place_session(q, qpu, &job.entry)?;
                }
                Some(b) => {
                    // Other tenants' work lands on any free QPU.
                    let qpu = free[self.bg_place.index(free.len())];
                    self.qpus[qpu].transition(Trigger::BgStart, now, &mut self.transitions)?;
                    self.bg_qpu[b] = Some((qpu, now.0));
                    let wait = job.entry.wait(now);
                    self.max_bg_wait = self.max_bg_wait.max(wait);
                    self.decisions.push(DecisionRecord {
                        time: now.0,
                        job: job.entry.id,
                        kind: job.entry.kind,
                        mode: self.spec.mode,
                        rho: priority_score(&job.entry, now, &self.order),
                        qpu: Some(qpu),
                        queue_delay: wait,
                        drift_triggered: false,
                    });
                    q.schedule(now + self.background[b].service_time, EventKind::ShotComplete, Payload::Background(b), 0)?;
                }
            }
        }
    }

    /// Session placement among free QPUs: freshest calibration under
    /// EFaaS, lowest id otherwise.
    fn pick_qpu(&self, free: &[usize], now: SimTime) -> usize {
        if self.spec.mode == ModeKind::EFaaS {
            *free
                .iter()
                .min_by(|a, b| {
                    self.qpus[**a]
                        .calibration_age(now)
                        .total_cmp(&self.qpus[**b].calibration_age(now))
                        .then(a.cmp(b))
                })
                .expect("non-empty")
        } else {
            free[0]
        }
    }

    fn place_session(&mut self, q: &mut EventQueue, id: usize, job: &JobEntry) -> Result<(), SimError> {
        let now = q.now();
        let mode = self.spec.mode;
        let tau = self.cfg.tau_drift;
        let renew_at = tau - self.cfg.epsilon_margin;
        self.cur.dispatched = now.0;
        self.cur.qpu = id;
        let mut recalibrate = false;
        let mut drift = false;
        let qpu = &mut self.qpus[id];
        match mode {
            ModeKind::EFaaS => match qpu.state {
                QpuState::CacheValid if qpu.is_calibration_valid(now, tau) => {
                    qpu.next_theta(0, now, &mut self.transitions)?;
                    qpu.last_calib = now;
                    qpu.cache = Some(crate::resources::CalibrationCache { created_at: now });
                }
                QpuState::CacheValid | QpuState::CacheExpired => {
                    if qpu.state == QpuState::CacheValid {
                        qpu.transition(Trigger::Expire, now, &mut self.transitions)?;
                        self.drift.push(DriftEvent {
                            time: now.0,
                            qpu_id: id,
                            cause: DriftCause::Dispatch,
                        });
                    }
                    drift = true;
                    recalibrate = true;
                }
                _ => {
                    qpu.bound_session = Some(0);
                    self.home = Some(id);
                    if qpu.calibration_age(now) >= renew_at {
                        recalibrate = true;
                    } else {
                        qpu.transition(Trigger::NewJob, now, &mut self.transitions)?;
                    }
                }
            },
            ModeKind::SR => {
                qpu.reserved = true;
                self.home = Some(id);
                if qpu.calibration_age(now) >= renew_at {
                    recalibrate = true;
                } else {
                    qpu.transition(Trigger::NewJob, now, &mut self.transitions)?;
                }
            }
            ModeKind::SBQ | ModeKind::PF | ModeKind::PQ => {
                if mode == ModeKind::PQ {
                    qpu.reserved = true;
                    self.home = Some(id);
                }
                if qpu.is_calibration_valid(now, tau) {
                    qpu.transition(Trigger::NewJob, now, &mut self.transitions)?;
                } else {
                    self.drift.push(DriftEvent {
                        time: now.0,
                        qpu_id: id,
                        cause: DriftCause::Dispatch,
                    });
                    drift = true;
                    recalibrate = true;
                }
            }
        }
        self.cur.drift = drift;
        self.decisions.push(DecisionRecord {
            time: now.0,
            job: job.id,
            kind: job.kind,
            mode,
            rho: priority_score(job, now, &self.order),
            qpu: Some(id),
            queue_delay: now.0 - (self.cur.submitted + self.cur.net),
            drift_triggered: drift,
        });
        if recalibrate {
            self.phase = Phase::Calibrating;
            let done = self.qpus[id].trigger_recalibration(now, self.cfg.t_calib, &mut self.transitions)?;
            if let Some(done) = done {
                q.schedule(done, EventKind::CalibrationComplete, Payload::Qpu(id), 0)?;
            }
            return Ok(());
        }
        if mode == ModeKind::EFaaS {
            self.arm_expiry(q, id)?;
        }
        self.start_shot(q, id)
    }

    /// Eager expiry timer for the cached QPU; older timers go stale.
    fn arm_expiry(&mut self, q: &mut EventQueue, id: usize) -> Result<(), SimError> {
        self.epoch += 1;
        let at = self.qpus[id].last_calib + self.cfg.tau_drift;
        q.schedule(at.max(q.now()), EventKind::CalibrationExpiry, Payload::Qpu(id), self.epoch)?;
        Ok(())
    }

    fn expire(&mut self, now: SimTime, id: usize, tag: u64) {
        let qpu = &mut self.qpus[id];
        if tag != self.epoch || qpu.state != QpuState::CacheValid || qpu.is_calibration_valid(now, self.cfg.tau_drift) {
            return;
        }
        // Only reachable from CacheValid, so the edge exists.
        if qpu.transition(Trigger::Expire, now, &mut self.transitions).is_ok() {
            qpu.expiry_logged = true;
            self.drift.push(DriftEvent {
                time: now.0,
                qpu_id: id,
                cause: DriftCause::Expiry,
            });
        }
    }

    fn start_shot(&mut self, q: &mut EventQueue, id: usize) -> Result<(), SimError> {
        let now = q.now();
        self.phase = Phase::Running;
        self.cur.shot_start = now.0;
        self.cur.fidelity = drift_fidelity(self.qpus[id].calibration_age(now), self.cfg.tau_drift, self.cfg.tau_decay);
        let j = self.cfg.t_qpu_jitter;
        let t = match self.cfg.t_qpu_jitter_dist {
            JitterDist::Uniform => self.jitter.uniform_range(self.cfg.t_qpu - j, self.cfg.t_qpu + j),
            JitterDist::Gaussian => self.cfg.t_qpu + j * self.jitter.standard_normal(),
        };
        q.schedule(now + t.max(1e-3), EventKind::ShotComplete, Payload::Session, 0)?;
        Ok(())
    }

    fn session_shot_done(&mut self, q: &mut EventQueue, source: &mut TrajectorySource<'_>) -> Result<(), SimError> {
        let now = q.now();
        let id = self.cur.qpu;
        let k = self.completed;
        let outcome = source.next(self.cur.fidelity)?;
        if !outcome.energy.is_finite() {
            return Err(SimError::NonFiniteEnergy { iteration: k });
        }
        let mut future = self.future.take().expect("submitted future");
        future.resolve(now, outcome.energy)?;
        future.commit()?;
        self.last_overlap = future.speculative_overlap();

        let c = &self.cur;
        self.records.push(IterationRecord {
            run_id: self.spec.run_id(),
            circuit_id: self.spec.circuit.id.clone(),
            band: self.spec.circuit.band,
            mode: self.spec.mode,
            iteration: k,
            ttns: now.0 - c.ready,
            queue_delay: c.dispatched - (c.submitted + c.net),
            calib_time: c.shot_start - c.dispatched,
            qpu_time: now.0 - c.shot_start,
            residual_cpu_block: c.submitted - c.ready,
            energy: outcome.energy,
            drift_event: c.drift,
            timestamp: now.0,
            net_time: c.net,
            config_hash: self.spec.config_hash.to_string(),
        });
        self.shots.push((c.shot_start, now.0));
        self.completed += 1;
        if outcome.converged_now && self.converged.is_none() {
            self.converged = Some(now.0);
        }

        let last = self.completed >= self.cfg.max_iter;
        let qpu = &mut self.qpus[id];
        if self.spec.mode == ModeKind::EFaaS {
            qpu.transition(Trigger::ShotDone, now, &mut self.transitions)?;
            self.e_s = true;
            if last {
                qpu.transition(Trigger::JobDone, now, &mut self.transitions)?;
                qpu.bound_session = None;
                self.e_s = false;
                self.home = None;
            }
        } else {
            qpu.transition(Trigger::JobDone, now, &mut self.transitions)?;
            if last {
                qpu.reserved = false;
                self.home = None;
            }
        }
        if last {
            self.phase = Phase::Done;
            self.hit_max_iter = true;
        } else {
            self.start_iteration(q)?;
        }
        self.try_dispatch(q)
    }

    fn finish(self) -> Result<RunOutput, SimError> {
        let cfg = self.cfg;
        let ttns: Vec<f64> = self.records.iter().map(|r| r.ttns).collect();
        let mut intervals = self.shots.clone();
        if cfg.qdc_include_background {
            intervals.extend_from_slice(&self.bg_intervals);
        }
        let qdc = compute_qdc_with(&intervals, cfg.num_qpus, cfg.horizon, cfg.qdc_pool_normalized)?;
        let n = self.records.len();
        let calibrated = self.records.iter().filter(|r| r.calib_time > 0.0).count();
        let unserved = self.queue.iter().filter(|j| j.background.is_some()).count();
        let summary = RunSummary {
            config_hash: self.spec.config_hash.to_string(),
            variant: self.spec.variant.to_string(),
            mode: self.spec.mode,
            circuit_id: self.spec.circuit.id.clone(),
            band: self.spec.circuit.band,
            qubits: self.spec.circuit.num_qubits,
            seed: self.spec.seed,
            mean_ttns: crate::metrics::mean(&ttns),
            ttns_p25: percentile(&ttns, 0.25),
            ttns_p50: percentile(&ttns, 0.5),
            ttns_p75: percentile(&ttns, 0.75),
            qdc,
            convergence_time: match self.converged {
                Some(t) => ConvergenceTime::Converged(t),
                None => ConvergenceTime::DidNotConverge,
            },
            iterations_completed: n,
            drift_events: self.drift.len(),
            calib_overhead_fraction: if n == 0 { 0.0 } else { calibrated as f64 / n as f64 },
            bound: if self.hit_max_iter {
                StopBound::MaxIter
            } else {
                StopBound::Horizon
            },
            convergence_window: cfg.convergence_window,
            convergence_epsilon: cfg.convergence_epsilon,
            qdc_pool_normalized: cfg.qdc_pool_normalized,
            max_background_wait: self.max_bg_wait,
            background_unserved: unserved,
        };
        Ok(RunOutput {
            records: self.records,
            summary,
            transitions: self.transitions,
            decisions: self.decisions,
            drift_events: self.drift,
            shot_intervals: self.shots,
            background_intervals: self.bg_intervals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::replay_check;
    use crate::workload::generate_suite;

    fn run(cfg: &ExperimentConfig, mode: ModeKind, circuit: usize, seed: u64) -> RunOutput {
        let suite = generate_suite(cfg.suite_seed, cfg.field_min, cfg.field_max).unwrap();
        let hash = cfg.hash();
        let spec = RunSpec {
            config: cfg,
            config_hash: &hash,
            variant: "test",
            circuit: &suite[circuit],
            mode,
            seed,
        };
        run_single(&spec).unwrap()
    }

    #[test]
    fn every_mode_produces_sound_logs() {
        let cfg = ExperimentConfig::default();
        for mode in ModeKind::ALL {
            let out = run(&cfg, mode, 0, 3);
            assert!(!out.records.is_empty(), "{mode}");
            replay_check(&out.transitions, cfg.num_qpus).unwrap();
            for r in &out.records {
                assert!(r.decomposition_error().abs() < 1e-9, "{mode} {r:?}");
                assert!(r.timestamp <= cfg.horizon);
                assert!(r.queue_delay >= -1e-12 && r.calib_time >= 0.0);
            }
            assert_eq!(out.summary.drift_events, out.drift_events.len());
            assert!(out.summary.qdc > 0.0 && out.summary.qdc <= 1.0);
        }
    }

    #[test]
    fn efaas_hot_iterations_follow_overlap_model() {
        let cfg = ExperimentConfig::default();
        let out = run(&cfg, ModeKind::EFaaS, 1, 0);
        for r in out.records.iter().skip(1) {
            assert_eq!(r.queue_delay, 0.0);
            assert_eq!(r.calib_time, 0.0);
            assert!((r.residual_cpu_block - 0.7).abs() < 1e-12);
            assert!((r.ttns - (0.7 + 0.5 + r.qpu_time)).abs() < 1e-9);
        }
        assert_eq!(out.summary.drift_events, 0);
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let cfg = ExperimentConfig::default();
        let a = run(&cfg, ModeKind::SBQ, 2, 5);
        let b = run(&cfg, ModeKind::SBQ, 2, 5);
        assert_eq!(a.records, b.records);
        assert_eq!(a.transitions, b.transitions);
    }

    #[test]
    fn max_iter_tears_down_the_session() {
        let cfg = ExperimentConfig {
            max_iter: 5,
            ..ExperimentConfig::default()
        };
        for mode in ModeKind::ALL {
            let out = run(&cfg, mode, 0, 1);
            assert_eq!(out.records.len(), 5);
            assert_eq!(out.summary.bound, StopBound::MaxIter);
            replay_check(&out.transitions, cfg.num_qpus).unwrap();
            let end = out.records[4].timestamp;
            assert!(
                out.transitions
                    .iter()
                    .any(|t| t.time == end && t.trigger == Trigger::JobDone && t.to == QpuState::Idle),
                "{mode}"
            );
        }
    }

    #[test]
    fn sr_and_pq_stay_on_one_qpu() {
        let cfg = ExperimentConfig::default();
        for mode in [ModeKind::SR, ModeKind::PQ] {
            let out = run(&cfg, mode, 0, 2);
            let session: Vec<_> = out
                .decisions
                .iter()
                .filter(|d| d.kind == JobKind::QuantumCircuit)
                .map(|d| d.qpu)
                .collect();
            assert!(session.windows(2).all(|w| w[0] == w[1]), "{mode}");
        }
        let sr = run(&cfg, ModeKind::SR, 0, 2);
        assert_eq!(sr.summary.drift_events, 0);
    }
}
