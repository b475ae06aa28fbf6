//! VQE sessions: benchmark suite, SPSA, futures and convergence detection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{RngStream, SimTime};
use crate::error::SimError;
use crate::quantum::{build_tfi, AnsatzSpec, EvalRequest, Evaluator, PauliHamiltonian, Shots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    Simple,
    Medium,
    Complex,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Simple, Band::Medium, Band::Complex];

    pub fn qubit_range(self) -> (usize, usize) {
        match self {
            Band::Simple => (2, 5),
            Band::Medium => (6, 10),
            Band::Complex => (10, 16),
        }
    }

    pub fn depth_range(self) -> (usize, usize) {
        match self {
            Band::Simple => (6, 32),
            Band::Medium => (13, 69),
            Band::Complex => (33, 141),
        }
    }

    pub fn count(self) -> usize {
        match self {
            Band::Simple | Band::Medium => 10,
            Band::Complex => 11,
        }
    }

    fn prefix(self) -> char {
        match self {
            Band::Simple => 'S',
            Band::Medium => 'M',
            Band::Complex => 'C',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Simple => "simple",
            Band::Medium => "medium",
            Band::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<Band> {
        match s {
            "simple" => Some(Band::Simple),
            "medium" => Some(Band::Medium),
            "complex" => Some(Band::Complex),
            _ => None,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitBenchmark {
    pub id: String,
    pub band: Band,
    pub num_qubits: usize,
    pub depth: usize,
    pub ansatz: AnsatzSpec,
    pub field_strength: f64,
    #[serde(skip)]
    pub hamiltonian: Option<PauliHamiltonian>,
}

impl CircuitBenchmark {
    pub fn hamiltonian(&self) -> Result<PauliHamiltonian, SimError> {
        match &self.hamiltonian {
            Some(h) => Ok(h.clone()),
            None => build_tfi(self.num_qubits, self.field_strength),
        }
    }
}

/// Row of the exported suite manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: String,
    pub band: Band,
    pub qubits: usize,
    pub depth: usize,
    pub layers: usize,
    pub field_strength: f64,
}

pub fn suite_manifest(suite: &[CircuitBenchmark]) -> Vec<SuiteEntry> {
    suite
        .iter()
        .map(|c| SuiteEntry {
            id: c.id.clone(),
            band: c.band,
            qubits: c.num_qubits,
            depth: c.depth,
            layers: c.ansatz.num_layers,
            field_strength: c.field_strength,
        })
        .collect()
}

/// Layer count whose depth is closest to `target` while staying in `[lo, hi]`.
fn layers_for_depth(n: usize, target: f64, lo: usize, hi: usize) -> usize {
    let per = 1 + (n - 1).min(2);
    let mut l = ((target / per as f64).round() as usize).max(1);
    while l * per > hi {
        l -= 1;
    }
    while l * per < lo {
        l += 1;
    }
    l
}

/// Builds the 31-circuit suite (10 simple, 10 medium, 11 complex).
///
/// Qubit counts rise evenly across each band while depths fall evenly, so the
/// widest registers carry the shallowest circuits. The seed draws each
/// circuit's transverse field from `[field_lo, field_hi]`.
pub fn generate_suite(seed: u64, field_lo: f64, field_hi: f64) -> Result<Vec<CircuitBenchmark>, SimError> {
    if !(field_lo <= field_hi) {
        return Err(SimError::InvalidParameter("field range is empty".into()));
    }
    let mut stream = RngStream::new(seed, "suite");
    let mut out = Vec::with_capacity(31);
    for band in Band::ALL {
        let (qlo, qhi) = band.qubit_range();
        let (dlo, dhi) = band.depth_range();
        let count = band.count();
        for i in 0..count {
            let frac = i as f64 / (count - 1) as f64;
            let n = (qlo as f64 + frac * (qhi - qlo) as f64).round() as usize;
            let target = dhi as f64 - frac * (dhi - dlo) as f64;
            let layers = layers_for_depth(n, target, dlo, dhi);
            let ansatz = AnsatzSpec::new(n, layers)?;
            let field_strength = stream.uniform_range(field_lo, field_hi);
            let hamiltonian = build_tfi(n, field_strength)?;
            out.push(CircuitBenchmark {
                id: format!("{}{:02}", band.prefix(), i + 1),
                band,
                num_qubits: n,
                depth: ansatz.depth(),
                ansatz,
                field_strength,
                hamiltonian: Some(hamiltonian),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha_exp: f64,
    pub gamma_exp: f64,
    pub max_iter: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            c: 0.15,
            big_a: 10.0,
            alpha_exp: 0.602,
            gamma_exp: 0.101,
            max_iter: 1000,
        }
    }
}

impl SpsaConfig {
    pub fn a_k(&self, k: usize) -> f64 {
        self.a / (self.big_a + k as f64 + 1.0).powf(self.alpha_exp)
    }

    pub fn c_k(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma_exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaState {
    pub cfg: SpsaConfig,
    pub theta: Vec<f64>,
    pub iteration: usize,
    pub best_energy: f64,
    pub energy_history: Vec<f64>,
    delta: Vec<f64>,
}

impl SpsaState {
    pub fn new(cfg: SpsaConfig, theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self {
            cfg,
            theta,
            iteration: 0,
            best_energy: f64::INFINITY,
            energy_history: Vec::new(),
            delta: vec![0.0; n],
        }
    }

    /// Draws a Rademacher perturbation and returns `(theta + c_k d, theta - c_k d)`.
    pub fn perturb(&mut self, stream: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let ck = self.cfg.c_k(self.iteration);
        for d in &mut self.delta {
            *d = stream.sign();
        }
        let plus = self.theta.iter().zip(&self.delta).map(|(t, d)| t + ck * d).collect();
        let minus = self.theta.iter().zip(&self.delta).map(|(t, d)| t - ck * d).collect();
        (plus, minus)
    }

    pub fn perturbation(&self) -> &[f64] {
        &self.delta
    }

    pub fn set_perturbation(&mut self, delta: Vec<f64>) -> Result<(), SimError> {
        if delta.len() != self.theta.len() || delta.iter().any(|d| d.abs() != 1.0) {
            return Err(SimError::InvalidParameter("perturbation must be a +-1 vector of matching length".into()));
        }
        self.delta = delta;
        Ok(())
    }
}

/// One SPSA update from the energies at `theta +- c_k delta`.
///
/// The recorded energy of the iteration is the mean of the two evaluations.
pub fn spsa_step(state: &mut SpsaState, energy_plus: f64, energy_minus: f64) -> Result<(), SimError> {
    if !energy_plus.is_finite() || !energy_minus.is_finite() {
        return Err(SimError::NonFiniteEnergy {
            iteration: state.iteration,
        });
    }
    let k = state.iteration;
    let ak = state.cfg.a_k(k);
    let ck = state.cfg.c_k(k);
    let diff = energy_plus - energy_minus;
    if diff != 0.0 {
        let scale = ak * diff / (2.0 * ck);
        for (t, d) in state.theta.iter_mut().zip(&state.delta) {
            // 1/d == d for Rademacher entries.
            *t -= scale * d;
        }
    }
    let e = 0.5 * (energy_plus + energy_minus);
    state.energy_history.push(e);
    state.best_energy = state.best_energy.min(e);
    state.iteration += 1;
    Ok(())
}

/// True when at least `window` values exist and the last `window` span less than `epsilon`.
pub fn check_convergence(history: &[f64], window: usize, epsilon: f64) -> bool {
    if window < 2 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo < epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub window: usize,
    pub epsilon: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            window: 10,
            epsilon: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FutureState {
    Pending,
    Resolved,
    Committed,
    Aborted,
}

/// Promise handed back at circuit submission.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumFutureHandle {
    pub submitted_at: SimTime,
    pub resolved_at: Option<SimTime>,
    pub result: Option<f64>,
    pub speculative_budget: f64,
    state: FutureState,
}

impl QuantumFutureHandle {
    pub fn new(submitted_at: SimTime, speculative_budget: f64) -> Self {
        Self {
            submitted_at,
            resolved_at: None,
            result: None,
            speculative_budget,
            state: FutureState::Pending,
        }
    }

    pub fn state(&self) -> FutureState {
        self.state
    }

    pub fn resolve(&mut self, at: SimTime, energy: f64) -> Result<(), SimError> {
        if self.state != FutureState::Pending || at < self.submitted_at {
            return Err(SimError::InvalidParameter(format!(
                "cannot resolve future in state {:?}",
                self.state
            )));
        }
        self.state = FutureState::Resolved;
        self.resolved_at = Some(at);
        self.result = Some(energy);
        Ok(())
    }

    pub fn commit(&mut self) -> Result<(), SimError> {
        self.finish(FutureState::Committed)
    }

    /// Discards the speculative work; the result itself is still consumed.
    pub fn abort(&mut self) -> Result<(), SimError> {
        self.finish(FutureState::Aborted)
    }

    fn finish(&mut self, to: FutureState) -> Result<(), SimError> {
        if self.state != FutureState::Resolved {
            return Err(SimError::InvalidParameter(format!(
                "future must be resolved before {to:?}, is {:?}",
                self.state
            )));
        }
        self.state = to;
        Ok(())
    }

    /// Classical work overlapped with the pending shot, capped by the budget.
    pub fn speculative_overlap(&self) -> f64 {
        let pending = match self.resolved_at {
            Some(r) => r - self.submitted_at,
            None => 0.0,
        };
        pending.min(self.speculative_budget).max(0.0)
    }
}

/// Classical time left on the critical path after overlap with the previous shot.
pub fn residual_classical_block(t_cpu: f64, overlap: f64) -> f64 {
    (t_cpu - overlap).max(0.0)
}

/// Outcome of one SPSA iteration as seen by the scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutcome {
    /// Mean of the two measured energies.
    pub energy: f64,
    /// Detector first fired on this iteration.
    pub converged_now: bool,
}

/// Live VQE driver for one (circuit, seed) pair.
pub struct VqeDriver {
    evaluator: Evaluator,
    spsa: SpsaState,
    spsa_stream: RngStream,
    shot_stream: RngStream,
    shots: Shots,
    detector: ConvergenceParams,
    signal: Vec<f64>,
    converged_at: Option<usize>,
}

impl VqeDriver {
    pub fn new(
        circuit: &CircuitBenchmark,
        seed: u64,
        spsa: SpsaConfig,
        shots: Shots,
        detector: ConvergenceParams,
        init_scale: f64,
    ) -> Result<Self, SimError> {
        let h = circuit.hamiltonian()?;
        let evaluator = Evaluator::new(circuit.ansatz, &h)?;
        let mut init = RngStream::new(seed, &format!("theta-init/{}", circuit.id));
        let theta = (0..circuit.ansatz.num_params())
            .map(|_| init.uniform_range(-init_scale, init_scale))
            .collect();
        Ok(Self {
            evaluator,
            spsa: SpsaState::new(spsa, theta),
            spsa_stream: RngStream::new(seed, &format!("spsa/{}", circuit.id)),
            shot_stream: RngStream::new(seed, &format!("shots/{}", circuit.id)),
            shots,
            detector,
            signal: Vec::new(),
            converged_at: None,
        })
    }

    pub fn iteration(&self) -> usize {
        self.spsa.iteration
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    pub fn spsa(&self) -> &SpsaState {
        &self.spsa
    }

    /// Runs one iteration with both evaluations at the given fidelity.
    ///
    /// The detector watches the optimizer's best-so-far measured energy.
    pub fn step(&mut self, fidelity: f64) -> Result<IterationOutcome, SimError> {
        if self.spsa.iteration >= self.spsa.cfg.max_iter {
            return Err(SimError::InvalidParameter("max_iter reached".into()));
        }
        let (plus, minus) = self.spsa.perturb(&mut self.spsa_stream);
        let ep = self.evaluator.sampled(
            &EvalRequest {
                params: plus,
                shots: self.shots,
                fidelity,
            },
            &mut self.shot_stream,
        )?;
        let em = self.evaluator.sampled(
            &EvalRequest {
                params: minus,
                shots: self.shots,
                fidelity,
            },
            &mut self.shot_stream,
        )?;
        let k = self.spsa.iteration;
        spsa_step(&mut self.spsa, ep.energy, em.energy)?;
        let mut converged_now = false;
        if self.converged_at.is_none() {
            self.signal.push(self.spsa.best_energy);
            if check_convergence(&self.signal, self.detector.window, self.detector.epsilon) {
                self.converged_at = Some(k);
                converged_now = true;
            }
        }
        Ok(IterationOutcome {
            energy: 0.5 * (ep.energy + em.energy),
            converged_now,
        })
    }
}

/// Full-fidelity trajectory of one (circuit, seed) pair, extended on demand
/// and shared by every run of that pair.
pub struct LazyTrace {
    driver: VqeDriver,
    energies: Vec<f64>,
}

impl LazyTrace {
    pub fn new(driver: VqeDriver) -> Self {
        Self {
            driver,
            energies: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.driver.converged_at()
    }

    pub fn get(&mut self, k: usize) -> Result<IterationOutcome, SimError> {
        while self.energies.len() <= k {
            let o = self.driver.step(1.0)?;
            self.energies.push(o.energy);
        }
        Ok(IterationOutcome {
            energy: self.energies[k],
            converged_now: self.driver.converged_at() == Some(k),
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// Serves iterations from a shared trace while every fidelity is 1, and
/// switches to a private live driver (replayed from the start) once not.
pub struct TrajectorySource<'a> {
    trace: &'a mut LazyTrace,
    make_driver: Box<dyn Fn() -> Result<VqeDriver, SimError> + 'a>,
    live: Option<VqeDriver>,
    next: usize,
}

impl<'a> TrajectorySource<'a> {
    pub fn new(
        trace: &'a mut LazyTrace,
        make_driver: Box<dyn Fn() -> Result<VqeDriver, SimError> + 'a>,
    ) -> Self {
        Self {
            trace,
            make_driver,
            live: None,
            next: 0,
        }
    }

    pub fn is_live(&self) -> bool {
        self.live.is_some()
    }

    pub fn next(&mut self, fidelity: f64) -> Result<IterationOutcome, SimError> {
        let k = self.next;
        self.next += 1;
        if self.live.is_none() {
            if fidelity == 1.0 {
                return self.trace.get(k);
            }
            let mut d = (self.make_driver)()?;
            for _ in 0..k {
                d.step(1.0)?;
            }
            self.live = Some(d);
        }
        self.live.as_mut().expect("live driver").step(fidelity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn suite_counts_and_bands() {
        let s = generate_suite(0, 0.5, 1.5).unwrap();
        assert_eq!(s.len(), 31);
        for band in Band::ALL {
            let members: Vec<_> = s.iter().filter(|c| c.band == band).collect();
            assert_eq!(members.len(), band.count());
            let (qlo, qhi) = band.qubit_range();
            let (dlo, dhi) = band.depth_range();
            for c in members {
                assert!((qlo..=qhi).contains(&c.num_qubits), "{}", c.id);
                assert!((dlo..=dhi).contains(&c.depth), "{} depth {}", c.id, c.depth);
                assert_eq!(c.depth, c.ansatz.depth());
            }
        }
    }

    #[test]
    fn suite_is_deterministic_per_seed() {
        assert_eq!(generate_suite(3, 0.5, 1.5).unwrap(), generate_suite(3, 0.5, 1.5).unwrap());
        assert_ne!(generate_suite(3, 0.5, 1.5).unwrap(), generate_suite(4, 0.5, 1.5).unwrap());
    }

    #[test]
    fn equal_energies_leave_theta_unchanged() {
        let mut st = SpsaState::new(SpsaConfig::default(), vec![0.3, -0.2]);
        let mut r = RngStream::new(0, "spsa");
        st.perturb(&mut r);
        spsa_step(&mut st, -1.0, -1.0).unwrap();
        assert_eq!(st.theta, vec![0.3, -0.2]);
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn gains_decay_monotonically() {
        let cfg = SpsaConfig::default();
        for k in 0..2000 {
            assert!(cfg.a_k(k + 1) < cfg.a_k(k));
            assert!(cfg.c_k(k + 1) < cfg.c_k(k));
        }
        assert!(cfg.a_k(10_000_000) < 1e-4);
    }

    #[test]
    fn non_finite_energy_is_rejected() {
        let mut st = SpsaState::new(SpsaConfig::default(), vec![0.0]);
        assert!(spsa_step(&mut st, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn step_moves_against_gradient() {
        let mut st = SpsaState::new(SpsaConfig::default(), vec![0.0, 0.0]);
        st.set_perturbation(vec![1.0, -1.0]).unwrap();
        spsa_step(&mut st, 1.0, 0.0).unwrap();
        let g = 1.0 / (2.0 * SpsaConfig::default().c_k(0));
        let ak = SpsaConfig::default().a_k(0);
        assert!((st.theta[0] + ak * g).abs() < 1e-15);
        assert!((st.theta[1] - ak * g).abs() < 1e-15);
    }

    #[test]
    fn convergence_detector() {
        assert!(check_convergence(&[-1.0, -1.0, -1.0], 3, 1e-3));
        assert!(!check_convergence(&[-1.0, -1.0], 3, 1e-3));
        let dec: Vec<f64> = (0..20).map(|i| -(i as f64) * 0.01).collect();
        assert!(!check_convergence(&dec, 10, 0.005));
        assert!(!check_convergence(&[1.0; 5], 1, 1.0));
    }

    #[test]
    fn future_lifecycle() {
        let mut f = QuantumFutureHandle::new(SimTime(1.0), 0.8);
        assert!(f.commit().is_err());
        f.resolve(SimTime(3.0), -1.0).unwrap();
        assert!(f.resolve(SimTime(4.0), -1.0).is_err());
        assert_eq!(f.speculative_overlap(), 0.8);
        f.commit().unwrap();
        assert!(f.abort().is_err());
        assert_eq!(f.state(), FutureState::Committed);
    }

    #[test]
    fn residual_block_examples() {
        assert!((residual_classical_block(1.5, 0.8) - 0.7).abs() < 1e-12);
        assert_eq!(residual_classical_block(1.5, 2.0), 0.0);
        assert_eq!(residual_classical_block(1.5, 0.0), 1.5);
    }

    #[test]
    fn trace_replay_matches_live_driver() {
        let suite = generate_suite(0, 0.5, 1.5).unwrap();
        let c = &suite[0];
        let mk = || {
            VqeDriver::new(c, 5, SpsaConfig::default(), Shots::Count(4096), ConvergenceParams::default(), 0.5)
        };
        let mut trace = LazyTrace::new(mk().unwrap());
        trace.get(29).unwrap();
        assert_eq!(trace.len(), 30);
        let reference = trace.energies().to_vec();
        let mut live = mk().unwrap();
        for e in &reference {
            assert_eq!(live.step(1.0).unwrap().energy, *e);
        }
        let mut src = TrajectorySource::new(&mut trace, Box::new(mk));
        for e in &reference[..10] {
            assert_eq!(src.next(1.0).unwrap().energy, *e);
        }
        assert!(!src.is_live());
        let e = src.next(0.5).unwrap().energy;
        assert!(src.is_live());
        assert!(e.is_finite());
    }

    #[derive(Debug, Clone, Copy)]
    enum Op {
        Resolve,
        Commit,
        Abort,
    }

    proptest! {
        #[test]
        fn future_states_are_monotone(ops in proptest::collection::vec(
            prop_oneof![Just(Op::Resolve), Just(Op::Commit), Just(Op::Abort)], 0..12)) {
            let rank = |s: FutureState| match s {
                FutureState::Pending => 0,
                FutureState::Resolved => 1,
                FutureState::Committed | FutureState::Aborted => 2,
            };
            let mut f = QuantumFutureHandle::new(SimTime(0.0), 0.8);
            let mut t = 0.0;
            for op in ops {
                let before = f.state();
                t += 1.0;
                let ok = match op {
                    Op::Resolve => f.resolve(SimTime(t), 0.0).is_ok(),
                    Op::Commit => f.commit().is_ok(),
                    Op::Abort => f.abort().is_ok(),
                };
                let after = f.state();
                if ok {
                    prop_assert_eq!(rank(after), rank(before) + 1);
                } else {
                    prop_assert_eq!(after, before);
                }
            }
        }

        #[test]
        fn exact_spsa_best_energy_never_worsens(seed in 0u64..50) {
            let h = build_tfi(2, 1.0).unwrap();
            let a = AnsatzSpec::new(2, 2).unwrap();
            let mut ev = Evaluator::new(a, &h).unwrap();
            let mut st = SpsaState::new(SpsaConfig::default(), vec![0.1; 4]);
            let mut r = RngStream::new(seed, "spsa");
            let mut prev = f64::INFINITY;
            for _ in 0..50 {
                let (p, m) = st.perturb(&mut r);
                let ep = ev.exact(&p).unwrap();
                let em = ev.exact(&m).unwrap();
                spsa_step(&mut st, ep, em).unwrap();
                prop_assert!(st.best_energy <= prev);
                prev = st.best_energy;
            }
        }
    }
}
