//! Sweep plans, multi-seed execution and result files.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::SimError;
use crate::metrics::{
    convergence_time, CsvSink, ConvergenceTime, RunSummary, ITERATION_HEADER, SUMMARY_HEADER,
};
use crate::par::{self, Execution};
use crate::resources::{replay_check, QpuState, Trigger};
use crate::scheduler::{JobKind, ModeKind};
use crate::sim::{make_driver, simulate, RunOutput, RunSpec};
use crate::workload::{generate_suite, suite_manifest, Band, CircuitBenchmark, LazyTrace, TrajectorySource};

/// Circuit used by the ablation plan.
pub const ABLATION_CIRCUIT: &str = "M05";
/// Two-qubit circuit used by the sensitivity plan.
pub const SENSITIVITY_CIRCUIT: &str = "S01";

pub fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Baselines,
    Ablation,
    Sensitivity,
    Run,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Baselines => "baselines",
            SweepKind::Ablation => "ablation",
            SweepKind::Sensitivity => "sensitivity",
            SweepKind::Run => "run",
        })
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baselines" => Ok(SweepKind::Baselines),
            "ablation" => Ok(SweepKind::Ablation),
            "sensitivity" => Ok(SweepKind::Sensitivity),
            other => Err(format!("unknown sweep kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

impl Variant {
    pub fn new(label: &str, overrides: &[(&str, String)]) -> Self {
        Self {
            label: label.to_string(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CircuitSelection {
    All,
    Band(Band),
    Ids(Vec<String>),
}

impl CircuitSelection {
    fn select(&self, suite: &[CircuitBenchmark]) -> Result<Vec<usize>, SimError> {
        let picked: Vec<usize> = match self {
            CircuitSelection::All => (0..suite.len()).collect(),
            CircuitSelection::Band(b) => (0..suite.len()).filter(|&i| suite[i].band == *b).collect(),
            CircuitSelection::Ids(ids) => ids
                .iter()
                .map(|id| {
                    suite
                        .iter()
                        .position(|c| &c.id == id)
                        .ok_or_else(|| SimError::InvalidParameter(format!("no circuit '{id}'")))
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(picked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub kind: SweepKind,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub modes: Vec<ModeKind>,
    pub circuits: CircuitSelection,
}

impl SweepPlan {
    /// Every mode on every circuit.
    pub fn baselines(seeds: Vec<u64>) -> Self {
        Self {
            kind: SweepKind::Baselines,
            variants: vec![Variant::new("baseline", &[])],
            seeds,
            modes: ModeKind::ALL.to_vec(),
            circuits: CircuitSelection::All,
        }
    }

    /// Full scheduler against each weight zeroed and a halved drift window.
    pub fn ablation(seeds: Vec<u64>, base: &ExperimentConfig) -> Self {
        Self {
            kind: SweepKind::Ablation,
            variants: vec![
                Variant::new("full", &[]),
                Variant::new("beta0", &[("beta", "0".into())]),
                Variant::new("gamma0", &[("gamma", "0".into())]),
                Variant::new("alpha0", &[("alpha", "0".into())]),
                Variant::new("tau_half", &[("tau_drift", (base.tau_drift / 2.0).to_string())]),
            ],
            seeds,
            modes: vec![ModeKind::EFaaS],
            circuits: CircuitSelection::Ids(vec![ABLATION_CIRCUIT.into()]),
        }
    }

    /// One-at-a-time sweep of each scheduler weight and the drift window.
    pub fn sensitivity(seeds: Vec<u64>) -> Self {
        let mut variants = Vec::new();
        let axes: [(&str, &[f64]); 4] = [
            ("alpha", &[0.0, 10.0, 50.0, 100.0, 200.0]),
            ("beta", &[0.0, 1.0, 5.0, 10.0, 20.0]),
            ("gamma", &[0.1, 0.5, 1.0, 2.0, 5.0]),
            ("tau_drift", &[60.0, 150.0, 300.0, 600.0, 900.0]),
        ];
        for (key, values) in axes {
            for v in values {
                variants.push(Variant::new(&format!("{key}={v}"), &[(key, v.to_string())]));
            }
        }
        Self {
            kind: SweepKind::Sensitivity,
            variants,
            seeds,
            modes: vec![ModeKind::EFaaS],
            circuits: CircuitSelection::Ids(vec![SENSITIVITY_CIRCUIT.into()]),
        }
    }

    pub fn single(modes: Vec<ModeKind>, circuits: CircuitSelection, seeds: Vec<u64>) -> Self {
        Self {
            kind: SweepKind::Run,
            variants: vec![Variant::new("run", &[])],
            seeds,
            modes,
            circuits,
        }
    }

    pub fn for_kind(kind: SweepKind, seeds: Vec<u64>, base: &ExperimentConfig) -> Self {
        match kind {
            SweepKind::Baselines | SweepKind::Run => Self::baselines(seeds),
            SweepKind::Ablation => Self::ablation(seeds, base),
            SweepKind::Sensitivity => Self::sensitivity(seeds),
        }
    }
}

/// Checks recomputed from a run's raw output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAudit {
    pub replay: Result<(), String>,
    pub max_decomposition_error: f64,
    /// QDC recomputed from the per-iteration `qpu_time` column.
    pub qdc_from_records: f64,
    pub drift_flagged_iterations: usize,
    pub drift_log_entries: usize,
    pub convergence_recomputed: ConvergenceTime,
    pub max_timestamp: f64,
    /// Distinct QPUs that served the session.
    pub session_qpus: usize,
}

pub fn audit(out: &RunOutput, cfg: &ExperimentConfig) -> RunAudit {
    let mut qpus: Vec<usize> = out
        .decisions
        .iter()
        .filter(|d| d.kind == JobKind::QuantumCircuit)
        .filter_map(|d| d.qpu)
        .collect();
    qpus.sort_unstable();
    qpus.dedup();
    let busy: f64 = out.records.iter().map(|r| r.qpu_time).sum();
    let denom = if cfg.qdc_pool_normalized {
        cfg.num_qpus as f64 * cfg.horizon
    } else {
        cfg.horizon
    };
    RunAudit {
        replay: replay_check(&out.transitions, cfg.num_qpus),
        max_decomposition_error: out
            .records
            .iter()
            .map(|r| r.decomposition_error().abs())
            .fold(0.0, f64::max),
        qdc_from_records: busy / denom,
        drift_flagged_iterations: out.records.iter().filter(|r| r.drift_event).count(),
        drift_log_entries: out.drift_events.len(),
        convergence_recomputed: convergence_time(&out.records, 0.0, cfg.detector()),
        max_timestamp: out.records.iter().map(|r| r.timestamp).fold(0.0, f64::max),
        session_qpus: qpus.len(),
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: usize,
    pub mode: ModeKind,
    pub circuit: usize,
    pub summary: RunSummary,
    pub audit: RunAudit,
    pub detail: Option<RunOutput>,
}

/// Config keys that change the optimizer trajectory of a (circuit, seed) pair.
const TRAJECTORY_KEYS: &[&str] = &[
    "shots",
    "max_iter",
    "convergence_window",
    "convergence_epsilon",
    "spsa_a",
    "spsa_c",
    "spsa_big_a",
    "spsa_alpha",
    "spsa_gamma",
    "theta_init_scale",
    "field_min",
    "field_max",
    "suite_seed",
];

fn trajectory_key(cfg: &ExperimentConfig) -> String {
    TRAJECTORY_KEYS
        .iter()
        .map(|k| cfg.get(k).unwrap_or_default())
        .collect::<Vec<_>>()
        .join("|")
}

struct Resolved {
    config: ExperimentConfig,
    hash: String,
    suite: Vec<CircuitBenchmark>,
}

fn resolve(plan: &SweepPlan, base: &ExperimentConfig) -> Result<Vec<Resolved>, SimError> {
    plan.variants
        .iter()
        .map(|v| {
            let config = base.with_overrides(&v.overrides)?;
            config.validate()?;
            let suite = generate_suite(config.suite_seed, config.field_min, config.field_max)?;
            Ok(Resolved {
                hash: config.hash(),
                config,
                suite,
            })
        })
        .collect()
}

/// Runs every (variant, mode, circuit, seed) of the plan.
///
/// Work is split by (circuit, seed); all runs of one pair share the
/// optimizer trajectory when their configs agree on it. Results are
/// ordered by variant, mode, circuit, seed.
pub fn execute(
    plan: &SweepPlan,
    base: &ExperimentConfig,
    exec: Execution,
    retain_detail: bool,
) -> Result<Vec<RunResult>, SimError> {
    let resolved = resolve(plan, base)?;
    execute_resolved(plan, &resolved, &plan.seeds, exec, retain_detail)
}

fn execute_resolved(
    plan: &SweepPlan,
    resolved: &[Resolved],
    seeds: &[u64],
    exec: Execution,
    retain_detail: bool,
) -> Result<Vec<RunResult>, SimError> {
    let circuits = plan.circuits.select(&resolved[0].suite)?;
    let groups: Vec<(usize, u64)> = circuits
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let per_group = par::map(exec, &groups, |&(ci, seed)| {
        let mut traces: Vec<(String, LazyTrace)> = Vec::new();
        let mut out = Vec::new();
        for (vi, r) in resolved.iter().enumerate() {
            for &mode in &plan.modes {
                let spec = RunSpec {
                    config: &r.config,
                    config_hash: &r.hash,
                    variant: &plan.variants[vi].label,
                    circuit: &r.suite[ci],
                    mode,
                    seed,
                };
                let key = trajectory_key(&r.config);
                let slot = match traces.iter().position(|(k, _)| *k == key) {
                    Some(i) => i,
                    None => {
                        traces.push((key, LazyTrace::new(make_driver(&spec)?)));
                        traces.len() - 1
                    }
                };
                let mut source = TrajectorySource::new(&mut traces[slot].1, Box::new(move || make_driver(&spec)));
                let run = simulate(&spec, &mut source)?;
                out.push(RunResult {
                    variant: vi,
                    mode,
                    circuit: ci,
                    summary: run.summary.clone(),
                    audit: audit(&run, &r.config),
                    detail: retain_detail.then_some(run),
                });
            }
        }
        Ok::<_, SimError>(out)
    });
    let mut all = Vec::new();
    for g in per_group {
        all.extend(g?);
    }
    let mode_rank = |m: ModeKind| plan.modes.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    all.sort_by_key(|r| (r.variant, mode_rank(r.mode), r.circuit, r.summary.seed));
    Ok(all)
}

#[derive(Serialize)]
struct TransitionRow<'a> {
    run_id: &'a str,
    mode: ModeKind,
    time: f64,
    qpu_id: usize,
    from: QpuState,
    to: QpuState,
    trigger: Trigger,
    config_hash: &'a str,
}

const TRANSITION_HEADER: &[&str] = &["run_id", "mode", "time", "qpu_id", "from", "to", "trigger", "config_hash"];

#[derive(Serialize)]
struct DecisionRow<'a> {
    run_id: &'a str,
    time: f64,
    job: u64,
    kind: JobKind,
    mode: ModeKind,
    rho: f64,
    qpu: Option<usize>,
    queue_delay: f64,
    drift_triggered: bool,
    config_hash: &'a str,
}

const DECISION_HEADER: &[&str] = &[
    "run_id",
    "time",
    "job",
    "kind",
    "mode",
    "rho",
    "qpu",
    "queue_delay",
    "drift_triggered",
    "config_hash",
];

#[derive(Serialize)]
struct VariantManifest<'a> {
    label: &'a str,
    overrides: &'a [(String, String)],
    config_hash: &'a str,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: SweepKind,
    complete: bool,
    config_hash: String,
    config: &'a ExperimentConfig,
    variants: Vec<VariantManifest<'a>>,
    seeds: &'a [u64],
    modes: &'a [ModeKind],
    circuits: &'a CircuitSelection,
    runs: usize,
    files: [&'static str; 5],
}

fn write_manifest(
    out_dir: &Path,
    plan: &SweepPlan,
    base: &ExperimentConfig,
    resolved: &[Resolved],
    runs: usize,
    complete: bool,
) -> Result<(), SimError> {
    let m = Manifest {
        kind: plan.kind,
        complete,
        config_hash: base.hash(),
        config: base,
        variants: plan
            .variants
            .iter()
            .zip(resolved)
            .map(|(v, r)| VariantManifest {
                label: &v.label,
                overrides: &v.overrides,
                config_hash: &r.hash,
                config: &r.config,
            })
            .collect(),
        seeds: &plan.seeds,
        modes: &plan.modes,
        circuits: &plan.circuits,
        runs,
        files: [
            "iterations.csv",
            "summaries.csv",
            "transitions.csv",
            "decisions.csv",
            "suite.json",
        ],
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

/// Runs `plan` and writes its result files under `out_dir`.
///
/// The manifest is written first with `complete: false` and rewritten once
/// every file is flushed. Seeds run in chunks to bound memory.
pub fn run_experiment(
    plan: &SweepPlan,
    base: &ExperimentConfig,
    out_dir: &Path,
    exec: Execution,
) -> Result<Vec<RunSummary>, SimError> {
    let resolved = resolve(plan, base)?;
    let circuits = plan.circuits.select(&resolved[0].suite)?;
    fs::create_dir_all(out_dir)?;
    write_manifest(out_dir, plan, base, &resolved, 0, false)?;
    let suite_json = serde_json::to_string_pretty(&suite_manifest(&resolved[0].suite))?;
    fs::write(out_dir.join("suite.json"), suite_json + "\n")?;

    let mut iterations = CsvSink::create(&out_dir.join("iterations.csv"), ITERATION_HEADER)?;
    let mut summaries = CsvSink::create(&out_dir.join("summaries.csv"), SUMMARY_HEADER)?;
    let mut transitions = CsvSink::create(&out_dir.join("transitions.csv"), TRANSITION_HEADER)?;
    let mut decisions = CsvSink::create(&out_dir.join("decisions.csv"), DECISION_HEADER)?;

    let chunk = (64 / circuits.len().max(1)).max(1);
    let mut all = Vec::new();
    for seeds in plan.seeds.chunks(chunk) {
        let mut results = execute_resolved(plan, &resolved, seeds, exec, true)?;
        for r in &mut results {
            let d = r.detail.take().expect("detail retained");
            let run_id = d.records.first().map(|x| x.run_id.clone()).unwrap_or_default();
            let hash = &r.summary.config_hash;
            for rec in &d.records {
                iterations.row(rec)?;
            }
            for t in &d.transitions {
                transitions.row(&TransitionRow {
                    run_id: &run_id,
                    mode: r.mode,
                    time: t.time,
                    qpu_id: t.qpu_id,
                    from: t.from,
                    to: t.to,
                    trigger: t.trigger,
                    config_hash: hash,
                })?;
            }
            for x in &d.decisions {
                decisions.row(&DecisionRow {
                    run_id: &run_id,
                    time: x.time,
                    job: x.job,
                    kind: x.kind,
                    mode: x.mode,
                    rho: x.rho,
                    qpu: x.qpu,
                    queue_delay: x.queue_delay,
                    drift_triggered: x.drift_triggered,
                    config_hash: hash,
                })?;
            }
        }
        all.extend(results);
    }
    // Chunks are seed-major; summaries use the global order.
    let mode_rank = |m: ModeKind| plan.modes.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    all.sort_by_key(|r| (r.variant, mode_rank(r.mode), r.circuit, r.summary.seed));
    for r in &all {
        summaries.row(&r.summary)?;
    }
    iterations.finish()?;
    summaries.finish()?;
    transitions.finish()?;
    decisions.finish()?;
    write_manifest(out_dir, plan, base, &resolved, all.len(), true)?;
    Ok(all.into_iter().map(|r| r.summary).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_shapes() {
        let base = ExperimentConfig::default();
        let abl = SweepPlan::ablation((1..=20).collect(), &base);
        assert_eq!(abl.variants.len() * abl.seeds.len(), 100);
        assert_eq!(abl.variants[4].overrides, vec![("tau_drift".to_string(), "150".to_string())]);
        let sens = SweepPlan::sensitivity(default_seeds());
        assert_eq!(sens.variants.len(), 20);
        assert_eq!(SweepPlan::baselines(default_seeds()).modes.len(), 5);
        assert_eq!("ablation".parse::<SweepKind>().unwrap(), SweepKind::Ablation);
        assert!("x".parse::<SweepKind>().is_err());
    }

    #[test]
    fn selection() {
        let suite = generate_suite(0, 0.5, 1.5).unwrap();
        assert_eq!(CircuitSelection::All.select(&suite).unwrap().len(), 31);
        assert_eq!(CircuitSelection::Band(Band::Complex).select(&suite).unwrap().len(), 11);
        assert_eq!(CircuitSelection::Ids(vec!["S01".into()]).select(&suite).unwrap(), vec![0]);
        assert!(CircuitSelection::Ids(vec!["Z9".into()]).select(&suite).is_err());
    }

    #[test]
    fn shared_trace_matches_private_runs() {
        let base = ExperimentConfig::default();
        let plan = SweepPlan::single(
            vec![ModeKind::EFaaS, ModeKind::SBQ],
            CircuitSelection::Ids(vec!["S03".into()]),
            vec![4],
        );
        let shared = execute(&plan, &base, Execution::Sequential, true).unwrap();
        let suite = generate_suite(0, 0.5, 1.5).unwrap();
        let hash = base.hash();
        for r in &shared {
            let spec = RunSpec {
                config: &base,
                config_hash: &hash,
                variant: "run",
                circuit: &suite[2],
                mode: r.mode,
                seed: 4,
            };
            let alone = crate::sim::run_single(&spec).unwrap();
            assert_eq!(r.detail.as_ref().unwrap().records, alone.records);
        }
    }
}
