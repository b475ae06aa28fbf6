//! Per-iteration records, per-run summaries and cross-run aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::error::SimError;
use crate::scheduler::ModeKind;
use crate::workload::{check_convergence, Band, ConvergenceParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub run_id: String,
    pub circuit_id: String,
    pub band: Band,
    pub mode: ModeKind,
    pub iteration: usize,
    pub ttns: f64,
    pub queue_delay: f64,
    pub calib_time: f64,
    pub qpu_time: f64,
    pub residual_cpu_block: f64,
    pub energy: f64,
    pub drift_event: bool,
    pub timestamp: f64,
    pub net_time: f64,
    pub config_hash: String,
}

impl IterationRecord {
    /// `ttns` minus the sum of its parts.
    pub fn decomposition_error(&self) -> f64 {
        self.ttns
            - (self.residual_cpu_block + self.queue_delay + self.calib_time + self.net_time + self.qpu_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceTime {
    Converged(f64),
    DidNotConverge,
}

impl ConvergenceTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            ConvergenceTime::Converged(s) => Some(s),
            ConvergenceTime::DidNotConverge => None,
        }
    }

    /// Seconds, with a non-converged run counted at `cap`.
    pub fn censored(self, cap: f64) -> f64 {
        self.seconds().unwrap_or(cap)
    }
}

impl Serialize for ConvergenceTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ConvergenceTime::Converged(x) => s.serialize_f64(*x),
            ConvergenceTime::DidNotConverge => s.serialize_str("DidNotConverge"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopBound {
    Horizon,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub variant: String,
    pub mode: ModeKind,
    pub circuit_id: String,
    pub band: Band,
    pub qubits: usize,
    pub seed: u64,
    pub mean_ttns: f64,
    pub ttns_p25: f64,
    pub ttns_p50: f64,
    pub ttns_p75: f64,
    pub qdc: f64,
    pub convergence_time: ConvergenceTime,
    pub iterations_completed: usize,
    pub drift_events: usize,
    pub calib_overhead_fraction: f64,
    pub bound: StopBound,
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
    pub qdc_pool_normalized: bool,
    pub max_background_wait: f64,
    pub background_unserved: usize,
}

/// Linear-interpolated percentile of unsorted data; `q` in `[0, 1]`.
pub fn percentile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn mean(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(data: &[f64]) -> f64 {
    if data.len() < 2 {
        return 0.0;
    }
    let m = mean(data);
    (data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (data.len() - 1) as f64).sqrt()
}

/// Busy fraction of a QPU pool: total interval length over `num_qpus * horizon`.
pub fn compute_qdc(intervals: &[(f64, f64)], num_qpus: usize, horizon: f64) -> Result<f64, SimError> {
    compute_qdc_with(intervals, num_qpus, horizon, true)
}

/// As [`compute_qdc`], optionally normalised by `horizon` alone.
pub fn compute_qdc_with(
    intervals: &[(f64, f64)],
    num_qpus: usize,
    horizon: f64,
    pool_normalized: bool,
) -> Result<f64, SimError> {
    let mut busy = 0.0;
    for &(start, end) in intervals {
        if start < 0.0 || end > horizon || end < start {
            return Err(SimError::IntervalOutsideHorizon {
                start,
                end,
                horizon,
            });
        }
        busy += end - start;
    }
    let denom = if pool_normalized {
        num_qpus as f64 * horizon
    } else {
        horizon
    };
    Ok(busy / denom)
}

/// Time from submission to the first iteration on which the detector fires.
///
/// The detector watches the running minimum of the recorded energies.
pub fn convergence_time(
    records: &[IterationRecord],
    submission: f64,
    detector: ConvergenceParams,
) -> ConvergenceTime {
    let mut best = f64::INFINITY;
    let mut signal = Vec::with_capacity(records.len());
    for r in records {
        best = best.min(r.energy);
        signal.push(best);
        if check_convergence(&signal, detector.window, detector.epsilon) {
            return ConvergenceTime::Converged(r.timestamp - submission);
        }
    }
    ConvergenceTime::DidNotConverge
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum GroupKey {
    Mode(ModeKind),
    Band(Band),
    Qubits(usize),
    Circuit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Mode,
    Band,
    Qubits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl Stats {
    pub fn of(data: &[f64]) -> Stats {
        Stats {
            mean: mean(data),
            std: std_dev(data),
            p25: percentile(data, 0.25),
            p50: percentile(data, 0.5),
            p75: percentile(data, 0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub key: GroupKey,
    pub runs: usize,
    pub converged_runs: usize,
    pub mean_ttns: Stats,
    pub qdc: Stats,
    /// Converged runs only.
    pub convergence_time: Stats,
    /// Non-converged runs counted at the horizon.
    pub convergence_time_censored: Stats,
    pub drift_events: Stats,
    pub drift_events_total: usize,
    pub calib_overhead_fraction: Stats,
    pub iterations_completed: Stats,
}

/// Per-group statistics in ascending key order.
///
/// `horizon` caps non-converged runs in the censored convergence column.
pub fn aggregate(summaries: &[RunSummary], group_by: GroupBy, horizon: f64) -> Result<Vec<GroupStats>, SimError> {
    if summaries.is_empty() {
        return Err(SimError::InvalidParameter("nothing to aggregate".into()));
    }
    let hash = &summaries[0].config_hash;
    if let Some(other) = summaries.iter().find(|s| &s.config_hash != hash) {
        return Err(SimError::MixedConfig(hash.clone(), other.config_hash.clone()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        let key = match group_by {
            GroupBy::Mode => GroupKey::Mode(s.mode),
            GroupBy::Band => GroupKey::Band(s.band),
            GroupBy::Qubits => GroupKey::Qubits(s.qubits),
        };
        groups.entry(key).or_default().push(s);
    }
    Ok(groups
        .into_iter()
        .map(|(key, rows)| {
            let col = |f: &dyn Fn(&RunSummary) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let converged: Vec<f64> = rows.iter().filter_map(|r| r.convergence_time.seconds()).collect();
            GroupStats {
                key,
                runs: rows.len(),
                converged_runs: converged.len(),
                mean_ttns: Stats::of(&col(&|r| r.mean_ttns)),
                qdc: Stats::of(&col(&|r| r.qdc)),
                convergence_time: Stats::of(&converged),
                convergence_time_censored: Stats::of(&col(&|r| r.convergence_time.censored(horizon))),
                drift_events: Stats::of(&col(&|r| r.drift_events as f64)),
                drift_events_total: rows.iter().map(|r| r.drift_events).sum(),
                calib_overhead_fraction: Stats::of(&col(&|r| r.calib_overhead_fraction)),
                iterations_completed: Stats::of(&col(&|r| r.iterations_completed as f64)),
            }
        })
        .collect())
}

/// Append-only CSV file with a fixed header row.
pub struct CsvSink {
    writer: csv::Writer<std::fs::File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, SimError> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        writer.write_record(header).map_err(csv_err)?;
        Ok(Self { writer })
    }

    pub fn row<T: Serialize>(&mut self, row: &T) -> Result<(), SimError> {
        self.writer.serialize(row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<(), SimError> {
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Config(format!("csv: {e}"))
}

/// Writes `rows` under `header`; an empty slice still gets the header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), SimError> {
    let mut sink = CsvSink::create(path, header)?;
    for r in rows {
        sink.row(r)?;
    }
    sink.finish()
}

pub const ITERATION_HEADER: &[&str] = &[
    "run_id",
    "circuit_id",
    "band",
    "mode",
    "iteration",
    "ttns",
    "queue_delay",
    "calib_time",
    "qpu_time",
    "residual_cpu_block",
    "energy",
    "drift_event",
    "timestamp",
    "net_time",
    "config_hash",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "config_hash",
    "variant",
    "mode",
    "circuit_id",
    "band",
    "qubits",
    "seed",
    "mean_ttns",
    "ttns_p25",
    "ttns_p50",
    "ttns_p75",
    "qdc",
    "convergence_time",
    "iterations_completed",
    "drift_events",
    "calib_overhead_fraction",
    "bound",
    "convergence_window",
    "convergence_epsilon",
    "qdc_pool_normalized",
    "max_background_wait",
    "background_unserved",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, energy: f64, t: f64) -> IterationRecord {
        IterationRecord {
            run_id: "r".into(),
            circuit_id: "S01".into(),
            band: Band::Simple,
            mode: ModeKind::EFaaS,
            iteration: i,
            ttns: 3.2,
            queue_delay: 0.0,
            calib_time: 0.0,
            qpu_time: 2.0,
            residual_cpu_block: 0.7,
            energy,
            drift_event: false,
            timestamp: t,
            net_time: 0.5,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn qdc_examples() {
        assert_eq!(compute_qdc(&[], 3, 3000.0).unwrap(), 0.0);
        assert!((compute_qdc(&[(0.0, 3000.0)], 3, 3000.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(compute_qdc(&[(2990.0, 3001.0)], 3, 3000.0).is_err());
        assert!((compute_qdc_with(&[(0.0, 300.0)], 3, 3000.0, false).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn convergence_time_examples() {
        let det = ConvergenceParams { window: 2, epsilon: 0.5 };
        let recs = vec![rec(0, -1.0, 3.2), rec(1, -1.0, 6.4)];
        assert_eq!(convergence_time(&recs, 0.0, det), ConvergenceTime::Converged(6.4));
        let falling: Vec<_> = (0..20).map(|i| rec(i, -(i as f64), i as f64)).collect();
        assert_eq!(convergence_time(&falling, 0.0, det), ConvergenceTime::DidNotConverge);
        assert_eq!(ConvergenceTime::DidNotConverge.censored(3000.0), 3000.0);
    }

    #[test]
    fn decomposition_identity() {
        assert!(rec(0, 0.0, 0.0).decomposition_error().abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let d = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&d, 1.0), 4.0);
        assert_eq!(percentile(&d, 0.5), 2.5);
        assert_eq!(percentile(&[7.0], 0.25), 7.0);
    }

    fn summary(mode: ModeKind, band: Band, qubits: usize, hash: &str) -> RunSummary {
        RunSummary {
            config_hash: hash.into(),
            variant: "full".into(),
            mode,
            circuit_id: "X".into(),
            band,
            qubits,
            seed: 0,
            mean_ttns: 3.2,
            ttns_p25: 3.0,
            ttns_p50: 3.2,
            ttns_p75: 3.4,
            qdc: 0.21,
            convergence_time: ConvergenceTime::Converged(100.0),
            iterations_completed: 900,
            drift_events: 0,
            calib_overhead_fraction: 0.0,
            bound: StopBound::Horizon,
            convergence_window: 10,
            convergence_epsilon: 0.01,
            qdc_pool_normalized: true,
            max_background_wait: 0.0,
            background_unserved: 0,
        }
    }

    #[test]
    fn aggregate_groups() {
        let one = vec![summary(ModeKind::EFaaS, Band::Simple, 2, "h")];
        let g = aggregate(&one, GroupBy::Mode, 3000.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].mean_ttns.mean, 3.2);
        assert_eq!(g[0].mean_ttns.p50, 3.2);
        assert_eq!(g[0].qdc.std, 0.0);

        let rows: Vec<_> = [(Band::Complex, 12), (Band::Simple, 3), (Band::Medium, 7), (Band::Simple, 2)]
            .into_iter()
            .map(|(b, q)| summary(ModeKind::SBQ, b, q, "h"))
            .collect();
        let by_band = aggregate(&rows, GroupBy::Band, 3000.0).unwrap();
        assert_eq!(by_band.len(), 3);
        assert_eq!(by_band[0].key, GroupKey::Band(Band::Simple));
        let by_q = aggregate(&rows, GroupBy::Qubits, 3000.0).unwrap();
        let qs: Vec<_> = by_q.iter().map(|g| g.key).collect();
        assert_eq!(qs, vec![GroupKey::Qubits(2), GroupKey::Qubits(3), GroupKey::Qubits(7), GroupKey::Qubits(12)]);
    }

    #[test]
    fn aggregate_rejects_mixed_configs() {
        let rows = vec![
            summary(ModeKind::SBQ, Band::Simple, 2, "a"),
            summary(ModeKind::SBQ, Band::Simple, 2, "b"),
        ];
        assert!(matches!(aggregate(&rows, GroupBy::Mode, 3000.0), Err(SimError::MixedConfig(_, _))));
        assert!(aggregate(&[], GroupBy::Mode, 3000.0).is_err());
    }
}
