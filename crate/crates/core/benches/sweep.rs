use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qcosim::config::ExperimentConfig;
use qcosim::experiments::{execute, CircuitSelection, SweepPlan};
use qcosim::par::Execution;
use qcosim::scheduler::ModeKind;
use qcosim::workload::Band;

fn sweep(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let plan = SweepPlan::single(ModeKind::ALL.to_vec(), CircuitSelection::Band(Band::Simple), (0..4).collect());
    let mut group = c.benchmark_group("simple_band_4_seeds");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| execute(&plan, &cfg, exec, false).expect("sweep"))
        });
    }
    group.finish();
}

fn statevector(c: &mut Criterion) {
    use qcosim::quantum::{build_tfi, AnsatzSpec, Evaluator};
    let mut group = c.benchmark_group("exact_energy");
    for (n, layers) in [(4, 10), (10, 30), (16, 11)] {
        let h = build_tfi(n, 1.0).expect("hamiltonian");
        let ansatz = AnsatzSpec::new(n, layers).expect("ansatz");
        let mut eval = Evaluator::new(ansatz, &h).expect("evaluator");
        let params: Vec<f64> = (0..ansatz.num_params()).map(|i| 0.1 * i as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| {
            b.iter(|| eval.exact(p).expect("energy"))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, statevector);
criterion_main!(benches);
