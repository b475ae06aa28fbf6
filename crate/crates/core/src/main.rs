use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qcosim::config::ExperimentConfig;
use qcosim::error::SimError;
use qcosim::experiments::{default_seeds, run_experiment, CircuitSelection, SweepKind, SweepPlan};
use qcosim::metrics::{aggregate, GroupBy, RunSummary};
use qcosim::par::Execution;
use qcosim::scheduler::ModeKind;
use qcosim::workload::{generate_suite, suite_manifest, Band};

#[derive(Parser)]
#[command(name = "qcosim", version, about = "Discrete-event simulator for hybrid VQE scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or all modes over a circuit band.
    Run(RunArgs),
    /// Run a predefined sweep.
    Sweep(SweepArgs),
    /// Check a config file and print its canonical form and hash.
    ValidateConfig(ConfigArg),
    /// Print the benchmark suite as JSON.
    PrintSuite(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    config: ConfigArg,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range `A..B`; defaults to 0..19.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run simulations on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::All)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = CircuitArg::All)]
    circuits: CircuitArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Efaas,
    Sbq,
    Pf,
    Sr,
    Pq,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitArg {
    Simple,
    Medium,
    Complex,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Baselines,
    Ablation,
    Sensitivity,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: u64 = b.trim_start_matches('=').trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if b < a {
        return Err(format!("empty range {s}"));
    }
    Ok((a..=b).collect())
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig, SimError> {
    let cfg = match &arg.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl Common {
    fn seeds(&self) -> Vec<u64> {
        match (self.seed, &self.seeds) {
            (Some(s), _) => vec![s],
            (None, Some(v)) => v.clone(),
            (None, None) => default_seeds(),
        }
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

fn print_table(summaries: &[RunSummary], horizon: f64) -> Result<(), SimError> {
    let mut variants: Vec<&str> = summaries.iter().map(|s| s.variant.as_str()).collect();
    variants.dedup();
    println!(
        "{:<16} {:<6} {:>5} {:>9} {:>8} {:>10} {:>7} {:>7}",
        "variant", "mode", "runs", "ttns_s", "qdc_%", "conv_s", "conv_n", "drift"
    );
    for v in variants {
        let rows: Vec<RunSummary> = summaries.iter().filter(|s| s.variant == v).cloned().collect();
        for g in aggregate(&rows, GroupBy::Mode, horizon)? {
            let mode = match g.key {
                qcosim::metrics::GroupKey::Mode(m) => m.to_string(),
                other => format!("{other:?}"),
            };
            println!(
                "{:<16} {:<6} {:>5} {:>9.3} {:>8.2} {:>10.1} {:>7} {:>7}",
                v,
                mode,
                g.runs,
                g.mean_ttns.mean,
                g.qdc.mean * 100.0,
                g.convergence_time_censored.mean,
                g.converged_runs,
                g.drift_events_total
            );
        }
    }
    Ok(())
}

fn execute(plan: &SweepPlan, cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<(), SimError> {
    let summaries = run_experiment(plan, cfg, out, exec)?;
    print_table(&summaries, cfg.horizon)?;
    eprintln!("wrote {} runs to {}", summaries.len(), out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = load_config(&a.common.config)?;
            let modes = match a.mode {
                ModeArg::Efaas => vec![ModeKind::EFaaS],
                ModeArg::Sbq => vec![ModeKind::SBQ],
                ModeArg::Pf => vec![ModeKind::PF],
                ModeArg::Sr => vec![ModeKind::SR],
                ModeArg::Pq => vec![ModeKind::PQ],
                ModeArg::All => ModeKind::ALL.to_vec(),
            };
            let circuits = match a.circuits {
                CircuitArg::Simple => CircuitSelection::Band(Band::Simple),
                CircuitArg::Medium => CircuitSelection::Band(Band::Medium),
                CircuitArg::Complex => CircuitSelection::Band(Band::Complex),
                CircuitArg::All => CircuitSelection::All,
            };
            let plan = SweepPlan::single(modes, circuits, a.common.seeds());
            execute(&plan, &cfg, &a.common.out, a.common.execution())
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a.common.config)?;
            let kind = match a.kind {
                KindArg::Baselines => SweepKind::Baselines,
                KindArg::Ablation => SweepKind::Ablation,
                KindArg::Sensitivity => SweepKind::Sensitivity,
            };
            let plan = SweepPlan::for_kind(kind, a.common.seeds(), &cfg);
            execute(&plan, &cfg, &a.common.out, a.common.execution())
        }
        Command::ValidateConfig(a) => {
            let cfg = load_config(&a)?;
            print!("{}", cfg.to_canonical_string());
            eprintln!("config ok, hash {}", cfg.hash());
            Ok(())
        }
        Command::PrintSuite(a) => {
            let cfg = load_config(&a)?;
            let suite = generate_suite(cfg.suite_seed, cfg.field_min, cfg.field_max)?;
            println!("{}", serde_json::to_string_pretty(&suite_manifest(&suite))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
