//! Command-line front end: `test` runs a simultaneous test on grouped
//! CSV data, `simulate` reproduces rejection-rate tables from a scenario
//! file, and `diag` dumps raw replicate matrices for inspection.

mod config;
mod ingest;
mod record;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};

use qfmct::hypotheses::{
    global_partition, pairwise_group_equality, per_component_equality, HypothesisPartition,
};
use qfmct::quadform::{q_vector, QfKind};
use qfmct::resampling::{replicates, ResamplingMethod, WeightDist};
use qfmct::sim::run_scenario;
use qfmct::testing::qfmct_test;
use qfmct::compute_stats;
use record::{Payload, RunRecord};

#[derive(Parser)]
#[command(
    name = "qfmct",
    version,
    about = "Quadratic-form based multiple contrast tests for group mean vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test equality hypotheses on grouped CSV data
    Test(TestArgs),
    /// Estimate rejection rates over simulated datasets
    Simulate(SimulateArgs),
    /// Write the replicate matrix of a single test run to CSV
    Diag(DiagArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticFlag {
    Ats,
    Wts,
}

impl From<StatisticFlag> for QfKind {
    fn from(f: StatisticFlag) -> Self {
        match f {
            StatisticFlag::Ats => QfKind::AtsIdentity,
            StatisticFlag::Wts => QfKind::Wts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodFlag {
    Mc,
    Pb,
    Wb,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsFlag {
    Normal,
    Rademacher,
    Mammen,
}

impl From<WeightsFlag> for WeightDist {
    fn from(f: WeightsFlag) -> Self {
        match f {
            WeightsFlag::Normal => WeightDist::StandardNormal,
            WeightsFlag::Rademacher => WeightDist::Rademacher,
            WeightsFlag::Mammen => WeightDist::Mammen,
        }
    }
}

#[derive(Args)]
struct CommonTestArgs {
    /// CSV data file: header row, group label in the first column,
    /// numeric components after it
    data: PathBuf,

    /// Local hypotheses: components | pairs | global | file:<path>
    #[arg(long, default_value = "components")]
    partition: String,

    /// Quadratic-form family
    #[arg(long, value_enum, default_value_t = StatisticFlag::Ats)]
    statistic: StatisticFlag,

    /// Critical-value engine
    #[arg(long, value_enum, default_value_t = MethodFlag::Pb)]
    method: MethodFlag,

    /// Multiplier distribution for the wild bootstrap
    #[arg(long, value_enum, default_value_t = WeightsFlag::Normal)]
    wild_weights: WeightsFlag,

    /// Replicate count B
    #[arg(long = "reps", default_value_t = 1000)]
    reps: usize,

    /// Master seed; all randomness derives from it
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonTestArgs,

    /// Global level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Output stem; writes <out>.csv and <out>.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario configuration file
    config: PathBuf,

    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,

    /// Output stem; writes <out>.csv and <out>.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    #[command(flatten)]
    common: CommonTestArgs,

    /// Output stem; writes <out>.csv and <out>.json
    #[arg(long, required = true)]
    out: PathBuf,
}

/// Failure category, mapped to the process exit code.
enum Failure {
    /// Invalid configuration or flags (exit 2).
    Config(anyhow::Error),
    /// Unreadable or malformed input data (exit 3).
    Data(anyhow::Error),
    /// Numerical or statistical failure during computation (exit 4).
    Compute(anyhow::Error),
}

impl Failure {
    fn exit(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(2),
            Failure::Data(_) => ExitCode::from(3),
            Failure::Compute(_) => ExitCode::from(4),
        }
    }

    fn report(&self) {
        let (tag, err) = match self {
            Failure::Config(e) => ("config", e),
            Failure::Data(e) => ("data", e),
            Failure::Compute(e) => ("compute", e),
        };
        eprintln!("error ({tag}): {err:#}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Diag(args) => cmd_diag(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            failure.report();
            failure.exit()
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(anyhow!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn resolve_method(method: MethodFlag, weights: WeightsFlag) -> ResamplingMethod {
    match method {
        MethodFlag::Mc => ResamplingMethod::MonteCarlo,
        MethodFlag::Pb => ResamplingMethod::ParametricBootstrap,
        MethodFlag::Wb => ResamplingMethod::WildBootstrap(weights.into()),
    }
}

fn resolve_partition(
    spec: &str,
    data: &ingest::LabelledData,
) -> anyhow::Result<HypothesisPartition> {
    let (a, d) = (data.dataset.a(), data.dataset.d());
    match spec {
        "components" => {
            let labels = data.component_labels.clone();
            per_component_equality(a, d)
                .and_then(|p| p.relabel(labels))
                .map_err(|e| anyhow!("{e}"))
        }
        "pairs" => {
            let mut labels = Vec::new();
            for i1 in 0..a {
                for i2 in (i1 + 1)..a {
                    labels.push(format!(
                        "{} vs {}",
                        data.group_labels[i1], data.group_labels[i2]
                    ));
                }
            }
            pairwise_group_equality(a, d)
                .and_then(|p| p.relabel(labels))
                .map_err(|e| anyhow!("{e}"))
        }
        "global" => global_partition(a, d).map_err(|e| anyhow!("{e}")),
        other => {
            if let Some(path) = other.strip_prefix("file:") {
                ingest::read_partition_file(Path::new(path), a * d)
            } else {
                Err(anyhow!(
                    "unknown partition '{other}' (expected components, pairs, global or file:<path>)"
                ))
            }
        }
    }
}

fn load_inputs(
    common: &CommonTestArgs,
) -> Result<(ingest::LabelledData, HypothesisPartition), Failure> {
    init_threads(common.threads)?;
    let data = ingest::read_csv_dataset(&common.data).map_err(Failure::Data)?;
    let partition = resolve_partition(&common.partition, &data).map_err(Failure::Config)?;
    Ok((data, partition))
}

fn cmd_test(args: TestArgs) -> Result<(), Failure> {
    if !(0.0 < args.alpha && args.alpha < 1.0) {
        return Err(Failure::Config(anyhow!(
            "--alpha must be in (0,1), got {}",
            args.alpha
        )));
    }
    let (data, partition) = load_inputs(&args.common)?;
    let method = resolve_method(args.common.method, args.common.wild_weights);
    let result = qfmct_test(
        &data.dataset,
        &partition,
        args.common.statistic.into(),
        method,
        args.alpha,
        args.common.reps,
        args.common.seed,
    )
    .map_err(|e| Failure::Compute(anyhow!("{e}")))?;

    print!("{}", record::render_test_result(&result));

    if let Some(stem) = &args.out {
        let csv = record::test_result_csv(&result);
        let record = RunRecord::new(
            "test",
            args.common.seed,
            args.common.threads,
            &args.common.data,
            Payload::Test(result),
        )
        .map_err(Failure::Data)?;
        let csv_path = record::write_csv(stem, &csv).map_err(Failure::Data)?;
        let json_path = record.write_json(stem).map_err(Failure::Data)?;
        eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    let scenario = config::read_scenario(&args.config).map_err(Failure::Config)?;
    let table = run_scenario(&scenario).map_err(|e| Failure::Compute(anyhow!("{e}")))?;

    print!("{}", table.to_aligned_text());

    if let Some(stem) = &args.out {
        let csv = table.to_csv();
        let record = RunRecord::new(
            "simulate",
            scenario.seed,
            args.threads,
            &args.config,
            Payload::Simulate(table),
        )
        .map_err(Failure::Data)?;
        let csv_path = record::write_csv(stem, &csv).map_err(Failure::Data)?;
        let json_path = record.write_json(stem).map_err(Failure::Data)?;
        eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    }
    Ok(())
}

fn cmd_diag(args: DiagArgs) -> Result<(), Failure> {
    let (data, partition) = load_inputs(&args.common)?;
    let kind: QfKind = args.common.statistic.into();
    let method = resolve_method(args.common.method, args.common.wild_weights);

    let stats = compute_stats(&data.dataset);
    let observed = q_vector(&partition, &stats, kind)
        .map_err(|e| Failure::Compute(anyhow!("{e}")))?;
    let reps = replicates(
        &data.dataset,
        &partition,
        kind,
        method,
        args.common.reps,
        args.common.seed,
    )
    .map_err(|e| Failure::Compute(anyhow!("{e}")))?;

    let mut csv = String::from("replicate");
    for label in &observed.labels {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    for b in 0..reps.b() {
        let _ = write!(csv, "{}", b + 1);
        for &q in reps.row(b) {
            let _ = write!(csv, ",{q}");
        }
        csv.push('\n');
    }

    println!(
        "replicate matrix: B = {}, L = {}, method {}, statistic {}",
        reps.b(),
        reps.l(),
        method,
        kind
    );
    for (l, label) in observed.labels.iter().enumerate() {
        let col = reps.column(l);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (col.len() - 1).max(1) as f64;
        println!(
            "  {label}: observed {:.6}, replicate mean {mean:.6}, variance {var:.6}",
            observed.values[l]
        );
    }

    let record = RunRecord::new(
        "diag",
        args.common.seed,
        args.common.threads,
        &args.common.data,
        Payload::Diag {
            method: method.to_string(),
            statistic: kind.to_string(),
            replicates: reps.b(),
            blocks: reps.l(),
            observed,
        },
    )
    .map_err(Failure::Data)?;
    let csv_path = record::write_csv(&args.out, &csv).map_err(Failure::Data)?;
    let json_path = record.write_json(&args.out).map_err(Failure::Data)?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}
