mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "specgraph", version, about = "Learn multi-frequency partial correlation graphs from multivariate time series")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPECGRAPH_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate replicate panels from a band structure.
    Generate(GenerateArgs),
    /// Average smoothed periodograms of one or more panels.
    Estimate(EstimateArgs),
    /// Learn an inverse CSD tensor (naive, cf or ia).
    Learn(LearnArgs),
    /// Threshold an inverse CSD tensor into a K-layer graph.
    Extract(ExtractArgs),
    /// Run the synthetic SHD experiment, or compare two graphs.
    Evaluate(EvaluateArgs),
    /// Generate, estimate, learn and extract in one go.
    Pipeline(PipelineArgs),
}

/// Frequency partition as block start indices or a number of equal blocks.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct PartitionArgs {
    /// Comma-separated block start indices, beginning with 0.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Option<Vec<usize>>,
    /// Split the frequency range into this many near-equal blocks.
    #[arg(long)]
    pub equal_blocks: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Band structure JSON, or `reference` for the built-in two-band structure.
    #[arg(long)]
    pub structure: String,
    /// Series length T.
    #[arg(long, short = 't')]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Panel CSV files (one series per row); glob patterns are expanded.
    #[arg(required = true)]
    pub inputs: Vec<String>,
    /// Smoothing half-width, or `auto` for floor(sqrt(T)).
    #[arg(long, default_value = "auto")]
    pub half: String,
    /// Skip the first line of every panel file.
    #[arg(long)]
    pub header: bool,
    /// Output tensor; `.bin` selects the binary format, anything else JSON.
    #[arg(long)]
    pub out: PathBuf,
}

/// IA settings that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct IaFlags {
    /// Flat TOML file with IAConfig keys (lambda, eta, max_iters, ...).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// identity or inverse.
    #[arg(long, value_parser = kebab::<specgraph::ia::Init>)]
    pub init: Option<specgraph::ia::Init>,
    /// log-linear or log-sqrt.
    #[arg(long, value_parser = kebab::<specgraph::ia::StepsizeRule>)]
    pub stepsize: Option<specgraph::ia::StepsizeRule>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Sets all four stopping tolerances.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnMethod {
    Naive,
    Cf,
    Ia,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long, value_enum)]
    pub method: LearnMethod,
    /// Smoothed CSD tensor.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub partition: PartitionArgs,
    /// cf edge budget: one value for every block or one per block.
    #[arg(long, value_delimiter = ',')]
    pub budget: Option<Vec<usize>>,
    #[command(flatten)]
    pub ia: IaFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Residual trace CSV for ia (default: next to the output).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Run metadata JSON (default: next to the output).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Inverse CSD tensor.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long, default_value_t = specgraph::graph::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// per-block or global.
    #[arg(long, default_value = "per-block", value_parser = kebab::<specgraph::graph::Normalization>)]
    pub normalization: specgraph::graph::Normalization,
    /// K-PCG JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one edge CSV per layer.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Ground-truth K-PCG JSON; prints the SHD against it.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Compare this K-PCG JSON against --truth instead of running the experiment.
    #[arg(long, requires = "truth")]
    pub estimate: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Band structure JSON, or `reference`.
    #[arg(long, default_value = "reference")]
    pub structure: String,
    #[arg(long, short = 't', default_value_t = specgraph::synth::REFERENCE_T)]
    pub length: usize,
    #[arg(long, value_delimiter = ',', conflicts_with = "full")]
    pub regimes: Option<Vec<usize>>,
    /// All six regimes 5, 10, 20, 50, 100, 1000.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = specgraph::eval::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Smoothing half-width, or `auto` for floor(sqrt(T)).
    #[arg(long, default_value = "16")]
    pub half: String,
    /// Extraction partition starts (default: 8 equal blocks).
    #[arg(long, value_delimiter = ',', conflicts_with = "equal_blocks")]
    pub blocks: Option<Vec<usize>>,
    #[arg(long)]
    pub equal_blocks: Option<usize>,
    /// Learning partition starts for ia-bs.
    #[arg(long, value_delimiter = ',', default_value = "0,64,448")]
    pub ia_blocks: Vec<usize>,
    /// Methods to run: naive, cf-nz, cf-fk, ia-gs, ia-bs.
    #[arg(long, value_delimiter = ',', default_value = "naive,cf-nz,cf-fk,ia-gs,ia-bs")]
    pub methods: Vec<String>,
    /// Tune lambda over the grid on a held-out data set per regime.
    #[arg(long)]
    pub tune: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = specgraph::graph::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "per-block", value_parser = kebab::<specgraph::graph::Normalization>)]
    pub normalization: specgraph::graph::Normalization,
    /// Output directory for results and summaries.
    #[arg(long, required_unless_present = "estimate")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Band structure JSON, or `reference`.
    #[arg(long)]
    pub structure: String,
    #[arg(long, short = 't')]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub half: String,
    #[arg(long, value_enum, default_value = "naive")]
    pub method: LearnMethod,
    /// Extraction partition (also the learning partition unless --learn-blocks is given).
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long, value_delimiter = ',')]
    pub learn_blocks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub budget: Option<Vec<usize>>,
    #[command(flatten)]
    pub ia: IaFlags,
    #[arg(long, default_value_t = specgraph::graph::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "per-block", value_parser = kebab::<specgraph::graph::Normalization>)]
    pub normalization: specgraph::graph::Normalization,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses a kebab-case enum value through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Bad arguments or input that no rerun can fix; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use specgraph::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Shape(_)
                | E::Parameter(_)
                | E::BlockIndex { .. }
                | E::UnstableStructure(_)
                | E::Format(_)
                | E::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Learn(a) => commands::learn(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
