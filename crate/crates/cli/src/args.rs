use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wlasso", version, about = "Weighted-Lasso sparse logistic regression")]
pub struct Cli {
    /// Worker threads for folds and replicates (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one weighted-Lasso model.
    Fit(FitArgs),
    /// Cross-validate lambda over a log-spaced path.
    Cv(CvArgs),
    /// Leave-one-out model size and misclassification.
    Loocv(LoocvArgs),
    /// Compute (and optionally normalize) penalty weights.
    Weights(WeightsArgs),
    /// Run the AR(1) simulation study.
    Simulate(SimulateArgs),
    /// Evaluate the oracle bounds for given constants.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NaPolicyArg {
    Error,
    Drop,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Fista,
    Transform,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column: 0-based index or header name.
    #[arg(long, default_value = "0")]
    pub response: String,
    /// Field delimiter (single byte).
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// The file has no header row.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, value_enum, default_value = "error")]
    pub na_policy: NaPolicyArg,
    /// String labels for the classes, e.g. `ALL=1,AML=0`.
    #[arg(long)]
    pub label_map: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol_kkt: Option<f64>,
    #[arg(long)]
    pub tol_obj: Option<f64>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Fit an unpenalized intercept.
    #[arg(long)]
    pub intercept: bool,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// uniform | type1 | type2 | type3 | type4
    #[arg(long, default_value = "uniform")]
    pub weights: String,
    /// Exponent r in the concentration factor of types I/II.
    #[arg(long)]
    pub r: Option<f64>,
    /// Fixed penalty for the type IV pilot fit (default: cross-validated).
    #[arg(long)]
    pub pilot_lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Penalty level, or `cv` to select it by cross-validation.
    #[arg(long, default_value = "cv")]
    pub lambda: String,
    /// Coefficients below this magnitude are reported as zero.
    #[arg(long, default_value_t = 0.0)]
    pub limit: f64,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    /// deviance | misclassification
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub n_lambda: Option<usize>,
    #[arg(long)]
    pub min_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct LoocvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Fixed penalty, or `cv` to select it once on the full data.
    #[arg(long, default_value = "cv")]
    pub lambda: String,
    /// Re-derive weights and re-select lambda for every held-out row.
    #[arg(long)]
    pub refit: bool,
    /// Coefficient threshold for model size.
    #[arg(long, default_value_t = 1e-4)]
    pub limit: f64,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Rescale so the weights sum to p.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// 1 or 2.
    #[arg(long)]
    pub pattern: Option<u8>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Comma-separated schemes, e.g. `uniform,type1,type4`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sweep every p x rho x pattern combination of the published tables.
    #[arg(long)]
    pub grid: bool,
    /// Output directory for the JSON and CSV reports.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Sup-norm bound L on the design entries.
    #[arg(long = "L", default_value_t = 1.0)]
    pub l_bound: f64,
    /// l1 radius B of the true coefficients.
    #[arg(long = "B", default_value_t = 1.0)]
    pub b_radius: f64,
    #[arg(long = "A", default_value_t = 1.0)]
    pub a: f64,
    /// Penalty level (default: the theoretical floor).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 9)]
    pub dstar: usize,
    #[arg(long, default_value_t = 0.5)]
    pub k: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub wmin: f64,
    /// Largest weight (default: wmin).
    #[arg(long)]
    pub wmax: Option<f64>,
    /// Sum of squared weights on the support (default: dstar * wmin^2).
    #[arg(long)]
    pub wh_sq: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    /// Radius B* for the weight condition of the prediction bound.
    #[arg(long)]
    pub b_star: Option<f64>,
    /// Confidence level for the beta-min dimension p(delta, A).
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
}
