use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "sudest",
    version,
    about = "Optimal estimation of SU(d) channels from n parallel uses"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Master seed; 0 draws one from system entropy and records it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest full-space dimension materialised densely.
    #[arg(long, global = true)]
    pub dense_cap: Option<usize>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SUDEST_OUT_DIR, else ./sudest-out).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Print machine-readable JSON on stdout instead of a table.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or certify spherical 2-designs.
    Design {
        #[command(subcommand)]
        action: DesignAction,
    },
    /// QFI, Tr H⁻¹, the bound and the attainability defect of an input state.
    Qfi(QfiArgs),
    /// Concentration experiment for Haar-sampled approximate designs.
    Approx(ApproxArgs),
    /// Monte-Carlo MLE experiment: N·Tr MSE against the bound.
    Simulate(SimulateArgs),
    /// Run the identity suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Mub,
    Sic,
}

#[derive(Debug, Subcommand)]
pub enum DesignAction {
    Build {
        #[arg(long, value_enum)]
        kind: Option<DesignKind>,
        #[arg(long)]
        d: Option<usize>,
        /// Also write the result (with run metadata) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Check {
        /// JSON list of vectors (`[[re, im], ...]` each), or a `design build` output.
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Mub,
    Sic,
    Approx,
    Product,
}

#[derive(Debug, Clone, Default, Args)]
pub struct QfiArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub state: Option<StateKind>,
    /// Number of Haar unitaries for `--state approx`.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ApproxArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Measurement built at the true parameter.
    Oracle,
    TwoStep,
    Locc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Optimal,
    Random,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Copy counts to sweep, e.g. `1,2,3,4`.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Repetitions per trial (N).
    #[arg(long = "repetitions", short = 'N')]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub state: Option<StateKind>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    #[arg(long, value_enum)]
    pub measurement: Option<MeasurementKind>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    /// Run only these checks (comma separated ids).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Force the named check to fail (test hook).
    #[arg(long)]
    pub perturb: Vec<String>,
    /// List check ids and exit.
    #[arg(long)]
    pub list: bool,
}
