use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "wppl", version, about = "Generate, sample, train and evaluate white-box inference for a small probabilistic IR")]
pub struct Cli {
    /// Single-threaded, bit-reproducible execution. Timings are recorded
    /// as zero.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate random programs of a model class.
    Gen(GenArgs),
    /// Type-check a program and print its typing triple.
    Check { file: PathBuf },
    /// Print the unnormalised log density at a latent vector.
    Density {
        file: PathBuf,
        /// Comma-separated latent values.
        #[arg(long, allow_hyphen_values = true)]
        z: String,
    },
    /// Run a program forward; prints latents and observations as CSV.
    Simulate {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build reference sample caches.
    Refsample(RefsampleArgs),
    /// Meta-train a network bank.
    Train(TrainArgs),
    /// Run the trained interpreter on one program.
    Infer(InferArgs),
    /// Compare predictions with reference posteriors.
    Eval(EvalArgs),
    /// Effective sample size of a cache.
    Ess {
        cache: PathBuf,
        /// Treat the samples as one Markov chain instead of weighted draws;
        /// reports the smallest per-coordinate ESS.
        #[arg(long)]
        chain: bool,
    },
    /// Compare IS-pred, IS-prior and HMC by ESS per second.
    Bench(BenchArgs),
    /// Replay the run recorded in a manifest into a new directory.
    Rerun {
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub class: String,
    /// Restrict the training split to one model type.
    #[arg(long)]
    pub kind: Option<usize>,
    /// Number of training programs.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Number of test programs.
    #[arg(long, default_value_t = 0)]
    pub test_count: usize,
    /// Restrict the test split to one model type.
    #[arg(long)]
    pub test_kind: Option<usize>,
    /// ext1 only: hold dependency graph J out of training and test on it.
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    /// Closed-form posterior draws (linear-Gaussian programs only).
    Exact,
    /// Thinned HMC draws, normaliser from LAIS.
    Hmc,
    /// Importance sampling from the prior.
    Snis,
    /// LAIS around HMC chains.
    Lais,
    /// Importance sampling from a proposal written by `infer --emit-proposal`.
    Pred,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct HmcArgs {
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Post-warmup draws per chain.
    #[arg(long, default_value_t = 10_000)]
    pub hmc_samples: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 32)]
    pub leapfrog: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RefsampleArgs {
    #[arg(required = true)]
    pub programs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Hmc)]
    pub method: MethodArg,
    /// Cache size M.
    #[arg(long, short = 'm', default_value_t = 4096)]
    pub samples: usize,
    /// Importance draws for the normaliser of `--method hmc`.
    #[arg(long, default_value_t = 10_000)]
    pub is_samples: usize,
    /// Proposal file for `--method pred`.
    #[arg(long)]
    pub proposal: Option<PathBuf>,
    #[command(flatten)]
    pub hmc: HmcArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory of `.wppl` programs; `test-*` files form the test split.
    #[arg(long)]
    pub programs: PathBuf,
    /// Directory of `<stem>.cache` files. Defaults to `--programs`.
    #[arg(long)]
    pub caches: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4096)]
    pub batch: usize,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    /// Programs per accumulated update.
    #[arg(long, default_value_t = 1)]
    pub group: usize,
    /// Epochs averaged into the logged training loss.
    #[arg(long, default_value_t = 8)]
    pub smoothing: usize,
    /// Stop after this many epochs without improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub min_improvement: f64,
    /// Feed real literals through `sign(r) ln(1 + |r|)`.
    #[arg(long)]
    pub symlog: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run once per seed, each into `seed-<s>/`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct InferArgs {
    pub program: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// Write the predicted posterior as a proposal file.
    #[arg(long)]
    pub emit_proposal: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint to evaluate. Without it the flat `N(0, 10^4)` baseline
    /// is scored.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub programs: PathBuf,
    #[arg(long)]
    pub caches: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub programs: PathBuf,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Draws per method.
    #[arg(long, short = 'm', default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Timed runs per method; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip)]
    pub out: PathBuf,
}
