use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fastsvt_core::svt::Backend;

#[derive(Debug, Parser)]
#[command(
    name = "fastsvt",
    version,
    about = "Matrix completion by singular value thresholding",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Re-run the invocation recorded in a manifest.json.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    /// With --manifest: write artifacts here instead of the recorded directory.
    #[arg(long, value_name = "DIR", requires = "manifest")]
    pub out_dir: Option<PathBuf>,

    /// With --manifest: worker thread count for the re-run.
    #[arg(long, value_name = "N", requires = "manifest")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete a sampled matrix given as MatrixMarket coordinates.
    Complete(CompleteArgs),
    /// Recover a grayscale image from a uniform pixel sample.
    Image(ImageArgs),
    /// Complete a ratings matrix and track held-out error.
    Ratings(RatingsArgs),
    /// Time the partial SVD of each backend on synthetic images.
    Bench(BenchArgs),
    /// Write synthetic inputs.
    #[command(subcommand)]
    Generate(GenerateCommand),
}

/// Solver settings. Anything left unset takes its value from the input.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Partial SVD backend: r4svd, r3svd, rsvd-fixed or full-oracle.
    #[arg(long, default_value = "r4svd", value_parser = parse_backend_name)]
    pub backend: String,
    /// Target rank for the rsvd-fixed backend.
    #[arg(long, value_name = "K")]
    pub fixed_rank: Option<usize>,
    /// Oversampling for the rsvd-fixed backend.
    #[arg(long, value_name = "P")]
    pub oversample: Option<usize>,
    /// Shrinkage threshold [default: Frobenius norm of the samples].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Step size [default: sqrt(m n / samples)].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Initial sketch width [default: max(1, floor(0.05 min(m, n)))].
    #[arg(long)]
    pub t0: Option<usize>,
    /// Columns added per sketch extension round [default: 10].
    #[arg(long)]
    pub dt: Option<usize>,
    /// Power passes per fresh sketch block [default: 1].
    #[arg(long)]
    pub np: Option<usize>,
    /// Annealing factor for the sketch precision [default: 0.95].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Initial sketch error-percentage target [default: 0.5].
    #[arg(long = "eps-threshold0")]
    pub eps_threshold0: Option<f64>,
    /// Stop once the mean absolute error on the samples drops below this.
    #[arg(long, conflicts_with = "stop_residual")]
    pub stop_mae: Option<f64>,
    /// Stop once ||P(A - X)||_F drops below this.
    #[arg(long)]
    pub stop_residual: Option<f64>,
    /// Iteration cap [default: 500].
    #[arg(long)]
    pub maxit: Option<usize>,
    /// Base seed for sampling, splitting and sketching.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the kernels; 1 is bit-reproducible by construction.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl SolverArgs {
    pub fn backend(&self) -> Backend {
        let mut b: Backend = self.backend.parse().expect("validated by clap");
        if let Backend::RsvdFixed { rank, oversample } = &mut b {
            if let Some(k) = self.fixed_rank {
                *rank = k;
            }
            if let Some(p) = self.oversample {
                *oversample = p;
            }
        }
        b
    }
}

fn parse_backend_name(s: &str) -> Result<String, String> {
    s.parse::<Backend>().map(|_| s.to_string()).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving all artifacts.
    #[arg(long, value_name = "DIR", default_value = "fastsvt-out")]
    pub out_dir: PathBuf,
    /// Trace CSV path, relative to <out-dir> unless absolute [default: trace.csv].
    /// The JSON trace is written next to it.
    #[arg(long, value_name = "FILE")]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    /// MatrixMarket coordinate file with the known entries.
    pub matrix: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// PGM (P5 or P2) image; omit with --synthetic.
    #[arg(required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub image: Option<PathBuf>,
    /// Use a generated smooth low-rank image instead of a file.
    #[arg(long)]
    pub synthetic: bool,
    /// Side length of the synthetic image.
    #[arg(long, default_value_t = 256, requires = "synthetic")]
    pub size: usize,
    /// Rank of the synthetic image before quantization.
    #[arg(long, default_value_t = 20, requires = "synthetic")]
    pub rank: usize,
    /// Fraction of pixels observed.
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RatingsArgs {
    /// Ratings file, one `user<sep>item<sep>rating[<sep>...]` per line.
    pub ratings: PathBuf,
    #[arg(long, default_value = "::")]
    pub separator: String,
    /// Fraction of ratings used for training; the rest is held out.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Stop once held-out MAE has not improved for N iterations.
    #[arg(long, value_name = "N")]
    pub early_stop_patience: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated image side lengths.
    #[arg(long, value_delimiter = ',', default_value = "256,512")]
    pub sizes: Vec<usize>,
    /// Comma-separated backends.
    #[arg(long, value_delimiter = ',', default_value = "r4svd,full-oracle", value_parser = parse_backend_name)]
    pub backends: Vec<String>,
    /// Rank of the synthetic images.
    #[arg(long, default_value_t = 20)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Random low-rank matrix sampled uniformly.
    Matrix {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled entries (MatrixMarket coordinates).
        #[arg(long)]
        out: PathBuf,
        /// Optional full matrix (MatrixMarket array).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Smooth low-rank grayscale image.
    Image {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noisy low-rank ratings on a 1 to 5 scale.
    Ratings {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        items: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "::")]
        separator: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn rsvd_fixed_overrides() {
        let cli = Cli::try_parse_from([
            "fastsvt",
            "complete",
            "a.mtx",
            "--backend",
            "rsvd-fixed",
            "--fixed-rank",
            "7",
        ])
        .unwrap();
        let Some(Command::Complete(c)) = cli.command else {
            panic!("wrong command")
        };
        assert_eq!(
            c.solver.backend(),
            Backend::RsvdFixed {
                rank: 7,
                oversample: 10
            }
        );
    }

    #[test]
    fn stop_flags_conflict() {
        let r = Cli::try_parse_from([
            "fastsvt",
            "complete",
            "a.mtx",
            "--stop-mae",
            "1",
            "--stop-residual",
            "1",
        ]);
        assert!(r.is_err());
        assert!(Cli::try_parse_from(["fastsvt", "complete", "a.mtx", "--backend", "lanczos"]).is_err());
    }
}
