//! `stable-kernels`: command-line experiments over the kernel library.
//!
//! Every subcommand writes CSV to `--out` or standard output, together with a JSON
//! manifest of the resolved flags (a `<out>.manifest.json` sidecar, or one
//! `manifest:` line on standard error).

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug, Serialize)]
#[command(name = "stable-kernels", version, about = "Infinite-width kernels of scaled residual networks")]
struct Cli {
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct KernelArgs {
    /// unscaled, uniform, decreasing or custom:<path> (one λ per line).
    #[arg(long, default_value = "unscaled")]
    scaling: String,
    /// Weight variance σ_w².
    #[arg(long = "sigma-w2", default_value_t = 2.0)]
    sigma_w2: f64,
    /// Bias variance σ_b².
    #[arg(long = "sigma-b2", default_value_t = 0.0)]
    sigma_b2: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum DataFormat {
    Idx,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Emit {
    Text,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Diagonal NNGP (and NTK) kernel of a fixed point through depth: `layer,q_diag,theta_diag`.
    KernelCurve {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        depth: usize,
        /// Also propagate the NTK.
        #[arg(long)]
        ntk: bool,
        /// Input dimension of the all-ones point.
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Normalized Gram eigenvalues across depths: `depth,rank,eigenvalue`.
    Spectrum {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Dimension of the random sphere points (2 gives the circle).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        depths: Vec<usize>,
        /// Number of leading eigenvalues reported per depth.
        #[arg(long, default_value_t = 10)]
        rank: usize,
        #[arg(long)]
        ntk: bool,
        /// Use the correlation kernel (requires σ_b² = 0).
        #[arg(long)]
        correlation: bool,
        /// Dataset whose first `n` rows replace the random points.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
        /// IDX label file; defaults to the sibling of the image file.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Posterior-mean classification with validation-tuned noise.
    Regress {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Class-balanced training set size.
        #[arg(long, default_value_t = 1000)]
        train: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        correlation: bool,
        #[arg(long)]
        ntk: bool,
        /// Noise grid as multiples of Tr(Q)/N.
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
        multipliers: Vec<f64>,
        #[arg(long, value_enum, default_value = "text")]
        emit: Emit,
    },
    /// GP posterior KL and PAC-Bayes bound across depths: `depth,kl,logdet,trace,quad,bound`.
    Pacbayes {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        depths: Vec<usize>,
        /// Noise variance; defaults to 0.01·Tr(Q_0)/N.
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Infinite-width gradient second moments: `layer,qbar`.
    Grad {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        depth: usize,
    },
    /// Monte Carlo check of the analytic kernel: `quantity,empirical,analytic,z`.
    McValidate {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Also compare gradient moment ratios (width ≥ 256).
        #[arg(long)]
        grad: bool,
    },
    /// Sup-gap between the uniform recursion and the covariance ODE: `depth,max_gap,mean_gap`.
    OdeCheck {
        #[command(flatten)]
        kernel: KernelArgs,
        /// RK4 steps on [0, 1]; must be a multiple of every depth.
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{} (see --help)", first.trim_end());
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
