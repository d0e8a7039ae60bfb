use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use uniloss::verify::DEFAULT_SLACK;

#[derive(Debug, Parser, Serialize)]
#[command(name = "uniloss", version, about = "Proper losses, Bregman divergences and KL-domination checks")]
pub struct Cli {
    /// Seed for every random choice; identical seeds give identical output.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write the main result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Certify a KL-domination inequality.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Constrained divergence minimization sweeps.
    #[command(subcommand)]
    Project(ProjectCmd),
    /// Bregman k-means with the KL universality chain.
    Cluster(ClusterArgs),
    /// PAC and PAC-Bayes bounds.
    #[command(subcommand)]
    Pacbayes(PacbayesCmd),
    /// Forecast evaluation and logistic recalibration.
    #[command(subcommand)]
    Forecast(ForecastCmd),
    /// Inspect the built-in proper losses.
    #[command(subcommand)]
    Losses(LossesCmd),
}

/// `--C` sets the constant directly; otherwise it is the infimum for the
/// chosen loss or generator times `1 + slack`.
#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct ConstantArgs {
    #[arg(long = "C", conflicts_with = "slack")]
    pub c: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
}

impl ConstantArgs {
    pub fn resolve(&self, bound: f64) -> f64 {
        self.c.unwrap_or(bound * (1.0 + self.slack))
    }
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct SamplerArgs {
    /// Grid step for the sampled interior points.
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    /// Uniform (and as many boundary-biased) random samples.
    #[arg(long, default_value_t = 5000)]
    pub n_random: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub corner_margin: f64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCmd {
    /// Binary domination of a proper loss's regret by KL on a grid.
    Thm1 {
        #[arg(long)]
        loss: String,
        #[command(flatten)]
        constant: ConstantArgs,
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
    },
    /// Multivariate domination with a Hessian-gap certificate.
    Thm2 {
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[command(flatten)]
        constant: ConstantArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Separable domination for a scalar generator.
    Thm3 {
        #[arg(long)]
        scalar: String,
        #[command(flatten)]
        constant: ConstantArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Local quadratic (Fisher information) ratios under dyadic halving.
    Local {
        #[arg(long)]
        loss: String,
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        constant: ConstantArgs,
        #[arg(long, default_value_t = 0.1)]
        dp0: f64,
        #[arg(long, default_value_t = 20)]
        halvings: usize,
    },
    /// KL, half squared TV and half squared L2 between two distributions.
    Pinsker {
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        q: Vec<f64>,
    },
    /// Averaged domination over random joint weights.
    Ib {
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        nx: usize,
        #[arg(long, default_value_t = 3)]
        nt: usize,
        #[command(flatten)]
        constant: ConstantArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Tv,
    Chi2,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Own,
    Kl,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepCommon {
    /// Reference distribution.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.25")]
    pub p: Vec<f64>,
    /// Generators compared against KL.
    #[arg(long, value_delimiter = ',', default_value = "quadratic,mahalanobis-s,mahalanobis-ns")]
    pub generators: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectCmd {
    /// Minimize each divergence subject to `h . q = mu` over a grid of mu.
    SweepMean {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
        h: Vec<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = -0.5)]
        mu_min: f64,
        #[arg(long, default_value_t = 0.5)]
        mu_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Minimize each divergence outside a ball `metric(p, q) >= eps`.
    SweepBall {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Largest radius; defaults to 1 for TV and 2 for chi-square.
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Own)]
        mode: ModeArg,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// Points CSV, one row per point.
    #[arg(long = "in", required_unless_present = "blobs")]
    pub input: Option<PathBuf>,
    /// Use seeded Gaussian blob data with this many points instead of a file.
    #[arg(long)]
    pub blobs: Option<usize>,
    /// Dimension of the blob data.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "quadratic")]
    pub generator: String,
    #[command(flatten)]
    pub constant: ConstantArgs,
    #[arg(long, default_value_t = 32)]
    pub starts: usize,
    /// Also write per-point cluster labels as CSV.
    #[arg(long)]
    pub assignments_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundArg {
    Pac,
    PacBayes,
    Universal,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacbayesCmd {
    /// Evaluate one bound.
    Bound {
        #[arg(long, value_enum, default_value_t = BoundArg::PacBayes)]
        kind: BoundArg,
        /// Empirical loss (log-loss for the universal bound).
        #[arg(long)]
        lhat: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Free parameter; minimized over a log grid when omitted.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        l_max: f64,
        #[arg(long, default_value_t = 1.0)]
        prior_mass: f64,
        #[arg(long, default_value_t = 0.0)]
        kl: f64,
        /// Predictions are clipped to [clip, 1 - clip] (universal bound).
        #[arg(long, default_value_t = 0.1)]
        clip: f64,
        /// Target loss for the universal bound.
        #[arg(long, default_value = "quadratic")]
        loss: String,
        #[command(flatten)]
        constant: ConstantArgs,
    },
    /// Monte Carlo coverage of a bound on a synthetic problem.
    Validate {
        /// Harness specification (JSON); the built-in example is used otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = BoundArg::PacBayes)]
        kind: BoundArg,
        /// Target loss for the universal bound.
        #[arg(long, default_value = "quadratic")]
        loss: String,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastCmd {
    /// 0-1, quadratic and log-loss of a forecast file.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "t", default_value_t = uniloss::forecast::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Add a row for the forecasts recalibrated by this model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit the logistic recalibration map on training data.
    Fit {
        #[arg(long)]
        train: PathBuf,
    },
    /// Apply a fitted model to a forecast file.
    Recal {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate synthetic forecast data.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.02)]
        hard_zero_fraction: f64,
        /// Draw outcomes from sigmoid(b0 + b1 x) with uniform x instead of
        /// calibrated beta forecasts.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 2)]
        logistic: Option<Vec<f64>>,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossesCmd {
    /// Entropy, weight function and universality constant.
    Info {
        #[arg(long)]
        loss: String,
    },
    /// Admissibility checks on a grid.
    Check {
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
    },
}
