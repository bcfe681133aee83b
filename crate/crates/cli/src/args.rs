use std::path::PathBuf;

use bpatch::evaluation::ExperimentConfig;
use bpatch::inference::ChainConfig;
use bpatch::prediction::PredictionConfig;
use bpatch::{Hyperparameters, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "bpatch", version, about = "Bayesian patchwork case-based reasoning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "BPATCH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for folds and grid points; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write a posterior archive.
    Train(TrainArgs),
    /// Predict labels of new cases from an archive.
    Predict(PredictArgs),
    /// Show the most influential parents of chosen cases.
    Explain(ExplainArgs),
    /// K-fold cross-validation.
    Cv(CvArgs),
    /// Cross-validation over a hyperparameter grid.
    Sweep(SweepArgs),
    /// Retrain on groups of top-ranked features.
    Subsets(SubsetArgs),
    /// Per-sweep timing on synthetic data.
    Runtime(RuntimeArgs),
    /// Baseline classifiers.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Draw a synthetic dataset from the generative model.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Discretization spec: a JSON file or a built-in name (heart, heart-corrected, breast, readmission).
    #[arg(long)]
    pub spec: String,
    /// Downsample every class to the size of the smallest.
    #[arg(long)]
    pub balanced: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum VariantArg {
    Model1,
    Model2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Model1 => Variant::ModelI,
            VariantArg::Model2 => Variant::ModelII,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "model2")]
    pub variant: VariantArg,
    /// Leave training labels out of the fit.
    #[arg(long)]
    pub unsupervised: bool,
    /// Accepted for symmetry with --unsupervised; supervised is the default.
    #[arg(long, conflicts_with = "unsupervised")]
    pub supervised: bool,
    /// Parent set size.
    #[arg(long = "S", default_value_t = 80)]
    pub s: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 2000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    /// Standard deviation of the logit random walk on q.
    #[arg(long, default_value_t = 0.5)]
    pub step_size: f64,
}

impl ModelArgs {
    pub fn hyperparameters(&self) -> Hyperparameters {
        let mut hp = Hyperparameters::with_variant(self.variant.into());
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut hp.alpha, self.alpha);
        set(&mut hp.gamma, self.gamma);
        set(&mut hp.sigma1, self.sigma1);
        set(&mut hp.sigma2, self.sigma2);
        set(&mut hp.lambda0, self.lambda0);
        set(&mut hp.lambda, self.lambda);
        set(&mut hp.mu0, self.mu0);
        set(&mut hp.mu, self.mu);
        hp
    }

    pub fn chain(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thin,
            mh_step_size: self.step_size,
            rng_seed: seed,
            supervised: !self.unsupervised,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Binary decision threshold on the probability of the second class.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Sweeps of the new-case sampler per retained training state.
    #[arg(long, default_value_t = 10)]
    pub sweeps: usize,
    /// Use at most this many evenly spaced retained states.
    #[arg(long)]
    pub max_samples: Option<usize>,
}

impl PredictOptions {
    pub fn config(&self, seed: u64) -> PredictionConfig {
        PredictionConfig {
            sweeps_per_sample: self.sweeps,
            threshold: self.threshold,
            rng_seed: seed,
            max_samples: self.max_samples,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutArgs {
    /// Run directory; created if absent.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub archive: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub predict: PredictOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// 1-based source rows to explain; all cases when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cases: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub top_k: usize,
    #[command(flatten)]
    pub predict: PredictOptions,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FoldArgs {
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub stratified: bool,
    /// 1-based positive class for the metrics; defaults to the discretization's.
    #[arg(long)]
    pub positive_class: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    #[command(flatten)]
    pub predict: PredictOptions,
    /// Also write (x, y) series files for plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum SweepParam {
    S,
    Alpha,
    /// Pairs written as gamma:sigma1.
    Shape,
    Sigma2,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SubsetArgs {
    #[command(flatten)]
    pub cv: CvArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RuntimeArgs {
    /// Case counts of the synthetic datasets.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pub n: Vec<usize>,
    /// Feature count of the synthetic datasets.
    #[arg(long, default_value_t = 13)]
    pub p: usize,
    #[arg(long = "S", value_delimiter = ',', default_value = "20,40,80")]
    pub s: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub sweeps: usize,
    #[arg(long)]
    pub emit_plot_data: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum KnnModeArg {
    Plain,
    Distance,
    Feature,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Hamming-distance nearest neighbors.
    Knn(KnnArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KnnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of neighbors.
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub stratified: bool,
    /// 1-based positive class for the metrics; defaults to the discretization's.
    #[arg(long)]
    pub positive_class: Option<usize>,
    #[arg(long, value_enum, default_value = "plain")]
    pub mode: KnnModeArg,
    /// Comma-separated feature weights for the feature mode.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long = "S", default_value_t = 5)]
    pub s: usize,
    #[arg(long = "N", default_value_t = 50)]
    pub n: usize,
    #[arg(long = "P", default_value_t = 5)]
    pub p: usize,
    /// Categories per feature.
    #[arg(long = "V", default_value_t = 3)]
    pub v: usize,
    /// Number of classes.
    #[arg(long = "M", default_value_t = 2)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "model2")]
    pub variant: VariantArg,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Experiment settings shared by `cv`, `sweep` and `subsets`.
pub fn experiment_config(cv: &CvArgs, seed: u64, positive_default: u16) -> ExperimentConfig {
    ExperimentConfig {
        hp: cv.model.hyperparameters(),
        n_parents: cv.model.s,
        chain: cv.model.chain(seed),
        prediction: cv.predict.config(seed),
        folds: cv.folds.k,
        fold_seed: seed,
        parent_seed: seed.wrapping_add(1),
        stratified: cv.folds.stratified,
        positive_class: cv
            .folds
            .positive_class
            .map(|c| c.saturating_sub(1) as u16)
            .unwrap_or(positive_default),
    }
}
