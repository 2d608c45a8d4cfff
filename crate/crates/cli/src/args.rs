use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Radiomics, invasiveness and survival-model toolkit for tumour structure maps.
///
/// Every subcommand also accepts `--config FILE`: a JSON object whose keys
/// are flag names (underscores or dashes). Flags on the command line win.
/// For `study` the config file is a full pipeline configuration instead.
#[derive(Debug, Parser)]
#[command(name = "gliomics", version, args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// JSON file with default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Radiomics feature vector(s) of structure maps.
    Extract(ExtractArgs),
    /// Relative invasiveness coefficient of one structure map.
    Ric(RicArgs),
    /// Correlation pruning and recursive feature elimination.
    Select(SelectArgs),
    /// Fit a survival model on a feature table.
    Train(TrainArgs),
    /// Predict survival days with a fitted model.
    Predict(PredictArgs),
    /// Score a fitted model on a labelled feature table.
    Evaluate(EvaluateArgs),
    /// K-fold cross-validation of a model specification.
    Cv(CvArgs),
    /// Full study: extract, select, train and evaluate every model.
    Study(StudyArgs),
    /// Majority-vote fusion of several label maps.
    Fuse(FuseArgs),
    /// Rule-based clean-up of a label map.
    Postproc(PostprocArgs),
    /// Dice and Hausdorff distance per tumour region.
    Segmetrics(SegmetricsArgs),
    /// Generate a synthetic phantom cohort.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Ric(_) => "ric",
            Command::Select(_) => "select",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Cv(_) => "cv",
            Command::Study(_) => "study",
            Command::Fuse(_) => "fuse",
            Command::Postproc(_) => "postproc",
            Command::Segmetrics(_) => "segmetrics",
            Command::Synth(_) => "synth",
        }
    }
}

pub const SUBCOMMANDS: [&str; 12] = [
    "extract",
    "ric",
    "select",
    "train",
    "predict",
    "evaluate",
    "cv",
    "study",
    "fuse",
    "postproc",
    "segmetrics",
    "synth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Roi {
    Wt,
    Tc,
    Et,
    Ed,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// One structure map (NIfTI-1, optionally gzipped).
    #[arg(long = "in", value_name = "SEG", conflicts_with = "cohort", required_unless_present = "cohort")]
    pub input: Option<PathBuf>,
    /// Cohort directory with cohort.csv and <id>/seg.nii[.gz].
    #[arg(long, value_name = "DIR")]
    pub cohort: Option<PathBuf>,
    /// Output feature table (CSV).
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Subject id for --in (default: the parent directory name).
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long)]
    pub age: Option<f64>,
    #[arg(long)]
    pub survival_days: Option<f64>,
    /// Brain mask for the centroid features (nonzero voxels); --in only.
    #[arg(long, value_name = "NII", requires = "input")]
    pub brain_mask: Option<PathBuf>,
    /// Regions to describe, in order.
    #[arg(long = "roi", value_enum, num_args = 1.., default_values = ["wt", "tc"])]
    pub rois: Vec<Roi>,
    #[arg(long)]
    pub no_morphology: bool,
    #[arg(long)]
    pub no_texture: bool,
    #[arg(long)]
    pub no_ric: bool,
}

#[derive(Debug, Args)]
pub struct RicArgs {
    #[arg(long = "in", value_name = "SEG")]
    pub input: PathBuf,
    /// Khachiyan stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Importance {
    Impurity,
    Permutation,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    /// Selection report (JSON).
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    /// Selected feature names, one per line.
    #[arg(long, value_name = "TXT")]
    pub list: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pearson |r| above which one of a pair is dropped.
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Trees in each ranking forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Candidate subset sizes (default grid clipped to the feature count).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub one_at_a_time: bool,
    #[arg(long, value_enum, default_value = "impurity")]
    pub importance: Importance,
    /// Standard errors within which subset sizes count as tied.
    #[arg(long, default_value_t = 1.0)]
    pub tie_se: f64,
    /// Columns kept out of the candidate pool.
    #[arg(long, num_args = 0.., default_values = ["RIC"])]
    pub exclude: Vec<String>,
    /// Only gross-total-resection subjects.
    #[arg(long)]
    pub gtr_only: bool,
}

/// Options shared by commands that fit a model from a specification.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Preset: baseline, radiomics or invasiveness.
    #[arg(long, value_name = "NAME", required_unless_present = "spec")]
    pub model: Option<String>,
    /// Custom model specification (JSON); overrides --model.
    #[arg(long, value_name = "JSON")]
    pub spec: Option<PathBuf>,
    /// Fixed predictor list (one per line) replacing the model's own feature source.
    #[arg(long, value_name = "TXT")]
    pub features: Option<PathBuf>,
    /// Forest size for forest models.
    #[arg(long)]
    pub trees: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Short/intermediate boundary, days.
    #[arg(long, default_value_t = 300.0)]
    pub t_low: f64,
    /// Intermediate/long boundary, days.
    #[arg(long, default_value_t = 450.0)]
    pub t_high: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model document (JSON).
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    /// Selection report, for models that select features.
    #[arg(long, value_name = "JSON")]
    pub selection_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub gtr_only: bool,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    /// Predictions CSV (subject, predicted_days, predicted_class).
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    /// Label for the report's split column.
    #[arg(long, default_value = "eval")]
    pub split: String,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gtr_only: bool,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, value_name = "CSV")]
    pub table: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gtr_only: bool,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Training cohort directory.
    #[arg(long, value_name = "DIR")]
    pub cohort: Option<PathBuf>,
    /// Pre-extracted training table; skips extraction.
    #[arg(long, value_name = "CSV")]
    pub features_csv: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub holdout: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Keep STR and NA subjects too.
    #[arg(long)]
    pub all_resections: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Member label maps.
    #[arg(long = "in", value_name = "SEG", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Positive weight per member.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_name = "SEG")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PostprocArgs {
    #[arg(long = "in", value_name = "SEG")]
    pub input: PathBuf,
    #[arg(long, value_name = "SEG")]
    pub out: PathBuf,
    /// WT components below this many voxels are removed.
    #[arg(long, default_value_t = 500)]
    pub min_wt: usize,
    /// ET components below this many voxels become label 1.
    #[arg(long, default_value_t = 50)]
    pub min_et: usize,
    /// Total ET below this many voxels becomes label 1.
    #[arg(long, default_value_t = 500)]
    pub et_floor: usize,
    /// Skip relabelling edema enclosed by tumour core.
    #[arg(long)]
    pub no_repair: bool,
    /// T1Gd image; enables the intensity filter.
    #[arg(long, value_name = "NII")]
    pub t1gd: Option<PathBuf>,
    /// ET voxels with z-scored T1Gd below this become label 1.
    #[arg(long)]
    pub z_et: Option<f64>,
    /// Treat --t1gd as already z-scored.
    #[arg(long, requires = "t1gd")]
    pub no_zscore: bool,
    /// Component adjacency: 6 or 26.
    #[arg(long, default_value_t = 26)]
    pub connectivity: u32,
}

#[derive(Debug, Args)]
pub struct SegmetricsArgs {
    #[arg(long, value_name = "SEG")]
    pub pred: PathBuf,
    #[arg(long = "ref", value_name = "SEG")]
    pub reference: PathBuf,
    /// 95th-percentile Hausdorff distance instead of the maximum.
    #[arg(long)]
    pub hd95: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cohort specification (JSON); defaults apply to missing keys.
    #[arg(long, value_name = "JSON")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overrides the specification's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write a T1Gd proxy image per subject.
    #[arg(long)]
    pub t1gd: bool,
}
