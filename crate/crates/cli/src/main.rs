//! `mexi`: generate synthetic sessions, label, train, predict and evaluate
//! matcher expertise characterizers.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mexi::augmentation::{AugmentPlan, LabelSource};
use mexi::characterizer::CharacterizerConfig;
use mexi::classifier::ClassifierConfig;
use mexi::expertise::{PermutationConfig, ThresholdConfig};
use mexi::format::ParseOptions;
use mexi::heatmap::{Bins, DEFAULT_BINS};
use mexi::neural::seq::SeqArch;
use mexi::neural::TrainerConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<mexi::Error> for CliError {
    fn from(e: mexi::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "mexi", version, about = "Expert characterization for human schema matchers")]
struct Cli {
    /// `key = value` file of default flags; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Accept session logs with tied or out-of-order decision timestamps by
    /// shifting them forward in 1 ms steps, in file order.
    #[arg(long, global = true)]
    jitter_ties: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic task, reference match, sessions and manifest.
    Generate(GenerateArgs),
    /// Fit population thresholds and write each session's measures and labels.
    Label(LabelArgs),
    /// Write the standardized feature vectors a trained model sees.
    Features(FeaturesArgs),
    /// Train a characterizer model.
    Train(TrainArgs),
    /// Predict expertise labels with a trained model.
    Predict(PredictArgs),
    /// Run the k-fold protocol against the baselines.
    Evaluate(EvaluateArgs),
    /// Export per-kind mouse heat maps of one session.
    Heatmap(HeatmapArgs),
    /// Print the tables of an evaluation report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub per_archetype: usize,
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub m: usize,
    #[arg(long, default_value_t = 50)]
    pub reference_pairs: usize,
    #[arg(long, default_value = "synthetic")]
    pub task_id: String,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Task spec (JSON).
    #[arg(long)]
    pub task: PathBuf,
    /// Reference match (`row,col` CSV).
    #[arg(long)]
    pub reference: PathBuf,
    /// Session log file or directory of `*.json` logs.
    #[arg(long)]
    pub sessions: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ThresholdArgs {
    #[arg(long, default_value_t = 0.5)]
    pub delta_p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta_r: f64,
    /// Significance level of the resolution permutation test.
    #[arg(long, default_value_t = 0.05)]
    pub p_significance: f64,
    #[arg(long, default_value_t = 80)]
    pub res_percentile: u32,
    #[arg(long, default_value_t = 20)]
    pub cal_percentile: u32,
    /// Monte-Carlo permutations when exhaustive enumeration is too large.
    #[arg(long, default_value_t = 10_000)]
    pub permutation_samples: usize,
}

impl ThresholdArgs {
    pub fn thresholds(&self) -> Result<ThresholdConfig<f64>, CliError> {
        if self.res_percentile == 0 || self.res_percentile > 100 || self.cal_percentile == 0 || self.cal_percentile > 100 {
            return Err(CliError::Usage("percentiles must lie in 1..=100".into()));
        }
        Ok(ThresholdConfig {
            delta_p: self.delta_p,
            delta_r: self.delta_r,
            p_significance: self.p_significance,
            res_percentile: self.res_percentile,
            cal_percentile: self.cal_percentile,
            ..ThresholdConfig::default()
        })
    }

    pub fn permutation(&self) -> PermutationConfig {
        PermutationConfig {
            samples: self.permutation_samples,
            ..PermutationConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// mexi_base, mexi_50 or mexi_70.
    #[arg(long, default_value = "mexi_50")]
    pub variant: String,
    /// Window stride; defaults to the variant's.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Label sub-matchers by their own measures (recompute) or their parent's (inherit).
    #[arg(long, default_value = "recompute")]
    pub label_source: String,
    #[arg(long, default_value_t = 20)]
    pub seq_epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub spatial_epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub seq_hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub seq_dense: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Heat-map resolution, `COLSxROWS`.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: Bins,
    /// Seconds without mouse events counted as idle.
    #[arg(long, default_value_t = 2.0)]
    pub idle_threshold: f64,
    /// Trees in the bagged ensemble candidate; 0 keeps only the logistic model.
    #[arg(long, default_value_t = 25)]
    pub trees: usize,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

impl ModelArgs {
    pub fn characterizer(&self, seed: u64) -> Result<CharacterizerConfig, CliError> {
        let usage = |e: mexi::Error| CliError::Usage(e.to_string());
        let mut plan = AugmentPlan::variant(&self.variant).map_err(usage)?;
        if let Some(stride) = self.stride {
            plan = plan.with_stride(stride).map_err(usage)?;
        }
        let label_source = match self.label_source.as_str() {
            "recompute" => LabelSource::Recompute,
            "inherit" => LabelSource::Inherit,
            other => return Err(CliError::Usage(format!("unknown label source {other:?}"))),
        };
        if self.seq_hidden == 0 || self.seq_dense == 0 || self.batch_size == 0 {
            return Err(CliError::Usage("layer sizes and batch size must be >= 1".into()));
        }
        let trainer = |epochs| TrainerConfig {
            learning_rate: self.learning_rate,
            epochs,
            batch_size: self.batch_size,
            ..TrainerConfig::default()
        };
        Ok(CharacterizerConfig {
            plan,
            label_source,
            thresholds: self.thresholds.thresholds()?,
            permutation: self.thresholds.permutation(),
            seq_arch: SeqArch {
                hidden: self.seq_hidden,
                dense: self.seq_dense,
                ..SeqArch::default()
            },
            seq_trainer: trainer(self.seq_epochs),
            spatial_trainer: trainer(self.spatial_epochs),
            bins: self.bins,
            idle_threshold: self.idle_threshold,
            classifier: ClassifierConfig {
                trees: self.trees,
                ..ClassifierConfig::default()
            },
            seed,
            ..CharacterizerConfig::default()
        })
    }
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Output JSON file (scores, labels and fitted thresholds).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one CSV row of measures and labels per matcher.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    /// Only look at the first N decisions of every session.
    #[arg(long)]
    pub early: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Task spec; without --task/--reference/--sessions a synthetic benchmark is generated from the seed.
    #[arg(long, requires_all = ["reference", "sessions"])]
    pub task: Option<PathBuf>,
    #[arg(long, requires_all = ["task", "sessions"])]
    pub reference: Option<PathBuf>,
    #[arg(long, requires_all = ["task", "reference"])]
    pub sessions: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Sessions per archetype of the generated benchmark.
    #[arg(long, default_value_t = 30)]
    pub per_archetype: usize,
    /// Comma-separated baseline names.
    #[arg(long, default_value = "Rand,Rand_Freq,Conf,Qual. Test,Self-Assess,LRSM,BEH")]
    pub baselines: String,
    /// Bootstrap resamples per comparison.
    #[arg(long, default_value_t = 10_000)]
    pub bootstrap: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Task spec; inferred from the log when omitted.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: Bins,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `report.json` written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let args = match config::config_path(&args) {
        Some(p) => {
            let path = Path::new(&p);
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            config::merge(args, &config::parse(&text, path)?)
        }
        None => args,
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{}", e.render());
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let opts = ParseOptions { jitter_ties: cli.jitter_ties };
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Label(a) => commands::label(&a, opts),
        Command::Features(a) => commands::features(&a, opts),
        Command::Train(a) => commands::train(&a, opts),
        Command::Predict(a) => commands::predict(&a, opts),
        Command::Evaluate(a) => commands::evaluate(&a, opts),
        Command::Heatmap(a) => commands::heatmap(&a, opts),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprint!("{m}");
            if !m.ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
