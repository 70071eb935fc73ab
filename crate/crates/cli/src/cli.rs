use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use evhdr_core::fusion::{DEFAULT_LAMBDA, DEFAULT_SAMPLES};
use evhdr_net::stack::StackMode;
use evhdr_net::Direction;

#[derive(Debug, Parser)]
#[command(name = "evhdr", version, about = "Exposure stacks from a single image, HDR fusion, tone mapping and evaluation")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one direction model on `<data>/<scene>/<EV>.png`.
    Train(TrainArgs),
    /// Generate an exposure stack from one image.
    Stack(StackArgs),
    /// Recover the response curve from a stack and merge it to radiance.
    Fuse(FuseArgs),
    /// Tone-map a Radiance HDR file to an 8-bit PNG.
    Tonemap(TonemapArgs),
    /// Score predicted stacks (and HDR results) against ground truth.
    Eval(EvalArgs),
    /// Run one of the built-in comparisons on synthetic (or given) scenes.
    Reproduce(ReproduceArgs),
    /// Write a synthetic dataset in the `<scene>/<EV>.png` layout.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Increase,
    Decrease,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Increase => Direction::Increase,
            DirectionArg::Decrease => Direction::Decrease,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// EV −3..=3 in whole steps (7 images).
    Predefined,
    /// EV −3..=3 in half steps (13 images).
    Continuous,
}

impl From<ModeArg> for StackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Predefined => StackMode::Predefined,
            ModeArg::Continuous => StackMode::Continuous,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with `[model]` and `[train]` tables; defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root holding one directory per scene.
    #[arg(long)]
    pub data: PathBuf,
    /// Output weight file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    /// Per-epoch loss log; defaults to the weight path with a `.csv` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight file whose encoder initialises this model; requires
    /// `model.use_pretrained_encoder = true`.
    #[arg(long)]
    pub pretrained_encoder: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// Increase-direction weights.
    #[arg(long)]
    pub inc: PathBuf,
    /// Decrease-direction weights.
    #[arg(long)]
    pub dec: PathBuf,
    /// Input image (PNG or JPEG).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "continuous")]
    pub mode: ModeArg,
    /// Output directory; files are named by EV (`-2.5.png`, `0.png`, `+3.png`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory of `<EV>.png` exposures.
    #[arg(long)]
    pub stack: PathBuf,
    /// Output Radiance `.hdr` file.
    #[arg(long)]
    pub out: PathBuf,
    /// Smoothness weight of the response-curve fit.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Pixel locations sampled for the fit.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the recovered curve as `level,g_r,g_g,g_b` CSV.
    #[arg(long)]
    pub export_crf: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Operator {
    /// Reinhard global operator.
    Rh,
    /// Kim–Kautz consistent operator.
    Kk,
}

#[derive(Debug, Args)]
pub struct TonemapArgs {
    #[arg(long)]
    pub hdr: PathBuf,
    #[arg(long, value_enum)]
    pub operator: Operator,
    #[arg(long)]
    pub out: PathBuf,
    /// Reinhard key value.
    #[arg(long, default_value_t = 0.18)]
    pub key: f64,
    /// Reinhard white point; the image maximum if omitted.
    #[arg(long)]
    pub white: Option<f64>,
    /// Kim–Kautz display maximum (cd/m²).
    #[arg(long, default_value_t = 300.0)]
    pub d_max: f64,
    /// Kim–Kautz display minimum (cd/m²).
    #[arg(long, default_value_t = 0.3)]
    pub d_min: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: `<scene>/<EV>.png`, optionally `<scene>/radiance.hdr`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth in the same layout.
    #[arg(long)]
    pub gt: PathBuf,
    /// Summary CSV: `ev,metric,n,m,sigma`.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-image CSV: `scene,ev,metric,value`.
    #[arg(long)]
    pub rows: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    DenseStack,
    Ablation,
    HoldOut,
    CrfCurve,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Output directory for CSVs and training logs.
    #[arg(long)]
    pub work_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Base `[model]`/`[train]` config for the trained variants.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Synthetic training scenes.
    #[arg(long, default_value_t = 8)]
    pub train_scenes: usize,
    /// Synthetic validation scenes.
    #[arg(long, default_value_t = 8)]
    pub val_scenes: usize,
    /// Side of the synthetic scenes in pixels.
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    /// Use scenes from this dataset root instead of synthetic ones; the
    /// last quarter validates.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// crf-curve: build the stacks with these models instead of using the
    /// scene's own exposures (needs `--dec` too).
    #[arg(long, requires = "dec")]
    pub inc: Option<PathBuf>,
    #[arg(long, requires = "inc")]
    pub dec: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub scenes: usize,
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Which EVs to render.
    #[arg(long, value_enum, default_value = "predefined")]
    pub mode: ModeArg,
    /// Exponent of the simulated camera response.
    #[arg(long, default_value_t = 2.2)]
    pub gamma: f64,
}
