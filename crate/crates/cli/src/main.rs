//! `skelmap` command-line front end.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skelmap::augment::{AugmentKind, Tier};
use skelmap::normalize::NormalizeMode;
use skelmap::optim::{OptimizerKind, PlateauMetric};
use skelmap::skeleton::Protocol;
use skelmap::train::LossKind;

/// Skeleton action maps: parse, encode, augment, split, train and evaluate.
#[derive(Parser)]
#[command(name = "skelmap", version)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a JSON-lines summary of each skeleton file.
    Parse {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Encode skeleton files as PPM skeleton maps with sidecar metadata.
    Encode(EncodeArgs),
    /// Preview one op (or a policy draw) as before/after PPM images.
    Augment(AugmentArgs),
    /// Write train/test sample lists for an evaluation protocol.
    Split(SplitArgs),
    /// Train a classifier on a directory of skeleton files.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint on a directory of skeleton files.
    Eval(EvalArgs),
    /// Write the synthetic toy dataset as skeleton files.
    GenToy(GenToyArgs),
}

#[derive(Args)]
pub struct EncodeArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// frame, sequence or none
    #[arg(long, default_value = "sequence")]
    pub normalize: NormalizeMode,
}

#[derive(Args)]
pub struct AugmentArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Single op to preview (e.g. rotate, cutout, bone-shuffle); without it
    /// the policy draws its ops.
    #[arg(long)]
    pub op: Option<AugmentKind>,
    /// Magnitude in [0, 1]; defaults to the tier's magnitude.
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Policy file of key = value lines.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// weak or strong
    #[arg(long)]
    pub tier: Option<Tier>,
    #[arg(long, default_value = "sequence")]
    pub normalize: NormalizeMode,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Directory of skeleton files.
    pub data: PathBuf,
    /// cs, cv or csetup
    #[arg(long)]
    pub protocol: Protocol,
    /// File of `train_cameras:` / `train_subjects:` / `train_setups:` lines.
    #[arg(long)]
    pub split_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    Toy,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of skeleton files named like S001C001P001R001A001.skeleton.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, metrics and sample lists.
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration before the config file and flags are applied.
    #[arg(long, value_enum, default_value = "default")]
    pub preset: Preset,
    /// Flat key = value configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<Tier>,
    /// ce, ce-smooth or arcface
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// sgd or madgrad
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub normalize: Option<NormalizeMode>,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// val_acc or train_loss
    #[arg(long)]
    pub plateau_metric: Option<PlateauMetric>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Train only on the training side of this protocol (cs, cv, csetup).
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub split_config: Option<PathBuf>,
    /// Write 0 in the seconds column so metrics are reproducible.
    #[arg(long)]
    pub no_wall_clock: bool,
    /// Any configuration key, as key=value; repeatable.
    #[arg(long, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate only the samples named in this list file.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Evaluate only the test side of this protocol.
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub split_config: Option<PathBuf>,
    #[arg(long, default_value = "confusion.csv")]
    pub confusion: PathBuf,
}

#[derive(Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<u32>,
    #[arg(long)]
    pub replications: Option<u32>,
}

/// Failure classes mapped to exit codes 1 and 2.
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

pub trait ResultExt<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Parse { files } => commands::parse(files),
        Command::Encode(args) => commands::encode_files(args),
        Command::Augment(args) => commands::augment(args, cli.seed),
        Command::Split(args) => commands::split(args),
        Command::Train(args) => commands::train(args, cli.seed),
        Command::Eval(args) => commands::eval(args),
        Command::GenToy(args) => commands::gen_toy(args, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("skelmap: usage error: {}", one_line(&e));
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("skelmap: {}", one_line(&e));
            ExitCode::from(2)
        }
    }
}
