use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cae_cli::run::{self, AnalyzeKind, DataSource, TrainFlags, VerifyKind};
use cae_cli::{CliError, CliResult, FORMAT_VERSION};
use cae_core::model::{Activation, LossKind};

fn nonneg_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be >= 0"))
    }
}

fn pos_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be > 0"))
    }
}

fn unit_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} must be in [0, 1]"))
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s {
        "cross-entropy" => Ok(LossKind::CrossEntropy),
        "squared-error" => Ok(LossKind::SquaredError),
        other => Err(format!("unknown loss '{other}' (cross-entropy | squared-error)")),
    }
}

fn parse_act(s: &str) -> Result<Activation, String> {
    match s {
        "sigmoid" => Ok(Activation::Sigmoid),
        "identity" => Ok(Activation::Identity),
        other => Err(format!("unknown activation '{other}' (sigmoid | identity)")),
    }
}

#[derive(Parser)]
#[command(
    name = "cae",
    about = "Contractive auto-encoders, comparison models, and contraction analysis",
    version,
    long_version = concat!(env!("CARGO_PKG_VERSION"), " (model format_version 1)"),
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// amat text dataset (last column is the label)
    #[arg(long)]
    data: Option<PathBuf>,
    /// IDX image file (use with --labels)
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl DataArgs {
    fn source(self) -> CliResult<DataSource> {
        DataSource::resolve(self.data, self.images, self.labels)
    }
}

#[derive(Args)]
struct ValArgs {
    /// Validation amat dataset
    #[arg(long)]
    val_data: Option<PathBuf>,
    /// Validation IDX image file (use with --val-labels)
    #[arg(long)]
    val_images: Option<PathBuf>,
    /// Validation IDX label file
    #[arg(long)]
    val_labels: Option<PathBuf>,
}

impl ValArgs {
    fn source(self) -> CliResult<Option<DataSource>> {
        if self.val_data.is_none() && self.val_images.is_none() && self.val_labels.is_none() {
            Ok(None)
        } else {
            DataSource::resolve(self.val_data, self.val_images, self.val_labels).map(Some)
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    /// Learning rate (relative to summed minibatch losses)
    #[arg(long, default_value_t = 0.05, value_parser = pos_f64)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Disable the per-epoch reshuffle
    #[arg(long)]
    no_shuffle: bool,
    /// Reconstruction loss: cross-entropy | squared-error
    #[arg(long, default_value = "cross-entropy", value_parser = parse_loss)]
    loss: LossKind,
    /// Encoder activation: sigmoid | identity
    #[arg(long, default_value = "sigmoid", value_parser = parse_act)]
    enc_act: Activation,
    /// Decoder activation: sigmoid | identity
    #[arg(long, default_value = "sigmoid", value_parser = parse_act)]
    dec_act: Activation,
}

impl TrainArgs {
    fn flags(&self) -> TrainFlags {
        TrainFlags {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            shuffle: !self.no_shuffle,
            loss: self.loss,
            enc_act: self.enc_act,
            dec_act: self.dec_act,
        }
    }
}

#[derive(Args)]
struct ObjectiveArgs {
    /// Objective: ae | ae-wd | cae | dae-g | dae-b | rbm
    #[arg(long)]
    objective: String,
    /// Penalty strength for ae-wd and cae
    #[arg(long, value_parser = nonneg_f64)]
    lambda: Option<f64>,
    /// Gaussian corruption stddev for dae-g
    #[arg(long, value_parser = nonneg_f64)]
    sigma: Option<f64>,
    /// Masking fraction for dae-b
    #[arg(long, value_parser = unit_f64)]
    nu: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets and loader fixtures
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Train one feature-extraction layer
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        val: ValArgs,
        /// Hidden units
        #[arg(long)]
        hidden: usize,
        #[command(flatten)]
        objective: ObjectiveArgs,
        /// Gibbs steps for the rbm objective
        #[arg(long, default_value_t = 1)]
        cd_k: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy layer-wise pretraining of a stack
    Stack {
        #[command(flatten)]
        data: DataArgs,
        /// Layer sizes, e.g. --dims 100,50
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Initialize an MLP from a pretrained model and fine-tune it
    Finetune {
        /// Pretrained model or stack JSON
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        val: ValArgs,
        /// Class count (default: inferred from the labels)
        #[arg(long)]
        classes: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a fine-tuned MLP's error rate on a dataset
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Contraction measurements, written as CSV
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Numerical verification suites (nonzero exit on failure)
    Verify {
        #[command(subcommand)]
        what: VerifyCommand,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Tall-vs-wide rectangle discrimination set, written as amat
    Rect {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        side: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hand-constructed two-image IDX pair for exercising the loader
    IdxFixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Image-patch preprocessing pipeline over a CIFAR binary batch
    Patches {
        /// CIFAR-10 binary batch file
        #[arg(long)]
        cifar: PathBuf,
        /// Convert to gray (0.3 R + 0.59 G + 0.11 B) before patching
        #[arg(long)]
        gray: bool,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
        #[arg(long, default_value_t = 160_000)]
        count: usize,
        #[arg(long, default_value_t = 10_000)]
        source_images: usize,
        #[arg(long, default_value_t = 2)]
        drop: usize,
        #[arg(long, default_value_t = 80)]
        keep: usize,
        #[arg(long, default_value_t = 1e-8, value_parser = pos_f64)]
        epsilon: f64,
        /// Divide by the eigenvalue instead of its square root
        #[arg(long)]
        literal_whitening: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Average Jacobian norm and saturation fraction
    Metrics {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Averaged singular-value spectrum of the Jacobian
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Contraction-ratio curve over sphere radii
    Contraction {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Explicit radii (comma-separated); default: 20 log-spaced radii
        /// spanning [0.01, 2] x the median pairwise distance
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        curve_seed: u64,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Finite-difference gradient gate over all objective variants
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        nets: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Taylor link between denoising and Hessian-penalized training, on the
    /// bundled toy model
    Taylor {
        #[arg(long, default_value_t = 0.01, value_parser = pos_f64)]
        sigma: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Loss for the check: squared-error | cross-entropy
        #[arg(long, default_value = "squared-error", value_parser = parse_loss)]
        loss: LossKind,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hessian-trace identity (corrected vs paper-literal form)
    HessianTrace {
        #[arg(long, default_value_t = 20)]
        nets: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen { what } => match what {
            GenCommand::Rect { n, side, seed, out } => run::gen_rect(n, side, seed, &out),
            GenCommand::IdxFixture { out } => run::gen_idx_fixture(&out),
            GenCommand::Patches {
                cifar,
                gray,
                patch_size,
                count,
                source_images,
                drop,
                keep,
                epsilon,
                literal_whitening,
                seed,
                out,
            } => run::gen_patches(
                &cifar,
                gray,
                patch_size,
                count,
                source_images,
                drop,
                keep,
                epsilon,
                literal_whitening,
                seed,
                &out,
            ),
        },
        Command::Pretrain { data, val, hidden, objective, cd_k, train, out } => {
            let source = data.source()?;
            let val = val.source()?;
            run::pretrain(
                &source,
                val.as_ref(),
                hidden,
                &objective.objective,
                objective.lambda,
                objective.sigma,
                objective.nu,
                cd_k,
                &train.flags(),
                &out,
            )
        }
        Command::Stack { data, dims, objective, train, out } => {
            let source = data.source()?;
            run::stack(
                &source,
                &dims,
                &objective.objective,
                objective.lambda,
                objective.sigma,
                objective.nu,
                &train.flags(),
                &out,
            )
        }
        Command::Finetune { model, data, val, classes, train, out } => {
            let source = data.source()?;
            let val = val.source()?;
            run::finetune_cmd(&model, &source, val.as_ref(), classes, &train.flags(), &out)
        }
        Command::Eval { model, data } => {
            let source = data.source()?;
            run::eval_cmd(&model, &source)
        }
        Command::Analyze { what } => match what {
            AnalyzeCommand::Metrics { model, data, out, threads } => {
                let source = data.source()?;
                run::analyze(&AnalyzeKind::Metrics, &model, &source, threads, &out)
            }
            AnalyzeCommand::Spectrum { model, data, out, threads } => {
                let source = data.source()?;
                run::analyze(&AnalyzeKind::Spectrum, &model, &source, threads, &out)
            }
            AnalyzeCommand::Contraction {
                model,
                data,
                out,
                threads,
                radii,
                points,
                directions,
                curve_seed,
            } => {
                let source = data.source()?;
                run::analyze(
                    &AnalyzeKind::Contraction { radii, points, directions, curve_seed },
                    &model,
                    &source,
                    threads,
                    &out,
                )
            }
        },
        Command::Verify { what } => match what {
            VerifyCommand::Gradcheck { nets, seed, out } => {
                run::verify_cmd(&VerifyKind::Gradcheck { nets }, seed, &out)
            }
            VerifyCommand::Taylor { sigma, samples, loss, seed, out } => run::verify_cmd(
                &VerifyKind::Taylor {
                    sigma,
                    samples,
                    squared_error: loss == LossKind::SquaredError,
                },
                seed,
                &out,
            ),
            VerifyCommand::HessianTrace { nets, seed, out } => {
                run::verify_cmd(&VerifyKind::HessianTrace { nets }, seed, &out)
            }
        },
    }
}

fn main() -> ExitCode {
    // Make the format version visible to --help readers as well.
    let _ = FORMAT_VERSION;
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
