//! Command implementations. Every file-writing command creates its output
//! directory, puts all artifacts inside it, and echoes its fully resolved
//! configuration to `run_config.json` there, so any run can be reproduced
//! from its own outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::json;

use cae_core::analysis::{self, ContractionConfig};
use cae_core::data::{self, Dataset, PatchPipelineConfig, WhitenMode};
use cae_core::model::{Activation, LossKind, ObjectiveSpec, ObjectiveVariant};
use cae_core::rng::{Rng, RNG_ALGORITHM};
use cae_core::trainer::{
    self, evaluate, finetune_tracked, pretrain_layer_tracked, pretrain_rbm, Mlp, RbmTrainConfig,
    Stack, StackLayer, TrainConfig,
};

use crate::formats::{self, LoadedModel};
use crate::io;
use crate::reports;
use crate::verify;
use crate::{CliError, CliResult, FORMAT_VERSION};

/// Seed-stream tags for the independent rngs a command needs.
const OUTPUT_INIT_STREAM: u64 = 0x4d4c50;
const PATCH_STREAM: u64 = 0x504154;

/// Where a dataset comes from on the command line: an amat file, or an IDX
/// image/label pair.
#[derive(Debug, Clone)]
pub enum DataSource {
    Amat(PathBuf),
    Idx { images: PathBuf, labels: PathBuf },
}

impl DataSource {
    pub fn resolve(
        amat: Option<PathBuf>,
        images: Option<PathBuf>,
        labels: Option<PathBuf>,
    ) -> CliResult<Self> {
        match (amat, images, labels) {
            (Some(a), None, None) => Ok(DataSource::Amat(a)),
            (None, Some(i), Some(l)) => Ok(DataSource::Idx { images: i, labels: l }),
            (None, Some(_), None) | (None, None, Some(_)) => {
                Err(CliError::usage("--images and --labels must be given together"))
            }
            (Some(_), _, _) => Err(CliError::usage("give either --data or --images/--labels, not both")),
            (None, None, None) => Err(CliError::usage("no dataset given (--data or --images/--labels)")),
        }
    }

    pub fn load(&self) -> CliResult<Dataset> {
        Ok(match self {
            DataSource::Amat(p) => io::load_amat(p)?,
            DataSource::Idx { images, labels } => io::load_idx(images, labels)?,
        })
    }

    fn describe(&self) -> serde_json::Value {
        match self {
            DataSource::Amat(p) => json!({ "amat": p.display().to_string() }),
            DataSource::Idx { images, labels } => json!({
                "images": images.display().to_string(),
                "labels": labels.display().to_string(),
            }),
        }
    }
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn echo_config(out: &Path, mut config: serde_json::Value) -> CliResult<()> {
    let obj = config.as_object_mut().expect("config echo is an object");
    obj.insert("format_version".into(), json!(FORMAT_VERSION));
    obj.insert("rng".into(), json!(RNG_ALGORITHM));
    formats::save_json(&out.join("run_config.json"), &config)?;
    Ok(())
}

pub fn gen_rect(n: usize, side: usize, seed: u64, out: &Path) -> CliResult<()> {
    if side < 8 {
        return Err(CliError::usage(format!("--side must be >= 8, got {side}")));
    }
    if n == 0 {
        return Err(CliError::usage("--n must be >= 1"));
    }
    prepare_out(out)?;
    let dataset = data::gen_rect(n, side, seed)?;
    io::save_amat(&out.join("rect.amat"), &dataset)?;
    echo_config(out, json!({ "command": "gen rect", "n": n, "side": side, "seed": seed }))?;
    println!("wrote {} examples to {}", dataset.n(), out.join("rect.amat").display());
    Ok(())
}

pub fn gen_idx_fixture(out: &Path) -> CliResult<()> {
    prepare_out(out)?;
    let (images, labels) = data::idx_fixture_bytes();
    fs::write(out.join("fixture-images-idx3-ubyte"), images)?;
    fs::write(out.join("fixture-labels-idx1-ubyte"), labels)?;
    echo_config(out, json!({ "command": "gen idx-fixture" }))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn gen_patches(
    cifar: &Path,
    grayscale: bool,
    patch_size: usize,
    count: usize,
    source_images: usize,
    drop: usize,
    keep: usize,
    epsilon: f64,
    literal_whitening: bool,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    prepare_out(out)?;
    let (images, _labels) = io::load_cifar(cifar)?;
    let images = if grayscale { data::to_grayscale(&images)? } else { images };
    let cfg = PatchPipelineConfig {
        patch_size,
        patch_count: count,
        source_images,
        drop_components: drop,
        keep_components: keep,
        epsilon,
        whiten: if literal_whitening { WhitenMode::Eigenvalue } else { WhitenMode::SqrtEigenvalue },
    };
    let mut rng = Rng::substream(seed, &[PATCH_STREAM]);
    let (patches, transform) = data::cifar_patch_pipeline(&images, &cfg, &mut rng)?;
    io::save_amat(&out.join("patches.amat"), &patches)?;
    formats::save_json(&out.join("transform.json"), &formats::transform_to_json(&transform))?;
    echo_config(
        out,
        json!({
            "command": "gen patches",
            "cifar": cifar.display().to_string(),
            "grayscale": grayscale,
            "patch_size": patch_size,
            "count": count,
            "source_images": source_images,
            "drop_components": drop,
            "keep_components": keep,
            "epsilon": epsilon,
            "whiten": if literal_whitening { "eigenvalue" } else { "sqrt_eigenvalue" },
            "seed": seed,
        }),
    )?;
    println!("wrote {} patches of dimension {}", patches.n(), patches.dim());
    Ok(())
}

/// Objective resolved from `--objective` plus its hyper-parameter flag.
pub fn resolve_objective(
    name: &str,
    lambda: Option<f64>,
    sigma: Option<f64>,
    nu: Option<f64>,
    loss: LossKind,
) -> CliResult<ObjectiveSpec> {
    let need = |flag: &str, v: Option<f64>| {
        v.ok_or_else(|| CliError::usage(format!("--objective {name} requires {flag}")))
    };
    let variant = match name {
        "ae" => ObjectiveVariant::Ae,
        "ae-wd" => ObjectiveVariant::AeWeightDecay { lambda: need("--lambda", lambda)? },
        "cae" => ObjectiveVariant::Cae { lambda: need("--lambda", lambda)? },
        "dae-g" => ObjectiveVariant::DaeGaussian { sigma: need("--sigma", sigma)? },
        "dae-b" => ObjectiveVariant::DaeMasking { nu: need("--nu", nu)? },
        other => return Err(CliError::usage(format!("unknown objective '{other}'"))),
    };
    Ok(ObjectiveSpec { variant, loss })
}

pub struct TrainFlags {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub loss: LossKind,
    pub enc_act: Activation,
    pub dec_act: Activation,
}

impl TrainFlags {
    fn to_config(&self, objective: ObjectiveSpec) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            objective,
            shuffle: self.shuffle,
            enc_act: self.enc_act,
            dec_act: self.dec_act,
        }
    }

    fn describe(&self, objective: Option<&ObjectiveSpec>) -> serde_json::Value {
        json!({
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "loss": match self.loss {
                LossKind::SquaredError => "squared-error",
                LossKind::CrossEntropy => "cross-entropy",
            },
            "enc_act": act_name(self.enc_act),
            "dec_act": act_name(self.dec_act),
            "objective": objective.map(describe_objective),
        })
    }
}

fn act_name(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

fn describe_objective(spec: &ObjectiveSpec) -> serde_json::Value {
    match spec.variant {
        ObjectiveVariant::Ae => json!({ "variant": "ae" }),
        ObjectiveVariant::AeWeightDecay { lambda } => json!({ "variant": "ae-wd", "lambda": lambda }),
        ObjectiveVariant::Cae { lambda } => json!({ "variant": "cae", "lambda": lambda }),
        ObjectiveVariant::DaeGaussian { sigma } => json!({ "variant": "dae-g", "sigma": sigma }),
        ObjectiveVariant::DaeMasking { nu } => json!({ "variant": "dae-b", "nu": nu }),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn pretrain(
    source: &DataSource,
    validation: Option<&DataSource>,
    hidden: usize,
    objective_name: &str,
    lambda: Option<f64>,
    sigma: Option<f64>,
    nu: Option<f64>,
    cd_k: usize,
    flags: &TrainFlags,
    out: &Path,
) -> CliResult<()> {
    if hidden == 0 {
        return Err(CliError::usage("--hidden must be >= 1"));
    }
    if flags.epochs == 0 {
        return Err(CliError::usage("--epochs must be >= 1"));
    }
    // Resolve usage errors before touching the filesystem.
    let objective = if objective_name == "rbm" {
        None
    } else {
        Some(resolve_objective(objective_name, lambda, sigma, nu, flags.loss)?)
    };
    prepare_out(out)?;
    let train = source.load()?;
    let val = validation.map(|v| v.load()).transpose()?;

    if objective_name == "rbm" {
        let cfg = RbmTrainConfig {
            epochs: flags.epochs,
            batch_size: flags.batch_size,
            learning_rate: flags.learning_rate,
            seed: flags.seed,
            shuffle: flags.shuffle,
            cd_steps: cd_k,
        };
        let outcome = pretrain_rbm(&train, hidden, &cfg)?;
        formats::save_model(&out.join("model.json"), &LoadedModel::Rbm(outcome.model))?;
        reports::write_train_log(&out.join("train_log.csv"), &outcome.epoch_free_energy, None)?;
        echo_config(
            out,
            json!({
                "command": "pretrain",
                "data": source.describe(),
                "hidden": hidden,
                "objective": { "variant": "rbm", "cd_k": cd_k },
                "train": flags.describe(None),
                "log_metric": "mean_free_energy",
            }),
        )?;
        return Ok(());
    }

    let objective = objective.expect("resolved above for non-rbm objectives");
    let cfg = flags.to_config(objective);
    let outcome = pretrain_layer_tracked(&train, val.as_ref(), hidden, &cfg)?;
    formats::save_model(&out.join("model.json"), &LoadedModel::Ae(outcome.model))?;
    reports::write_train_log(
        &out.join("train_log.csv"),
        &outcome.epoch_objective,
        outcome.epoch_validation.as_deref(),
    )?;
    echo_config(
        out,
        json!({
            "command": "pretrain",
            "data": source.describe(),
            "validation": validation.map(|v| v.describe()),
            "hidden": hidden,
            "train": flags.describe(Some(&objective)),
        }),
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn stack(
    source: &DataSource,
    dims: &[usize],
    objective_name: &str,
    lambda: Option<f64>,
    sigma: Option<f64>,
    nu: Option<f64>,
    flags: &TrainFlags,
    out: &Path,
) -> CliResult<()> {
    if dims.is_empty() {
        return Err(CliError::usage("--dims needs at least one layer size"));
    }
    if objective_name == "rbm" {
        return Err(CliError::usage("stacking is implemented for the auto-encoder objectives"));
    }
    if flags.epochs == 0 {
        return Err(CliError::usage("--epochs must be >= 1"));
    }
    let objective = resolve_objective(objective_name, lambda, sigma, nu, flags.loss)?;
    prepare_out(out)?;
    let train = source.load()?;

    // Layer k trains with seed + k so the per-layer streams are distinct but
    // fully determined by the run seed.
    let cfgs: Vec<TrainConfig> = (0..dims.len())
        .map(|k| {
            let mut c = flags.to_config(objective);
            c.seed = flags.seed.wrapping_add(k as u64);
            c
        })
        .collect();
    let outcome = trainer::stack_pretrain(&train, dims, &cfgs)?;
    formats::save_model(&out.join("stack.json"), &LoadedModel::Stack(outcome.stack))?;
    for (k, log) in outcome.layer_logs.iter().enumerate() {
        reports::write_train_log(&out.join(format!("layer{}_log.csv", k + 1)), log, None)?;
    }
    echo_config(
        out,
        json!({
            "command": "stack",
            "data": source.describe(),
            "dims": dims,
            "layer_seeds": (0..dims.len()).map(|k| flags.seed.wrapping_add(k as u64)).collect::<Vec<_>>(),
            "train": flags.describe(Some(&objective)),
        }),
    )?;
    Ok(())
}

fn model_as_stack(model: LoadedModel) -> CliResult<Stack> {
    Ok(match model {
        LoadedModel::Ae(ae) => Stack::single(StackLayer::Ae(ae)),
        LoadedModel::Rbm(r) => Stack::single(StackLayer::Rbm(r)),
        LoadedModel::Stack(s) => s,
        LoadedModel::Mlp(_) => {
            return Err(CliError::usage("the model is already an MLP; use eval on it"))
        }
    })
}

#[allow(clippy::too_many_arguments)]
pub fn finetune_cmd(
    model_path: &Path,
    source: &DataSource,
    validation: Option<&DataSource>,
    classes: Option<usize>,
    flags: &TrainFlags,
    out: &Path,
) -> CliResult<()> {
    prepare_out(out)?;
    let stack = model_as_stack(formats::load_model(model_path)?)?;
    let train = source.load()?;
    let val = validation.map(|v| v.load()).transpose()?;
    let classes = match classes.or_else(|| train.num_classes()) {
        Some(c) if c >= 2 => c,
        Some(c) => return Err(CliError::usage(format!("need >= 2 classes, labels span {c}"))),
        None => return Err(CliError::usage("dataset has no labels; pass --classes or labeled data")),
    };
    let mut init_rng = Rng::substream(flags.seed, &[OUTPUT_INIT_STREAM]);
    let mlp = Mlp::from_stack(&stack, classes, &mut init_rng)?;
    let cfg = flags.to_config(ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: flags.loss });
    let outcome = finetune_tracked(&mlp, &train, val.as_ref(), &cfg)?;
    formats::save_model(&out.join("mlp.json"), &LoadedModel::Mlp(outcome.model))?;
    reports::write_train_log(
        &out.join("finetune_log.csv"),
        &outcome.epoch_nll,
        outcome.epoch_validation.as_deref(),
    )?;
    echo_config(
        out,
        json!({
            "command": "finetune",
            "model": model_path.display().to_string(),
            "data": source.describe(),
            "validation": validation.map(|v| v.describe()),
            "classes": classes,
            "train": flags.describe(None),
        }),
    )?;
    Ok(())
}

pub fn eval_cmd(model_path: &Path, source: &DataSource) -> CliResult<()> {
    let model = formats::load_model(model_path)?;
    let mlp = match model {
        LoadedModel::Mlp(m) => m,
        other => {
            return Err(CliError::usage(format!(
                "eval needs an MLP model, got kind '{}'",
                other.kind()
            )))
        }
    };
    let dataset = source.load()?;
    let err = evaluate(&mlp, &dataset)?;
    println!("{err}");
    Ok(())
}

pub enum AnalyzeKind {
    Metrics,
    Spectrum,
    Contraction { radii: Option<Vec<f64>>, points: usize, directions: usize, curve_seed: u64 },
}

pub fn analyze(
    kind: &AnalyzeKind,
    model_path: &Path,
    source: &DataSource,
    threads: usize,
    out: &Path,
) -> CliResult<()> {
    prepare_out(out)?;
    let model = formats::load_model(model_path)?;
    let map = model.feature_map()?;
    let dataset = source.load()?;
    match kind {
        AnalyzeKind::Metrics => {
            let avg = analysis::average_jacobian_norm(map, &dataset)?;
            let sat = analysis::saturation_fraction(map, &dataset)?;
            reports::write_metrics(&out.join("metrics.csv"), avg, sat)?;
            echo_config(
                out,
                json!({
                    "command": "analyze metrics",
                    "model": model_path.display().to_string(),
                    "data": source.describe(),
                }),
            )?;
        }
        AnalyzeKind::Spectrum => {
            let report = crate::parallel::jacobian_spectrum_threaded(map, &dataset, threads)?;
            reports::write_spectrum(&out.join("spectrum.csv"), &report)?;
            echo_config(
                out,
                json!({
                    "command": "analyze spectrum",
                    "model": model_path.display().to_string(),
                    "data": source.describe(),
                    "threads": threads,
                }),
            )?;
        }
        AnalyzeKind::Contraction { radii, points, directions, curve_seed } => {
            let cfg = match radii {
                Some(r) => ContractionConfig {
                    radii: r.clone(),
                    points_per_radius: *points,
                    directions_per_point: *directions,
                    seed: *curve_seed,
                },
                None => {
                    let mut cfg = ContractionConfig::defaults_for(&dataset, *curve_seed)?;
                    cfg.points_per_radius = *points;
                    cfg.directions_per_point = *directions;
                    cfg
                }
            };
            cfg.validate()?;
            let report = crate::parallel::contraction_curve_threaded(map, &dataset, &cfg, threads)?;
            reports::write_contraction(&out.join("contraction.csv"), &report)?;
            echo_config(
                out,
                json!({
                    "command": "analyze contraction",
                    "model": model_path.display().to_string(),
                    "data": source.describe(),
                    "threads": threads,
                    "radii": cfg.radii,
                    "points_per_radius": cfg.points_per_radius,
                    "directions_per_point": cfg.directions_per_point,
                    "curve_seed": cfg.seed,
                }),
            )?;
        }
    }
    Ok(())
}

pub enum VerifyKind {
    Gradcheck { nets: usize },
    Taylor { sigma: f64, samples: usize, squared_error: bool },
    HessianTrace { nets: usize },
}

pub fn verify_cmd(kind: &VerifyKind, seed: u64, out: &Path) -> CliResult<()> {
    prepare_out(out)?;
    match kind {
        VerifyKind::Gradcheck { nets } => {
            let mut rows = verify::gradient_gate(seed, *nets)?;
            rows.extend(verify::jacobian_gate(seed.wrapping_add(1), *nets)?);
            rows.extend(verify::weight_decay_equivalence(seed.wrapping_add(2), 100)?);
            verify::write_gate_csv(&out.join("gradcheck.csv"), &rows)?;
            echo_config(
                out,
                json!({ "command": "verify gradcheck", "nets": nets, "seed": seed }),
            )?;
            report_gate("gradcheck", &rows)?;
        }
        VerifyKind::Taylor { sigma, samples, squared_error } => {
            if !(*sigma > 0.0) {
                return Err(CliError::usage("--sigma must be > 0"));
            }
            let loss = if *squared_error { LossKind::SquaredError } else { LossKind::CrossEntropy };
            let (ae, data) = verify::toy_sigmoid_ae(seed);
            let (report, row) =
                verify::taylor_check(&ae, &data, loss, *sigma, *samples, seed.wrapping_add(1))?;
            reports::write_taylor(&out.join("taylor_report.csv"), &report)?;
            echo_config(
                out,
                json!({
                    "command": "verify taylor",
                    "sigma": sigma,
                    "samples": samples,
                    "loss": if *squared_error { "squared-error" } else { "cross-entropy" },
                    "seed": seed,
                }),
            )?;
            println!(
                "taylor: gap {} vs prediction {} (stderr {})",
                report.gap, report.trace_term, report.noisy_stderr
            );
            report_gate("taylor", &[row])?;
        }
        VerifyKind::HessianTrace { nets } => {
            let rows = verify::hessian_gate(seed, *nets)?;
            verify::write_gate_csv(&out.join("hessian_trace.csv"), &rows)?;
            echo_config(
                out,
                json!({ "command": "verify hessian-trace", "nets": nets, "seed": seed }),
            )?;
            report_gate("hessian-trace", &rows)?;
        }
    }
    Ok(())
}

fn report_gate(name: &str, rows: &[verify::GateRow]) -> CliResult<()> {
    let failed: Vec<&verify::GateRow> = rows.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        println!("{name}: {} checks passed", rows.len());
        Ok(())
    } else {
        for row in &failed {
            eprintln!("FAIL {} (metric {} > threshold {})", row.case, row.metric, row.threshold);
        }
        Err(CliError::Runtime(anyhow::anyhow!(
            "{name}: {} of {} checks failed",
            failed.len(),
            rows.len()
        )))
    }
}
