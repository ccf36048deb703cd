//! JSON serialization of models and fitted transforms.
//!
//! One tagged document format covers all model kinds; floats go through
//! serde_json's shortest-round-trip encoder, so write/read is value-exact for
//! every finite `f64`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cae_core::data::{PatchTransform, WhitenMode};
use cae_core::matrix::Matrix;
use cae_core::model::{Activation, FeatureMap, TiedAutoEncoder};
use cae_core::rbm::Rbm;
use cae_core::trainer::{DenseLayer, Mlp, OutputKind, Stack, StackLayer};

use crate::FORMAT_VERSION;

fn act_name(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "sigmoid" => Ok(Activation::Sigmoid),
        "identity" => Ok(Activation::Identity),
        other => bail!("unknown activation '{other}'"),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DenseLayerJson {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelJson {
    TiedAe {
        format_version: u32,
        d_x: usize,
        d_h: usize,
        enc_act: String,
        dec_act: String,
        #[serde(rename = "W")]
        w: Vec<f64>,
        b_h: Vec<f64>,
        b_y: Vec<f64>,
    },
    Rbm {
        format_version: u32,
        d_x: usize,
        d_h: usize,
        #[serde(rename = "W")]
        w: Vec<f64>,
        b_v: Vec<f64>,
        b_h: Vec<f64>,
    },
    Stack {
        format_version: u32,
        layers: Vec<ModelJson>,
    },
    Mlp {
        format_version: u32,
        hidden: Vec<DenseLayerJson>,
        output: DenseLayerJson,
        output_kind: String,
    },
}

/// Any model the CLI can load.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Ae(TiedAutoEncoder),
    Rbm(Rbm),
    Stack(Stack),
    Mlp(Mlp),
}

impl LoadedModel {
    /// The encoder-like view used by the analysis commands; MLPs have none.
    pub fn feature_map(&self) -> Result<&(dyn FeatureMap + Sync)> {
        match self {
            LoadedModel::Ae(ae) => Ok(ae),
            LoadedModel::Rbm(r) => Ok(r),
            LoadedModel::Stack(s) => Ok(s),
            LoadedModel::Mlp(_) => bail!("an MLP is not a feature map; analyze its source stack"),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Ae(_) => "tied_ae",
            LoadedModel::Rbm(_) => "rbm",
            LoadedModel::Stack(_) => "stack",
            LoadedModel::Mlp(_) => "mlp",
        }
    }
}

pub fn ae_to_json(ae: &TiedAutoEncoder) -> ModelJson {
    ModelJson::TiedAe {
        format_version: FORMAT_VERSION,
        d_x: ae.d_x(),
        d_h: ae.d_h(),
        enc_act: act_name(ae.enc_act()).to_string(),
        dec_act: act_name(ae.dec_act()).to_string(),
        w: ae.w().data().to_vec(),
        b_h: ae.b_h().to_vec(),
        b_y: ae.b_y().to_vec(),
    }
}

pub fn rbm_to_json(rbm: &Rbm) -> ModelJson {
    ModelJson::Rbm {
        format_version: FORMAT_VERSION,
        d_x: rbm.d_x(),
        d_h: rbm.d_h(),
        w: rbm.w().data().to_vec(),
        b_v: rbm.b_v().to_vec(),
        b_h: rbm.b_h().to_vec(),
    }
}

pub fn stack_to_json(stack: &Stack) -> ModelJson {
    ModelJson::Stack {
        format_version: FORMAT_VERSION,
        layers: stack
            .layers()
            .iter()
            .map(|l| match l {
                StackLayer::Ae(ae) => ae_to_json(ae),
                StackLayer::Rbm(r) => rbm_to_json(r),
            })
            .collect(),
    }
}

fn dense_to_json(l: &DenseLayer) -> DenseLayerJson {
    DenseLayerJson { rows: l.w.rows(), cols: l.w.cols(), w: l.w.data().to_vec(), b: l.b.clone() }
}

pub fn mlp_to_json(mlp: &Mlp) -> ModelJson {
    ModelJson::Mlp {
        format_version: FORMAT_VERSION,
        hidden: mlp.hidden_layers().iter().map(dense_to_json).collect(),
        output: dense_to_json(mlp.output_layer()),
        output_kind: match mlp.output_kind() {
            OutputKind::Sigmoid => "sigmoid".to_string(),
            OutputKind::Softmax => "softmax".to_string(),
        },
    }
}

pub fn model_to_json(model: &LoadedModel) -> ModelJson {
    match model {
        LoadedModel::Ae(ae) => ae_to_json(ae),
        LoadedModel::Rbm(r) => rbm_to_json(r),
        LoadedModel::Stack(s) => stack_to_json(s),
        LoadedModel::Mlp(m) => mlp_to_json(m),
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        bail!("unsupported format_version {v} (this build reads {FORMAT_VERSION})");
    }
    Ok(())
}

fn dense_from_json(j: &DenseLayerJson) -> Result<DenseLayer> {
    Ok(DenseLayer { w: Matrix::from_vec(j.rows, j.cols, j.w.clone())?, b: j.b.clone() })
}

pub fn model_from_json(json: &ModelJson) -> Result<LoadedModel> {
    match json {
        ModelJson::TiedAe { format_version, d_x, d_h, enc_act, dec_act, w, b_h, b_y } => {
            check_version(*format_version)?;
            let ae = TiedAutoEncoder::new(
                Matrix::from_vec(*d_h, *d_x, w.clone())?,
                b_h.clone(),
                b_y.clone(),
                parse_activation(enc_act)?,
                parse_activation(dec_act)?,
            )?;
            Ok(LoadedModel::Ae(ae))
        }
        ModelJson::Rbm { format_version, d_x, d_h, w, b_v, b_h } => {
            check_version(*format_version)?;
            let rbm = Rbm::new(Matrix::from_vec(*d_h, *d_x, w.clone())?, b_v.clone(), b_h.clone())?;
            Ok(LoadedModel::Rbm(rbm))
        }
        ModelJson::Stack { format_version, layers } => {
            check_version(*format_version)?;
            let mut out = Vec::with_capacity(layers.len());
            for layer in layers {
                match model_from_json(layer)? {
                    LoadedModel::Ae(ae) => out.push(StackLayer::Ae(ae)),
                    LoadedModel::Rbm(r) => out.push(StackLayer::Rbm(r)),
                    _ => bail!("stack layers must be tied_ae or rbm models"),
                }
            }
            Ok(LoadedModel::Stack(Stack::from_layers(out)?))
        }
        ModelJson::Mlp { format_version, hidden, output, output_kind } => {
            check_version(*format_version)?;
            let hidden: Result<Vec<DenseLayer>> = hidden.iter().map(dense_from_json).collect();
            let kind = match output_kind.as_str() {
                "sigmoid" => OutputKind::Sigmoid,
                "softmax" => OutputKind::Softmax,
                other => bail!("unknown output kind '{other}'"),
            };
            Ok(LoadedModel::Mlp(Mlp::from_parts(hidden?, dense_from_json(output)?, kind)?))
        }
    }
}

pub fn save_model(path: &Path, model: &LoadedModel) -> Result<()> {
    save_json(path, &model_to_json(model))
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json: ModelJson =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    model_from_json(&json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PatchTransformJson {
    pub format_version: u32,
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    pub components: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
    pub whiten: String,
}

pub fn transform_to_json(t: &PatchTransform) -> PatchTransformJson {
    PatchTransformJson {
        format_version: FORMAT_VERSION,
        input_dim: t.components.cols(),
        output_dim: t.components.rows(),
        mean: t.mean.clone(),
        components: t.components.data().to_vec(),
        eigenvalues: t.eigenvalues.clone(),
        epsilon: t.epsilon,
        whiten: match t.whiten {
            WhitenMode::SqrtEigenvalue => "sqrt_eigenvalue".to_string(),
            WhitenMode::Eigenvalue => "eigenvalue".to_string(),
        },
    }
}

pub fn transform_from_json(j: &PatchTransformJson) -> Result<PatchTransform> {
    check_version(j.format_version)?;
    let whiten = match j.whiten.as_str() {
        "sqrt_eigenvalue" => WhitenMode::SqrtEigenvalue,
        "eigenvalue" => WhitenMode::Eigenvalue,
        other => bail!("unknown whitening mode '{other}'"),
    };
    Ok(PatchTransform {
        mean: j.mean.clone(),
        components: Matrix::from_vec(j.output_dim, j.input_dim, j.components.clone())?,
        eigenvalues: j.eigenvalues.clone(),
        epsilon: j.epsilon,
        whiten,
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
