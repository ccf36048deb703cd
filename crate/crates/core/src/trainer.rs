//! Minibatch SGD pretraining, greedy layer-wise stacking, and supervised
//! fine-tuning of the resulting multilayer perceptron.
//!
//! Training is deliberately plain: one rng stream per run (init draws, then
//! per-epoch shuffles, then per-batch corruption draws, in that order), per
//! batch the update `θ ← θ - lr * grad` with summed per-example losses, no
//! momentum, no schedules. Every run is a pure function of (data, config,
//! seed); per-epoch logging uses a derived substream so it cannot perturb the
//! training stream.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{encode_dataset, Dataset};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::model::{
    objective_gradient, objective_value, sigmoid, Activation, FeatureMap, LossKind, ObjectiveSpec,
    TiedAutoEncoder,
};
use crate::rbm::Rbm;
use crate::rng::Rng;

/// Stream id for per-epoch logging rngs, kept disjoint from training draws.
const LOG_STREAM: u64 = 0x4c4f47;
/// Stream id for per-epoch validation rngs.
const VAL_STREAM: u64 = 0x56414c;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub objective: ObjectiveSpec,
    pub shuffle: bool,
    pub enc_act: Activation,
    pub dec_act: Activation,
}

impl TrainConfig {
    /// Desk-scale defaults: 50 epochs, batches of 10, learning rate 0.05
    /// (relative to summed minibatch losses), shuffling on, sigmoid encoder
    /// and decoder.
    pub fn defaults(objective: ObjectiveSpec, seed: u64) -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 10,
            learning_rate: 0.05,
            seed,
            objective,
            shuffle: true,
            enc_act: Activation::Sigmoid,
            dec_act: Activation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        self.objective.validate()
    }
}

fn gather_batch(data: &Dataset, indices: &[usize]) -> Matrix {
    Matrix::from_fn(indices.len(), data.dim(), |r, c| data.features().get(indices[r], c))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: TiedAutoEncoder,
    /// Training-set objective after each epoch.
    pub epoch_objective: Vec<f64>,
    /// Validation-set objective after each epoch, when a validation set was
    /// supplied.
    pub epoch_validation: Option<Vec<f64>>,
}

/// Trains one tied auto-encoder layer by minibatch SGD on `cfg.objective`.
pub fn pretrain_layer(data: &Dataset, d_h: usize, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    pretrain_layer_tracked(data, None, d_h, cfg)
}

/// [`pretrain_layer`] with an optional validation set whose objective is
/// logged per epoch (from its own rng substream, so tracking never perturbs
/// training).
pub fn pretrain_layer_tracked(
    data: &Dataset,
    validation: Option<&Dataset>,
    d_h: usize,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("pretrain: epochs must be >= 1".into()));
    }
    if d_h == 0 {
        return Err(Error::InvalidArgument("pretrain: d_h must be >= 1".into()));
    }
    if cfg.objective.loss == LossKind::CrossEntropy && !data.in_unit_range() {
        return Err(Error::InvalidArgument(
            "cross-entropy pretraining needs features in [0, 1]".into(),
        ));
    }

    let mut rng = Rng::from_seed(cfg.seed);
    let mut ae = TiedAutoEncoder::random(data.dim(), d_h, cfg.enc_act, cfg.dec_act, &mut rng);
    let full = gather_batch(data, &(0..data.n()).collect::<Vec<_>>());
    let val_full = validation.map(|v| gather_batch(v, &(0..v.n()).collect::<Vec<_>>()));
    let mut epoch_objective = Vec::with_capacity(cfg.epochs);
    let mut epoch_validation = validation.map(|_| Vec::with_capacity(cfg.epochs));
    let mut order: Vec<usize> = (0..data.n()).collect();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = gather_batch(data, chunk);
            let grad = objective_gradient(&ae, &batch, &cfg.objective, &mut rng)?;
            ae.apply_gradient(&grad, cfg.learning_rate)?;
            if !ae.all_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: "parameters diverged to a non-finite value".into(),
                });
            }
        }
        let mut log_rng = Rng::substream(cfg.seed, &[LOG_STREAM, epoch as u64]);
        epoch_objective.push(objective_value(&ae, &full, &cfg.objective, &mut log_rng)?);
        if let (Some(vals), Some(vf)) = (&mut epoch_validation, &val_full) {
            let mut val_rng = Rng::substream(cfg.seed, &[VAL_STREAM, epoch as u64]);
            vals.push(objective_value(&ae, vf, &cfg.objective, &mut val_rng)?);
        }
    }
    Ok(PretrainOutcome { model: ae, epoch_objective, epoch_validation })
}

/// One feature-extraction layer of a stack.
#[derive(Debug, Clone, PartialEq)]
pub enum StackLayer {
    Ae(TiedAutoEncoder),
    Rbm(Rbm),
}

impl StackLayer {
    pub fn input_dim(&self) -> usize {
        match self {
            StackLayer::Ae(ae) => ae.d_x(),
            StackLayer::Rbm(r) => r.d_x(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            StackLayer::Ae(ae) => ae.d_h(),
            StackLayer::Rbm(r) => r.d_h(),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            StackLayer::Ae(ae) => ae.encode(x),
            StackLayer::Rbm(r) => r.hidden_activation(x),
        }
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        match self {
            StackLayer::Ae(ae) => ae.encoder_jacobian(x),
            StackLayer::Rbm(r) => FeatureMap::jacobian(r, x),
        }
    }

    /// Weights and hidden bias reused when a stack initializes an MLP.
    fn feature_params(&self) -> (&Matrix, &[f64]) {
        match self {
            StackLayer::Ae(ae) => (ae.w(), ae.b_h()),
            StackLayer::Rbm(r) => (r.w(), r.b_h()),
        }
    }
}

/// Ordered feature-extraction layers with consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    layers: Vec<StackLayer>,
}

impl Stack {
    pub fn from_layers(layers: Vec<StackLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("stack: needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "stack: layer output {} feeds layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Stack { layers })
    }

    pub fn single(layer: StackLayer) -> Self {
        Stack { layers: vec![layer] }
    }

    pub fn layers(&self) -> &[StackLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Stack truncated to its first `depth` layers.
    pub fn prefix(&self, depth: usize) -> Result<Stack> {
        if depth == 0 || depth > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "stack prefix depth {depth} out of 1..={}",
                self.layers.len()
            )));
        }
        Ok(Stack { layers: self.layers[..depth].to_vec() })
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.encode(&cur)?;
        }
        Ok(cur)
    }
}

impl FeatureMap for Stack {
    fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encode(x)
    }

    /// Chain rule through the layers: `J = J_L ... J_1`.
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let mut cur = x.to_vec();
        let mut j = self.layers[0].jacobian(&cur)?;
        cur = self.layers[0].encode(&cur)?;
        for layer in &self.layers[1..] {
            j = layer.jacobian(&cur)?.matmul(&j)?;
            cur = layer.encode(&cur)?;
        }
        Ok(j)
    }
}

#[derive(Debug, Clone)]
pub struct StackOutcome {
    pub stack: Stack,
    pub layer_logs: Vec<Vec<f64>>,
}

/// Greedy layer-wise pretraining: layer k trains on the dataset encoded
/// through layers 1..k-1. `cfgs` supplies one config per layer.
pub fn stack_pretrain(data: &Dataset, dims: &[usize], cfgs: &[TrainConfig]) -> Result<StackOutcome> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("stack_pretrain: dims must be nonempty".into()));
    }
    if dims.len() != cfgs.len() {
        return Err(Error::InvalidArgument(format!(
            "stack_pretrain: {} dims but {} configs",
            dims.len(),
            cfgs.len()
        )));
    }
    let mut current = data.clone();
    let mut layers = Vec::with_capacity(dims.len());
    let mut layer_logs = Vec::with_capacity(dims.len());
    for (&d_h, cfg) in dims.iter().zip(cfgs) {
        let outcome = pretrain_layer(&current, d_h, cfg)?;
        current = encode_dataset(&outcome.model, &current)?;
        layers.push(StackLayer::Ae(outcome.model));
        layer_logs.push(outcome.epoch_objective);
    }
    Ok(StackOutcome { stack: Stack { layers }, layer_logs })
}

#[derive(Debug, Clone)]
pub struct RbmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub cd_steps: usize,
}

impl RbmTrainConfig {
    /// Defaults: CD-1, 50 epochs, batches of 10, learning rate 0.05. The
    /// source material fixes none of these; they are all exposed here.
    pub fn defaults(seed: u64) -> Self {
        RbmTrainConfig {
            epochs: 50,
            batch_size: 10,
            learning_rate: 0.05,
            seed,
            shuffle: true,
            cd_steps: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RbmPretrainOutcome {
    pub model: Rbm,
    /// Mean training-set free energy after each epoch (monitoring quantity).
    pub epoch_free_energy: Vec<f64>,
}

/// Trains a binary RBM with CD-k, same batching and determinism contract as
/// [`pretrain_layer`].
pub fn pretrain_rbm(data: &Dataset, d_h: usize, cfg: &RbmTrainConfig) -> Result<RbmPretrainOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.cd_steps == 0 {
        return Err(Error::InvalidArgument(
            "rbm pretrain: epochs, batch_size and cd_steps must be >= 1".into(),
        ));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("rbm pretrain: learning_rate must be > 0".into()));
    }
    if d_h == 0 {
        return Err(Error::InvalidArgument("rbm pretrain: d_h must be >= 1".into()));
    }
    if !data.in_unit_range() {
        return Err(Error::InvalidArgument("rbm training needs features in [0, 1]".into()));
    }

    let mut rng = Rng::from_seed(cfg.seed);
    let mut rbm = Rbm::random(data.dim(), d_h, &mut rng);
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut epoch_free_energy = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = crate::model::ParamGrad::zeros(d_h, data.dim());
            for &i in chunk {
                let g = rbm.cd_gradient(data.row(i), cfg.cd_steps, &mut rng)?;
                grad.dw.add_scaled(&g.dw, 1.0)?;
                for (a, b) in grad.db_h.iter_mut().zip(&g.db_h) {
                    *a += b;
                }
                for (a, b) in grad.db_y.iter_mut().zip(&g.db_y) {
                    *a += b;
                }
            }
            rbm.apply_gradient(&grad, cfg.learning_rate)?;
            if !rbm.all_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: "rbm parameters diverged".into(),
                });
            }
        }
        let mut fe = 0.0;
        for i in 0..data.n() {
            fe += rbm.free_energy(data.row(i))?;
        }
        epoch_free_energy.push(fe / data.n() as f64);
    }
    Ok(RbmPretrainOutcome { model: rbm, epoch_free_energy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// One sigmoid unit, binary cross-entropy (two classes).
    Sigmoid,
    /// Softmax over `n_classes` units, negative log-likelihood.
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn random(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim.max(1) as f64);
        DenseLayer {
            w: Matrix::from_fn(out_dim, in_dim, |_, _| rng.uniform_in(-bound, bound)),
            b: vec![0.0; out_dim],
        }
    }
}

/// Multilayer perceptron: sigmoid hidden layers (initialized from a
/// pretrained stack, value-identical) plus a randomly initialized output
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
    kind: OutputKind,
}

impl Mlp {
    pub fn from_parts(hidden: Vec<DenseLayer>, output: DenseLayer, kind: OutputKind) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for layer in &hidden {
            if let Some(p) = prev {
                if layer.w.cols() != p {
                    return Err(Error::Dimension("mlp: hidden layer dimensions disagree".into()));
                }
            }
            prev = Some(layer.w.rows());
        }
        if let Some(p) = prev {
            if output.w.cols() != p {
                return Err(Error::Dimension("mlp: output layer input mismatch".into()));
            }
        }
        match kind {
            OutputKind::Sigmoid if output.w.rows() != 1 => {
                Err(Error::Dimension("mlp: sigmoid output needs exactly one unit".into()))
            }
            OutputKind::Softmax if output.w.rows() < 2 => {
                Err(Error::Dimension("mlp: softmax output needs >= 2 units".into()))
            }
            _ => Ok(Mlp { hidden, output, kind }),
        }
    }

    /// Hidden layers copied value-exactly from the stack; output layer drawn
    /// uniform `±1/sqrt(fan_in)`. Two classes get a single sigmoid unit,
    /// more get a softmax.
    pub fn from_stack(stack: &Stack, n_classes: usize, rng: &mut Rng) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument("mlp: need at least 2 classes".into()));
        }
        let hidden: Vec<DenseLayer> = stack
            .layers()
            .iter()
            .map(|l| {
                let (w, b) = l.feature_params();
                DenseLayer { w: w.clone(), b: b.to_vec() }
            })
            .collect();
        let in_dim = stack.output_dim();
        let (out_dim, kind) = if n_classes == 2 {
            (1, OutputKind::Sigmoid)
        } else {
            (n_classes, OutputKind::Softmax)
        };
        Ok(Mlp { hidden, output: DenseLayer::random(out_dim, in_dim, rng), kind })
    }

    /// No hidden layers: a linear classifier on the raw input.
    pub fn without_hidden(input_dim: usize, n_classes: usize, rng: &mut Rng) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument("mlp: need at least 2 classes".into()));
        }
        let (out_dim, kind) = if n_classes == 2 {
            (1, OutputKind::Sigmoid)
        } else {
            (n_classes, OutputKind::Softmax)
        };
        Ok(Mlp { hidden: Vec::new(), output: DenseLayer::random(out_dim, input_dim, rng), kind })
    }

    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.hidden
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    pub fn output_kind(&self) -> OutputKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.output.w.cols(), |l| l.w.cols())
    }

    pub fn n_classes(&self) -> usize {
        match self.kind {
            OutputKind::Sigmoid => 2,
            OutputKind::Softmax => self.output.w.rows(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.hidden.iter().all(|l| l.w.all_finite() && matrix::all_finite(&l.b))
            && self.output.w.all_finite()
            && matrix::all_finite(&self.output.b)
    }

    /// Activations of every layer: `acts[0]` is the input, the last entry the
    /// hidden representation feeding the output layer.
    fn forward_hidden(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.hidden {
            let mut a = layer.w.matvec(acts.last().unwrap())?;
            for (v, b) in a.iter_mut().zip(&layer.b) {
                *v = sigmoid(*v + b);
            }
            acts.push(a);
        }
        Ok(acts)
    }

    fn logits(&self, top: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.output.w.matvec(top)?;
        for (v, b) in z.iter_mut().zip(&self.output.b) {
            *v += b;
        }
        Ok(z)
    }

    /// Class probabilities (two entries for the sigmoid head).
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let acts = self.forward_hidden(x)?;
        let z = self.logits(acts.last().unwrap())?;
        Ok(match self.kind {
            OutputKind::Sigmoid => {
                let p = sigmoid(z[0]);
                vec![1.0 - p, p]
            }
            OutputKind::Softmax => softmax(&z),
        })
    }

    /// Argmax class, ties broken toward the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let probs = self.probabilities(x)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Negative log-likelihood of one labeled example.
    pub fn nll(&self, x: &[f64], label: usize) -> Result<f64> {
        if label >= self.n_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of {} classes",
                self.n_classes()
            )));
        }
        let acts = self.forward_hidden(x)?;
        let z = self.logits(acts.last().unwrap())?;
        Ok(match self.kind {
            OutputKind::Sigmoid => {
                // softplus(z) - t*z is the stable binary cross-entropy.
                let t = label as f64;
                z[0].max(0.0) + libm::log1p(libm::exp(-z[0].abs())) - t * z[0]
            }
            OutputKind::Softmax => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + libm::log(z.iter().map(|v| libm::exp(v - m)).sum::<f64>());
                lse - z[label]
            }
        })
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| libm::exp(v - m)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

struct MlpGrad {
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
}

impl MlpGrad {
    fn zeros(mlp: &Mlp) -> Self {
        MlpGrad {
            hidden: mlp
                .hidden
                .iter()
                .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
                .collect(),
            output: DenseLayer {
                w: Matrix::zeros(mlp.output.w.rows(), mlp.output.w.cols()),
                b: vec![0.0; mlp.output.b.len()],
            },
        }
    }
}

/// Full backpropagation of the classification loss for one example.
fn accumulate_mlp_grad(mlp: &Mlp, x: &[f64], label: usize, grad: &mut MlpGrad) -> Result<()> {
    let acts = mlp.forward_hidden(x)?;
    let top = acts.last().unwrap();
    let z = mlp.logits(top)?;
    let delta_out: Vec<f64> = match mlp.kind {
        OutputKind::Sigmoid => vec![sigmoid(z[0]) - label as f64],
        OutputKind::Softmax => {
            let mut p = softmax(&z);
            p[label] -= 1.0;
            p
        }
    };
    grad.output.w.add_outer_scaled(&delta_out, top, 1.0)?;
    for (g, d) in grad.output.b.iter_mut().zip(&delta_out) {
        *g += d;
    }
    let mut delta = mlp.output.w.matvec_t(&delta_out)?;
    for l in (0..mlp.hidden.len()).rev() {
        let h = &acts[l + 1];
        let da: Vec<f64> = delta.iter().zip(h).map(|(d, hj)| d * hj * (1.0 - hj)).collect();
        grad.hidden[l].w.add_outer_scaled(&da, &acts[l], 1.0)?;
        for (g, d) in grad.hidden[l].b.iter_mut().zip(&da) {
            *g += d;
        }
        if l > 0 {
            delta = mlp.hidden[l].w.matvec_t(&da)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Mlp,
    /// Training-set negative log-likelihood (summed) after each epoch.
    pub epoch_nll: Vec<f64>,
    /// Validation error rate after each epoch, when a validation set was
    /// supplied.
    pub epoch_validation: Option<Vec<f64>>,
}

/// Supervised fine-tuning by full backpropagation. Zero epochs return the
/// network unchanged. `cfg.objective` is not consulted; batching, seeding and
/// shuffling follow the same rules as pretraining.
pub fn finetune(mlp: &Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<FinetuneOutcome> {
    finetune_tracked(mlp, data, None, cfg)
}

/// [`finetune`] with an optional validation set whose classification error is
/// logged per epoch.
pub fn finetune_tracked(
    mlp: &Mlp,
    data: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("finetune: dataset has no labels".into()))?;
    if data.dim() != mlp.input_dim() {
        return Err(Error::Dimension(format!(
            "finetune: data dimension {} vs network input {}",
            data.dim(),
            mlp.input_dim()
        )));
    }
    let classes = data.num_classes().unwrap_or(0);
    if classes > mlp.n_classes() {
        return Err(Error::InvalidArgument(format!(
            "finetune: labels span {classes} classes but network has {}",
            mlp.n_classes()
        )));
    }
    if cfg.epochs == 0 {
        return Ok(FinetuneOutcome { model: mlp.clone(), epoch_nll: Vec::new(), epoch_validation: None });
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("finetune: bad batch size or learning rate".into()));
    }

    let mut rng = Rng::from_seed(cfg.seed);
    let mut net = mlp.clone();
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut epoch_nll = Vec::with_capacity(cfg.epochs);
    let mut epoch_validation = validation.map(|_| Vec::with_capacity(cfg.epochs));

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = MlpGrad::zeros(&net);
            for &i in chunk {
                accumulate_mlp_grad(&net, data.row(i), labels[i], &mut grad)?;
            }
            for (layer, g) in net.hidden.iter_mut().zip(&grad.hidden) {
                layer.w.add_scaled(&g.w, -cfg.learning_rate)?;
                for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                    *b -= cfg.learning_rate * gb;
                }
            }
            net.output.w.add_scaled(&grad.output.w, -cfg.learning_rate)?;
            for (b, gb) in net.output.b.iter_mut().zip(&grad.output.b) {
                *b -= cfg.learning_rate * gb;
            }
            if !net.all_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: "mlp parameters diverged".into(),
                });
            }
        }
        let mut total = 0.0;
        for i in 0..data.n() {
            total += net.nll(data.row(i), labels[i])?;
        }
        epoch_nll.push(total);
        if let (Some(vals), Some(v)) = (&mut epoch_validation, validation) {
            vals.push(evaluate(&net, v)?);
        }
    }
    Ok(FinetuneOutcome { model: net, epoch_nll, epoch_validation })
}

/// Model selection over a regularization grid by validation error, with the
/// one-standard-error rule: among candidates whose error is within one
/// binomial standard error of the best, pick the most regularized (last)
/// one. At desk-scale validation sizes the point estimates of nearby
/// candidates routinely differ by less than their noise; the rule keeps the
/// choice deterministic and biased toward the regularized models instead of
/// the noise.
///
/// `candidates` are `(strength, validation_error)` pairs in ascending
/// strength order; `n_val` is the validation-set size. Returns the chosen
/// index.
pub fn select_one_se(candidates: &[(f64, f64)], n_val: usize) -> Result<usize> {
    if candidates.is_empty() || n_val == 0 {
        return Err(Error::InvalidArgument("select_one_se: empty candidates or validation".into()));
    }
    let best = candidates
        .iter()
        .map(|&(_, e)| e)
        .fold(f64::INFINITY, f64::min);
    let se = libm::sqrt(best * (1.0 - best) / n_val as f64);
    let bound = best + se;
    let chosen = candidates
        .iter()
        .enumerate()
        .filter(|(_, &(_, e))| e <= bound)
        .map(|(i, _)| i)
        .next_back()
        .expect("the best candidate is always within its own bound");
    Ok(chosen)
}

/// Fraction of examples whose predicted class differs from the label.
pub fn evaluate(mlp: &Mlp, data: &Dataset) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("evaluate: dataset has no labels".into()))?;
    let mut wrong = 0usize;
    for i in 0..data.n() {
        if mlp.predict(data.row(i))? != labels[i] {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectiveVariant;

    fn toy_dataset(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = Rng::from_seed(seed);
        Dataset::new(Matrix::from_fn(n, d, |_, _| rng.uniform()), None, "toy").unwrap()
    }

    fn ae_cfg(objective: ObjectiveSpec, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig { epochs, batch_size: 4, learning_rate: 0.1, seed, objective, shuffle: true,
            enc_act: Activation::Sigmoid, dec_act: Activation::Sigmoid }
    }

    fn least_squares_slope(series: &[f64]) -> f64 {
        let n = series.len() as f64;
        let mean_x = (n - 1.0) / 2.0;
        let mean_y: f64 = series.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, y) in series.iter().enumerate() {
            let dx = i as f64 - mean_x;
            num += dx * (y - mean_y);
            den += dx * dx;
        }
        num / den
    }

    #[test]
    fn pretrain_is_deterministic() {
        let data = toy_dataset(1, 8, 4);
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            20,
            77,
        );
        let a = pretrain_layer(&data, 3, &cfg).unwrap();
        let b = pretrain_layer(&data, 3, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_objective, b.epoch_objective);
    }

    #[test]
    fn pretrain_reduces_the_objective() {
        let data = toy_dataset(2, 8, 4);
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            200,
            5,
        );
        let out = pretrain_layer(&data, 3, &cfg).unwrap();
        assert!(out.epoch_objective.last().unwrap() < &out.epoch_objective[0]);
        assert!(least_squares_slope(&out.epoch_objective) < 0.0);
    }

    #[test]
    fn contraction_penalty_contracts_more_than_plain_training() {
        let data = toy_dataset(3, 8, 4);
        let ae_out = pretrain_layer(
            &data,
            3,
            &ae_cfg(ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy }, 150, 9),
        )
        .unwrap();
        let cae_out = pretrain_layer(
            &data,
            3,
            &ae_cfg(
                ObjectiveSpec { variant: ObjectiveVariant::Cae { lambda: 1.0 }, loss: LossKind::CrossEntropy },
                150,
                9,
            ),
        )
        .unwrap();
        let avg = |m: &TiedAutoEncoder| -> f64 {
            let mut s = 0.0;
            for i in 0..data.n() {
                s += libm::sqrt(m.jacobian_frobenius_sq(data.row(i)).unwrap());
            }
            s / data.n() as f64
        };
        assert!(avg(&cae_out.model) < avg(&ae_out.model));
    }

    #[test]
    fn single_layer_stack_equals_pretrain_layer() {
        let data = toy_dataset(4, 8, 4);
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            30,
            13,
        );
        let single = pretrain_layer(&data, 3, &cfg).unwrap();
        let stacked = stack_pretrain(&data, &[3], &[cfg]).unwrap();
        assert_eq!(stacked.stack.layers().len(), 1);
        match &stacked.stack.layers()[0] {
            StackLayer::Ae(ae) => assert_eq!(ae, &single.model),
            _ => panic!("expected AE layer"),
        }
    }

    #[test]
    fn stack_layer_dimensions_chain() {
        let data = toy_dataset(5, 10, 20);
        let cfg = |seed| {
            ae_cfg(ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy }, 5, seed)
        };
        let out = stack_pretrain(&data, &[16, 8], &[cfg(1), cfg(2)]).unwrap();
        assert_eq!(out.stack.layers()[0].input_dim(), 20);
        assert_eq!(out.stack.layers()[1].input_dim(), 16);
        assert_eq!(out.stack.output_dim(), 8);
        let h = out.stack.encode(data.row(0)).unwrap();
        assert_eq!(h.len(), 8);
    }

    #[test]
    fn mlp_from_stack_preserves_pretrained_values() {
        let data = toy_dataset(6, 8, 5);
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            10,
            3,
        );
        let out = stack_pretrain(&data, &[4], &[cfg]).unwrap();
        let mut rng = Rng::from_seed(0);
        let mlp = Mlp::from_stack(&out.stack, 3, &mut rng).unwrap();
        match &out.stack.layers()[0] {
            StackLayer::Ae(ae) => {
                assert_eq!(&mlp.hidden_layers()[0].w, ae.w());
                assert_eq!(mlp.hidden_layers()[0].b.as_slice(), ae.b_h());
            }
            _ => unreachable!(),
        }
        assert_eq!(mlp.n_classes(), 3);
        assert_eq!(mlp.output_kind(), OutputKind::Softmax);
    }

    #[test]
    fn finetune_zero_epochs_is_identity() {
        let mut rng = Rng::from_seed(8);
        let mlp = Mlp::without_hidden(4, 3, &mut rng).unwrap();
        let data = Dataset::new(
            Matrix::from_fn(6, 4, |_, _| rng.uniform()),
            Some(vec![0, 1, 2, 0, 1, 2]),
            "toy",
        )
        .unwrap();
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            0,
            1,
        );
        let out = finetune(&mlp, &data, &cfg).unwrap();
        assert_eq!(out.model, mlp);
        assert!(out.epoch_nll.is_empty());
    }

    #[test]
    fn finetune_is_deterministic() {
        let mut rng = Rng::from_seed(9);
        let mlp = Mlp::without_hidden(2, 2, &mut rng).unwrap();
        let data = Dataset::new(
            Matrix::from_fn(10, 2, |r, _| (r as f64) / 10.0),
            Some((0..10).map(|r| usize::from(r >= 5)).collect()),
            "toy",
        )
        .unwrap();
        let cfg = ae_cfg(
            ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            25,
            4,
        );
        let a = finetune(&mlp, &data, &cfg).unwrap();
        let b = finetune(&mlp, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_nll, b.epoch_nll);
    }

    #[test]
    fn linearly_separable_toy_reaches_zero_training_error() {
        // 20 points in 2D, separable by x0 + x1 > 1.
        let mut rng = Rng::from_seed(14);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let above = i % 2 == 0;
            let (a, b) = if above {
                (0.6 + 0.4 * rng.uniform(), 0.6 + 0.4 * rng.uniform())
            } else {
                (0.4 * rng.uniform(), 0.4 * rng.uniform())
            };
            rows.push([a, b]);
            labels.push(usize::from(above));
        }
        let data = Dataset::new(
            Matrix::from_fn(20, 2, |r, c| rows[r][c]),
            Some(labels),
            "sep",
        )
        .unwrap();
        let mlp = Mlp::without_hidden(2, 2, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 5,
            learning_rate: 0.5,
            seed: 3,
            objective: ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy },
            shuffle: true,
            enc_act: Activation::Sigmoid,
            dec_act: Activation::Sigmoid,
        };
        let out = finetune(&mlp, &data, &cfg).unwrap();
        assert_eq!(evaluate(&out.model, &data).unwrap(), 0.0);
        assert!(least_squares_slope(&out.epoch_nll) < 0.0);
    }

    #[test]
    fn evaluate_edge_cases() {
        // Always-class-0 network on a balanced set errs exactly half the time.
        let constant = Mlp::from_parts(
            Vec::new(),
            DenseLayer { w: Matrix::zeros(1, 3), b: vec![0.0] },
            OutputKind::Sigmoid,
        )
        .unwrap();
        let data = Dataset::new(
            Matrix::from_fn(10, 3, |r, _| r as f64 / 10.0),
            Some((0..10).map(|r| r % 2).collect()),
            "balanced",
        )
        .unwrap();
        assert_eq!(evaluate(&constant, &data).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_random_ten_class_labels() {
        let mut rng = Rng::from_seed(31);
        let n = 10_000;
        let data = Dataset::new(
            Matrix::from_fn(n, 6, |_, _| rng.uniform()),
            Some((0..n).map(|_| rng.index(10)).collect()),
            "random",
        )
        .unwrap();
        let mlp = Mlp::without_hidden(6, 10, &mut rng).unwrap();
        let err = evaluate(&mlp, &data).unwrap();
        let stderr = (0.9 * 0.1 / n as f64).sqrt();
        assert!((err - 0.9).abs() <= 3.0 * stderr, "error rate {err}");
    }

    #[test]
    fn one_se_rule_prefers_regularization_within_noise() {
        // best error 0.02 on 500 examples: SE ~ 0.00626
        let grid = [(0.01, 0.020), (0.1, 0.024), (1.0, 0.040)];
        assert_eq!(select_one_se(&grid, 500).unwrap(), 1);
        // a clearly better strong candidate wins outright
        let grid = [(0.01, 0.10), (0.1, 0.08), (1.0, 0.02)];
        assert_eq!(select_one_se(&grid, 500).unwrap(), 2);
        // zero-error ties resolve toward the most regularized zero
        let grid = [(0.01, 0.0), (0.1, 0.0), (1.0, 0.3)];
        assert_eq!(select_one_se(&grid, 500).unwrap(), 1);
    }

    #[test]
    fn rbm_pretraining_runs_and_is_deterministic() {
        let data = toy_dataset(16, 12, 6);
        let cfg = RbmTrainConfig { epochs: 8, batch_size: 4, learning_rate: 0.1, seed: 2, shuffle: true, cd_steps: 1 };
        let a = pretrain_rbm(&data, 4, &cfg).unwrap();
        let b = pretrain_rbm(&data, 4, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_free_energy.len(), 8);
    }

    #[test]
    fn stack_jacobian_matches_finite_differences() {
        use crate::finitediff;
        let data = toy_dataset(21, 8, 5);
        let cfg = |seed| {
            ae_cfg(ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::CrossEntropy }, 5, seed)
        };
        let out = stack_pretrain(&data, &[4, 3], &[cfg(1), cfg(2)]).unwrap();
        let x = data.row(0);
        let j = out.stack.jacobian(x).unwrap();
        for o in 0..3 {
            let fd = finitediff::gradient(
                |v| Ok(out.stack.encode(v)?[o]),
                x,
                finitediff::DEFAULT_GRADIENT_EPS,
            )
            .unwrap();
            for i in 0..5 {
                assert!((j.get(o, i) - fd[i]).abs() < 1e-7);
            }
        }
    }
}
