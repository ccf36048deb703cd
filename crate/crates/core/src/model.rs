//! Tied-weight auto-encoder, its objective variants, corruption processes and
//! encoder Jacobian quantities.
//!
//! One parameter set `{W, b_h, b_y}` serves every variant: the decoder matrix
//! is always `Wᵀ` and is never materialized. Objectives sum per-example losses
//! over the batch; regularizers follow each objective's own formula (the
//! weight-decay penalty enters once per batch, the contraction penalty once
//! per example).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::rng::Rng;

/// Reconstructions are clamped into `[CE_CLAMP, 1 - CE_CLAMP]` before any log;
/// a sigmoid rounding to exactly 0 or 1 in 64-bit must not NaN the loss.
pub const CE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// First derivative of the activation expressed through its output value.
    #[inline]
    pub fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    /// Derivative of `slope` with respect to the pre-activation, expressed
    /// through the output value. For the sigmoid, `d/da [h(1-h)] =
    /// h(1-h)(1-2h)`.
    #[inline]
    pub fn slope_derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y) * (1.0 - 2.0 * y),
            Activation::Identity => 0.0,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// Input corruption process of the denoising variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionSpec {
    None,
    /// Additive isotropic Gaussian noise with the given standard deviation.
    Gaussian { sigma: f64 },
    /// Sets exactly `round(nu * d)` distinct components (uniform, without
    /// replacement) to zero.
    Masking { nu: f64 },
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorruptionSpec::None => Ok(()),
            CorruptionSpec::Gaussian { sigma } => {
                if sigma >= 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("gaussian sigma must be >= 0, got {sigma}")))
                }
            }
            CorruptionSpec::Masking { nu } => {
                if (0.0..=1.0).contains(&nu) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("masking nu must be in [0,1], got {nu}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveVariant {
    /// Plain reconstruction.
    Ae,
    /// Reconstruction plus `lambda * sum W_ij^2`, once per batch.
    AeWeightDecay { lambda: f64 },
    /// Reconstruction plus `lambda * ||J_f(x)||_F^2` per example.
    Cae { lambda: f64 },
    /// Reconstruct the clean input from a Gaussian-corrupted one.
    DaeGaussian { sigma: f64 },
    /// Reconstruct the clean input from a masking-corrupted one.
    DaeMasking { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub variant: ObjectiveVariant,
    pub loss: LossKind,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        match self.variant {
            ObjectiveVariant::Ae => Ok(()),
            ObjectiveVariant::AeWeightDecay { lambda } | ObjectiveVariant::Cae { lambda } => {
                if lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")))
                }
            }
            ObjectiveVariant::DaeGaussian { sigma } => {
                CorruptionSpec::Gaussian { sigma }.validate()
            }
            ObjectiveVariant::DaeMasking { nu } => CorruptionSpec::Masking { nu }.validate(),
        }
    }

    /// Corruption process implied by the variant (`None` for the
    /// deterministic objectives).
    pub fn corruption(&self) -> CorruptionSpec {
        match self.variant {
            ObjectiveVariant::DaeGaussian { sigma } => CorruptionSpec::Gaussian { sigma },
            ObjectiveVariant::DaeMasking { nu } => CorruptionSpec::Masking { nu },
            _ => CorruptionSpec::None,
        }
    }
}

/// Gradient of an objective with respect to `{W, b_h, b_y}`. The RBM reuses
/// this carrier with `db_y` holding the visible-bias gradient (same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub dw: Matrix,
    pub db_h: Vec<f64>,
    pub db_y: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(d_h: usize, d_x: usize) -> Self {
        ParamGrad { dw: Matrix::zeros(d_h, d_x), db_h: vec![0.0; d_h], db_y: vec![0.0; d_x] }
    }
}

/// Auto-encoder with encoder `h = s_f(W x + b_h)` and tied decoder
/// `y = s_g(Wᵀ h + b_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiedAutoEncoder {
    w: Matrix,
    b_h: Vec<f64>,
    b_y: Vec<f64>,
    enc_act: Activation,
    dec_act: Activation,
}

impl TiedAutoEncoder {
    pub fn new(
        w: Matrix,
        b_h: Vec<f64>,
        b_y: Vec<f64>,
        enc_act: Activation,
        dec_act: Activation,
    ) -> Result<Self> {
        if b_h.len() != w.rows() || b_y.len() != w.cols() {
            return Err(Error::Dimension(format!(
                "tied auto-encoder: W is {}x{}, b_h has {}, b_y has {}",
                w.rows(),
                w.cols(),
                b_h.len(),
                b_y.len()
            )));
        }
        if !w.all_finite() || !matrix::all_finite(&b_h) || !matrix::all_finite(&b_y) {
            return Err(Error::NonFinite("tied auto-encoder: non-finite parameter".into()));
        }
        Ok(TiedAutoEncoder { w, b_h, b_y, enc_act, dec_act })
    }

    /// Weights uniform in `±1/sqrt(d_x)`, biases zero.
    pub fn random(
        d_x: usize,
        d_h: usize,
        enc_act: Activation,
        dec_act: Activation,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / libm::sqrt(d_x.max(1) as f64);
        let w = Matrix::from_fn(d_h, d_x, |_, _| rng.uniform_in(-bound, bound));
        TiedAutoEncoder {
            w,
            b_h: vec![0.0; d_h],
            b_y: vec![0.0; d_x],
            enc_act,
            dec_act,
        }
    }

    pub fn d_x(&self) -> usize {
        self.w.cols()
    }

    pub fn d_h(&self) -> usize {
        self.w.rows()
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn b_h(&self) -> &[f64] {
        &self.b_h
    }

    pub fn b_y(&self) -> &[f64] {
        &self.b_y
    }

    pub fn enc_act(&self) -> Activation {
        self.enc_act
    }

    pub fn dec_act(&self) -> Activation {
        self.dec_act
    }

    pub fn all_finite(&self) -> bool {
        self.w.all_finite() && matrix::all_finite(&self.b_h) && matrix::all_finite(&self.b_y)
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.w.matvec(x)?;
        for (v, b) in a.iter_mut().zip(&self.b_h) {
            *v = self.enc_act.apply(*v + b);
        }
        Ok(a)
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.w.matvec_t(h)?;
        for (v, b) in z.iter_mut().zip(&self.b_y) {
            *v = self.dec_act.apply(*v + b);
        }
        Ok(z)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    /// `J_f(x)` with entries `(j, i) = ∂h_j/∂x_i = s_f'(a_j) W_ji`.
    pub fn encoder_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let h = self.encode(x)?;
        let mut j = self.w.clone();
        for (row, hj) in h.iter().enumerate() {
            let g = self.enc_act.slope_from_output(*hj);
            for v in j.row_mut(row) {
                *v *= g;
            }
        }
        Ok(j)
    }

    /// `||J_f(x)||_F^2` in closed form: `sum_j s_f'(a_j)^2 ||W_j.||^2`,
    /// without materializing the Jacobian.
    pub fn jacobian_frobenius_sq(&self, x: &[f64]) -> Result<f64> {
        let h = self.encode(x)?;
        let mut total = 0.0;
        for (row, hj) in h.iter().enumerate() {
            let g = self.enc_act.slope_from_output(*hj);
            total += g * g * matrix::norm_sq(self.w.row(row));
        }
        Ok(total)
    }

    /// Jacobian of the reconstruction `g(f(x))` with respect to `x`
    /// (`d_x` by `d_x`): `diag(s_g'(z)) Wᵀ diag(s_f'(a)) W`.
    pub fn reconstruction_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let h = self.encode(x)?;
        let y = self.decode(&h)?;
        let d_x = self.d_x();
        let mut inner = Matrix::zeros(d_x, d_x);
        for (row, hj) in h.iter().enumerate() {
            let g = self.enc_act.slope_from_output(*hj);
            let w_row = self.w.row(row);
            // inner += g * w_row^T w_row
            inner.add_outer_scaled(w_row, w_row, g)?;
        }
        for (k, yk) in y.iter().enumerate() {
            let s = self.dec_act.slope_from_output(*yk);
            for v in inner.row_mut(k) {
                *v *= s;
            }
        }
        Ok(inner)
    }

    /// In-place SGD step `θ ← θ - lr * grad`.
    pub fn apply_gradient(&mut self, grad: &ParamGrad, lr: f64) -> Result<()> {
        self.w.add_scaled(&grad.dw, -lr)?;
        if grad.db_h.len() != self.b_h.len() || grad.db_y.len() != self.b_y.len() {
            return Err(Error::Dimension("apply_gradient: bias shape mismatch".into()));
        }
        for (b, g) in self.b_h.iter_mut().zip(&grad.db_h) {
            *b -= lr * g;
        }
        for (b, g) in self.b_y.iter_mut().zip(&grad.db_y) {
            *b -= lr * g;
        }
        Ok(())
    }

    /// Parameters as one flat vector: `W` row-major, then `b_h`, then `b_y`.
    /// Used by the finite-difference gradient gate.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.w.data().to_vec();
        flat.extend_from_slice(&self.b_h);
        flat.extend_from_slice(&self.b_y);
        flat
    }

    /// Rebuilds an auto-encoder with this one's shape and activations from a
    /// flat parameter vector (inverse of [`to_flat`](Self::to_flat)).
    pub fn from_flat(&self, flat: &[f64]) -> Result<Self> {
        let (d_h, d_x) = (self.d_h(), self.d_x());
        let need = d_h * d_x + d_h + d_x;
        if flat.len() != need {
            return Err(Error::Dimension(format!(
                "from_flat: need {need} parameters, got {}",
                flat.len()
            )));
        }
        let w = Matrix::from_vec(d_h, d_x, flat[..d_h * d_x].to_vec())?;
        let b_h = flat[d_h * d_x..d_h * d_x + d_h].to_vec();
        let b_y = flat[d_h * d_x + d_h..].to_vec();
        TiedAutoEncoder::new(w, b_h, b_y, self.enc_act, self.dec_act)
    }
}

/// Reconstruction error between an input and its reconstruction.
///
/// Squared error `||x - y||^2`, or cross-entropy
/// `-sum_i x_i log y_i + (1 - x_i) log(1 - y_i)` with `y` clamped away from
/// {0, 1}.
pub fn reconstruction_loss(x: &[f64], y: &[f64], loss: LossKind) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "reconstruction_loss: lengths {} vs {}",
            x.len(),
            y.len()
        )));
    }
    match loss {
        LossKind::SquaredError => {
            let mut s = 0.0;
            for (a, b) in x.iter().zip(y) {
                let d = a - b;
                s += d * d;
            }
            Ok(s)
        }
        LossKind::CrossEntropy => {
            let mut s = 0.0;
            for (a, b) in x.iter().zip(y) {
                let p = b.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
                s -= a * libm::log(p) + (1.0 - a) * libm::log(1.0 - p);
            }
            Ok(s)
        }
    }
}

/// Applies a corruption process to `x`. Draw order is fixed (component 0
/// upward), so two rngs in equal states corrupt identically.
pub fn corrupt(x: &[f64], spec: &CorruptionSpec, rng: &mut Rng) -> Vec<f64> {
    match *spec {
        CorruptionSpec::None => x.to_vec(),
        CorruptionSpec::Gaussian { sigma } => {
            x.iter().map(|v| v + sigma * rng.normal()).collect()
        }
        CorruptionSpec::Masking { nu } => {
            let d = x.len();
            let count = (libm::round(nu * d as f64) as usize).min(d);
            let mut out = x.to_vec();
            for idx in rng.sample_distinct(count, d) {
                out[idx] = 0.0;
            }
            out
        }
    }
}

fn check_batch(ae: &TiedAutoEncoder, batch: &Matrix) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::Dimension("objective: empty batch".into()));
    }
    if batch.cols() != ae.d_x() {
        return Err(Error::Dimension(format!(
            "objective: batch dimension {} vs d_x {}",
            batch.cols(),
            ae.d_x()
        )));
    }
    Ok(())
}

fn check_loss_config(ae: &TiedAutoEncoder, loss: LossKind) -> Result<()> {
    if loss == LossKind::CrossEntropy && ae.dec_act() != Activation::Sigmoid {
        return Err(Error::InvalidArgument(
            "cross-entropy loss requires a sigmoid decoder".into(),
        ));
    }
    Ok(())
}

/// Objective value over a batch (rows are examples). Denoising variants draw
/// one corruption per example from `rng`, in example order; a value and a
/// gradient computed from rngs in equal states see identical corruptions.
pub fn objective_value(
    ae: &TiedAutoEncoder,
    batch: &Matrix,
    spec: &ObjectiveSpec,
    rng: &mut Rng,
) -> Result<f64> {
    spec.validate()?;
    check_batch(ae, batch)?;
    check_loss_config(ae, spec.loss)?;
    let corruption = spec.corruption();
    let mut total = 0.0;
    for r in 0..batch.rows() {
        let x = batch.row(r);
        let value = match corruption {
            CorruptionSpec::None => reconstruction_loss(x, &ae.reconstruct(x)?, spec.loss)?,
            _ => {
                let noisy = corrupt(x, &corruption, rng);
                reconstruction_loss(x, &ae.reconstruct(&noisy)?, spec.loss)?
            }
        };
        total += value;
        if let ObjectiveVariant::Cae { lambda } = spec.variant {
            total += lambda * ae.jacobian_frobenius_sq(x)?;
        }
    }
    if let ObjectiveVariant::AeWeightDecay { lambda } = spec.variant {
        total += lambda * ae.w().frobenius_sq();
    }
    Ok(total)
}

/// Analytic gradient of [`objective_value`] with respect to `{W, b_h, b_y}`.
/// Both encoder and decoder paths through the tied `W` are accumulated; the
/// contraction penalty's gradient uses the closed form, including its
/// dependence on `h`.
pub fn objective_gradient(
    ae: &TiedAutoEncoder,
    batch: &Matrix,
    spec: &ObjectiveSpec,
    rng: &mut Rng,
) -> Result<ParamGrad> {
    spec.validate()?;
    check_batch(ae, batch)?;
    check_loss_config(ae, spec.loss)?;
    let corruption = spec.corruption();
    let mut grad = ParamGrad::zeros(ae.d_h(), ae.d_x());

    for r in 0..batch.rows() {
        let target = batch.row(r);
        let input = match corruption {
            CorruptionSpec::None => target.to_vec(),
            _ => corrupt(target, &corruption, rng),
        };
        accumulate_reconstruction_grad(ae, &input, target, spec.loss, &mut grad)?;
        if let ObjectiveVariant::Cae { lambda } = spec.variant {
            accumulate_contraction_grad(ae, target, lambda, &mut grad)?;
        }
    }
    if let ObjectiveVariant::AeWeightDecay { lambda } = spec.variant {
        grad.dw.add_scaled(ae.w(), 2.0 * lambda)?;
    }
    Ok(grad)
}

/// Backpropagation of the reconstruction loss for one example, accumulating
/// into `grad`. `input` feeds the encoder; `target` is what the decoder must
/// reproduce (they differ for the denoising variants).
fn accumulate_reconstruction_grad(
    ae: &TiedAutoEncoder,
    input: &[f64],
    target: &[f64],
    loss: LossKind,
    grad: &mut ParamGrad,
) -> Result<()> {
    let h = ae.encode(input)?;
    let y = ae.decode(&h)?;

    // delta on the decoder pre-activation z.
    let delta_z: Vec<f64> = match loss {
        LossKind::SquaredError => y
            .iter()
            .zip(target)
            .map(|(yk, xk)| 2.0 * (yk - xk) * ae.dec_act().slope_from_output(*yk))
            .collect(),
        // With a sigmoid decoder the cross-entropy delta collapses to y - x.
        LossKind::CrossEntropy => y.iter().zip(target).map(|(yk, xk)| yk - xk).collect(),
    };

    for (g, d) in grad.db_y.iter_mut().zip(&delta_z) {
        *g += d;
    }
    // Decoder path through the tied weights: z = Wᵀ h + b_y.
    grad.dw.add_outer_scaled(&h, &delta_z, 1.0)?;

    // Back into the encoder.
    let delta_h = ae.w().matvec(&delta_z)?;
    let delta_a: Vec<f64> = delta_h
        .iter()
        .zip(&h)
        .map(|(d, hj)| d * ae.enc_act().slope_from_output(*hj))
        .collect();
    for (g, d) in grad.db_h.iter_mut().zip(&delta_a) {
        *g += d;
    }
    grad.dw.add_outer_scaled(&delta_a, input, 1.0)?;
    Ok(())
}

/// Gradient of `lambda * ||J_f(x)||_F^2` for one example, from the closed
/// form `P = sum_j gamma_j^2 S_j` with `gamma_j = s_f'(a_j)` and
/// `S_j = ||W_j.||^2`:
///
/// - `∂P/∂W_ji = 2 gamma_j^2 W_ji + 2 gamma_j gamma_j' S_j x_i`
/// - `∂P/∂b_hj = 2 gamma_j gamma_j' S_j`
///
/// where `gamma_j' = d gamma_j / d a_j`.
fn accumulate_contraction_grad(
    ae: &TiedAutoEncoder,
    x: &[f64],
    lambda: f64,
    grad: &mut ParamGrad,
) -> Result<()> {
    if lambda == 0.0 {
        return Ok(());
    }
    let h = ae.encode(x)?;
    for (j, hj) in h.iter().enumerate() {
        let gamma = ae.enc_act().slope_from_output(*hj);
        let gamma_prime = ae.enc_act().slope_derivative_from_output(*hj);
        let row_norm_sq = matrix::norm_sq(ae.w().row(j));
        let direct = 2.0 * lambda * gamma * gamma;
        let through_h = 2.0 * lambda * gamma * gamma_prime * row_norm_sq;
        let w_row = ae.w().row(j).to_vec();
        for (i, g) in grad.dw.row_mut(j).iter_mut().enumerate() {
            *g += direct * w_row[i] + through_h * x[i];
        }
        grad.db_h[j] += through_h;
    }
    Ok(())
}

/// Anything that maps inputs to features and exposes the map's Jacobian.
/// Implemented by the auto-encoder's encoder, the RBM's hidden expectation
/// and whole stacks.
pub trait FeatureMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn map(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<Matrix>;

    fn jacobian_frobenius_sq(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jacobian(x)?.frobenius_sq())
    }
}

impl FeatureMap for TiedAutoEncoder {
    fn input_dim(&self) -> usize {
        self.d_x()
    }

    fn output_dim(&self) -> usize {
        self.d_h()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encode(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.encoder_jacobian(x)
    }

    fn jacobian_frobenius_sq(&self, x: &[f64]) -> Result<f64> {
        TiedAutoEncoder::jacobian_frobenius_sq(self, x)
    }
}
