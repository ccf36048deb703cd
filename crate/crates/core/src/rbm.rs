//! Binary-binary restricted Boltzmann machine trained by contrastive
//! divergence, used as a comparison feature extractor. Its hidden conditional
//! `sigmoid(W v + b_h)` has exactly the encoder's form, so an RBM plugs into
//! the same stacking, fine-tuning and analysis paths as an auto-encoder.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::model::{sigmoid, FeatureMap, ParamGrad};
use crate::rng::Rng;

/// RBM with `d_h x d_x` weights, visible bias `b_v` and hidden bias `b_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    w: Matrix,
    b_v: Vec<f64>,
    b_h: Vec<f64>,
}

impl Rbm {
    pub fn new(w: Matrix, b_v: Vec<f64>, b_h: Vec<f64>) -> Result<Self> {
        if b_v.len() != w.cols() || b_h.len() != w.rows() {
            return Err(Error::Dimension(format!(
                "rbm: W is {}x{}, b_v has {}, b_h has {}",
                w.rows(),
                w.cols(),
                b_v.len(),
                b_h.len()
            )));
        }
        if !w.all_finite() || !matrix::all_finite(&b_v) || !matrix::all_finite(&b_h) {
            return Err(Error::NonFinite("rbm: non-finite parameter".into()));
        }
        Ok(Rbm { w, b_v, b_h })
    }

    /// Weights uniform in `±1/sqrt(d_x)`, biases zero (same scheme as the
    /// auto-encoders).
    pub fn random(d_x: usize, d_h: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(d_x.max(1) as f64);
        let w = Matrix::from_fn(d_h, d_x, |_, _| rng.uniform_in(-bound, bound));
        Rbm { w, b_v: vec![0.0; d_x], b_h: vec![0.0; d_h] }
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

    pub fn b_v(&self) -> &[f64] {
        &self.b_v
    }

    pub fn b_h(&self) -> &[f64] {
        &self.b_h
    }

    pub fn all_finite(&self) -> bool {
        self.w.all_finite() && matrix::all_finite(&self.b_v) && matrix::all_finite(&self.b_h)
    }

    /// `p(h_j = 1 | v) = sigmoid(W v + b_h)`; this is the feature map reused
    /// for stacking and classification.
    pub fn hidden_activation(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.w.matvec(v)?;
        for (x, b) in a.iter_mut().zip(&self.b_h) {
            *x = sigmoid(*x + b);
        }
        Ok(a)
    }

    /// `p(v_i = 1 | h) = sigmoid(Wᵀ h + b_v)`.
    pub fn visible_activation(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.w.matvec_t(h)?;
        for (x, b) in a.iter_mut().zip(&self.b_v) {
            *x = sigmoid(*x + b);
        }
        Ok(a)
    }

    /// CD-k gradient estimate of the negative log-likelihood (to be
    /// *subtracted* by the optimizer; `db_y` carries the visible-bias part).
    ///
    /// Positive phase uses the real-valued `v` and mean-field `p(h|v)`. The
    /// chain samples both layers binarily; only the final negative-phase
    /// statistics use mean-field hidden probabilities.
    pub fn cd_gradient(&self, v: &[f64], k: usize, rng: &mut Rng) -> Result<ParamGrad> {
        if k == 0 {
            return Err(Error::InvalidArgument("cd_gradient: k must be >= 1".into()));
        }
        let p_h_data = self.hidden_activation(v)?;
        let mut h_sample: Vec<f64> =
            p_h_data.iter().map(|&p| if rng.uniform() < p { 1.0 } else { 0.0 }).collect();
        let mut v_sample = vec![0.0; self.d_x()];
        let mut p_h_model = vec![0.0; self.d_h()];
        for step in 0..k {
            let p_v = self.visible_activation(&h_sample)?;
            for (vs, &p) in v_sample.iter_mut().zip(&p_v) {
                *vs = if rng.uniform() < p { 1.0 } else { 0.0 };
            }
            p_h_model = self.hidden_activation(&v_sample)?;
            if step + 1 < k {
                for (hs, &p) in h_sample.iter_mut().zip(&p_h_model) {
                    *hs = if rng.uniform() < p { 1.0 } else { 0.0 };
                }
            }
        }

        let mut grad = ParamGrad::zeros(self.d_h(), self.d_x());
        // negative-phase statistics minus positive-phase statistics
        grad.dw.add_outer_scaled(&p_h_model, &v_sample, 1.0)?;
        grad.dw.add_outer_scaled(&p_h_data, v, -1.0)?;
        for ((g, m), d) in grad.db_h.iter_mut().zip(&p_h_model).zip(&p_h_data) {
            *g = m - d;
        }
        for ((g, m), d) in grad.db_y.iter_mut().zip(&v_sample).zip(v) {
            *g = m - d;
        }
        Ok(grad)
    }

    /// `F(v) = -b_vᵀ v - sum_j softplus(W_j. v + b_hj)`, the monitoring
    /// quantity logged during CD training.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        let a = self.w.matvec(v)?;
        let mut f = -matrix::dot(&self.b_v, v);
        for (x, b) in a.iter().zip(&self.b_h) {
            f -= softplus(x + b);
        }
        Ok(f)
    }

    /// In-place step `θ ← θ - lr * grad` (gradient of the negative
    /// log-likelihood, so this ascends the likelihood estimate).
    pub fn apply_gradient(&mut self, grad: &ParamGrad, lr: f64) -> Result<()> {
        self.w.add_scaled(&grad.dw, -lr)?;
        if grad.db_h.len() != self.b_h.len() || grad.db_y.len() != self.b_v.len() {
            return Err(Error::Dimension("rbm apply_gradient: bias shape mismatch".into()));
        }
        for (b, g) in self.b_h.iter_mut().zip(&grad.db_h) {
            *b -= lr * g;
        }
        for (b, g) in self.b_v.iter_mut().zip(&grad.db_y) {
            *b -= lr * g;
        }
        Ok(())
    }
}

/// `log(1 + exp(a))` without overflow.
fn softplus(a: f64) -> f64 {
    a.max(0.0) + libm::log1p(libm::exp(-a.abs()))
}

impl FeatureMap for Rbm {
    fn input_dim(&self) -> usize {
        self.d_x()
    }

    fn output_dim(&self) -> usize {
        self.d_h()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hidden_activation(x)
    }

    /// Same form as the sigmoid encoder: `(j, i) = p_j (1 - p_j) W_ji`.
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let p = self.hidden_activation(x)?;
        let mut j = self.w.clone();
        for (row, pj) in p.iter().enumerate() {
            let g = pj * (1.0 - pj);
            for v in j.row_mut(row) {
                *v *= g;
            }
        }
        Ok(j)
    }
}
