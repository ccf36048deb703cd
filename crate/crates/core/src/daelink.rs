//! Numerical verification that Gaussian-noise denoising training is, to
//! second order, clean training plus a Hessian-trace penalty: the noisy cost
//! sampled by Monte Carlo is compared against `clean + sigma^2/(2n) * sum_i
//! Tr(H_L(x_i))`.
//!
//! For squared-error reconstruction the trace decomposes as
//!
//! `Tr(H_L) = 2 sum_k (r_k - x_k) Tr(H_{r_k}) + 2 ||J_r - I||_F^2`
//!
//! with `r = g∘f`. Note the `- I`: the derivative of `r(x) - x` carries it,
//! and the identity network (where the corrected trace is 0 but the
//! uncorrected form gives `2 d_x`) shows the form without it cannot match the
//! true Hessian trace. Both are reported.

use alloc::format;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::finitediff;
use crate::model::{reconstruction_loss, LossKind, TiedAutoEncoder};
use crate::rng::Rng;

/// Step used to differentiate the analytic reconstruction Jacobian once more.
pub const JACOBIAN_FD_STEP: f64 = 1e-4;

/// `(1/n) sum_i L(x_i, g(f(x_i)))` - averaged, unlike the summed training
/// objectives.
pub fn clean_cost(ae: &TiedAutoEncoder, data: &Dataset, loss: LossKind) -> Result<f64> {
    check(ae, data)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        let x = data.row(i);
        total += reconstruction_loss(x, &ae.reconstruct(x)?, loss)?;
    }
    Ok(total / data.n() as f64)
}

/// Monte-Carlo estimate of the smoothed cost
/// `(1/n) sum_i E[L(x_i + eps)]`, `eps ~ N(0, sigma^2 I)`, with `samples`
/// draws per example; returns `(mean, stderr)`.
///
/// Per-example substreams are derived from one draw off `rng`, so two calls
/// with rngs in equal states see identical unit normals (and `sigma` enters
/// only as a scale - useful for common-random-number comparisons across
/// noise levels). At `sigma = 0` this returns the clean cost bitwise with
/// zero stderr.
pub fn noisy_cost_mc(
    ae: &TiedAutoEncoder,
    data: &Dataset,
    loss: LossKind,
    sigma: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    check(ae, data)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let base = rng.next_u64();
    let n = data.n();
    let mut total = 0.0;
    let mut var_of_mean = 0.0;
    let mut probe = Vec::new();
    for i in 0..n {
        let x = data.row(i);
        if sigma == 0.0 {
            total += reconstruction_loss(x, &ae.reconstruct(x)?, loss)?;
            continue;
        }
        let mut sub = Rng::substream(base, &[i as u64]);
        // Welford accumulation of the per-example mean and variance. The
        // loss is the auto-encoder's own cost at the jittered point (the
        // jittered point is input and target both); this is the smoothed
        // clean cost, not the denoising objective.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for s in 0..samples {
            probe.clear();
            probe.extend(x.iter().map(|v| v + sigma * sub.normal()));
            let value = reconstruction_loss(&probe, &ae.reconstruct(&probe)?, loss)?;
            let delta = value - mean;
            mean += delta / (s + 1) as f64;
            m2 += delta * (value - mean);
        }
        total += mean;
        if samples > 1 {
            let var = m2 / (samples - 1) as f64;
            var_of_mean += var / samples as f64;
        }
    }
    let stderr = if sigma == 0.0 { 0.0 } else { libm::sqrt(var_of_mean) / n as f64 };
    Ok((total / n as f64, stderr))
}

/// Decomposition of `Tr(H_L(x))` for squared-error reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianTraceDecomposition {
    /// `residual_term + jacobian_term`: the trace with the `- I` correction.
    pub corrected: f64,
    /// `residual_term + 2 ||J_r||_F^2`: the form without `- I`, reported for
    /// comparison only.
    pub paper_form: f64,
    /// `2 sum_k (r_k(x) - x_k) Tr(H_{r_k}(x))`.
    pub residual_term: f64,
    /// `2 ||J_r(x) - I||_F^2`.
    pub jacobian_term: f64,
}

/// Computes the decomposition at one input. Second derivatives of the
/// reconstruction come from central differences of the analytic
/// reconstruction Jacobian (step [`JACOBIAN_FD_STEP`]); only squared error is
/// supported in closed form.
pub fn hessian_trace_decomposition(
    ae: &TiedAutoEncoder,
    x: &[f64],
    loss: LossKind,
) -> Result<HessianTraceDecomposition> {
    if loss != LossKind::SquaredError {
        return Err(Error::Unsupported(
            "hessian trace decomposition is defined for squared error; use the finite-difference \
             trace for other losses"
                .into(),
        ));
    }
    if x.len() != ae.d_x() {
        return Err(Error::Dimension(format!(
            "hessian trace: input has {} values, d_x is {}",
            x.len(),
            ae.d_x()
        )));
    }
    let d = x.len();
    let r = ae.reconstruct(x)?;
    let jac = ae.reconstruction_jacobian(x)?;

    // Tr(H_{r_k}) = sum_i d/dx_i [J_r(x)]_{k,i}, by central differences of
    // the analytic Jacobian.
    let mut trace_r = alloc::vec![0.0; d];
    let mut probe = x.to_vec();
    for i in 0..d {
        probe[i] = x[i] + JACOBIAN_FD_STEP;
        let plus = ae.reconstruction_jacobian(&probe)?;
        probe[i] = x[i] - JACOBIAN_FD_STEP;
        let minus = ae.reconstruction_jacobian(&probe)?;
        probe[i] = x[i];
        for (k, t) in trace_r.iter_mut().enumerate() {
            *t += (plus.get(k, i) - minus.get(k, i)) / (2.0 * JACOBIAN_FD_STEP);
        }
    }

    let mut residual_term = 0.0;
    for k in 0..d {
        residual_term += (r[k] - x[k]) * trace_r[k];
    }
    residual_term *= 2.0;

    let mut jac_minus_i_sq = 0.0;
    for k in 0..d {
        for i in 0..d {
            let v = jac.get(k, i) - if k == i { 1.0 } else { 0.0 };
            jac_minus_i_sq += v * v;
        }
    }
    let jacobian_term = 2.0 * jac_minus_i_sq;

    Ok(HessianTraceDecomposition {
        corrected: residual_term + jacobian_term,
        paper_form: residual_term + 2.0 * jac.frobenius_sq(),
        residual_term,
        jacobian_term,
    })
}

/// Full comparison of the noisy and clean costs against the second-order
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub sigma: f64,
    pub clean_cost: f64,
    pub noisy_cost: f64,
    pub noisy_stderr: f64,
    pub mc_samples: usize,
    /// `Tr(H_L(x_i))` per example (corrected form for squared error,
    /// finite-difference trace otherwise).
    pub per_example_traces: Vec<f64>,
    /// The prediction `sigma^2/(2n) * sum_i Tr(H_L(x_i))`.
    pub trace_term: f64,
    /// Mean over examples of `||J_{g∘f}(x_i)||_F^2`.
    pub reconstruction_jacobian_fro_sq: f64,
    pub trace_corrected_sum: f64,
    /// Sum of the uncorrected per-example traces; only defined for squared
    /// error.
    pub trace_paper_form_sum: Option<f64>,
    /// `noisy_cost - clean_cost`.
    pub gap: f64,
    /// `gap / trace_term`; omitted when the prediction is numerically zero.
    pub ratio: Option<f64>,
}

pub fn taylor_gap(
    ae: &TiedAutoEncoder,
    data: &Dataset,
    loss: LossKind,
    sigma: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<TaylorReport> {
    check(ae, data)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("taylor_gap: sigma must be > 0, got {sigma}")));
    }
    let clean = clean_cost(ae, data, loss)?;
    let (noisy, stderr) = noisy_cost_mc(ae, data, loss, sigma, samples, rng)?;

    let n = data.n();
    let mut traces = Vec::with_capacity(n);
    let mut paper_sum = 0.0;
    let mut jac_fro_sq = 0.0;
    for i in 0..n {
        let x = data.row(i);
        jac_fro_sq += ae.reconstruction_jacobian(x)?.frobenius_sq();
        match loss {
            LossKind::SquaredError => {
                let d = hessian_trace_decomposition(ae, x, loss)?;
                traces.push(d.corrected);
                paper_sum += d.paper_form;
            }
            LossKind::CrossEntropy => {
                let t = finitediff::hessian_trace(
                    |v| reconstruction_loss(v, &ae.reconstruct(v)?, loss),
                    x,
                    finitediff::DEFAULT_HESSIAN_EPS,
                )?;
                traces.push(t);
            }
        }
    }
    let trace_sum: f64 = traces.iter().sum();
    let trace_term = sigma * sigma / (2.0 * n as f64) * trace_sum;
    let gap = noisy - clean;
    let ratio = if trace_term.abs() < 1e-300 { None } else { Some(gap / trace_term) };

    Ok(TaylorReport {
        sigma,
        clean_cost: clean,
        noisy_cost: noisy,
        noisy_stderr: stderr,
        mc_samples: samples,
        per_example_traces: traces,
        trace_term,
        reconstruction_jacobian_fro_sq: jac_fro_sq / n as f64,
        trace_corrected_sum: trace_sum,
        trace_paper_form_sum: if loss == LossKind::SquaredError { Some(paper_sum) } else { None },
        gap,
        ratio,
    })
}

fn check(ae: &TiedAutoEncoder, data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::Dimension("dae-link: empty dataset".into()));
    }
    if data.dim() != ae.d_x() {
        return Err(Error::Dimension(format!(
            "dae-link: data dimension {} vs d_x {}",
            data.dim(),
            ae.d_x()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::{objective_value, Activation, ObjectiveSpec, ObjectiveVariant};

    fn dataset(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = Rng::from_seed(seed);
        Dataset::new(Matrix::from_fn(n, d, |_, _| rng.uniform()), None, "toy").unwrap()
    }

    fn identity_network(d: usize) -> TiedAutoEncoder {
        TiedAutoEncoder::new(
            Matrix::identity(d),
            alloc::vec![0.0; d],
            alloc::vec![0.0; d],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap()
    }

    fn linear_network(seed: u64, d_x: usize, d_h: usize) -> TiedAutoEncoder {
        let mut rng = Rng::from_seed(seed);
        let w = Matrix::from_fn(d_h, d_x, |_, _| rng.uniform_in(-0.8, 0.8));
        TiedAutoEncoder::new(w, alloc::vec![0.0; d_h], alloc::vec![0.0; d_x], Activation::Identity, Activation::Identity)
            .unwrap()
    }

    fn sigmoid_network(seed: u64, d_x: usize, d_h: usize) -> TiedAutoEncoder {
        let mut rng = Rng::from_seed(seed);
        let w = Matrix::from_fn(d_h, d_x, |_, _| rng.uniform_in(-0.9, 0.9));
        let b_h = (0..d_h).map(|_| rng.uniform_in(-0.3, 0.3)).collect();
        let b_y = (0..d_x).map(|_| rng.uniform_in(-0.3, 0.3)).collect();
        TiedAutoEncoder::new(w, b_h, b_y, Activation::Sigmoid, Activation::Sigmoid).unwrap()
    }

    #[test]
    fn clean_cost_of_identity_network_is_zero() {
        let ae = identity_network(4);
        let data = dataset(1, 5, 4);
        assert_eq!(clean_cost(&ae, &data, LossKind::SquaredError).unwrap(), 0.0);
    }

    #[test]
    fn clean_cost_single_example_equals_reconstruction_loss() {
        let ae = sigmoid_network(2, 4, 3);
        let data = dataset(3, 1, 4);
        let x = data.row(0);
        let direct =
            reconstruction_loss(x, &ae.reconstruct(x).unwrap(), LossKind::SquaredError).unwrap();
        assert_eq!(clean_cost(&ae, &data, LossKind::SquaredError).unwrap(), direct);
    }

    #[test]
    fn clean_cost_is_objective_over_n() {
        let ae = sigmoid_network(4, 4, 3);
        let data = dataset(5, 6, 4);
        let full = Matrix::from_fn(6, 4, |r, c| data.features().get(r, c));
        let mut rng = Rng::from_seed(0);
        let summed = objective_value(
            &ae,
            &full,
            &ObjectiveSpec { variant: ObjectiveVariant::Ae, loss: LossKind::SquaredError },
            &mut rng,
        )
        .unwrap();
        let mean = clean_cost(&ae, &data, LossKind::SquaredError).unwrap();
        assert!((mean - summed / 6.0).abs() <= 1e-12 * summed.abs().max(1.0));
    }

    #[test]
    fn noisy_cost_at_sigma_zero_is_clean_bitwise() {
        let ae = sigmoid_network(6, 5, 3);
        let data = dataset(7, 4, 5);
        let clean = clean_cost(&ae, &data, LossKind::SquaredError).unwrap();
        let mut rng = Rng::from_seed(1);
        let (noisy, stderr) =
            noisy_cost_mc(&ae, &data, LossKind::SquaredError, 0.0, 100, &mut rng).unwrap();
        assert_eq!(noisy, clean);
        assert_eq!(stderr, 0.0);
    }

    #[test]
    fn linear_model_matches_closed_form_gaussian_integral() {
        // L(x) = ||(A - I) x||^2 with A = W^T W, so
        // E[L(x + eps)] = L(x) + sigma^2 ||A - I||_F^2.
        let ae = linear_network(8, 4, 3);
        let data = dataset(9, 5, 4);
        let sigma = 0.2;
        let a = ae.w().transpose().matmul(ae.w()).unwrap();
        let mut shift_sq = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let v = a.get(r, c) - if r == c { 1.0 } else { 0.0 };
                shift_sq += v * v;
            }
        }
        let clean = clean_cost(&ae, &data, LossKind::SquaredError).unwrap();
        let expected = clean + sigma * sigma * shift_sq;
        let mut rng = Rng::from_seed(10);
        let (noisy, stderr) =
            noisy_cost_mc(&ae, &data, LossKind::SquaredError, sigma, 20_000, &mut rng).unwrap();
        assert!((noisy - expected).abs() <= 3.0 * stderr, "{noisy} vs {expected} (stderr {stderr})");
    }

    #[test]
    fn stderr_shrinks_like_sqrt_of_samples() {
        let ae = sigmoid_network(11, 4, 3);
        let data = dataset(12, 3, 4);
        let mut r1 = Rng::from_seed(5);
        let mut r2 = Rng::from_seed(6);
        let (_, e1) = noisy_cost_mc(&ae, &data, LossKind::SquaredError, 0.1, 5000, &mut r1).unwrap();
        let (_, e2) = noisy_cost_mc(&ae, &data, LossKind::SquaredError, 0.1, 10_000, &mut r2).unwrap();
        let ratio = e1 / e2;
        assert!((1.30..=1.53).contains(&ratio), "stderr ratio {ratio}");
    }

    #[test]
    fn identity_network_exposes_the_missing_identity_term() {
        let ae = identity_network(5);
        let x = [0.2, 0.4, 0.6, 0.8, 0.1];
        let d = hessian_trace_decomposition(&ae, &x, LossKind::SquaredError).unwrap();
        assert_eq!(d.corrected, 0.0);
        assert_eq!(d.residual_term, 0.0);
        assert_eq!(d.jacobian_term, 0.0);
        assert_eq!(d.paper_form, 2.0 * 5.0);
    }

    #[test]
    fn zero_network_trace_is_twice_the_dimension() {
        let ae = TiedAutoEncoder::new(
            Matrix::zeros(3, 4),
            alloc::vec![0.0; 3],
            alloc::vec![0.0; 4],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        let x = [0.3, 0.5, 0.7, 0.9];
        let d = hessian_trace_decomposition(&ae, &x, LossKind::SquaredError).unwrap();
        assert_eq!(d.residual_term, 0.0);
        assert_eq!(d.corrected, 2.0 * 4.0);
    }

    #[test]
    fn cross_entropy_is_unsupported_in_closed_form() {
        let ae = sigmoid_network(13, 3, 2);
        let r = hessian_trace_decomposition(&ae, &[0.1, 0.5, 0.9], LossKind::CrossEntropy);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn decomposition_matches_finite_difference_trace() {
        for seed in 0..5u64 {
            let ae = sigmoid_network(40 + seed, 4, 3);
            let mut rng = Rng::from_seed(50 + seed);
            let x: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let d = hessian_trace_decomposition(&ae, &x, LossKind::SquaredError).unwrap();
            let fd = finitediff::hessian_trace(
                |v| reconstruction_loss(v, &ae.reconstruct(v)?, LossKind::SquaredError),
                &x,
                finitediff::DEFAULT_HESSIAN_EPS,
            )
            .unwrap();
            let rel = (d.corrected - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-4, "seed {seed}: {} vs {fd} (rel {rel})", d.corrected);
            assert_eq!(d.corrected, d.residual_term + d.jacobian_term);
        }
    }

    #[test]
    fn linear_model_taylor_ratio_is_one() {
        let ae = linear_network(14, 4, 3);
        let data = dataset(15, 4, 4);
        let mut rng = Rng::from_seed(16);
        let report =
            taylor_gap(&ae, &data, LossKind::SquaredError, 0.1, 20_000, &mut rng).unwrap();
        // Quadratic loss: the expansion is exact, only MC noise remains.
        assert!(
            (report.gap - report.trace_term).abs() <= 3.0 * report.noisy_stderr,
            "gap {} vs prediction {} (stderr {})",
            report.gap,
            report.trace_term,
            report.noisy_stderr
        );
        let ratio = report.ratio.unwrap();
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn sigmoid_network_taylor_gap_within_tolerance() {
        let ae = sigmoid_network(17, 5, 3);
        let data = dataset(18, 4, 5);
        let mut rng = Rng::from_seed(19);
        let report =
            taylor_gap(&ae, &data, LossKind::SquaredError, 0.01, 200_000, &mut rng).unwrap();
        let tol = (3.0 * report.noisy_stderr).max(0.05 * report.trace_term.abs());
        assert!(
            (report.gap - report.trace_term).abs() <= tol,
            "gap {} vs prediction {} (tol {tol})",
            report.gap,
            report.trace_term
        );
    }

    #[test]
    fn halving_sigma_quarters_the_gap() {
        let ae = sigmoid_network(20, 4, 3);
        let data = dataset(21, 4, 4);
        // Same seed: both runs use the same unit normals, so the ratio of
        // gaps is tight around 4.
        let mut r1 = Rng::from_seed(22);
        let mut r2 = Rng::from_seed(22);
        let big = taylor_gap(&ae, &data, LossKind::SquaredError, 0.06, 50_000, &mut r1).unwrap();
        let small = taylor_gap(&ae, &data, LossKind::SquaredError, 0.03, 50_000, &mut r2).unwrap();
        let ratio = big.gap / small.gap;
        assert!((3.5..=4.5).contains(&ratio), "gap ratio {ratio}");
        let pred_ratio = big.trace_term / small.trace_term;
        assert!((pred_ratio - 4.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_taylor_uses_finite_difference_traces() {
        let ae = sigmoid_network(23, 4, 3);
        let data = dataset(24, 3, 4);
        let mut rng = Rng::from_seed(25);
        let report =
            taylor_gap(&ae, &data, LossKind::CrossEntropy, 0.02, 100_000, &mut rng).unwrap();
        assert!(report.trace_paper_form_sum.is_none());
        let tol = (3.0 * report.noisy_stderr).max(0.05 * report.trace_term.abs());
        assert!(
            (report.gap - report.trace_term).abs() <= tol,
            "gap {} vs prediction {} (tol {tol})",
            report.gap,
            report.trace_term
        );
    }
}
