//! Central finite differences: the independent oracle every analytic gradient
//! and Hessian quantity in this crate is checked against.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Step balancing truncation against round-off for first derivatives.
pub const DEFAULT_GRADIENT_EPS: f64 = 1e-5;
/// Step for second-derivative (Hessian trace) differences.
pub const DEFAULT_HESSIAN_EPS: f64 = 1e-4;

/// Central-difference gradient: `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`
/// per coordinate.
pub fn gradient<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe)?;
        probe[i] = x[i] - eps;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference gradient: f non-finite near coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Central-difference Hessian trace:
/// `sum_i (f(x + eps e_i) - 2 f(x) + f(x - eps e_i)) / eps^2`.
pub fn hessian_trace<F>(f: F, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let center = f(x)?;
    if !center.is_finite() {
        return Err(Error::NonFinite("finite-difference hessian trace: f(x) non-finite".into()));
    }
    let mut probe = x.to_vec();
    let mut trace = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe)?;
        probe[i] = x[i] - eps;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference hessian trace: f non-finite near coordinate {i}"
            )));
        }
        trace += (plus - 2.0 * center + minus) / (eps * eps);
    }
    Ok(trace)
}
