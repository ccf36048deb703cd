//! Contraction measurements: average Jacobian norm, saturation fraction,
//! averaged singular-value spectra and contraction curves.
//!
//! Sampling is index-addressed: the base point for slot `p` and the direction
//! for `(p, k)` are pure functions of the config seed, shared across radii.
//! Per-radius results are therefore independent work items, and any runner
//! (sequential or threaded) that reduces them in index order reproduces the
//! exact same bits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix;
use crate::model::FeatureMap;
use crate::rng::Rng;
use crate::svd;

/// A hidden unit counts as saturated when its activation is strictly below
/// this...
pub const SATURATION_LOW: f64 = 0.05;
/// ...or strictly above this.
pub const SATURATION_HIGH: f64 = 0.95;

const STREAM_POINTS: u64 = 1;
const STREAM_DIRECTIONS: u64 = 2;
const STREAM_MEDIAN: u64 = 3;

/// Mean over examples of the (non-squared) Frobenius norm of the Jacobian.
pub fn average_jacobian_norm<F: FeatureMap + ?Sized>(f: &F, data: &Dataset) -> Result<f64> {
    check_data(f, data)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        total += libm::sqrt(f.jacobian_frobenius_sq(data.row(i))?);
    }
    Ok(total / data.n() as f64)
}

/// Mean over examples of the fraction of output units with activation below
/// [`SATURATION_LOW`] or above [`SATURATION_HIGH`] (both strict).
pub fn saturation_fraction<F: FeatureMap + ?Sized>(f: &F, data: &Dataset) -> Result<f64> {
    check_data(f, data)?;
    let d_h = f.output_dim() as f64;
    let mut total = 0.0;
    for i in 0..data.n() {
        let h = f.map(data.row(i))?;
        let saturated = h.iter().filter(|&&v| v < SATURATION_LOW || v > SATURATION_HIGH).count();
        total += saturated as f64 / d_h;
    }
    Ok(total / data.n() as f64)
}

/// Per-example descending singular values averaged position-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub mean_singular_values: Vec<f64>,
}

/// Singular values of the Jacobian at one example, descending.
pub fn example_singular_values<F: FeatureMap + ?Sized>(f: &F, x: &[f64]) -> Result<Vec<f64>> {
    svd::svd_values(&f.jacobian(x)?)
}

/// Position-wise mean of per-example spectra, in example order.
pub fn spectrum_from_rows(rows: &[Vec<f64>]) -> Result<SpectrumReport> {
    let first = rows.first().ok_or_else(|| Error::Dimension("spectrum: no examples".into()))?;
    let mut acc = vec![0.0; first.len()];
    for row in rows {
        if row.len() != acc.len() {
            return Err(Error::Dimension("spectrum: inconsistent spectrum lengths".into()));
        }
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(SpectrumReport { mean_singular_values: acc })
}

pub fn jacobian_spectrum<F: FeatureMap + ?Sized>(f: &F, data: &Dataset) -> Result<SpectrumReport> {
    check_data(f, data)?;
    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        rows.push(example_singular_values(f, data.row(i))?);
    }
    spectrum_from_rows(&rows)
}

/// Uniform draw on the sphere of radius `r` around `x0` (normalized Gaussian;
/// the measure-zero zero draw is redrawn).
pub fn sample_on_sphere(x0: &[f64], r: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("sphere radius must be > 0, got {r}")));
    }
    let u = unit_direction(x0.len(), rng);
    Ok(x0.iter().zip(&u).map(|(x, d)| x + r * d).collect())
}

fn unit_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = matrix::norm(&g);
        if n > 0.0 {
            return g.iter().map(|v| v / n).collect();
        }
    }
}

/// Feature-space distance over input-space distance for a pair of points.
/// In the infinitesimal limit this is the directional derivative norm
/// `||J_f(x0) u||`.
pub fn contraction_ratio<F: FeatureMap + ?Sized>(f: &F, x0: &[f64], x1: &[f64]) -> Result<f64> {
    if x0 == x1 {
        return Err(Error::InvalidArgument("contraction_ratio: x0 == x1".into()));
    }
    let input_dist = matrix::euclidean_distance(x0, x1);
    let feature_dist = matrix::euclidean_distance(&f.map(x0)?, &f.map(x1)?);
    Ok(feature_dist / input_dist)
}

#[derive(Debug, Clone)]
pub struct ContractionConfig {
    /// Strictly ascending sphere radii, all positive.
    pub radii: Vec<f64>,
    pub points_per_radius: usize,
    pub directions_per_point: usize,
    pub seed: u64,
}

impl ContractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("contraction: no radii".into()));
        }
        let mut prev = 0.0;
        for &r in &self.radii {
            if !(r > prev) || !r.is_finite() {
                return Err(Error::InvalidArgument(
                    "contraction: radii must be strictly ascending and positive".into(),
                ));
            }
            prev = r;
        }
        if self.points_per_radius == 0 || self.directions_per_point == 0 {
            return Err(Error::InvalidArgument("contraction: need points and directions".into()));
        }
        Ok(())
    }

    /// Default battery: 20 log-spaced radii spanning `[0.01, 2] x` the median
    /// pairwise distance of `data`, 100 base points, 10 directions each.
    pub fn defaults_for(data: &Dataset, seed: u64) -> Result<Self> {
        let median = median_pairwise_distance(data, 2000, seed)?;
        if !(median > 0.0) {
            return Err(Error::InvalidArgument(
                "contraction defaults: data has zero median pairwise distance".into(),
            ));
        }
        Ok(ContractionConfig {
            radii: log_spaced(0.01 * median, 2.0 * median, 20),
            points_per_radius: 100,
            directions_per_point: 10,
            seed,
        })
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    debug_assert!(lo > 0.0 && hi > lo && count >= 2);
    let (ln_lo, ln_hi) = (libm::log(lo), libm::log(hi));
    (0..count)
        .map(|i| libm::exp(ln_lo + (ln_hi - ln_lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Median distance between dataset rows; all pairs when few, a seeded sample
/// of `max_pairs` otherwise.
pub fn median_pairwise_distance(data: &Dataset, max_pairs: usize, seed: u64) -> Result<f64> {
    if data.n() < 2 {
        return Err(Error::Dimension("median distance: need at least 2 examples".into()));
    }
    let n = data.n();
    let total = n * (n - 1) / 2;
    let mut dists: Vec<f64> = Vec::new();
    if total <= max_pairs {
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(matrix::euclidean_distance(data.row(i), data.row(j)));
            }
        }
    } else {
        let mut rng = Rng::substream(seed, &[STREAM_MEDIAN]);
        while dists.len() < max_pairs {
            let i = rng.index(n);
            let j = rng.index(n);
            if i != j {
                dists.push(matrix::euclidean_distance(data.row(i), data.row(j)));
            }
        }
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    Ok(if dists.len() % 2 == 1 { dists[mid] } else { 0.5 * (dists[mid - 1] + dists[mid]) })
}

/// Base-point row for sampling slot `p`: a pure function of the seed, shared
/// by every radius (and by the threaded runner in the companion crate).
pub fn base_point_row(seed: u64, n_examples: usize, p_slot: usize) -> usize {
    let mut rng = Rng::substream(seed, &[STREAM_POINTS, p_slot as u64]);
    rng.index(n_examples)
}

/// Unit direction for sampling slot `(p, k)`, also a pure function of the
/// seed and shared across radii.
pub fn sample_direction(seed: u64, p_slot: usize, k_slot: usize, dim: usize) -> Vec<f64> {
    let mut rng = Rng::substream(seed, &[STREAM_DIRECTIONS, p_slot as u64, k_slot as u64]);
    unit_direction(dim, &mut rng)
}

/// All contraction ratios for one radius, in `(p, k)` slot order.
pub fn ratios_for_radius<F: FeatureMap + ?Sized>(
    f: &F,
    data: &Dataset,
    cfg: &ContractionConfig,
    radius: f64,
) -> Result<Vec<f64>> {
    let dim = data.dim();
    let mut ratios = Vec::with_capacity(cfg.points_per_radius * cfg.directions_per_point);
    for p in 0..cfg.points_per_radius {
        let x0 = data.row(base_point_row(cfg.seed, data.n(), p));
        for k in 0..cfg.directions_per_point {
            let u = sample_direction(cfg.seed, p, k, dim);
            let x1: Vec<f64> = x0.iter().zip(&u).map(|(x, d)| x + radius * d).collect();
            ratios.push(contraction_ratio(f, x0, &x1)?);
        }
    }
    Ok(ratios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusStat {
    pub radius: f64,
    pub mean_ratio: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean/std (sample standard deviation) of the ratios at one radius.
pub fn radius_stats(radius: f64, ratios: &[f64]) -> RadiusStat {
    let n = ratios.len();
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = ratios.iter().map(|r| (r - mean) * (r - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    RadiusStat { radius, mean_ratio: mean, std, n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub rows: Vec<RadiusStat>,
}

/// Mean contraction ratio as a function of the sphere radius. Deterministic
/// given the seed, regardless of how the per-radius work is scheduled.
pub fn contraction_curve<F: FeatureMap + ?Sized>(
    f: &F,
    data: &Dataset,
    cfg: &ContractionConfig,
) -> Result<ContractionReport> {
    cfg.validate()?;
    check_data(f, data)?;
    let mut rows = Vec::with_capacity(cfg.radii.len());
    for &radius in &cfg.radii {
        let ratios = ratios_for_radius(f, data, cfg, radius)?;
        rows.push(radius_stats(radius, &ratios));
    }
    Ok(ContractionReport { rows })
}

/// Mean of `||J_f(x0) u||` over the exact points and directions the
/// contraction curve samples: the analytic `r -> 0` limit of the curve.
pub fn directional_derivative_average<F: FeatureMap + ?Sized>(
    f: &F,
    data: &Dataset,
    cfg: &ContractionConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_data(f, data)?;
    let dim = data.dim();
    let mut total = 0.0;
    for p in 0..cfg.points_per_radius {
        let x0 = data.row(base_point_row(cfg.seed, data.n(), p));
        let j = f.jacobian(x0)?;
        for k in 0..cfg.directions_per_point {
            let u = sample_direction(cfg.seed, p, k, dim);
            total += matrix::norm(&j.matvec(&u)?);
        }
    }
    Ok(total / (cfg.points_per_radius * cfg.directions_per_point) as f64)
}

fn check_data<F: FeatureMap + ?Sized>(f: &F, data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::Dimension("analysis: empty dataset".into()));
    }
    if data.dim() != f.input_dim() {
        return Err(Error::Dimension(format!(
            "analysis: data dimension {} vs map input {}",
            data.dim(),
            f.input_dim()
        )));
    }
    Ok(())
}
