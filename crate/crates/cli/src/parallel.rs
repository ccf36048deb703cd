//! Threaded analysis runners. The core samples every work item from a pure
//! function of (seed, index), so these runners only distribute independent
//! items across scoped threads and reduce the slots in index order - the
//! output is bit-identical to the sequential path for any thread count.

use anyhow::{anyhow, Result};

use cae_core::analysis::{
    self, ContractionConfig, ContractionReport, SpectrumReport,
};
use cae_core::data::Dataset;
use cae_core::model::FeatureMap;

/// Runs `work(i)` for `i in 0..count` on up to `threads` scoped threads,
/// collecting results by index.
fn map_indexed<T, F>(count: usize, threads: usize, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.max(1).min(count.max(1));
    if threads <= 1 {
        return (0..count).map(&work).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slice) in slots.chunks_mut(chunk).enumerate() {
            let work = &work;
            scope.spawn(move || {
                for (offset, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(work(t * chunk + offset));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.ok_or_else(|| anyhow!("worker dropped a slot"))?)
        .collect()
}

/// Contraction curve with radius-level parallelism.
pub fn contraction_curve_threaded<F>(
    f: &F,
    data: &Dataset,
    cfg: &ContractionConfig,
    threads: usize,
) -> Result<ContractionReport>
where
    F: FeatureMap + Sync + ?Sized,
{
    cfg.validate()?;
    let rows = map_indexed(cfg.radii.len(), threads, |i| {
        let radius = cfg.radii[i];
        let ratios = analysis::ratios_for_radius(f, data, cfg, radius)?;
        Ok(analysis::radius_stats(radius, &ratios))
    })?;
    Ok(ContractionReport { rows })
}

/// Jacobian spectrum with example-level parallelism.
pub fn jacobian_spectrum_threaded<F>(
    f: &F,
    data: &Dataset,
    threads: usize,
) -> Result<SpectrumReport>
where
    F: FeatureMap + Sync + ?Sized,
{
    let rows = map_indexed(data.n(), threads, |i| {
        Ok(analysis::example_singular_values(f, data.row(i))?)
    })?;
    Ok(analysis::spectrum_from_rows(&rows)?)
}
