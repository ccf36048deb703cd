//! Dataset file reading and writing around the in-memory parsers.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use cae_core::data::{self, Dataset, ImageSet};

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads a big-endian IDX image/label pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path).with_context(|| format!("reading {}", images_path.display()))?;
    let labels = fs::read(labels_path).with_context(|| format!("reading {}", labels_path.display()))?;
    Ok(data::parse_idx(&images, &labels, &stem(images_path))?)
}

/// Loads a whitespace-separated text dataset (last column is the label).
pub fn load_amat(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(data::parse_amat(&text, &stem(path))?)
}

/// Loads a CIFAR-10 binary batch.
pub fn load_cifar(path: &Path) -> Result<(ImageSet, Vec<usize>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(data::parse_cifar(&bytes)?)
}

/// Writes a dataset in amat form (features then label per row; rows without
/// labels get label 0). Plain `{}` float formatting keeps the file
/// byte-stable across runs and value-exact to reload.
pub fn save_amat(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for r in 0..dataset.n() {
        for v in dataset.row(r) {
            out.push_str(&format!("{v} "));
        }
        let label = dataset.labels().map_or(0, |l| l[r]);
        out.push_str(&format!("{label}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
