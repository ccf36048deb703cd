//! Datasets: IDX and amat parsing, the synthetic rectangle task, image patch
//! preprocessing (contrast normalization, PCA, whitening) and dataset-wide
//! encoding.
//!
//! Parsers work on in-memory bytes/text so they stay `no_std`; the companion
//! crate does the file reading. Every parser returns a structured error on
//! malformed input - fuzzed junk must never panic or produce non-finite
//! features.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, ParseLocation, Result};
use crate::matrix::Matrix;
use crate::model::{sigmoid, FeatureMap};
use crate::rng::Rng;
use crate::svd;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Feature matrix (rows are examples) plus optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    name: String,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Dimension("dataset: empty feature matrix".into()));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("dataset: non-finite feature".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Dimension(format!(
                    "dataset: {} examples but {} labels",
                    features.rows(),
                    l.len()
                )));
            }
        }
        Ok(Dataset { features, labels, name: name.into() })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Number of classes implied by the labels (`max + 1`).
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn in_unit_range(&self) -> bool {
        self.features.data().iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// New dataset from the given row indices (rows are copied in order).
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Dataset> {
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidArgument(format!("subset: index {i} out of {}", self.n())));
            }
        }
        let features =
            Matrix::from_fn(indices.len(), self.dim(), |r, c| self.features.get(indices[r], c));
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset::new(features, labels, name)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    if bytes.len() < offset + 4 {
        return Err(Error::parse(
            ParseLocation::Offset(bytes.len()),
            format!("truncated while reading {what} (need 4 bytes at offset {offset})"),
        ));
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parses a big-endian IDX image/label pair (MNIST layout). Pixels are scaled
/// by 1/255 into `[0, 1]`, images flattened row-major.
pub fn parse_idx(images: &[u8], labels: &[u8], name: &str) -> Result<Dataset> {
    let magic = read_u32_be(images, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::parse(
            ParseLocation::Offset(0),
            format!("bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = read_u32_be(images, 4, "image count")? as usize;
    let rows = read_u32_be(images, 8, "row count")? as usize;
    let cols = read_u32_be(images, 12, "column count")? as usize;
    if n == 0 {
        return Err(Error::parse(ParseLocation::Offset(4), "image count is zero"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::parse(ParseLocation::Offset(8), "zero image dimensions"));
    }
    let pixel_count = (n as u64)
        .checked_mul(rows as u64)
        .and_then(|v| v.checked_mul(cols as u64))
        .ok_or_else(|| Error::parse(ParseLocation::Offset(4), "image sizes overflow"))?;
    let expected = 16u64 + pixel_count;
    if (images.len() as u64) < expected {
        return Err(Error::parse(
            ParseLocation::Offset(images.len()),
            format!("truncated image data: need {expected} bytes, have {}", images.len()),
        ));
    }
    if images.len() as u64 > expected {
        return Err(Error::parse(
            ParseLocation::Offset(expected as usize),
            format!("trailing bytes after image data (expected {expected} total)"),
        ));
    }

    let lmagic = read_u32_be(labels, 0, "label magic")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::parse(
            ParseLocation::Offset(0),
            format!("bad label magic {lmagic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_u32_be(labels, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::parse(
            ParseLocation::Offset(4),
            format!("{n} images but {n_labels} labels"),
        ));
    }
    let lexpected = 8 + n_labels;
    if labels.len() != lexpected {
        return Err(Error::parse(
            ParseLocation::Offset(labels.len().min(lexpected)),
            format!("label data has {} bytes, expected {lexpected}", labels.len()),
        ));
    }

    let d = rows * cols;
    let mut data = Vec::with_capacity(n * d);
    for &b in &images[16..] {
        data.push(b as f64 / 255.0);
    }
    let features = Matrix::from_vec(n, d, data)?;
    let label_vec: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    Dataset::new(features, Some(label_vec), name)
}

/// Parses whitespace-separated text rows: all columns but the last are
/// features (clamped into `[0, 1]`), the last column is the label rounded to
/// an integer.
pub fn parse_amat(text: &str, name: &str) -> Result<Dataset> {
    let mut width = 0usize;
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut rows = 0usize;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row: Vec<f64> = Vec::with_capacity(width.max(2));
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(ParseLocation::Line(line_no), format!("non-numeric token '{tok}'"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    ParseLocation::Line(line_no),
                    format!("non-finite value '{tok}'"),
                ));
            }
            row.push(v);
        }
        if rows == 0 {
            width = row.len();
            if width < 2 {
                return Err(Error::parse(
                    ParseLocation::Line(line_no),
                    "need at least one feature column and one label column",
                ));
            }
        } else if row.len() != width {
            return Err(Error::parse(
                ParseLocation::Line(line_no),
                format!("ragged row: {} columns, expected {width}", row.len()),
            ));
        }
        let label_raw = libm::round(row[width - 1]);
        if label_raw < 0.0 {
            return Err(Error::parse(
                ParseLocation::Line(line_no),
                format!("negative label {}", row[width - 1]),
            ));
        }
        labels.push(label_raw as usize);
        values.extend(row[..width - 1].iter().map(|v| v.clamp(0.0, 1.0)));
        rows += 1;
    }

    if rows == 0 {
        return Err(Error::parse(ParseLocation::End, "empty dataset"));
    }
    let features = Matrix::from_vec(rows, width - 1, values)?;
    Dataset::new(features, Some(labels), name)
}

/// Tall-vs-wide rectangle discrimination task: black background, one filled
/// white rectangle with independently uniform sides in `[side/8, side-2]`
/// (squares rejected), placed uniformly. Label 1 iff height > width.
pub fn gen_rect(n: usize, side: usize, seed: u64) -> Result<Dataset> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!("gen_rect: side must be >= 8, got {side}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("gen_rect: n must be >= 1".into()));
    }
    let mut rng = Rng::from_seed(seed);
    let lo = side / 8;
    let hi = side - 2;
    let mut features = Matrix::zeros(n, side * side);
    let mut labels = Vec::with_capacity(n);
    for img in 0..n {
        let (h, w) = loop {
            let h = rng.range_inclusive(lo, hi);
            let w = rng.range_inclusive(lo, hi);
            if h != w {
                break (h, w);
            }
        };
        let top = rng.range_inclusive(0, side - h);
        let left = rng.range_inclusive(0, side - w);
        let row = features.row_mut(img);
        for y in top..top + h {
            for x in left..left + w {
                row[y * side + x] = 1.0;
            }
        }
        labels.push(usize::from(h > w));
    }
    Dataset::new(features, Some(labels), "rect")
}

/// Maps every row of `data` through the feature map; labels carry over.
pub fn encode_dataset<F: FeatureMap + ?Sized>(f: &F, data: &Dataset) -> Result<Dataset> {
    if data.dim() != f.input_dim() {
        return Err(Error::Dimension(format!(
            "encode_dataset: data dimension {} vs map input {}",
            data.dim(),
            f.input_dim()
        )));
    }
    let mut out = Matrix::zeros(data.n(), f.output_dim());
    for r in 0..data.n() {
        let mapped = f.map(data.row(r))?;
        out.row_mut(r).copy_from_slice(&mapped);
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("encode_dataset: feature map produced non-finite values".into()));
    }
    Dataset::new(out, data.labels().map(|l| l.to_vec()), format!("{}:enc", data.name()))
}

/// Raw image collection in `[0, 1]`, stored per image as channel planes
/// (CIFAR layout), each plane row-major.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl ImageSet {
    #[inline]
    fn pixel(&self, img: usize, channel: usize, y: usize, x: usize) -> f64 {
        let plane = self.height * self.width;
        self.pixels[((img * self.channels + channel) * plane) + y * self.width + x]
    }
}

/// Parses CIFAR-10 binary records (1 label byte + 3072 channel-planar RGB
/// bytes per record).
pub fn parse_cifar(bytes: &[u8]) -> Result<(ImageSet, Vec<usize>)> {
    const RECORD: usize = 1 + 3 * 32 * 32;
    if bytes.is_empty() {
        return Err(Error::parse(ParseLocation::End, "empty CIFAR file"));
    }
    if bytes.len() % RECORD != 0 {
        let whole = bytes.len() / RECORD;
        return Err(Error::parse(
            ParseLocation::Offset(whole * RECORD),
            format!("CIFAR file length {} is not a multiple of {RECORD}", bytes.len()),
        ));
    }
    let n = bytes.len() / RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * 3072);
    for rec in 0..n {
        let base = rec * RECORD;
        let label = bytes[base] as usize;
        if label > 9 {
            return Err(Error::parse(
                ParseLocation::Offset(base),
                format!("CIFAR label {label} out of range"),
            ));
        }
        labels.push(label);
        for &b in &bytes[base + 1..base + RECORD] {
            pixels.push(b as f64 / 255.0);
        }
    }
    Ok((ImageSet { n, height: 32, width: 32, channels: 3, pixels }, labels))
}

/// RGB to gray with weights 0.3 / 0.59 / 0.11.
pub fn to_grayscale(images: &ImageSet) -> Result<ImageSet> {
    if images.channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "to_grayscale: need 3 channels, got {}",
            images.channels
        )));
    }
    let plane = images.height * images.width;
    let mut pixels = Vec::with_capacity(images.n * plane);
    for img in 0..images.n {
        for y in 0..images.height {
            for x in 0..images.width {
                let v = 0.3 * images.pixel(img, 0, y, x)
                    + 0.59 * images.pixel(img, 1, y, x)
                    + 0.11 * images.pixel(img, 2, y, x);
                pixels.push(v);
            }
        }
    }
    Ok(ImageSet { n: images.n, height: images.height, width: images.width, channels: 1, pixels })
}

/// How whitening divides the projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhitenMode {
    /// Divide by `sqrt(eigenvalue + eps)`: projected components come out with
    /// unit variance. The default.
    SqrtEigenvalue,
    /// Divide by `eigenvalue + eps` (the literal reading of "divide by the
    /// eigen values"), kept for comparison.
    Eigenvalue,
}

#[derive(Debug, Clone)]
pub struct PatchPipelineConfig {
    pub patch_size: usize,
    pub patch_count: usize,
    pub source_images: usize,
    pub drop_components: usize,
    pub keep_components: usize,
    pub epsilon: f64,
    pub whiten: WhitenMode,
}

impl Default for PatchPipelineConfig {
    fn default() -> Self {
        PatchPipelineConfig {
            patch_size: 8,
            patch_count: 160_000,
            source_images: 10_000,
            drop_components: 2,
            keep_components: 80,
            epsilon: 1e-8,
            whiten: WhitenMode::SqrtEigenvalue,
        }
    }
}

/// Fitted patch transform: per-patch contrast normalization, then centering,
/// PCA projection, whitening and a logistic squash into `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTransform {
    pub mean: Vec<f64>,
    /// `keep x d` matrix; row k is the k-th kept principal direction.
    pub components: Matrix,
    /// Eigenvalues matching the kept components, descending.
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
    pub whiten: WhitenMode,
}

impl PatchTransform {
    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// Applies the fitted transform to one raw patch.
    pub fn apply(&self, raw_patch: &[f64]) -> Result<Vec<f64>> {
        if raw_patch.len() != self.components.cols() {
            return Err(Error::Dimension(format!(
                "patch transform: patch has {} values, expected {}",
                raw_patch.len(),
                self.components.cols()
            )));
        }
        let mut patch = raw_patch.to_vec();
        contrast_normalize(&mut patch, self.epsilon);
        for (p, m) in patch.iter_mut().zip(&self.mean) {
            *p -= m;
        }
        let mut projected = self.components.matvec(&patch)?;
        for (v, &lambda) in projected.iter_mut().zip(&self.eigenvalues) {
            let lam = lambda.max(0.0);
            let denom = match self.whiten {
                WhitenMode::SqrtEigenvalue => libm::sqrt(lam + self.epsilon),
                WhitenMode::Eigenvalue => lam + self.epsilon,
            };
            *v = sigmoid(*v / denom);
        }
        Ok(projected)
    }
}

/// Subtract the patch's own mean and divide by its own standard deviation
/// (plus `eps`); a constant patch becomes all zeros.
fn contrast_normalize(patch: &mut [f64], eps: f64) {
    let d = patch.len() as f64;
    let mean: f64 = patch.iter().sum::<f64>() / d;
    let var: f64 = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let denom = libm::sqrt(var) + eps;
    for v in patch.iter_mut() {
        *v = (*v - mean) / denom;
    }
}

/// Extracts random patches, contrast-normalizes them, fits PCA, drops the
/// leading components, keeps the next block, whitens, squashes, and returns
/// the transformed patch set together with the reusable fitted transform.
pub fn cifar_patch_pipeline(
    images: &ImageSet,
    cfg: &PatchPipelineConfig,
    rng: &mut Rng,
) -> Result<(Dataset, PatchTransform)> {
    let d = cfg.patch_size * cfg.patch_size * images.channels;
    if cfg.patch_size == 0 || cfg.patch_size > images.height || cfg.patch_size > images.width {
        return Err(Error::InvalidArgument(format!(
            "patch size {} does not fit {}x{} images",
            cfg.patch_size, images.height, images.width
        )));
    }
    if cfg.patch_count < 2 {
        return Err(Error::InvalidArgument("patch_count must be >= 2".into()));
    }
    if cfg.keep_components == 0 || cfg.drop_components + cfg.keep_components > d {
        return Err(Error::InvalidArgument(format!(
            "cannot drop {} and keep {} of {d} components",
            cfg.drop_components, cfg.keep_components
        )));
    }
    if images.n == 0 {
        return Err(Error::Dimension("patch pipeline: no source images".into()));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be > 0".into()));
    }
    let source = cfg.source_images.min(images.n);

    // Raw patches, then their contrast-normalized copies for fitting.
    let mut raw = Matrix::zeros(cfg.patch_count, d);
    for p in 0..cfg.patch_count {
        let img = rng.index(source);
        let y = rng.index(images.height - cfg.patch_size + 1);
        let x = rng.index(images.width - cfg.patch_size + 1);
        let row = raw.row_mut(p);
        let mut k = 0;
        for c in 0..images.channels {
            for py in 0..cfg.patch_size {
                for px in 0..cfg.patch_size {
                    row[k] = images.pixel(img, c, y + py, x + px);
                    k += 1;
                }
            }
        }
    }

    let mut normalized = raw.clone();
    for p in 0..cfg.patch_count {
        contrast_normalize(normalized.row_mut(p), cfg.epsilon);
    }

    let n = cfg.patch_count as f64;
    let mut mean = vec![0.0; d];
    for p in 0..cfg.patch_count {
        for (m, v) in mean.iter_mut().zip(normalized.row(p)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for p in 0..cfg.patch_count {
        for (c, (v, m)) in centered.iter_mut().zip(normalized.row(p).iter().zip(&mean)) {
            *c = v - m;
        }
        cov.add_outer_scaled(&centered, &centered, 1.0 / n)?;
    }

    let (eigenvalues, eigenvectors) = svd::symmetric_eigen(&cov)?;
    let kept = cfg.drop_components..cfg.drop_components + cfg.keep_components;
    let components =
        Matrix::from_fn(cfg.keep_components, d, |r, c| eigenvectors.get(c, kept.start + r));
    let transform = PatchTransform {
        mean,
        components,
        eigenvalues: eigenvalues[kept].to_vec(),
        epsilon: cfg.epsilon,
        whiten: cfg.whiten,
    };

    let mut features = Matrix::zeros(cfg.patch_count, cfg.keep_components);
    for p in 0..cfg.patch_count {
        let out = transform.apply(raw.row(p))?;
        features.row_mut(p).copy_from_slice(&out);
    }
    let dataset = Dataset::new(features, None, "patches")?;
    Ok((dataset, transform))
}

/// Hand-constructed two-image IDX pair with known values at known positions,
/// used to pin the parser down to the byte level.
pub fn idx_fixture_bytes() -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + 2 * 784);
    images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    // image 0: black except the first pixel
    images.push(255);
    images.extend(core::iter::repeat(0).take(783));
    // image 1: white except the last pixel
    images.extend(core::iter::repeat(255).take(783));
    images.push(0);

    let mut labels = Vec::with_capacity(8 + 2);
    labels.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&2u32.to_be_bytes());
    labels.extend_from_slice(&[3, 7]);
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_fixture_round_trip() {
        let (images, labels) = idx_fixture_bytes();
        let ds = parse_idx(&images, &labels, "fixture").unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 784);
        assert_eq!(ds.row(0)[0], 1.0);
        assert_eq!(ds.row(0)[1], 0.0);
        assert_eq!(ds.row(0)[783], 0.0);
        assert_eq!(ds.row(1)[0], 1.0);
        assert_eq!(ds.row(1)[783], 0.0);
        assert_eq!(ds.labels().unwrap(), &[3, 7]);
        assert!(ds.in_unit_range());
    }

    #[test]
    fn idx_count_mismatch_is_an_error() {
        let (images, mut labels) = idx_fixture_bytes();
        labels[7] = 3; // claim 3 labels
        assert!(matches!(parse_idx(&images, &labels, "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn idx_bad_magic_names_offset_zero() {
        let (mut images, labels) = idx_fixture_bytes();
        images[3] = 0x99;
        match parse_idx(&images, &labels, "x") {
            Err(Error::Parse { at, .. }) => assert_eq!(at, ParseLocation::Offset(0)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn idx_truncation_names_offset() {
        let (images, labels) = idx_fixture_bytes();
        let cut = &images[..200];
        match parse_idx(cut, &labels, "x") {
            Err(Error::Parse { at: ParseLocation::Offset(o), .. }) => assert_eq!(o, 200),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn idx_all_zero_image_loads_as_zero_row() {
        let mut images = Vec::new();
        images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        images.extend_from_slice(&1u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 0, 0, 0]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(0);
        let ds = parse_idx(&images, &labels, "zero").unwrap();
        assert_eq!(ds.row(0), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn amat_single_row() {
        let ds = parse_amat("0.0 1.0 0.5 3\n", "t").unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.5]);
        assert_eq!(ds.labels().unwrap(), &[3]);
    }

    #[test]
    fn amat_empty_file_is_an_error() {
        assert!(matches!(parse_amat("", "t"), Err(Error::Parse { at: ParseLocation::End, .. })));
    }

    #[test]
    fn amat_ragged_row_names_line_two() {
        match parse_amat("0.1 0.2 1\n0.1 0.2\n", "t") {
            Err(Error::Parse { at, .. }) => assert_eq!(at, ParseLocation::Line(2)),
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn amat_rejects_non_numeric_and_non_finite() {
        assert!(parse_amat("0.1 oops 1\n", "t").is_err());
        assert!(parse_amat("0.1 nan 1\n", "t").is_err());
        assert!(parse_amat("inf 0.2 1\n", "t").is_err());
    }

    #[test]
    fn amat_clamps_features() {
        let ds = parse_amat("-0.5 1.5 0\n", "t").unwrap();
        assert_eq!(ds.row(0), &[0.0, 1.0]);
        assert!(ds.in_unit_range());
    }

    #[test]
    fn rect_values_are_binary_and_label_rule_holds() {
        let ds = gen_rect(64, 16, 7).unwrap();
        assert!(ds.features().data().iter().all(|&v| v == 0.0 || v == 1.0));
        let labels = ds.labels().unwrap();
        for (i, &label) in labels.iter().enumerate() {
            // recover the bounding box and check the rule
            let row = ds.row(i);
            let mut min_y = 16;
            let mut max_y = 0;
            let mut min_x = 16;
            let mut max_x = 0;
            for y in 0..16 {
                for x in 0..16 {
                    if row[y * 16 + x] == 1.0 {
                        min_y = min_y.min(y);
                        max_y = max_y.max(y);
                        min_x = min_x.min(x);
                        max_x = max_x.max(x);
                    }
                }
            }
            let h = max_y + 1 - min_y;
            let w = max_x + 1 - min_x;
            assert_ne!(h, w);
            assert_eq!(label, usize::from(h > w));
        }
    }

    #[test]
    fn rect_is_deterministic_and_balanced() {
        let a = gen_rect(200, 16, 5).unwrap();
        let b = gen_rect(200, 16, 5).unwrap();
        assert_eq!(a, b);
        let n = 10_000;
        let big = gen_rect(n, 16, 11).unwrap();
        let ones = big.labels().unwrap().iter().filter(|&&l| l == 1).count() as f64;
        let mean = ones / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "label mean {mean}");
    }

    #[test]
    fn rect_requires_side_of_at_least_8() {
        assert!(matches!(gen_rect(10, 7, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn encode_dataset_matches_per_example_encode() {
        use crate::model::{Activation, TiedAutoEncoder};
        let mut rng = Rng::from_seed(2);
        let ae = TiedAutoEncoder::random(4, 3, Activation::Sigmoid, Activation::Sigmoid, &mut rng);
        let data = Dataset::new(
            Matrix::from_fn(5, 4, |_, _| rng.uniform()),
            Some(vec![0, 1, 2, 1, 0]),
            "toy",
        )
        .unwrap();
        let enc = encode_dataset(&ae, &data).unwrap();
        assert_eq!(enc.dim(), 3);
        assert_eq!(enc.labels(), data.labels());
        for r in 0..data.n() {
            assert_eq!(enc.row(r), ae.encode(data.row(r)).unwrap().as_slice());
        }
    }

    #[test]
    fn encode_dataset_zero_weight_sigmoid_gives_halves() {
        use crate::model::{Activation, TiedAutoEncoder};
        let ae = TiedAutoEncoder::new(
            Matrix::zeros(2, 3),
            vec![0.0; 2],
            vec![0.0; 3],
            Activation::Sigmoid,
            Activation::Sigmoid,
        )
        .unwrap();
        let data =
            Dataset::new(Matrix::from_fn(3, 3, |r, c| ((r + c) % 2) as f64), None, "toy").unwrap();
        let enc = encode_dataset(&ae, &data).unwrap();
        assert!(enc.features().data().iter().all(|&v| v == 0.5));
    }

    fn tiny_images(seed: u64, n: usize) -> ImageSet {
        let mut rng = Rng::from_seed(seed);
        let pixels = (0..n * 12 * 12).map(|_| rng.uniform()).collect();
        ImageSet { n, height: 12, width: 12, channels: 1, pixels }
    }

    #[test]
    fn constant_patch_normalizes_to_zero() {
        let mut patch = vec![0.42; 9];
        contrast_normalize(&mut patch, 1e-8);
        assert!(patch.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_output_dimension_is_keep_components() {
        let images = tiny_images(3, 40);
        let cfg = PatchPipelineConfig {
            patch_size: 4,
            patch_count: 500,
            source_images: 40,
            drop_components: 2,
            keep_components: 10,
            epsilon: 1e-8,
            whiten: WhitenMode::SqrtEigenvalue,
        };
        let mut rng = Rng::from_seed(9);
        let (ds, tf) = cifar_patch_pipeline(&images, &cfg, &mut rng).unwrap();
        assert_eq!(ds.dim(), 10);
        assert_eq!(tf.output_dim(), 10);
        assert!(ds.features().data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn whitened_projections_have_unit_variance() {
        let images = tiny_images(8, 60);
        let cfg = PatchPipelineConfig {
            patch_size: 4,
            patch_count: 3000,
            source_images: 60,
            drop_components: 1,
            keep_components: 8,
            epsilon: 1e-8,
            whiten: WhitenMode::SqrtEigenvalue,
        };
        let mut rng = Rng::from_seed(10);
        let (_, tf) = cifar_patch_pipeline(&images, &cfg, &mut rng).unwrap();

        // Recreate the patch draw to measure pre-logistic variance.
        let mut rng2 = Rng::from_seed(10);
        let mut sums = vec![0.0; 8];
        let mut sq = vec![0.0; 8];
        for _ in 0..cfg.patch_count {
            let img = rng2.index(60);
            let y = rng2.index(12 - 4 + 1);
            let x = rng2.index(12 - 4 + 1);
            let mut patch = Vec::with_capacity(16);
            for py in 0..4 {
                for px in 0..4 {
                    patch.push(images.pixel(img, 0, y + py, x + px));
                }
            }
            contrast_normalize(&mut patch, tf.epsilon);
            for (p, m) in patch.iter_mut().zip(&tf.mean) {
                *p -= m;
            }
            let proj = tf.components.matvec(&patch).unwrap();
            for k in 0..8 {
                let v = proj[k] / libm::sqrt(tf.eigenvalues[k].max(0.0) + tf.epsilon);
                sums[k] += v;
                sq[k] += v * v;
            }
        }
        let n = cfg.patch_count as f64;
        for k in 0..8 {
            let mean = sums[k] / n;
            let var = sq[k] / n - mean * mean;
            assert!((var - 1.0).abs() < 0.05, "component {k} variance {var}");
        }
    }

    #[test]
    fn cifar_parse_and_grayscale() {
        // two records
        let mut bytes = Vec::new();
        for label in [3u8, 9u8] {
            bytes.push(label);
            bytes.extend(core::iter::repeat(60).take(1024)); // R
            bytes.extend(core::iter::repeat(120).take(1024)); // G
            bytes.extend(core::iter::repeat(240).take(1024)); // B
        }
        let (images, labels) = parse_cifar(&bytes).unwrap();
        assert_eq!(labels, vec![3, 9]);
        let gray = to_grayscale(&images).unwrap();
        let expected = (0.3 * 60.0 + 0.59 * 120.0 + 0.11 * 240.0) / 255.0;
        assert!((gray.pixel(0, 0, 5, 5) - expected).abs() < 1e-12);
    }

    #[test]
    fn cifar_rejects_bad_length_and_label() {
        assert!(parse_cifar(&[0u8; 100]).is_err());
        let mut bytes = vec![10u8]; // label out of range
        bytes.extend(core::iter::repeat(0).take(3072));
        assert!(parse_cifar(&bytes).is_err());
    }
}
