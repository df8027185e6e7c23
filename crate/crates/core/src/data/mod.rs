//! Labeled datasets: IDX (MNIST, Fashion-MNIST) and CIFAR binary parsing,
//! class subsetting, per-feature standardization, and synthetic mixtures.

mod formats;
mod source;

pub use formats::{encode_cifar, encode_idx, parse_cifar, parse_cifar_raw, parse_idx, parse_idx_raw, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use source::{load_dataset, DataSource, DatasetSpec, TrainTest};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// One flattened sample per row.
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(inputs: DenseMatrix, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= class_count) {
            return Err(Error::invalid(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for l in &self.labels {
            counts[*l] += 1;
        }
        counts
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(self.inputs.row(r));
        }
        LabeledDataset {
            inputs: DenseMatrix::from_vec_unchecked(rows.len(), d, data),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_count: self.class_count,
            split: self.split,
        }
    }
}

/// Keeps the samples whose label is in `classes` and relabels them by their
/// position in `classes`.
pub fn subset_classes(ds: &LabeledDataset, classes: &[usize]) -> Result<LabeledDataset> {
    if classes.is_empty() {
        return Err(Error::invalid("class subset is empty"));
    }
    let mut new_label = vec![None; ds.class_count];
    for (pos, &c) in classes.iter().enumerate() {
        if c >= ds.class_count {
            return Err(Error::invalid(format!(
                "class {c} does not exist (dataset has {} classes)",
                ds.class_count
            )));
        }
        if new_label[c].is_some() {
            return Err(Error::invalid(format!("class {c} listed twice")));
        }
        new_label[c] = Some(pos);
    }
    let rows: Vec<usize> = (0..ds.len()).filter(|&r| new_label[ds.labels[r]].is_some()).collect();
    if rows.is_empty() {
        return Err(Error::invalid("class subset selects no samples"));
    }
    let mut out = ds.select(&rows);
    for l in &mut out.labels {
        *l = new_label[*l].expect("filtered");
    }
    out.class_count = classes.len();
    Ok(out)
}

/// Per-feature affine normalization fitted on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero for constant features.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(inputs: &DenseMatrix) -> Self {
        let (n, d) = inputs.shape();
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, x) in mean.iter_mut().zip(inputs.row(r)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((v, x), m) in var.iter_mut().zip(inputs.row(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
        Self { mean, std }
    }

    /// Maps every feature to zero mean and unit variance under the fitted
    /// statistics. Features with zero fitted variance map to 0.
    pub fn apply(&self, inputs: &mut DenseMatrix) {
        for r in 0..inputs.rows() {
            for ((x, m), s) in inputs.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
            }
        }
    }
}

/// Standardizes a dataset in place using its own statistics.
pub fn standardize(ds: &mut LabeledDataset) -> Standardizer {
    let st = Standardizer::fit(&ds.inputs);
    st.apply(&mut ds.inputs);
    st
}

/// `c` isotropic unit Gaussians centered at `separation · e_k`, `per_class`
/// samples each, interleaved by class.
pub fn synthetic_gaussian_mixture(
    c: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if c == 0 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("class count, samples per class and dimension must be positive"));
    }
    if dim < c {
        return Err(Error::invalid(format!("dimension {dim} is smaller than class count {c}")));
    }
    if !separation.is_finite() {
        return Err(Error::invalid("separation must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % c;
        labels.push(k);
        for j in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(noise + if j == k { separation } else { 0.0 });
        }
    }
    LabeledDataset::new(DenseMatrix::from_vec_unchecked(n, dim, data), labels, c, Split::Train)
}
