use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::formats::{parse_cifar_raw, parse_idx_raw};
use super::{subset_classes, synthetic_gaussian_mixture, LabeledDataset, Split, Standardizer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Mnist,
    FashionMnist,
    Cifar10,
    Cifar100,
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
    },
}

impl DataSource {
    pub fn name(&self) -> &'static str {
        match self {
            DataSource::Mnist => "mnist",
            DataSource::FashionMnist => "fashion-mnist",
            DataSource::Cifar10 => "cifar10",
            DataSource::Cifar100 => "cifar100",
            DataSource::Synthetic { .. } => "synthetic",
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            DataSource::Mnist | DataSource::FashionMnist | DataSource::Cifar10 => 10,
            DataSource::Cifar100 => 100,
            DataSource::Synthetic { classes, .. } => *classes,
        }
    }
}

/// What to load and how to cut it down.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Directory holding the dataset files under their published names.
    /// Unused for synthetic data.
    pub root: Option<PathBuf>,
    /// Original class ids to keep, in the order that defines the new labels.
    pub class_subset: Option<Vec<usize>>,
    /// Maximum number of samples kept per split.
    pub sample_cap: Option<usize>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(classes) = &self.class_subset {
            let total = self.source.class_count();
            let mut seen = vec![false; total];
            for &c in classes {
                if c >= total {
                    return Err(Error::invalid(format!(
                        "class {c} is not valid for {} ({total} classes)",
                        self.source.name()
                    )));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(Error::invalid(format!("class {c} listed twice")));
                }
            }
            if classes.is_empty() {
                return Err(Error::invalid("class subset is empty"));
            }
        }
        if self.sample_cap == Some(0) {
            return Err(Error::invalid("sample_cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTest {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Statistics fitted on the training split and applied to both splits.
    pub standardizer: Standardizer,
}

/// Loads both splits, applies the class subset and sample cap, then
/// standardizes with training-split statistics.
pub fn load_dataset(spec: &DatasetSpec) -> Result<TrainTest> {
    spec.validate()?;
    let (mut train, mut test) = match &spec.source {
        DataSource::Mnist | DataSource::FashionMnist => {
            let root = root(spec)?;
            (
                parse_idx_raw(
                    &read(&root.join("train-images-idx3-ubyte"))?,
                    &read(&root.join("train-labels-idx1-ubyte"))?,
                )?,
                parse_idx_raw(
                    &read(&root.join("t10k-images-idx3-ubyte"))?,
                    &read(&root.join("t10k-labels-idx1-ubyte"))?,
                )?,
            )
        }
        DataSource::Cifar10 => {
            let root = root(spec)?;
            let mut bytes = Vec::new();
            for i in 1..=5 {
                bytes.extend(read(&root.join(format!("data_batch_{i}.bin")))?);
            }
            (
                parse_cifar_raw(&bytes, 10)?,
                parse_cifar_raw(&read(&root.join("test_batch.bin"))?, 10)?,
            )
        }
        DataSource::Cifar100 => {
            let root = root(spec)?;
            (
                parse_cifar_raw(&read(&root.join("train.bin"))?, 100)?,
                parse_cifar_raw(&read(&root.join("test.bin"))?, 100)?,
            )
        }
        DataSource::Synthetic {
            classes,
            per_class,
            dim,
            separation,
        } => (
            synthetic_gaussian_mixture(*classes, *per_class, *dim, *separation, spec.seed)?,
            synthetic_gaussian_mixture(*classes, *per_class, *dim, *separation, spec.seed ^ 0x7e57)?,
        ),
    };
    // IDX files do not declare their class count.
    let total = spec.source.class_count();
    train.class_count = train.class_count.max(total);
    test.class_count = test.class_count.max(total);
    test.split = Split::Test;

    if let Some(classes) = &spec.class_subset {
        train = subset_classes(&train, classes)?;
        test = subset_classes(&test, classes)?;
    }
    if let Some(cap) = spec.sample_cap {
        train = cap_samples(&train, cap, spec.seed);
        test = cap_samples(&test, cap, spec.seed ^ 0xcafe);
    }
    let standardizer = Standardizer::fit(&train.inputs);
    standardizer.apply(&mut train.inputs);
    standardizer.apply(&mut test.inputs);
    Ok(TrainTest {
        train,
        test,
        standardizer,
    })
}

/// Seeded uniform subsample of at most `cap` rows, kept in file order.
fn cap_samples(ds: &LabeledDataset, cap: usize, seed: u64) -> LabeledDataset {
    if ds.len() <= cap {
        return ds.clone();
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(cap);
    idx.sort_unstable();
    ds.select(&idx)
}

fn root(spec: &DatasetSpec) -> Result<PathBuf> {
    spec.root
        .clone()
        .ok_or_else(|| Error::invalid(format!("dataset {} needs a root directory", spec.source.name())))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}
