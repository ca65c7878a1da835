//! Datasets: IDX parsing, optional download, synthetic blobs, normalization
//! and training-time augmentation.

mod augment;
mod fetch;
mod idx;
mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use augment::{augment, hflip, AugmentationSpec};
pub(crate) use augment::{augment_slice, hflip_in_place, shifted_crop};
pub use fetch::{fetch_dataset, sha256_hex};
pub use idx::{encode_idx, load_idx, IdxData, IdxError, IMAGES_MAGIC, LABELS_MAGIC};
pub use synth::synth_dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Global affine normalization `(x - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Normalization {
    /// Mean and standard deviation over every pixel, accumulated in binary64.
    pub fn fit(images: &Tensor) -> Self {
        let n = images.len() as f64;
        let mean = images.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = images.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: mean as f32,
            std: var.sqrt().max(1e-12) as f32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    class_count: usize,
    split: Split,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        if images.shape().len() != 4 || images.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: images.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            class_count,
            split,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    /// `[C, H, W]` of one example.
    pub fn example_dims(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn example(&self, i: usize) -> &[f32] {
        self.images.row(i)
    }

    /// Applies the affine normalization. Normalizing twice is an error.
    pub fn normalize(&mut self, norm: Normalization) -> Result<()> {
        if self.normalization.is_some() {
            return Err(Error::Config("dataset is already normalized".into()));
        }
        let inv = 1.0 / norm.std;
        for v in self.images.data_mut() {
            *v = (*v - norm.mean) * inv;
        }
        self.normalization = Some(norm);
        Ok(())
    }

    /// The first `n` examples.
    pub fn truncate(mut self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::Config(format!(
                "requested {n} examples but only {} available",
                self.len()
            )));
        }
        let [c, h, w] = self.example_dims();
        let mut data = self.images.into_data();
        data.truncate(n * c * h * w);
        self.images = Tensor::new(vec![n, c, h, w], data)?;
        self.labels.truncate(n);
        Ok(self)
    }

    /// A copy with example `i` replaced; used to inject faults in tests.
    pub fn with_example(&self, i: usize, values: &[f32]) -> Self {
        let mut out = self.clone();
        let w = out.images.row_len();
        out.images.data_mut()[i * w..(i + 1) * w].copy_from_slice(values);
        out
    }

    fn hash_into(&self, h: &mut Sha256) {
        for d in self.images.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        h.update(self.images.to_le_bytes());
        for &l in &self.labels {
            h.update((l as u32).to_le_bytes());
        }
    }
}

/// Matched train/test splits plus a content fingerprint.
#[derive(Clone, Debug)]
pub struct DatasetPair {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
    fingerprint: String,
}

impl DatasetPair {
    pub fn new(name: impl Into<String>, train: Dataset, test: Dataset) -> Result<Self> {
        if train.example_dims() != test.example_dims() || train.class_count != test.class_count {
            return Err(Error::Config(
                "train and test splits disagree on shape or class count".into(),
            ));
        }
        let mut h = Sha256::new();
        train.hash_into(&mut h);
        test.hash_into(&mut h);
        let fingerprint = hex::encode(h.finalize());
        Ok(Self {
            name: name.into(),
            train,
            test,
            fingerprint,
        })
    }

    /// SHA-256 of both splits' shapes, pixels and labels.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            counts: DatasetCounts {
                train: self.train.len(),
                test: self.test.len(),
            },
            shape: self.train.example_dims(),
            class_count: self.train.class_count,
            normalization: self.train.normalization,
            sha256: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub train: usize,
    pub test: usize,
}

/// JSON manifest describing a dataset on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub counts: DatasetCounts,
    pub shape: [usize; 3],
    pub class_count: usize,
    pub normalization: Option<Normalization>,
    pub sha256: BTreeMap<String, String>,
}

/// One remote file: where to get it and what it must hash to once stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteFile {
    pub url: String,
    pub sha256: String,
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Conventional MNIST pixel statistics after scaling to `[0, 1]`.
pub const MNIST_NORMALIZATION: Normalization = Normalization {
    mean: 0.1307,
    std: 0.3081,
};

/// How to obtain a dataset, as declared in an experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        seed: u64,
        n_train: usize,
        n_test: usize,
        dims: [usize; 3],
        class_count: usize,
        noise: f32,
    },
    Mnist {
        dir: PathBuf,
        n_train: usize,
        n_test: usize,
        /// Keyed by the names in [`MNIST_FILES`]; only needed by `fetch`.
        #[serde(default)]
        files: BTreeMap<String, RemoteFile>,
    },
}

impl DatasetSource {
    pub fn load(&self, name: &str) -> Result<DatasetPair> {
        match self {
            DatasetSource::Synthetic {
                seed,
                n_train,
                n_test,
                dims,
                class_count,
                noise,
            } => {
                let (train, test) = synth_dataset(*seed, *n_train, *n_test, *dims, *class_count, *noise)?;
                DatasetPair::new(name, train, test)
            }
            DatasetSource::Mnist {
                dir, n_train, n_test, ..
            } => load_mnist(name, dir, *n_train, *n_test),
        }
    }
}

fn read_idx_file(path: &Path) -> Result<IdxData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(load_idx(&bytes)?)
}

fn mnist_split(dir: &Path, images: &str, labels: &str, split: Split, n: usize) -> Result<Dataset> {
    let IdxData::Images(img) = read_idx_file(&dir.join(images))? else {
        return Err(Error::Config(format!("{images} does not hold images")));
    };
    let IdxData::Labels(lab) = read_idx_file(&dir.join(labels))? else {
        return Err(Error::Config(format!("{labels} does not hold labels")));
    };
    let labels = lab.into_iter().map(usize::from).collect();
    let mut ds = Dataset::new(img, labels, 10, split)?.truncate(n)?;
    ds.normalize(MNIST_NORMALIZATION)?;
    Ok(ds)
}

/// Loads the first `n_train` / `n_test` MNIST examples from uncompressed IDX files in `dir`.
pub fn load_mnist(name: &str, dir: &Path, n_train: usize, n_test: usize) -> Result<DatasetPair> {
    let train = mnist_split(dir, MNIST_FILES[0], MNIST_FILES[1], Split::Train, n_train)?;
    let test = mnist_split(dir, MNIST_FILES[2], MNIST_FILES[3], Split::Test, n_test)?;
    DatasetPair::new(name, train, test)
}
