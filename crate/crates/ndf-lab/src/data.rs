//! Dataset ingestion and mini-batch streaming.
//!
//! Two sources are supported: MNIST IDX file pairs (big-endian, magic
//! `0x00000803` for images and `0x00000801` for labels, pixels scaled to
//! `[0,1]` by `/255`) and a synthetic Gaussian-blob generator for desk-scale
//! experiments. Datasets are immutable after construction; all shuffling and
//! subsetting is seeded.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{derive_seed, rng_from_seed, streams};

/// One training example: feature vector, class label, and a stable id that
/// survives splits and subsetting.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub features: Vec<f64>,
    pub label: usize,
    pub id: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    instances: Vec<LabeledInstance>,
    num_classes: usize,
    feature_dim: usize,
}

/// A group of instance indices into one `Dataset`, in arrival order.
/// `batch_index` is the 1-based arrival position within its stream.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub batch_index: u64,
}

/// How to carve the policy-training subset out of a dataset: `ndf_subset_size`
/// instances are sampled, of which `dev_size` become the held-out dev set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub ndf_subset_size: usize,
    pub dev_size: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn new(instances: Vec<LabeledInstance>, num_classes: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::input("dataset must be nonempty"));
        }
        let feature_dim = instances[0].features.len();
        for inst in &instances {
            if inst.features.len() != feature_dim {
                return Err(Error::shape("inconsistent feature dimension"));
            }
            if inst.label >= num_classes {
                return Err(Error::input(format!(
                    "label {} out of range for {} classes",
                    inst.label, num_classes
                )));
            }
        }
        let mut ids: Vec<u64> = instances.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != instances.len() {
            return Err(Error::input("instance ids must be unique"));
        }
        Ok(Dataset {
            instances,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn instance(&self, idx: usize) -> &LabeledInstance {
        &self.instances[idx]
    }

    /// Packs the given instances into a feature matrix plus label vector.
    pub fn batch_matrix(&self, indices: &[usize]) -> (DenseMatrix, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.instances[i].features);
            labels.push(self.instances[i].label);
        }
        let m = DenseMatrix::from_vec(indices.len(), self.feature_dim, data)
            .expect("instances hold finite features of fixed dimension");
        (m, labels)
    }

    /// Seeded uniform subsample of `n` instances (without replacement),
    /// keeping original ids.
    pub fn sample_subset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::input(format!(
                "subset size {} out of range 1..={}",
                n,
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(seed, streams::SUBSET, 0)));
        let picked = order[..n]
            .iter()
            .map(|&i| self.instances[i].clone())
            .collect();
        Dataset::new(picked, self.num_classes)
    }
}

// ---------------------------------------------------------------------------
// MNIST IDX loading
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|_| Error::DataFormat {
        path: path.to_path_buf(),
        reason: "truncated file (header)".into(),
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn read_bytes_exact(reader: &mut impl Read, n: usize, path: &Path, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    reader.read_exact(&mut buf).map_err(|_| Error::DataFormat {
        path: path.to_path_buf(),
        reason: format!("truncated file ({what})"),
    })?;
    Ok(buf)
}

/// Loads an MNIST-style IDX image/label file pair into a dataset.
///
/// Pixels are scaled to `[0,1]` by `/255`; instance order and ids follow file
/// position; labels must be in `0..10`.
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(
        File::open(images_path).map_err(|e| Error::io(images_path, e))?,
    );
    let magic = read_u32_be(&mut img, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::DataFormat {
            path: images_path.to_path_buf(),
            reason: format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&mut img, images_path)? as usize;
    let rows = read_u32_be(&mut img, images_path)? as usize;
    let cols = read_u32_be(&mut img, images_path)? as usize;
    let pixels = read_bytes_exact(&mut img, count * rows * cols, images_path, "pixel data")?;

    let mut lbl = BufReader::new(
        File::open(labels_path).map_err(|e| Error::io(labels_path, e))?,
    );
    let magic = read_u32_be(&mut lbl, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::DataFormat {
            path: labels_path.to_path_buf(),
            reason: format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let label_count = read_u32_be(&mut lbl, labels_path)? as usize;
    if label_count != count {
        return Err(Error::DataFormat {
            path: labels_path.to_path_buf(),
            reason: format!("label count {label_count} != image count {count}"),
        });
    }
    let labels = read_bytes_exact(&mut lbl, label_count, labels_path, "label data")?;

    let dim = rows * cols;
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let raw = &pixels[i * dim..(i + 1) * dim];
        let features: Vec<f64> = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
        let label = labels[i] as usize;
        if label > 9 {
            return Err(Error::DataFormat {
                path: labels_path.to_path_buf(),
                reason: format!("label {label} out of range 0..=9 at position {i}"),
            });
        }
        instances.push(LabeledInstance {
            features,
            label,
            id: i as u64,
        });
    }
    Dataset::new(instances, 10)
}

// ---------------------------------------------------------------------------
// Synthetic blobs
// ---------------------------------------------------------------------------

/// Generates `num_classes * per_class` points, class `c` drawn from an
/// isotropic Gaussian of width `spread` around a seeded random center in
/// `(-1,1)^dim`. Deterministic for a fixed seed.
pub fn generate_blobs(
    num_classes: usize,
    per_class: usize,
    feature_dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    let (train, _) = generate_blob_pair(num_classes, per_class, 0, feature_dim, spread, seed)?;
    Ok(train)
}

/// Like [`generate_blobs`] but also draws an i.i.d. test set from the *same*
/// class centers, using an independent point stream.
pub fn generate_blob_pair(
    num_classes: usize,
    per_class: usize,
    test_per_class: usize,
    feature_dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    if num_classes == 0 || per_class == 0 || feature_dim == 0 {
        return Err(Error::input("blob counts must be positive"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::input("spread must be finite and non-negative"));
    }

    let mut center_rng = rng_from_seed(derive_seed(seed, streams::BLOB_CENTERS, 0));
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| center_rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let draw = |phase: u64, count: usize, id_base: u64| -> Vec<LabeledInstance> {
        let mut point_rng = rng_from_seed(derive_seed(seed, streams::BLOB_POINTS, phase));
        let mut instances = Vec::with_capacity(num_classes * count);
        for (label, center) in centers.iter().enumerate() {
            for k in 0..count {
                let features = center
                    .iter()
                    .map(|&c| c + spread * point_rng.sample::<f64, _>(StandardNormal))
                    .collect();
                instances.push(LabeledInstance {
                    features,
                    label,
                    id: id_base + (label * count + k) as u64,
                });
            }
        }
        instances
    };

    let train = Dataset::new(draw(0, per_class, 0), num_classes)?;
    let test = if test_per_class > 0 {
        let id_base = (num_classes * per_class) as u64;
        Some(Dataset::new(
            draw(1, test_per_class, id_base),
            num_classes,
        )?)
    } else {
        None
    };
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Splits and streams
// ---------------------------------------------------------------------------

/// Carves `(policy_train, dev, remainder)` out of a dataset by seeded
/// permutation; the three parts are disjoint by id.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset, Option<Dataset>)> {
    if spec.dev_size == 0 || spec.dev_size >= spec.ndf_subset_size {
        return Err(Error::input(format!(
            "dev_size {} must be in 1..ndf_subset_size {}",
            spec.dev_size, spec.ndf_subset_size
        )));
    }
    if spec.ndf_subset_size > dataset.len() {
        return Err(Error::input(format!(
            "ndf_subset_size {} exceeds dataset size {}",
            spec.ndf_subset_size,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(spec.seed, streams::SPLIT, 0)));

    let train_size = spec.ndf_subset_size - spec.dev_size;
    let take = |range: std::ops::Range<usize>| -> Vec<LabeledInstance> {
        order[range].iter().map(|&i| dataset.instance(i).clone()).collect()
    };
    let train = Dataset::new(take(0..train_size), dataset.num_classes())?;
    let dev = Dataset::new(
        take(train_size..spec.ndf_subset_size),
        dataset.num_classes(),
    )?;
    let remainder = if spec.ndf_subset_size < dataset.len() {
        Some(Dataset::new(
            take(spec.ndf_subset_size..dataset.len()),
            dataset.num_classes(),
        )?)
    } else {
        None
    };
    Ok((train, dev, remainder))
}

/// One epoch of mini-batches: a seeded uniform shuffle chopped into
/// consecutive chunks of exactly `batch_size`; a trailing chunk smaller than
/// `batch_size` is dropped. `batch_index` continues from `first_batch_index`.
pub fn epoch_stream(
    dataset: &Dataset,
    batch_size: usize,
    epoch_seed: u64,
    first_batch_index: u64,
) -> Result<Vec<MiniBatch>> {
    if batch_size == 0 {
        return Err(Error::input("batch size must be positive"));
    }
    if batch_size > dataset.len() {
        return Err(Error::input(format!(
            "batch size {} exceeds dataset size {}",
            batch_size,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from_seed(epoch_seed));
    Ok(order
        .chunks_exact(batch_size)
        .enumerate()
        .map(|(k, chunk)| MiniBatch {
            indices: chunk.to_vec(),
            batch_index: first_batch_index + k as u64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn toy_dataset(n: usize, classes: usize) -> Dataset {
        let instances = (0..n)
            .map(|i| LabeledInstance {
                features: vec![i as f64, (i * 2) as f64],
                label: i % classes,
                id: i as u64,
            })
            .collect();
        Dataset::new(instances, classes).unwrap()
    }

    fn write_idx_pair(dir: &Path, pixels: &[u8], rows: u32, cols: u32, labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("images-idx3-ubyte");
        let lbl_path = dir.join("labels-idx1-ubyte");
        let count = labels.len() as u32;
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&count.to_be_bytes());
        img.extend_from_slice(&rows.to_be_bytes());
        img.extend_from_slice(&cols.to_be_bytes());
        img.extend_from_slice(pixels);
        File::create(&img_path).unwrap().write_all(&img).unwrap();
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&count.to_be_bytes());
        lbl.extend_from_slice(labels);
        File::create(&lbl_path).unwrap().write_all(&lbl).unwrap();
        (img_path, lbl_path)
    }

    #[test]
    fn idx_roundtrip_two_2x2_images() {
        let dir = tempfile::tempdir().unwrap();
        // image 0: all zeros; image 1: all 255
        let pixels = [0u8, 0, 0, 0, 255, 255, 255, 255];
        let (imgs, lbls) = write_idx_pair(dir.path(), &pixels, 2, 2, &[3, 7]);
        let ds = load_mnist(&imgs, &lbls).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.instance(0).features, vec![0.0; 4]);
        assert_eq!(ds.instance(1).features, vec![1.0; 4]);
        assert_eq!(ds.instance(0).label, 3);
        assert_eq!(ds.instance(1).label, 7);
        assert_eq!(ds.instance(1).id, 1);
    }

    #[test]
    fn idx_empty_file_is_truncated_error() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("empty");
        File::create(&img_path).unwrap();
        let err = load_mnist(&img_path, &img_path).unwrap_err();
        assert!(matches!(err, Error::DataFormat { .. }), "{err}");
    }

    #[test]
    fn idx_bad_magic_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = write_idx_pair(dir.path(), &[0; 4], 2, 2, &[1]);
        // corrupt the image magic
        let mut bytes = std::fs::read(&imgs).unwrap();
        bytes[3] = 0xff;
        std::fs::write(&imgs, &bytes).unwrap();
        assert!(matches!(load_mnist(&imgs, &lbls), Err(Error::DataFormat { .. })));

        // count mismatch: 2 labels vs 1 image
        let (imgs2, lbls2) = write_idx_pair(dir.path(), &[0; 4], 2, 2, &[1, 2]);
        let mut bytes = std::fs::read(&imgs2).unwrap();
        bytes[4..8].copy_from_slice(&1u32.to_be_bytes());
        bytes.truncate(16 + 4);
        std::fs::write(&imgs2, &bytes).unwrap();
        assert!(matches!(load_mnist(&imgs2, &lbls2), Err(Error::DataFormat { .. })));
    }

    #[test]
    fn blobs_deterministic_for_seed() {
        let a = generate_blobs(3, 5, 4, 0.3, 42).unwrap();
        let b = generate_blobs(3, 5, 4, 0.3, 42).unwrap();
        assert_eq!(a.instances(), b.instances());
    }

    #[test]
    fn blobs_zero_spread_collapses_to_centers() {
        let ds = generate_blobs(2, 4, 3, 0.0, 9).unwrap();
        for label in 0..2 {
            let points: Vec<_> = ds
                .instances()
                .iter()
                .filter(|i| i.label == label)
                .collect();
            for p in &points {
                assert_eq!(p.features, points[0].features);
            }
        }
    }

    #[test]
    fn blob_pair_shares_centers() {
        let (train, test) = generate_blob_pair(2, 50, 50, 3, 0.0, 11).unwrap();
        let test = test.unwrap();
        // zero spread: train and test points of a class are the identical center
        for label in 0..2 {
            let tr = train.instances().iter().find(|i| i.label == label).unwrap();
            let te = test.instances().iter().find(|i| i.label == label).unwrap();
            assert_eq!(tr.features, te.features);
        }
        // ids disjoint
        let tr_ids: HashSet<u64> = train.instances().iter().map(|i| i.id).collect();
        assert!(test.instances().iter().all(|i| !tr_ids.contains(&i.id)));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = toy_dataset(100, 4);
        let spec = SplitSpec {
            ndf_subset_size: 60,
            dev_size: 10,
            seed: 5,
        };
        let (train, dev, rest) = split(&ds, spec).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(dev.len(), 10);
        assert_eq!(rest.as_ref().unwrap().len(), 40);
        let mut ids = HashSet::new();
        for d in [&train, &dev, rest.as_ref().unwrap()] {
            for inst in d.instances() {
                assert!(ids.insert(inst.id), "id {} duplicated", inst.id);
            }
        }
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn split_full_dataset_leaves_no_remainder() {
        let ds = toy_dataset(20, 2);
        let spec = SplitSpec {
            ndf_subset_size: 20,
            dev_size: 1,
            seed: 0,
        };
        let (train, dev, rest) = split(&ds, spec).unwrap();
        assert_eq!(train.len(), 19);
        assert_eq!(dev.len(), 1);
        assert!(rest.is_none());
    }

    #[test]
    fn split_same_seed_is_identical() {
        let ds = toy_dataset(50, 5);
        let spec = SplitSpec {
            ndf_subset_size: 30,
            dev_size: 5,
            seed: 77,
        };
        let (a_train, a_dev, _) = split(&ds, spec).unwrap();
        let (b_train, b_dev, _) = split(&ds, spec).unwrap();
        assert_eq!(a_train.instances(), b_train.instances());
        assert_eq!(a_dev.instances(), b_dev.instances());
    }

    #[test]
    fn split_rejects_oversize() {
        let ds = toy_dataset(10, 2);
        let spec = SplitSpec {
            ndf_subset_size: 11,
            dev_size: 2,
            seed: 0,
        };
        assert!(split(&ds, spec).is_err());
    }

    #[test]
    fn epoch_stream_covers_exactly_once() {
        let ds = toy_dataset(100, 4);
        let batches = epoch_stream(&ds, 20, 123, 1).unwrap();
        assert_eq!(batches.len(), 5);
        let mut seen = HashSet::new();
        for b in &batches {
            assert_eq!(b.indices.len(), 20);
            for &i in &b.indices {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 100);
        assert_eq!(batches[0].batch_index, 1);
        assert_eq!(batches[4].batch_index, 5);
    }

    #[test]
    fn epoch_stream_drops_trailing_partial() {
        let ds = toy_dataset(105, 5);
        let batches = epoch_stream(&ds, 20, 9, 1).unwrap();
        assert_eq!(batches.len(), 5);
        let used: usize = batches.iter().map(|b| b.indices.len()).sum();
        assert_eq!(used, 100);
    }

    #[test]
    fn epoch_stream_zero_batch_is_error() {
        let ds = toy_dataset(10, 2);
        assert!(epoch_stream(&ds, 0, 1, 1).is_err());
    }

    #[test]
    fn epoch_stream_same_seed_identical() {
        let ds = toy_dataset(64, 4);
        let a = epoch_stream(&ds, 8, 7, 1).unwrap();
        let b = epoch_stream(&ds, 8, 7, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.indices, y.indices);
        }
    }
}
