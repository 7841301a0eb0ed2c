//! Iris and reduced-MNIST loaders.
//!
//! Both loaders yield features scaled into `[0, 1]` and one-hot targets.
//! MNIST is reduced to digits 0–4 and downsampled from 28×28 to 5×5 by exact
//! area averaging.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const MNIST5_SIDE: usize = 5;
pub const MNIST5_CLASSES: usize = 5;
pub const IRIS_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub targets: Matrix,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, targets: Matrix) -> Result<Self> {
        if features.rows() != targets.rows() {
            return Err(Error::Dimension {
                context: "dataset rows (features vs targets)",
                expected: features.rows(),
                actual: targets.rows(),
            });
        }
        let class_count = targets.cols();
        Ok(Dataset {
            name: name.into(),
            features,
            targets,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class index of every row.
    pub fn labels(&self) -> Vec<usize> {
        self.targets.iter_rows().map(crate::nn::argmax).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
            class_count: self.class_count,
        }
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    Matrix::from_fn(labels.len(), classes, |r, c| if labels[r] == c { 1.0 } else { 0.0 })
}

/// Min-max scale every column into `[0, 1]`. Constant columns become 0.
pub fn min_max_scale(features: &mut Matrix) {
    let (rows, cols) = features.shape();
    for c in 0..cols {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..rows {
            let v = features.get(r, c);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        for r in 0..rows {
            let v = features.get(r, c);
            features.set(r, c, if span > 0.0 { (v - lo) / span } else { 0.0 });
        }
    }
}

fn iris_label(raw: &str) -> Option<usize> {
    let lower = raw.trim().to_ascii_lowercase();
    let name = lower.strip_prefix("iris-").unwrap_or(&lower);
    match name {
        "setosa" | "0" => Some(0),
        "versicolor" | "1" => Some(1),
        "virginica" | "2" => Some(2),
        _ => None,
    }
}

/// Parse an Iris CSV: four numeric feature columns then a class label
/// (species name, optionally `Iris-` prefixed, or 0/1/2). A non-numeric
/// first row is treated as a header.
pub fn parse_iris(text: &str, source_name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Csv {
            source_name: source_name.into(),
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let numeric: Vec<Option<f64>> = record.iter().take(4).map(|f| f.parse::<f64>().ok()).collect();
        if idx == 0 && numeric.iter().any(Option::is_none) {
            continue;
        }
        if record.len() != 5 {
            return Err(Error::Csv {
                source_name: source_name.into(),
                row,
                column: record.len(),
                message: format!("expected 5 columns, found {}", record.len()),
            });
        }
        let mut feats = Vec::with_capacity(4);
        for (col, v) in numeric.into_iter().enumerate() {
            match v.filter(|v| v.is_finite()) {
                Some(v) => feats.push(v),
                None => {
                    return Err(Error::Csv {
                        source_name: source_name.into(),
                        row,
                        column: col + 1,
                        message: format!("'{}' is not a finite number", &record[col]),
                    })
                }
            }
        }
        let label = iris_label(&record[4]).ok_or_else(|| Error::Csv {
            source_name: source_name.into(),
            row,
            column: 5,
            message: format!("unknown class label '{}'", &record[4]),
        })?;
        features.push(feats);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(Error::EmptyData("iris file has no data rows"));
    }
    let mut features = Matrix::from_rows(&features)?;
    min_max_scale(&mut features);
    Dataset::new("iris", features, one_hot(&labels, IRIS_CLASSES))
}

pub fn load_iris(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_iris(&text, &path.display().to_string())
}

/// Raw contents of an IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse an IDX container whose big-endian magic must equal `magic`.
pub fn parse_idx(bytes: &[u8], magic: u32, source_name: &str) -> Result<IdxArray> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| Error::parse(source_name, at as u64, "truncated header"))
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::parse(
            source_name,
            0,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for k in 0..ndims {
        dims.push(word(4 + 4 * k)? as usize);
    }
    let header = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::parse(source_name, 4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::parse(
            source_name,
            bytes.len() as u64,
            format!("truncated payload: {} of {expected} bytes present", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::parse(
            source_name,
            (header + expected) as u64,
            "trailing bytes after payload",
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

/// Read a file, transparently gunzipping it when it starts with the gzip
/// magic. Offsets in later parse errors refer to the decompressed bytes.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn read_idx(path: impl AsRef<Path>, magic: u32) -> Result<IdxArray> {
    let path = path.as_ref();
    parse_idx(&read_maybe_gz(path)?, magic, &path.display().to_string())
}

/// Exact area-average resize of a square `src_side²` image to `dst_side²`.
/// Each target cell averages the source pixels it overlaps, weighted by the
/// overlapped area.
pub fn resize_area(image: &[f64], src_side: usize, dst_side: usize) -> Result<Vec<f64>> {
    if image.len() != src_side * src_side {
        return Err(Error::Dimension {
            context: "resize source pixels",
            expected: src_side * src_side,
            actual: image.len(),
        });
    }
    if dst_side == 0 || dst_side > src_side {
        return Err(Error::Config(format!("cannot area-resize {src_side} to {dst_side}")));
    }
    // Overlaps measured in units of 1/dst_side pixel: target cell t spans
    // [t·src, (t+1)·src), source pixel p spans [p·dst, (p+1)·dst).
    let weights: Vec<Vec<(usize, f64)>> = (0..dst_side)
        .map(|t| {
            let (lo, hi) = (t * src_side, (t + 1) * src_side);
            (0..src_side)
                .filter_map(|p| {
                    let (a, b) = (p * dst_side, (p + 1) * dst_side);
                    let overlap = hi.min(b).saturating_sub(lo.max(a));
                    (overlap > 0).then_some((p, overlap as f64))
                })
                .collect()
        })
        .collect();
    let norm = (src_side * src_side) as f64;
    let mut out = Vec::with_capacity(dst_side * dst_side);
    for rw in &weights {
        for cw in &weights {
            let mut acc = 0.0;
            for &(r, wr) in rw {
                for &(c, wc) in cw {
                    acc += wr * wc * image[r * src_side + c];
                }
            }
            out.push(acc / norm);
        }
    }
    Ok(out)
}

/// Build the reduced MNIST task from IDX image and label files (optionally
/// gzipped): digits 0–4 only, pixels scaled by 1/255, 5×5 area-averaged,
/// flattened row-major, one-hot over 5 classes.
pub fn load_mnist5(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = read_idx(images_path, IDX_IMAGES_MAGIC)?;
    let labels = read_idx(labels_path, IDX_LABELS_MAGIC)?;
    mnist5_from_idx(&images, &labels, &images_path.display().to_string())
}

pub fn mnist5_from_idx(images: &IdxArray, labels: &IdxArray, source_name: &str) -> Result<Dataset> {
    if images.dims.len() != 3 || images.dims[1] != MNIST_SIDE || images.dims[2] != MNIST_SIDE {
        return Err(Error::parse(
            source_name,
            4,
            format!("expected N×28×28 images, found dims {:?}", images.dims),
        ));
    }
    if images.dims[0] != labels.dims[0] {
        return Err(Error::parse(
            source_name,
            4,
            format!(
                "image count {} does not match label count {}",
                images.dims[0], labels.dims[0]
            ),
        ));
    }
    let px = MNIST_SIDE * MNIST_SIDE;
    let mut features = Vec::new();
    let mut kept = Vec::new();
    for (i, &label) in labels.data.iter().enumerate() {
        let label = label as usize;
        if label >= MNIST5_CLASSES {
            continue;
        }
        let img: Vec<f64> = images.data[i * px..(i + 1) * px]
            .iter()
            .map(|&p| p as f64 / 255.0)
            .collect();
        features.extend(resize_area(&img, MNIST_SIDE, MNIST5_SIDE)?);
        kept.push(label);
    }
    let features = Matrix::from_vec(kept.len(), MNIST5_SIDE * MNIST5_SIDE, features)?;
    Dataset::new("mnist5", features, one_hot(&kept, MNIST5_CLASSES))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

const SPLIT_TAG: u64 = 0x53_504c_4954;

/// Seeded shuffle, then the first `round(fraction·n)` rows become the test
/// set. Row order inside each part follows the shuffle.
pub fn train_test_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng::seeded(rng::derive_seed(spec.seed, SPLIT_TAG)));
    let n_test = (spec.test_fraction * ds.len() as f64).round() as usize;
    let (test, train) = order.split_at(n_test);
    Ok((ds.subset(train), ds.subset(test)))
}
