//! Datasets: IDX and CSV loading, sphere preprocessing, splits and synthetic points.

use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use std::io::Read;
use std::path::Path;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Which part of an experiment a dataset plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    All,
    Train,
    Val,
    Test,
}

/// Row-major input matrix with one class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    dim: usize,
    pub targets: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, dim: usize, targets: Vec<usize>, split: Split) -> Result<Self> {
        if dim == 0 || !inputs.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: inputs.len() });
        }
        if inputs.len() / dim != targets.len() {
            return Err(Error::DimensionMismatch { expected: inputs.len() / dim, found: targets.len() });
        }
        Ok(Self { inputs, dim, targets, split })
    }

    /// Build from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<usize>, split: Split) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Self::new(rows.concat(), dim, targets, split)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize], split: Split) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        Self { inputs, dim: self.dim, targets: indices.iter().map(|&i| self.targets[i]).collect(), split }
    }

    /// Largest class index plus one.
    pub fn n_classes(&self) -> usize {
        self.targets.iter().max().map_or(0, |m| m + 1)
    }

    /// Whether every row has unit norm within `tol`.
    pub fn on_unit_sphere(&self, tol: f64) -> bool {
        self.rows().all(|r| (r.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= tol)
    }
}

/// Supported dataset file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Idx,
    Csv,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(crate::error::io_at(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse { offset, message: "truncated header".into() })
}

/// Decode an IDX image file into rows scaled to `[0, 1]`; returns `(pixels, dim)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f64>, usize)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Parse { offset: 0, message: format!("image magic {magic:#010x}, expected {IDX_IMAGES:#010x}") });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let need = n * dim;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Parse {
            offset: 16 + body.len(),
            message: format!("pixel data truncated: expected {need} bytes after the header"),
        });
    }
    Ok((body[..need].iter().map(|&b| f64::from(b) / 255.0).collect(), dim))
}

/// Decode an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(Error::Parse { offset: 0, message: format!("label magic {magic:#010x}, expected {IDX_LABELS:#010x}") });
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Parse {
            offset: 8 + body.len(),
            message: format!("label data truncated: expected {n} bytes after the header"),
        });
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

/// Load an IDX image file and its label file; either may be gzip-compressed.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (pixels, dim) = parse_idx_images(&read_maybe_gz(images)?)?;
    let targets = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if pixels.len() / dim.max(1) != targets.len() {
        return Err(Error::Parse {
            offset: 4,
            message: format!("{} images but {} labels", pixels.len() / dim.max(1), targets.len()),
        });
    }
    Dataset::new(pixels, dim, targets, Split::All)
}

/// Label file conventionally paired with an IDX image file.
pub fn sibling_labels(images: &Path) -> Option<std::path::PathBuf> {
    let name = images.file_name()?.to_str()?;
    let swapped = name.replace("images-idx3", "labels-idx1").replace("images.idx", "labels.idx");
    (swapped != name).then(|| images.with_file_name(swapped))
}

/// Load a CSV file with the label in the first column and pixels `0..=255` after it.
/// A first record whose label does not parse as an integer is a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut dim = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let Some(first) = rec.get(0) else { continue };
        let Ok(label) = first.trim().parse::<usize>() else {
            if i == 0 {
                continue;
            }
            return Err(Error::Parse { offset, message: format!("bad label {first:?}") });
        };
        let width = rec.len() - 1;
        if *dim.get_or_insert(width) != width {
            return Err(Error::Parse { offset, message: format!("row has {width} features, expected {}", dim.unwrap_or(0)) });
        }
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { offset, message: format!("bad pixel {field:?}") })?;
            inputs.push(v / 255.0);
        }
        targets.push(label);
    }
    Dataset::new(inputs, dim.unwrap_or(1), targets, Split::All)
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Parse { offset, message: e.to_string() }
}

/// Load a dataset in either format. For IDX, `labels` defaults to the sibling file.
pub fn load_dataset(path: &Path, format: Format, labels: Option<&Path>) -> Result<Dataset> {
    match format {
        Format::Csv => load_csv(path),
        Format::Idx => {
            let labels = match labels {
                Some(p) => p.to_path_buf(),
                None => sibling_labels(path).ok_or_else(|| {
                    Error::Contract(format!("cannot infer the label file for {}", path.display()))
                })?,
            };
            load_idx(path, &labels)
        }
    }
}

/// Subtract the training mean from every split and scale each row to unit norm.
pub fn preprocess_sphere(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    if train.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; train.dim()];
    for r in train.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let project = |ds: &Dataset| -> Result<Dataset> {
        if ds.dim() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: ds.dim() });
        }
        let mut inputs = Vec::with_capacity(ds.inputs.len());
        for (i, r) in ds.rows().enumerate() {
            let centred: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
            let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Contract(format!("row {i} of the {:?} split equals the training mean", ds.split)));
            }
            inputs.extend(centred.iter().map(|v| v / norm));
        }
        Ok(Dataset { inputs, ..ds.clone() })
    };
    let others = others.iter().map(|d| project(d)).collect::<Result<Vec<_>>>()?;
    Ok((project(train)?, others))
}

/// Indices of a class-balanced training subset and a shuffled remainder.
///
/// `n_train` is spread evenly over the classes present (the first `n_train mod c`
/// classes receive one extra). The remainder is shuffled with the same generator.
pub fn class_balanced_split(targets: &[usize], n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let classes = targets.iter().max().map_or(0, |m| m + 1);
    if classes == 0 {
        return Err(Error::Contract("no labels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &t) in targets.iter().enumerate() {
        by_class[t].push(i);
    }
    let mut train = Vec::with_capacity(n_train);
    let mut rest = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let want = n_train / classes + usize::from(c < n_train % classes);
        if members.len() < want {
            return Err(Error::Contract(format!("class {c} has {} examples, need {want}", members.len())));
        }
        train.extend_from_slice(&members[..want]);
        rest.extend_from_slice(&members[want..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    Ok((train, rest))
}

/// `n` points drawn uniformly on the sphere of radius `radius` in `R^d`.
pub fn sphere_points(n: usize, d: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| radius * x / norm).collect()
        })
        .collect()
}

/// `n` points drawn uniformly on the unit circle.
pub fn circle_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
    (0..n)
        .map(|_| {
            let a: f64 = angle.sample(&mut rng);
            vec![a.cos(), a.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_fixture(n: u32, rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [IDX_IMAGES, n, rows, cols] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
        let mut lab = Vec::new();
        for v in [IDX_LABELS, n] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend((0..n).map(|i| (i % 10) as u8));
        (img, lab)
    }

    #[test]
    fn idx_round_trip() {
        let dir = std::env::temp_dir().join(format!("sk-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (img, lab) = idx_fixture(4, 28, 28);
        let ip = dir.join("t-images-idx3-ubyte");
        std::fs::write(&ip, &img).unwrap();
        std::fs::write(dir.join("t-labels-idx1-ubyte"), &lab).unwrap();
        let ds = load_dataset(&ip, Format::Idx, None).unwrap();
        assert_eq!((ds.len(), ds.dim()), (4, 784));
        assert_eq!(ds.targets, vec![0, 1, 2, 3]);
        assert_eq!(ds.row(0)[255], 1.0);
        assert!(ds.rows().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn idx_errors() {
        let (img, lab) = idx_fixture(4, 2, 2);
        let mut bad = img.clone();
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad), Err(Error::Parse { offset: 0, .. })));
        let err = parse_idx_images(&img[..20]).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 20, .. }), "{err}");
        assert!(parse_idx_labels(&lab[..10]).is_err());
        assert!(parse_idx_labels(&img).is_err());
    }

    #[test]
    fn csv_with_header() {
        let p = std::env::temp_dir().join(format!("sk-csv-{}.csv", std::process::id()));
        std::fs::write(&p, "label,p1,p2\n3,0,255\n7,51,102\n").unwrap();
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.targets, vec![3, 7]);
        assert_eq!(ds.row(1), &[0.2, 0.4]);
        std::fs::write(&p, "1,0,255\n2,5\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Parse { .. })));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn sphere_preprocessing() {
        let train = Dataset::from_rows(&[vec![1.0, 2.0], vec![-1.0, -2.0]], vec![0, 1], Split::Train).unwrap();
        let test = Dataset::from_rows(&[vec![3.0, 0.5], vec![0.0, 0.1]], vec![0, 1], Split::Test).unwrap();
        let (tr, others) = preprocess_sphere(&train, &[&test]).unwrap();
        let s = 1.0 / 5f64.sqrt();
        assert!((tr.row(0)[0] - s).abs() < 1e-15 && (tr.row(1)[1] + 2.0 * s).abs() < 1e-15);
        assert!(tr.on_unit_sphere(1e-9) && others[0].on_unit_sphere(1e-9));
        let degenerate = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], vec![0, 1], Split::Train).unwrap();
        assert!(preprocess_sphere(&degenerate, &[]).is_err());
    }

    #[test]
    fn balanced_split_is_deterministic() {
        let targets: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let (a, ra) = class_balanced_split(&targets, 30, 5).unwrap();
        let (b, rb) = class_balanced_split(&targets, 30, 5).unwrap();
        assert_eq!((a.clone(), ra.clone()), (b, rb));
        for c in 0..3 {
            assert_eq!(a.iter().filter(|&&i| targets[i] == c).count(), 10);
        }
        assert_eq!(a.len() + ra.len(), 300);
        assert!(class_balanced_split(&targets, 400, 5).is_err());
    }

    #[test]
    fn synthetic_points() {
        let p = sphere_points(20, 5, 2.0, 1);
        assert!(p.iter().all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 4.0).abs() < 1e-12));
        assert_eq!(circle_points(10, 3), circle_points(10, 3));
        assert_ne!(circle_points(10, 3), circle_points(10, 4));
    }
}
