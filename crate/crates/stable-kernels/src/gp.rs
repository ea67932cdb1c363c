//! Posterior-mean classification with one-hot regression targets.

use crate::data::{class_balanced_split, preprocess_sphere, Dataset, Split};
use crate::error::{Error, Result};
use crate::gram::{gram, KernelDescriptor};
use nalgebra::{Cholesky, DMatrix, Dyn};

/// Jitter multipliers of `Tr(Q)/N` tried when a factorization fails.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Noise grid for validation tuning: `σ² = m·Tr(Q_NN)/N` for each multiplier `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub multipliers: Vec<f64>,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self { multipliers: vec![0.001, 0.01, 0.1] }
    }
}

/// Cholesky factor of `Q + σ²I`, with any jitter that had to be added.
pub struct Factor {
    pub cholesky: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Factor `Q + σ²I`, escalating the diagonal by the jitter ladder on failure.
pub fn factor(q: &DMatrix<f64>, sigma2: f64) -> Result<Factor> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch { expected: q.nrows(), found: q.ncols() });
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::Contract(format!("noise variance must be non-negative, got {sigma2}")));
    }
    let n = q.nrows();
    let base = q.trace() / n.max(1) as f64;
    let mut a = q.clone();
    for i in 0..n {
        a[(i, i)] += sigma2;
    }
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(Factor { cholesky: c, jitter: 0.0 });
    }
    let mut jitter = 0.0;
    for m in JITTER_LADDER {
        jitter = m * base;
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(b) {
            return Ok(Factor { cholesky: c, jitter });
        }
    }
    let min_eigenvalue = a.symmetric_eigenvalues().min();
    Err(Error::Factorization { jitter, min_eigenvalue })
}

/// Posterior mean `Q_xN (Q_NN + σ²I)⁻¹ y` for each target column.
pub fn posterior_mean(q_nn: &DMatrix<f64>, q_xn: &DMatrix<f64>, y: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::Contract(format!("noise variance must be positive, got {sigma2}")));
    }
    if q_xn.ncols() != q_nn.nrows() {
        return Err(Error::DimensionMismatch { expected: q_nn.nrows(), found: q_xn.ncols() });
    }
    if y.nrows() != q_nn.nrows() {
        return Err(Error::DimensionMismatch { expected: q_nn.nrows(), found: y.nrows() });
    }
    let f = factor(q_nn, sigma2)?;
    let weights = f.cholesky.solve(y);
    let out = q_xn * weights;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("posterior mean".into()));
    }
    Ok(out)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn classify(predictions: &DMatrix<f64>) -> Vec<usize> {
    predictions
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// `n × c` one-hot matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

/// Outcome of validation tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub multiplier: f64,
    pub sigma2: f64,
    /// `(multiplier, validation accuracy)` for every candidate.
    pub scores: Vec<(f64, f64)>,
}

/// Pick the noise multiplier with the best validation accuracy, preferring the
/// largest on ties.
pub fn tune_noise(
    q_nn: &DMatrix<f64>,
    q_vn: &DMatrix<f64>,
    y: &DMatrix<f64>,
    val_labels: &[usize],
    config: &RegressionConfig,
) -> Result<Tuning> {
    if config.multipliers.is_empty() {
        return Err(Error::Contract("empty noise grid".into()));
    }
    let scale = q_nn.trace() / q_nn.nrows() as f64;
    let mut scores = Vec::with_capacity(config.multipliers.len());
    let mut best: Option<(f64, f64)> = None;
    for &m in &config.multipliers {
        let pred = posterior_mean(q_nn, q_vn, y, m * scale)?;
        let acc = accuracy(&classify(&pred), val_labels);
        scores.push((m, acc));
        best = match best {
            Some((bm, ba)) if ba > acc || (ba == acc && bm > m) => Some((bm, ba)),
            _ => Some((m, acc)),
        };
    }
    let (multiplier, _) = best.expect("non-empty grid");
    Ok(Tuning { multiplier, sigma2: multiplier * scale, scores })
}

/// Validation split size used when the remainder allows it.
pub const VALIDATION_SIZE: usize = 5000;

/// Class-balanced train split plus validation and test splits, centred on the
/// training mean and projected to the unit sphere.
///
/// The validation split takes [`VALIDATION_SIZE`] of the remaining examples when more
/// than that remain, otherwise 20% of them; the rest is the test split.
pub fn prepare_splits(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (train_idx, rest) = class_balanced_split(&data.targets, n_train, seed)?;
    let n_val = if rest.len() > VALIDATION_SIZE { VALIDATION_SIZE } else { rest.len() / 5 };
    let train = data.select(&train_idx, Split::Train);
    let val = data.select(&rest[..n_val], Split::Val);
    let test = data.select(&rest[n_val..], Split::Test);
    let (train, mut others) = preprocess_sphere(&train, &[&val, &test])?;
    let test = others.pop().expect("two splits");
    let val = others.pop().expect("two splits");
    Ok((train, val, test))
}

/// Result of a tuned posterior-mean classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub tuning: Tuning,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Tune the noise on `val`, then report accuracy on `test`.
pub fn classify_with_kernel(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    desc: &KernelDescriptor,
    config: &RegressionConfig,
) -> Result<ClassificationReport> {
    let classes = train.n_classes().max(val.n_classes()).max(test.n_classes());
    let y = one_hot(&train.targets, classes);
    let q_nn = gram(train, None, desc)?.values;
    let q_vn = gram(val, Some(train), desc)?.values;
    let q_tn = gram(test, Some(train), desc)?.values;
    let tuning = tune_noise(&q_nn, &q_vn, &y, &val.targets, config)?;
    let val_accuracy = tuning
        .scores
        .iter()
        .find(|(m, _)| *m == tuning.multiplier)
        .map_or(0.0, |(_, a)| *a);
    let pred = posterior_mean(&q_nn, &q_tn, &y, tuning.sigma2)?;
    let test_accuracy = accuracy(&classify(&pred), &test.targets);
    Ok(ClassificationReport { tuning, val_accuracy, test_accuracy })
}
