//! Finite-width Monte Carlo for random residual networks
//! `y_0 = W_0 x + B_0`, `y_l = y_{l−1} + λ_l(W_l φ(y_{l−1}) + B_l)`.
//!
//! Weights are never stored. Given the activations `Φ` of a layer for `m` inputs, the
//! rows of `W_l Φ + B_l` are independent `N(0, (σ_w²/N)ΦᵀΦ + σ_b²·11ᵀ)` vectors, so a
//! layer costs `O(N·m)`. For gradients of a single input, the weight matrix is only
//! known through `W_l v = z`; conditioning a Gaussian matrix on that constraint gives
//! `W_lᵀg = v(zᵀg)/|v|² + (I − vvᵀ/|v|²)·w̃` with `w̃ ~ N(0, (σ_w²/N)|g|²·I)`, which
//! keeps backpropagation exact without forming `W_l`.
//!
//! Every draw comes from a generator keyed by `(seed, sample, layer, stream)`, so
//! results do not depend on how samples are scheduled across threads.

use crate::error::{Error, Result};
use crate::kernels::{nngp_forward, KernelHyper};
use crate::scaling::ScalingScheme;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Network and sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub width: usize,
    pub depth: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub scheme: ScalingScheme,
    pub hyper: KernelHyper,
}

impl McConfig {
    fn validate(&self) -> Result<Vec<f64>> {
        if self.width < 8 {
            return Err(Error::Contract(format!("width {} below 8", self.width)));
        }
        if self.n_samples < 100 {
            return Err(Error::Contract(format!("{} samples below 100", self.n_samples)));
        }
        self.scheme.lambdas(self.depth)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, sample, layer, stream)` key.
pub fn keyed_rng(seed: u64, sample: u64, layer: u64, stream: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(splitmix(seed) ^ sample) ^ layer) ^ stream);
    ChaCha8Rng::seed_from_u64(key)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Symmetric square root factor `R` with `RRᵀ = S` (negative eigenvalues clipped).
fn sqrt_factor(s: DMatrix<f64>) -> DMatrix<f64> {
    let m = s.nrows();
    let eig = SymmetricEigen::new(s);
    let mut r = eig.eigenvectors;
    for j in 0..m {
        let root = eig.eigenvalues[j].max(0.0).sqrt();
        r.column_mut(j).scale_mut(root);
    }
    r
}

/// Fill `out` (row-major `n × m`) with rows drawn from `N(0, RRᵀ)`.
fn gaussian_rows(r: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let m = r.nrows();
    let mut z = vec![0.0; m];
    for row in out.chunks_exact_mut(m).take(n) {
        z.iter_mut().for_each(|v| *v = normal(rng));
        for (a, o) in row.iter_mut().enumerate() {
            *o = (0..m).map(|b| r[(a, b)] * z[b]).sum();
        }
    }
}

fn input_gram(inputs: &[Vec<f64>], h: &KernelHyper) -> Result<DMatrix<f64>> {
    let m = inputs.len();
    for x in inputs {
        if x.len() != h.input_dim {
            return Err(Error::DimensionMismatch { expected: h.input_dim, found: x.len() });
        }
    }
    let d = h.input_dim as f64;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        h.sigma_b_sq + h.sigma_w_sq * inputs[i].iter().zip(&inputs[j]).map(|(a, b)| a * b).sum::<f64>() / d
    }))
}

/// One network draw for `m` inputs; returns the first output unit for each input.
fn forward_one(cfg: &McConfig, lambdas: &[f64], k0: &DMatrix<f64>, sample: u64) -> Vec<f64> {
    let (n, m) = (cfg.width, k0.nrows());
    let h = &cfg.hyper;
    let mut y = vec![0.0; n * m];
    let mut rng = keyed_rng(cfg.seed, sample, 0, 0);
    gaussian_rows(&sqrt_factor(k0.clone()), n, &mut rng, &mut y);
    let mut z = vec![0.0; n * m];
    for (l, &lam) in lambdas.iter().enumerate() {
        let mut s = DMatrix::from_element(m, m, h.sigma_b_sq);
        for row in y.chunks_exact(m) {
            for a in 0..m {
                let pa = relu(row[a]);
                if pa == 0.0 {
                    continue;
                }
                for b in a..m {
                    s[(a, b)] += h.sigma_w_sq / n as f64 * pa * relu(row[b]);
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                s[(a, b)] = s[(b, a)];
            }
        }
        let mut rng = keyed_rng(cfg.seed, sample, l as u64 + 1, 0);
        gaussian_rows(&sqrt_factor(s), n, &mut rng, &mut z);
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi += lam * zi;
        }
    }
    y[..m].to_vec()
}

/// Output samples, one row per network draw and one column per input.
pub fn sample_forward(cfg: &McConfig, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let lambdas = cfg.validate()?;
    let k0 = input_gram(inputs, &cfg.hyper)?;
    let rows: Vec<Vec<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|s| forward_one(cfg, &lambdas, &k0, s))
        .collect();
    Ok(DMatrix::from_fn(cfg.n_samples, inputs.len(), |i, j| rows[i][j]))
}

/// Output samples from networks whose weight matrices are drawn explicitly.
///
/// Costs `O(N²)` per layer; meant for small widths as a reference for [`sample_forward`].
pub fn sample_forward_dense(cfg: &McConfig, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let lambdas = cfg.validate()?;
    input_gram(inputs, &cfg.hyper)?;
    let rows: Vec<Vec<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut net = DenseNet::draw(cfg, &lambdas, s);
            inputs.iter().map(|x| net.forward(x)[0]).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(cfg.n_samples, inputs.len(), |i, j| rows[i][j]))
}

/// Explicit weights of one network, streams distinct from the implicit sampler.
struct DenseNet<'a> {
    cfg: &'a McConfig,
    lambdas: &'a [f64],
    weights: Vec<DMatrix<f64>>,
    biases: Vec<Vec<f64>>,
    /// Activations of the last forward pass, `y_0..y_L`.
    trace: Vec<Vec<f64>>,
}

impl<'a> DenseNet<'a> {
    fn draw(cfg: &'a McConfig, lambdas: &'a [f64], sample: u64) -> Self {
        let (n, d) = (cfg.width, cfg.hyper.input_dim);
        let mut weights = Vec::with_capacity(lambdas.len() + 1);
        let mut biases = Vec::with_capacity(lambdas.len() + 1);
        for l in 0..=lambdas.len() {
            let mut rng = keyed_rng(cfg.seed, sample, l as u64, 7);
            let fan_in = if l == 0 { d } else { n };
            let sd = (cfg.hyper.sigma_w_sq / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(n, fan_in, |_, _| sd * normal(&mut rng)));
            let sb = cfg.hyper.sigma_b_sq.sqrt();
            biases.push((0..n).map(|_| sb * normal(&mut rng)).collect());
        }
        Self { cfg, lambdas, weights, biases, trace: Vec::new() }
    }

    fn forward(&mut self, x: &[f64]) -> Vec<f64> {
        let xv = nalgebra::DVector::from_column_slice(x);
        let mut y: Vec<f64> = (&self.weights[0] * xv).iter().zip(&self.biases[0]).map(|(a, b)| a + b).collect();
        self.trace = vec![y.clone()];
        for (l, &lam) in self.lambdas.iter().enumerate() {
            let phi = nalgebra::DVector::from_iterator(self.cfg.width, y.iter().map(|v| relu(*v)));
            let z = &self.weights[l + 1] * phi;
            for i in 0..y.len() {
                y[i] += lam * (z[i] + self.biases[l + 1][i]);
            }
            self.trace.push(y.clone());
        }
        y
    }

    /// `‖∂ℒ/∂y_l‖²` for `l = 0..L` after a forward pass, with `ℒ = ½(y_L¹ − target)²`.
    fn grad_norms(&self, target: f64) -> Vec<f64> {
        let depth = self.lambdas.len();
        let mut g = vec![0.0; self.cfg.width];
        g[0] = self.trace[depth][0] - target;
        let mut norms = vec![0.0; depth + 1];
        norms[depth] = g.iter().map(|v| v * v).sum();
        for l in (1..=depth).rev() {
            let gv = nalgebra::DVector::from_column_slice(&g);
            let wt_g = self.weights[l].transpose() * gv;
            for i in 0..g.len() {
                if self.trace[l - 1][i] > 0.0 {
                    g[i] += self.lambdas[l - 1] * wt_g[i];
                }
            }
            norms[l - 1] = g.iter().map(|v| v * v).sum();
        }
        norms
    }
}

/// Empirical second moment against the analytic kernel for one input pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NngpCheck {
    pub empirical: f64,
    pub analytic: f64,
    pub std_error: f64,
    pub z_score: f64,
}

/// Compare `E[y_L(x)·y_L(x′)]` over draws with `Q_L(x,x′)`.
pub fn mc_nngp_error(cfg: &McConfig, x: &[f64], xp: &[f64]) -> Result<NngpCheck> {
    let out = sample_forward(cfg, &[x.to_vec(), xp.to_vec()])?;
    let analytic = nngp_forward(x, xp, &cfg.hyper, &cfg.scheme, cfg.depth)?[cfg.depth].q_ab;
    let products: Vec<f64> = out.row_iter().map(|r| r[0] * r[1]).collect();
    let (empirical, std_error) = mean_and_se(&products);
    Ok(NngpCheck { empirical, analytic, std_error, z_score: (empirical - analytic) / std_error })
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical `E[y_L(x_i)·y_L(x_j)]` over draws.
pub fn mc_gram(cfg: &McConfig, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let out = sample_forward(cfg, inputs)?;
    Ok(out.transpose() * &out / cfg.n_samples as f64)
}

/// Empirical gradient moments `E‖∂ℒ/∂y_l‖²` for `l = 0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMoments {
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl GradMoments {
    /// `moments[l] / moments[L]`.
    pub fn ratios(&self) -> Vec<f64> {
        let last = *self.moments.last().expect("non-empty");
        self.moments.iter().map(|m| m / last).collect()
    }
}

fn summarize(per_sample: &[Vec<f64>]) -> GradMoments {
    let layers = per_sample[0].len();
    let (mut moments, mut std_errors) = (Vec::with_capacity(layers), Vec::with_capacity(layers));
    for l in 0..layers {
        let col: Vec<f64> = per_sample.iter().map(|s| s[l]).collect();
        let (m, se) = mean_and_se(&col);
        moments.push(m);
        std_errors.push(se);
    }
    GradMoments { moments, std_errors }
}

/// One draw: forward a single input, then backpropagate with the conditioned weights.
fn grad_one(cfg: &McConfig, lambdas: &[f64], x: &[f64], target: f64, sample: u64) -> Vec<f64> {
    let n = cfg.width;
    let h = &cfg.hyper;
    let depth = lambdas.len();
    let q0 = h.sigma_b_sq + h.sigma_w_sq * x.iter().map(|v| v * v).sum::<f64>() / h.input_dim as f64;
    let mut rng = keyed_rng(cfg.seed, sample, 0, 0);
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
    ys.push((0..n).map(|_| q0.sqrt() * normal(&mut rng)).collect());
    // z_l = W_l φ(y_{l−1}) for each block
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for (l, &lam) in lambdas.iter().enumerate() {
        let prev = &ys[l];
        let v_norm_sq: f64 = prev.iter().map(|v| relu(*v).powi(2)).sum();
        let sd_w = (h.sigma_w_sq / n as f64 * v_norm_sq).sqrt();
        let sd_b = h.sigma_b_sq.sqrt();
        let mut rng = keyed_rng(cfg.seed, sample, l as u64 + 1, 0);
        let z: Vec<f64> = (0..n).map(|_| sd_w * normal(&mut rng)).collect();
        let next: Vec<f64> = prev.iter().zip(&z).map(|(p, zi)| p + lam * (zi + sd_b * normal(&mut rng))).collect();
        zs.push(z);
        ys.push(next);
    }
    let mut g = vec![0.0; n];
    g[0] = ys[depth][0] - target;
    let mut norms = vec![0.0; depth + 1];
    norms[depth] = g[0] * g[0];
    for l in (1..=depth).rev() {
        let prev = &ys[l - 1];
        let v: Vec<f64> = prev.iter().map(|p| relu(*p)).collect();
        let v_norm_sq: f64 = v.iter().map(|a| a * a).sum();
        let g_norm_sq: f64 = g.iter().map(|a| a * a).sum();
        let sd = (h.sigma_w_sq / n as f64 * g_norm_sq).sqrt();
        let mut rng = keyed_rng(cfg.seed, sample, l as u64, 1);
        let mut wt_g: Vec<f64> = (0..n).map(|_| sd * normal(&mut rng)).collect();
        if v_norm_sq > 0.0 {
            let zg: f64 = zs[l - 1].iter().zip(&g).map(|(a, b)| a * b).sum();
            let v_eta: f64 = v.iter().zip(&wt_g).map(|(a, b)| a * b).sum();
            let coef = (zg - v_eta) / v_norm_sq;
            for (w, vi) in wt_g.iter_mut().zip(&v) {
                *w += coef * vi;
            }
        }
        let lam = lambdas[l - 1];
        for i in 0..n {
            if prev[i] > 0.0 {
                g[i] += lam * wt_g[i];
            }
        }
        norms[l - 1] = g.iter().map(|a| a * a).sum();
    }
    norms
}

/// Gradient moments of `ℒ = ½(y_L¹ − target)²` with exact (conditioned) backpropagation.
///
/// Requires width at least 256; [`mc_grad_moment_dense`] covers smaller widths.
pub fn mc_grad_moment(cfg: &McConfig, x: &[f64], target: f64) -> Result<GradMoments> {
    let lambdas = cfg.validate()?;
    if cfg.width < 256 {
        return Err(Error::Contract(format!("gradient moments need width ≥ 256, got {}", cfg.width)));
    }
    if x.len() != cfg.hyper.input_dim {
        return Err(Error::DimensionMismatch { expected: cfg.hyper.input_dim, found: x.len() });
    }
    let per_sample: Vec<Vec<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|s| grad_one(cfg, &lambdas, x, target, s))
        .collect();
    Ok(summarize(&per_sample))
}

/// Gradient moments computed with explicitly drawn weight matrices.
pub fn mc_grad_moment_dense(cfg: &McConfig, x: &[f64], target: f64) -> Result<GradMoments> {
    let lambdas = cfg.validate()?;
    if x.len() != cfg.hyper.input_dim {
        return Err(Error::DimensionMismatch { expected: cfg.hyper.input_dim, found: x.len() });
    }
    let per_sample: Vec<Vec<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut net = DenseNet::draw(cfg, &lambdas, s);
            net.forward(x);
            net.grad_norms(target)
        })
        .collect();
    Ok(summarize(&per_sample))
}
