//! Gram matrices, eigenspectra and zonal spectra.
//!
//! On data of constant norm every kernel here depends on `x·x′` alone, so a Gram
//! matrix only needs the depth-`L` map of the cosine. That map is tabulated once at
//! the Chebyshev nodes `t_j = cos(πj/G)` and interpolated in the angle, where it is
//! smooth. Other data is evaluated pair by pair.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{normalized_pair, q0_from_dots, KernelHyper};
use crate::scaling::ScalingScheme;
use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Number of intervals of the angular table.
pub const TABLE_INTERVALS: usize = 4096;

/// Covariance/NTK selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Nngp,
    Ntk,
}

/// Raw kernel values or values divided by `√(Q_L(x,x)·Q_L(x′,x′))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Covariance,
    Correlation,
}

/// Everything that determines a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDescriptor {
    pub scheme: ScalingScheme,
    pub depth: usize,
    pub hyper: KernelHyper,
    pub kind: KernelKind,
    pub normalization: Normalization,
}

impl KernelDescriptor {
    fn validate(&self) -> Result<Vec<f64>> {
        if self.normalization == Normalization::Correlation && self.hyper.sigma_b_sq != 0.0 {
            return Err(Error::Contract(format!(
                "correlation kernels require σ_b² = 0, got {}",
                self.hyper.sigma_b_sq
            )));
        }
        self.scheme.lambdas(self.depth)
    }

    fn eval_dots(&self, lambdas: &[f64], xx: f64, xy: f64, yy: f64) -> Result<f64> {
        let s0 = q0_from_dots(xx, xy, yy, &self.hyper);
        let with_ntk = self.kind == KernelKind::Ntk;
        let n = normalized_pair(s0, &self.hyper, lambdas, with_ntk)?;
        let unit = if with_ntk { n.ntk } else { n.correlation };
        match self.normalization {
            Normalization::Correlation => Ok(unit),
            Normalization::Covariance => {
                let v = unit * n.log_scale.exp();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Overflow { layer: self.depth })
                }
            }
        }
    }

    /// Kernel value for one pair, by direct recursion.
    pub fn pair(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        if x.len() != xp.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: xp.len() });
        }
        let lambdas = self.validate()?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        self.eval_dots(&lambdas, dot(x, x), dot(x, xp), dot(xp, xp))
    }

    /// Kernel value for two inputs of squared norm `norm_sq` with cosine `t`.
    pub fn zonal(&self, norm_sq: f64, t: f64) -> Result<f64> {
        let lambdas = self.validate()?;
        self.eval_dots(&lambdas, norm_sq, norm_sq * t, norm_sq)
    }
}

/// Depth-`L` kernel as a function of the angle, tabulated on a uniform angular grid.
#[derive(Debug, Clone)]
pub struct ZonalTable {
    values: Vec<f64>,
    norm_sq: f64,
}

impl ZonalTable {
    /// Tabulate the kernel of inputs with squared norm `norm_sq`.
    pub fn build(desc: &KernelDescriptor, norm_sq: f64) -> Result<Self> {
        let lambdas = desc.validate()?;
        let values = (0..=TABLE_INTERVALS)
            .into_par_iter()
            .map(|j| {
                let t = (PI * j as f64 / TABLE_INTERVALS as f64).cos();
                desc.eval_dots(&lambdas, norm_sq, norm_sq * t, norm_sq)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values, norm_sq })
    }

    /// Four-point Lagrange interpolation in the angle `arccos t`.
    pub fn eval(&self, t: f64) -> f64 {
        let g = TABLE_INTERVALS as f64;
        let u = t.clamp(-1.0, 1.0).acos() * g / PI;
        let i = (u.floor() as usize).clamp(1, TABLE_INTERVALS - 2);
        let s = u - i as f64;
        let (v0, v1, v2, v3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // nodes at s = −1, 0, 1, 2
        -s * (s - 1.0) * (s - 2.0) / 6.0 * v0 + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * v1
            - (s + 1.0) * s * (s - 2.0) / 2.0 * v2
            + (s + 1.0) * s * (s - 1.0) / 6.0 * v3
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

/// A labelled kernel matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub descriptor: KernelDescriptor,
}

/// Common squared norm of all rows, if they agree to `1e-9` relative.
fn common_norm_sq<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Option<f64> {
    let mut first = None;
    for r in rows {
        let n = r.iter().map(|v| v * v).sum::<f64>();
        match first {
            None => first = Some(n),
            Some(f) if (n - f).abs() > 1e-9 * f => return None,
            _ => {}
        }
    }
    first.filter(|&f| f > 0.0)
}

/// How Gram entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    /// Use the angular table when all rows share one norm, else evaluate directly.
    Auto,
    /// Evaluate every pair by its own recursion.
    Direct,
}

/// Gram matrix between row sets `a` and `b` (or `a` with itself).
pub fn gram_rows(a: &[&[f64]], b: Option<&[&[f64]]>, desc: &KernelDescriptor, assembly: Assembly) -> Result<GramMatrix> {
    let lambdas = desc.validate()?;
    let b_rows = b.unwrap_or(a);
    let (n, m) = (a.len(), b_rows.len());
    let norm = match assembly {
        Assembly::Auto => common_norm_sq(a.iter().chain(b_rows.iter()).copied()),
        Assembly::Direct => None,
    };
    let table = norm.map(|ns| ZonalTable::build(desc, ns)).transpose()?;
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let mut data = vec![0.0; n * m];
    data.par_chunks_mut(m).enumerate().try_for_each(|(i, row)| -> Result<()> {
        let x = a[i];
        for (j, out) in row.iter_mut().enumerate() {
            let y = b_rows[j];
            *out = match &table {
                Some(t) => {
                    if b.is_none() && i == j {
                        t.values[0]
                    } else {
                        t.eval(dot(x, y) / t.norm_sq)
                    }
                }
                None => desc.eval_dots(&lambdas, dot(x, x), dot(x, y), dot(y, y))?,
            };
        }
        Ok(())
    })?;
    let values = DMatrix::from_row_slice(n, m, &data);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }
    Ok(GramMatrix { values, descriptor: desc.clone() })
}

/// Gram matrix between datasets.
pub fn gram(a: &Dataset, b: Option<&Dataset>, desc: &KernelDescriptor) -> Result<GramMatrix> {
    let ra: Vec<&[f64]> = a.rows().collect();
    let rb: Option<Vec<&[f64]>> = b.map(|d| d.rows().collect());
    gram_rows(&ra, rb.as_deref(), desc, Assembly::Auto)
}

/// Gram matrix of a point list with itself.
pub fn gram_points(points: &[Vec<f64>], desc: &KernelDescriptor, assembly: Assembly) -> Result<GramMatrix> {
    let rows: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    gram_rows(&rows, None, desc, assembly)
}

/// Leading eigenvalues, each divided by the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue before normalization.
    pub scale: f64,
    /// Smallest eigenvalue divided by the largest.
    pub min_ratio: f64,
}

/// Top-`k` eigenvalues of a symmetric matrix, descending and normalized by the largest.
pub fn spectrum(g: &DMatrix<f64>, k: usize) -> Result<SpectrumResult> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch { expected: g.nrows(), found: g.ncols() });
    }
    let mut ev: Vec<f64> = g.clone().symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues".into()));
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    let scale = ev.first().copied().unwrap_or(0.0);
    if !(scale > 0.0) {
        return Err(Error::Contract("largest eigenvalue is not positive".into()));
    }
    let min_ratio = ev.last().copied().unwrap_or(0.0) / scale;
    Ok(SpectrumResult { eigenvalues: ev.iter().take(k).map(|v| v / scale).collect(), scale, min_ratio })
}

/// `∫_0^π sin^n θ dθ` by the Wallis recurrence.
fn sine_power_integral(n: usize) -> f64 {
    let mut w = if n.is_multiple_of(2) { PI } else { 2.0 };
    let mut m = if n.is_multiple_of(2) { 0 } else { 1 };
    while m < n {
        m += 2;
        w *= (m - 1) as f64 / m as f64;
    }
    w
}

/// Values `P^d_0(t)..P^d_k(t)` of the Legendre polynomials of dimension `d`,
/// normalized by `P^d_k(1) = 1`: `(k+d−2)P_{k+1} = (2k+d−2)t·P_k − k·P_{k−1}`.
pub fn legendre_d(d: usize, k_max: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(k_max + 1);
    p.push(1.0);
    if k_max >= 1 {
        p.push(t);
    }
    let df = d as f64;
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + df - 2.0) * t * p[k] - kf * p[k - 1]) / (kf + df - 2.0);
        p.push(next);
    }
    p
}

/// Hecke–Funk coefficients `μ_0..μ_{k_max}` of a zonal kernel `p(t)` on `S^{d−1} ⊂ R^d`,
///
/// `μ_k = (Ω_{d−1}/Ω_d) ∫_{−1}^{1} p(t)·P^d_k(t)·(1−t²)^{(d−3)/2} dt`,
///
/// computed in the angle `t = cos θ` with `order`-point Gauss–Legendre quadrature.
pub fn zonal_spectrum(p: impl Fn(f64) -> f64 + Sync, d: usize, k_max: usize, order: usize) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::Contract(format!("sphere dimension d = {d} must be at least 2")));
    }
    if order < 4 * k_max || order < 2 {
        return Err(Error::Contract(format!("quadrature order {order} below 4·k_max = {}", 4 * k_max)));
    }
    let gl = GaussLegendre::new(order.try_into().map_err(|_| Error::Contract("zero order".into()))?);
    let nodes: Vec<(f64, f64)> = gl.iter().map(|(x, w)| (*x, *w)).collect();
    let norm = 1.0 / sine_power_integral(d - 2);
    let partial: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(x, w)| {
            let theta = PI / 2.0 * (x + 1.0);
            let t = theta.cos();
            let weight = w * PI / 2.0 * theta.sin().powi(d as i32 - 2) * p(t);
            legendre_d(d, k_max, t).into_iter().map(|v| v * weight).collect()
        })
        .collect();
    let mut mu = vec![0.0; k_max + 1];
    for row in &partial {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m *= norm);
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("zonal spectrum".into()));
    }
    Ok(mu)
}
