//! PAC-Bayes quantities: Bernoulli KL, its inverse, the bound, and the KL between the
//! GP posterior and prior on the training sample. All logarithms are natural.

use crate::error::{Error, Result};
use crate::gp::factor;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// `kl(a‖p) = a ln(a/p) + (1−a) ln((1−a)/(1−p))`, with `0·ln 0 = 0`.
/// Returns `+∞` when `p ∈ {0, 1}` and `a` differs from it.
pub fn bernoulli_kl(a: f64, p: f64) -> f64 {
    let term = |u: f64, v: f64| {
        if u == 0.0 {
            0.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            u * (u / v).ln()
        }
    };
    (term(a, p) + term(1.0 - a, 1.0 - p)).max(0.0)
}

/// `sup{p ∈ [a, 1] : kl(a‖p) ≤ ε}` by bisection to `1e-12`.
pub fn kl_inverse(a: f64, eps: f64) -> f64 {
    if eps <= 0.0 {
        return a;
    }
    if bernoulli_kl(a, 1.0) <= eps {
        return 1.0;
    }
    let (mut lo, mut hi) = (a, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(a, mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `kl⁻¹(r_S, (KL + ln(2√N/δ))/N)`.
pub fn pac_bound(r_s: f64, kl_div: f64, n: usize, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_s) || n == 0 || !(delta > 0.0 && delta <= 1.0) || !(kl_div >= 0.0) {
        return Err(Error::Contract(format!("invalid bound inputs r_S={r_s}, KL={kl_div}, N={n}, δ={delta}")));
    }
    let nf = n as f64;
    Ok(kl_inverse(r_s, (kl_div + (2.0 * nf.sqrt() / delta).ln()) / nf))
}

/// KL divergence between the GP posterior and prior on the training inputs, split
/// into its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacBayesReport {
    pub kl: f64,
    /// `½ ln det(Q + σ²I) − (N/2) ln σ²`.
    pub logdet_term: f64,
    /// `−½ Tr(Q(Q + σ²I)⁻¹)`.
    pub trace_term: f64,
    /// `½ yᵀ(Q + σ²I)⁻¹ Q (Q + σ²I)⁻¹ y`.
    pub quad_term: f64,
}

/// `KL = ½ ln det(Q+σ²I) − (N/2) ln σ² − ½ Tr(Q(Q+σ²I)⁻¹) + ½ yᵀ(Q+σ²I)⁻¹Q(Q+σ²I)⁻¹y`
/// from one Cholesky factorization `Q + σ²I = LLᵀ`.
///
/// `Tr(Q(Q+σ²I)⁻¹) = N − σ²‖L⁻¹‖_F²`.
pub fn gp_kl(q: &DMatrix<f64>, y: &DVector<f64>, sigma2: f64) -> Result<PacBayesReport> {
    if !(sigma2 > 0.0) {
        return Err(Error::Contract(format!("noise variance must be positive, got {sigma2}")));
    }
    let n = q.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    let f = factor(q, sigma2)?;
    let l = f.cholesky.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NonFinite("triangular inverse".into()))?;
    let inv_trace = l_inv.norm_squared();
    let u = f.cholesky.solve(y);
    let quad = (q * &u).dot(&u);
    let logdet_term = 0.5 * (logdet - n as f64 * sigma2.ln());
    let trace_term = -0.5 * (n as f64 - (sigma2 + f.jitter) * inv_trace);
    let quad_term = 0.5 * quad;
    let kl = logdet_term + trace_term + quad_term;
    if !kl.is_finite() {
        return Err(Error::NonFinite("GP KL divergence".into()));
    }
    Ok(PacBayesReport { kl, logdet_term, trace_term, quad_term })
}

/// Empirical 0-1 risk of the Gibbs classifier `sign(f)` with `f` drawn from the GP
/// posterior on the training inputs, for labels in `{−1, +1}`.
///
/// The posterior of `f` is `N(m, Q − Q(Q+σ²I)⁻¹Q)` with `m = Q(Q+σ²I)⁻¹y`, so each
/// point contributes `Φ(−y_i m_i / √v_i)`.
pub fn gibbs_risk(q: &DMatrix<f64>, y: &DVector<f64>, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Contract(format!("noise variance must be positive, got {sigma2}")));
    }
    let n = q.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if y.iter().any(|v| v.abs() != 1.0) {
        return Err(Error::Contract("Gibbs risk needs labels in {-1, +1}".into()));
    }
    let f = factor(q, sigma2)?;
    let mean = q * f.cholesky.solve(y);
    let half = f
        .cholesky
        .l()
        .solve_lower_triangular(q)
        .ok_or_else(|| Error::NonFinite("triangular solve".into()))?;
    let std_normal = Normal::standard();
    let total: f64 = (0..n)
        .map(|i| {
            let margin = y[i] * mean[i];
            let var = (q[(i, i)] - half.column(i).norm_squared()).max(0.0);
            if var > 0.0 {
                std_normal.cdf(-margin / var.sqrt())
            } else if margin > 0.0 {
                0.0
            } else if margin < 0.0 {
                1.0
            } else {
                0.5
            }
        })
        .sum();
    Ok(total / n as f64)
}
