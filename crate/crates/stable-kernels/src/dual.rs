//! ReLU dual functions.
//!
//! For a centred Gaussian pair with correlation `γ`, the ReLU layer maps the
//! correlation through
//!
//! - `f(γ) = (√(1−γ²) − γ·arccos γ) / π`
//! - `f̂(γ) = γ + f(γ)`
//! - `f′(γ) = −arccos(γ) / π`
//!
//! `f̂` is analytic on `(-1, 1)` with a Taylor series whose odd coefficients past
//! the linear term vanish and whose even coefficients are positive.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_PI, PI};

/// Arguments within this distance outside `[-1, 1]` are clamped.
pub const CLAMP_TOL: f64 = 1e-12;

/// Default number of Taylor coefficients.
pub const DEFAULT_N_MAX: usize = 60;

fn checked(gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma.abs() > 1.0 + CLAMP_TOL {
        return Err(Error::Domain { value: gamma });
    }
    Ok(gamma.clamp(-1.0, 1.0))
}

/// `(sin θ − θ cos θ) / π` with a series near `θ = 0` where the difference cancels.
fn f_of_angle(theta: f64) -> f64 {
    if theta < 0.1 {
        let t2 = theta * theta;
        // θ³/3 − θ⁵/30 + θ⁷/840 − θ⁹/45360 + θ¹¹/3991680
        let s = 1.0 / 3.0 - t2 * (1.0 / 30.0 - t2 * (1.0 / 840.0 - t2 * (1.0 / 45360.0 - t2 / 3991680.0)));
        theta * t2 * s * FRAC_1_PI
    } else {
        (theta.sin() - theta * theta.cos()) * FRAC_1_PI
    }
}

/// `f(γ) = (√(1−γ²) − γ·arccos γ)/π`, in `[0, 1]`.
pub fn relu_f(gamma: f64) -> Result<f64> {
    let g = checked(gamma)?;
    Ok(f_of_angle(g.acos()))
}

/// `f̂(γ) = γ + f(γ)`, the ReLU correlation map; `f̂(1) = 1`, `f̂(−1) = 0`.
pub fn relu_fhat(gamma: f64) -> Result<f64> {
    let g = checked(gamma)?;
    Ok(g + f_of_angle(g.acos()))
}

/// `f′(γ) = −arccos(γ)/π`, in `[−1, 0]`.
pub fn relu_fprime(gamma: f64) -> Result<f64> {
    let g = checked(gamma)?;
    Ok(-g.acos() * FRAC_1_PI)
}

/// `f̂′(γ) = 1 + f′(γ) = arcsin(γ)/π + 1/2`, in `[0, 1]`.
pub fn relu_fhat_prime(gamma: f64) -> Result<f64> {
    let g = checked(gamma)?;
    Ok(1.0 - g.acos() * FRAC_1_PI)
}

/// Coefficients `a_0..a_n` of the Maclaurin series of `f̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSeries {
    pub coefficients: Vec<f64>,
}

impl TaylorSeries {
    /// Highest power `n` carried.
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Partial sum `Σ a_n γⁿ` by Horner's rule.
    pub fn eval(&self, gamma: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * gamma + a)
    }
}

/// One step of the `b_{k,m}` recursion, mapping row `k` (length `k`) to row `k+1`.
///
/// `b_{k+1,j} = (2j+2)(2j+1)·b_{k,j+1} + (4j+1)(2k+2j−1)·b_{k,j} + (2k+2j−3)(2k+2j−1)·b_{k,j−1}`
/// with out-of-range entries zero. The whole row is multiplied by `scale`.
fn b_step(prev: &[f64], k: usize, scale: f64) -> Vec<f64> {
    let at = |j: isize| -> f64 {
        if j < 0 || j as usize >= prev.len() {
            0.0
        } else {
            prev[j as usize]
        }
    };
    let kf = k as f64;
    (0..=k)
        .map(|j| {
            let jf = j as f64;
            let ji = j as isize;
            let v = (2.0 * jf + 2.0) * (2.0 * jf + 1.0) * at(ji + 1)
                + (4.0 * jf + 1.0) * (2.0 * kf + 2.0 * jf - 1.0) * at(ji)
                + (2.0 * kf + 2.0 * jf - 3.0) * (2.0 * kf + 2.0 * jf - 1.0) * at(ji - 1);
            v * scale
        })
        .collect()
}

/// Integer rows `b_1..b_{k_max}` of the derivative recursion.
///
/// Row `k` gives `f̂^{(2k)}(γ) = Σ_m b_{k,m} γ^{2m} (1−γ²)^{−(2k−1)/2−m} / π`, so
/// `b_{k,0}` is `π·f̂^{(2k)}(0)`. Exact in `f64` while entries stay below `2^53`.
pub fn b_coefficients(k_max: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(k_max);
    if k_max == 0 {
        return rows;
    }
    rows.push(vec![1.0]);
    for k in 1..k_max {
        let next = b_step(&rows[k - 1], k, 1.0);
        rows.push(next);
    }
    rows
}

/// Taylor coefficients `a_0..a_{n_max}` of `f̂`.
///
/// `a_0 = 1/π`, `a_1 = 1/2`, odd terms vanish and `a_{2k} = b_{k,0} / (π·(2k)!)`.
/// The rows are carried as `b_{k,m}/(2k)!` so the factorial never forms on its own.
pub fn fhat_taylor(n_max: usize) -> Result<TaylorSeries> {
    let mut a = vec![0.0; n_max + 1];
    a[0] = FRAC_1_PI;
    if n_max >= 1 {
        a[1] = 0.5;
    }
    let k_max = n_max / 2;
    if k_max >= 1 {
        // b_{1,0} / 2!
        let mut beta = vec![0.5];
        a[2] = beta[0] / PI;
        for k in 1..k_max {
            let scale = 1.0 / ((2 * k + 1) as f64 * (2 * k + 2) as f64);
            beta = b_step(&beta, k, scale);
            a[2 * k + 2] = beta[0] / PI;
        }
    }
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Taylor coefficient a_{i}")));
    }
    Ok(TaylorSeries { coefficients: a })
}
