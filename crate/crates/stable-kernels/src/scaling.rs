//! Block scalings `λ_{l,L}` and the square-sum stability criterion.

use crate::error::{Error, Result};
use gauss_quad::GaussLegendre;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Largest scaling factor accepted from a custom list.
pub const LAMBDA_MAX: f64 = 1e6;

/// Rule producing the scaling factor of block `l` in a network of depth `L`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingScheme {
    /// `λ = 1`, the standard residual network.
    Unscaled,
    /// `λ = 1/√L`.
    Uniform,
    /// `λ_l = 1/(√l · ln(l+1))`, independent of `L`.
    Decreasing,
    /// `λ_l` read from a list, one value per block.
    Custom(Vec<f64>),
}

impl ScalingScheme {
    /// Build a custom scheme, checking every value lies in `(0, LAMBDA_MAX]`.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v <= LAMBDA_MAX) {
                return Err(Error::Contract(format!("custom λ_{} = {v} outside (0, {LAMBDA_MAX}]", i + 1)));
            }
        }
        Ok(Self::Custom(values))
    }

    /// Read a custom scheme from a text file holding one λ per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_at(path))?;
        let mut values = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                let v: f64 = trimmed.parse().map_err(|_| Error::Parse {
                    offset,
                    message: format!("not a number: {trimmed:?}"),
                })?;
                values.push(v);
            }
            offset += line.len() + 1;
        }
        Self::custom(values)
    }

    /// `λ_{l,L}` for `1 ≤ l ≤ L`.
    pub fn lambda_at(&self, l: usize, depth: usize) -> Result<f64> {
        if l < 1 || l > depth {
            return Err(Error::Index { layer: l, depth });
        }
        Ok(match self {
            Self::Unscaled => 1.0,
            Self::Uniform => 1.0 / (depth as f64).sqrt(),
            Self::Decreasing => decreasing_lambda(l),
            Self::Custom(v) => *v.get(l - 1).ok_or(Error::Index { layer: l, depth: v.len() })?,
        })
    }

    /// `[λ_{1,L}, …, λ_{L,L}]`.
    pub fn lambdas(&self, depth: usize) -> Result<Vec<f64>> {
        (1..=depth).map(|l| self.lambda_at(l, depth)).collect()
    }

    /// `Σ_{l=1}^{L} λ_{l,L}²`.
    pub fn sum_lambda_sq(&self, depth: usize) -> Result<f64> {
        Ok(self.lambdas(depth)?.iter().map(|v| v * v).sum())
    }

    /// Whether `Σλ²` stays bounded as depth grows.
    ///
    /// Exact for the built-in schemes. A custom list is judged on the probe depths it
    /// covers: bounded when the sum grows by less than 1% over the last doubling.
    pub fn is_stable(&self, probe_depths: &[usize]) -> bool {
        match self {
            Self::Unscaled => false,
            Self::Uniform | Self::Decreasing => true,
            Self::Custom(v) => {
                let Some(&top) = probe_depths.iter().filter(|&&d| d >= 2 && d <= v.len()).max() else {
                    return false;
                };
                let sum = |n: usize| v[..n].iter().map(|x| x * x).sum::<f64>();
                let (full, half) = (sum(top), sum(top / 2));
                full <= half * 1.01
            }
        }
    }

    /// Whether `λ_l` depends on `l` only.
    pub fn is_depth_independent(&self) -> bool {
        !matches!(self, Self::Uniform)
    }
}

impl fmt::Display for ScalingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unscaled => write!(f, "unscaled"),
            Self::Uniform => write!(f, "uniform"),
            Self::Decreasing => write!(f, "decreasing"),
            Self::Custom(v) => write!(f, "custom[{}]", v.len()),
        }
    }
}

impl FromStr for ScalingScheme {
    type Err = Error;

    /// Parse `unscaled`, `uniform`, `decreasing` or `custom:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unscaled" => Ok(Self::Unscaled),
            "uniform" => Ok(Self::Uniform),
            "decreasing" => Ok(Self::Decreasing),
            _ => match s.strip_prefix("custom:") {
                Some(path) => Self::from_file(Path::new(path)),
                None => Err(Error::Contract(format!(
                    "unknown scaling {s:?}; expected unscaled, uniform, decreasing or custom:<path>"
                ))),
            },
        }
    }
}

/// `1/(√l · ln(l+1))`.
pub fn decreasing_lambda(l: usize) -> f64 {
    let lf = l as f64;
    1.0 / (lf.sqrt() * lf.ln_1p())
}

fn decreasing_sq(x: f64) -> f64 {
    let ln = x.ln_1p();
    1.0 / (x * ln * ln)
}

/// `Σ_{k>L} λ_k²` for the decreasing scheme.
///
/// The first thousand terms are summed directly; the rest use Euler–Maclaurin with the
/// integral evaluated in `u = ln x`, where the integrand `1/ln²(eᵘ+1)` is smooth and
/// its tail past `u = 60` equals `1/u` to double precision.
pub fn decreasing_tail_sq(depth: usize) -> f64 {
    const DIRECT: usize = 1000;
    const U_END: f64 = 60.0;
    let start = depth + 1;
    let stop = depth + DIRECT;
    let mut direct = 0.0;
    for k in (start..stop).rev() {
        direct += decreasing_sq(k as f64);
    }
    let a = stop as f64;
    let u0 = a.ln();
    let integrand = |u: f64| {
        let l = u + (-u).exp().ln_1p();
        1.0 / (l * l)
    };
    let gl = GaussLegendre::new(48.try_into().expect("nonzero degree"));
    let panels = 8;
    let width = (U_END - u0) / panels as f64;
    let integral: f64 = (0..panels)
        .map(|p| {
            let lo = u0 + p as f64 * width;
            gl.integrate(lo, lo + width, integrand)
        })
        .sum::<f64>()
        + 1.0 / U_END;
    let g = decreasing_sq(a);
    let ln = a.ln_1p();
    let g_prime = -1.0 / (a * a * ln * ln) - 2.0 / (a * (a + 1.0) * ln * ln * ln);
    direct + integral + 0.5 * g - g_prime / 12.0
}

/// `Σ_{k≥1} λ_k²` for the decreasing scheme.
pub fn decreasing_total_sq() -> f64 {
    let head: f64 = (1..=1000).rev().map(|k| decreasing_sq(k as f64)).sum();
    head + decreasing_tail_sq(1000)
}
