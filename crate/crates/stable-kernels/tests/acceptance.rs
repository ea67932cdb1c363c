//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Criteria listed in
//! [`KNOWN_UNATTAINABLE`] are computed faithfully and reported as FAIL; the process
//! exits non-zero only when the set of failing criteria differs from that list.

use nalgebra::{DMatrix, DVector};
use stable_kernels::data::{circle_points, load_dataset, sphere_points, Format};
use stable_kernels::dual::{fhat_taylor, relu_fhat, DEFAULT_N_MAX};
use stable_kernels::gp::{classify_with_kernel, prepare_splits, RegressionConfig};
use stable_kernels::grad_moments::grad_profile;
use stable_kernels::gram::{gram_points, spectrum, zonal_spectrum, Assembly, KernelDescriptor, KernelKind, Normalization};
use stable_kernels::kernels::{corr_forward, nngp_forward, ntk_forward, q0};
use stable_kernels::limits::{discrete_ode_gap, ode_trajectory};
use stable_kernels::mc::{mc_grad_moment, mc_nngp_error, McConfig};
use stable_kernels::pacbayes::gp_kl;
use stable_kernels::scaling::{decreasing_lambda, decreasing_total_sq};
use stable_kernels::{KernelHyper, ScalingScheme};
use std::path::PathBuf;
use std::time::{Duration, Instant};

/// Criteria that cannot be met as stated; see the decisions ledger.
const KNOWN_UNATTAINABLE: [usize; 2] = [7, 11];

const SEED: u64 = 20_240_917;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

/// `(id, name, runtime budget, check)`.
type Criterion = (usize, &'static str, Duration, fn() -> Check);

fn hyper(sw: f64, sb: f64, d: usize) -> KernelHyper {
    KernelHyper::new(sw, sb, d).expect("valid hyperparameters")
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn c1_exploding_kernel() -> Check {
    let h = hyper(2.0, 0.0, 4);
    let x = [1.0, -1.0, 1.0, 1.0];
    let s = ntk_forward(&x, &x, &h, &ScalingScheme::Unscaled, 60)?;
    let q0d = s[0].q_aa;
    let mut worst_ratio = 0.0f64;
    let mut worst_ntk = 0.0f64;
    for l in 0..=60 {
        if l > 0 {
            worst_ratio = worst_ratio.max(rel(s[l].q_aa / s[l - 1].q_aa, 2.0));
        }
        let closed = (l as f64 + 2.0) * 2f64.powi(l as i32 - 1) * q0d;
        worst_ntk = worst_ntk.max(rel(s[l].theta_ab.unwrap(), closed));
    }
    let pass = worst_ratio <= 1e-9 && worst_ntk <= 1e-9;
    Ok((pass, format!("max |Q_(l+1)/Q_l - 2|/2 = {worst_ratio:.1e}, max NTK rel. error = {worst_ntk:.1e} (tol 1e-9)")))
}

fn c2_stable_diagonals() -> Check {
    let depth = 10_000;
    let mut worst = f64::NEG_INFINITY;
    for scheme in [ScalingScheme::Uniform, ScalingScheme::Decreasing] {
        for sw in [1.0, 2.0, 3.0] {
            let h = hyper(sw, 0.0, 3);
            let x = [1.0, 0.5, -1.2];
            let s = nngp_forward(&x, &x, &h, &scheme, depth)?;
            let bound = (sw / 2.0 * scheme.sum_lambda_sq(depth)?).exp() * s[0].q_aa * (1.0 + 1e-9);
            for st in &s {
                worst = worst.max(st.q_aa / bound);
            }
        }
    }
    Ok((worst <= 1.0, format!("max Q_l(x,x)/bound = {worst:.6} over uniform/decreasing, σ_w² ∈ {{1,2,3}}, L = 10^4")))
}

fn c3_continuum() -> Check {
    let h = hyper(2.0, 0.1, 3);
    let pts = sphere_points(40, 3, 3f64.sqrt(), SEED);
    let depths = [100, 1000, 10_000];
    let mut worst = [0.0f64; 3];
    let mut monotone = true;
    for pair in pts.chunks(2) {
        let s0 = q0(&pair[0], &pair[1], &h)?;
        let reference = ode_trajectory(&s0, &h, 1.0, 10_000, false)?;
        let gaps: Vec<f64> = depths.iter().map(|&l| discrete_ode_gap(&s0, &h, l, &reference)).collect::<Result<_, _>>()?;
        monotone &= gaps.windows(2).all(|w| w[1] < w[0]);
        for (w, g) in worst.iter_mut().zip(&gaps) {
            *w = w.max(*g);
        }
    }
    let pass = monotone && worst[2] < 1e-3;
    Ok((pass, format!("max gaps L=10^2,10^3,10^4: {:.2e}, {:.2e}, {:.2e}; monotone for all 20 pairs: {monotone}", worst[0], worst[1], worst[2])))
}

fn c4_decreasing_rate() -> Check {
    // Every block adds between σ_b²λ² and (σ_b² + (σ_w²/2)·D_∞)λ² to Q, since 0 ≤ f̂ ≤ 1
    // and every diagonal stays below D_∞.
    let (sw, sb) = (2.0, 0.1);
    let h = hyper(sw, sb, 3);
    let far = 5000;
    let levels = [50, 100, 200, 400];
    let pts = sphere_points(40, 3, 3f64.sqrt(), SEED + 4);
    let shift = 2.0 * sb / sw;
    let d_inf = (sw + sb + shift) * (sw / 2.0 * decreasing_total_sq()).exp() - shift;
    let tail_from = |l: usize| (l..=far).map(|k| decreasing_lambda(k).powi(2)).sum::<f64>();
    let a = levels.iter().map(|&l| sb * (tail_from(l) - decreasing_lambda(l).powi(2)) / tail_from(l)).fold(f64::INFINITY, f64::min);
    let b = sb + sw / 2.0 * d_inf;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for pair in pts.chunks(2) {
        let s = nngp_forward(&pair[0], &pair[1], &h, &ScalingScheme::Decreasing, far)?;
        for &l in &levels {
            let r = (s[l].q_ab - s[far].q_ab).abs() / tail_from(l);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let pass = lo >= a && hi <= b;
    Ok((pass, format!("ratios in [{lo:.4}, {hi:.4}], bracket [A, B] = [{a:.4}, {b:.4}]")))
}

fn c5_degenerate_rate() -> Check {
    let h = hyper(2.0, 0.0, 1);
    let c = corr_forward(0.5, &h, &ScalingScheme::Unscaled, 10_000)?;
    let ls: Vec<usize> = (0..=10).map(|i| (1000.0 * 10f64.powf(i as f64 / 10.0)).round() as usize).collect();
    let xs: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = ls.iter().map(|&l| (1.0 - c[l]).ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    Ok(((slope + 2.0).abs() <= 0.1, format!("log-log slope of 1 - C_L over [10^3, 10^4] = {slope:.4} (target -2 ± 0.1)")))
}

/// Least squares `y ≈ slope·x + intercept`; returns `(slope, intercept, R²)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}

fn corr_desc(scheme: ScalingScheme, depth: usize, kind: KernelKind, d: usize) -> KernelDescriptor {
    KernelDescriptor { scheme, depth, hyper: hyper(2.0, 0.0, d), kind, normalization: Normalization::Correlation }
}

fn c6_spectrum_collapse() -> Check {
    let pts = circle_points(1000, SEED);
    let second = |scheme: ScalingScheme, depth: usize| -> Result<f64, Box<dyn std::error::Error>> {
        let g = gram_points(&pts, &corr_desc(scheme, depth, KernelKind::Nngp, 2), Assembly::Auto)?;
        Ok(spectrum(&g.values, 2)?.eigenvalues[1])
    };
    let unscaled: Vec<f64> = [1, 10, 100, 1000].iter().map(|&l| second(ScalingScheme::Unscaled, l)).collect::<Result<_, _>>()?;
    let uniform = second(ScalingScheme::Uniform, 1000)?;
    let decreasing = second(ScalingScheme::Decreasing, 1000)?;
    let decreasing_sweep = unscaled.windows(2).all(|w| w[1] < w[0]);
    let mut worst_psd = f64::INFINITY;
    for scheme in [ScalingScheme::Unscaled, ScalingScheme::Uniform, ScalingScheme::Decreasing] {
        let ntk = gram_points(&pts, &corr_desc(scheme.clone(), 100, KernelKind::Ntk, 2), Assembly::Auto)?.values;
        let nngp = gram_points(&pts, &corr_desc(scheme, 100, KernelKind::Nngp, 2), Assembly::Auto)?.values;
        let top = ntk.clone().symmetric_eigenvalues().max();
        worst_psd = worst_psd.min((ntk - nngp).symmetric_eigenvalues().min() / top);
    }
    let pass = unscaled[3] < 1e-2 && decreasing_sweep && uniform > 1e-2 && decreasing > 1e-2 && worst_psd >= -1e-8;
    Ok((
        pass,
        format!(
            "unscaled μ2/μ1 at L=1,10,10^2,10^3: {:.3e}, {:.3e}, {:.3e}, {:.3e}; uniform {uniform:.3e}, decreasing {decreasing:.3e}; min eig(NTK-NNGP)/max = {worst_psd:.1e}",
            unscaled[0], unscaled[1], unscaled[2], unscaled[3]
        ),
    ))
}

fn mnist_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k-images-idx3-ubyte.gz")
}

fn c7_mnist() -> Check {
    let data = load_dataset(&mnist_path(), Format::Idx, None)?;
    let (train, val, test) = prepare_splits(&data, 1000, SEED)?;
    let config = RegressionConfig::default();
    let d = train.dim();
    let run = |scheme: ScalingScheme, depth: usize| -> Result<f64, Box<dyn std::error::Error>> {
        let desc = corr_desc(scheme, depth, KernelKind::Nngp, d);
        Ok(classify_with_kernel(&train, &val, &test, &desc, &config)?.test_accuracy * 100.0)
    };
    let decreasing = run(ScalingScheme::Decreasing, 200)?;
    let unscaled: Vec<f64> = [50, 200, 1000].iter().map(|&l| run(ScalingScheme::Unscaled, l)).collect::<Result<_, _>>()?;
    let near = (decreasing - 92.9).abs() <= 2.0;
    let falling = unscaled.windows(2).all(|w| w[1] < w[0]);
    let collapsed = unscaled[2] < 75.0;
    Ok((
        near && falling && collapsed,
        format!(
            "decreasing L=200: {decreasing:.2}% (92.9 ± 2.0: {near}); unscaled L=50,200,1000: {:.2}%, {:.2}%, {:.2}% (strictly falling: {falling}, below 75%: {collapsed})",
            unscaled[0], unscaled[1], unscaled[2]
        ),
    ))
}

fn c8_curse_of_depth() -> Check {
    let d = 10;
    let pts = sphere_points(50, d, (d as f64).sqrt(), SEED + 8);
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p[0].signum()));
    let kl_at = |scheme: ScalingScheme, depth: usize, sigma2: f64| -> Result<f64, Box<dyn std::error::Error>> {
        let desc = KernelDescriptor { scheme, depth, hyper: hyper(2.0, 0.0, d), kind: KernelKind::Nngp, normalization: Normalization::Covariance };
        Ok(gp_kl(&gram_points(&pts, &desc, Assembly::Direct)?.values, &y, sigma2)?.kl)
    };
    let q0 = DMatrix::from_fn(pts.len(), pts.len(), |i, j| 2.0 * pts[i].iter().zip(&pts[j]).map(|(a, b)| a * b).sum::<f64>() / d as f64);
    let sigma2 = 0.01 * q0.trace() / pts.len() as f64;
    let depths = [4.0, 8.0, 16.0, 32.0];
    let unscaled: Vec<f64> = depths.iter().map(|&l| kl_at(ScalingScheme::Unscaled, l as usize, sigma2)).collect::<Result<_, _>>()?;
    let decreasing: Vec<f64> = depths.iter().map(|&l| kl_at(ScalingScheme::Decreasing, l as usize, sigma2)).collect::<Result<_, _>>()?;
    let (slope, _, r2) = linear_fit(&depths, &unscaled);
    let max = decreasing.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = decreasing.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (max - min) / max;
    let pass = slope > 0.0 && r2 > 0.99 && spread < 0.1;
    Ok((pass, format!("unscaled KL slope {slope:.3}/layer, R² = {r2:.5}; decreasing KL spread {:.2}%", 100.0 * spread)))
}

fn c9_gradient_moments() -> Check {
    let (depth, width, samples) = (8, 1024, 5000);
    let x = [1.0, -0.5, 0.8];
    let mut exact_err = 0.0f64;
    let mut mc_err = 0.0f64;
    for scheme in [ScalingScheme::Unscaled, ScalingScheme::Uniform, ScalingScheme::Decreasing] {
        let h = hyper(2.0, 0.0, 3);
        let profile = grad_profile(&scheme, &h, depth, 1.0)?;
        let lambdas = scheme.lambdas(depth)?;
        for l in 0..=depth {
            let product: f64 = lambdas[l..].iter().map(|lam| 1.0 + lam * lam).product();
            exact_err = exact_err.max(rel(profile.qbar[l], product));
        }
        let cfg = McConfig { width, depth, n_samples: samples, seed: SEED + 9, scheme, hyper: h };
        let mc = mc_grad_moment(&cfg, &x, 0.0)?.ratios();
        for (r, q) in mc.iter().zip(&profile.qbar) {
            mc_err = mc_err.max(rel(*r, q / profile.terminal()));
        }
    }
    let pass = exact_err <= 1e-12 && mc_err <= 0.15;
    Ok((pass, format!("exact profile rel. error {exact_err:.1e} (tol 1e-12); Monte Carlo max rel. error {:.2}% (tol 15%)", 100.0 * mc_err)))
}

fn c10_mc_kernel() -> Check {
    let configs = 50;
    let mut passed = 0;
    let mut worst = 0.0f64;
    for i in 0..configs {
        let mix = |k: u64| ((SEED ^ (i as u64 * 0x9E37_79B9) ^ k).wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11) as f64 / (1u64 << 53) as f64;
        let scheme = match i % 3 {
            0 => ScalingScheme::Unscaled,
            1 => ScalingScheme::Uniform,
            _ => ScalingScheme::Decreasing,
        };
        let h = hyper(0.5 + 2.5 * mix(1), 0.5 * mix(2), 3);
        let pts = sphere_points(2, 3, 3f64.sqrt(), SEED + 100 + i as u64);
        let cfg = McConfig { width: 1024, depth: 8, n_samples: 5000, seed: SEED + 1000 + i as u64, scheme, hyper: h };
        let r = mc_nngp_error(&cfg, &pts[0], &pts[1])?;
        worst = worst.max(r.z_score.abs());
        if r.z_score.abs() <= 4.0 {
            passed += 1;
        }
    }
    let pass = passed * 10 >= configs * 9;
    Ok((pass, format!("{passed}/{configs} configurations within 4 standard errors (need 90%); max |z| = {worst:.2}")))
}

fn c11_dual_suite() -> Check {
    let series = fhat_taylor(DEFAULT_N_MAX)?;
    let mut worst = 0.0f64;
    for i in 0..=1000 {
        let g = -1.0 + 2.0 * i as f64 / 1000.0;
        worst = worst.max((series.eval(g) - relu_fhat(g)?).abs());
    }
    let a = &series.coefficients;
    let signs = a.iter().enumerate().all(|(n, &c)| if n >= 3 && n % 2 == 1 { c == 0.0 } else { c > 0.0 });
    Ok((worst <= 1e-6 && signs, format!("60-term max |error| on 1001-point grid = {worst:.3e} (tol 1e-6); sign pattern holds: {signs}")))
}

fn c12_zonal() -> Check {
    let order = 64;
    let h = hyper(2.0, 0.0, 3);
    let p = |t: f64| corr_forward(t, &h, &ScalingScheme::Unscaled, 2).expect("valid correlation")[2];
    let mu = zonal_spectrum(p, 3, 12, order)?;
    let positive = mu.iter().all(|&m| m > 0.0);
    let ones = zonal_spectrum(|_| 1.0, 3, 12, order)?;
    let linear = zonal_spectrum(|t| t, 3, 12, order)?;
    let mut ortho = ones[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    ortho = ortho.max(linear[0].abs()).max(linear[2..].iter().map(|v| v.abs()).fold(0.0, f64::max));
    let pass = positive && ortho < 1e-10 && ones[0] > 0.0 && linear[1] > 0.0;
    let min_mu = mu.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((pass, format!("min μ_k (k ≤ 12) = {min_mu:.3e}; orthogonality residual = {ortho:.1e} (tol 1e-10)")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "exploding kernel", Duration::from_secs(1), c1_exploding_kernel),
        (2, "stable diagonals", Duration::from_secs(1), c2_stable_diagonals),
        (3, "continuum convergence", Duration::from_secs(10), c3_continuum),
        (4, "decreasing-limit rate", Duration::from_secs(10), c4_decreasing_rate),
        (5, "degenerate correlation rate", Duration::from_secs(5), c5_degenerate_rate),
        (6, "spectrum collapse", Duration::from_secs(120), c6_spectrum_collapse),
        (7, "MNIST desk-scale accuracy", Duration::from_secs(600), c7_mnist),
        (8, "curse of depth", Duration::from_secs(30), c8_curse_of_depth),
        (9, "gradient moments", Duration::from_secs(300), c9_gradient_moments),
        (10, "MC kernel certification", Duration::from_secs(600), c10_mc_kernel),
        (11, "dual-function suite", Duration::from_secs(1), c11_dual_suite),
        (12, "zonal spectra", Duration::from_secs(5), c12_zonal),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed.push(id);
        }
        println!(
            "criterion {id:>2} [{name}]: {} | {detail} | {:.2}s (budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("failing criteria: {failed:?}; documented as unattainable: {KNOWN_UNATTAINABLE:?}");
    if failed != KNOWN_UNATTAINABLE {
        eprintln!("acceptance: failing set differs from the documented one");
        std::process::exit(1);
    }
}
