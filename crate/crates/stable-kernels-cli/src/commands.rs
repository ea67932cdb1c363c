//! Subcommand implementations.

use crate::output::{emit, manifest, num, Table};
use crate::{Cli, Command, DataFormat, Emit, KernelArgs};
use nalgebra::{DMatrix, DVector};
use stable_kernels::data::{circle_points, load_dataset, preprocess_sphere, sphere_points, Dataset, Format};
use stable_kernels::gp::{classify_with_kernel, prepare_splits, RegressionConfig};
use stable_kernels::grad_moments::grad_profile;
use stable_kernels::gram::{gram_points, spectrum, Assembly, KernelDescriptor, KernelKind, Normalization};
use stable_kernels::kernels::{nngp_forward, ntk_forward, q0};
use stable_kernels::limits::{discrete_ode_gap, ode_trajectory};
use stable_kernels::mc::{mc_grad_moment, mean_and_se, sample_forward, McConfig};
use stable_kernels::pacbayes::{gibbs_risk, gp_kl, pac_bound};
use stable_kernels::{KernelHyper, ScalingScheme};
use std::error::Error;
use std::path::Path;
use std::time::Instant;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let start = Instant::now();
    let body = match &cli.command {
        Command::KernelCurve { kernel, depth, ntk, dim } => kernel_curve(kernel, *depth, *ntk, *dim)?,
        Command::Spectrum { kernel, n, dim, depths, rank, ntk, correlation, dataset, format, labels } => {
            let points = match dataset {
                Some(path) => dataset_points(path, *format, labels.as_deref(), *n)?,
                None if *dim == 2 => circle_points(*n, cli.seed),
                None => sphere_points(*n, *dim, 1.0, cli.seed),
            };
            spectrum_table(kernel, &points, depths, *rank, *ntk, *correlation)?
        }
        Command::Regress { kernel, dataset, format, labels, train, depth, correlation, ntk, multipliers, emit } => {
            let data = load_dataset(dataset, resolve_format(dataset, *format), labels.as_deref())?;
            regress(kernel, &data, *train, *depth, *correlation, *ntk, multipliers, *emit, cli.seed)?
        }
        Command::Pacbayes { kernel, n, dim, depths, sigma2, delta } => {
            pacbayes(kernel, *n, *dim, depths, *sigma2, *delta, cli.seed)?
        }
        Command::Grad { kernel, depth } => grad(kernel, *depth)?,
        Command::McValidate { kernel, width, depth, samples, dim, grad } => {
            mc_validate(kernel, *width, *depth, *samples, *dim, *grad, cli.seed)?
        }
        Command::OdeCheck { kernel, steps, depths, pairs, dim } => ode_check(kernel, *steps, depths, *pairs, *dim, cli.seed)?,
    };
    let flags = serde_json::to_value(cli)?;
    let out = cli.out.as_deref();
    emit(&body, out, manifest(flags, out, start.elapsed().as_secs_f64()))?;
    Ok(())
}

fn scheme(k: &KernelArgs) -> Result<ScalingScheme> {
    k.scaling.parse().map_err(|e| format!("invalid --scaling {:?}: {e}", k.scaling).into())
}

fn hyper(k: &KernelArgs, dim: usize) -> Result<KernelHyper> {
    Ok(KernelHyper::new(k.sigma_w2, k.sigma_b2, dim)?)
}

fn check_correlation(correlation: bool, k: &KernelArgs) -> Result<()> {
    if correlation && k.sigma_b2 != 0.0 {
        return Err(format!(
            "--correlation requires --sigma-b2 0 (got {}); drop --correlation or set the bias variance to zero",
            k.sigma_b2
        )
        .into());
    }
    Ok(())
}

fn resolve_format(path: &Path, format: Option<DataFormat>) -> Format {
    match format {
        Some(DataFormat::Csv) => Format::Csv,
        Some(DataFormat::Idx) => Format::Idx,
        None => {
            let name = path.to_string_lossy().to_ascii_lowercase();
            if name.ends_with(".csv") || name.ends_with(".csv.gz") {
                Format::Csv
            } else {
                Format::Idx
            }
        }
    }
}

fn dataset_points(path: &Path, format: Option<DataFormat>, labels: Option<&Path>, n: usize) -> Result<Vec<Vec<f64>>> {
    let data = load_dataset(path, resolve_format(path, format), labels)?;
    let take: Vec<usize> = (0..n.min(data.len())).collect();
    let subset = data.select(&take, stable_kernels::data::Split::Train);
    let (sphere, _) = preprocess_sphere(&subset, &[])?;
    Ok(sphere.rows().map(|r| r.to_vec()).collect())
}

fn kernel_curve(k: &KernelArgs, depth: usize, ntk: bool, dim: usize) -> Result<String> {
    let s = scheme(k)?;
    let h = hyper(k, dim)?;
    let x = vec![1.0; dim];
    let states = if ntk { ntk_forward(&x, &x, &h, &s, depth)? } else { nngp_forward(&x, &x, &h, &s, depth)? };
    let mut t = Table::new(&["layer", "q_diag", "theta_diag"]);
    for (l, st) in states.iter().enumerate() {
        t.push(vec![l.to_string(), num(st.q_aa), st.theta_ab.map(num).unwrap_or_default()]);
    }
    Ok(t.render())
}

fn descriptor(k: &KernelArgs, depth: usize, dim: usize, ntk: bool, correlation: bool) -> Result<KernelDescriptor> {
    check_correlation(correlation, k)?;
    Ok(KernelDescriptor {
        scheme: scheme(k)?,
        depth,
        hyper: hyper(k, dim)?,
        kind: if ntk { KernelKind::Ntk } else { KernelKind::Nngp },
        normalization: if correlation { Normalization::Correlation } else { Normalization::Covariance },
    })
}

fn spectrum_table(k: &KernelArgs, points: &[Vec<f64>], depths: &[usize], rank: usize, ntk: bool, correlation: bool) -> Result<String> {
    let dim = points.first().map_or(1, Vec::len);
    let mut t = Table::new(&["depth", "rank", "eigenvalue"]);
    for &depth in depths {
        let desc = descriptor(k, depth, dim, ntk, correlation)?;
        let g = gram_points(points, &desc, Assembly::Auto)?;
        for (r, ev) in spectrum(&g.values, rank)?.eigenvalues.iter().enumerate() {
            t.push(vec![depth.to_string(), (r + 1).to_string(), num(*ev)]);
        }
    }
    Ok(t.render())
}

#[allow(clippy::too_many_arguments)]
fn regress(
    k: &KernelArgs,
    data: &Dataset,
    n_train: usize,
    depth: usize,
    correlation: bool,
    ntk: bool,
    multipliers: &[f64],
    emit: Emit,
    seed: u64,
) -> Result<String> {
    let (train, val, test) = prepare_splits(data, n_train, seed)?;
    let desc = descriptor(k, depth, train.dim(), ntk, correlation)?;
    let config = RegressionConfig { multipliers: multipliers.to_vec() };
    let report = classify_with_kernel(&train, &val, &test, &desc, &config)?;
    let scale = report.tuning.sigma2 / report.tuning.multiplier;
    if emit == Emit::Csv {
        let mut t = Table::new(&["multiplier", "sigma2", "val_accuracy", "selected", "test_accuracy"]);
        for &(m, acc) in &report.tuning.scores {
            let selected = m == report.tuning.multiplier;
            let test_acc = if selected { num(report.test_accuracy) } else { String::new() };
            t.push(vec![num(m), num(m * scale), num(acc), selected.to_string(), test_acc]);
        }
        return Ok(t.render());
    }
    Ok(format!(
        "train {} / validation {} / test {}\nnoise multiplier {}\nsigma2 {}\nvalidation accuracy {:.4}\ntest accuracy {:.4}\n",
        train.len(),
        val.len(),
        test.len(),
        report.tuning.multiplier,
        num(report.tuning.sigma2),
        report.val_accuracy,
        report.test_accuracy
    ))
}

fn pacbayes(k: &KernelArgs, n: usize, dim: usize, depths: &[usize], sigma2: Option<f64>, delta: f64, seed: u64) -> Result<String> {
    let pts = sphere_points(n, dim, (dim as f64).sqrt(), seed);
    let y = DVector::from_iterator(n, pts.iter().map(|p| if p[0] >= 0.0 { 1.0 } else { -1.0 }));
    let h = hyper(k, dim)?;
    let sigma2 = match sigma2 {
        Some(v) => v,
        None => {
            let q0_trace: f64 = pts.iter().map(|p| q0(p, p, &h).map(|s| s.q_aa)).sum::<stable_kernels::Result<f64>>()?;
            0.01 * q0_trace / n as f64
        }
    };
    let mut t = Table::new(&["depth", "kl", "logdet", "trace", "quad", "bound"]);
    for &depth in depths {
        let desc = descriptor(k, depth, dim, false, false)?;
        let q: DMatrix<f64> = gram_points(&pts, &desc, Assembly::Direct)?.values;
        let r = gp_kl(&q, &y, sigma2)?;
        let bound = pac_bound(gibbs_risk(&q, &y, sigma2)?, r.kl.max(0.0), n, delta)?;
        t.push(vec![depth.to_string(), num(r.kl), num(r.logdet_term), num(r.trace_term), num(r.quad_term), num(bound)]);
    }
    Ok(t.render())
}

fn grad(k: &KernelArgs, depth: usize) -> Result<String> {
    let p = grad_profile(&scheme(k)?, &hyper(k, 1)?, depth, 1.0)?;
    let mut t = Table::new(&["layer", "qbar"]);
    for (l, q) in p.qbar.iter().enumerate() {
        t.push(vec![l.to_string(), num(*q)]);
    }
    Ok(t.render())
}

fn mc_validate(k: &KernelArgs, width: usize, depth: usize, samples: usize, dim: usize, with_grad: bool, seed: u64) -> Result<String> {
    let h = hyper(k, dim)?;
    let s = scheme(k)?;
    let pts = sphere_points(2, dim, (dim as f64).sqrt(), seed);
    let cfg = McConfig { width, depth, n_samples: samples, seed, scheme: s.clone(), hyper: h };
    let out = sample_forward(&cfg, &pts)?;
    let last = *nngp_forward(&pts[0], &pts[1], &h, &s, depth)?.last().expect("non-empty");
    let mut t = Table::new(&["quantity", "empirical", "analytic", "z"]);
    for (name, i, j, analytic) in [("cov_aa", 0, 0, last.q_aa), ("cov_ab", 0, 1, last.q_ab), ("cov_bb", 1, 1, last.q_bb)] {
        let products: Vec<f64> = out.row_iter().map(|r| r[i] * r[j]).collect();
        let (mean, se) = mean_and_se(&products);
        t.push(vec![name.into(), num(mean), num(analytic), num((mean - analytic) / se)]);
    }
    if with_grad {
        let profile = grad_profile(&s, &h, depth, 1.0)?;
        let ratios = mc_grad_moment(&cfg, &pts[0], 0.0)?.ratios();
        for (l, r) in ratios.iter().enumerate() {
            t.push(vec![format!("grad_ratio_{l}"), num(*r), num(profile.qbar[l] / profile.terminal()), String::new()]);
        }
    }
    Ok(t.render())
}

fn ode_check(k: &KernelArgs, steps: usize, depths: &[usize], pairs: usize, dim: usize, seed: u64) -> Result<String> {
    let h = hyper(k, dim)?;
    let pts = sphere_points(2 * pairs, dim, (dim as f64).sqrt(), seed);
    let mut gaps = vec![Vec::with_capacity(pairs); depths.len()];
    for pair in pts.chunks(2) {
        let s0 = q0(&pair[0], &pair[1], &h)?;
        let reference = ode_trajectory(&s0, &h, 1.0, steps, false)?;
        for (g, &depth) in gaps.iter_mut().zip(depths) {
            g.push(discrete_ode_gap(&s0, &h, depth, &reference)?);
        }
    }
    let mut t = Table::new(&["depth", "max_gap", "mean_gap"]);
    for (g, depth) in gaps.iter().zip(depths) {
        let max = g.iter().copied().fold(0.0, f64::max);
        let mean = g.iter().sum::<f64>() / g.len().max(1) as f64;
        t.push(vec![depth.to_string(), num(max), num(mean)]);
    }
    Ok(t.render())
}
