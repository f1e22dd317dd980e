//! One runner per experiment kind. Every runner derives all randomness from
//! the configured base seed, emits its kind-specific CSV artifacts, and
//! returns the checks plus tidy plot-data records; the dispatcher adds the
//! resolved config, plot data, and the machine-readable summary.

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{
    create_artifact, write_plotdata, write_summary, CheckResult, RunRecord, RunSummary,
};
use crate::{cache, CliError, CliResult};
use ndarray::{s, Array2};
use nclab::cauchy::{
    fit_n2, g_n_numeric, g_n_numeric_matched, g_series_cached, spectrum_inclusion_experiment,
    stieltjes_density,
    write_density_csv, write_inclusion_csv, write_transform_csv, InclusionOptions, TwoLegG,
};
use nclab::guewick::{coefficient, gue_word_expectation};
use nclab::linalg::{
    adjoint, eigvalsh, expm, fro_norm, identity, inv, kron, CMat,
};
use nclab::ncpoly::{Letter, NcPoly, Word};
use nclab::parraud::{gauss_legendre, nu1};
use nclab::rmt::{
    block_delta_eval, cayley_matrix, cayley_pow, eval_partial_insertion, inverse_cayley,
    mc_trace, normalized_trace, sample_gue, trial_seed, BlockFun, MCEstimate,
};
use nclab::scalar::{cq_one, q_to_f64};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

/// Seed-stream tags, one per consumer, so experiments never share a stream.
mod stream {
    pub const MOMENTS: u64 = 0xA1 << 32;
    pub const STRONG_SUM: u64 = 0xB1 << 32;
    pub const STRONG_TENSOR: u64 = 0xB2 << 32;
    pub const RESOLVENT: u64 = 0xC1 << 32;
    pub const INCLUSION: u64 = 0xD1 << 32;
    pub const IDENTITIES: u64 = 0xE1 << 32;
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub out_dir: PathBuf,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    dir: PathBuf,
}

impl Ctx<'_> {
    fn artifact(&self, name: &str) -> CliResult<(PathBuf, std::fs::File)> {
        create_artifact(&self.dir, name, &self.hash, self.cfg.base_seed)
    }
}

/// Execute the experiment named by the resolved config and write all of its
/// artifacts under the configured output directory.
pub fn run(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    let ctx = Ctx {
        cfg,
        hash: cfg.config_hash(),
        dir: PathBuf::from(&cfg.out_dir),
    };
    std::fs::create_dir_all(&ctx.dir)?;

    let mut summary = RunSummary::new(cfg.experiment.as_str(), &ctx.hash, cfg.base_seed);

    // The resolved configuration is itself an artifact: every field explicit.
    let resolved = ctx.dir.join("config.resolved.json");
    std::fs::write(&resolved, cfg.canonical_json() + "\n")?;
    summary.record_artifact(&resolved);

    let (checks, records, artifacts) = match cfg.experiment {
        ExperimentKind::Moments => run_moments(&ctx)?,
        ExperimentKind::Nu1Check => run_nu1_check(&ctx)?,
        ExperimentKind::StrongConv => run_strong_conv(&ctx)?,
        ExperimentKind::Resolvent => run_resolvent(&ctx)?,
        ExperimentKind::Inclusion => run_inclusion(&ctx)?,
        ExperimentKind::Identities => run_identities(&ctx)?,
    };
    for c in checks {
        summary.push(c);
    }
    for a in &artifacts {
        summary.record_artifact(a);
    }

    let (plot_path, mut plot) = ctx.artifact("plotdata.csv")?;
    write_plotdata(&mut plot, cfg.experiment.as_str(), &records)?;
    summary.record_artifact(&plot_path);

    let summary_path = write_summary(&ctx.dir, &summary)?;
    summary.record_artifact(&summary_path);

    Ok(RunOutput {
        summary,
        out_dir: ctx.dir,
    })
}

type RunnerOut = (Vec<CheckResult>, Vec<RunRecord>, Vec<PathBuf>);

fn mat_pow(x: &CMat, p: usize) -> CMat {
    let mut acc = x.clone();
    for _ in 1..p {
        acc = acc.dot(x);
    }
    acc
}

// ---------------------------------------------------------------- moments --

fn run_moments(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    let p = cfg.power;
    let word: Word = vec![Letter::x(1); p];
    let exact = gue_word_expectation(&word)?;
    let order0 = q_to_f64(&coefficient(&exact, 0));
    let order1 = q_to_f64(&coefficient(&exact, 1));

    let mut checks = Vec::new();
    let mut records = Vec::new();
    let mut values: BTreeMap<usize, MCEstimate> = BTreeMap::new();
    for &n in &cfg.n_list {
        let seed_n = trial_seed(cfg.base_seed, stream::MOMENTS | n as u64);
        let est = mc_trace(cfg.trials, seed_n, |s| {
            let x = sample_gue(n, s);
            normalized_trace(&mat_pow(&x, p))
        })?;
        let reference = exact.eval(n as f64);
        let dev = (est.mean.re - reference).abs();
        let gate = cfg.tolerances.mean_sigma * est.stderr;
        checks.push(CheckResult::new(
            &format!("mean_matches_exact_n{n}"),
            dev <= gate,
            est.mean.re,
            reference,
            gate,
            format!("|{:.6} - {:.6}| = {dev:.2e}, gate {gate:.2e}", est.mean.re, reference),
        ));
        records.push(RunRecord::new(n, seed_n, "mean_re", est.mean.re));
        records.push(RunRecord::new(n, seed_n, "stderr", est.stderr));
        records.push(RunRecord::new(n, seed_n, "exact", reference));
        values.insert(n, est);
    }

    match fit_n2(&values, Complex64::new(order0, 0.0)) {
        Ok(fit) => {
            let dev = (fit.c_n2.re - order1).abs();
            let gate = cfg.tolerances.fit_sigma * fit.c_n2_stderr;
            checks.push(CheckResult::new(
                "n2_coefficient",
                dev <= gate,
                fit.c_n2.re,
                order1,
                gate,
                format!(
                    "fitted C = {:.4} +/- {:.4}, exact {order1:.4}",
                    fit.c_n2.re, fit.c_n2_stderr
                ),
            ));
            if let Some(&nmax) = cfg.n_list.iter().max() {
                records.push(RunRecord::new(nmax, cfg.base_seed, "fit_c_n2", fit.c_n2.re));
                records.push(RunRecord::new(
                    nmax,
                    cfg.base_seed,
                    "fit_c_n2_stderr",
                    fit.c_n2_stderr,
                ));
            }
        }
        Err(e) => checks.push(CheckResult::new(
            "n2_coefficient",
            false,
            f64::NAN,
            order1,
            0.0,
            format!("fit failed: {e}"),
        )),
    }

    let (path, mut f) = ctx.artifact("moments.csv")?;
    let rows: Vec<(usize, MCEstimate)> = values.into_iter().collect();
    write_transform_csv(&mut f, &rows)?;
    Ok((checks, records, vec![path]))
}

// -------------------------------------------------------------- nu1-check --

fn index_words(generators: usize, max_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for len in 1..=max_len {
        let mut idx = vec![1u32; len];
        loop {
            out.push(idx.clone());
            let mut k = len;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                if idx[k] < generators as u32 {
                    idx[k] += 1;
                    for v in idx.iter_mut().skip(k + 1) {
                        *v = 1;
                    }
                    break;
                }
                if k == 0 {
                    idx.clear();
                    break;
                }
            }
            if idx.is_empty() {
                break;
            }
        }
    }
    out
}

fn run_nu1_check(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    let words = index_words(cfg.generators, cfg.degree_cap);
    let rows: Vec<(String, String, String, bool)> = words
        .par_iter()
        .map(|indices| -> CliResult<(String, String, String, bool)> {
            let word: Word = indices.iter().map(|&i| Letter::x(i)).collect();
            let p = NcPoly::monomial(word.clone(), cq_one());
            let first = nu1(&p)?;
            let wick = coefficient(&gue_word_expectation(&word)?, 1);
            let label = indices
                .iter()
                .map(|i| format!("x{i}"))
                .collect::<Vec<_>>()
                .join(".");
            let equal = first == wick;
            Ok((label, first.to_string(), wick.to_string(), equal))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mismatches = rows.iter().filter(|r| !r.3).count();
    let checks = vec![CheckResult::new(
        "first_order_exact_equality",
        mismatches == 0,
        mismatches as f64,
        0.0,
        0.0,
        format!(
            "{} words length <= {}, {} mismatches",
            rows.len(),
            cfg.degree_cap,
            mismatches
        ),
    )];

    let (path, mut f) = ctx.artifact("nu1_table.csv")?;
    writeln!(f, "word,first_order,wick_order1,equal")?;
    for (w, a, b, eq) in &rows {
        writeln!(f, "{w},{a},{b},{eq}")?;
    }
    let records = vec![RunRecord::new(
        cfg.degree_cap,
        cfg.base_seed,
        "mismatches",
        mismatches as f64,
    )];
    Ok((checks, records, vec![path]))
}

// ------------------------------------------------------------ strong-conv --

/// Extremal eigenvalue bounds of a Hermitian sample, via dense spectra.
fn sum_norm(n: usize, seed: u64) -> CliResult<f64> {
    let x1 = sample_gue(n, trial_seed(seed, 1));
    let x2 = sample_gue(n, trial_seed(seed, 2));
    let ev = eigvalsh(&(&x1 + &x2))?;
    Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Operator norm of X (x) 1 + 1 (x) Y from the leg spectra: the eigenvalues
/// are all pairwise sums, so the extremes come from the leg extremes.
fn tensor_norm(n: usize, seed: u64) -> CliResult<f64> {
    let x = sample_gue(n, trial_seed(seed, 1));
    let y = sample_gue(n, trial_seed(seed, 2));
    let ex = eigvalsh(&x)?;
    let ey = eigvalsh(&y)?;
    let (xmin, xmax) = (ex[0], ex[ex.len() - 1]);
    let (ymin, ymax) = (ey[0], ey[ey.len() - 1]);
    Ok((xmax + ymax).abs().max((xmin + ymin).abs()))
}

fn run_strong_conv(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    let tensor = cfg.target == "tensor";
    let (limit, tol, tag) = if tensor {
        (4.0, cfg.tolerances.tensor_tol, stream::STRONG_TENSOR)
    } else {
        (2.0 * (2.0f64).sqrt(), cfg.tolerances.sum_tol, stream::STRONG_SUM)
    };

    let mut checks = Vec::new();
    let mut records = Vec::new();
    let mut means = Vec::new();
    let (csv_path, mut csv) = ctx.artifact("norms.csv")?;
    writeln!(csv, "n,trial,norm")?;
    for &n in &cfg.n_list {
        let seed_n = trial_seed(cfg.base_seed, tag | n as u64);
        let norms: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let s = trial_seed(seed_n, t);
                if tensor {
                    tensor_norm(n, s)
                } else {
                    sum_norm(n, s)
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        for (t, v) in norms.iter().enumerate() {
            writeln!(csv, "{n},{t},{v:.17e}")?;
        }
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        records.push(RunRecord::new(n, seed_n, "mean_norm", mean));
        means.push((n, mean));
    }

    let monotone = means.windows(2).all(|w| w[1].1 >= w[0].1);
    checks.push(CheckResult::new(
        "monotone_norms",
        monotone,
        means.last().map(|m| m.1).unwrap_or(f64::NAN),
        limit,
        0.0,
        format!(
            "norm means over N {:?}: {:?}",
            cfg.n_list,
            means.iter().map(|m| (m.1 * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    ));
    let last = means.last().expect("n_list nonempty");
    let dev = (last.1 - limit).abs();
    checks.push(CheckResult::new(
        "final_norm_near_limit",
        dev <= tol,
        last.1,
        limit,
        tol,
        format!("|{:.4} - {limit:.4}| = {dev:.4} at N = {}", last.1, last.0),
    ));
    Ok((checks, records, vec![csv_path]))
}

// -------------------------------------------------------------- resolvent --

fn run_resolvent(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    let model = cfg.model.to_model()?;
    let z = cfg.z_complex();

    let cache_path = cache::env_path();
    let mut store = cache_path
        .as_deref()
        .map(cache::load)
        .unwrap_or_default();
    let series = g_series_cached(&model, cfg.depth, &mut store)?;
    if let Some(p) = &cache_path {
        cache::save(p, &store)?;
    }
    let (g_limit, tail) = series.eval(z)?;

    // moment matching only applies to one-block scalar models; anything else
    // falls back to the plain estimator regardless of cv_degree
    let matched = cfg.cv_degree >= 1 && cfg.model.is_two_block_scalar();

    let mut records = Vec::new();
    let mut values: BTreeMap<usize, MCEstimate> = BTreeMap::new();
    for &n in &cfg.n_list {
        let seed_n = trial_seed(cfg.base_seed, stream::RESOLVENT | n as u64);
        let est = if matched {
            g_n_numeric_matched(&model, z, n, cfg.trials, seed_n, cfg.cv_degree)?
        } else {
            g_n_numeric(&model, z, n, cfg.trials, seed_n)?
        };
        records.push(RunRecord::new(n, seed_n, "mean_re", est.mean.re));
        records.push(RunRecord::new(n, seed_n, "mean_im", est.mean.im));
        records.push(RunRecord::new(n, seed_n, "stderr", est.stderr));
        records.push(RunRecord::new(n, seed_n, "abs_dev", (est.mean - g_limit).norm()));
        values.insert(n, est);
    }

    let mut checks = Vec::new();
    match fit_n2(&values, g_limit) {
        Ok(fit) => {
            let inside =
                fit.slope >= cfg.tolerances.slope_min && fit.slope <= cfg.tolerances.slope_max;
            checks.push(CheckResult::new(
                "decay_slope",
                inside,
                fit.slope,
                -2.0,
                cfg.tolerances.slope_max - cfg.tolerances.slope_min,
                format!(
                    "slope {:.3} +/- {:.3} in [{}, {}], {} estimator, series tail bound {tail:.1e}",
                    fit.slope,
                    fit.slope_stderr,
                    cfg.tolerances.slope_min,
                    cfg.tolerances.slope_max,
                    if matched { "moment-matched" } else { "plain" }
                ),
            ));
            if let Some(&nmax) = cfg.n_list.iter().max() {
                records.push(RunRecord::new(nmax, cfg.base_seed, "slope", fit.slope));
            }
        }
        Err(e) => checks.push(CheckResult::new(
            "decay_slope",
            false,
            f64::NAN,
            -2.0,
            0.0,
            format!("fit failed: {e}"),
        )),
    }

    let (path, mut f) = ctx.artifact("transform.csv")?;
    let rows: Vec<(usize, MCEstimate)> = values.into_iter().collect();
    write_transform_csv(&mut f, &rows)?;
    Ok((checks, records, vec![path]))
}

// -------------------------------------------------------------- inclusion --

/// Leg discretization for the limit transform of the two-leg model; enough
/// nodes that the atom spacing sits below the density scan's smoothing eta.
const TWO_LEG_NODES: usize = 700;

fn run_inclusion(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    if !cfg.model.is_two_block_scalar() {
        return Err(CliError::Schema(
            "the inclusion experiment needs a one-block scalar model: its \
             reference density comes from the commuting-leg limit law, which \
             block coefficients do not have"
                .into(),
        ));
    }
    let model = cfg.model.to_model()?;
    let ev = TwoLegG::new(&model, TWO_LEG_NODES).map_err(CliError::from)?;
    let n = cfg.n_list[0];
    let opts = InclusionOptions::default();
    let seed = trial_seed(cfg.base_seed, stream::INCLUSION);

    let report = spectrum_inclusion_experiment(
        &model, &ev, n, cfg.epsilon, cfg.trials, seed, opts,
    )?;

    let mut checks = Vec::new();
    let mut records = Vec::new();
    checks.push(CheckResult::new(
        "clean_fraction",
        report.clean_fraction >= cfg.tolerances.clean_fraction,
        report.clean_fraction,
        1.0,
        1.0 - cfg.tolerances.clean_fraction,
        format!(
            "{:.1}% of {} trials escape-free at eps = {}, support {:?}",
            report.clean_fraction * 100.0,
            cfg.trials,
            cfg.epsilon,
            report
                .support
                .iter()
                .map(|(a, b)| ((a * 1e3).round() / 1e3, (b * 1e3).round() / 1e3))
                .collect::<Vec<_>>()
        ),
    ));
    for (t, e) in report.per_trial_escapes.iter().enumerate() {
        records.push(RunRecord::new(n, trial_seed(seed, t as u64), "escapes", *e as f64));
    }
    records.push(RunRecord::new(n, seed, "clean_fraction", report.clean_fraction));

    let (inc_path, mut inc) = ctx.artifact("inclusion.csv")?;
    write_inclusion_csv(&mut inc, &report)?;
    let mut artifacts = vec![inc_path];

    if cfg.negative_control {
        let control = spectrum_inclusion_experiment(
            &model,
            &ev,
            n,
            0.0,
            cfg.trials,
            seed,
            InclusionOptions::default(),
        )?;
        let total: usize = control.per_trial_escapes.iter().sum();
        checks.push(CheckResult::new(
            "negative_control_escapes",
            total > 0,
            total as f64,
            1.0,
            0.0,
            format!("eps = 0 control sees {total} escapes across {} trials", cfg.trials),
        ));
        records.push(RunRecord::new(n, seed, "control_escapes", total as f64));
        let (ctl_path, mut ctl) = ctx.artifact("inclusion_control.csv")?;
        write_inclusion_csv(&mut ctl, &control)?;
        artifacts.push(ctl_path);
    }

    // Density of the limit law on the scan grid, for plotting.
    let radius = nclab::cauchy::model_radius(&model)?;
    let opts = InclusionOptions::default();
    let (lo, hi) = (-radius - opts.margin, radius + opts.margin);
    let pts = opts.grid_points;
    let h = (hi - lo) / (pts - 1) as f64;
    let grid: Vec<f64> = (0..pts).map(|i| lo + h * i as f64).collect();
    let density = stieltjes_density(&ev, &grid, opts.eta)?;
    let (den_path, mut den) = ctx.artifact("density.csv")?;
    write_density_csv(&mut den, &density)?;
    artifacts.push(den_path);

    Ok((checks, records, artifacts))
}

// ------------------------------------------------------------- identities --

/// Deterministic coefficient stream in [-1, 1] for test polynomials.
fn unit_stream(seed: u64) -> impl FnMut() -> f64 {
    let mut k = 0u64;
    move || {
        k += 1;
        (trial_seed(seed, k) as f64 / u64::MAX as f64) * 2.0 - 1.0
    }
}

fn dense_poly(vars: u32, deg: usize, seed: u64) -> NcPoly {
    let mut coeff = unit_stream(seed);
    let mut rational = move || nclab::scalar::q((coeff() * 1024.0) as i64, 1024);
    let mut p = NcPoly::monomial(
        Vec::new(),
        nclab::scalar::cq(rational(), nclab::scalar::q(0, 1)),
    );
    for w in index_words(vars as usize, deg) {
        let word: Word = w.iter().map(|&i| Letter::x(i)).collect();
        p = &p + &NcPoly::monomial(word, nclab::scalar::cq(rational(), nclab::scalar::q(0, 1)));
    }
    p
}

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn run_identities(ctx: &Ctx) -> CliResult<RunnerOut> {
    let cfg = ctx.cfg;
    let t = &cfg.tolerances;
    let seed = trial_seed(cfg.base_seed, stream::IDENTITIES);
    let mut checks = Vec::new();

    // Directional block derivative against the summed insertion form, for a
    // dense random polynomial of degree 5 in two variables at N = 16.
    {
        let n = 16;
        let p = dense_poly(2, 5, trial_seed(seed, 10));
        let ss = vec![sample_gue(n, trial_seed(seed, 11)), sample_gue(n, trial_seed(seed, 12))];
        let us = vec![sample_gue(n, trial_seed(seed, 13)), sample_gue(n, trial_seed(seed, 14))];
        let c = sample_gue(n, trial_seed(seed, 15));
        let mut worst = 0.0f64;
        for j in 1..=2u32 {
            let direct = eval_partial_insertion(&p, j, &ss, &us, &c)?;
            let cs: Vec<CMat> = (1..=2)
                .map(|k| if k == j { c.clone() } else { Array2::zeros((n, n)) })
                .collect();
            let block = block_delta_eval(&BlockFun::Poly(&p), &ss, &us, &cs)?;
            worst = worst.max(fro_norm(&(&direct - &block)));
        }
        checks.push(CheckResult::new(
            "block_derivative_polynomial",
            worst <= t.block_tol,
            worst,
            0.0,
            t.block_tol,
            format!("max residual {worst:.2e} over 2 slots, N = {n}, degree 5"),
        ));
    }

    // Cayley letters: the block derivative against the closed product form.
    {
        let n = 16;
        let s1 = sample_gue(n, trial_seed(seed, 20));
        let u1 = sample_gue(n, trial_seed(seed, 21));
        let c = sample_gue(n, trial_seed(seed, 22));
        let mut worst = 0.0f64;
        for eps in [1i8, -1] {
            let got = block_delta_eval(
                &BlockFun::CayleyPow(eps),
                std::slice::from_ref(&s1),
                std::slice::from_ref(&u1),
                std::slice::from_ref(&c),
            )?;
            let ps = cayley_pow(&s1, eps)? - identity(n);
            let pu = cayley_pow(&u1, eps)? - identity(n);
            let want = ps.dot(&c).dot(&pu).mapv(|z| z * c64(0.0, 0.5 * eps as f64));
            worst = worst.max(fro_norm(&(&got - &want)));
        }
        checks.push(CheckResult::new(
            "block_derivative_cayley",
            worst <= t.block_tol,
            worst,
            0.0,
            t.block_tol,
            format!("max residual {worst:.2e} over both powers, N = {n}"),
        ));
    }

    // Tensor-model resolvent derivative at m = 1, N = 8, z = 3i: the block
    // recipe against the product-of-resolvents form.
    {
        let n = 8;
        let s1 = sample_gue(n, trial_seed(seed, 30));
        let u1 = sample_gue(n, trial_seed(seed, 31));
        let t1 = sample_gue(n, trial_seed(seed, 32));
        let c = sample_gue(n, trial_seed(seed, 33)).mapv(|z| z * 0.2);
        let gamma = c64(0.15, 0.1);
        let beta = c64(0.05, -0.2);
        let xi = c64(0.3, 0.0);
        let z = c64(0.0, 3.0);

        let psi_t = cayley_matrix(&t1)?;
        let psi_t_inv = cayley_pow(&t1, -1)?;
        let script_s = |sv: &CMat| -> CliResult<CMat> {
            let k = sv.nrows();
            let ps = cayley_matrix(sv)?;
            let ps_inv = cayley_pow(sv, -1)?;
            let mut m = identity(k * n).mapv(|w| w * xi);
            m += &kron(&ps, &identity(n)).mapv(|w| w * gamma);
            m += &kron(&ps_inv, &identity(n)).mapv(|w| w * gamma.conj());
            m += &kron(&identity(k), &psi_t).mapv(|w| w * beta);
            m += &kron(&identity(k), &psi_t_inv).mapv(|w| w * beta.conj());
            Ok(m)
        };

        let mut blk: CMat = Array2::zeros((2 * n, 2 * n));
        blk.slice_mut(s![..n, ..n]).assign(&s1);
        blk.slice_mut(s![..n, n..]).assign(&c);
        blk.slice_mut(s![n.., n..]).assign(&u1);
        let big = script_s(&blk)?;
        let zi_big = identity(2 * n * n).mapv(|w| w * z);
        let rbig = inv(&(&zi_big - &big))?;
        let got = rbig.slice(s![..n * n, n * n..]).to_owned();

        let zi = identity(n * n).mapv(|w| w * z);
        let rs = inv(&(&zi - &script_s(&s1)?))?;
        let ru = inv(&(&zi - &script_s(&u1)?))?;
        let ps_s = cayley_matrix(&s1)? - identity(n);
        let ps_u = cayley_matrix(&u1)? - identity(n);
        let psi_s_inv = cayley_pow(&s1, -1)? - identity(n);
        let psi_u_inv = cayley_pow(&u1, -1)? - identity(n);
        let ins_plus = ps_s.dot(&c).dot(&ps_u).mapv(|w| w * gamma);
        let ins_minus = psi_s_inv.dot(&c).dot(&psi_u_inv).mapv(|w| w * gamma.conj());
        let ins = kron(&(&ins_plus - &ins_minus), &identity(n)).mapv(|w| w * c64(0.0, 0.5));
        let want = rs.dot(&ins).dot(&ru);
        let resid = fro_norm(&(&got - &want));
        checks.push(CheckResult::new(
            "resolvent_block_tensor_model",
            resid <= t.resolvent_block_tol,
            resid,
            0.0,
            t.resolvent_block_tol,
            format!("residual {resid:.2e} at m = 1, N = {n}, z = 3i"),
        ));
    }

    // Exponential block derivative against the interpolation quadrature.
    {
        let n = 8;
        let a = sample_gue(n, trial_seed(seed, 40));
        let c = sample_gue(n, trial_seed(seed, 41));
        let got = block_delta_eval(
            &BlockFun::Exp,
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            std::slice::from_ref(&c),
        )?;
        let (nodes, weights) = gauss_legendre(32);
        let mut want: CMat = Array2::zeros((n, n));
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let ta = 0.5 * (x + 1.0);
            let left = expm(&a.mapv(|z| z * ta));
            let right = expm(&a.mapv(|z| z * (1.0 - ta)));
            want += &left.dot(&c).dot(&right).mapv(|z| z * (0.5 * w));
        }
        let resid = fro_norm(&(&got - &want));
        checks.push(CheckResult::new(
            "exponential_duhamel",
            resid <= t.duhamel_tol,
            resid,
            0.0,
            t.duhamel_tol,
            format!("residual {resid:.2e} against 32-node quadrature"),
        ));
    }

    // Half-line Fourier representation of the scalar Cayley transform.
    {
        let (nodes, weights) = gauss_legendre(32);
        let mut worst = 0.0f64;
        for &x in &[0.0, 0.7, -1.3, 4.2] {
            for &eps in &[1.0f64, -1.0] {
                let mut integral = Complex64::new(0.0, 0.0);
                for panel in 0..10 {
                    let (a, b) = (5.0 * panel as f64, 5.0 * (panel + 1) as f64);
                    for (xn, w) in nodes.iter().zip(weights.iter()) {
                        let tt = 0.5 * (b - a) * xn + 0.5 * (a + b);
                        let val = (-(Complex64::new(1.0, eps * x)) * tt).exp();
                        integral += val * (0.5 * (b - a) * w);
                    }
                }
                let lhs = Complex64::new(1.0, 0.0) - 2.0 * integral;
                let rhs = Complex64::new(x, eps) / Complex64::new(x, -eps);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        checks.push(CheckResult::new(
            "fourier_half_line",
            worst <= t.fourier_tol,
            worst,
            0.0,
            t.fourier_tol,
            format!("max residual {worst:.2e} over 8 sample points"),
        ));
    }

    // Cayley transform unitarity and round trip on a random Hermitian.
    {
        let n = 16;
        let h = sample_gue(n, trial_seed(seed, 50));
        let u = cayley_matrix(&h)?;
        let unitary = fro_norm(&(&u.dot(&adjoint(&u)) - &identity(n)));
        let back = fro_norm(&(&inverse_cayley(&u)? - &h));
        let worst = unitary.max(back);
        checks.push(CheckResult::new(
            "cayley_round_trip",
            worst <= t.cayley_tol,
            worst,
            0.0,
            t.cayley_tol,
            format!("unitarity {unitary:.2e}, round trip {back:.2e}"),
        ));
    }

    // Exact multi-index coefficient identity.
    {
        let mut failures = 0usize;
        let mut total = 0usize;
        for len in 1..=3usize {
            let mut idx = vec![0u32; len];
            loop {
                total += 1;
                if !nclab::parraud::lemma_c_check(&idx) {
                    failures += 1;
                }
                let mut k = len;
                loop {
                    if k == 0 {
                        idx.clear();
                        break;
                    }
                    k -= 1;
                    if idx[k] < 4 {
                        idx[k] += 1;
                        for v in idx.iter_mut().skip(k + 1) {
                            *v = 0;
                        }
                        break;
                    }
                    if k == 0 {
                        idx.clear();
                        break;
                    }
                }
                if idx.is_empty() {
                    break;
                }
            }
        }
        checks.push(CheckResult::new(
            "multi_index_coefficients",
            failures == 0,
            failures as f64,
            0.0,
            0.0,
            format!("{total} multi-indices with entries <= 4, length <= 3, {failures} failures"),
        ));
    }

    let (path, mut f) = ctx.artifact("identities.csv")?;
    writeln!(f, "check,observed,tolerance,pass")?;
    let mut records = Vec::new();
    for c in &checks {
        writeln!(f, "{},{:.17e},{:.17e},{}", c.name, c.observed, c.tolerance, c.pass)?;
        records.push(RunRecord::new(16, seed, &c.name, c.observed));
    }
    Ok((checks, records, vec![path]))
}

