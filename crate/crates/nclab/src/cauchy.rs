//! Cauchy-transform layer: the free-limit transform g(z) via a series around
//! infinity, Monte Carlo estimates g_N(z) at finite N, least-squares recovery
//! of the 1/N^2 correction coefficient, Stieltjes-inversion densities, and
//! spectral-inclusion experiments.

use crate::freemoments::{FreeMomentCache, MarginalSpec, Marginals};
use crate::linalg::{eigvalsh, fro_norm, identity, inv, CMat};
use crate::ncpoly::{Family, Letter};
use crate::rmt::{
    build_sn, cayley_matrix, operator_norm, sample_gue, trial_seed, MCEstimate,
    ModelCoefficients,
};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write as IoWrite;

/// Longest power expansion of the limit transform.
pub const G_SERIES_DEPTH_CAP: usize = 14;

/// Cap on distinct (left word, right word) states in the series expansion.
const G_SERIES_STATE_CAP: usize = 2_000_000;

/// Truncated expansion g(z) ~ sum_n a_n z^{-(n+1)} with a_0 = 1, valid for
/// |z| >= 1.25 * radius; `radius` bounds the operator norm of the model.
#[derive(Clone, Debug)]
pub struct SeriesG {
    pub coeffs: Vec<Complex64>,
    pub radius: f64,
}

impl SeriesG {
    pub fn depth(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// |sum_{n>d} a_n z^{-n-1}| <= (M/|z|)^{d+1} |z| / (|z| - M).
    pub fn tail_bound(&self, z: Complex64) -> f64 {
        let r = z.norm();
        let d = self.depth();
        (self.radius / r).powi(d as i32 + 1) * r / (r - self.radius)
    }

    /// Truncated value and tail bound; rejects evaluation points inside
    /// 1.25 * radius where the truncation is uncontrolled.
    pub fn eval(&self, z: Complex64) -> Result<(Complex64, f64)> {
        if z.norm() < 1.25 * self.radius {
            return Err(Error::InvalidInput(format!(
                "series valid only for |z| >= {}, got |z| = {}",
                1.25 * self.radius,
                z.norm()
            )));
        }
        let zinv = 1.0 / z;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pw = zinv;
        for a in &self.coeffs {
            acc += a * pw;
            pw *= zinv;
        }
        Ok((acc, self.tail_bound(z)))
    }
}

/// ||xi|| + 2 sum_i (||gamma_i|| + ||beta_i||): a norm bound for the model
/// operator, since each unitary pair contributes at most 2||coefficient||.
pub fn model_radius(c: &ModelCoefficients) -> Result<f64> {
    let mut m = operator_norm(&c.xi, 0.0)?;
    for g in &c.gammas {
        m += 2.0 * operator_norm(g, 0.0)?;
    }
    for b in &c.betas {
        m += 2.0 * operator_norm(b, 0.0)?;
    }
    Ok(m)
}

/// A word in the free unitaries of one tensor leg, reduced: consecutive
/// entries have distinct indices and nonzero net exponents.
pub type LegWord = Vec<(u32, i64)>;

/// Reusable store of leg-word trace values. Every index carries the same
/// Cayley-transformed semicircular marginal, so a stored value depends only
/// on the word, never on the model coefficients; a store may be persisted
/// and shared across models and runs.
pub type MomentStore = BTreeMap<LegWord, Complex64>;

fn leg_append(w: &LegWord, idx: u32, e: i64) -> LegWord {
    let mut out = w.clone();
    if let Some(last) = out.last_mut() {
        if last.0 == idx {
            last.1 += e;
            if last.1 == 0 {
                out.pop();
            }
            return out;
        }
    }
    out.push((idx, e));
    out
}

fn leg_moment(
    w: &LegWord,
    cache: &mut FreeMomentCache,
    memo: &mut BTreeMap<LegWord, Complex64>,
) -> Result<Complex64> {
    if let Some(v) = memo.get(w) {
        return Ok(*v);
    }
    let mut word: Vec<Letter> = Vec::new();
    for &(idx, e) in w {
        let sign = if e > 0 { 1i8 } else { -1 };
        for _ in 0..e.unsigned_abs() {
            word.push(Letter::u(idx, sign));
        }
    }
    let v = cache.moment(&word)?;
    memo.insert(w.clone(), v);
    Ok(v)
}

/// Power-series coefficients of the limit transform: a_n is the normalized
/// trace of the n-th power of the limit operator, with the two tensor legs
/// traced out through the free-moment layer (Cayley-transformed semicircular
/// legs, distinct indices free).
///
/// The expansion tracks, per power, an m x m matrix weight for every pair of
/// reduced leg words; with a single unitary per leg this collapses to net
/// exponents and stays tiny, while larger families grow with the free group
/// and are guarded by a state cap.
pub fn g_series(c: &ModelCoefficients, depth: usize) -> Result<SeriesG> {
    let mut store = MomentStore::new();
    g_series_cached(c, depth, &mut store)
}

/// Same expansion, but leg-word traces are looked up in (and written back
/// to) a caller-owned store, letting repeated runs skip the quadrature work.
pub fn g_series_cached(
    c: &ModelCoefficients,
    depth: usize,
    store: &mut MomentStore,
) -> Result<SeriesG> {
    if depth > G_SERIES_DEPTH_CAP {
        return Err(Error::DegreeCap {
            len: depth,
            cap: G_SERIES_DEPTH_CAP,
        });
    }
    c.validate()?;
    let m = c.m();
    let r = c.r();
    let radius = model_radius(c)?;

    let mut marginals = Marginals::default();
    for i in 1..=r {
        marginals.insert(Family::Base, i as u32, MarginalSpec::CayleySemicircular { tol: 1e-12 });
    }
    let mut cache = FreeMomentCache::new(&marginals);
    let leg_memo = store;

    let gstars: Vec<CMat> = c.gammas.iter().map(crate::linalg::adjoint).collect();
    let bstars: Vec<CMat> = c.betas.iter().map(crate::linalg::adjoint).collect();

    let mut states: BTreeMap<(LegWord, LegWord), CMat> = BTreeMap::new();
    states.insert((Vec::new(), Vec::new()), identity(m));
    let mut coeffs = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        let mut a = Complex64::new(0.0, 0.0);
        for ((w1, w2), t) in &states {
            let mut tr = Complex64::new(0.0, 0.0);
            for d in 0..m {
                tr += t[[d, d]];
            }
            if tr == Complex64::new(0.0, 0.0) {
                continue;
            }
            let m1 = leg_moment(w1, &mut cache, leg_memo)?;
            let m2 = leg_moment(w2, &mut cache, leg_memo)?;
            a += tr / m as f64 * m1 * m2;
        }
        coeffs.push(a);

        let mut next: BTreeMap<(LegWord, LegWord), CMat> = BTreeMap::new();
        let mut bump = |key: (LegWord, LegWord), mat: CMat| {
            next.entry(key)
                .and_modify(|e| *e += &mat)
                .or_insert(mat);
        };
        for ((w1, w2), t) in &states {
            if fro_norm(&t.dot(&identity(m))) == 0.0 {
                continue;
            }
            bump((w1.clone(), w2.clone()), t.dot(&c.xi));
            for i in 0..r {
                let idx = (i + 1) as u32;
                bump((leg_append(w1, idx, 1), w2.clone()), t.dot(&c.gammas[i]));
                bump((leg_append(w1, idx, -1), w2.clone()), t.dot(&gstars[i]));
                bump((w1.clone(), leg_append(w2, idx, 1)), t.dot(&c.betas[i]));
                bump((w1.clone(), leg_append(w2, idx, -1)), t.dot(&bstars[i]));
            }
        }
        if next.len() > G_SERIES_STATE_CAP {
            return Err(Error::MemoryCap {
                size: next.len(),
                cap: G_SERIES_STATE_CAP,
            });
        }
        states = next;
    }
    Ok(SeriesG { coeffs, radius })
}

/// Scalar coefficients of a one-block, one-unitary-pair model, when the
/// tensor legs commute and the spectrum decouples into pairwise sums.
pub(crate) fn separable_scalars(c: &ModelCoefficients) -> Option<(f64, Complex64, Complex64)> {
    if c.m() == 1 && c.r() == 1 {
        Some((c.xi[[0, 0]].re, c.gammas[0][[0, 0]], c.betas[0][[0, 0]]))
    } else {
        None
    }
}

/// Eigenvalues of coeff*Psi(X) + conj(coeff)*Psi(X)^{-1} given the
/// eigenvalues of Hermitian X: Psi(X) is unitary and diagonal in the same
/// basis, so each eigenvalue is 2 Re(coeff * psi(x)).
fn cayley_leg_eigs(x_eigs: &[f64], coeff: Complex64) -> Vec<f64> {
    let i = Complex64::new(0.0, 1.0);
    x_eigs
        .iter()
        .map(|&x| {
            let psi = (Complex64::new(x, 0.0) + i) / (Complex64::new(x, 0.0) - i);
            2.0 * (coeff * psi).re
        })
        .collect()
}

/// Spectrum of one sampled S_N in the separable case: xi + a_i + b_j over all
/// leg eigenvalue pairs. Same seed layout as the dense sampler, so the two
/// routes draw identical matrices.
pub(crate) fn separable_trial_eigs(
    xi: f64,
    gamma: Complex64,
    beta: Complex64,
    n: usize,
    s: u64,
) -> Vec<f64> {
    let xs = eigvalsh(&sample_gue(n, trial_seed(s, 1))).expect("Hermitian by construction");
    let ys = eigvalsh(&sample_gue(n, trial_seed(s, 2))).expect("Hermitian by construction");
    let a = cayley_leg_eigs(&xs, gamma);
    let b = cayley_leg_eigs(&ys, beta);
    let mut eigs = Vec::with_capacity(n * n);
    for ai in &a {
        for bj in &b {
            eigs.push(xi + ai + bj);
        }
    }
    eigs
}

/// One dense-route sample of tr (z - S_N)^{-1}.
pub(crate) fn g_trial_dense(c: &ModelCoefficients, z: Complex64, n: usize, s: u64) -> Complex64 {
    let r = c.r();
    let dim = c.m() * n * n;
    let us: Vec<CMat> = (0..r)
        .map(|k| cayley_matrix(&sample_gue(n, trial_seed(s, 1 + 2 * k as u64))).unwrap())
        .collect();
    let vs: Vec<CMat> = (0..r)
        .map(|k| cayley_matrix(&sample_gue(n, trial_seed(s, 2 + 2 * k as u64))).unwrap())
        .collect();
    let sn = build_sn(c, &us, &vs).expect("size prechecked");
    let zi = identity(dim).mapv(|w| w * z);
    let resolvent = inv(&(&zi - &sn)).expect("nonreal z keeps z - S_N invertible");
    let mut tr = Complex64::new(0.0, 0.0);
    for i in 0..dim {
        tr += resolvent[[i, i]];
    }
    tr / dim as f64
}

/// One separable-route sample of the same statistic via leg spectra only.
pub(crate) fn g_trial_separable(
    xi: f64,
    gamma: Complex64,
    beta: Complex64,
    z: Complex64,
    n: usize,
    s: u64,
) -> Complex64 {
    let mut tr = Complex64::new(0.0, 0.0);
    for lam in separable_trial_eigs(xi, gamma, beta, n, s) {
        tr += (z - lam).finv();
    }
    tr / (n * n) as f64
}

/// Monte Carlo estimate of the finite-N transform: the normalized trace of
/// (z - S_N)^{-1} with S_N built from Cayley transforms of sampled tuples.
/// One-block scalar models skip the dense build: the legs commute, so each
/// trial needs only two n x n eigendecompositions instead of a dim-m*n^2
/// inversion. The dense route stays live for every other model and the two
/// routes are pinned equal on shared seeds by unit tests.
pub fn g_n_numeric(
    c: &ModelCoefficients,
    z: Complex64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if z.im == 0.0 {
        return Err(Error::RealEvaluationPoint);
    }
    c.validate()?;
    // materialize once to surface size errors before spending trials
    {
        let us: Vec<CMat> = (0..c.r()).map(|_| identity(n)).collect();
        build_sn(c, &us, &us)?;
    }
    let bound = 1.0 / z.im.abs();
    if let Some((xi, gamma, beta)) = separable_scalars(c) {
        return crate::rmt::mc_trace(trials, seed, |s| {
            let g = g_trial_separable(xi, gamma, beta, z, n, s);
            assert!(
                g.norm() <= bound * (1.0 + 1e-9),
                "resolvent trace bound violated: |{g}| > {bound}"
            );
            g
        });
    }
    crate::rmt::mc_trace(trials, seed, |s| {
        let g = g_trial_dense(c, z, n, s);
        assert!(
            g.norm() <= bound * (1.0 + 1e-9),
            "resolvent trace bound violated: |{g}| > {bound}"
        );
        g
    })
}

/// Moment-matched Monte Carlo estimate of the same transform as
/// `g_n_numeric`, for one-block scalar models only. Each trial subtracts a
/// degree-`deg` tensor Chebyshev part of the pair statistic and the exact
/// Wick mean of that part is added back, so the estimate is unbiased for
/// E[tr (z - S_N)^{-1}] while the noise shrinks to the analytic remainder:
/// around two orders of magnitude in stderr at the default degree 12.
pub fn g_n_numeric_matched(
    c: &ModelCoefficients,
    z: Complex64,
    n: usize,
    trials: u64,
    seed: u64,
    deg: usize,
) -> Result<MCEstimate> {
    if z.im == 0.0 {
        return Err(Error::RealEvaluationPoint);
    }
    c.validate()?;
    let (xi, gamma, beta) = separable_scalars(c).ok_or_else(|| {
        Error::InvalidInput("matched transform estimator needs a one-block scalar model".into())
    })?;
    let i = Complex64::new(0.0, 1.0);
    let leg = |coeff: Complex64, x: f64| {
        let psi = (Complex64::new(x, 0.0) + i) / (Complex64::new(x, 0.0) - i);
        2.0 * (coeff * psi).re
    };
    let f = |x: f64, y: f64| (z - xi - leg(gamma, x) - leg(beta, y)).finv();
    let cv = crate::matched::SpectralCv2::build(f, crate::matched::MATCHED_INTERVAL, deg)?;
    let exact = cv.exact_mean(n)?;
    let mut est = crate::rmt::mc_trace(trials, seed, |s| {
        let xs = eigvalsh(&sample_gue(n, trial_seed(s, 1))).expect("Hermitian by construction");
        let ys = eigvalsh(&sample_gue(n, trial_seed(s, 2))).expect("Hermitian by construction");
        let mut full = Complex64::new(0.0, 0.0);
        for &x in &xs {
            for &y in &ys {
                full += f(x, y);
            }
        }
        full / (n * n) as f64 - cv.matched_trial(&xs, &ys)
    })?;
    est.mean += exact;
    let bound = 1.0 / z.im.abs();
    assert!(
        est.mean.norm() <= bound * (1.0 + 1e-6) + 3.0 * est.stderr,
        "matched mean violates the resolvent bound: |{}| > {bound}",
        est.mean
    );
    Ok(est)
}

/// Least-squares summary of how a family of estimates approaches a limit.
#[derive(Clone, Debug)]
pub struct FitResult {
    /// Slope of log|difference| against log N.
    pub slope: f64,
    pub intercept: f64,
    /// Per-point residuals of the log-log fit, in ascending-N order.
    pub residuals: Vec<f64>,
    pub slope_stderr: f64,
    /// Coefficient C of difference = C/N^2, fitted with slope pinned to -2.
    pub c_n2: Complex64,
    pub c_n2_stderr: f64,
}

/// Fit |value_N - reference| ~ exp(intercept) N^slope, and the signed
/// coefficient of a pure N^{-2} law. Needs at least three sizes.
pub fn fit_n2(values: &BTreeMap<usize, MCEstimate>, reference: Complex64) -> Result<FitResult> {
    if values.len() < 3 {
        return Err(Error::InvalidInput("need at least three sizes".into()));
    }
    if !reference.re.is_finite() || !reference.im.is_finite() {
        return Err(Error::InvalidInput("reference must be finite".into()));
    }
    let pts: Vec<(f64, Complex64, f64)> = values
        .iter()
        .map(|(n, est)| (*n as f64, est.mean - reference, est.stderr))
        .collect();
    if pts.iter().all(|(_, d, s)| d.norm() <= *s) {
        return Err(Error::DegenerateFit(
            "all differences are below their standard errors".into(),
        ));
    }
    // free-slope fit on logs
    let xs: Vec<f64> = pts.iter().map(|(n, _, _)| n.ln()).collect();
    let ys: Vec<f64> = pts
        .iter()
        .map(|(_, d, _)| d.norm().max(1e-300).ln())
        .collect();
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let dof = (xs.len() - 2).max(1) as f64;
    let s2: f64 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
    let slope_stderr = (s2 / sxx).sqrt();

    // constrained fit: difference = C / N^2, weighted by 1/stderr^2
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (n, d, s) in &pts {
        let sigma = s.max(1e-14 * (1.0 + d.norm()));
        let w = 1.0 / (sigma * sigma);
        let u = 1.0 / (n * n);
        num += d * (w * u);
        den += w * u * u;
    }
    let c_n2 = num / den;
    let c_n2_stderr = (1.0 / den).sqrt();
    Ok(FitResult {
        slope,
        intercept,
        residuals,
        slope_stderr,
        c_n2,
        c_n2_stderr,
    })
}

/// Two-parameter extrapolation value_N = limit + C/N^2 by weighted least
/// squares; recovers both the limit and the correction coefficient.
#[derive(Clone, Debug)]
pub struct ExtrapolationResult {
    pub limit: Complex64,
    pub limit_stderr: f64,
    pub c_n2: Complex64,
    pub c_n2_stderr: f64,
}

pub fn extrapolate_n2(values: &BTreeMap<usize, MCEstimate>) -> Result<ExtrapolationResult> {
    if values.len() < 3 {
        return Err(Error::InvalidInput("need at least three sizes".into()));
    }
    let mut sw = 0.0;
    let mut swu = 0.0;
    let mut swuu = 0.0;
    let mut swy = Complex64::new(0.0, 0.0);
    let mut swuy = Complex64::new(0.0, 0.0);
    for (n, est) in values {
        let sigma = est.stderr.max(1e-14 * (1.0 + est.mean.norm()));
        let w = 1.0 / (sigma * sigma);
        let u = 1.0 / ((*n * *n) as f64);
        sw += w;
        swu += w * u;
        swuu += w * u * u;
        swy += est.mean * w;
        swuy += est.mean * (w * u);
    }
    let det = sw * swuu - swu * swu;
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::DegenerateFit("singular design matrix".into()));
    }
    Ok(ExtrapolationResult {
        limit: (swy * swuu - swuy * swu) / det,
        limit_stderr: (swuu / det).sqrt(),
        c_n2: (swuy * sw - swy * swu) / det,
        c_n2_stderr: (sw / det).sqrt(),
    })
}

/// Anything that can evaluate a Cauchy transform off the real axis.
pub trait CauchyEvaluator: Sync {
    fn g(&self, z: Complex64) -> Result<Complex64>;
}

impl CauchyEvaluator for SeriesG {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        self.eval(z).map(|(v, _)| v)
    }
}

/// Closed-form transform of the standard semicircle law.
pub struct SemicircleG;

impl CauchyEvaluator for SemicircleG {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            return Err(Error::RealEvaluationPoint);
        }
        let s = (z - 2.0).sqrt() * (z + 2.0).sqrt();
        Ok((z - s) / 2.0)
    }
}

/// Exact transform of a fixed Hermitian block: the normalized trace of
/// (z - xi)^{-1}, stored as spectral atoms.
pub struct MatrixResolventG {
    atoms: Vec<f64>,
}

impl MatrixResolventG {
    pub fn new(xi: &CMat) -> Result<Self> {
        Ok(MatrixResolventG {
            atoms: eigvalsh(xi)?,
        })
    }
}

impl CauchyEvaluator for MatrixResolventG {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            return Err(Error::RealEvaluationPoint);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            acc += 1.0 / (z - a);
        }
        Ok(acc / self.atoms.len() as f64)
    }
}

/// Limit transform of a one-block scalar model
/// xi + (gamma U + conj(gamma) U*) (x) 1 + 1 (x) (beta V + conj(beta) V*)
/// for Cayley transforms of free standard semicirculars on independent legs:
/// the legs commute, so the law is the classical convolution of two
/// pushforwards of the semicircle under x -> 2 Re(coeff psi(x)), shifted by
/// xi and discretized on Chebyshev nodes.
pub struct TwoLegG {
    atoms: Vec<(f64, f64)>, // (location, weight)
}

impl TwoLegG {
    pub fn new(c: &ModelCoefficients, nodes: usize) -> Result<Self> {
        let (xi, gamma, beta) = separable_scalars(c).ok_or_else(|| {
            Error::InvalidInput("two-leg limit transform needs a one-block scalar model".into())
        })?;
        let i = Complex64::new(0.0, 1.0);
        let leg = |coeff: Complex64, x: f64| {
            let psi = (Complex64::new(x, 0.0) + i) / (Complex64::new(x, 0.0) - i);
            2.0 * (coeff * psi).re
        };
        let mut locs_g = Vec::with_capacity(nodes);
        let mut locs_b = Vec::with_capacity(nodes);
        let mut weights = Vec::with_capacity(nodes);
        for j in 1..=nodes {
            let theta = std::f64::consts::PI * j as f64 / (nodes + 1) as f64;
            let x = 2.0 * theta.cos();
            locs_g.push(leg(gamma, x));
            locs_b.push(leg(beta, x));
            weights.push(2.0 / (nodes as f64 + 1.0) * theta.sin() * theta.sin());
        }
        let mut atoms = Vec::with_capacity(nodes * nodes);
        for j in 0..nodes {
            for k in 0..nodes {
                atoms.push((xi + locs_g[j] + locs_b[k], weights[j] * weights[k]));
            }
        }
        Ok(TwoLegG { atoms })
    }
}

impl CauchyEvaluator for TwoLegG {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            return Err(Error::RealEvaluationPoint);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (loc, w) in &self.atoms {
            acc += *w / (z - loc);
        }
        Ok(acc)
    }
}

/// Density samples rho(x) = -Im g(x + i eta) / pi on a grid.
pub fn stieltjes_density(
    ev: &dyn CauchyEvaluator,
    grid: &[f64],
    eta: f64,
) -> Result<Vec<(f64, f64)>> {
    if eta <= 0.0 {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    grid.iter()
        .map(|&x| {
            let g = ev.g(Complex64::new(x, eta))?;
            Ok((x, -g.im / std::f64::consts::PI))
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct InclusionOptions {
    /// Imaginary offset for the density scan.
    pub eta: f64,
    /// Density threshold defining the reference support.
    pub delta: f64,
    pub grid_points: usize,
    /// Extra grid range beyond the model norm bound.
    pub margin: f64,
}

impl Default for InclusionOptions {
    fn default() -> Self {
        InclusionOptions {
            eta: 1e-2,
            delta: 1e-2,
            grid_points: 1601,
            margin: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InclusionReport {
    pub n: usize,
    pub eps: f64,
    /// Reference support intervals (before fattening by eps).
    pub support: Vec<(f64, f64)>,
    pub per_trial_escapes: Vec<usize>,
    pub eigs_per_trial: usize,
    pub clean_fraction: f64,
}

/// Sample the dense tensor-model matrix `trials` times and count eigenvalues
/// escaping the eps-fattened reference support, where the reference support
/// is the region with limit density above `delta` under `ev`.
pub fn spectrum_inclusion_experiment(
    c: &ModelCoefficients,
    ev: &dyn CauchyEvaluator,
    n: usize,
    eps: f64,
    trials: u64,
    seed: u64,
    opts: InclusionOptions,
) -> Result<InclusionReport> {
    c.validate()?;
    let radius = model_radius(c)?;
    let (lo, hi) = (-radius - opts.margin, radius + opts.margin);
    let pts = opts.grid_points.max(3);
    let h = (hi - lo) / (pts - 1) as f64;
    let grid: Vec<f64> = (0..pts).map(|i| lo + h * i as f64).collect();
    let density = stieltjes_density(ev, &grid, opts.eta)?;

    let mut support: Vec<(f64, f64)> = Vec::new();
    for (x, rho) in &density {
        if *rho > opts.delta {
            match support.last_mut() {
                Some(iv) if *x - iv.1 <= 1.5 * h => iv.1 = *x,
                _ => support.push((*x, *x)),
            }
        }
    }
    if support.is_empty() {
        return Err(Error::DegenerateFit(
            "no reference support above the density threshold".into(),
        ));
    }

    let slack = eps + 0.5 * h;
    let r = c.r();
    let separable = separable_scalars(c);
    let per_trial_escapes: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let eigs = match separable {
                Some((xi, gamma, beta)) => separable_trial_eigs(xi, gamma, beta, n, s),
                None => {
                    let us: Vec<CMat> = (0..r)
                        .map(|k| {
                            cayley_matrix(&sample_gue(n, trial_seed(s, 1 + 2 * k as u64))).unwrap()
                        })
                        .collect();
                    let vs: Vec<CMat> = (0..r)
                        .map(|k| {
                            cayley_matrix(&sample_gue(n, trial_seed(s, 2 + 2 * k as u64))).unwrap()
                        })
                        .collect();
                    let sn = build_sn(c, &us, &vs).expect("size checked against the dense cap");
                    eigvalsh(&sn).expect("Hermitian by construction")
                }
            };
            eigs.iter()
                .filter(|lam| {
                    !support
                        .iter()
                        .any(|(a, b)| **lam >= a - slack && **lam <= b + slack)
                })
                .count()
        })
        .collect();
    let clean = per_trial_escapes.iter().filter(|e| **e == 0).count();
    Ok(InclusionReport {
        n,
        eps,
        support,
        per_trial_escapes,
        eigs_per_trial: c.m() * n * n,
        clean_fraction: clean as f64 / trials as f64,
    })
}

/// CSV row per size: N, trials, mean_re, mean_im, stderr.
pub fn write_transform_csv<W: IoWrite>(w: &mut W, rows: &[(usize, MCEstimate)]) -> Result<()> {
    writeln!(w, "N,trials,mean_re,mean_im,stderr")?;
    for (n, est) in rows {
        writeln!(
            w,
            "{n},{},{:.17e},{:.17e},{:.17e}",
            est.trials, est.mean.re, est.mean.im, est.stderr
        )?;
    }
    Ok(())
}

/// CSV rows: x, rho.
pub fn write_density_csv<W: IoWrite>(w: &mut W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "x,rho")?;
    for (x, rho) in rows {
        writeln!(w, "{x:.17e},{rho:.17e}")?;
    }
    Ok(())
}

/// CSV row per trial: N, escapes, total_eigs.
pub fn write_inclusion_csv<W: IoWrite>(w: &mut W, report: &InclusionReport) -> Result<()> {
    writeln!(w, "N,escapes,total_eigs")?;
    for e in &report.per_trial_escapes {
        writeln!(w, "{},{e},{}", report.n, report.eigs_per_trial)?;
    }
    Ok(())
}
