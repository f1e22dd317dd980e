//! Numerical random-matrix layer: GUE sampling, Cayley transforms, tensor
//! operators, norms and spectra, and block-triangular derivative checks.
//!
//! Conventions: a sampled matrix `X` is Hermitian with diagonal entries real
//! `N(0, 1/N)` and off-diagonal real/imaginary parts independent `N(0, 1/(2N))`,
//! so `E[tr X^2] = 1` exactly and the spectrum concentrates on `[-2, 2]`.
//! All randomness is derived from explicit integer seeds; the same seed always
//! reproduces the same matrix bit for bit.

use crate::linalg::{self, adjoint, eigvalsh, expm, fro_norm, identity, inv, kron, CMat, CVec};
use crate::ncpoly::{Kind, Letter, NcPoly};
use crate::scalar::cq_to_c64;
use crate::{Error, Result};
use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{Read as IoRead, Write as IoWrite};

/// Matrices up to this side length get full dense eigendecompositions;
/// larger ones go through the iterative extremal-eigenvalue path.
pub const DENSE_EIG_CAP: usize = 4096;

/// Tensor-model matrices are materialized densely while m*N^2 stays at or
/// below this; beyond it, use [`SnAction`].
pub const SN_DENSE_CAP: usize = 8192;

pub type HermitianMatrix = CMat;

/// Coefficient data for the deformed tensor model: a Hermitian block `xi`
/// and arbitrary square blocks `gamma_i`, `beta_i` of the same size.
#[derive(Clone, Debug)]
pub struct ModelCoefficients {
    pub xi: CMat,
    pub gammas: Vec<CMat>,
    pub betas: Vec<CMat>,
}

impl ModelCoefficients {
    pub fn m(&self) -> usize {
        self.xi.nrows()
    }

    pub fn r(&self) -> usize {
        self.gammas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.xi.ncols() != m {
            return Err(Error::SizeMismatch("xi must be square".into()));
        }
        if hermitian_residual(&self.xi) > 1e-12 {
            return Err(Error::InvalidInput("xi must be Hermitian".into()));
        }
        if self.gammas.len() != self.betas.len() {
            return Err(Error::SizeMismatch(
                "gamma and beta lists must have equal length".into(),
            ));
        }
        for a in self.gammas.iter().chain(self.betas.iter()) {
            if a.dim() != (m, m) {
                return Err(Error::SizeMismatch(
                    "coefficient blocks must all be m x m".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Monte-Carlo summary: sample mean, standard error of the mean, and the
/// seed data needed to reproduce the run.
#[derive(Clone, Copy, Debug)]
pub struct MCEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub trials: u64,
    pub base_seed: u64,
}

/// Per-trial seed: an avalanche mix of the base seed and the trial index,
/// so trials are order-independent and parallel-safe.
pub fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    let mut z = base_seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ||A - A*|| in Frobenius norm.
pub fn hermitian_residual(a: &CMat) -> f64 {
    fro_norm(&(a - &adjoint(a)))
}

/// (A + A*)/2.
pub fn symmetrize(a: &CMat) -> CMat {
    (a + &adjoint(a)).mapv(|z| z * 0.5)
}

/// Normalized trace tr = Tr/N.
pub fn normalized_trace(a: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..n {
        t += a[[i, i]];
    }
    t / n as f64
}

/// Draw one Hermitian matrix: diagonal real N(0,1/N), off-diagonal
/// real/imaginary parts independent N(0,1/(2N)). Fully determined by `seed`.
pub fn sample_gue(n: usize, seed: u64) -> HermitianMatrix {
    assert!(n >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag_sd = 1.0 / (n as f64).sqrt();
    let off_sd = 1.0 / (2.0 * n as f64).sqrt();
    let mut a: CMat = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            if i == j {
                let d: f64 = rng.sample(StandardNormal);
                a[[i, i]] = Complex64::new(d * diag_sd, 0.0);
            } else {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let z = Complex64::new(re * off_sd, im * off_sd);
                a[[i, j]] = z;
                a[[j, i]] = z.conj();
            }
        }
    }
    a
}

/// Draw an r-tuple of independent Hermitian matrices; stream `k` of the tuple
/// uses a seed derived from (seed, k).
pub fn sample_gue_tuple(n: usize, r: usize, seed: u64) -> Vec<HermitianMatrix> {
    (0..r)
        .map(|k| sample_gue(n, trial_seed(seed, 0x10_0000 + k as u64)))
        .collect()
}

/// (H + i)(H - i)^-1. For Hermitian input the result is unitary; the
/// formula itself only needs H - i invertible.
pub fn cayley_matrix(h: &CMat) -> Result<CMat> {
    let n = h.nrows();
    let i = Complex64::new(0.0, 1.0);
    let num = h + &identity(n).mapv(|z| z * i);
    let den = h - &identity(n).mapv(|z| z * i);
    Ok(num.dot(&inv(&den)?))
}

/// Cayley transform or its inverse: eps = +1 gives (H+i)(H-i)^-1,
/// eps = -1 gives (H-i)(H+i)^-1.
pub fn cayley_pow(h: &CMat, eps: i8) -> Result<CMat> {
    match eps {
        1 => cayley_matrix(h),
        -1 => {
            let n = h.nrows();
            let i = Complex64::new(0.0, 1.0);
            let num = h - &identity(n).mapv(|z| z * i);
            let den = h + &identity(n).mapv(|z| z * i);
            Ok(num.dot(&inv(&den)?))
        }
        _ => Err(Error::InvalidInput("cayley power must be +1 or -1".into())),
    }
}

/// Inverse Cayley transform i(U+1)(U-1)^-1; requires 1 not in sp(U).
pub fn inverse_cayley(u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    let i = Complex64::new(0.0, 1.0);
    let num = (u + &identity(n)).mapv(|z| z * i);
    let den = u - &identity(n);
    Ok(num.dot(&inv(&den)?))
}

fn check_model_sizes(c: &ModelCoefficients, us: &[CMat], vs: &[CMat]) -> Result<usize> {
    c.validate()?;
    let r = c.r();
    if us.len() != r || vs.len() != r {
        return Err(Error::SizeMismatch(format!(
            "expected {r} left and right unitaries, got {} and {}",
            us.len(),
            vs.len()
        )));
    }
    let n = if r > 0 { us[0].nrows() } else { 1 };
    for w in us.iter().chain(vs.iter()) {
        if w.dim() != (n, n) {
            return Err(Error::SizeMismatch(
                "all unitaries must share one size N".into(),
            ));
        }
    }
    Ok(n)
}

/// Dense tensor-model matrix
/// xi (x) I (x) I + sum_i (gamma_i (x) U_i (x) I + gamma_i* (x) U_i* (x) I
///                        + beta_i (x) I (x) V_i + beta_i* (x) I (x) V_i*),
/// size m*N^2. Fails with MemoryCap above [`SN_DENSE_CAP`].
pub fn build_sn(c: &ModelCoefficients, us: &[CMat], vs: &[CMat]) -> Result<CMat> {
    build_sn_capped(c, us, vs, SN_DENSE_CAP)
}

pub fn build_sn_capped(
    c: &ModelCoefficients,
    us: &[CMat],
    vs: &[CMat],
    cap: usize,
) -> Result<CMat> {
    let n = check_model_sizes(c, us, vs)?;
    let size = c.m() * n * n;
    if size > cap {
        return Err(Error::MemoryCap { size, cap });
    }
    let id_n = identity(n);
    let id_nn = identity(n * n);
    let mut out = kron(&c.xi, &id_nn);
    for i in 0..c.r() {
        out += &kron(&c.gammas[i], &kron(&us[i], &id_n));
        out += &kron(&adjoint(&c.gammas[i]), &kron(&adjoint(&us[i]), &id_n));
        out += &kron(&c.betas[i], &kron(&id_n, &vs[i]));
        out += &kron(&adjoint(&c.betas[i]), &kron(&id_n, &adjoint(&vs[i])));
    }
    Ok(out)
}

/// Square operator given by its action on vectors; lets the norm iteration
/// run on tensor models too large to materialize.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &CVec) -> CVec;
    /// An interval certain to contain the (real) spectrum; used only to pick
    /// power-iteration shifts, so looseness costs iterations, not correctness.
    fn spectrum_bounds(&self) -> (f64, f64);
}

struct DenseOp<'a>(&'a CMat);

impl LinOp for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &CVec) -> CVec {
        self.0.dot(v)
    }

    fn spectrum_bounds(&self) -> (f64, f64) {
        let n = self.0.nrows();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let center = self.0[[i, i]].re;
            let mut radius = 0.0;
            for j in 0..n {
                if j != i {
                    radius += self.0[[i, j]].norm();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        (lo, hi)
    }
}

/// Hermitian dilation [[0, A], [A*, 0]]; its extremal eigenvalue is ||A||.
struct DilationOp<'a> {
    a: &'a CMat,
    astar: CMat,
}

impl LinOp for DilationOp<'_> {
    fn dim(&self) -> usize {
        2 * self.a.nrows()
    }

    fn apply(&self, v: &CVec) -> CVec {
        let n = self.a.nrows();
        let top = v.slice(s![..n]).to_owned();
        let bot = v.slice(s![n..]).to_owned();
        let mut out = CVec::zeros(2 * n);
        out.slice_mut(s![..n]).assign(&self.a.dot(&bot));
        out.slice_mut(s![n..]).assign(&self.astar.dot(&top));
        out
    }

    fn spectrum_bounds(&self) -> (f64, f64) {
        let r = fro_norm(self.a);
        (-r, r)
    }
}

/// Matrix-free action of the tensor-model operator on m x N x N vectors.
pub struct SnAction {
    coeffs: ModelCoefficients,
    us: Vec<CMat>,
    vs: Vec<CMat>,
    n: usize,
}

impl SnAction {
    pub fn new(coeffs: ModelCoefficients, us: Vec<CMat>, vs: Vec<CMat>) -> Result<Self> {
        let n = check_model_sizes(&coeffs, &us, &vs)?;
        Ok(SnAction { coeffs, us, vs, n })
    }
}

impl LinOp for SnAction {
    fn dim(&self) -> usize {
        self.coeffs.m() * self.n * self.n
    }

    fn apply(&self, v: &CVec) -> CVec {
        let m = self.coeffs.m();
        let n = self.n;
        let cube = v.view().into_shape((m, n, n)).expect("length m*N^2");
        let mut out = ndarray::Array3::<Complex64>::zeros((m, n, n));
        // xi (x) I (x) I: mix the coefficient leg only.
        for a in 0..m {
            for ap in 0..m {
                let w = self.coeffs.xi[[a, ap]];
                if w != Complex64::new(0.0, 0.0) {
                    out.slice_mut(s![a, .., ..])
                        .scaled_add(w, &cube.slice(s![ap, .., ..]));
                }
            }
        }
        for i in 0..self.coeffs.r() {
            let gs = adjoint(&self.us[i]);
            let vs = adjoint(&self.vs[i]);
            let gamma_star = adjoint(&self.coeffs.gammas[i]);
            let beta_star = adjoint(&self.coeffs.betas[i]);
            for ap in 0..m {
                let slab = cube.slice(s![ap, .., ..]);
                let left = self.us[i].dot(&slab); // U acting on the middle leg
                let left_star = gs.dot(&slab);
                let right = slab.dot(&self.vs[i].t()); // V acting on the last leg
                let right_star = slab.dot(&vs.t());
                for a in 0..m {
                    let g = self.coeffs.gammas[i][[a, ap]];
                    let gst = gamma_star[[a, ap]];
                    let b = self.coeffs.betas[i][[a, ap]];
                    let bst = beta_star[[a, ap]];
                    let mut dst = out.slice_mut(s![a, .., ..]);
                    if g != Complex64::new(0.0, 0.0) {
                        dst.scaled_add(g, &left);
                    }
                    if gst != Complex64::new(0.0, 0.0) {
                        dst.scaled_add(gst, &left_star);
                    }
                    if b != Complex64::new(0.0, 0.0) {
                        dst.scaled_add(b, &right);
                    }
                    if bst != Complex64::new(0.0, 0.0) {
                        dst.scaled_add(bst, &right_star);
                    }
                }
            }
        }
        out.into_shape(m * n * n).expect("same length").to_owned()
    }

    fn spectrum_bounds(&self) -> (f64, f64) {
        // ||S|| <= ||xi|| + sum_i (||gamma_i||(||U_i|| + ||U_i*||) + ...),
        // with the small-block norms computed densely.
        let mut bound = fro_norm(&self.coeffs.xi);
        for i in 0..self.coeffs.r() {
            let u_norm = fro_norm(&self.us[i]);
            let v_norm = fro_norm(&self.vs[i]);
            bound += 2.0 * fro_norm(&self.coeffs.gammas[i]) * u_norm;
            bound += 2.0 * fro_norm(&self.coeffs.betas[i]) * v_norm;
        }
        (-bound, bound)
    }
}

/// Largest value of (lambda - sigma)^2 over the spectrum of the Hermitian
/// operator, by power iteration on (A - sigma)^2 with a fixed starting vector.
fn power_top_shifted_sq(
    op: &dyn LinOp,
    sigma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d5c_71ab_0001);
    let mut v = CVec::from_shape_fn(n, |_| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / norm);
    let shift = Complex64::new(sigma, 0.0);
    let mut mu_prev = f64::INFINITY;
    for _ in 0..max_iters {
        let bv = &op.apply(&v) - &v.mapv(|z| z * shift);
        let bbv = &op.apply(&bv) - &bv.mapv(|z| z * shift);
        let mu: f64 = v
            .iter()
            .zip(bbv.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let nrm = bbv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        v = bbv.mapv(|z| z / nrm);
        if (mu - mu_prev).abs() <= tol * mu.abs().max(1e-300) {
            return Ok(mu.max(0.0));
        }
        mu_prev = mu;
    }
    Err(Error::NonConvergence { iters: max_iters })
}

/// Extremal |eigenvalue| of a Hermitian operator via shifted power iteration
/// from both ends of the spectrum-bound interval.
pub fn extremal_abs_eigenvalue(op: &dyn LinOp, tol: f64) -> Result<f64> {
    let (lo, hi) = op.spectrum_bounds();
    let max_iters = 100_000;
    let top = lo + power_top_shifted_sq(op, lo, tol, max_iters)?.sqrt();
    let bottom = hi - power_top_shifted_sq(op, hi, tol, max_iters)?.sqrt();
    Ok(top.abs().max(bottom.abs()))
}

/// Operator norm (largest singular value) within relative tolerance `tol`
/// (1e-8 if tol <= 0): full Hermitian eigendecomposition up to
/// [`DENSE_EIG_CAP`], iterative beyond.
pub fn operator_norm(a: &CMat, tol: f64) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::SizeMismatch("operator norm needs a square matrix".into()));
    }
    let tol = if tol > 0.0 { tol } else { 1e-8 };
    let n = a.nrows();
    let herm = hermitian_residual(a) < 1e-12 * (1.0 + fro_norm(a));
    if n <= DENSE_EIG_CAP {
        if herm {
            linalg::hermitian_op_norm(a)
        } else {
            let g = adjoint(a).dot(a);
            let vals = eigvalsh(&g)?;
            Ok(vals.iter().fold(0.0_f64, |m, v| m.max(*v)).max(0.0).sqrt())
        }
    } else if herm {
        extremal_abs_eigenvalue(&DenseOp(a), tol)
    } else {
        let dil = DilationOp { a, astar: adjoint(a) };
        extremal_abs_eigenvalue(&dil, tol)
    }
}

/// Functions admissible on 2x2 block-triangular arguments.
pub enum BlockFun<'a> {
    /// A polynomial in x[b,1..r] and Cayley letters u[b,1..r].
    Poly(&'a NcPoly),
    /// (z - P)^-1 for a polynomial P.
    Resolvent(Complex64, &'a NcPoly),
    /// Cayley transform (+1) or its inverse (-1) of a single variable.
    CayleyPow(i8),
    /// Matrix exponential of a single variable.
    Exp,
}

/// Evaluate a polynomial at a matrix tuple: x[b,k] -> xs[k-1],
/// u[b,k]^e -> Cayley(xs[k-1])^e.
pub fn eval_on_tuple(p: &NcPoly, xs: &[CMat]) -> Result<CMat> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("need at least one matrix".into()));
    }
    let n = xs[0].nrows();
    for x in xs {
        if x.dim() != (n, n) {
            return Err(Error::SizeMismatch("tuple entries must share a size".into()));
        }
    }
    let mut cayley_cache: BTreeMap<(u32, i8), CMat> = BTreeMap::new();
    let mut acc: CMat = Array2::zeros((n, n));
    for (word, coeff) in &p.terms {
        let mut prod = identity(n);
        for l in word {
            let mat = letter_matrix(l, xs, &mut cayley_cache)?;
            prod = prod.dot(&mat);
        }
        let c = cq_to_c64(coeff);
        acc += &prod.mapv(|z| z * c);
    }
    Ok(acc)
}

fn letter_matrix(
    l: &Letter,
    xs: &[CMat],
    cayley_cache: &mut BTreeMap<(u32, i8), CMat>,
) -> Result<CMat> {
    if l.family != crate::ncpoly::Family::Base {
        return Err(Error::InvalidInput(
            "matrix evaluation handles base-family letters only".into(),
        ));
    }
    let idx = l.index as usize;
    if idx == 0 || idx > xs.len() {
        return Err(Error::InvalidInput(format!(
            "letter index {idx} outside the supplied tuple"
        )));
    }
    match l.kind {
        Kind::Selfadjoint => Ok(xs[idx - 1].clone()),
        Kind::Cayley => {
            if let Some(m) = cayley_cache.get(&(l.index, l.exponent)) {
                return Ok(m.clone());
            }
            let m = cayley_pow(&xs[idx - 1], l.exponent)?;
            cayley_cache.insert((l.index, l.exponent), m.clone());
            Ok(m)
        }
    }
}

/// Evaluate `f` on the block matrices [[s_k, c_k], [0, u_k]] and return the
/// (1,2) block: the difference-quotient insertion of f between s and u.
pub fn block_delta_eval(f: &BlockFun, ss: &[CMat], us: &[CMat], cs: &[CMat]) -> Result<CMat> {
    if ss.len() != us.len() || ss.len() != cs.len() || ss.is_empty() {
        return Err(Error::SizeMismatch(
            "s, u, c tuples must be nonempty and of equal length".into(),
        ));
    }
    let n = ss[0].nrows();
    for m in ss.iter().chain(us.iter()).chain(cs.iter()) {
        if m.dim() != (n, n) {
            return Err(Error::SizeMismatch("block entries must share a size".into()));
        }
    }
    let blocks: Vec<CMat> = (0..ss.len())
        .map(|k| {
            let mut b: CMat = Array2::zeros((2 * n, 2 * n));
            b.slice_mut(s![..n, ..n]).assign(&ss[k]);
            b.slice_mut(s![..n, n..]).assign(&cs[k]);
            b.slice_mut(s![n.., n..]).assign(&us[k]);
            b
        })
        .collect();
    let evaluated = match f {
        BlockFun::Poly(p) => eval_on_tuple(p, &blocks)?,
        BlockFun::Resolvent(z, p) => {
            let pm = eval_on_tuple(p, &blocks)?;
            let zi = identity(2 * n).mapv(|w| w * *z);
            inv(&(&zi - &pm))?
        }
        BlockFun::CayleyPow(eps) => {
            if blocks.len() != 1 {
                return Err(Error::ArityMismatch { expected: 1, got: blocks.len() });
            }
            cayley_pow(&blocks[0], *eps)?
        }
        BlockFun::Exp => {
            if blocks.len() != 1 {
                return Err(Error::ArityMismatch { expected: 1, got: blocks.len() });
            }
            expm(&blocks[0])
        }
    };
    Ok(evaluated.slice(s![..n, n..]).to_owned())
}

/// Sum of A(s-tuple) c B(u-tuple) over the terms A (x) B of the free
/// difference quotient of `p` in variable `j`.
pub fn eval_partial_insertion(
    p: &NcPoly,
    j: u32,
    ss: &[CMat],
    us: &[CMat],
    c: &CMat,
) -> Result<CMat> {
    let t = crate::ncpoly::partial(p, j)?;
    let n = c.nrows();
    let mut acc: CMat = Array2::zeros((n, n));
    for (words, coeff) in &t.terms {
        let left = eval_on_tuple(&NcPoly::monomial(words[0].clone(), crate::scalar::cq_one()), ss)?;
        let right = eval_on_tuple(&NcPoly::monomial(words[1].clone(), crate::scalar::cq_one()), us)?;
        let w = cq_to_c64(coeff);
        acc += &left.dot(c).dot(&right).mapv(|z| z * w);
    }
    Ok(acc)
}

/// Mean and standard error of a per-trial statistic; trial t runs with seed
/// trial_seed(base_seed, t). Trials evaluate in parallel; the reduction is a
/// fixed pairwise tree, so results are independent of thread schedule.
pub fn mc_trace<F>(trials: u64, base_seed: u64, f: F) -> Result<MCEstimate>
where
    F: Fn(u64) -> Complex64 + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidInput("need at least two trials".into()));
    }
    let vals: Vec<Complex64> = (0..trials)
        .into_par_iter()
        .map(|t| f(trial_seed(base_seed, t)))
        .collect();
    let mean = tree_sum(&vals) / trials as f64;
    let devs: Vec<Complex64> = vals
        .iter()
        .map(|v| Complex64::new((v - mean).norm_sqr(), 0.0))
        .collect();
    let var = tree_sum(&devs).re / (trials - 1) as f64;
    Ok(MCEstimate {
        mean,
        stderr: (var / trials as f64).sqrt(),
        trials,
        base_seed,
    })
}

fn tree_sum(vals: &[Complex64]) -> Complex64 {
    match vals.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => vals[0],
        n => tree_sum(&vals[..n / 2]) + tree_sum(&vals[n / 2..]),
    }
}

/// Write a matrix as: u64 rows, u64 cols (little endian), then row-major
/// entries as (re, im) f64 pairs, little endian.
pub fn write_matrix_binary<W: IoWrite>(w: &mut W, a: &CMat) -> Result<()> {
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for row in a.rows() {
        for z in row {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary<R: IoRead>(r: &mut R) -> Result<CMat> {
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    let mut out: CMat = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf8)?;
            let re = f64::from_le_bytes(buf8);
            r.read_exact(&mut buf8)?;
            let im = f64::from_le_bytes(buf8);
            out[[i, j]] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// Write eigenvalues (or any real spectrum) as CSV with an index column.
pub fn write_spectrum_csv<W: IoWrite>(w: &mut W, spectrum: &[f64]) -> Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in spectrum.iter().enumerate() {
        writeln!(w, "{i},{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpoly::{word_to_string, Letter};
    use crate::scalar::{cq, cq_one, q};
    use ndarray::array;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_mat(z: Complex64) -> CMat {
        array![[z]]
    }

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        sample_gue(n, seed)
    }

    #[test]
    fn gue_is_hermitian_and_deterministic() {
        let a = sample_gue(16, 7);
        let b = sample_gue(16, 7);
        let c = sample_gue(16, 8);
        assert!(hermitian_residual(&a) == 0.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gue_trace_square_matches_wick() {
        // E[tr X^2] = 1 exactly at every N.
        let est = mc_trace(200, 11, |seed| {
            let x = sample_gue(64, seed);
            normalized_trace(&x.dot(&x))
        })
        .unwrap();
        assert!(est.mean.im.abs() < 1e-12);
        assert!((est.mean.re - 1.0).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn gue_trace_fourth_power_matches_wick() {
        // E[tr X^4] = 2 + 1/N^2 exactly.
        let n = 32;
        let est = mc_trace(400, 13, |seed| {
            let x = sample_gue(n, seed);
            let x2 = x.dot(&x);
            normalized_trace(&x2.dot(&x2))
        })
        .unwrap();
        let expect = 2.0 + 1.0 / (n as f64 * n as f64);
        assert!((est.mean.re - expect).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn gue_exponential_trace_matches_semicircle_quadrature() {
        // E[tr e^{iX}] -> integral of e^{it} against the semicircle law.
        let nodes = 512;
        let mut reference = Complex64::new(0.0, 0.0);
        for j in 1..=nodes {
            let theta = std::f64::consts::PI * j as f64 / (nodes + 1) as f64;
            let w = 2.0 / (nodes as f64 + 1.0) * theta.sin() * theta.sin();
            reference += c64(0.0, 2.0 * theta.cos()).exp() * w;
        }
        assert!((reference.re - 0.576_724_8).abs() < 1e-6);
        let est = mc_trace(200, 17, |seed| {
            let x = sample_gue(64, seed);
            normalized_trace(&expm(&x.mapv(|z| z * c64(0.0, 1.0))))
        })
        .unwrap();
        assert!((est.mean - reference).norm() < 3.0 * est.stderr + 1e-4, "{est:?}");
    }

    #[test]
    fn cayley_of_zero_is_minus_identity() {
        let z: CMat = Array2::zeros((4, 4));
        let u = cayley_matrix(&z).unwrap();
        assert!(fro_norm(&(&u + &identity(4))) < 1e-14);
    }

    #[test]
    fn cayley_is_unitary_and_invertible() {
        let h = random_hermitian(32, 21);
        let u = cayley_matrix(&h).unwrap();
        assert!(fro_norm(&(u.dot(&adjoint(&u)) - identity(32))) < 1e-10);
        let back = inverse_cayley(&u).unwrap();
        let err = (&back - &h).iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        assert!(err < 1e-8);
        let ui = cayley_pow(&h, -1).unwrap();
        assert!(fro_norm(&(u.dot(&ui) - identity(32))) < 1e-10);
    }

    #[test]
    fn sn_with_zero_offdiagonal_has_xi_spectrum() {
        let xi: CMat = array![
            [c64(1.0, 0.0), c64(0.0, 0.0)],
            [c64(0.0, 0.0), c64(-2.0, 0.0)]
        ];
        let zero: CMat = Array2::zeros((2, 2));
        let c = ModelCoefficients {
            xi,
            gammas: vec![zero.clone()],
            betas: vec![zero],
        };
        let u = identity(3);
        let sn = build_sn(&c, &[u.clone()], &[u]).unwrap();
        assert_eq!(sn.nrows(), 18);
        let vals = eigvalsh(&sn).unwrap();
        for v in &vals[..9] {
            assert!((v + 2.0).abs() < 1e-12);
        }
        for v in &vals[9..] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sn_scalar_case_doubles_identity() {
        let c = ModelCoefficients {
            xi: scalar_mat(c64(0.0, 0.0)),
            gammas: vec![scalar_mat(c64(1.0, 0.0))],
            betas: vec![scalar_mat(c64(0.0, 0.0))],
        };
        let n = 4;
        let sn = build_sn(&c, &[identity(n)], &[identity(n)]).unwrap();
        assert!(fro_norm(&(&sn - &identity(n * n).mapv(|z| z * 2.0))) < 1e-14);
    }

    #[test]
    fn sn_is_hermitian_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rand_mat = |m: usize| {
            CMat::from_shape_fn((m, m), |_| {
                c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
        };
        let xi_raw = rand_mat(2);
        let c = ModelCoefficients {
            xi: symmetrize(&xi_raw),
            gammas: vec![rand_mat(2)],
            betas: vec![rand_mat(2)],
        };
        let u = cayley_matrix(&random_hermitian(4, 33)).unwrap();
        let v = cayley_matrix(&random_hermitian(4, 34)).unwrap();
        let sn = build_sn(&c, &[u.clone()], &[v.clone()]).unwrap();
        assert!(hermitian_residual(&sn) < 1e-12);
        // dense matrix and matrix-free action agree
        let action = SnAction::new(c, vec![u], vec![v]).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(35);
        let vec = CVec::from_shape_fn(32, |_| {
            c64(rng2.sample(StandardNormal), rng2.sample(StandardNormal))
        });
        let dense = sn.dot(&vec);
        let free = action.apply(&vec);
        let diff: f64 = dense.iter().zip(free.iter()).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff < 1e-10);
    }

    #[test]
    fn sn_memory_cap_enforced() {
        let c = ModelCoefficients {
            xi: scalar_mat(c64(0.0, 0.0)),
            gammas: vec![scalar_mat(c64(1.0, 0.0))],
            betas: vec![scalar_mat(c64(0.0, 0.0))],
        };
        let n = 128; // m*N^2 = 16384 > 8192
        let err = build_sn(&c, &[identity(n)], &[identity(n)]).unwrap_err();
        assert!(matches!(err, Error::MemoryCap { .. }));
    }

    #[test]
    fn operator_norm_basics() {
        assert!((operator_norm(&identity(5), 0.0).unwrap() - 1.0).abs() < 1e-12);
        let d: CMat = array![
            [c64(3.0, 0.0), c64(0.0, 0.0)],
            [c64(0.0, 0.0), c64(-5.0, 0.0)]
        ];
        assert!((operator_norm(&d, 0.0).unwrap() - 5.0).abs() < 1e-12);
        // non-Hermitian: largest singular value of [[0,2],[0,0]] is 2
        let nh: CMat = array![
            [c64(0.0, 0.0), c64(2.0, 0.0)],
            [c64(0.0, 0.0), c64(0.0, 0.0)]
        ];
        assert!((operator_norm(&nh, 0.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn iterative_norm_matches_dense() {
        let a = random_hermitian(60, 41);
        let dense = operator_norm(&a, 0.0).unwrap();
        let iter = extremal_abs_eigenvalue(&DenseOp(&a), 1e-10).unwrap();
        assert!((dense - iter).abs() < 1e-6 * dense.max(1.0), "{dense} vs {iter}");
        // non-Hermitian via dilation
        let mut b = a.clone();
        b[[0, 1]] += c64(0.3, 0.7);
        let dense_b = operator_norm(&b, 0.0).unwrap();
        let dil = DilationOp { a: &b, astar: adjoint(&b) };
        let iter_b = extremal_abs_eigenvalue(&dil, 1e-10).unwrap();
        assert!((dense_b - iter_b).abs() < 1e-6 * dense_b.max(1.0));
    }

    #[test]
    fn gue_norm_near_semicircle_edge() {
        let x = sample_gue(512, 47);
        let nrm = operator_norm(&x, 0.0).unwrap();
        assert!((1.80..=2.10).contains(&nrm), "{nrm}");
    }

    #[test]
    fn block_delta_square_is_anticommutator_insertion() {
        let s = scalar_mat(c64(2.0, 0.0));
        let u = scalar_mat(c64(5.0, 0.0));
        let c = scalar_mat(c64(1.5, 0.0));
        let x = Letter::x(1);
        let p = NcPoly::monomial(vec![x, x], cq_one());
        let out = block_delta_eval(
            &BlockFun::Poly(&p),
            std::slice::from_ref(&s),
            std::slice::from_ref(&u),
            std::slice::from_ref(&c),
        )
        .unwrap();
        // sc + cu = 2*1.5 + 1.5*5
        assert!((out[[0, 0]] - c64(10.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn block_delta_cayley_at_zero() {
        let z = scalar_mat(c64(0.0, 0.0));
        let c = scalar_mat(c64(0.7, -0.2));
        let out = block_delta_eval(
            &BlockFun::CayleyPow(1),
            std::slice::from_ref(&z),
            std::slice::from_ref(&z),
            std::slice::from_ref(&c),
        )
        .unwrap();
        assert!((out[[0, 0]] - c64(0.0, 2.0) * c[[0, 0]]).norm() < 1e-12);
    }

    #[test]
    fn block_delta_cayley_matches_closed_form() {
        // (1,2) block of Psi([[s,c],[0,u]]) = (i/2)(Psi(s)-1) c (Psi(u)-1)
        let n = 16;
        let s = random_hermitian(n, 51);
        let u = random_hermitian(n, 52);
        let c = sample_gue(n, 53); // any matrix works; Hermitian is convenient
        let got = block_delta_eval(
            &BlockFun::CayleyPow(1),
            std::slice::from_ref(&s),
            std::slice::from_ref(&u),
            std::slice::from_ref(&c),
        )
        .unwrap();
        let ps = cayley_matrix(&s).unwrap() - identity(n);
        let pu = cayley_matrix(&u).unwrap() - identity(n);
        let want = ps.dot(&c).dot(&pu).mapv(|z| z * c64(0.0, 0.5));
        assert!(fro_norm(&(&got - &want)) < 1e-8);
    }

    #[test]
    fn partial_matches_block_delta_on_random_monomials() {
        let n = 8;
        let ss = vec![random_hermitian(n, 61), random_hermitian(n, 62)];
        let us = vec![random_hermitian(n, 63), random_hermitian(n, 64)];
        let c = sample_gue(n, 65);
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        for deg in 1..=5 {
            let word: Vec<Letter> = (0..deg)
                .map(|_| Letter::x(1 + rng.gen_range(0..2u32)))
                .collect();
            let p = NcPoly::monomial(word.clone(), cq_one());
            for j in 1..=2u32 {
                let direct = eval_partial_insertion(&p, j, &ss, &us, &c).unwrap();
                let cs: Vec<CMat> = (1..=2)
                    .map(|k| if k == j { c.clone() } else { Array2::zeros((n, n)) })
                    .collect();
                let block = block_delta_eval(&BlockFun::Poly(&p), &ss, &us, &cs).unwrap();
                assert!(
                    fro_norm(&(&direct - &block)) < 1e-9,
                    "deg {deg} j {j} word {}",
                    word_to_string(&word)
                );
            }
        }
    }

    #[test]
    fn resolvent_derivative_factorizes() {
        // block delta of (z-P)^-1 = (z-P)^-1(s) [insertion] (z-P)^-1(u)
        let n = 6;
        let ss = vec![random_hermitian(n, 71), random_hermitian(n, 72)];
        let us = vec![random_hermitian(n, 73), random_hermitian(n, 74)];
        let c = sample_gue(n, 75);
        let x1 = Letter::x(1);
        let x2 = Letter::x(2);
        let mut p = NcPoly::monomial(vec![x1, x2, x1], cq_one());
        p = &p + &NcPoly::monomial(vec![x2, x2], cq(q(1, 2), q(0, 1)));
        let z = c64(0.0, 4.0);
        let j = 1u32;
        let cs: Vec<CMat> = vec![c.clone(), Array2::zeros((n, n))];
        let got = block_delta_eval(&BlockFun::Resolvent(z, &p), &ss, &us, &cs).unwrap();
        let zi = identity(n).mapv(|w| w * z);
        let rs = inv(&(&zi - &eval_on_tuple(&p, &ss).unwrap())).unwrap();
        let ru = inv(&(&zi - &eval_on_tuple(&p, &us).unwrap())).unwrap();
        let ins = eval_partial_insertion(&p, j, &ss, &us, &c).unwrap();
        let want = rs.dot(&ins).dot(&ru);
        assert!(fro_norm(&(&got - &want)) < 1e-8);
    }

    #[test]
    fn tensor_resolvent_block_identity() {
        // Resolvent derivative for the full tensor model at m=1, N=8, z=3i:
        // the 128x128 block recipe against the product-of-resolvents form.
        let n = 8;
        let s1 = random_hermitian(n, 81);
        let u1 = random_hermitian(n, 82);
        let t1 = random_hermitian(n, 83);
        let c = sample_gue(n, 84).mapv(|z| z * 0.2);
        let gamma = c64(0.15, 0.1);
        let beta = c64(0.05, -0.2);
        let xi = c64(0.3, 0.0);
        let z = c64(0.0, 3.0);

        let psi_t = cayley_matrix(&t1).unwrap();
        let psi_t_inv = cayley_pow(&t1, -1).unwrap();

        // S on a Cayley tuple: xi + gamma Psi(s) (x) 1 + conj ... + beta 1 (x) Psi(t) + conj
        let script_s = |sv: &CMat| -> CMat {
            let k = sv.nrows(); // middle leg: N for the plain model, 2N for the block
            let ps = cayley_matrix(sv).unwrap();
            let ps_inv = cayley_pow(sv, -1).unwrap();
            let mut m = identity(k * n).mapv(|w| w * xi);
            m += &kron(&ps, &identity(n)).mapv(|w| w * gamma);
            m += &kron(&ps_inv, &identity(n)).mapv(|w| w * gamma.conj());
            m += &kron(&identity(k), &psi_t).mapv(|w| w * beta);
            m += &kron(&identity(k), &psi_t_inv).mapv(|w| w * beta.conj());
            m
        };

        // Left side: blow s up to the 2N block with c in the corner, build the
        // 2N*N resolvent, read off its middle-leg (1,2) block.
        let mut blk: CMat = Array2::zeros((2 * n, 2 * n));
        blk.slice_mut(s![..n, ..n]).assign(&s1);
        blk.slice_mut(s![..n, n..]).assign(&c);
        blk.slice_mut(s![n.., n..]).assign(&u1);
        let big = script_s(&blk);
        let zi_big = identity(2 * n * n).mapv(|w| w * z);
        let rbig = inv(&(&zi_big - &big)).unwrap();
        // legs are (2N) (x) N; the (1,2) middle-leg block is rows 0..n*n, cols n*n..
        let got = rbig.slice(s![..n * n, n * n..]).to_owned();

        // Right side: (z-S(s))^-1 [ (i/2)(gamma (Psi(s)-1)c(Psi(u)-1)
        //   - conj(gamma) (Psi(s)^-1-1)c(Psi(u)^-1-1)) (x) 1 ] (z-S(u))^-1
        let zi = identity(n * n).mapv(|w| w * z);
        let rs = inv(&(&zi - &script_s(&s1))).unwrap();
        let ru = inv(&(&zi - &script_s(&u1))).unwrap();
        let ps_s = cayley_matrix(&s1).unwrap() - identity(n);
        let ps_u = cayley_matrix(&u1).unwrap() - identity(n);
        let psi_s_inv = cayley_pow(&s1, -1).unwrap() - identity(n);
        let psi_u_inv = cayley_pow(&u1, -1).unwrap() - identity(n);
        let ins_plus = ps_s.dot(&c).dot(&ps_u).mapv(|w| w * gamma);
        let ins_minus = psi_s_inv.dot(&c).dot(&psi_u_inv).mapv(|w| w * gamma.conj());
        let ins = kron(&(&ins_plus - &ins_minus), &identity(n)).mapv(|w| w * c64(0.0, 0.5));
        let want = rs.dot(&ins).dot(&ru);
        assert!(fro_norm(&(&got - &want)) < 1e-8, "{}", fro_norm(&(&got - &want)));
    }

    #[test]
    fn exponential_block_matches_duhamel_quadrature() {
        let n = 8;
        let a = random_hermitian(n, 91);
        let c = sample_gue(n, 92);
        let got = block_delta_eval(
            &BlockFun::Exp,
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
            std::slice::from_ref(&c),
        )
        .unwrap();
        // integral_0^1 e^{aA} C e^{(1-a)A} da by 32-node Gauss-Legendre
        let (nodes, weights) = crate::parraud::gauss_legendre(32);
        let mut want: CMat = Array2::zeros((n, n));
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let t = 0.5 * (x + 1.0);
            let left = expm(&a.mapv(|z| z * t));
            let right = expm(&a.mapv(|z| z * (1.0 - t)));
            want += &left.dot(&c).dot(&right).mapv(|z| z * (0.5 * w));
        }
        assert!(fro_norm(&(&got - &want)) < 1e-6);
    }

    #[test]
    fn fourier_half_line_identity() {
        // 1 - 2 integral_{-inf}^0 e^{(i eps x + 1)y} dy = (x + eps i)/(x - eps i)
        let (nodes, weights) = crate::parraud::gauss_legendre(32);
        for &x in &[0.0, 0.7, -1.3, 4.2] {
            for &eps in &[1.0f64, -1.0] {
                let mut integral = Complex64::new(0.0, 0.0);
                // substitute y = -t, integrate t over [0, 50] in 10 panels
                for panel in 0..10 {
                    let (a, b) = (5.0 * panel as f64, 5.0 * (panel + 1) as f64);
                    for (xn, w) in nodes.iter().zip(weights.iter()) {
                        let t = 0.5 * (b - a) * xn + 0.5 * (a + b);
                        let val = (-(Complex64::new(1.0, eps * x)) * t).exp();
                        integral += val * (0.5 * (b - a) * w);
                    }
                }
                let lhs = Complex64::new(1.0, 0.0) - 2.0 * integral;
                let rhs = Complex64::new(x, eps) / Complex64::new(x, -eps);
                assert!((lhs - rhs).norm() < 1e-10, "x={x} eps={eps}");
            }
        }
    }

    #[test]
    fn cayley_norm_bound_for_small_imaginary_part() {
        let n = 12;
        let re = random_hermitian(n, 101);
        let im_raw = random_hermitian(n, 102);
        let scale = 0.8 / operator_norm(&im_raw, 0.0).unwrap();
        let im = im_raw.mapv(|z| z * scale);
        let s = &re + &im.mapv(|z| z * c64(0.0, 1.0));
        let bound_plus = operator_norm(&inv(&(identity(n) - &im)).unwrap(), 0.0).unwrap();
        let bound_minus = operator_norm(&inv(&(identity(n) + &im)).unwrap(), 0.0).unwrap();
        let bound = 1.0 + 2.0 * bound_plus.max(bound_minus);
        for eps in [1i8, -1] {
            let psi = cayley_pow(&s, eps).unwrap();
            let nrm = operator_norm(&psi, 0.0).unwrap();
            assert!(nrm <= bound + 1e-9, "eps={eps}: {nrm} > {bound}");
        }
    }

    #[test]
    fn cayley_power_series_converges_inside_unit_ball() {
        let n = 10;
        let raw = sample_gue(n, 111);
        let z = raw.mapv(|w| w * (0.9 / operator_norm(&raw, 0.0).unwrap()));
        for eps in [1i8, -1] {
            let psi = cayley_pow(&z, eps).unwrap();
            // 1 - 2 sum_{k>=0} (-i eps Z)^k
            let step = z.mapv(|w| w * c64(0.0, -(eps as f64)));
            let mut partial = identity(n);
            let mut power = identity(n);
            let mut err_prev = f64::INFINITY;
            for k in 0..600 {
                partial -= &power.mapv(|w| w * 2.0);
                power = power.dot(&step);
                if k % 50 == 49 {
                    let err = fro_norm(&(&partial - &psi));
                    assert!(err < err_prev + 1e-12);
                    err_prev = err;
                }
                if fro_norm(&power) < 1e-13 {
                    break;
                }
            }
            assert!(fro_norm(&(&partial - &psi)) < 1e-8, "eps={eps}");
        }
    }

    #[test]
    fn cayley_inverse_as_rational_identity() {
        let n = 16;
        let x = random_hermitian(n, 121);
        let u = cayley_matrix(&x).unwrap();
        let got = (identity(n) + &inv(&(&u - &identity(n))).unwrap().mapv(|z| z * 2.0))
            .mapv(|z| z * c64(0.0, 1.0));
        let err = (&got - &x).iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn mc_trace_of_centered_statistic() {
        let est = mc_trace(100, 131, |seed| {
            let x = sample_gue(24, seed);
            normalized_trace(&x)
        })
        .unwrap();
        assert!(est.mean.norm() < 3.0 * est.stderr + 1e-12);
        assert_eq!(est.trials, 100);
        // determinism across calls
        let est2 = mc_trace(100, 131, |seed| {
            let x = sample_gue(24, seed);
            normalized_trace(&x)
        })
        .unwrap();
        assert_eq!(est.mean, est2.mean);
        assert_eq!(est.stderr, est2.stderr);
    }

    #[test]
    fn binary_roundtrip_and_csv() {
        let a = sample_gue(5, 141);
        let mut buf: Vec<u8> = Vec::new();
        write_matrix_binary(&mut buf, &a).unwrap();
        assert_eq!(buf.len(), 16 + 25 * 16);
        let b = read_matrix_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(a, b);
        let mut csv: Vec<u8> = Vec::new();
        write_spectrum_csv(&mut csv, &eigvalsh(&a).unwrap()).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("index,value\n0,"));
        assert_eq!(text.lines().count(), 6);
    }
}
