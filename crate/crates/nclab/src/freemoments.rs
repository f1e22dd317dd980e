//! Exact moments of jointly semicircular families under covariance kernels
//! (free Wick rule over non-crossing pairings), mixed moments of free
//! elements via the centering recursion, and quadrature marginals for Cayley
//! transforms of semicircular variables.

use crate::ncpoly::{Family, Kind, Letter, Word};
use crate::scalar::Q;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};

/// Perfect matching of letter positions (0-based).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PairPartition {
    pub pairs: Vec<(usize, usize)>,
}

impl PairPartition {
    /// Stack scan: a pairing is non-crossing iff every closer meets its own
    /// opener on top of the stack.
    pub fn is_non_crossing(&self) -> bool {
        let n = self.pairs.len() * 2;
        let mut partner = vec![usize::MAX; n];
        for &(a, b) in &self.pairs {
            partner[a] = b;
            partner[b] = a;
        }
        let mut stack = Vec::new();
        for p in 0..n {
            if partner[p] > p {
                stack.push(p);
            } else {
                match stack.pop() {
                    Some(open) if open == partner[p] => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

/// All perfect matchings of positions pairing only letters with equal index,
/// by recursive first-element matching. Empty for odd length or unmatched
/// color counts.
pub fn enumerate_color_pairings(word: &Word) -> Vec<PairPartition> {
    let n = word.len();
    if n % 2 != 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut current = Vec::with_capacity(n / 2);
    fn rec(
        word: &Word,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<PairPartition>,
    ) {
        let first = match used.iter().position(|u| !u) {
            None => {
                out.push(PairPartition { pairs: current.clone() });
                return;
            }
            Some(f) => f,
        };
        used[first] = true;
        for p in first + 1..word.len() {
            if used[p] || word[p].index != word[first].index {
                continue;
            }
            used[p] = true;
            current.push((first, p));
            rec(word, used, current, out);
            current.pop();
            used[p] = false;
        }
        used[first] = false;
    }
    rec(word, &mut used, &mut current, &mut out);
    out
}

/// Symbolic covariance value of one pairing edge.
#[derive(Clone, PartialEq, Debug)]
pub enum KernelValue {
    Zero,
    One,
    Q1,
    Q2,
    Rat(Q),
}

pub trait CovarianceKernel {
    fn value(&self, a: Family, b: Family) -> KernelValue;
}

/// Identity within a family, zero across families.
pub struct IdentityKernel;

impl CovarianceKernel for IdentityKernel {
    fn value(&self, a: Family, b: Family) -> KernelValue {
        if a == b {
            KernelValue::One
        } else {
            KernelValue::Zero
        }
    }
}

/// Covariance of the four interpolated families feeding the first-order
/// correction, in the slot family labels: 1 on the diagonal, q₁ within the
/// plain pair and within the tilde pair, q₂ between a tilde and a plain
/// family. Derived from the shared-component construction and pinned by a
/// unit test.
pub struct InterpolationKernel;

fn tilde_class_of(f: Family) -> Option<usize> {
    crate::ncpoly::rbuild::J1_FAMILIES.iter().position(|g| *g == f).map(|p| p / 2)
}

impl CovarianceKernel for InterpolationKernel {
    fn value(&self, a: Family, b: Family) -> KernelValue {
        if a == b {
            return KernelValue::One;
        }
        match (tilde_class_of(a), tilde_class_of(b)) {
            (Some(ca), Some(cb)) if ca == cb => KernelValue::Q1,
            (Some(_), Some(_)) => KernelValue::Q2,
            _ => KernelValue::Zero,
        }
    }
}

/// Exact polynomial in q₁, q₂ with rational coefficients.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct QPoly {
    pub terms: BTreeMap<(u32, u32), Q>,
}

impl QPoly {
    pub fn zero() -> Self {
        QPoly::default()
    }

    pub fn one() -> Self {
        QPoly::constant(Q::one())
    }

    pub fn constant(c: Q) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((0, 0), c);
        }
        QPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, k: (u32, u32), c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(k).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&k);
        }
    }

    pub fn add(&self, other: &QPoly) -> QPoly {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(*k, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Q) -> QPoly {
        if c.is_zero() {
            return QPoly::zero();
        }
        QPoly { terms: self.terms.iter().map(|(k, a)| (*k, a * c)).collect() }
    }

    pub fn mul(&self, other: &QPoly) -> QPoly {
        let mut out = QPoly::zero();
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                out.add_term((a1 + a2, b1 + b2), c1 * c2);
            }
        }
        out
    }

    pub fn coefficient(&self, k: (u32, u32)) -> Q {
        self.terms.get(&k).cloned().unwrap_or_else(Q::zero)
    }

    pub fn eval(&self, q1: f64, q2: f64) -> f64 {
        self.terms
            .iter()
            .map(|((a, b), c)| crate::scalar::q_to_f64(c) * q1.powi(*a as i32) * q2.powi(*b as i32))
            .sum()
    }
}

/// Free Wick rule: sum over non-crossing color-matched pairings of the
/// product of kernel values. With the identity kernel on one family this is
/// the Catalan count for even powers.
pub fn semicircular_moment(word: &Word, kernel: &dyn CovarianceKernel) -> QPoly {
    assert!(
        word.iter().all(|l| l.kind == Kind::Selfadjoint),
        "semicircular_moment expects selfadjoint letters"
    );
    if word.is_empty() {
        return QPoly::one();
    }
    let mut out = QPoly::zero();
    'pairing: for p in enumerate_color_pairings(word) {
        if !p.is_non_crossing() {
            continue;
        }
        let mut mono = QPoly::one();
        for &(a, b) in &p.pairs {
            let v = kernel.value(word[a].family, word[b].family);
            let factor = match v {
                KernelValue::Zero => continue 'pairing,
                KernelValue::One => continue,
                KernelValue::Q1 => {
                    let mut t = QPoly::zero();
                    t.add_term((1, 0), Q::one());
                    t
                }
                KernelValue::Q2 => {
                    let mut t = QPoly::zero();
                    t.add_term((0, 1), Q::one());
                    t
                }
                KernelValue::Rat(c) => QPoly::constant(c),
            };
            mono = mono.mul(&factor);
        }
        out = out.add(&mono);
    }
    out
}

pub fn catalan(k: usize) -> BigInt {
    // C_k = binom(2k, k) / (k+1)
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(2 * k - i);
        den *= BigInt::from(i + 1);
    }
    num / den / BigInt::from(k + 1)
}

/// Per-element moment specification for the centering recursion.
#[derive(Clone, Debug)]
pub enum MarginalSpec {
    /// τ(a^k): 0 for odd k, Catalan number for even k.
    Semicircular,
    /// τ(Ψ(a)^k) with a standard semicircular; Laurent moments by quadrature.
    CayleySemicircular { tol: f64 },
    /// Explicit moments for powers 0..len.
    Table(Vec<Complex64>),
    /// Explicit Laurent moments.
    Laurent(BTreeMap<i64, Complex64>),
}

#[derive(Clone, Debug, Default)]
pub struct Marginals {
    pub map: BTreeMap<(Family, u32), MarginalSpec>,
}

impl Marginals {
    pub fn insert(&mut self, family: Family, index: u32, spec: MarginalSpec) {
        self.map.insert((family, index), spec);
    }

    fn raw_moment(&self, key: (Family, u32), k: i64) -> Result<Complex64> {
        if k == 0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let spec = self
            .map
            .get(&key)
            .ok_or_else(|| Error::MarginalDepth { needed: k.unsigned_abs() as usize })?;
        match spec {
            MarginalSpec::Semicircular => {
                if k < 0 {
                    return Err(Error::InvalidInput(
                        "negative power of a selfadjoint element".into(),
                    ));
                }
                if k % 2 == 1 {
                    Ok(Complex64::new(0.0, 0.0))
                } else {
                    let c = catalan((k / 2) as usize);
                    Ok(Complex64::new(c.to_f64().unwrap(), 0.0))
                }
            }
            MarginalSpec::CayleySemicircular { tol } => cayley_marginal_moment(k, *tol),
            MarginalSpec::Table(t) => {
                if k < 0 || (k as usize) >= t.len() {
                    Err(Error::MarginalDepth { needed: k.unsigned_abs() as usize })
                } else {
                    Ok(t[k as usize])
                }
            }
            MarginalSpec::Laurent(t) => t
                .get(&k)
                .copied()
                .ok_or(Error::MarginalDepth { needed: k.unsigned_abs() as usize }),
        }
    }
}

type ElemKey = (Family, u32, Kind);

/// Laurent polynomial in one free element, sparse over signed powers.
type BlockPoly = BTreeMap<i64, Complex64>;

#[derive(Clone, Debug)]
struct Block {
    elem: ElemKey,
    poly: BlockPoly,
}

fn poly_insert(p: &mut BlockPoly, k: i64, c: Complex64) {
    if c == Complex64::new(0.0, 0.0) {
        return;
    }
    let e = p.entry(k).or_insert(Complex64::new(0.0, 0.0));
    *e += c;
    if *e == Complex64::new(0.0, 0.0) {
        p.remove(&k);
    }
}

fn poly_mul(a: &BlockPoly, b: &BlockPoly) -> BlockPoly {
    let mut out = BlockPoly::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            poly_insert(&mut out, ka + kb, ca * cb);
        }
    }
    out
}

fn memo_key(blocks: &[Block]) -> Vec<(ElemKey, Vec<(i64, u64, u64)>)> {
    blocks
        .iter()
        .map(|b| {
            (
                b.elem,
                b.poly
                    .iter()
                    .map(|(k, c)| (*k, c.re.to_bits(), c.im.to_bits()))
                    .collect(),
            )
        })
        .collect()
}

/// Mixed-moment evaluator over free elements with given marginals; memoizes
/// both the marginal moments and the centering recursion, so repeated
/// subwords are cheap.
pub struct FreeMomentCache<'a> {
    marginals: &'a Marginals,
    moment_memo: HashMap<((Family, u32), i64), Complex64>,
    word_memo: HashMap<Vec<(ElemKey, Vec<(i64, u64, u64)>)>, Complex64>,
}

impl<'a> FreeMomentCache<'a> {
    pub fn new(marginals: &'a Marginals) -> Self {
        FreeMomentCache {
            marginals,
            moment_memo: HashMap::new(),
            word_memo: HashMap::new(),
        }
    }

    fn marginal(&mut self, key: (Family, u32), k: i64) -> Result<Complex64> {
        if let Some(v) = self.moment_memo.get(&(key, k)) {
            return Ok(*v);
        }
        let v = self.marginals.raw_moment(key, k)?;
        self.moment_memo.insert((key, k), v);
        Ok(v)
    }

    fn block_moment(&mut self, b: &Block) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in &b.poly {
            acc += c * self.marginal((b.elem.0, b.elem.1), *k)?;
        }
        Ok(acc)
    }

    /// Collapses scalar blocks and merges adjacent equal-element blocks until
    /// stable; returns the extracted scalar factor.
    fn normalize(&mut self, blocks: &mut Vec<Block>) -> Complex64 {
        let mut scalar = Complex64::new(1.0, 0.0);
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < blocks.len() {
                let is_scalar =
                    blocks[i].poly.is_empty() || blocks[i].poly.keys().all(|k| *k == 0);
                if is_scalar {
                    let c = blocks[i]
                        .poly
                        .get(&0)
                        .copied()
                        .unwrap_or(Complex64::new(0.0, 0.0));
                    scalar *= c;
                    blocks.remove(i);
                    changed = true;
                    continue;
                }
                if i + 1 < blocks.len() && blocks[i].elem == blocks[i + 1].elem {
                    let merged = poly_mul(&blocks[i].poly, &blocks[i + 1].poly);
                    blocks[i].poly = merged;
                    blocks.remove(i + 1);
                    changed = true;
                    continue;
                }
                i += 1;
            }
            if !changed {
                break;
            }
        }
        scalar
    }

    fn tau_blocks(&mut self, mut blocks: Vec<Block>) -> Result<Complex64> {
        let scalar = self.normalize(&mut blocks);
        if scalar == Complex64::new(0.0, 0.0) || blocks.is_empty() {
            return Ok(scalar);
        }
        if blocks.len() == 1 {
            return Ok(scalar * self.block_moment(&blocks[0])?);
        }
        let key = memo_key(&blocks);
        if let Some(v) = self.word_memo.get(&key) {
            return Ok(scalar * v);
        }
        let mut means = Vec::with_capacity(blocks.len());
        for b in &blocks {
            means.push(self.block_moment(b)?);
        }
        // Alternating product of centered blocks is zero by freeness.
        let value = match means.iter().position(|m| *m != Complex64::new(0.0, 0.0)) {
            None => Complex64::new(0.0, 0.0),
            Some(i) => {
                let mi = means[i];
                let mut removed = blocks.clone();
                removed.remove(i);
                let mut centered = blocks.clone();
                poly_insert(&mut centered[i].poly, 0, -mi);
                mi * self.tau_blocks(removed)? + self.tau_blocks(centered)?
            }
        };
        self.word_memo.insert(key, value);
        Ok(scalar * value)
    }

    pub fn moment(&mut self, word: &Word) -> Result<Complex64> {
        let mut blocks: Vec<Block> = Vec::new();
        for l in word {
            let elem: ElemKey = (l.family, l.index, l.kind);
            let power = match l.kind {
                Kind::Selfadjoint => 1,
                Kind::Cayley => l.exponent as i64,
            };
            if let Some(last) = blocks.last_mut() {
                if last.elem == elem {
                    let old = std::mem::take(&mut last.poly);
                    let mut single = BlockPoly::new();
                    poly_insert(&mut single, power, Complex64::new(1.0, 0.0));
                    last.poly = poly_mul(&old, &single);
                    continue;
                }
            }
            let mut poly = BlockPoly::new();
            poly_insert(&mut poly, power, Complex64::new(1.0, 0.0));
            blocks.push(Block { elem, poly });
        }
        self.tau_blocks(blocks)
    }
}

/// Mixed moment of a word in free elements, determined by freeness of the
/// marginal distributions.
pub fn free_word_moment(word: &Word, marginals: &Marginals) -> Result<Complex64> {
    FreeMomentCache::new(marginals).moment(word)
}

/// ∫ Ψ(x)^k dμ_sc(x) with Ψ(x) = (x+i)/(x−i), by Gauss–Chebyshev quadrature
/// of the second kind (node doubling until successive refinements agree).
pub fn cayley_marginal_moment(k: i64, tol: f64) -> Result<Complex64> {
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let f = |x: f64| -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(x, 0.0);
        let psi = (z + i) / (z - i);
        psi.powi(k as i32)
    };
    let quad = |n: usize| -> Complex64 {
        // nodes x_j = 2cos(θ_j), weights (2/(n+1)) sin²θ_j match the
        // semicircle density exactly
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 1..=n {
            let theta = std::f64::consts::PI * j as f64 / (n + 1) as f64;
            let w = 2.0 / (n + 1) as f64 * theta.sin() * theta.sin();
            acc += w * f(2.0 * theta.cos());
        }
        acc
    };
    let mut n = 256;
    let mut prev = quad(n);
    for _ in 0..12 {
        n *= 2;
        let next = quad(n);
        let diff = (next - prev).norm();
        if diff <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence { tol, last: (quad(2 * n) - prev).norm() })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Leg {
    Left,
    Right,
}

/// τ⊗τ of a word in {a⊗1, 1⊗b}: the legs commute apart, so the value is the
/// product of the per-leg mixed moments.
pub fn tensor_word_moment(
    word: &[(Leg, Letter)],
    left: &Marginals,
    right: &Marginals,
) -> Result<Complex64> {
    let lw: Word = word.iter().filter(|(g, _)| *g == Leg::Left).map(|(_, l)| *l).collect();
    let rw: Word = word.iter().filter(|(g, _)| *g == Leg::Right).map(|(_, l)| *l).collect();
    Ok(free_word_moment(&lw, left)? * free_word_moment(&rw, right)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpoly::rbuild::{J1_E1, J1_E2, J1_TE1, J1_TE2};

    fn xw(indices: &[u32]) -> Word {
        indices.iter().map(|&i| Letter::x(i)).collect()
    }

    #[test]
    fn pairing_enumeration_counts() {
        assert_eq!(enumerate_color_pairings(&xw(&[1, 1])).len(), 1);
        assert_eq!(enumerate_color_pairings(&xw(&[1, 2])).len(), 0);
        assert_eq!(enumerate_color_pairings(&xw(&[1, 1, 1, 1])).len(), 3);
        assert_eq!(enumerate_color_pairings(&xw(&[1])).len(), 0);
    }

    #[test]
    fn semicircle_catalan_moments() {
        for k in 0..=6usize {
            let m = semicircular_moment(&xw(&vec![1; 2 * k]), &IdentityKernel);
            assert_eq!(
                m.coefficient((0, 0)),
                Q::from_integer(catalan(k)),
                "power {}",
                2 * k
            );
        }
        assert!(semicircular_moment(&xw(&[1, 1, 1]), &IdentityKernel).is_zero());
        assert!(semicircular_moment(&xw(&[1, 2, 1, 2]), &IdentityKernel).is_zero());
    }

    #[test]
    fn interpolation_kernel_table_matches_component_expansion() {
        // Shared-component decomposition: each interpolated variable is a sum
        // of independent pieces with squared weights (1-q1), (q1-q2), q2 on
        // its own seed, the in-class seed, and the global seed. The
        // covariance of two distinct variables is the sum of squared weights
        // of the pieces they share.
        #[derive(PartialEq, Clone, Copy, Debug)]
        enum Seed {
            Own(u8),
            ClassNoise(u8),
            Global,
        }
        let pieces = |own: u8, class: u8| {
            vec![
                (Seed::Own(own), {
                    let mut p = QPoly::one();
                    p.add_term((1, 0), -Q::one());
                    p
                }),
                (Seed::ClassNoise(class), {
                    let mut p = QPoly::zero();
                    p.add_term((1, 0), Q::one());
                    p.add_term((0, 1), -Q::one());
                    p
                }),
                (Seed::Global, {
                    let mut p = QPoly::zero();
                    p.add_term((0, 1), Q::one());
                    p
                }),
            ]
        };
        let vars = [
            (J1_E1, pieces(0, 0)),
            (J1_E2, pieces(1, 0)),
            (J1_TE1, pieces(2, 1)),
            (J1_TE2, pieces(3, 1)),
        ];
        for (fa, pa) in &vars {
            for (fb, pb) in &vars {
                let mut cov = QPoly::zero();
                for (sa, wa) in pa {
                    for (sb, wb) in pb {
                        if sa == sb {
                            // shared seed: equal weights, contribution is the
                            // squared weight itself
                            assert_eq!(wa, wb);
                            cov = cov.add(wa);
                        }
                    }
                }
                let expected = match InterpolationKernel.value(*fa, *fb) {
                    KernelValue::One => QPoly::one(),
                    KernelValue::Q1 => {
                        let mut p = QPoly::zero();
                        p.add_term((1, 0), Q::one());
                        p
                    }
                    KernelValue::Q2 => {
                        let mut p = QPoly::zero();
                        p.add_term((0, 1), Q::one());
                        p
                    }
                    _ => unreachable!(),
                };
                assert_eq!(cov, expected, "cov({fa:?},{fb:?})");
            }
        }
    }

    #[test]
    fn cross_family_pair_gives_q1() {
        let w = vec![Letter::x_fam(J1_E1, 1), Letter::x_fam(J1_E2, 1)];
        let m = semicircular_moment(&w, &InterpolationKernel);
        assert_eq!(m.coefficient((1, 0)), Q::one());
        assert_eq!(m.terms.len(), 1);
        let w = vec![Letter::x_fam(J1_E1, 1), Letter::x_fam(J1_TE2, 1)];
        let m = semicircular_moment(&w, &InterpolationKernel);
        assert_eq!(m.coefficient((0, 1)), Q::one());
        assert_eq!(m.terms.len(), 1);
    }

    #[test]
    fn free_word_moment_examples() {
        let mut marg = Marginals::default();
        marg.insert(Family::Base, 1, MarginalSpec::CayleySemicircular { tol: 1e-12 });
        let w = vec![Letter::u(1, 1), Letter::u(1, -1)];
        let m = free_word_moment(&w, &marg).unwrap();
        assert!((m - Complex64::new(1.0, 0.0)).norm() < 1e-12);

        let mut marg = Marginals::default();
        for i in 1..=2 {
            marg.insert(Family::Base, i, MarginalSpec::Semicircular);
        }
        let m = free_word_moment(&xw(&[1, 2, 1, 2]), &marg).unwrap();
        assert!(m.norm() < 1e-14);

        let mut marg = Marginals::default();
        marg.insert(Family::Base, 1, MarginalSpec::CayleySemicircular { tol: 1e-12 });
        let m = free_word_moment(&vec![Letter::u(1, 1)], &marg).unwrap();
        let truth = 2.0 - 5.0_f64.sqrt();
        assert!((m - Complex64::new(truth, 0.0)).norm() < 1e-10, "got {m}");
    }

    #[test]
    fn free_vs_wick_on_short_words() {
        let mut marg = Marginals::default();
        for i in 1..=2 {
            marg.insert(Family::Base, i, MarginalSpec::Semicircular);
        }
        for word in [
            xw(&[1, 1]),
            xw(&[1, 1, 2, 2]),
            xw(&[1, 2, 2, 1]),
            xw(&[1, 1, 1, 1, 2, 2]),
            xw(&[1, 2, 1, 2, 1, 1]),
        ] {
            let a = free_word_moment(&word, &marg).unwrap();
            let b = semicircular_moment(&word, &IdentityKernel);
            let b =
                crate::scalar::q_to_f64(&b.coefficient((0, 0)));
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-14, "{word:?}");
        }
    }

    #[test]
    fn cayley_moments_match_stieltjes_value() {
        let truth = 2.0 - 5.0_f64.sqrt();
        let m1 = cayley_marginal_moment(1, 1e-12).unwrap();
        assert!((m1 - Complex64::new(truth, 0.0)).norm() < 1e-11, "{m1}");
        let mm1 = cayley_marginal_moment(-1, 1e-12).unwrap();
        assert!((mm1 - Complex64::new(truth, 0.0)).norm() < 1e-11);
        let m0 = cayley_marginal_moment(0, 1e-12).unwrap();
        assert_eq!(m0, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn tensor_word_moment_splits_legs() {
        let mut lm = Marginals::default();
        lm.insert(Family::Base, 1, MarginalSpec::Semicircular);
        let mut rm = Marginals::default();
        rm.insert(Family::Base, 1, MarginalSpec::Semicircular);
        let w = vec![(Leg::Left, Letter::x(1)), (Leg::Right, Letter::x(1))];
        let m = tensor_word_moment(&w, &lm, &rm).unwrap();
        assert_eq!(m, Complex64::new(0.0, 0.0));
        // ((s⊗1)+(1⊗t))² = s²⊗1 + 2 s⊗t + 1⊗t² in trace
        let terms: [Vec<(Leg, Letter)>; 4] = [
            vec![(Leg::Left, Letter::x(1)), (Leg::Left, Letter::x(1))],
            vec![(Leg::Left, Letter::x(1)), (Leg::Right, Letter::x(1))],
            vec![(Leg::Right, Letter::x(1)), (Leg::Left, Letter::x(1))],
            vec![(Leg::Right, Letter::x(1)), (Leg::Right, Letter::x(1))],
        ];
        let total: Complex64 =
            terms.iter().map(|w| tensor_word_moment(w, &lm, &rm).unwrap()).sum();
        assert!((total - Complex64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn traciality_under_rotation() {
        let word = xw(&[1, 1, 2, 2, 1, 1]);
        let base = semicircular_moment(&word, &IdentityKernel);
        for rot in 1..word.len() {
            let mut w = word.clone();
            w.rotate_left(rot);
            assert_eq!(semicircular_moment(&w, &IdentityKernel), base);
        }
    }

    #[test]
    fn moment_matrix_is_psd() {
        use ndarray::Array2;
        // words 1, s, s², s³ in one standard semicircular
        let mut m = Array2::<Complex64>::zeros((4, 4));
        for a in 0..4usize {
            for b in 0..4usize {
                let w = xw(&vec![1; a + b]);
                let v = semicircular_moment(&w, &IdentityKernel).coefficient((0, 0));
                m[(a, b)] = Complex64::new(crate::scalar::q_to_f64(&v), 0.0);
            }
        }
        let vals = crate::linalg::eigvalsh(&m).unwrap();
        assert!(vals.iter().all(|v| *v > -1e-12), "{vals:?}");
    }
}
