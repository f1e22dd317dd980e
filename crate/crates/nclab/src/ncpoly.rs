//! Noncommutative *-polynomials over indexed, family-tagged generators, with
//! exact complex-rational coefficients, and the derivation operators built on
//! them: free difference quotients, cyclic gradients, slot calculus on tensor
//! powers, and the embedding into the free product.

use crate::scalar::{cq_is_zero, format_cq, CQ};
use crate::{Error, Result};
use num_traits::One;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

pub mod rbuild;

/// Intermediate term-count guardrail shared by the heavy builders.
static TERM_CAP: AtomicUsize = AtomicUsize::new(1_000_000);

pub fn set_term_cap(cap: usize) {
    TERM_CAP.store(cap, Ordering::Relaxed);
}

pub fn term_cap() -> usize {
    TERM_CAP.load(Ordering::Relaxed)
}

fn check_cap(len: usize) -> Result<()> {
    let cap = term_cap();
    if len > cap {
        return Err(Error::TermCap { cap });
    }
    Ok(())
}

/// Symbolic family label of a generator.
///
/// `Base` is the default ambient family. `Tag` labels are fresh copies minted
/// by the free-product embedding. `J1`/`J2` labels name the interpolation
/// families used by the second-order and fourth-order correction builders.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Family {
    Base,
    Tag(u16),
    J1([u8; 2]),
    J2([u8; 4]),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Base => write!(f, "b"),
            Family::Tag(n) => write!(f, "t{n}"),
            Family::J1([a, b]) => write!(f, "{a}.{b}"),
            Family::J2([a, b, c, d]) => write!(f, "{a}.{b}.{c}.{d}"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Kind {
    Selfadjoint,
    Cayley,
}

/// One generator occurrence. `exponent` is +1 unless the letter is a Cayley
/// (unitary) letter appearing inverted.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Letter {
    pub family: Family,
    pub index: u32,
    pub kind: Kind,
    pub exponent: i8,
}

impl Letter {
    pub fn x(index: u32) -> Self {
        Letter { family: Family::Base, index, kind: Kind::Selfadjoint, exponent: 1 }
    }

    pub fn x_fam(family: Family, index: u32) -> Self {
        Letter { family, index, kind: Kind::Selfadjoint, exponent: 1 }
    }

    pub fn u(index: u32, exponent: i8) -> Self {
        debug_assert!(exponent == 1 || exponent == -1);
        Letter { family: Family::Base, index, kind: Kind::Cayley, exponent }
    }

    pub fn u_fam(family: Family, index: u32, exponent: i8) -> Self {
        debug_assert!(exponent == 1 || exponent == -1);
        Letter { family, index, kind: Kind::Cayley, exponent }
    }

    fn inverse_of(&self, other: &Letter) -> bool {
        self.kind == Kind::Cayley
            && other.kind == Kind::Cayley
            && self.family == other.family
            && self.index == other.index
            && self.exponent == -other.exponent
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::Selfadjoint => write!(f, "x[{},{}]", self.family, self.index),
            Kind::Cayley => write!(
                f,
                "u[{},{}]^{}{}",
                self.family,
                self.index,
                if self.exponent >= 0 { "+" } else { "-" },
                self.exponent.abs()
            ),
        }
    }
}

/// A word in the generators; the empty word is the unit. Equality is literal
/// sequence equality, cancellation of u·u⁻¹ lives in [`normalize`].
pub type Word = Vec<Letter>;

pub fn word_to_string(w: &Word) -> String {
    if w.is_empty() {
        return "1".to_string();
    }
    w.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("*")
}

/// Noncommutative polynomial: finite term map Word → coefficient, no stored
/// zeros.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct NcPoly {
    pub terms: BTreeMap<Word, CQ>,
}

impl NcPoly {
    pub fn zero() -> Self {
        NcPoly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        NcPoly::scalar(CQ::one())
    }

    pub fn scalar(c: CQ) -> Self {
        let mut terms = BTreeMap::new();
        if !cq_is_zero(&c) {
            terms.insert(Vec::new(), c);
        }
        NcPoly { terms }
    }

    pub fn from_letter(l: Letter) -> Self {
        NcPoly::monomial(vec![l], CQ::one())
    }

    pub fn monomial(w: Word, c: CQ) -> Self {
        let mut terms = BTreeMap::new();
        if !cq_is_zero(&c) {
            terms.insert(w, c);
        }
        NcPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|w| w.len()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, w: Word, c: CQ) {
        if cq_is_zero(&c) {
            return;
        }
        let entry = self.terms.entry(w);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().clone() + c;
                if cq_is_zero(&s) {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: &CQ) -> NcPoly {
        if cq_is_zero(c) {
            return NcPoly::zero();
        }
        let terms = self
            .terms
            .iter()
            .map(|(w, a)| (w.clone(), a.clone() * c.clone()))
            .collect();
        NcPoly { terms }
    }

    pub fn pow(&self, n: usize) -> NcPoly {
        let mut acc = NcPoly::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// All distinct letters appearing in the support.
    pub fn letters(&self) -> impl Iterator<Item = &Letter> {
        self.terms.keys().flat_map(|w| w.iter())
    }

    pub fn max_index(&self) -> u32 {
        self.letters().map(|l| l.index).max().unwrap_or(0)
    }
}

impl std::ops::Add for &NcPoly {
    type Output = NcPoly;
    fn add(self, rhs: &NcPoly) -> NcPoly {
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }
}

impl std::ops::Sub for &NcPoly {
    type Output = NcPoly;
    fn sub(self, rhs: &NcPoly) -> NcPoly {
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.add_term(w.clone(), -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &NcPoly {
    type Output = NcPoly;
    fn mul(self, rhs: &NcPoly) -> NcPoly {
        let mut out = NcPoly::zero();
        for (w1, c1) in &self.terms {
            for (w2, c2) in &rhs.terms {
                let mut w = w1.clone();
                w.extend_from_slice(w2);
                out.add_term(w, c1.clone() * c2.clone());
            }
        }
        out
    }
}

impl std::ops::Neg for &NcPoly {
    type Output = NcPoly;
    fn neg(self) -> NcPoly {
        let terms = self.terms.iter().map(|(w, c)| (w.clone(), -c.clone())).collect();
        NcPoly { terms }
    }
}

/// Element of the s-fold algebraic tensor power; order 1 coincides with
/// [`NcPoly`]. Plain multiplication is factor-wise; the ∘-product on order 2
/// is [`circ_mul`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TensorPoly {
    pub order: usize,
    pub terms: BTreeMap<Vec<Word>, CQ>,
}

impl TensorPoly {
    pub fn zero(order: usize) -> Self {
        assert!(order >= 1);
        TensorPoly { order, terms: BTreeMap::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, ws: Vec<Word>, c: CQ) {
        debug_assert_eq!(ws.len(), self.order);
        if cq_is_zero(&c) {
            return;
        }
        match self.terms.entry(ws) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().clone() + c;
                if cq_is_zero(&s) {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: &CQ) -> TensorPoly {
        if cq_is_zero(c) {
            return TensorPoly::zero(self.order);
        }
        TensorPoly {
            order: self.order,
            terms: self
                .terms
                .iter()
                .map(|(ws, a)| (ws.clone(), a.clone() * c.clone()))
                .collect(),
        }
    }

    pub fn from_nc(p: &NcPoly) -> TensorPoly {
        TensorPoly {
            order: 1,
            terms: p.terms.iter().map(|(w, c)| (vec![w.clone()], c.clone())).collect(),
        }
    }

    pub fn into_nc(self) -> NcPoly {
        assert_eq!(self.order, 1);
        NcPoly {
            terms: self.terms.into_iter().map(|(mut ws, c)| (ws.pop().unwrap(), c)).collect(),
        }
    }
}

impl std::ops::Add for &TensorPoly {
    type Output = TensorPoly;
    fn add(self, rhs: &TensorPoly) -> TensorPoly {
        assert_eq!(self.order, rhs.order);
        let mut out = self.clone();
        for (ws, c) in &rhs.terms {
            out.add_term(ws.clone(), c.clone());
        }
        out
    }
}

impl std::ops::Sub for &TensorPoly {
    type Output = TensorPoly;
    fn sub(self, rhs: &TensorPoly) -> TensorPoly {
        assert_eq!(self.order, rhs.order);
        let mut out = self.clone();
        for (ws, c) in &rhs.terms {
            out.add_term(ws.clone(), -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &TensorPoly {
    type Output = TensorPoly;
    fn mul(self, rhs: &TensorPoly) -> TensorPoly {
        assert_eq!(self.order, rhs.order);
        let mut out = TensorPoly::zero(self.order);
        for (a, c1) in &self.terms {
            for (b, c2) in &rhs.terms {
                let ws: Vec<Word> = a
                    .iter()
                    .zip(b.iter())
                    .map(|(w1, w2)| {
                        let mut w = w1.clone();
                        w.extend_from_slice(w2);
                        w
                    })
                    .collect();
                out.add_term(ws, c1.clone() * c2.clone());
            }
        }
        out
    }
}

/// Elementary tensor P⊗Q.
pub fn tensor(p: &NcPoly, q: &NcPoly) -> TensorPoly {
    let mut out = TensorPoly::zero(2);
    for (w1, c1) in &p.terms {
        for (w2, c2) in &q.terms {
            out.add_term(vec![w1.clone(), w2.clone()], c1.clone() * c2.clone());
        }
    }
    out
}

/// ∘-product on order 2: (A⊗B)∘(C⊗D) = AC⊗DB.
pub fn circ_mul(s: &TensorPoly, t: &TensorPoly) -> TensorPoly {
    assert_eq!(s.order, 2);
    assert_eq!(t.order, 2);
    let mut out = TensorPoly::zero(2);
    for (ab, c1) in &s.terms {
        for (cd, c2) in &t.terms {
            let mut left = ab[0].clone();
            left.extend_from_slice(&cd[0]);
            let mut right = cd[1].clone();
            right.extend_from_slice(&ab[1]);
            out.add_term(vec![left, right], c1.clone() * c2.clone());
        }
    }
    out
}

/// Adjoint: reverses words, conjugates coefficients, inverts Cayley letters.
pub fn star(p: &NcPoly) -> NcPoly {
    let mut out = NcPoly::zero();
    for (w, c) in &p.terms {
        let mut rw: Word = w.iter().rev().copied().collect();
        for l in rw.iter_mut() {
            if l.kind == Kind::Cayley {
                l.exponent = -l.exponent;
            }
        }
        out.add_term(rw, crate::scalar::cq_conj(c));
    }
    out
}

/// Word reversal without conjugation: the canonical anti-isomorphism onto the
/// opposite algebra.
pub fn opposite(p: &NcPoly) -> NcPoly {
    let mut out = NcPoly::zero();
    for (w, c) in &p.terms {
        out.add_term(w.iter().rev().copied().collect(), c.clone());
    }
    out
}

/// Cancels adjacent Cayley letters with equal (family,index) and opposite
/// exponents, to a fixpoint.
pub fn normalize(p: &NcPoly) -> NcPoly {
    let mut out = NcPoly::zero();
    for (w, c) in &p.terms {
        let mut stack: Word = Vec::with_capacity(w.len());
        for l in w {
            if stack.last().is_some_and(|top| top.inverse_of(l)) {
                stack.pop();
            } else {
                stack.push(*l);
            }
        }
        out.add_term(stack, c.clone());
    }
    out
}

fn ensure_selfadjoint(p: &NcPoly) -> Result<()> {
    if p.letters().any(|l| l.kind == Kind::Cayley) {
        return Err(Error::MixedKind);
    }
    Ok(())
}

/// Free difference quotient with respect to the selfadjoint letter
/// (family,index), no kind validation; derivative of non-matching letters is
/// zero.
pub(crate) fn partial_impl(p: &NcPoly, family: Family, index: u32) -> TensorPoly {
    let target = Letter::x_fam(family, index);
    let mut out = TensorPoly::zero(2);
    for (w, c) in &p.terms {
        for (pos, l) in w.iter().enumerate() {
            if *l == target {
                out.add_term(vec![w[..pos].to_vec(), w[pos + 1..].to_vec()], c.clone());
            }
        }
    }
    out
}

/// Free difference quotient ∂ⱼ on base-family selfadjoint polynomials:
/// ∂ⱼxₖ = δ_{jk}·1⊗1, extended linearly and by the Leibniz rule.
pub fn partial(p: &NcPoly, j: u32) -> Result<TensorPoly> {
    ensure_selfadjoint(p)?;
    Ok(partial_impl(p, Family::Base, j))
}

pub(crate) fn tensor_partial_slot_impl(
    t: &TensorPoly,
    family: Family,
    index: u32,
    slot: usize,
) -> TensorPoly {
    let target = Letter::x_fam(family, index);
    let mut out = TensorPoly::zero(t.order + 1);
    for (ws, c) in &t.terms {
        let w = &ws[slot];
        for (pos, l) in w.iter().enumerate() {
            if *l == target {
                let mut nws: Vec<Word> = Vec::with_capacity(t.order + 1);
                nws.extend_from_slice(&ws[..slot]);
                nws.push(w[..pos].to_vec());
                nws.push(w[pos + 1..].to_vec());
                nws.extend_from_slice(&ws[slot + 1..]);
                out.add_term(nws, c.clone());
            }
        }
    }
    out
}

/// Applies ∂ⱼ (base family) inside tensor slot `k` (0-based), raising the
/// order by one.
pub fn iterated_partial(t: &TensorPoly, j: u32, k: usize) -> Result<TensorPoly> {
    if k >= t.order {
        return Err(Error::SlotOutOfRange { slot: k, order: t.order });
    }
    for ws in t.terms.keys() {
        if ws.iter().flatten().any(|l| l.kind == Kind::Cayley) {
            return Err(Error::MixedKind);
        }
    }
    Ok(tensor_partial_slot_impl(t, Family::Base, j, k))
}

/// Swaps tensor slots `k` and `k+1` (0-based).
pub fn flip_slots(t: &TensorPoly, k: usize) -> Result<TensorPoly> {
    if t.order < 2 || k > t.order - 2 {
        return Err(Error::SlotOutOfRange { slot: k, order: t.order });
    }
    let mut out = TensorPoly::zero(t.order);
    for (ws, c) in &t.terms {
        let mut nws = ws.clone();
        nws.swap(k, k + 1);
        out.add_term(nws, c.clone());
    }
    Ok(out)
}

/// ev_{P₁,…,Pₛ}: interleaves the s+1 slot contents with the s inserted
/// polynomials and multiplies out, A₁P₁A₂⋯PₛA_{s+1}.
pub fn ev(t: &TensorPoly, inserts: &[NcPoly]) -> Result<NcPoly> {
    if inserts.len() != t.order - 1 {
        return Err(Error::ArityMismatch { expected: t.order - 1, got: inserts.len() });
    }
    let mut out = NcPoly::zero();
    for (ws, c) in &t.terms {
        let mut acc = NcPoly::monomial(ws[0].clone(), c.clone());
        for (p, w) in inserts.iter().zip(ws[1..].iter()) {
            acc = &acc * p;
            acc = &acc * &NcPoly::monomial(w.clone(), CQ::one());
        }
        out = &out + &acc;
    }
    Ok(out)
}

/// #^{s−1}: relabels slot k's letters into `fresh_families[k]` and
/// concatenates, embedding the tensor power into the free product.
pub fn sharp(t: &TensorPoly, fresh_families: &[Family]) -> Result<NcPoly> {
    if fresh_families.len() != t.order {
        return Err(Error::ArityMismatch { expected: t.order, got: fresh_families.len() });
    }
    for (a, fa) in fresh_families.iter().enumerate() {
        for fb in &fresh_families[a + 1..] {
            if fa == fb {
                return Err(Error::DuplicateFamily);
            }
        }
    }
    Ok(sharp_with(t, |slot, mut l| {
        l.family = fresh_families[slot];
        l
    }))
}

/// Per-letter relabeling variant of the free-product embedding.
pub(crate) fn sharp_with(t: &TensorPoly, relabel: impl Fn(usize, Letter) -> Letter) -> NcPoly {
    let mut out = NcPoly::zero();
    for (ws, c) in &t.terms {
        let mut word: Word = Vec::with_capacity(ws.iter().map(|w| w.len()).sum());
        for (slot, w) in ws.iter().enumerate() {
            word.extend(w.iter().map(|l| relabel(slot, *l)));
        }
        out.add_term(word, c.clone());
    }
    out
}

pub(crate) fn cyclic_gradient_impl(p: &NcPoly, family: Family, i: u32) -> NcPoly {
    let d = partial_impl(p, family, i);
    let flipped = flip_slots(&d, 0).expect("order 2");
    ev(&flipped, &[NcPoly::one()]).expect("arity 1")
}

/// Cyclic gradient Dᵢ = ev₁ ∘ flip ∘ ∂ᵢ; on a monomial, Σ_{M=A xᵢ B} BA.
pub fn cyclic_gradient(p: &NcPoly, i: u32) -> Result<NcPoly> {
    ensure_selfadjoint(p)?;
    Ok(cyclic_gradient_impl(p, Family::Base, i))
}

/// Family-resolved cyclic gradient D_{i,I} for interpolation-family letters.
pub fn cyclic_gradient_wrt(p: &NcPoly, family: Family, i: u32) -> Result<NcPoly> {
    ensure_selfadjoint(p)?;
    Ok(cyclic_gradient_impl(p, family, i))
}

/// Derivation on Cayley (unitary) letters:
/// ∂ⱼ uₖ^ε = δ_{jk} ε (i/2) (uₖ^ε − 1) ⊗ (uₖ^ε − 1), extended by Leibniz.
pub fn cayley_partial(p: &NcPoly, j: u32) -> Result<TensorPoly> {
    let mut fam: Option<Family> = None;
    for l in p.letters() {
        if l.kind != Kind::Cayley {
            return Err(Error::MixedKind);
        }
        match fam {
            None => fam = Some(l.family),
            Some(f) if f == l.family => {}
            Some(_) => {
                return Err(Error::InvalidInput(
                    "cayley_partial expects letters from a single family".into(),
                ))
            }
        }
    }
    let half_i = CQ::new(crate::scalar::q(0, 1), crate::scalar::q(1, 2));
    let mut out = TensorPoly::zero(2);
    for (w, c) in &p.terms {
        for (pos, l) in w.iter().enumerate() {
            if l.index != j {
                continue;
            }
            let eps = l.exponent as i64;
            let coeff = c.clone() * half_i.clone() * crate::scalar::cq_int(eps);
            // (prefix·(u^ε − 1)) ⊗ ((u^ε − 1)·suffix), binomials expanded.
            let prefix = w[..pos].to_vec();
            let suffix = w[pos + 1..].to_vec();
            let mut with_u_left = prefix.clone();
            with_u_left.push(*l);
            let mut with_u_right = vec![*l];
            with_u_right.extend_from_slice(&suffix);
            out.add_term(vec![with_u_left.clone(), with_u_right.clone()], coeff.clone());
            out.add_term(vec![with_u_left, suffix.clone()], -coeff.clone());
            out.add_term(vec![prefix.clone(), with_u_right], -coeff.clone());
            out.add_term(vec![prefix, suffix], coeff);
        }
    }
    Ok(out)
}

/// Canonical text form: terms sorted by (degree, lexicographic word), each as
/// `a/b+c/d*i*letters`, joined with " + ". The zero polynomial prints "0".
pub fn to_canonical_string(p: &NcPoly) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut items: Vec<(&Word, &CQ)> = p.terms.iter().collect();
    items.sort_by_key(|(w, _)| (w.len(), (*w).clone()));
    items
        .iter()
        .map(|(w, c)| format!("{}*{}", format_cq(c), word_to_string(w)))
        .collect::<Vec<_>>()
        .join(" + ")
}
