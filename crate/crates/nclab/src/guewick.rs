//! Exact finite-N expectations of GUE words: Gaussian Wick pairing with
//! cycle counting, giving E[tr_N(X_{i₁}⋯X_{iₙ})] as a polynomial in N⁻².

use crate::freemoments::enumerate_color_pairings;
use crate::ncpoly::{Family, Kind, Word};
use crate::scalar::Q;
use crate::{Error, Result};
use num_traits::{One, Zero};
use std::collections::BTreeMap;

pub const WORD_LEN_CAP: usize = 12;

/// Exact polynomial in N⁻²; key = power of N⁻².
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct NPoly {
    pub terms: BTreeMap<u32, Q>,
}

impl NPoly {
    pub fn zero() -> Self {
        NPoly::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, order: u32, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(order).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&order);
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| crate::scalar::q_to_f64(c) * n.powi(-2 * *k as i32))
            .sum()
    }
}

/// Coefficient of N^{−2·order}; order 0 is the free limit, order 1 the
/// first-order correction.
pub fn coefficient(p: &NPoly, order: u32) -> Q {
    p.terms.get(&order).cloned().unwrap_or_else(Q::zero)
}

fn cycle_count(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut count = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut p = start;
        while !seen[p] {
            seen[p] = true;
            p = perm[p];
        }
    }
    count
}

/// E[tr_N(word)] = Σ over color-matched pairings π of N^{c(γπ)−1−n/2}, with
/// γ the n-cycle and c the cycle count. The exponent is −2·genus, so the
/// result lives in N⁻².
pub fn gue_word_expectation(word: &Word) -> Result<NPoly> {
    for l in word {
        if l.kind == Kind::Cayley || l.family != Family::Base {
            return Err(Error::InvalidInput(
                "finite-N oracle expects base-family selfadjoint letters".into(),
            ));
        }
    }
    if word.len() > WORD_LEN_CAP {
        return Err(Error::DegreeCap { len: word.len(), cap: WORD_LEN_CAP });
    }
    let n = word.len();
    let mut out = NPoly::zero();
    if n == 0 {
        out.add_term(0, Q::one());
        return Ok(out);
    }
    for pairing in enumerate_color_pairings(word) {
        let mut perm: Vec<usize> = vec![0; n];
        for &(a, b) in &pairing.pairs {
            perm[a] = b;
            perm[b] = a;
        }
        // γπ with γ(p) = p+1 mod n
        let gp: Vec<usize> = (0..n).map(|p| (perm[p] + 1) % n).collect();
        let c = cycle_count(&gp);
        // c = n/2 + 1 - 2g
        let exponent = c as i64 - 1 - (n / 2) as i64;
        debug_assert!(exponent <= 0 && exponent % 2 == 0);
        out.add_term((-exponent / 2) as u32, Q::one());
    }
    Ok(out)
}
