//! Builders for the four-indeterminate kernels driving the 1/N² and 1/N⁴
//! trace corrections: second derivatives of cyclic gradients, flipped slotwise
//! and embedded into the free product over interpolation families.

use super::*;

pub const J1_E1: Family = Family::J1([2, 1]);
pub const J1_E2: Family = Family::J1([3, 1]);
pub const J1_TE1: Family = Family::J1([5, 4]);
pub const J1_TE2: Family = Family::J1([6, 4]);

/// Listing order fixes the bijection with every second-level table row.
pub const J1_FAMILIES: [Family; 4] = [J1_E1, J1_E2, J1_TE1, J1_TE2];

/// Output slot order of the first-level builder.
pub const R1_SLOT_FAMILIES: [Family; 4] = [J1_E1, J1_TE1, J1_TE2, J1_E2];

pub const J2_11: [[u8; 4]; 4] = [[8, 2, 1, 19], [9, 3, 1, 19], [11, 5, 4, 19], [12, 6, 4, 19]];
pub const J2_21: [[u8; 4]; 4] = [[8, 7, 1, 19], [9, 7, 1, 19], [11, 10, 4, 19], [12, 10, 4, 19]];
pub const J2_12: [[u8; 4]; 4] = [[14, 2, 1, 19], [15, 3, 1, 19], [17, 5, 4, 19], [18, 6, 4, 19]];
pub const J2_22: [[u8; 4]; 4] =
    [[14, 13, 1, 19], [15, 13, 1, 19], [17, 16, 4, 19], [18, 16, 4, 19]];
pub const J2_31: [[u8; 4]; 4] =
    [[8, 7, 20, 19], [9, 7, 20, 19], [11, 10, 20, 19], [12, 10, 20, 19]];
pub const J2_32: [[u8; 4]; 4] =
    [[14, 13, 21, 19], [15, 13, 21, 19], [17, 16, 21, 19], [18, 16, 21, 19]];
pub const J2T_11: [[u8; 4]; 4] =
    [[29, 23, 22, 40], [30, 24, 22, 40], [32, 26, 25, 40], [33, 27, 25, 40]];
pub const J2T_21: [[u8; 4]; 4] =
    [[29, 28, 22, 40], [30, 28, 22, 40], [32, 31, 25, 40], [33, 31, 25, 40]];
pub const J2T_12: [[u8; 4]; 4] =
    [[35, 23, 22, 40], [36, 24, 22, 40], [38, 26, 25, 40], [39, 27, 25, 40]];
pub const J2T_22: [[u8; 4]; 4] =
    [[35, 34, 22, 40], [36, 34, 22, 40], [38, 37, 25, 40], [39, 37, 25, 40]];
pub const J2T_31: [[u8; 4]; 4] =
    [[29, 28, 41, 40], [30, 28, 41, 40], [32, 31, 41, 40], [33, 31, 41, 40]];
pub const J2T_32: [[u8; 4]; 4] =
    [[35, 34, 42, 40], [36, 34, 42, 40], [38, 37, 42, 40], [39, 37, 42, 40]];

/// Slot-indexed relabeling tables for each downstream variant, in the output
/// slot order of the builder.
pub const R2_TABLES: [[[[u8; 4]; 4]; 4]; 3] = [
    [J2_31, J2T_31, J2T_32, J2_32],
    [J2_11, J2T_11, J2T_12, J2_12],
    [J2_21, J2T_21, J2T_22, J2_22],
];

fn ensure_base_selfadjoint(p: &NcPoly) -> Result<()> {
    for l in p.letters() {
        if l.kind == Kind::Cayley {
            return Err(Error::MixedKind);
        }
        if l.family != Family::Base {
            return Err(Error::InvalidInput(
                "first-level builder expects base-family letters".into(),
            ));
        }
    }
    Ok(())
}

/// Both second derivatives applied to one tensor leg pair:
/// flips slot 0 after differentiating it, then the (new) slot 2 after
/// differentiating it, yielding order 4.
fn second_level(
    t2: &TensorPoly,
    fam_first: Family,
    j_first: u32,
    fam_second: Family,
    j_second: u32,
) -> Result<TensorPoly> {
    let a = tensor_partial_slot_impl(t2, fam_first, j_first, 0);
    check_cap(a.terms.len())?;
    let a = flip_slots(&a, 0)?;
    let b = tensor_partial_slot_impl(&a, fam_second, j_second, 2);
    check_cap(b.terms.len())?;
    flip_slots(&b, 2)
}

/// Per-(j,k) contributions of the first-level builder, before summation.
pub fn r1_build_parts(p: &NcPoly, r: u32) -> Result<Vec<((u32, u32), NcPoly)>> {
    ensure_base_selfadjoint(p)?;
    let mut parts = Vec::new();
    for j in 1..=r {
        let dj = cyclic_gradient_impl(p, Family::Base, j);
        let t2 = partial_impl(&dj, Family::Base, j);
        check_cap(t2.terms.len())?;
        if t2.is_zero() {
            continue;
        }
        for k in 1..=r {
            let b = second_level(&t2, Family::Base, k, Family::Base, k)?;
            if b.is_zero() {
                continue;
            }
            let contrib = sharp_with(&b, |slot, mut l| {
                l.family = R1_SLOT_FAMILIES[slot];
                l
            });
            check_cap(contrib.terms.len())?;
            parts.push(((j, k), contrib));
        }
    }
    Ok(parts)
}

/// First-level kernel: Σ_{j,k} #³{[(flip∘∂ₖ)⊗(flip∘∂ₖ)](∂ⱼ(Dⱼ P))}, a
/// polynomial in four interpolation families of r-tuples.
pub fn r1_build(p: &NcPoly, r: u32) -> Result<NcPoly> {
    let mut acc = NcPoly::zero();
    for (_, part) in r1_build_parts(p, r)? {
        acc = &acc + &part;
        check_cap(acc.terms.len())?;
    }
    Ok(acc)
}

fn seg(word: &Word, family: Family, a: usize, b: usize) -> Vec<Letter> {
    // 1-based inclusive range, empty when a > b.
    if a > b {
        return Vec::new();
    }
    word[a - 1..b]
        .iter()
        .map(|l| {
            let mut l = *l;
            l.family = family;
            l
        })
        .collect()
}

/// Independent reference for the first-level kernel on a single monomial,
/// written directly as the quadruple-sum splitting over positions
/// (k,l) with equal letters and (p,q) with equal letters.
pub fn r1_monomial_reference(word: &Word, r: u32) -> NcPoly {
    let n = word.len();
    let idx = |t: usize| word[t - 1].index;
    let [f1, ft1, ft2, f2] = R1_SLOT_FAMILIES;
    let mut out = NcPoly::zero();
    let mut push = |pieces: Vec<Vec<Letter>>| {
        let w: Word = pieces.into_iter().flatten().collect();
        out.add_term(w, CQ::one());
    };
    for l in word {
        debug_assert!(l.kind == Kind::Selfadjoint && l.index >= 1 && l.index <= r);
    }
    for k in 1..=n {
        for l in k + 1..=n {
            if idx(l) != idx(k) {
                continue;
            }
            for p in k + 1..=l - 1 {
                for q in l + 1..=n {
                    if idx(q) != idx(p) {
                        continue;
                    }
                    push(vec![
                        seg(word, f1, p + 1, l - 1),
                        seg(word, ft1, k + 1, p - 1),
                        seg(word, ft2, q + 1, n),
                        seg(word, ft2, 1, k - 1),
                        seg(word, f2, l + 1, q - 1),
                    ]);
                }
                for q in 1..=k - 1 {
                    if idx(q) != idx(p) {
                        continue;
                    }
                    push(vec![
                        seg(word, f1, p + 1, l - 1),
                        seg(word, ft1, k + 1, p - 1),
                        seg(word, ft2, q + 1, k - 1),
                        seg(word, f2, l + 1, n),
                        seg(word, f2, 1, q - 1),
                    ]);
                }
            }
        }
        for l in 1..=k - 1 {
            if idx(l) != idx(k) {
                continue;
            }
            for q in l + 1..=k - 1 {
                for p in k + 1..=n {
                    if idx(p) != idx(q) {
                        continue;
                    }
                    push(vec![
                        seg(word, f1, p + 1, n),
                        seg(word, f1, 1, l - 1),
                        seg(word, ft1, k + 1, p - 1),
                        seg(word, ft2, q + 1, k - 1),
                        seg(word, f2, l + 1, q - 1),
                    ]);
                }
                for p in 1..=l - 1 {
                    if idx(p) != idx(q) {
                        continue;
                    }
                    push(vec![
                        seg(word, f1, p + 1, l - 1),
                        seg(word, ft1, k + 1, n),
                        seg(word, ft1, 1, p - 1),
                        seg(word, ft2, q + 1, k - 1),
                        seg(word, f2, l + 1, q - 1),
                    ]);
                }
            }
        }
    }
    out
}

fn j1_position(f: Family) -> Option<usize> {
    J1_FAMILIES.iter().position(|g| *g == f)
}

/// Tilde class of a first-level family: 0 for the plain pair, 1 for the
/// tilde pair.
fn tilde_class(pos: usize) -> usize {
    pos / 2
}

fn ensure_j1(q: &NcPoly) -> Result<()> {
    for l in q.letters() {
        if l.kind == Kind::Cayley || j1_position(l.family).is_none() {
            return Err(Error::NonJ1Letter);
        }
    }
    Ok(())
}

/// Core of the downstream builder over an explicit set of ordered
/// family-position pairs for the two second derivatives, relabeling output
/// letters through per-slot tables.
#[doc(hidden)]
pub fn r2_with_pairs(
    q: &NcPoly,
    pairs: &[(usize, usize)],
    tables: &[[[u8; 4]; 4]; 4],
) -> Result<NcPoly> {
    ensure_j1(q)?;
    let r = q.max_index();
    let mut acc = NcPoly::zero();
    for i in 1..=r {
        let mut di = NcPoly::zero();
        for fam in J1_FAMILIES {
            di = &di + &cyclic_gradient_impl(q, fam, i);
        }
        let mut t2 = TensorPoly::zero(2);
        for fam in J1_FAMILIES {
            t2 = &t2 + &partial_impl(&di, fam, i);
        }
        check_cap(t2.terms.len())?;
        if t2.is_zero() {
            continue;
        }
        for j in 1..=r {
            for &(ip, kp) in pairs {
                let b = second_level(&t2, J1_FAMILIES[ip], j, J1_FAMILIES[kp], j)?;
                if b.is_zero() {
                    continue;
                }
                let contrib = sharp_with(&b, |slot, mut l| {
                    let pos = j1_position(l.family).expect("validated J1 letter");
                    l.family = Family::J2(tables[slot][pos]);
                    l
                });
                acc = &acc + &contrib;
                check_cap(acc.terms.len())?;
            }
        }
    }
    Ok(acc)
}

pub fn r2_pair_set(variant: u8) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            let keep = match variant {
                1 => true,
                2 => a == b,
                3 => tilde_class(a) == tilde_class(b),
                _ => unreachable!(),
            };
            if keep {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Downstream kernel on a four-family polynomial. The three variants restrict
/// which ordered pairs of families the two second derivatives may take:
/// all sixteen, the four equal pairs, or the eight pairs within a tilde
/// class; outputs are relabeled into the variant's second-level families.
pub fn r2_build(q: &NcPoly, variant: u8) -> Result<NcPoly> {
    if !(1..=3).contains(&variant) {
        return Err(Error::InvalidInput(format!("variant must be 1, 2 or 3, got {variant}")));
    }
    let tables = &R2_TABLES[(variant - 1) as usize];
    r2_with_pairs(q, &r2_pair_set(variant), tables)
}
