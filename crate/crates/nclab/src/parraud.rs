//! Exact first-order trace correction ν₁ for polynomials in independent GUE
//! matrices: first-level kernel, interpolated covariances, and closed-form
//! simplex integrals, with the sign-coefficient identity checks used by the
//! exponential-word expansion.

use crate::freemoments::{semicircular_moment, InterpolationKernel};
use crate::ncpoly::rbuild::r1_build;
use crate::ncpoly::{Family, Kind, NcPoly, Word};
use crate::scalar::{q, qi, Q};
use crate::{Error, Result};
use num_complex::Complex64;
use num_traits::Zero;
use std::collections::BTreeMap;

pub const NU1_DEGREE_CAP: usize = 12;

/// I(k₁,k₂) = ½ ∬_{0≤t₁≤t₂} e^{−t₂−t₁} e^{−k₁t₁} e^{−k₂t₂} dt₁ dt₂,
/// in closed form ½·1/(1+k₁)·(1/(1+k₂) − 1/(2+k₁+k₂)).
pub fn simplex_integral(k1: u32, k2: u32) -> Q {
    let a = qi(1 + k1 as i64);
    let b = qi(1 + k2 as i64);
    let c = qi(2 + (k1 + k2) as i64);
    q(1, 2) * a.recip() * (b.recip() - c.recip())
}

/// Memoized table of the simplex integrals.
#[derive(Default)]
pub struct SimplexIntegralTable {
    memo: BTreeMap<(u32, u32), Q>,
}

impl SimplexIntegralTable {
    pub fn get(&mut self, k1: u32, k2: u32) -> Q {
        self.memo.entry((k1, k2)).or_insert_with(|| simplex_integral(k1, k2)).clone()
    }
}

fn ensure_base_selfadjoint(p: &NcPoly) -> Result<()> {
    for l in p.letters() {
        if l.kind == Kind::Cayley || l.family != Family::Base {
            return Err(Error::InvalidInput(
                "first-order correction expects base-family selfadjoint letters".into(),
            ));
        }
    }
    Ok(())
}

/// ν₁(p): the exact N⁻² coefficient of E[tr_N p(X₁,…,X_r)]. Computed fully
/// symbolically: first-level kernel, free Wick rule under the interpolated
/// covariance kernel, then term-wise simplex integrals. Never touches the
/// time variables numerically.
pub fn nu1(p: &NcPoly) -> Result<Q> {
    ensure_base_selfadjoint(p)?;
    if p.degree() > NU1_DEGREE_CAP {
        return Err(Error::DegreeCap { len: p.degree(), cap: NU1_DEGREE_CAP });
    }
    let r = p.max_index().max(1);
    let rp = r1_build(p, r)?;
    let mut table = SimplexIntegralTable::default();
    let mut re = Q::zero();
    let mut im = Q::zero();
    for (word, coeff) in &rp.terms {
        let qp = semicircular_moment(word, &InterpolationKernel);
        let mut weight = Q::zero();
        for ((k1, k2), c) in &qp.terms {
            weight += c * table.get(*k1, *k2);
        }
        re += coeff.re.clone() * weight.clone();
        im += coeff.im.clone() * weight;
    }
    if !im.is_zero() {
        return Err(Error::InvalidInput(
            "first-order correction of a non-selfadjoint combination is not real".into(),
        ));
    }
    Ok(re)
}

/// ν₁ of the monomial x₁ᵐ.
pub fn nu1_power(m: usize) -> Result<Q> {
    let word: Word = vec![crate::ncpoly::Letter::x(1); m];
    nu1(&NcPoly::monomial(word, crate::scalar::cq_one()))
}

/// cₙ = (−1)^{n+1}·min{n+1, 2}.
pub fn c_coefficient(n: u32) -> i64 {
    let sign = if n % 2 == 0 { -1 } else { 1 };
    sign * (n as i64 + 1).min(2)
}

/// Exact ∫_{−∞}^0 e^y yᵐ dy by the integration-by-parts recursion
/// I_m = −m·I_{m−1}, I₀ = 1.
fn exp_power_integral(m: u32) -> Q {
    let mut acc = qi(1);
    for k in 1..=m as i64 {
        acc = acc * qi(-k);
    }
    acc
}

/// Verifies c_{m₁}⋯c_{mₙ} against the per-coordinate integral of
/// e^y yᵐ/m! against dδ₀(y) − 2·dy on (−∞,0], evaluated exactly.
pub fn lemma_c_check(m: &[u32]) -> bool {
    let mut product = qi(1);
    for &mi in m {
        product = product * qi(c_coefficient(mi));
    }
    let mut integral = qi(1);
    for &mi in m {
        let mut fact = qi(1);
        for k in 1..=mi as i64 {
            fact = fact * qi(k);
        }
        let dirac = if mi == 0 { qi(1) } else { qi(0) };
        let lebesgue = qi(2) * exp_power_integral(mi) / fact;
        integral = integral * (dirac - lebesgue);
    }
    product == integral
}

/// Σ_{m≤cut} (iy)ᵐ/m! · ν₁(xᵐ) with a rigorous tail bound: the correction of
/// x^{2k} is at most the full pairing count (2k−1)!!, so the tail is bounded
/// by Σ_{k>cut/2}(y²/2)ᵏ/k! ≤ (y²/2)^{K}/K!·e^{y²/2}.
pub fn nu1_exponential(y: f64, degree_cut: usize) -> Result<(Complex64, f64)> {
    if degree_cut % 2 != 0 || degree_cut > NU1_DEGREE_CAP {
        return Err(Error::DegreeCap { len: degree_cut, cap: NU1_DEGREE_CAP });
    }
    let mut value = Complex64::new(0.0, 0.0);
    let iy = Complex64::new(0.0, y);
    let mut pow = Complex64::new(1.0, 0.0);
    let mut fact = 1.0;
    for m in 0..=degree_cut {
        if m > 0 {
            pow *= iy;
            fact *= m as f64;
        }
        if m % 2 == 1 {
            continue;
        }
        let c = nu1_power(m)?;
        value += pow / fact * crate::scalar::q_to_f64(&c);
    }
    let half_y2 = y * y / 2.0;
    let kk = degree_cut / 2 + 1;
    let mut lead = 1.0;
    for k in 1..=kk {
        lead *= half_y2 / k as f64;
    }
    let tail = lead * half_y2.exp();
    Ok((value, tail))
}

/// Independent numeric check of the simplex-integral closed form. The
/// substitution a = e^{−t₁}, b = e^{−t₂} turns the wedge integral into
/// ½ ∬_{0≤b≤a≤1} a^{k₁} b^{k₂} da db, evaluated by 2-D Gauss–Legendre with
/// node doubling until two refinements agree.
pub fn simplex_integral_quadrature(k1: u32, k2: u32, tol: f64) -> Result<f64> {
    let eval = |n: usize| -> f64 {
        let (xs, ws) = gauss_legendre(n);
        let mut acc = 0.0;
        for (xa, wa) in xs.iter().zip(ws.iter()) {
            let a = 0.5 * (xa + 1.0);
            for (xb, wb) in xs.iter().zip(ws.iter()) {
                // map the inner node onto [0, a]
                let b = 0.5 * (xb + 1.0) * a;
                acc += wa * wb * 0.5 * (0.5 * a) * a.powi(k1 as i32) * b.powi(k2 as i32);
            }
        }
        acc / 2.0
    };
    let mut n = 8;
    let mut prev = eval(n);
    for _ in 0..8 {
        n *= 2;
        let next = eval(n);
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence { tol, last: (eval(2 * n) - prev).abs() })
}

/// Nodes and weights for n-point Gauss–Legendre on [−1,1], by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, 0.0_f64);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guewick::{coefficient, gue_word_expectation};
    use crate::ncpoly::Letter;

    fn xw(indices: &[u32]) -> Word {
        indices.iter().map(|&i| Letter::x(i)).collect()
    }

    #[test]
    fn simplex_integral_base_cases() {
        assert_eq!(simplex_integral(0, 0), q(1, 4));
        assert_eq!(simplex_integral(1, 0), q(1, 6));
        assert_eq!(simplex_integral(0, 1), q(1, 12));
    }

    #[test]
    fn simplex_closed_form_matches_quadrature() {
        for k1 in 0..=6 {
            for k2 in 0..=6 {
                let exact = crate::scalar::q_to_f64(&simplex_integral(k1, k2));
                let numeric = simplex_integral_quadrature(k1, k2, 1e-12).unwrap();
                assert!((exact - numeric).abs() < 1e-10, "({k1},{k2}): {exact} vs {numeric}");
            }
        }
    }

    #[test]
    fn nu1_monomials() {
        assert_eq!(nu1_power(2).unwrap(), qi(0));
        assert_eq!(nu1_power(4).unwrap(), qi(1));
        assert_eq!(nu1_power(6).unwrap(), qi(10));
    }

    #[test]
    fn nu1_equals_finite_n_oracle_on_multicolor_words() {
        for word in [
            xw(&[1, 2, 1, 2]),
            xw(&[1, 1, 2, 2]),
            xw(&[1, 2, 2, 1, 2, 2]),
            xw(&[1, 2, 1, 2, 1, 2]),
        ] {
            let exact = nu1(&NcPoly::monomial(word.clone(), crate::scalar::cq_one())).unwrap();
            let oracle = coefficient(&gue_word_expectation(&word).unwrap(), 1);
            assert_eq!(exact, oracle, "{word:?}");
        }
    }

    #[test]
    fn c_coefficients() {
        assert_eq!(c_coefficient(0), -1);
        assert_eq!(c_coefficient(1), 2);
        assert_eq!(c_coefficient(2), -2);
        assert_eq!(c_coefficient(5), 2);
    }

    #[test]
    fn lemma_c_cases() {
        assert!(lemma_c_check(&[0]));
        assert!(lemma_c_check(&[2, 3]));
        assert!(lemma_c_check(&[0, 4, 0]));
        assert!(lemma_c_check(&[1, 1, 1, 5]));
    }

    #[test]
    fn exponential_leading_term() {
        let (v, tail) = nu1_exponential(0.0, 8).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
        assert!(tail.abs() < 1e-15);
        let y = 0.1;
        let (v, _) = nu1_exponential(y, 8).unwrap();
        // next contribution is −10·y⁶/720
        let lead = y.powi(4) / 24.0;
        assert!((v.re - lead).abs() < y.powi(6) / 50.0, "v={v}, lead={lead}");
        assert!(v.im.abs() < 1e-16);
    }
}
