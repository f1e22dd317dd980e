//! Exact scalars: arbitrary-precision rationals and complex rationals.

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational.
pub type Q = BigRational;

/// Complex number with exact rational real and imaginary parts.
pub type CQ = Complex<Q>;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn cq(re: Q, im: Q) -> CQ {
    Complex::new(re, im)
}

pub fn cq_int(n: i64) -> CQ {
    Complex::new(qi(n), Q::zero())
}

pub fn cq_zero() -> CQ {
    Complex::new(Q::zero(), Q::zero())
}

pub fn cq_one() -> CQ {
    Complex::new(Q::one(), Q::zero())
}

/// The imaginary unit.
pub fn cq_i() -> CQ {
    Complex::new(Q::zero(), Q::one())
}

pub fn cq_conj(z: &CQ) -> CQ {
    Complex::new(z.re.clone(), -z.im.clone())
}

pub fn cq_is_zero(z: &CQ) -> bool {
    z.re.is_zero() && z.im.is_zero()
}

pub fn q_to_f64(x: &Q) -> f64 {
    // Split into quotient and remainder so huge numerators stay in f64 range.
    let (quot, rem) = (x.numer() / x.denom(), x.numer() % x.denom());
    let q: f64 = bigint_to_f64(&quot);
    let r = bigint_to_f64(&rem) / bigint_to_f64(x.denom());
    q + r
}

fn bigint_to_f64(n: &BigInt) -> f64 {
    let s = n.to_string();
    s.parse::<f64>().unwrap_or(if n.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

pub fn cq_to_c64(z: &CQ) -> num_complex::Complex64 {
    num_complex::Complex64::new(q_to_f64(&z.re), q_to_f64(&z.im))
}

/// Canonical text form `a/b+c/d*i` used by golden files; signs stay on the numerators.
pub fn format_cq(z: &CQ) -> String {
    format!("{}/{}+{}/{}*i", z.re.numer(), z.re.denom(), z.im.numer(), z.im.denom())
}
