//! Exact rational helpers and rational interval enclosures.
//!
//! Every irrational quantity used by a certified check (roots, `atanh`) is
//! represented by a [`RationalInterval`] that provably contains it.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Default precision (bits) for root extraction.
pub const ROOT_BITS: u32 = 60;

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact value of a finite float.
pub fn from_f64_exact(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

/// Parses `p/q`, an integer, or a decimal literal such as `1.040` or `1e-6`.
/// Decimals are converted exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse { line: 0, msg: format!("not a rational: {s:?}") };
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_decimal(p).ok_or_else(bad)?;
        let q = parse_decimal(q).ok_or_else(bad)?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(p / q);
    }
    parse_decimal(s).ok_or_else(bad)
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{whole}{frac}");
    let n: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().ok()? };
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rational::from_integer(n);
    if scale >= 0 {
        r *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

/// `p/q` rendering used by every file format.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Decimal rendering rounded half away from zero.
pub fn to_decimal(r: &Rational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = r * Rational::from_integer(scale.clone());
    let n = scaled.round().to_integer();
    let neg = n.is_negative();
    let s = n.abs().to_string();
    let s = if s.len() <= digits { format!("{}{}", "0".repeat(digits + 1 - s.len()), s) } else { s };
    let (a, b) = s.split_at(s.len() - digits);
    let sign = if neg { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{a}")
    } else {
        format!("{sign}{a}.{b}")
    }
}

/// Best rational approximation with denominator at most `max_den`, from the
/// continued fraction of the exact value of `x`.
pub fn approximate(x: f64, max_den: u64) -> Rational {
    let exact = from_f64_exact(x);
    best_approximation(&exact, &BigInt::from(max_den))
}

pub fn best_approximation(x: &Rational, max_den: &BigInt) -> Rational {
    if x.denom() <= max_den {
        return x.clone();
    }
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let (mut p, mut q) = (x.numer().clone(), x.denom().clone());
    loop {
        let (a, r) = p.div_mod_floor(&q);
        let h2 = &a * &h1 + &h0;
        let k2 = &a * &k1 + &k0;
        if &k2 > max_den {
            // best semiconvergent below the bound
            let m = (max_den - &k0) / &k1;
            let hs = &m * &h1 + &h0;
            let ks = &m * &k1 + &k0;
            let c1 = Rational::new(h1.clone(), k1.clone());
            let c2 = Rational::new(hs, ks);
            let d1 = (&c1 - x).abs();
            let d2 = (&c2 - x).abs();
            return if d2 < d1 { c2 } else { c1 };
        }
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        if r.is_zero() {
            return Rational::new(h1, k1);
        }
        p = q;
        q = r;
    }
}

/// Smallest multiple of `1/den` that is `>= x`.
pub fn ceil_to(x: &Rational, den: u64) -> Rational {
    let d = BigInt::from(den);
    Rational::new((x * Rational::from_integer(d.clone())).ceil().to_integer(), d)
}

/// Largest multiple of `1/den` that is `<= x`.
pub fn floor_to(x: &Rational, den: u64) -> Rational {
    let d = BigInt::from(den);
    Rational::new((x * Rational::from_integer(d.clone())).floor().to_integer(), d)
}

/// Closed interval `[lo, hi]` of rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalInterval {
    pub lo: Rational,
    pub hi: Rational,
}

impl RationalInterval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        assert!(lo <= hi, "empty interval");
        RationalInterval { lo, hi }
    }

    pub fn point(x: Rational) -> Self {
        RationalInterval { lo: x.clone(), hi: x }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        to_f64(&self.lo) <= x && x <= to_f64(&self.hi)
    }

    pub fn mid_f64(&self) -> f64 {
        0.5 * (to_f64(&self.lo) + to_f64(&self.hi))
    }

    /// Product of two intervals with nonnegative endpoints.
    pub fn mul_nonneg(&self, other: &Self) -> Self {
        debug_assert!(!self.lo.is_negative() && !other.lo.is_negative());
        RationalInterval::new(&self.lo * &other.lo, &self.hi * &other.hi)
    }

    /// Division by a positive rational.
    pub fn div_scalar(&self, d: &Rational) -> Self {
        assert!(d.is_positive());
        RationalInterval::new(&self.lo / d, &self.hi / d)
    }
}

impl fmt::Display for RationalInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", to_decimal(&self.lo, 12), to_decimal(&self.hi, 12))
    }
}

fn exact_root(n: &BigInt, k: u32) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.nth_root(k);
    if num_traits::pow(r.clone(), k as usize) == *n {
        Some(r)
    } else {
        None
    }
}

/// Enclosure of `x^(1/n)` for `x >= 0` with dyadic endpoints `2^-bits` apart.
/// Exact when `x` is a perfect `n`-th power of a rational.
pub fn nth_root(x: &Rational, n: u32, bits: u32) -> RationalInterval {
    assert!(n >= 1);
    assert!(!x.is_negative(), "root of a negative number");
    if n == 1 {
        return RationalInterval::point(x.clone());
    }
    if let (Some(p), Some(q)) = (exact_root(x.numer(), n), exact_root(x.denom(), n)) {
        return RationalInterval::point(Rational::new(p, q));
    }
    let shift = (bits as usize) * (n as usize);
    let num: BigUint = x.numer().magnitude() << shift;
    let den: &BigUint = x.denom().magnitude();
    let floor = &num / den;
    let r = floor.nth_root(n);
    let scale = BigInt::one() << bits as usize;
    let lo = Rational::new(BigInt::from_biguint(Sign::Plus, r.clone()), scale.clone());
    let hi = Rational::new(BigInt::from_biguint(Sign::Plus, r + 1u32), scale);
    RationalInterval::new(lo, hi)
}

/// Enclosure of `atanh(x)` for `0 <= x < 1` with width below `tol`.
/// Arguments above 1/2 go through `atanh(x) = ln((1+x)/(1-x)) / 2`.
pub fn atanh(x: &Rational, tol: &Rational) -> RationalInterval {
    assert!(!x.is_negative() && x < &Rational::one(), "atanh argument outside [0,1)");
    if x <= &ratio(1, 2) {
        return atanh_series(x, tol);
    }
    let one = Rational::one();
    let l = ln(&((&one + x) / (&one - x)), tol);
    l.div_scalar(&int(2))
}

/// Enclosure of `ln(r)` for `r >= 1` with width below `tol`.
pub fn ln(r: &Rational, tol: &Rational) -> RationalInterval {
    assert!(r >= &Rational::one(), "ln argument below 1");
    // r = 2^k m with 1 <= m < 2
    let mut k: u64 = r.numer().bits().saturating_sub(r.denom().bits());
    let mut m = r / Rational::from_integer(BigInt::one() << k as usize);
    if m < Rational::one() {
        k -= 1;
        m *= int(2);
    }
    let one = Rational::one();
    let part = tol / int(4 * (k as i64 + 1));
    let ln2 = atanh_series(&ratio(1, 3), &part);
    let lnm = atanh_series(&((&m - &one) / (&m + &one)), &part);
    let kk = int(k as i64) * int(2);
    RationalInterval::new(&kk * &ln2.lo + int(2) * &lnm.lo, &kk * &ln2.hi + int(2) * &lnm.hi)
}

fn atanh_series(x: &Rational, tol: &Rational) -> RationalInterval {
    if x.is_zero() {
        return RationalInterval::point(Rational::zero());
    }
    let x2 = x * x;
    let one_minus = Rational::one() - &x2;
    let mut power = x.clone();
    let mut sum = Rational::zero();
    let mut k: i64 = 0;
    loop {
        sum += &power / int(2 * k + 1);
        power *= &x2;
        // tail after term k is bounded by x^(2k+3) / ((2k+3)(1-x^2))
        let tail = &power / (int(2 * k + 3) * &one_minus);
        if &tail < tol {
            return RationalInterval::new(sum.clone(), sum + tail);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("18801/10000").unwrap(), ratio(18801, 10000));
        assert_eq!(parse_rational("1.040").unwrap(), ratio(26, 25));
        assert_eq!(parse_rational("0.0973861").unwrap(), ratio(973861, 10_000_000));
        assert_eq!(parse_rational("1e-6").unwrap(), ratio(1, 1_000_000));
        assert_eq!(parse_rational("-3").unwrap(), int(-3));
        assert_eq!(parse_rational("2.5E1").unwrap(), int(25));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal(&ratio(2, 3), 4), "0.6667");
        assert_eq!(to_decimal(&ratio(-1, 8), 2), "-0.13");
        assert_eq!(to_decimal(&int(63), 0), "63");
        assert_eq!(to_decimal(&ratio(1, 1000), 2), "0.00");
    }

    #[test]
    fn roots_enclose() {
        let two = int(2);
        let r = nth_root(&two, 2, 60);
        assert!(&r.lo * &r.lo <= two && two < &r.hi * &r.hi);
        assert!(r.width() <= ratio(1, 1 << 40));
        assert_eq!(nth_root(&ratio(8, 27), 3, 60), RationalInterval::point(ratio(2, 3)));
        assert_eq!(nth_root(&Rational::zero(), 4, 60), RationalInterval::point(Rational::zero()));
    }

    #[test]
    fn atanh_near_one() {
        let tol = ratio(1, 1_000_000_000_000);
        for x in [ratio(999, 1000), ratio(3, 4), ratio(1, 2), ratio(51, 100)] {
            let iv = atanh(&x, &tol);
            assert!(iv.width() < tol);
            assert!((iv.mid_f64() - to_f64(&x).atanh()).abs() < 1e-12);
        }
        let l = ln(&int(1000), &tol);
        assert!((l.mid_f64() - 1000f64.ln()).abs() < 1e-12);
        assert!(ln(&int(1), &tol).contains(&Rational::zero()));
    }

    #[test]
    fn atanh_third() {
        let iv = atanh(&ratio(1, 3), &ratio(1, 1_000_000_000_000));
        let v = (1.0f64 / 3.0).atanh();
        assert!(iv.contains_f64(v) || (iv.mid_f64() - v).abs() < 1e-15);
        assert!((iv.mid_f64() - 0.346573590279973).abs() < 1e-12);
    }

    #[test]
    fn continued_fraction_approximation() {
        assert_eq!(approximate(0.5, 10), ratio(1, 2));
        assert_eq!(approximate(std::f64::consts::PI, 1000), ratio(355, 113));
        let r = approximate(0.266037, 1_000_000);
        assert!((to_f64(&r) - 0.266037).abs() < 1e-11);
    }

    #[test]
    fn directed_rounding() {
        let x = ratio(1, 3);
        assert_eq!(ceil_to(&x, 10), ratio(4, 10));
        assert_eq!(floor_to(&x, 10), ratio(3, 10));
    }
}
