//! Numeric fields used by the derivative engine.
//!
//! Every routine that touches coefficients is generic over [`Scalar`], so the
//! same chain-rule code runs in `f64` for fast numerics, in `BigRational` for
//! exact vanishing tests at rational points, and in [`QuadraticSurd`] when a
//! point has coordinates in a quadratic extension such as Q(√66).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

/// A field element the derivative engine can compute with.
pub trait Scalar: Num + Clone + Neg<Output = Self> + fmt::Debug + Send + Sync + 'static {
    /// Embeds an exact rational constant.
    fn from_rational(q: &BigRational) -> Self;

    /// Nearest `f64`.
    fn to_f64(&self) -> f64;

    /// Whether arithmetic in this type is exact.
    fn is_exact() -> bool;

    /// Sign of the element; exact for exact types.
    fn signum_cmp(&self) -> Ordering;

    /// Magnitude used only for pivot selection.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(v)))
    }
}

impl Scalar for f64 {
    fn from_rational(q: &BigRational) -> Self {
        rational_to_f64(q)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_exact() -> bool {
        false
    }

    fn signum_cmp(&self) -> Ordering {
        self.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }
}

impl Scalar for BigRational {
    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn is_exact() -> bool {
        true
    }

    fn signum_cmp(&self) -> Ordering {
        self.cmp(&BigRational::zero())
    }
}

/// Converts a rational to the nearest double, robust to huge numerators and
/// denominators.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Fall back to scaling both parts down by the same power of two.
    let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(1000);
    let n = (q.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (q.denom() >> shift).to_f64().unwrap_or(1.0);
    if d == 0.0 {
        if n.is_sign_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    } else {
        n / d
    }
}

/// Exact dyadic rational equal to a finite double.
pub fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// accepted only when it lies within `tol` of `x`.
pub fn snap_rational(x: f64, max_den: u64, tol: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    if x == x.round() && x.abs() < 9.0e15 {
        return Some(BigRational::from_integer(BigInt::from(x as i64)));
    }
    // Continued-fraction convergents.
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1.0e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= tol {
            return Some(BigRational::new(BigInt::from(h1), BigInt::from(k1)));
        }
        let frac = r - a;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// Element `a + b·√R` of the real quadratic field Q(√R).
///
/// `R` must be a positive integer that is not a perfect square; otherwise
/// the representation is not unique and inversion can fail.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadraticSurd<const R: u64> {
    pub a: BigRational,
    pub b: BigRational,
}

impl<const R: u64> QuadraticSurd<R> {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        Self { a, b }
    }

    pub fn rational(a: BigRational) -> Self {
        Self { a, b: BigRational::zero() }
    }

    /// The generator √R.
    pub fn sqrt_radicand() -> Self {
        Self { a: BigRational::zero(), b: BigRational::one() }
    }

    /// Rational value when the irrational part vanishes.
    pub fn as_rational(&self) -> Option<&BigRational> {
        self.b.is_zero().then_some(&self.a)
    }

    fn radicand() -> BigRational {
        BigRational::from_integer(BigInt::from(R))
    }

    fn conjugate(&self) -> Self {
        Self { a: self.a.clone(), b: -self.b.clone() }
    }

    /// Field norm a² − R·b².
    fn norm(&self) -> BigRational {
        &self.a * &self.a - Self::radicand() * &self.b * &self.b
    }
}

impl<const R: u64> fmt::Display for QuadraticSurd<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            write!(f, "{}", self.a)
        } else if self.a.is_zero() {
            write!(f, "({})*sqrt({R})", self.b)
        } else {
            write!(f, "{} + ({})*sqrt({R})", self.a, self.b)
        }
    }
}

impl<const R: u64> Add for QuadraticSurd<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { a: self.a + o.a, b: self.b + o.b }
    }
}

impl<const R: u64> Sub for QuadraticSurd<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { a: self.a - o.a, b: self.b - o.b }
    }
}

impl<const R: u64> Mul for QuadraticSurd<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.a * &o.a + Self::radicand() * &self.b * &o.b;
        let b = &self.a * &o.b + &self.b * &o.a;
        Self { a, b }
    }
}

impl<const R: u64> Div for QuadraticSurd<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let n = o.norm();
        assert!(!n.is_zero(), "division by zero in Q(sqrt({R}))");
        let p = self * o.conjugate();
        Self { a: p.a / &n, b: p.b / n }
    }
}

impl<const R: u64> Rem for QuadraticSurd<R> {
    type Output = Self;
    fn rem(self, _o: Self) -> Self {
        Self::zero()
    }
}

impl<const R: u64> Neg for QuadraticSurd<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { a: -self.a, b: -self.b }
    }
}

impl<const R: u64> Zero for QuadraticSurd<R> {
    fn zero() -> Self {
        Self { a: BigRational::zero(), b: BigRational::zero() }
    }
    fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }
}

impl<const R: u64> One for QuadraticSurd<R> {
    fn one() -> Self {
        Self { a: BigRational::one(), b: BigRational::zero() }
    }
}

impl<const R: u64> Num for QuadraticSurd<R> {
    type FromStrRadixErr = num_rational::ParseRatioError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        BigRational::from_str_radix(s, radix).map(Self::rational)
    }
}

impl<const R: u64> Scalar for QuadraticSurd<R> {
    fn from_rational(q: &BigRational) -> Self {
        Self::rational(q.clone())
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(&self.a) + rational_to_f64(&self.b) * (R as f64).sqrt()
    }

    fn is_exact() -> bool {
        true
    }

    fn signum_cmp(&self) -> Ordering {
        let sa = self.a.signum_cmp();
        let sb = self.b.signum_cmp();
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            // Opposite signs: compare a² with R·b².
            (x, _) => {
                let lhs = &self.a * &self.a;
                let rhs = Self::radicand() * &self.b * &self.b;
                match lhs.cmp(&rhs) {
                    Ordering::Greater => x,
                    Ordering::Less => x.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }
}

/// Absolute value helper that works for any [`Scalar`].
pub fn abs<T: Scalar>(x: &T) -> T {
    if x.signum_cmp() == Ordering::Less {
        -x.clone()
    } else {
        x.clone()
    }
}

/// Rational `p/q` shorthand used throughout the tests and examples.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Whether a rational is a nonnegative value; convenience for sign checks.
pub fn is_nonnegative(q: &BigRational) -> bool {
    !q.is_negative()
}
