//! Exact arithmetic in the quadratic field Q(sqrt 3).
//!
//! Every lattice constant used by the peeling laws (partition functions,
//! case weights, expected swallowed edges, thresholds) is an element of
//! Q(sqrt 3): type-1 triangulation quantities carry a sqrt 3 component,
//! everything else lives in the rational subfield.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{PercoError, Result};

/// `a + b * sqrt(3)` with reduced arbitrary-precision rational coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct ExactValue {
    a: BigRational,
    b: BigRational,
}

impl ExactValue {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        // BigRational keeps itself reduced, so the representation is canonical.
        Self { a, b }
    }

    pub fn rational(a: BigRational) -> Self {
        Self {
            a,
            b: BigRational::zero(),
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::rational(BigRational::new(num.into(), den.into()))
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Self::rational(BigRational::from_integer(n.into()))
    }

    /// `a + b sqrt 3` from small integer ratios.
    pub fn from_parts(a: (i64, i64), b: (i64, i64)) -> Self {
        Self::new(
            BigRational::new(a.0.into(), a.1.into()),
            BigRational::new(b.0.into(), b.1.into()),
        )
    }

    pub fn sqrt3() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.a
    }

    pub fn sqrt3_part(&self) -> &BigRational {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Galois conjugate `a - b sqrt 3`.
    pub fn conjugate(&self) -> Self {
        Self::new(self.a.clone(), -self.b.clone())
    }

    /// Field norm `a^2 - 3 b^2`, zero only for zero.
    pub fn norm(&self) -> BigRational {
        &self.a * &self.a - BigRational::from_integer(3.into()) * &self.b * &self.b
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(PercoError::DivisionByZero);
        }
        let n = self.norm();
        let c = self.conjugate();
        Ok(Self::new(c.a / &n, c.b / n))
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        Ok(self * &rhs.inverse()?)
    }

    pub fn pow(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Self::new(&self.a * r, &self.b * r)
    }

    /// Parses a decimal (`0.75`, `-1e-3`) or a fraction (`3/8`) exactly.
    pub fn parse_rational(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || PercoError::InvalidArgument(format!("'{text}' is not a decimal or fraction"));
        if let Some((n, d)) = t.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(PercoError::DivisionByZero);
            }
            return Ok(ExactValue::rational(BigRational::new(n, d)));
        }
        let (mantissa, exp) = match t.find(['e', 'E']) {
            Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (t, 0),
        };
        let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int.trim_start_matches(['-', '+']).is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let digits = if digits == "-" || digits == "+" || digits.is_empty() {
            "0".to_string()
        } else {
            digits
        };
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let scale = exp - frac.len() as i32;
        let ten = BigInt::from(10);
        let r = if scale >= 0 {
            BigRational::from_integer(n * ten.pow(scale as u32))
        } else {
            BigRational::new(n, ten.pow((-scale) as u32))
        };
        Ok(ExactValue::rational(r))
    }

    /// Exact sign of `a + b sqrt 3`: compares `a^2` with `3 b^2` when the
    /// coefficients disagree in sign.
    pub fn signum(&self) -> Ordering {
        let sa = sign_of(&self.a);
        let sb = sign_of(&self.b);
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            (sa, _) => {
                let a2 = &self.a * &self.a;
                let b2 = BigRational::from_integer(3.into()) * &self.b * &self.b;
                match a2.cmp(&b2) {
                    Ordering::Greater => sa,
                    Ordering::Less => sa.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    /// Nearest-ish `f64` (within one ulp). The sqrt 3 term is evaluated with
    /// an integer square root at a working precision that grows until the
    /// result carries at least 80 significant bits.
    pub fn to_f64(&self) -> f64 {
        if self.b.is_zero() {
            return self.a.to_f64().unwrap_or(f64::NAN);
        }
        // value = (A + B sqrt 3) / D with integers
        let d = self.a.denom().lcm(self.b.denom());
        let big_a = self.a.numer() * (&d / self.a.denom());
        let big_b = self.b.numer() * (&d / self.b.denom());
        let mut shift: u64 = 96;
        loop {
            let scaled_a = &big_a << shift;
            let three_b2: BigUint = (big_b.magnitude() * big_b.magnitude() * 3u32) << (2 * shift);
            let root = BigInt::from_biguint(big_b.sign(), three_b2.sqrt());
            let t = scaled_a + root;
            // need |t| / d to carry plenty of bits above the +-1 rounding of the root
            if t.bits() > d.bits() + 80 || shift > 1 << 20 {
                let r = BigRational::new(t, d << shift);
                return r.to_f64().unwrap_or(f64::NAN);
            }
            shift *= 2;
        }
    }
}

fn sign_of(r: &BigRational) -> Ordering {
    if r.is_positive() {
        Ordering::Greater
    } else if r.is_negative() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

impl PartialOrd for ExactValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactValue {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum()
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", self.a),
            (true, false) => write!(f, "{}*sqrt(3)", self.b),
            (false, false) => {
                if self.b.is_negative() {
                    write!(f, "{} - {}*sqrt(3)", self.a, -self.b.clone())
                } else {
                    write!(f, "{} + {}*sqrt(3)", self.a, self.b)
                }
            }
        }
    }
}

impl fmt::Debug for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExactValue({self})")
    }
}

impl From<BigRational> for ExactValue {
    fn from(r: BigRational) -> Self {
        Self::rational(r)
    }
}

impl From<i64> for ExactValue {
    fn from(n: i64) -> Self {
        Self::from_integer(n)
    }
}

macro_rules! forward_binop {
    ($imp:ident, $method:ident) => {
        impl $imp<ExactValue> for ExactValue {
            type Output = ExactValue;
            fn $method(self, rhs: ExactValue) -> ExactValue {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $imp<&'a ExactValue> for ExactValue {
            type Output = ExactValue;
            fn $method(self, rhs: &'a ExactValue) -> ExactValue {
                (&self).$method(rhs)
            }
        }
        impl<'a> $imp<ExactValue> for &'a ExactValue {
            type Output = ExactValue;
            fn $method(self, rhs: ExactValue) -> ExactValue {
                self.$method(&rhs)
            }
        }
    };
}

impl<'a, 'b> Add<&'b ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: &'b ExactValue) -> ExactValue {
        ExactValue::new(&self.a + &rhs.a, &self.b + &rhs.b)
    }
}

impl<'a, 'b> Sub<&'b ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: &'b ExactValue) -> ExactValue {
        ExactValue::new(&self.a - &rhs.a, &self.b - &rhs.b)
    }
}

impl<'a, 'b> Mul<&'b ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: &'b ExactValue) -> ExactValue {
        // (a + b r)(c + d r) = (ac + 3bd) + (ad + bc) r
        let three = BigRational::from_integer(3.into());
        ExactValue::new(
            &self.a * &rhs.a + three * &self.b * &rhs.b,
            &self.a * &rhs.b + &self.b * &rhs.a,
        )
    }
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        ExactValue::new(-self.a, -self.b)
    }
}

impl<'a> Neg for &'a ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        ExactValue::new(-self.a.clone(), -self.b.clone())
    }
}

impl std::iter::Sum for ExactValue {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ExactValue::zero(), |acc, x| acc + x)
    }
}

/// `n!!` for `n >= -1`, with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i64) -> Result<BigInt> {
    if n < -1 {
        return Err(PercoError::InvalidArgument(format!(
            "double factorial undefined for n = {n}"
        )));
    }
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    Ok(acc)
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * k)
}

/// Sum of a hypergeometric-type series `t_1 + t_2 + ... + t_n` where
/// `t_{i+1} = t_i * num(i) / den(i)`, evaluated by Horner nesting on
/// unreduced integer fractions and reduced once at the end. Returns the sum
/// in units of `t_1`.
pub(crate) fn ratio_series(n: u64, ratio: impl Fn(u64) -> (BigInt, BigInt)) -> BigRational {
    ratio_series_weighted(n, ratio, |_| BigInt::one())
}

/// Like [`ratio_series`] but computes `sum_i c(i) t_i / t_1`.
pub(crate) fn ratio_series_weighted(
    n: u64,
    ratio: impl Fn(u64) -> (BigInt, BigInt),
    coeff: impl Fn(u64) -> BigInt,
) -> BigRational {
    if n == 0 {
        return BigRational::zero();
    }
    // acc_n = c(n); acc_i = c(i) + r(i) acc_{i+1}
    let mut num = coeff(n);
    let mut den = BigInt::one();
    for i in (1..n).rev() {
        let (rn, rd) = ratio(i);
        // c + (rn/rd)(num/den) = (c rd den + rn num) / (rd den)
        let new_den = &rd * &den;
        num = coeff(i) * &new_den + rn * num;
        den = new_den;
    }
    if den.sign() == Sign::Minus {
        num = -num;
        den = -den;
    }
    BigRational::new(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(a: (i64, i64), b: (i64, i64)) -> ExactValue {
        ExactValue::from_parts(a, b)
    }

    #[test]
    fn identity_times_sqrt3() {
        let x = ExactValue::one() * ExactValue::sqrt3();
        assert_eq!(x, ExactValue::sqrt3());
    }

    #[test]
    fn inverse_of_sqrt3() {
        let inv = ExactValue::sqrt3().inverse().unwrap();
        assert_eq!(inv, ev((0, 1), (1, 3)));
    }

    #[test]
    fn conjugate_product_is_one() {
        let x = ev((2, 1), (-1, 1));
        let y = ev((2, 1), (1, 1));
        assert_eq!(x * y, ExactValue::one());
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert!(matches!(
            ExactValue::zero().inverse(),
            Err(PercoError::DivisionByZero)
        ));
        assert!(ExactValue::one().checked_div(&ExactValue::zero()).is_err());
    }

    #[test]
    fn parses_decimals_and_fractions() {
        let r = |s: &str| ExactValue::parse_rational(s).unwrap();
        assert_eq!(r("0.75"), ExactValue::from_ratio(3, 4));
        assert_eq!(r("-.5"), ExactValue::from_ratio(-1, 2));
        assert_eq!(r("3/8"), ExactValue::from_ratio(3, 8));
        assert_eq!(r("2.5e-1"), ExactValue::from_ratio(1, 4));
        assert_eq!(r("12"), ExactValue::from_integer(12));
        for bad in ["", "x", "1/0", "0.5.5", "-", "1e"] {
            assert!(ExactValue::parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn float_conversion() {
        assert_eq!(ev((0, 1), (1, 3)).to_f64(), 0.5773502691896257);
        assert_eq!(ev((1, 2), (-1, 4)).to_f64(), 0.06698729810778067);
        assert_eq!(ExactValue::from_ratio(2, 3).to_f64(), 0.6666666666666666);
        // heavy cancellation: (2 - sqrt 3)^8 ~ 2.7e-5
        let x = ev((2, 1), (-1, 1)).pow(8);
        let want = (2.0f64 - 3f64.sqrt()).powi(8);
        assert!((x.to_f64() - want).abs() / want < 1e-9);
        let tiny = ev((2, 1), (-1, 1)).pow(40);
        assert!(tiny.to_f64() > 0.0 && tiny.to_f64() < 1e-22);
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(-1).unwrap(), BigInt::one());
        assert_eq!(double_factorial(5).unwrap(), BigInt::from(15));
        assert_eq!(double_factorial(1).unwrap(), BigInt::one());
        assert_eq!(double_factorial(0).unwrap(), BigInt::one());
        assert!(double_factorial(-3).is_err());
    }

    #[test]
    fn ratio_series_matches_direct_sum() {
        // t_i = 2^{-(i-1)}: sum of first 10 = 2 - 2^-9
        let s = ratio_series(10, |_| (BigInt::one(), BigInt::from(2)));
        assert_eq!(s, BigRational::new(1023.into(), 512.into()));
        let w = ratio_series_weighted(3, |_| (BigInt::one(), BigInt::from(2)), |i| i.into());
        // 1 + 2/2 + 3/4
        assert_eq!(w, BigRational::new(11.into(), 4.into()));
    }

    #[test]
    fn exact_sign() {
        assert_eq!(ev((2, 1), (-1, 1)).signum(), Ordering::Greater);
        assert_eq!(ev((-2, 1), (1, 1)).signum(), Ordering::Less);
        assert_eq!(ev((1, 1), (-1, 1)).signum(), Ordering::Less);
        assert_eq!(ExactValue::zero().signum(), Ordering::Equal);
    }

    fn arb_value() -> impl Strategy<Value = ExactValue> {
        (-50i64..50, 1i64..20, -50i64..50, 1i64..20)
            .prop_map(|(an, ad, bn, bd)| ev((an, ad), (bn, bd)))
    }

    proptest! {
        #[test]
        fn field_axioms(x in arb_value(), y in arb_value(), z in arb_value()) {
            prop_assert_eq!(&(&x + &y) + &z, &x + &(&y + &z));
            prop_assert_eq!(&(&x * &y) * &z, &x * &(&y * &z));
            prop_assert_eq!(&x * &(&y + &z), &(&x * &y) + &(&x * &z));
            prop_assert_eq!(&x * &y, &y * &x);
            if !x.is_zero() {
                prop_assert_eq!(&x * &x.inverse().unwrap(), ExactValue::one());
            }
            prop_assert_eq!(&(&x - &y) + &y, x.clone());
        }

        #[test]
        fn float_conversion_is_monotone(x in arb_value(), y in arb_value()) {
            if x < y {
                prop_assert!(x.to_f64() <= y.to_f64());
            }
            let direct = x.rational_part().to_f64().unwrap()
                + x.sqrt3_part().to_f64().unwrap() * 3f64.sqrt();
            prop_assert!((x.to_f64() - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        }
    }
}
