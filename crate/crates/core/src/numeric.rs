//! Small numeric helpers shared across modules.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, ToPrimitive, Zero};

use crate::model::ControlSpec;

/// Field element used by the routines that must also run in exact arithmetic.
///
/// Implemented for `f64` (the production path) and [`BigRational`] (used by
/// tests that check identities without rounding).
pub trait Scalar: Clone + PartialOrd + Num + std::fmt::Debug {
    fn from_ratio(r: &BigRational) -> Self;
    fn from_u64(n: u64) -> Self;
    fn to_f64(&self) -> f64;
    /// `c(i)` lifted into this field.
    fn control(c: &ControlSpec, i: u64) -> Self;

    fn powu(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_ratio(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_u64(n: u64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn control(c: &ControlSpec, i: u64) -> Self {
        c.eval(i)
    }

    fn powu(&self, n: u32) -> Self {
        self.powi(n as i32)
    }
}

impl Scalar for BigRational {
    fn from_ratio(r: &BigRational) -> Self {
        r.clone()
    }

    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn control(c: &ControlSpec, i: u64) -> Self {
        c.eval_exact(i)
    }
}

/// Exact rational value of a finite float.
pub fn exact_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

/// Parses `"p/q"`, `"p"` or a decimal literal into an exact rational.
pub fn parse_ratio(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str_radix(num.trim(), 10).ok()?;
        let den = BigInt::from_str_radix(den.trim(), 10).ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    if let Ok(n) = BigInt::from_str_radix(s, 10) {
        return Some(BigRational::from_integer(n));
    }
    // Decimal literal: 0.125 -> 125/1000 exactly.
    let (int_part, frac_part) = s.split_once('.')?;
    let negative = int_part.starts_with('-');
    let digits = format!("{}{}", int_part.trim_start_matches('-'), frac_part);
    let num = BigInt::from_str_radix(if digits.is_empty() { "0" } else { &digits }, 10).ok()?;
    let den = num_traits::pow(BigInt::from(10u8), frac_part.len());
    let r = BigRational::new(num, den);
    Some(if negative { -r } else { r })
}

/// Formats an exact rational as `p/q` (or `p` for integers).
pub fn format_ratio(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn ratio_from_u64(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from_u64(n).expect("u64 fits BigInt"))
}

/// Neumaier (improved Kahan) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Wilson score interval at the given normal quantile.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()) / denom;
    let lo = (centre - half).max(0.0);
    let hi = (centre + half).min(1.0);
    // Guard against rounding pushing the point estimate outside.
    (lo.min(p), hi.max(p))
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
