use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;
use crate::numeric::{exact_from_f64, format_ratio, parse_ratio, ratio_from_u64};

/// A probability carried both as a float and as an exact rational.
///
/// JSON numbers are taken at their exact binary value; strings such as
/// `"2/3"` keep the intended rational.
#[derive(Clone, PartialEq)]
pub struct Probability {
    value: f64,
    exact: BigRational,
}

impl Probability {
    pub fn from_f64(value: f64) -> Self {
        Self {
            value,
            exact: exact_from_f64(value),
        }
    }

    pub fn from_ratio(exact: BigRational) -> Self {
        Self {
            value: exact.to_f64().unwrap_or(f64::NAN),
            exact,
        }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Self::from_ratio(crate::numeric::ratio(num, den))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    fn in_unit_interval(&self) -> bool {
        !self.exact.is_negative() && self.exact <= BigRational::one() && self.value.is_finite()
    }
}

impl fmt::Debug for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if exact_from_f64(self.value) == self.exact {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{}", format_ratio(&self.exact))
        }
    }
}

impl From<f64> for Probability {
    fn from(value: f64) -> Self {
        Self::from_f64(value)
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if exact_from_f64(self.value) == self.exact {
            serializer.serialize_f64(self.value)
        } else {
            serializer.serialize_str(&format_ratio(&self.exact))
        }
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(x) => Ok(Probability::from_f64(x)),
            Repr::Text(s) => parse_ratio(&s)
                .map(Probability::from_ratio)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid rational `{s}`"))),
        }
    }
}

/// The self-regulation function `c: N -> [0,1]`: acceptance probability of an
/// intra-patch birth onto a site already holding `i` particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ControlSpec {
    /// `c = 1` on `{0, ..., kappa-1}`, zero afterwards.
    Indicator { kappa: u64 },
    /// `c(i) = max(0, 1 - i/kappa)`.
    Logistic { kappa: u64 },
    /// `c(0) = 1`, `c(i) = p` for `i >= 1`.
    Constant { p: Probability },
    /// Explicit leading values (`values[0]` must be 1) followed by a constant tail.
    Table { values: Vec<Probability>, tail: Probability },
    /// `c(0) = 1`, `c(i) = limit * ((i + offset + 1) / (i + offset))^2` for `i >= 1`.
    ///
    /// Decreases to `limit`; the running products telescope, so both
    /// recurrence series have closed forms.
    SquareRatio { offset: u64, limit: Probability },
    AllOne,
}

/// Asymptotic shape of a control family, used to certify series tails.
#[derive(Clone, Debug, PartialEq)]
pub enum TailStructure {
    /// `c(i) = value` for every `i >= from`.
    EventuallyConstant { from: u64, value: f64 },
    /// `c!(n) = limit^n ((n + a) / a)^2` with `a = offset + 1`.
    SquareRatio { offset: u64, limit: f64 },
}

impl ControlSpec {
    /// `c = delta_0`: the contact-process restriction.
    pub fn delta0() -> Self {
        ControlSpec::Indicator { kappa: 1 }
    }

    pub fn constant(p: f64) -> Self {
        ControlSpec::Constant { p: p.into() }
    }

    pub fn table(values: &[f64], tail: f64) -> Self {
        ControlSpec::Table {
            values: values.iter().map(|&v| v.into()).collect(),
            tail: tail.into(),
        }
    }

    /// The family with `c(n) = (n+3)^2 / (2 (n+2)^2)` for `n >= 1` and `c(0) = 1`.
    pub fn half_square_ratio() -> Self {
        ControlSpec::SquareRatio {
            offset: 2,
            limit: Probability::ratio(1, 2),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ControlSpec::Indicator { .. } => "indicator",
            ControlSpec::Logistic { .. } => "logistic",
            ControlSpec::Constant { .. } => "constant",
            ControlSpec::Table { .. } => "table",
            ControlSpec::SquareRatio { .. } => "square_ratio",
            ControlSpec::AllOne => "all_one",
        }
    }

    pub fn kappa(&self) -> Option<u64> {
        match self {
            ControlSpec::Indicator { kappa } | ControlSpec::Logistic { kappa } => Some(*kappa),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidControl(msg));
        match self {
            ControlSpec::Indicator { kappa } | ControlSpec::Logistic { kappa } => {
                if *kappa == 0 {
                    return bad("kappa must be a positive integer".into());
                }
            }
            ControlSpec::Constant { p } => {
                if !p.in_unit_interval() {
                    return bad(format!("p = {p:?} is not a probability"));
                }
            }
            ControlSpec::Table { values, tail } => {
                if !tail.in_unit_interval() {
                    return bad(format!("tail = {tail:?} is not a probability"));
                }
                match values.first() {
                    Some(first) if first.exact().is_one() => {}
                    Some(first) => return bad(format!("table must start with c(0) = 1, got {first:?}")),
                    None if tail.exact().is_one() => {}
                    None => return bad("empty table requires tail = 1".into()),
                }
                for (i, v) in values.iter().enumerate() {
                    if !v.in_unit_interval() {
                        return bad(format!("c({i}) = {v:?} is not a probability"));
                    }
                    let next = values.get(i + 1).unwrap_or(tail);
                    if next.exact() > v.exact() {
                        return bad(format!("table is not nonincreasing at index {}", i + 1));
                    }
                }
            }
            ControlSpec::SquareRatio { offset, limit } => {
                if !limit.in_unit_interval() {
                    return bad(format!("limit = {limit:?} is not a probability"));
                }
                let a = ratio_from_u64(offset + 2) / ratio_from_u64(offset + 1);
                if limit.exact() * &a * &a > BigRational::one() {
                    return bad(format!("c(1) exceeds 1 for offset {offset}"));
                }
            }
            ControlSpec::AllOne => {}
        }
        Ok(())
    }

    /// `c(i)` as a float.
    pub fn eval(&self, i: u64) -> f64 {
        match self {
            ControlSpec::Indicator { kappa } => {
                if i < *kappa {
                    1.0
                } else {
                    0.0
                }
            }
            ControlSpec::Logistic { kappa } => (1.0 - i as f64 / *kappa as f64).max(0.0),
            ControlSpec::Constant { p } => {
                if i == 0 {
                    1.0
                } else {
                    p.value()
                }
            }
            ControlSpec::Table { values, tail } => {
                usize::try_from(i).ok().and_then(|i| values.get(i)).unwrap_or(tail).value()
            }
            ControlSpec::SquareRatio { offset, limit } => {
                if i == 0 {
                    1.0
                } else {
                    let r = (i + offset + 1) as f64 / (i + offset) as f64;
                    limit.value() * r * r
                }
            }
            ControlSpec::AllOne => 1.0,
        }
    }

    /// `c(i)` as an exact rational.
    pub fn eval_exact(&self, i: u64) -> BigRational {
        match self {
            ControlSpec::Indicator { kappa } => {
                if i < *kappa {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }
            ControlSpec::Logistic { kappa } => {
                if i >= *kappa {
                    BigRational::zero()
                } else {
                    ratio_from_u64(kappa - i) / ratio_from_u64(*kappa)
                }
            }
            ControlSpec::Constant { p } => {
                if i == 0 {
                    BigRational::one()
                } else {
                    p.exact().clone()
                }
            }
            ControlSpec::Table { values, tail } => usize::try_from(i)
                .ok()
                .and_then(|i| values.get(i))
                .unwrap_or(tail)
                .exact()
                .clone(),
            ControlSpec::SquareRatio { offset, limit } => {
                if i == 0 {
                    BigRational::one()
                } else {
                    let r = ratio_from_u64(i + offset + 1) / ratio_from_u64(i + offset);
                    limit.exact() * &r * &r
                }
            }
            ControlSpec::AllOne => BigRational::one(),
        }
    }

    /// `c(infinity) = lim c(i)`.
    pub fn limit(&self) -> f64 {
        match self.tail_structure() {
            TailStructure::EventuallyConstant { value, .. } => value,
            TailStructure::SquareRatio { limit, .. } => limit,
        }
    }

    pub fn tail_structure(&self) -> TailStructure {
        match self {
            ControlSpec::Indicator { kappa } | ControlSpec::Logistic { kappa } => {
                TailStructure::EventuallyConstant { from: *kappa, value: 0.0 }
            }
            ControlSpec::Constant { p } => TailStructure::EventuallyConstant { from: 1, value: p.value() },
            ControlSpec::Table { values, tail } => TailStructure::EventuallyConstant {
                from: values.len() as u64,
                value: tail.value(),
            },
            ControlSpec::SquareRatio { offset, limit } => TailStructure::SquareRatio {
                offset: *offset,
                limit: limit.value(),
            },
            ControlSpec::AllOne => TailStructure::EventuallyConstant { from: 0, value: 1.0 },
        }
    }

    /// Running product `c!(n) = prod_{l=0}^{n} c(l)`.
    pub fn product(&self, n: u64) -> f64 {
        match self.tail_structure() {
            TailStructure::SquareRatio { offset, limit } => {
                let a = (offset + 1) as f64;
                let r = (n as f64 + a) / a;
                limit.powf(n as f64) * r * r
            }
            TailStructure::EventuallyConstant { from, value } => {
                let head_end = n.min(from.saturating_sub(1));
                let mut acc = 1.0;
                for l in 0..=head_end {
                    acc *= self.eval(l);
                    if acc == 0.0 {
                        return 0.0;
                    }
                }
                if n > head_end {
                    acc *= value.powf((n - head_end) as f64);
                }
                acc
            }
        }
    }

    /// Exact `c!(n)`.
    pub fn product_exact(&self, n: u64) -> BigRational {
        let mut acc = BigRational::one();
        for l in 0..=n {
            acc *= self.eval_exact(l);
            if acc.is_zero() {
                break;
            }
        }
        acc
    }

    /// Index beyond which the family is described by its tail structure alone.
    fn horizon(&self) -> u64 {
        match self.tail_structure() {
            TailStructure::EventuallyConstant { from, .. } => from,
            TailStructure::SquareRatio { .. } => 4096,
        }
    }

    /// Whether `self(i) <= other(i)` for every `i`.
    ///
    /// Exact on the leading segment and the limits; square-ratio families are
    /// compared on the first 4096 values.
    pub fn dominated_by(&self, other: &ControlSpec) -> bool {
        let horizon = self.horizon().max(other.horizon()) + 1;
        (0..=horizon).all(|i| self.eval(i) <= other.eval(i)) && self.limit() <= other.limit()
    }
}

/// Prefix products `c!(0), c!(1), ...` extended on demand.
#[derive(Debug, Clone)]
pub struct ControlProducts {
    control: ControlSpec,
    products: Vec<f64>,
}

impl ControlProducts {
    pub fn new(control: ControlSpec) -> Self {
        Self {
            control,
            products: Vec::new(),
        }
    }

    pub fn get(&mut self, n: u64) -> f64 {
        let n = n as usize;
        while self.products.len() <= n {
            let l = self.products.len();
            let prev = if l == 0 { 1.0 } else { self.products[l - 1] };
            self.products.push(prev * self.control.eval(l as u64));
        }
        self.products[n]
    }
}

/// Lookup table of `c(i)` for the simulator hot loop.
#[derive(Debug, Clone)]
pub struct ControlTable {
    control: ControlSpec,
    values: Vec<f64>,
}

impl ControlTable {
    const PRECOMPUTED: usize = 256;

    pub fn new(control: ControlSpec) -> Self {
        let values = (0..Self::PRECOMPUTED as u64).map(|i| control.eval(i)).collect();
        Self { control, values }
    }

    #[inline]
    pub fn get(&self, i: u32) -> f64 {
        match self.values.get(i as usize) {
            Some(&v) => v,
            None => self.control.eval(u64::from(i)),
        }
    }

    pub fn spec(&self) -> &ControlSpec {
        &self.control
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;
    use proptest::prelude::*;

    fn families() -> Vec<ControlSpec> {
        vec![
            ControlSpec::Indicator { kappa: 3 },
            ControlSpec::Logistic { kappa: 4 },
            ControlSpec::constant(0.6),
            ControlSpec::table(&[1.0, 0.9, 0.7, 0.5], 0.3),
            ControlSpec::half_square_ratio(),
            ControlSpec::AllOne,
        ]
    }

    #[test]
    fn logistic_midpoint() {
        assert_eq!(ControlSpec::Logistic { kappa: 4 }.eval(2), 0.5);
        assert_eq!(ControlSpec::Logistic { kappa: 4 }.eval(9), 0.0);
    }

    #[test]
    fn indicator_cuts_off_at_kappa() {
        let c = ControlSpec::Indicator { kappa: 3 };
        assert_eq!(c.eval(2), 1.0);
        assert_eq!(c.eval(3), 0.0);
    }

    #[test]
    fn every_family_accepts_on_empty_sites() {
        for c in families() {
            c.validate().unwrap();
            assert_eq!(c.eval(0), 1.0, "{c:?}");
            assert!(c.eval_exact(0).is_one());
        }
    }

    #[test]
    fn table_returns_tail_beyond_values() {
        let c = ControlSpec::table(&[1.0, 0.8], 0.25);
        assert_eq!(c.eval(1), 0.8);
        assert_eq!(c.eval(2), 0.25);
        assert_eq!(c.eval(1_000_000), 0.25);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ControlSpec::Indicator { kappa: 0 }.validate().is_err());
        assert!(ControlSpec::table(&[1.0, 0.5, 0.7], 0.1).validate().is_err());
        assert!(ControlSpec::table(&[0.9], 0.1).validate().is_err());
        assert!(ControlSpec::table(&[1.0, 0.2], 0.3).validate().is_err());
        assert!(ControlSpec::constant(1.5).validate().is_err());
        let too_big = ControlSpec::SquareRatio {
            offset: 0,
            limit: Probability::ratio(1, 2),
        };
        assert!(too_big.validate().is_err());
    }

    #[test]
    fn products_of_simple_families() {
        assert_eq!(ControlSpec::AllOne.product(7), 1.0);
        assert_eq!(ControlSpec::Indicator { kappa: 2 }.product(2), 0.0);
        assert_eq!(ControlSpec::Indicator { kappa: 2 }.product(1), 1.0);
        assert!((ControlSpec::constant(0.5).product(3) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn square_ratio_products_telescope() {
        // With c(0) = 1 and c(l) = (l+3)^2 / (2 (l+2)^2) for l >= 1 the product
        // telescopes to 2^n c!(n) = (n+3)^2 / 9.
        let c = ControlSpec::half_square_ratio();
        for n in 0..40u64 {
            let direct = c.product_exact(n);
            let scaled = direct * crate::numeric::ratio_from_u64(1u64 << n);
            assert_eq!(scaled, ratio(((n + 3) * (n + 3)) as i64, 9), "n = {n}");
            let float = c.product(n) * 2f64.powi(n as i32);
            assert!((float - ((n + 3) * (n + 3)) as f64 / 9.0).abs() < 1e-12 * float.max(1.0));
        }
    }

    #[test]
    fn rational_table_products_are_exact() {
        // Same sequence stored as an explicit rational table.
        let values: Vec<Probability> = std::iter::once(Probability::ratio(1, 1))
            .chain((1..12i64).map(|l| Probability::ratio((l + 3) * (l + 3), 2 * (l + 2) * (l + 2))))
            .collect();
        let c = ControlSpec::Table {
            values,
            tail: Probability::ratio(1, 2),
        };
        c.validate().unwrap();
        for n in 0..12u64 {
            let scaled = c.product_exact(n) * crate::numeric::ratio_from_u64(1u64 << n);
            assert_eq!(scaled, ratio(((n + 3) * (n + 3)) as i64, 9));
        }
    }

    #[test]
    fn json_round_trip_and_shape() {
        let c: ControlSpec = serde_json::from_str(r#"{"family":"logistic","kappa":4}"#).unwrap();
        assert_eq!(c, ControlSpec::Logistic { kappa: 4 });
        let t: ControlSpec = serde_json::from_str(r#"{"family":"table","values":[1,"2/3"],"tail":0.5}"#).unwrap();
        assert_eq!(t.eval_exact(1), ratio(2, 3));
        for c in families() {
            let s = serde_json::to_string(&c).unwrap();
            let back: ControlSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn dominance_ordering() {
        let delta = ControlSpec::delta0();
        assert!(delta.dominated_by(&ControlSpec::AllOne));
        assert!(ControlSpec::Indicator { kappa: 2 }.dominated_by(&ControlSpec::Indicator { kappa: 5 }));
        assert!(!ControlSpec::AllOne.dominated_by(&ControlSpec::constant(0.9)));
        assert!(ControlSpec::Logistic { kappa: 3 }.dominated_by(&ControlSpec::Logistic { kappa: 4 }));
    }

    #[test]
    fn lookup_table_matches_eval() {
        let c = ControlSpec::half_square_ratio();
        let table = ControlTable::new(c.clone());
        for i in [0u32, 1, 5, 255, 256, 10_000] {
            assert_eq!(table.get(i), c.eval(u64::from(i)));
        }
        let mut products = ControlProducts::new(c.clone());
        for n in [0u64, 3, 17] {
            assert!((products.get(n) - c.product(n)).abs() < 1e-12 * c.product(n));
        }
    }

    proptest! {
        #[test]
        fn families_are_nonincreasing_probabilities(idx in 0usize..6, j in 0u64..500) {
            let c = &families()[idx];
            let a = c.eval(j);
            let b = c.eval(j + 1);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(a >= b);
        }

        #[test]
        fn product_recurrence(idx in 0usize..6, n in 1u64..200) {
            let c = &families()[idx];
            let lhs = c.product(n);
            let rhs = c.product(n - 1) * c.eval(n);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }

        #[test]
        fn indicator_products(kappa in 1u64..30, n in 0u64..60) {
            let c = ControlSpec::Indicator { kappa };
            prop_assert_eq!(c.product(n), if n < kappa { 1.0 } else { 0.0 });
        }
    }
}
