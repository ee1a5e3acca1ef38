//! Certified evaluation of the two series that govern a single patch:
//!
//! * the weighted series `sum_n phi^n c!(n)` (finite iff positive recurrence),
//! * the inverse series `sum_n 1 / (phi^n c!(n))` (finite implies transience).
//!
//! Tails are never estimated from partial sums alone; each control family
//! exposes a [`TailStructure`] from which the tail is summed in closed form or
//! bounded, and divergence is decided structurally.

use serde::{Deserialize, Serialize};

use super::control::{ControlSpec, TailStructure};
use crate::numeric::CompensatedSum;

/// Value of a series of nonnegative terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SeriesSum {
    Finite(f64),
    Infinite,
}

impl SeriesSum {
    pub fn is_finite(&self) -> bool {
        matches!(self, SeriesSum::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            SeriesSum::Finite(v) => Some(*v),
            SeriesSum::Infinite => None,
        }
    }
}

/// Raised when the structural prefix of a family exceeds the term budget.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("series inconclusive: {terms} explicit terms needed, budget is {budget}")]
pub struct Inconclusive {
    pub terms: u64,
    pub budget: u64,
}

/// Default cap on explicitly summed terms.
pub const DEFAULT_TERM_BUDGET: u64 = 10_000_000;

/// `sum_{n >= from} phi^n c!(n)`.
pub fn weighted_tail(phi: f64, control: &ControlSpec, from: u64, budget: u64) -> Result<SeriesSum, Inconclusive> {
    match control.tail_structure() {
        TailStructure::SquareRatio { offset, limit } => {
            let rho = phi * limit;
            if rho >= 1.0 {
                return Ok(SeriesSum::Infinite);
            }
            if rho == 0.0 {
                return Ok(SeriesSum::Finite(if from == 0 { 1.0 } else { 0.0 }));
            }
            // sum_{k>=0} rho^(k+from) (k + b)^2 / a^2 with b = from + a.
            let a = (offset + 1) as f64;
            let b = from as f64 + a;
            let g = 1.0 - rho;
            let poly = rho * (1.0 + rho) / (g * g * g) + 2.0 * b * rho / (g * g) + b * b / g;
            Ok(SeriesSum::Finite(rho.powf(from as f64) * poly / (a * a)))
        }
        TailStructure::EventuallyConstant { from: m, value: q } => {
            if m > budget {
                return Err(Inconclusive { terms: m, budget });
            }
            let mut acc = CompensatedSum::new();
            // term = phi^n c!(n), built incrementally.
            let mut term = 1.0;
            let mut n = 0u64;
            while n < m.max(from) {
                if n > 0 {
                    term *= phi * control.eval(n);
                }
                if n >= from {
                    acc.add(term);
                }
                if term == 0.0 {
                    return Ok(SeriesSum::Finite(acc.value()));
                }
                n += 1;
            }
            // n == max(m, from): every factor from here on is phi * q.
            let head = if n == 0 { 1.0 } else { term * phi * q };
            if head == 0.0 {
                return Ok(SeriesSum::Finite(acc.value()));
            }
            let ratio = phi * q;
            if ratio >= 1.0 {
                return Ok(SeriesSum::Infinite);
            }
            acc.add(head / (1.0 - ratio));
            Ok(SeriesSum::Finite(acc.value()))
        }
    }
}

/// `sum_{n >= 0} phi^n c!(n)`.
pub fn weighted_series(phi: f64, control: &ControlSpec, budget: u64) -> Result<SeriesSum, Inconclusive> {
    weighted_tail(phi, control, 0, budget)
}

/// `sum_{n >= 0} 1 / (phi^n c!(n))`, with `1/0 = +infinity`.
pub fn inverse_series(phi: f64, control: &ControlSpec, budget: u64) -> Result<SeriesSum, Inconclusive> {
    match control.tail_structure() {
        TailStructure::SquareRatio { offset, limit } => {
            let rho = phi * limit;
            if rho < 1.0 {
                return Ok(SeriesSum::Infinite);
            }
            let a = offset + 1;
            let af = a as f64;
            if rho == 1.0 {
                // a^2 * sum_{k >= a} 1/k^2 = a^2 (pi^2/6 - sum_{k<a} 1/k^2).
                let head: CompensatedSum = (1..a).map(|k| 1.0 / (k as f64 * k as f64)).collect();
                let zeta2 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
                return Ok(SeriesSum::Finite(af * af * (zeta2 - head.value())));
            }
            // Terms rho^-n a^2/(n+a)^2; stop once the geometric bound on the
            // remainder is negligible.
            let mut acc = CompensatedSum::new();
            let mut n = 0u64;
            loop {
                let w = rho.powf(-(n as f64)) * af * af / ((n as f64 + af) * (n as f64 + af));
                acc.add(w);
                n += 1;
                let bound = w / (rho - 1.0);
                if bound < 1e-17 * acc.value() {
                    break;
                }
                if n > budget {
                    return Err(Inconclusive { terms: n, budget });
                }
            }
            Ok(SeriesSum::Finite(acc.value()))
        }
        TailStructure::EventuallyConstant { from: m, value: q } => {
            if m > budget {
                return Err(Inconclusive { terms: m, budget });
            }
            let mut acc = CompensatedSum::new();
            let mut weight = 1.0;
            for n in 0..m {
                if n > 0 {
                    weight *= phi * control.eval(n);
                }
                if weight == 0.0 {
                    return Ok(SeriesSum::Infinite);
                }
                acc.add(1.0 / weight);
            }
            let ratio = phi * q;
            if ratio <= 1.0 {
                return Ok(SeriesSum::Infinite);
            }
            let head = if m == 0 { 1.0 } else { weight * ratio };
            acc.add((1.0 / head) / (1.0 - 1.0 / ratio));
            Ok(SeriesSum::Finite(acc.value()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: u64 = DEFAULT_TERM_BUDGET;

    /// `phi^n c!(n)` for `n < terms`, built by multiplication so no factor overflows.
    fn brute_terms(phi: f64, c: &ControlSpec, terms: u64) -> Vec<f64> {
        let mut w = 1.0;
        (0..terms)
            .map(|n| {
                if n > 0 {
                    w *= phi * c.eval(n);
                }
                w
            })
            .collect()
    }

    fn brute_weighted(phi: f64, c: &ControlSpec, from: u64, terms: u64) -> f64 {
        brute_terms(phi, c, terms)[from as usize..].iter().sum()
    }

    fn brute_inverse(phi: f64, c: &ControlSpec, terms: u64) -> f64 {
        brute_terms(phi, c, terms).iter().map(|w| 1.0 / w).sum()
    }

    #[test]
    fn geometric_all_one() {
        assert_eq!(weighted_series(0.5, &ControlSpec::AllOne, B).unwrap(), SeriesSum::Finite(2.0));
        assert_eq!(weighted_series(1.0, &ControlSpec::AllOne, B).unwrap(), SeriesSum::Infinite);
        assert_eq!(weighted_series(1.5, &ControlSpec::AllOne, B).unwrap(), SeriesSum::Infinite);
    }

    #[test]
    fn delta_zero_series_is_one() {
        for phi in [0.0, 0.3, 7.0] {
            assert_eq!(weighted_series(phi, &ControlSpec::delta0(), B).unwrap(), SeriesSum::Finite(1.0));
            assert_eq!(inverse_series(phi, &ControlSpec::delta0(), B).unwrap(), SeriesSum::Infinite);
        }
    }

    #[test]
    fn tails_match_brute_force() {
        let cases = [
            (0.5, ControlSpec::AllOne),
            (2.0, ControlSpec::table(&[1.0, 0.9, 0.7, 0.5], 0.3)),
            (1.2, ControlSpec::constant(0.6)),
            (3.0, ControlSpec::Logistic { kappa: 6 }),
            (1.9, ControlSpec::half_square_ratio()),
            (0.7, ControlSpec::half_square_ratio()),
        ];
        for (phi, c) in cases {
            for from in [0u64, 1, 3, 10] {
                let closed = weighted_tail(phi, &c, from, B).unwrap().finite().unwrap();
                let brute = brute_weighted(phi, &c, from, 4000);
                assert!((closed - brute).abs() < 1e-12 * brute.max(1.0), "{c:?} phi={phi} from={from}: {closed} vs {brute}");
            }
        }
    }

    #[test]
    fn inverse_series_cases() {
        // phi * c(inf) = 1 with quadratic correction: a^2 (pi^2/6 - 1 - 1/4) for a = 3.
        let s = inverse_series(2.0, &ControlSpec::half_square_ratio(), B).unwrap().finite().unwrap();
        let brute: f64 = (0..2_000_000u64).map(|n| 9.0 / ((n + 3) as f64).powi(2)).sum::<f64>() + 9.0 / 2_000_002.5;
        assert!((s - brute).abs() < 1e-9, "{s} vs {brute}");
        assert_eq!(weighted_series(2.0, &ControlSpec::half_square_ratio(), B).unwrap(), SeriesSum::Infinite);

        // Constant(0.6) with phi = 2: ratio 1.2 > 1.
        let s = inverse_series(2.0, &ControlSpec::constant(0.6), B).unwrap().finite().unwrap();
        let brute = brute_inverse(2.0, &ControlSpec::constant(0.6), 300);
        assert!((s - brute).abs() < 1e-10 * brute);

        let s = inverse_series(3.0, &ControlSpec::half_square_ratio(), B).unwrap().finite().unwrap();
        let brute = brute_inverse(3.0, &ControlSpec::half_square_ratio(), 500);
        assert!((s - brute).abs() < 1e-12 * brute);

        assert_eq!(inverse_series(1.0, &ControlSpec::AllOne, B).unwrap(), SeriesSum::Infinite);
        assert_eq!(inverse_series(0.0, &ControlSpec::AllOne, B).unwrap(), SeriesSum::Infinite);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let c = ControlSpec::Logistic { kappa: 1_000 };
        assert!(weighted_series(1.0, &c, 10).is_err());
    }
}
