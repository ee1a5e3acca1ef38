use crate::model::ControlSpec;
use crate::numeric::Scalar;

/// `min (1/N) sum_j c(f(j))` over `f: {1..N} -> N` with `sum_j f(j) = M`.
///
/// Dynamic programme over (sites used, mass placed), `O(N M^2)`.
pub fn min_mean_control<S: Scalar>(control: &ControlSpec, n: usize, m: u64) -> S {
    assert!(n >= 1, "need at least one site");
    let m = m as usize;
    let c: Vec<S> = (0..=m as u64).map(|i| S::control(control, i)).collect();
    // best[k] = smallest sum of c over the sites used so far holding mass k.
    let mut best: Vec<Option<S>> = vec![None; m + 1];
    for (k, ck) in c.iter().enumerate() {
        best[k] = Some(ck.clone());
    }
    for _ in 1..n {
        let mut next: Vec<Option<S>> = vec![None; m + 1];
        for (placed, b) in best.iter().enumerate() {
            let Some(b) = b else { continue };
            for (k, ck) in c.iter().enumerate().take(m - placed + 1) {
                let v = b.clone() + ck.clone();
                let slot = &mut next[placed + k];
                if slot.as_ref().is_none_or(|cur| v < *cur) {
                    *slot = Some(v);
                }
            }
        }
        best = next;
    }
    best[m].clone().expect("every mass is reachable") / S::from_u64(n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::{One, Zero};

    use crate::numeric::ratio;

    fn exhaustive(control: &ControlSpec, n: usize, m: u64) -> BigRational {
        fn go(control: &ControlSpec, left: usize, m: u64, acc: BigRational, best: &mut Option<BigRational>) {
            if left == 1 {
                let v = acc + control.eval_exact(m);
                if best.as_ref().is_none_or(|b| v < *b) {
                    *best = Some(v);
                }
                return;
            }
            for k in 0..=m {
                go(control, left - 1, m - k, acc.clone() + control.eval_exact(k), best);
            }
        }
        let mut best = None;
        go(control, n, m, BigRational::zero(), &mut best);
        best.unwrap() / BigRational::from_integer((n as i64).into())
    }

    #[test]
    fn examples() {
        assert_eq!(min_mean_control::<f64>(&ControlSpec::delta0(), 10, 3), 0.7);
        assert_eq!(min_mean_control::<f64>(&ControlSpec::Logistic { kappa: 2 }, 2, 2), 0.5);
        for c in [ControlSpec::AllOne, ControlSpec::Logistic { kappa: 3 }, ControlSpec::half_square_ratio()] {
            assert!(min_mean_control::<BigRational>(&c, 4, 0).is_one());
        }
    }

    #[test]
    fn dp_equals_enumeration() {
        let families = [
            ControlSpec::delta0(),
            ControlSpec::Indicator { kappa: 3 },
            ControlSpec::Logistic { kappa: 4 },
            ControlSpec::constant(0.5),
            ControlSpec::half_square_ratio(),
            ControlSpec::table(&[1.0, 0.75, 0.25], 0.125),
        ];
        for c in &families {
            for n in 1..=6 {
                for m in 0..=8 {
                    assert_eq!(min_mean_control::<BigRational>(c, n, m), exhaustive(c, n, m), "{c:?} N={n} M={m}");
                }
            }
        }
    }

    #[test]
    fn delta_zero_closed_form() {
        for n in 1..=6usize {
            for m in 0..=8u64 {
                let expected = if m as usize <= n {
                    BigRational::one() - ratio(m as i64, n as i64)
                } else {
                    BigRational::zero()
                };
                assert_eq!(min_mean_control::<BigRational>(&ControlSpec::delta0(), n, m), expected);
            }
        }
    }
}
