//! Inter-patch reproduction attempts made between two embedded steps.
//!
//! The total `T` is geometric with success probability
//! `1 / (1 + 2d lambda/(1+phi))` (counting failures), and the attempts are
//! spread uniformly over the `2d` neighbouring directions, which gives
//!
//! ```text
//! P(Y = n) = T! a^T / ((1 + 2d a)^(1+T) prod_i n_i!),   a = lambda/(1+phi), T = sum_i n_i.
//! ```

use rand::Rng;
use rand_distr::{Distribution, Geometric};

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Probability of the count vector `counts` (length `2d`).
pub fn trial_vector_pmf(lambda: f64, phi: f64, d: usize, counts: &[u64]) -> f64 {
    assert_eq!(counts.len(), 2 * d, "one count per direction");
    let a = lambda / (1.0 + phi);
    let t: u64 = counts.iter().sum();
    let q = 1.0 + 2.0 * d as f64 * a;
    if t == 0 {
        return 1.0 / q;
    }
    if a == 0.0 {
        return 0.0;
    }
    let ln = ln_factorial(t) + t as f64 * a.ln() - (1 + t) as f64 * q.ln()
        - counts.iter().map(|&n| ln_factorial(n)).sum::<f64>();
    ln.exp()
}

/// Mean of `sum_j Y(j)`: `2d lambda/(1+phi)`.
pub fn trial_vector_mean_total(lambda: f64, phi: f64, d: usize) -> f64 {
    2.0 * d as f64 * lambda / (1.0 + phi)
}

pub fn sample_trial_vector<R: Rng + ?Sized>(lambda: f64, phi: f64, d: usize, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; 2 * d];
    let a = lambda / (1.0 + phi);
    if a == 0.0 {
        return counts;
    }
    let p = 1.0 / (1.0 + 2.0 * d as f64 * a);
    let total = Geometric::new(p).expect("p lies in (0, 1]").sample(rng);
    for _ in 0..total {
        counts[rng.random_range(0..2 * d)] += 1;
    }
    counts
}
