//! Expected occupancy of the branching random walk that dominates the
//! process: each particle dies at rate 1, has an offspring on its own site at
//! rate `phi` and on each neighbouring site at rate `lambda`.
//!
//! Starting from one particle at the origin,
//!
//! ```text
//! E(x, t) = sum_n sum_k mu^{(n,k)}(0, x) phi^k lambda^{n-k} t^n e^{-t} / n!
//!         = e^{(r-1) t} sum_n Pois(n; r t) P_n(x),           r = phi + 2 d lambda,
//! ```
//!
//! where `mu^{(n,k)}` counts lattice paths of `n` steps of which `k` are loops
//! and `P_n` is the law of the lazy walk that stays with probability `phi/r`.

use std::io::Write;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::numeric::{CompensatedSum, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BrwError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("Poisson tail bound {bound:e} above tolerance {tolerance:e}; use n_max >= {suggested}")]
    TailTooLarge { bound: f64, tolerance: f64, suggested: usize },
    #[error("mass {mass:e} on the box boundary exceeds tolerance {tolerance:e}; enlarge the radius")]
    BoundaryMass { mass: f64, tolerance: f64 },
}

/// Dense scalar field on the box `{|x|_inf <= radius}` of `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub d: usize,
    pub radius: usize,
    pub values: Vec<T>,
}

impl<T: Clone> Field<T> {
    pub fn filled(d: usize, radius: usize, value: T) -> Self {
        Self {
            d,
            radius,
            values: vec![value; (2 * radius + 1).pow(d as u32)],
        }
    }

    fn width(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.d {
            return None;
        }
        let r = self.radius as i64;
        let mut idx = 0usize;
        for &c in x.iter().rev() {
            if c.abs() > r {
                return None;
            }
            idx = idx * self.width() + (c + r) as usize;
        }
        Some(idx)
    }

    pub fn coordinates(&self, mut idx: usize) -> Vec<i64> {
        let w = self.width();
        (0..self.d)
            .map(|_| {
                let c = (idx % w) as i64 - self.radius as i64;
                idx /= w;
                c
            })
            .collect()
    }

    pub fn get(&self, x: &[i64]) -> Option<&T> {
        self.index(x).map(|i| &self.values[i])
    }

    /// Indices of the in-box neighbours of cell `idx`.
    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.width();
        let x = self.coordinates(idx);
        let r = self.radius as i64;
        let mut stride = 1;
        let mut out = Vec::with_capacity(2 * self.d);
        for &c in &x {
            if c > -r {
                out.push(idx - stride);
            }
            if c < r {
                out.push(idx + stride);
            }
            stride *= w;
        }
        out.into_iter()
    }
}

impl Field<f64> {
    pub fn total(&self) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value()
    }

    /// Writes `x1,...,xd,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.d).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = self.coordinates(i).iter().map(|c| c.to_string()).collect();
            rec.push(v.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact `mu^{(n,k)}(0, x)` for `0 <= k <= n <= n_max` on a box of radius `radius`.
#[derive(Clone, Debug)]
pub struct PathCountTable {
    pub d: usize,
    pub n_max: usize,
    pub radius: usize,
    /// `counts[n][k]`.
    counts: Vec<Vec<Field<BigUint>>>,
}

impl PathCountTable {
    /// Whether paths were cut by the box (`radius < n_max`).
    pub fn clipped(&self) -> bool {
        self.radius < self.n_max
    }

    pub fn get(&self, n: usize, k: usize, x: &[i64]) -> BigUint {
        if k > n || n > self.n_max {
            return BigUint::zero();
        }
        self.counts[n][k].get(x).cloned().unwrap_or_default()
    }

    pub fn field(&self, n: usize, k: usize) -> &Field<BigUint> {
        &self.counts[n][k]
    }
}

/// Each step is either a loop or a unit move; paths leaving the box are dropped.
pub fn path_counts(d: usize, n_max: usize, radius: usize) -> PathCountTable {
    let mut origin = Field::filled(d, radius, BigUint::zero());
    let o = origin.index(&vec![0; d]).expect("origin is in the box");
    origin.values[o] = BigUint::one();
    let mut counts = vec![vec![origin]];
    for n in 1..=n_max {
        let prev = &counts[n - 1];
        let mut row = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut f = Field::filled(d, radius, BigUint::zero());
            for idx in 0..f.values.len() {
                let mut v = BigUint::zero();
                if k >= 1 {
                    v += &prev[k - 1].values[idx];
                }
                if k < n {
                    for j in prev[k].neighbours(idx) {
                        v += &prev[k].values[j];
                    }
                }
                f.values[idx] = v;
            }
            row.push(f);
        }
        counts.push(row);
    }
    PathCountTable {
        d,
        n_max,
        radius,
        counts,
    }
}

/// `P(W_n = x)` for the lazy walk: stay with probability `phi/r`, move to each
/// neighbour with probability `lambda/r`, `r = phi + 2 d lambda`.
pub fn lazy_walk_prob<S: Scalar>(phi: &S, lambda: &S, d: usize, n: usize, x: &[i64]) -> S {
    lazy_walk_field(phi, lambda, d, n, n).get(x).cloned().unwrap_or_else(S::zero)
}

/// The law of `W_n` on the box of radius `radius` (exact if `radius >= n`).
pub fn lazy_walk_field<S: Scalar>(phi: &S, lambda: &S, d: usize, n: usize, radius: usize) -> Field<S> {
    lazy_walk_fields(phi, lambda, d, n, radius).pop().expect("at least step 0")
}

/// Laws of `W_0, ..., W_n`.
pub fn lazy_walk_fields<S: Scalar>(phi: &S, lambda: &S, d: usize, n: usize, radius: usize) -> Vec<Field<S>> {
    let r = phi.clone() + S::from_u64(2 * d as u64) * lambda.clone();
    let stay = phi.clone() / r.clone();
    let step = lambda.clone() / r;
    let mut f = Field::filled(d, radius, S::zero());
    let o = f.index(&vec![0; d]).expect("origin is in the box");
    f.values[o] = S::one();
    let mut out = vec![f];
    for _ in 0..n {
        let prev = out.last().expect("nonempty");
        let mut next = Field::filled(d, radius, S::zero());
        for idx in 0..next.values.len() {
            let mut v = stay.clone() * prev.values[idx].clone();
            for j in prev.neighbours(idx) {
                v = v + step.clone() * prev.values[j].clone();
            }
            next.values[idx] = v;
        }
        out.push(next);
    }
    out
}

/// `P(Pois(mean) > n)`, summed from the pmf.
pub fn poisson_tail(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    // pmf at n + 1 via logs, then forward recursion until negligible.
    let k0 = n as f64 + 1.0;
    let ln_fact: f64 = (2..=n + 1).map(|k| (k as f64).ln()).sum();
    let mut term = (k0 * mean.ln() - mean - ln_fact).exp();
    let mut acc = CompensatedSum::new();
    let mut k = k0;
    while term > 0.0 {
        acc.add(term);
        k += 1.0;
        term *= mean / k;
        if k > mean && term < 1e-300 {
            break;
        }
    }
    acc.value()
}

/// Smallest `n_max` whose bound `e^{(r-1)t} P(Pois(r t) > n_max)` is below `tol`.
pub fn n_max_for(phi: f64, lambda: f64, d: usize, t: f64, tol: f64) -> usize {
    let r = phi + 2.0 * d as f64 * lambda;
    let growth = ((r - 1.0) * t).exp();
    let mut n = (r * t).ceil() as usize;
    while growth * poisson_tail(r * t, n) > tol {
        n += 1;
    }
    n
}

/// Largest `n_max` for which the exact integer counts are used.
pub const EXACT_COUNT_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub field: Field<f64>,
    /// Upper bound on the omitted part of the series, at every `x`.
    pub tail_bound: f64,
    pub n_max: usize,
}

/// `E(x, t)` on the box of radius `min(n_max, radius)`.
pub fn brw_expectation_field(
    phi: f64,
    lambda: f64,
    d: usize,
    t: f64,
    n_max: usize,
    tolerance: f64,
) -> Result<Expectation, BrwError> {
    if !(phi >= 0.0 && lambda >= 0.0 && t >= 0.0) || d == 0 {
        return Err(BrwError::Invalid("need phi, lambda, t >= 0 and d >= 1".into()));
    }
    let r = phi + 2.0 * d as f64 * lambda;
    let growth = ((r - 1.0) * t).exp();
    let tail_bound = growth * poisson_tail(r * t, n_max);
    if tail_bound > tolerance {
        return Err(BrwError::TailTooLarge {
            bound: tail_bound,
            tolerance,
            suggested: n_max_for(phi, lambda, d, t, tolerance),
        });
    }
    let mut field = Field::filled(d, n_max, 0.0);
    if r == 0.0 {
        let o = field.index(&vec![0; d]).expect("origin");
        field.values[o] = (-t).exp();
        return Ok(Expectation {
            field,
            tail_bound,
            n_max,
        });
    }
    let laws = walk_laws(phi, lambda, d, n_max);
    // Poisson weights e^{(r-1)t} Pois(n; rt) = e^{-t} (rt)^n / n!.
    let mut w = (-t).exp();
    let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); field.values.len()];
    for (n, law) in laws.iter().enumerate() {
        if n > 0 {
            w *= r * t / n as f64;
        }
        for (a, p) in acc.iter_mut().zip(&law.values) {
            a.add(w * p);
        }
    }
    for (v, a) in field.values.iter_mut().zip(&acc) {
        *v = a.value();
    }
    Ok(Expectation {
        field,
        tail_bound,
        n_max,
    })
}

/// `P_n` on the radius-`n_max` box, from exact path counts when `n_max` is
/// small and from the floating walk recursion otherwise.
fn walk_laws(phi: f64, lambda: f64, d: usize, n_max: usize) -> Vec<Field<f64>> {
    if n_max > EXACT_COUNT_LIMIT {
        return lazy_walk_fields(&phi, &lambda, d, n_max, n_max);
    }
    let table = path_counts(d, n_max, n_max);
    let r = phi + 2.0 * d as f64 * lambda;
    let (a, b) = (phi / r, lambda / r);
    (0..=n_max)
        .map(|n| {
            let mut f = Field::filled(d, n_max, 0.0);
            for k in 0..=n {
                let weight = a.powi(k as i32) * b.powi((n - k) as i32);
                if weight == 0.0 {
                    continue;
                }
                for (v, mu) in f.values.iter_mut().zip(&table.field(n, k).values) {
                    if !mu.is_zero() {
                        *v += weight * mu.to_f64().unwrap_or(f64::INFINITY);
                    }
                }
            }
            f
        })
        .collect()
}

/// `E(x, t)` at one site.
pub fn brw_expectation(phi: f64, lambda: f64, d: usize, x: &[i64], t: f64, n_max: usize, tolerance: f64) -> Result<f64, BrwError> {
    let e = brw_expectation_field(phi, lambda, d, t, n_max, tolerance)?;
    Ok(e.field.get(x).copied().unwrap_or(0.0))
}

/// RK4 integration of `E' = (phi - 1) E + lambda sum_{y ~ x} E(y)` on the box
/// of radius `radius`, zero outside, from `E(., 0) = delta_0`.
///
/// Fails when the mass on the outermost layer exceeds `boundary_tolerance`
/// relative to the total.
pub fn brw_expectation_ode(
    phi: f64,
    lambda: f64,
    d: usize,
    radius: usize,
    t: f64,
    dt: f64,
    boundary_tolerance: f64,
) -> Result<Field<f64>, BrwError> {
    if !(dt > 0.0 && t >= 0.0) {
        return Err(BrwError::Invalid("need dt > 0 and t >= 0".into()));
    }
    let mut e = Field::filled(d, radius, 0.0);
    let o = e.index(&vec![0; d]).expect("origin");
    e.values[o] = 1.0;
    let neighbours: Vec<Vec<usize>> = (0..e.values.len()).map(|i| e.neighbours(i).collect()).collect();
    let deriv = |u: &[f64], out: &mut [f64]| {
        for (i, nb) in neighbours.iter().enumerate() {
            out[i] = (phi - 1.0) * u[i] + lambda * nb.iter().map(|&j| u[j]).sum::<f64>();
        }
    };
    let steps = (t / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let len = e.values.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let u = &mut e.values;
    for _ in 0..steps {
        deriv(u, &mut k1);
        for i in 0..len {
            tmp[i] = u[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = u[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = u[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..len {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let total = e.total();
    let r = radius as i64;
    let boundary: f64 = (0..e.values.len())
        .filter(|&i| e.coordinates(i).iter().any(|c| c.abs() == r))
        .map(|i| e.values[i])
        .sum();
    if total > 0.0 && boundary / total > boundary_tolerance {
        return Err(BrwError::BoundaryMass {
            mass: boundary / total,
            tolerance: boundary_tolerance,
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    use crate::numeric::{exact_from_f64, ratio_from_u64};

    fn binomial(n: usize, k: usize) -> BigUint {
        (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
    }

    #[test]
    fn small_counts() {
        let t = path_counts(1, 3, 3);
        assert_eq!(t.get(0, 0, &[0]), BigUint::one());
        assert_eq!(t.get(2, 0, &[0]), BigUint::from(2u32));
        assert_eq!(t.get(3, 1, &[0]), BigUint::from(6u32));
        assert_eq!(t.get(3, 2, &[2]), BigUint::zero());
        assert!(!t.clipped());
        assert!(path_counts(1, 3, 2).clipped());
    }

    #[test]
    fn binomial_factorisation_and_symmetry() {
        for d in 1..=2 {
            let t = path_counts(d, 12, 12);
            for n in 0..=12 {
                for k in 0..=n {
                    let f = t.field(n, k);
                    let s = t.field(n - k, 0);
                    for (idx, v) in f.values.iter().enumerate() {
                        let x = f.coordinates(idx);
                        assert_eq!(*v, binomial(n, k) * &s.values[idx], "d={d} n={n} k={k} x={x:?}");
                        let l1: i64 = x.iter().map(|c| c.abs()).sum();
                        if l1 > (n - k) as i64 {
                            assert!(v.is_zero());
                        }
                        let flipped: Vec<i64> = x.iter().map(|c| -c).collect();
                        assert_eq!(t.get(n, k, &flipped), *v);
                        let swapped: Vec<i64> = x.iter().rev().copied().collect();
                        assert_eq!(t.get(n, k, &swapped), *v);
                    }
                }
            }
        }
    }

    #[test]
    fn counts_give_the_lazy_walk_law_exactly() {
        let t1 = path_counts(1, 12, 12);
        let t2 = path_counts(2, 12, 12);
        for (phi, lambda) in [(1.0, 1.0), (2.0, 0.5), (0.3, 1.7)] {
            let (p, l) = (exact_from_f64(phi), exact_from_f64(lambda));
            for (d, t) in [(1, &t1), (2, &t2)] {
                let r = p.clone() + ratio_from_u64(2 * d as u64) * l.clone();
                let laws = lazy_walk_fields(&p, &l, d, 12, 12);
                for (n, law) in laws.iter().enumerate() {
                    for (idx, prob) in law.values.iter().enumerate() {
                        let x = law.coordinates(idx);
                        let sum = (0..=n).fold(BigRational::from_integer(0.into()), |acc, k| {
                            let mu = BigRational::from_integer(t.get(n, k, &x).into());
                            acc + mu * p.powu(k as u32) * l.powu((n - k) as u32)
                        });
                        assert_eq!(sum / r.powu(n as u32), *prob);
                    }
                    let total = law.values.iter().fold(BigRational::from_integer(0.into()), |a, v| a + v);
                    assert_eq!(total, BigRational::from_integer(1.into()));
                }
            }
        }
    }

    #[test]
    fn lazy_walk_examples() {
        assert_eq!(lazy_walk_prob(&0.7, &0.2, 2, 0, &[0, 0]), 1.0);
        let third = 1.0 / 3.0;
        for x in [-1, 0, 1] {
            assert!((lazy_walk_prob(&1.0, &1.0, 1, 1, &[x]) - third).abs() < 1e-15);
        }
    }

    #[test]
    fn expectation_at_time_zero_is_a_delta() {
        let e = brw_expectation_field(1.0, 1.0, 2, 0.0, 4, 1e-12).unwrap();
        assert_eq!(e.field.get(&[0, 0]), Some(&1.0));
        assert_eq!(e.field.total(), 1.0);
    }

    #[test]
    fn total_mass_grows_exponentially() {
        for (phi, lambda, d) in [(1.0, 1.0, 1), (2.0, 0.5, 1), (0.4, 0.3, 2)] {
            for t in [0.5, 1.0, 2.0, 3.0] {
                let n = n_max_for(phi, lambda, d, t, 1e-12);
                let e = brw_expectation_field(phi, lambda, d, t, n, 1e-10).unwrap();
                let expected = ((phi + 2.0 * d as f64 * lambda - 1.0) * t).exp();
                assert!((e.field.total() - expected).abs() < 1e-9 * expected);
            }
        }
    }

    #[test]
    fn exact_and_floating_laws_agree() {
        let a = walk_laws(1.3, 0.6, 2, 20);
        let b = lazy_walk_fields(&1.3, &0.6, 2, 20, 20);
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.values.iter().zip(&y.values) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tail_error_suggests_a_larger_cutoff() {
        let err = brw_expectation_field(1.0, 1.0, 1, 3.0, 5, 1e-8).unwrap_err();
        let BrwError::TailTooLarge { suggested, .. } = err else {
            panic!("expected a tail error, got {err:?}")
        };
        assert!(brw_expectation_field(1.0, 1.0, 1, 3.0, suggested, 1e-8).is_ok());
    }

    #[test]
    fn series_matches_ode() {
        for (phi, lambda) in [(1.0, 1.0), (2.0, 0.5)] {
            for t in [1.0, 2.0, 3.0] {
                let n = n_max_for(phi, lambda, 1, t, 1e-14);
                let s = brw_expectation_field(phi, lambda, 1, t, n, 1e-12).unwrap();
                let o = brw_expectation_ode(phi, lambda, 1, 25, t, 1e-3, 1e-6).unwrap();
                let peak = o.values.iter().copied().fold(0.0, f64::max);
                for x in -25i64..=25 {
                    let ode = o.get(&[x]).copied().unwrap();
                    let series = s.field.get(&[x]).copied().unwrap_or(0.0);
                    if ode > 1e-6 * peak {
                        assert!((series - ode).abs() < 1e-6 * ode, "x={x} t={t}: {series} vs {ode}");
                    }
                }
            }
        }
    }

    #[test]
    fn ode_special_cases() {
        let e = brw_expectation_ode(1.0, 0.0, 1, 2, 5.0, 1e-2, 1e-6).unwrap();
        assert!((e.get(&[0]).unwrap() - 1.0).abs() < 1e-14);
        let e = brw_expectation_ode(0.0, 0.0, 2, 1, 2.0, 1e-3, 1e-6).unwrap();
        assert!((e.get(&[0, 0]).unwrap() - (-2.0f64).exp()).abs() < 1e-12);
        assert!(matches!(
            brw_expectation_ode(1.0, 1.0, 1, 2, 3.0, 1e-2, 1e-6),
            Err(BrwError::BoundaryMass { .. })
        ));
    }

    #[test]
    fn growth_at_a_neighbour_is_exponential_times_polynomial() {
        // log E(1, t) - (r - 1) t + (d/2) log t stays bounded as t grows.
        let (phi, lambda) = (0.5, 0.5);
        let r: f64 = phi + 2.0 * lambda;
        let corrected: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t: &f64| {
                let n = n_max_for(phi, lambda, 1, t, 1e-10);
                let e = brw_expectation(phi, lambda, 1, &[1], t, n, 1e-9).unwrap();
                e.ln() - (r - 1.0) * t + 0.5 * t.ln()
            })
            .collect();
        for w in corrected.windows(2) {
            assert!((w[0] - w[1]).abs() < 0.1, "{corrected:?}");
        }
    }

    #[test]
    fn monotone_in_both_rates() {
        let grid = [0.2, 0.6, 1.0];
        for t in [0.5, 1.5] {
            for &phi in &grid {
                for &lambda in &grid {
                    let f = |p: f64, l: f64| brw_expectation_field(p, l, 1, t, 40, 1e-9).unwrap().field;
                    let base = f(phi, lambda);
                    let more_phi = f(phi + 0.1, lambda);
                    let more_lambda = f(phi, lambda + 0.1);
                    for i in 0..base.values.len() {
                        assert!(more_phi.values[i] >= base.values[i] * (1.0 - 1e-12));
                        assert!(more_lambda.values[i] >= base.values[i] * (1.0 - 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn csv_grid() {
        let e = brw_expectation_field(1.0, 1.0, 1, 0.0, 1, 1.0).unwrap();
        let mut buf = Vec::new();
        e.field.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,value\n-1,0\n0,1\n1,0\n");
    }
}
