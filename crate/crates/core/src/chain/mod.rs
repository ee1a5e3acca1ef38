//! The single-patch embedded random walk on `N^N`.
//!
//! From `(i_1, ..., i_N)` the walk moves up in coordinate `j` with probability
//! `phi c(i_j) / ((1+phi) N)`, down with probability `1 / ((1+phi) N)` when
//! `i_j > 0`, and stays put otherwise. Its reversible measure is
//!
//! ```text
//! nu(i_1, ..., i_N) = prod_{j : i_j > 0} phi^{i_j} c!(i_j - 1)
//! ```
//!
//! with total mass `(1 + phi sum_n phi^n c!(n))^N`.

mod band;
mod equiv;
mod trial;

pub use band::{tridiagonal, BandMatrix, Singular};
pub use equiv::min_mean_control;
pub use trial::{sample_trial_vector, trial_vector_mean_total, trial_vector_pmf};

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::series::{inverse_series, weighted_series, Inconclusive, SeriesSum, DEFAULT_TERM_BUDGET};
use crate::model::ControlSpec;
use crate::numeric::{CompensatedSum, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("the walk is not positive recurrent ({0:?}); E(tau0) is not finite or not certified")]
    NotPositiveRecurrent(ChainClass),
    #[error(transparent)]
    Inconclusive(#[from] Inconclusive),
    #[error("truncated system is singular: {0}")]
    Singular(#[from] Singular),
    #[error("truncated system too large: {states} states with bandwidth {bandwidth}")]
    TooLarge { states: usize, bandwidth: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// One-step law of the embedded walk from a fixed state.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution<S> {
    pub up: Vec<S>,
    pub down: Vec<S>,
    /// Rejected births plus blocked deaths at empty coordinates.
    pub stay: S,
}

impl<S: Scalar> StepDistribution<S> {
    pub fn total(&self) -> S {
        self.up
            .iter()
            .chain(&self.down)
            .fold(self.stay.clone(), |acc, p| acc + p.clone())
    }
}

/// Transition probabilities out of `state`, with zero coordinates reflecting.
pub fn embedded_step_distribution<S: Scalar>(phi: &S, control: &ControlSpec, state: &[u64]) -> StepDistribution<S> {
    let n = S::from_u64(state.len() as u64);
    let denom = (S::one() + phi.clone()) * n;
    let up: Vec<S> = state
        .iter()
        .map(|&i| phi.clone() * S::control(control, i) / denom.clone())
        .collect();
    let down: Vec<S> = state
        .iter()
        .map(|&i| if i > 0 { S::one() / denom.clone() } else { S::zero() })
        .collect();
    let moved = up.iter().chain(&down).fold(S::zero(), |acc, p| acc + p.clone());
    StepDistribution {
        up,
        down,
        stay: S::one() - moved,
    }
}

/// `nu(state)`; `nu(0, ..., 0) = 1`.
pub fn reversible_measure<S: Scalar>(phi: &S, control: &ControlSpec, state: &[u64]) -> S {
    let mut w = S::one();
    for &i in state {
        for l in 0..i {
            w = w * phi.clone() * S::control(control, l);
        }
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum ChainClass {
    Transient,
    PositiveRecurrent,
    /// Neither series is certified finite, or a tail could not be bounded.
    Inconclusive { reason: String },
}

/// Positive recurrent iff `sum phi^n c!(n) < inf`; transient if
/// `sum 1/(phi^n c!(n)) < inf`.
pub fn classify(phi: f64, control: &ControlSpec) -> ChainClass {
    match weighted_series(phi, control, DEFAULT_TERM_BUDGET) {
        Ok(SeriesSum::Finite(_)) => return ChainClass::PositiveRecurrent,
        Ok(SeriesSum::Infinite) => {}
        Err(e) => return ChainClass::Inconclusive { reason: e.to_string() },
    }
    match inverse_series(phi, control, DEFAULT_TERM_BUDGET) {
        Ok(SeriesSum::Finite(_)) => ChainClass::Transient,
        Ok(SeriesSum::Infinite) => ChainClass::Inconclusive {
            reason: "both series diverge".into(),
        },
        Err(e) => ChainClass::Inconclusive { reason: e.to_string() },
    }
}

/// `nu(N^N) = (1 + phi sum_n phi^n c!(n))^N`.
pub fn total_mass(phi: f64, control: &ControlSpec, n: usize) -> Result<SeriesSum, Inconclusive> {
    Ok(match weighted_series(phi, control, DEFAULT_TERM_BUDGET)? {
        SeriesSum::Finite(s) => SeriesSum::Finite((1.0 + phi * s).powi(n as i32)),
        SeriesSum::Infinite => SeriesSum::Infinite,
    })
}

/// Relative `nu`-mass allowed outside the default truncation box.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

const MAX_HEIGHT: u64 = 1_000_000;

/// Smallest `H >= 1` such that `nu{some i_j > H} / nu(N^N) < tolerance`.
pub fn default_height(phi: f64, control: &ControlSpec, n: usize, tolerance: f64) -> Result<u64, ChainError> {
    let total = match weighted_series(phi, control, DEFAULT_TERM_BUDGET)? {
        SeriesSum::Finite(s) => 1.0 + phi * s,
        SeriesSum::Infinite => return Err(ChainError::NotPositiveRecurrent(classify(phi, control))),
    };
    // Single-coordinate masses nu1(h) = phi^h c!(h-1).
    let mut mass = CompensatedSum::new();
    let mut w = 1.0;
    for h in 0..MAX_HEIGHT {
        if h > 0 {
            w *= phi * control.eval(h - 1);
        }
        mass.add(w);
        let missing = ((total - mass.value()) / total).max(0.0);
        let outside = -(n as f64 * (-missing).ln_1p()).exp_m1();
        let next = w * phi * control.eval(h);
        if h >= 1 && (outside < tolerance || next == 0.0) {
            return Ok(h);
        }
    }
    Err(Inconclusive {
        terms: MAX_HEIGHT,
        budget: MAX_HEIGHT,
    }
    .into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionTime {
    /// `E(tau0)` on `{0..H}^N`.
    pub value: f64,
    pub height: u64,
    /// The same quantity on `{0..H+5}^N`.
    pub value_h5: f64,
}

impl AbsorptionTime {
    pub fn sensitivity(&self) -> f64 {
        (self.value_h5 - self.value).abs()
    }
}

/// Largest `states * bandwidth^2` accepted by the banded solver.
const MAX_BAND_WORK: f64 = 2e10;

/// Expected number of embedded steps to reach the zero vector from `start`,
/// on the box `{0..H}^N` with up-moves at height `H` turned into holds.
///
/// `height = None` picks [`default_height`] (and at least the start heights).
pub fn expected_absorption_time(
    phi: f64,
    control: &ControlSpec,
    start: &[u64],
    height: Option<u64>,
) -> Result<AbsorptionTime, ChainError> {
    let n = start.len();
    if n == 0 {
        return Err(ChainError::Invalid("state needs at least one coordinate".into()));
    }
    match classify(phi, control) {
        ChainClass::PositiveRecurrent => {}
        other => return Err(ChainError::NotPositiveRecurrent(other)),
    }
    let h = match height {
        Some(h) => h.max(1),
        None => default_height(phi, control, n, DEFAULT_TAIL_TOLERANCE)?,
    }
    .max(start.iter().copied().max().unwrap_or(0));
    Ok(AbsorptionTime {
        value: absorption_on_box(phi, control, start, h)?,
        height: h,
        value_h5: absorption_on_box(phi, control, start, h + 5)?,
    })
}

fn absorption_on_box(phi: f64, control: &ControlSpec, start: &[u64], h: u64) -> Result<f64, ChainError> {
    let n = start.len();
    if start.iter().all(|&i| i == 0) {
        return Ok(0.0);
    }
    let side = h as usize + 1;
    // Rows are scaled by (1+phi) N so the coefficients are phi c(i) and 1.
    let scale = (1.0 + phi) * n as f64;
    let c: Vec<f64> = (0..=h).map(|i| control.eval(i)).collect();
    if n == 1 {
        let m = h as usize;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for i in 1..=m {
            let up = if i < m { phi * c[i] } else { 0.0 };
            lower[i - 1] = 1.0;
            upper[i - 1] = up;
            diag[i - 1] = 1.0 + up;
        }
        let x = tridiagonal(&lower, &diag, &upper, &vec![scale; m])?;
        return Ok(x[start[0] as usize - 1]);
    }
    let states = side
        .checked_pow(n as u32)
        .ok_or(ChainError::TooLarge {
            states: usize::MAX,
            bandwidth: usize::MAX,
        })?;
    let band = states / side;
    if states as f64 * (band as f64).powi(2) > MAX_BAND_WORK {
        return Err(ChainError::TooLarge {
            states,
            bandwidth: band,
        });
    }
    let mut a = BandMatrix::zeros(states, band);
    let mut rhs = vec![scale; states];
    let mut coords = vec![0usize; n];
    for s in 0..states {
        if s == 0 {
            a.add(0, 0, 1.0);
            rhs[0] = 0.0;
            continue;
        }
        let mut rest = s;
        for coord in coords.iter_mut() {
            *coord = rest % side;
            rest /= side;
        }
        let mut diag = 0.0;
        let mut stride = 1;
        for &i in &coords {
            if i + 1 < side {
                let up = phi * c[i];
                if up != 0.0 {
                    a.add(s, s + stride, -up);
                    diag += up;
                }
            }
            if i > 0 {
                a.add(s, s - stride, -1.0);
                diag += 1.0;
            }
            stride *= side;
        }
        a.add(s, s, diag);
    }
    let x = a.solve(rhs)?;
    let idx = start.iter().rev().fold(0usize, |acc, &i| acc * side + i as usize);
    Ok(x[idx])
}

/// Closed form `E_{e_1}(tau0) = (1+phi)(nu(N^N) - 1)/phi` from Kac's lemma.
pub fn expected_absorption_time_kac(phi: f64, control: &ControlSpec, n: usize) -> Result<SeriesSum, Inconclusive> {
    if phi == 0.0 {
        return Ok(SeriesSum::Finite(1.0));
    }
    Ok(match total_mass(phi, control, n)? {
        SeriesSum::Finite(m) => SeriesSum::Finite((1.0 + phi) * (m - 1.0) / phi),
        SeriesSum::Infinite => SeriesSum::Infinite,
    })
}

/// `(1+phi) / (2d E_{e_1}(tau0))`: below this `lambda` the process dies out.
pub fn subcritical_lambda_bound(
    phi: f64,
    control: &ControlSpec,
    n: usize,
    d: usize,
    height: Option<u64>,
) -> Result<(f64, AbsorptionTime), ChainError> {
    let mut start = vec![0u64; n];
    start[0] = 1;
    let e = expected_absorption_time(phi, control, &start, height)?;
    Ok(((1.0 + phi) / (2.0 * d as f64 * e.value), e))
}

/// `P(hit H before 0)` from one particle for `N = 1`, by a tridiagonal solve.
pub fn escape_probability(phi: f64, control: &ControlSpec, height: u64) -> Result<f64, ChainError> {
    if height < 2 {
        return Ok(if height == 1 { 1.0 } else { 0.0 });
    }
    // Unknowns x_1..x_{H-1}; x_0 = 0, x_H = 1.
    let m = height as usize - 1;
    let mut lower = vec![1.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for i in 1..=m {
        let up = phi * control.eval(i as u64);
        upper[i - 1] = up;
        diag[i - 1] = 1.0 + up;
    }
    lower[0] = 0.0;
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = upper[m - 1];
    upper[m - 1] = 0.0;
    Ok(tridiagonal(&lower, &diag, &upper, &rhs)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Escape {
    pub probability: f64,
    pub height: u64,
    /// Value at `height / 2`.
    pub previous: f64,
}

/// Doubles `H` from `start` until two successive values differ by less than `tol`.
pub fn escape_probability_converged(phi: f64, control: &ControlSpec, start: u64, tol: f64) -> Result<Escape, ChainError> {
    let mut h = start.max(2);
    let mut prev = escape_probability(phi, control, h)?;
    while h < (1 << 26) {
        h *= 2;
        let p = escape_probability(phi, control, h)?;
        if (p - prev).abs() < tol {
            return Ok(Escape {
                probability: p,
                height: h,
                previous: prev,
            });
        }
        prev = p;
    }
    Err(Inconclusive {
        terms: h,
        budget: 1 << 26,
    }
    .into())
}

/// Draws one embedded step in place.
pub fn embedded_step<R: Rng + ?Sized>(phi: f64, control: &ControlSpec, state: &mut [u64], rng: &mut R) {
    let n = state.len();
    let j = rng.random_range(0..n);
    // Coordinate j is chosen with probability 1/N; then up with phi c/(1+phi), down with 1/(1+phi).
    let u = rng.random::<f64>() * (1.0 + phi);
    if u < 1.0 {
        if state[j] > 0 {
            state[j] -= 1;
        }
    } else if u - 1.0 < phi * control.eval(state[j]) {
        state[j] += 1;
    }
}

/// Number of embedded steps until the zero vector, or `None` past `max_steps`.
pub fn sample_absorption_steps<R: Rng + ?Sized>(
    phi: f64,
    control: &ControlSpec,
    start: &[u64],
    max_steps: u64,
    rng: &mut R,
) -> Option<u64> {
    let mut state = start.to_vec();
    let mut steps = 0;
    while state.iter().any(|&i| i > 0) {
        if steps == max_steps {
            return None;
        }
        embedded_step(phi, control, &mut state, rng);
        steps += 1;
    }
    Some(steps)
}

/// Classification and bound for one `(phi, c)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub phi: f64,
    pub family: String,
    pub class: ChainClass,
    pub lambda_star: Option<f64>,
    pub e_tau0: Option<f64>,
}

impl BoundRow {
    pub fn compute(phi: f64, control: &ControlSpec, n: usize, d: usize) -> Self {
        let class = classify(phi, control);
        let bound = match class {
            ChainClass::PositiveRecurrent => subcritical_lambda_bound(phi, control, n, d, None).ok(),
            _ => None,
        };
        Self {
            phi,
            family: control.family_name().to_string(),
            class,
            lambda_star: bound.as_ref().map(|b| b.0),
            e_tau0: bound.map(|b| b.1.value),
        }
    }
}

pub fn class_name(class: &ChainClass) -> &'static str {
    match class {
        ChainClass::Transient => "Transient",
        ChainClass::PositiveRecurrent => "PositiveRecurrent",
        ChainClass::Inconclusive { .. } => "Inconclusive",
    }
}

/// `phi,family,class,lambda_star,E_tau0`.
pub fn write_bounds_csv<W: Write>(out: W, rows: &[BoundRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi", "family", "class", "lambda_star", "E_tau0"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.phi.to_string(),
            r.family.clone(),
            class_name(&r.class).to_string(),
            opt(r.lambda_star),
            opt(r.e_tau0),
        ])?;
    }
    w.flush()?;
    Ok(())
}
