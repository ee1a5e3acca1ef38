//! Mean-field model of the single-site (`N = 1`) process.
//!
//! `u_i` is the fraction of sites holding `i` individuals. For `i >= 1`
//!
//! ```text
//! u_i' = (i+1) u_{i+1} + (i-1) c(i-1) phi u_{i-1} - i u_i (1 + phi c(i)) [+ lambda u_0 sum_j j u_j if i = 1]
//! u_0' = u_1 - lambda u_0 sum_j j u_j
//! ```
//!
//! The logistic system is the special case `c(i) = max(0, 1 - i/kappa)`,
//! which closes exactly at `K = kappa`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::series::{weighted_series, weighted_tail, Inconclusive, SeriesSum, DEFAULT_TERM_BUDGET};
use crate::model::ControlSpec;
use crate::numeric::CompensatedSum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor", rename_all = "snake_case")]
pub enum Flavor {
    Logistic { kappa: u64 },
    SelfReg { control: ControlSpec },
}

impl Flavor {
    pub fn control(&self) -> ControlSpec {
        match self {
            Flavor::Logistic { kappa } => ControlSpec::Logistic { kappa: *kappa },
            Flavor::SelfReg { control } => control.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeanFieldError {
    #[error("lambda must be > 0 (got {0})")]
    ZeroLambda(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Inconclusive(#[from] Inconclusive),
    #[error("normalisation series diverges; no normalised profile exists")]
    DivergentNormalisation,
    #[error("truncation leak {leak:e} exceeds tolerance {tolerance:e} at t = {time} (u_K = {u_last:e})")]
    Leak {
        leak: f64,
        tolerance: f64,
        time: f64,
        u_last: f64,
    },
}

/// Concentrations `(u_0, ..., u_K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldProfile {
    pub flavor: Flavor,
    pub u: Vec<f64>,
}

impl MeanFieldProfile {
    pub fn truncation(&self) -> usize {
        self.u.len() - 1
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().copied().collect::<CompensatedSum>().value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stationary {
    Endemic(MeanFieldProfile),
    /// `u_0 >= 1`: the mean field predicts extinction.
    NoEndemicEquilibrium { u0: f64 },
}

fn check_lambda(lambda: f64) -> Result<(), MeanFieldError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(MeanFieldError::ZeroLambda(lambda))
    }
}

/// `(1/lambda) (1 + sum_{i=1}^{kappa-1} phi^i prod_{j=1}^{i} (1 - j/kappa))^{-1}`.
pub fn u0_logistic(lambda: f64, phi: f64, kappa: u64) -> Result<f64, MeanFieldError> {
    check_lambda(lambda)?;
    if kappa == 0 {
        return Err(MeanFieldError::Invalid("kappa must be >= 1".into()));
    }
    let k = kappa as f64;
    let mut sum = CompensatedSum::new();
    sum.add(1.0);
    let mut term = 1.0;
    for i in 1..kappa {
        term *= phi * (1.0 - i as f64 / k);
        if term == 0.0 {
            break;
        }
        sum.add(term);
    }
    Ok(1.0 / (lambda * sum.value()))
}

/// `1 / (lambda sum_i phi^i c!(i))`, zero when the series diverges.
pub fn u0_selfreg(lambda: f64, phi: f64, control: &ControlSpec, budget: u64) -> Result<f64, MeanFieldError> {
    check_lambda(lambda)?;
    control.validate().map_err(|e| MeanFieldError::Invalid(e.to_string()))?;
    Ok(match weighted_series(phi, control, budget)? {
        SeriesSum::Finite(s) => 1.0 / (lambda * s),
        SeriesSum::Infinite => 0.0,
    })
}

/// `u_0` for either flavour.
pub fn u0(flavor: &Flavor, lambda: f64, phi: f64) -> Result<f64, MeanFieldError> {
    match flavor {
        Flavor::Logistic { kappa } => u0_logistic(lambda, phi, *kappa),
        Flavor::SelfReg { control } => u0_selfreg(lambda, phi, control, DEFAULT_TERM_BUDGET),
    }
}

/// Relative size below which the tail of the profile is dropped.
const PROFILE_TAIL: f64 = 1e-16;

/// Normalised stationary profile, `u_i = (phi^{i-1}/i) c!(i-1) u_1` for `i >= 1`.
///
/// For the self-regulating flavour the profile is cut at the first `K` whose
/// remaining weight `sum_{i >= K} phi^i c!(i)` is below `1e-16` relative.
pub fn stationary_profile(flavor: &Flavor, lambda: f64, phi: f64) -> Result<Stationary, MeanFieldError> {
    let u0 = u0(flavor, lambda, phi)?;
    if u0 >= 1.0 {
        return Ok(Stationary::NoEndemicEquilibrium { u0 });
    }
    let control = flavor.control();
    // w[i-1] = phi^{i-1} c!(i-1) / i
    let mut w = Vec::new();
    let mut g = 1.0;
    match flavor {
        Flavor::Logistic { kappa } => {
            for i in 1..=*kappa {
                if i > 1 {
                    g *= phi * control.eval(i - 1);
                }
                w.push(g / i as f64);
            }
        }
        Flavor::SelfReg { .. } => {
            let total = match weighted_series(phi, &control, DEFAULT_TERM_BUDGET)? {
                SeriesSum::Finite(s) => s,
                SeriesSum::Infinite => return Err(MeanFieldError::DivergentNormalisation),
            };
            let mut i = 1u64;
            loop {
                if i > 1 {
                    g *= phi * control.eval(i - 1);
                }
                w.push(g / i as f64);
                if g == 0.0 {
                    w.pop();
                    break;
                }
                if i % 16 == 0 {
                    let rest = weighted_tail(phi, &control, i, DEFAULT_TERM_BUDGET)?
                        .finite()
                        .unwrap_or(f64::INFINITY);
                    if rest < PROFILE_TAIL * total {
                        break;
                    }
                }
                if i > 10_000_000 {
                    return Err(Inconclusive {
                        terms: i,
                        budget: 10_000_000,
                    }
                    .into());
                }
                i += 1;
            }
        }
    }
    let norm: f64 = w.iter().copied().collect::<CompensatedSum>().value();
    let u1 = (1.0 - u0) / norm;
    let mut u = Vec::with_capacity(w.len() + 1);
    u.push(u0);
    u.extend(w.iter().map(|wi| wi * u1));
    Ok(Stationary::Endemic(MeanFieldProfile {
        flavor: flavor.clone(),
        u,
    }))
}

/// Right-hand side of the truncated system. Returns the outflow rate from
/// state `K` to the missing state `K + 1`.
pub fn rhs(control: &[f64], lambda: f64, phi: f64, u: &[f64], du: &mut [f64]) -> f64 {
    let k = u.len() - 1;
    let mean: f64 = u.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).sum();
    let infect = lambda * u[0] * mean;
    du[0] = if k >= 1 { u[1] } else { 0.0 } - infect;
    for i in 1..=k {
        let fi = i as f64;
        let mut v = -fi * u[i] * (1.0 + phi * control[i]);
        if i < k {
            v += (fi + 1.0) * u[i + 1];
        }
        if i >= 2 {
            v += (fi - 1.0) * control[i - 1] * phi * u[i - 1];
        } else {
            v += infect;
        }
        du[i] = v;
    }
    k as f64 * phi * control[k] * u[k]
}

/// Sup norm of the right-hand side at `u`.
pub fn residual(flavor: &Flavor, lambda: f64, phi: f64, u: &[f64]) -> f64 {
    let c = control_values(flavor, u.len());
    let mut du = vec![0.0; u.len()];
    rhs(&c, lambda, phi, u, &mut du);
    du.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn control_values(flavor: &Flavor, len: usize) -> Vec<f64> {
    let spec = flavor.control();
    (0..len as u64).map(|i| spec.eval(i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integration {
    pub t_end: f64,
    pub dt: f64,
    /// Keep every `record_every`-th step (the final state is always kept).
    pub record_every: usize,
    /// Largest tolerated mass lost through the truncation boundary.
    pub leak_tolerance: f64,
}

impl Default for Integration {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            dt: 0.01,
            record_every: 100,
            leak_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub flavor: Flavor,
    pub times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    /// Mass that left through state `K`.
    pub leak: f64,
    /// Largest `|mass(t) + leak(t) - mass(0)|` seen.
    pub mass_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.profiles.last().expect("trajectory always holds the initial state")
    }

    /// Largest sup-norm deviation from `reference` over the recorded states.
    pub fn max_deviation(&self, reference: &[f64]) -> f64 {
        self.profiles
            .iter()
            .flat_map(|p| p.iter().zip(reference).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Classical fixed-step RK4 on `(u_0, ..., u_K)` with `K = u_init.len() - 1`.
///
/// For the logistic flavour `K` must equal `kappa`.
pub fn integrate_meanfield(
    flavor: &Flavor,
    lambda: f64,
    phi: f64,
    u_init: &[f64],
    opts: &Integration,
) -> Result<Trajectory, MeanFieldError> {
    if u_init.len() < 2 {
        return Err(MeanFieldError::Invalid("need at least u_0 and u_1".into()));
    }
    if let Flavor::Logistic { kappa } = flavor {
        if u_init.len() as u64 != kappa + 1 {
            return Err(MeanFieldError::Invalid(format!(
                "logistic system has K = kappa = {kappa}, got {} states",
                u_init.len()
            )));
        }
    }
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.record_every == 0 {
        return Err(MeanFieldError::Invalid("need dt > 0, t_end >= 0, record_every >= 1".into()));
    }
    if u_init.iter().any(|v| !(*v >= 0.0)) || !(lambda >= 0.0) || !(phi >= 0.0) {
        return Err(MeanFieldError::Invalid("concentrations and rates must be >= 0".into()));
    }
    let n = u_init.len();
    let c = control_values(flavor, n);
    let mass0: f64 = u_init.iter().sum();
    let steps = (opts.t_end / opts.dt).round() as usize;
    let dt = if steps == 0 { 0.0 } else { opts.t_end / steps as f64 };

    let mut u = u_init.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut out = Trajectory {
        flavor: flavor.clone(),
        times: vec![0.0],
        profiles: vec![u.clone()],
        leak: 0.0,
        mass_drift: 0.0,
    };
    for step in 1..=steps {
        let l1 = rhs(&c, lambda, phi, &u, &mut k1);
        axpy(&u, 0.5 * dt, &k1, &mut tmp);
        let l2 = rhs(&c, lambda, phi, &tmp, &mut k2);
        axpy(&u, 0.5 * dt, &k2, &mut tmp);
        let l3 = rhs(&c, lambda, phi, &tmp, &mut k3);
        axpy(&u, dt, &k3, &mut tmp);
        let l4 = rhs(&c, lambda, phi, &tmp, &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.leak += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        let t = step as f64 * dt;
        let mass: f64 = u.iter().sum();
        out.mass_drift = out.mass_drift.max((mass + out.leak - mass0).abs());
        if out.leak > opts.leak_tolerance {
            return Err(MeanFieldError::Leak {
                leak: out.leak,
                tolerance: opts.leak_tolerance,
                time: t,
                u_last: u[n - 1],
            });
        }
        if step % opts.record_every == 0 || step == steps {
            out.times.push(t);
            out.profiles.push(u.clone());
        }
    }
    Ok(out)
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

/// Smallest truncation `K` for the self-regulating system such that the
/// stationary profile (or, without one, the geometric weight
/// `phi^K c!(K)`) falls below `threshold`. Capped at `max_k`.
pub fn selfreg_truncation(lambda: f64, phi: f64, control: &ControlSpec, threshold: f64, max_k: usize) -> usize {
    let flavor = Flavor::SelfReg {
        control: control.clone(),
    };
    if let Ok(Stationary::Endemic(p)) = stationary_profile(&flavor, lambda, phi) {
        if let Some(k) = p.u.iter().skip(1).position(|&v| v < threshold) {
            return (k + 1).clamp(1, max_k);
        }
        return p.truncation().clamp(1, max_k);
    }
    let mut g = 1.0;
    for k in 1..max_k {
        g *= phi * control.eval(k as u64);
        if g < threshold {
            return k;
        }
    }
    max_k
}

/// Limit of `u_0`: `kappa -> infinity` for the logistic flavour,
/// `c_n -> c_inf` for the self-regulating one (pass `c_inf` in `flavor`).
///
/// The logistic limit is `max(0, (1 - phi)/lambda)`.
pub fn u0_limit(flavor: &Flavor, lambda: f64, phi: f64) -> Result<f64, MeanFieldError> {
    check_lambda(lambda)?;
    match flavor {
        Flavor::Logistic { .. } => Ok(((1.0 - phi) / lambda).max(0.0)),
        Flavor::SelfReg { control } => u0_selfreg(lambda, phi, control, DEFAULT_TERM_BUDGET),
    }
}

/// One row per profile: `kappa,lambda,phi,u0,u1,...`.
pub fn write_profiles_csv<W: Write>(
    out: W,
    rows: &[(f64, f64, &MeanFieldProfile)],
) -> Result<(), csv::Error> {
    let width = rows.iter().map(|(_, _, p)| p.u.len()).max().unwrap_or(1);
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["kappa".to_string(), "lambda".into(), "phi".into()];
    header.extend((0..width).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for (lambda, phi, p) in rows {
        let kappa = p.flavor.control().kappa().map(|k| k.to_string()).unwrap_or_default();
        let mut rec = vec![kappa, lambda.to_string(), phi.to_string()];
        rec.extend(p.u.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
