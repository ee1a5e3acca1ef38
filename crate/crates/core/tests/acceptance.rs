//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Lines go straight to stderr so they show even when output is captured.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use prp::brw::{brw_expectation_field, brw_expectation_ode, lazy_walk_fields, n_max_for, path_counts};
use prp::chain::{
    classify, default_height, embedded_step_distribution, escape_probability_converged, expected_absorption_time,
    min_mean_control, reversible_measure, sample_absorption_steps, sample_trial_vector, subcritical_lambda_bound,
    total_mass, trial_vector_mean_total, trial_vector_pmf, ChainClass,
};
use prp::criticality::{bisect_critical, estimate_survival, BisectionConfig, Experiment};
use prp::meanfield::{integrate_meanfield, residual, stationary_profile, u0_logistic, Flavor, Integration, Stationary};
use prp::model::{preset, Boundary, ControlSpec, Geometry, Params, Preset, PresetArgs};
use prp::numeric::{exact_from_f64, ratio_from_u64, Scalar};
use prp::rng::from_seed;
use prp::simulator::{run_coupled, CouplingMode, LatticeState, Stopping};

fn report(n: u32, name: &str, pass: bool, started: Instant, detail: String) {
    let line = format!(
        "{} criterion {n:>2} ({name}) [{:.1}s]: {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn families() -> Vec<ControlSpec> {
    vec![
        ControlSpec::Indicator { kappa: 3 },
        ControlSpec::Logistic { kappa: 4 },
        ControlSpec::constant(0.5),
        ControlSpec::half_square_ratio(),
    ]
}

fn box_states(n: usize, h: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..=h).map(move |i| {
                    let mut t = s.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

#[test]
fn criterion_01_meanfield_stationary_profile_is_a_fixed_point() {
    let started = Instant::now();
    let mut worst_residual: f64 = 0.0;
    let mut worst_drift: f64 = 0.0;
    let mut points = 0;
    for lambda in [1.0, 2.0, 4.0] {
        for phi in [0.25, 0.5, 1.5] {
            for kappa in [2u64, 5, 10] {
                let flavor = Flavor::Logistic { kappa };
                let Stationary::Endemic(p) = stationary_profile(&flavor, lambda, phi).unwrap() else {
                    panic!("({lambda},{phi},{kappa}) has no endemic equilibrium");
                };
                worst_residual = worst_residual.max(residual(&flavor, lambda, phi, &p.u));
                let tr = integrate_meanfield(&flavor, lambda, phi, &p.u, &Integration::default()).unwrap();
                worst_drift = worst_drift.max(tr.max_deviation(&p.u));
                points += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        1,
        "mean-field closed form vs ODE",
        worst_residual < 1e-8 && worst_drift < 1e-6 && secs < 10.0,
        started,
        format!("{points} points, max residual {worst_residual:.2e} (< 1e-8), max drift over t=100 {worst_drift:.2e} (< 1e-6)"),
    );
}

#[test]
fn criterion_02_sqrt_kappa_asymptotic() {
    let started = Instant::now();
    let v: Vec<f64> = [100u64, 1000, 10_000]
        .iter()
        .map(|&k| u0_logistic(1.0, 1.0, k).unwrap() * (k as f64).sqrt())
        .collect();
    let changes: Vec<f64> = v.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).collect();
    report(
        2,
        "u0 sqrt(kappa) asymptotic",
        changes.iter().all(|&c| c < 0.05) && started.elapsed().as_secs_f64() < 1.0,
        started,
        format!("u0*sqrt(kappa) = {v:.5?}, relative changes {changes:.3?} (< 5%), sqrt(2/pi) = {:.5}", (2.0 / std::f64::consts::PI).sqrt()),
    );
}

#[test]
fn criterion_03_u0_limit() {
    let started = Instant::now();
    let kappas: Vec<u64> = (0..=40).map(|i| 10f64.powf(i as f64 / 10.0).round() as u64).collect();
    let values: Vec<f64> = kappas.iter().map(|&k| u0_logistic(1.0, 0.5, k).unwrap()).collect();
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);
    let last = *values.last().unwrap();
    report(
        3,
        "u0 limit",
        monotone && (last - 0.5).abs() < 1e-3 && started.elapsed().as_secs_f64() < 1.0,
        started,
        format!("nonincreasing over {} values of kappa: {monotone}; u0(kappa=1e4) = {last:.6} (limit 0.5)", kappas.len()),
    );
}

#[test]
fn criterion_04_detailed_balance() {
    let started = Instant::now();
    let mut pairs = 0u64;
    let mut bad = Vec::new();
    for c in families() {
        for phi in [0.5, 1.0, 2.0] {
            let phi = exact_from_f64(phi);
            for n in 1..=3usize {
                for s in box_states(n, 9) {
                    let nu = reversible_measure(&phi, &c, &s);
                    let p = embedded_step_distribution(&phi, &c, &s);
                    for j in 0..n {
                        let mut t = s.clone();
                        t[j] += 1;
                        let q = embedded_step_distribution(&phi, &c, &t);
                        pairs += 1;
                        if nu.clone() * p.up[j].clone() != reversible_measure(&phi, &c, &t) * q.down[j].clone() {
                            bad.push(format!("{c:?} {s:?}->{t:?}"));
                        }
                    }
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        4,
        "detailed balance",
        bad.is_empty() && secs < 5.0,
        started,
        format!("{pairs} adjacent pairs with heights <= 10 checked in exact arithmetic, {} mismatches", bad.len()),
    );
}

#[test]
fn criterion_05_total_mass() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let mut failures = Vec::new();
    for c in families() {
        for phi in [0.5, 1.0, 2.0] {
            if classify(phi, &c) != ChainClass::PositiveRecurrent {
                continue;
            }
            let h = default_height(phi, &c, 3, 1e-14).unwrap().max(10);
            // One-coordinate box mass, and a geometric bound on its tail:
            // beyond H the ratio nu1(h+1)/nu1(h) = phi c(h) is at most phi c(H).
            let nu1 = |k: u64| reversible_measure(&phi, &c, &[k]);
            let b1: f64 = (0..=h).map(nu1).sum();
            let rho = phi * c.eval(h);
            let t1 = if nu1(h + 1) == 0.0 { 0.0 } else { nu1(h + 1) / (1.0 - rho) };
            for n in 1..=3usize {
                let brute: f64 = box_states(n, h).iter().map(|s| reversible_measure(&phi, &c, s)).sum();
                let tail = (b1 + t1).powi(n as i32) - b1.powi(n as i32);
                let exact = total_mass(phi, &c, n).unwrap().finite().unwrap();
                let err = ((brute + tail) - exact).abs().max(0.0) / exact;
                let bracketed = brute <= exact * (1.0 + 1e-12) && exact <= (brute + tail) * (1.0 + 1e-12);
                worst = worst.max(err);
                points += 1;
                if err >= 1e-8 || !bracketed {
                    failures.push(format!("{c:?} phi={phi} N={n}: brute {brute} + tail {tail:e} vs {exact}"));
                }
            }
        }
    }
    report(
        5,
        "total mass formula",
        failures.is_empty(),
        started,
        format!("{points} positive recurrent points, max relative gap {worst:.2e} (< 1e-8), failures {failures:?}"),
    );
}

#[test]
fn criterion_06_absorption_time() {
    let started = Instant::now();
    let mut closed_err: f64 = 0.0;
    for phi in [0.2, 0.5, 1.0, 2.0, 3.5] {
        let e = expected_absorption_time(phi, &ControlSpec::delta0(), &[1], None).unwrap().value;
        closed_err = closed_err.max((e - (1.0 + phi)).abs());
        let e = expected_absorption_time(phi, &ControlSpec::Indicator { kappa: 2 }, &[1], None).unwrap().value;
        closed_err = closed_err.max((e - (1.0 + phi).powi(2)).abs());
    }
    let cases = [
        (1.2, ControlSpec::Logistic { kappa: 3 }, vec![1u64, 0]),
        (1.5, ControlSpec::constant(0.5), vec![1]),
        (1.0, ControlSpec::half_square_ratio(), vec![1, 0]),
    ];
    let reps = 100_000u32;
    let mut z_scores = Vec::new();
    for (i, (phi, c, start)) in cases.iter().enumerate() {
        let exact = expected_absorption_time(*phi, c, start, None).unwrap().value;
        let mut rng = from_seed(600 + i as u64);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..reps {
            let s = sample_absorption_steps(*phi, c, start, u64::MAX, &mut rng).unwrap() as f64;
            sum += s;
            sq += s * s;
        }
        let mean = sum / reps as f64;
        let var = (sq / reps as f64 - mean * mean) * reps as f64 / (reps - 1) as f64;
        z_scores.push((mean - exact) / (var / reps as f64).sqrt());
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        6,
        "E(tau0) closed cases and Monte Carlo",
        closed_err < 1e-10 && z_scores.iter().all(|z| z.abs() < 3.0) && secs < 30.0,
        started,
        format!("closed-form error {closed_err:.2e} (< 1e-10), Monte Carlo z-scores {z_scores:.2?} (|z| < 3)"),
    );
}

/// All vectors of length `len` with entries summing to at most `max_total`.
fn count_vectors(len: usize, max_total: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v: Vec<u64>| {
                let used: u64 = v.iter().sum();
                (0..=max_total - used).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

#[test]
fn criterion_07_trial_vector() {
    let started = Instant::now();
    let samples = 100_000u64;
    let mut details = Vec::new();
    let mut pass = true;
    for (i, &(d, lambda, phi)) in [(1usize, 1.0, 1.0), (2, 0.5, 2.0)].iter().enumerate() {
        let mut rng = from_seed(700 + i as u64);
        let mut observed: HashMap<Vec<u64>, u64> = HashMap::new();
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for _ in 0..samples {
            let y = sample_trial_vector(lambda, phi, d, &mut rng);
            let t = y.iter().sum::<u64>() as f64;
            total += t;
            total_sq += t * t;
            *observed.entry(y).or_default() += 1;
        }
        // Cells with expected count >= 5, the remainder pooled into one cell.
        let mut stat = 0.0;
        let mut cells = 0;
        let (mut kept_obs, mut kept_exp) = (0u64, 0.0);
        for v in count_vectors(2 * d, 40) {
            let e = samples as f64 * trial_vector_pmf(lambda, phi, d, &v);
            if e >= 5.0 {
                let o = observed.get(&v).copied().unwrap_or(0) as f64;
                stat += (o - e).powi(2) / e;
                kept_obs += o as u64;
                kept_exp += e;
                cells += 1;
            }
        }
        let rest_obs = (samples - kept_obs) as f64;
        let rest_exp = samples as f64 - kept_exp;
        if rest_exp > 0.0 {
            stat += (rest_obs - rest_exp).powi(2) / rest_exp;
            cells += 1;
        }
        let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
        let mean = total / samples as f64;
        let var = total_sq / samples as f64 - mean * mean;
        let expected_mean = trial_vector_mean_total(lambda, phi, d);
        let z = (mean - expected_mean) / (var / samples as f64).sqrt();
        pass &= stat < critical && z.abs() < 3.0;
        details.push(format!(
            "(d={d},lambda={lambda},phi={phi}): chi2 {stat:.1} on {} df (1% critical {critical:.1}), mean z {z:.2}",
            cells - 1
        ));
    }
    report(7, "trial vector law", pass, started, details.join("; "));
}

fn binomial(n: usize, k: usize) -> BigUint {
    (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

#[test]
fn criterion_08_brw_path_identity() {
    let started = Instant::now();
    let mut checked = 0u64;
    let mut bad = 0u64;
    for d in 1..=2usize {
        let table = path_counts(d, 12, 12);
        for n in 0..=12 {
            for k in 0..=n {
                let f = table.field(n, k);
                let s = table.field(n - k, 0);
                for (idx, v) in f.values.iter().enumerate() {
                    checked += 1;
                    if *v != binomial(n, k) * &s.values[idx] {
                        bad += 1;
                    }
                }
            }
        }
        for (phi, lambda) in [(1.0, 1.0), (2.0, 0.5), (0.3, 1.7)] {
            let (p, l) = (exact_from_f64(phi), exact_from_f64(lambda));
            let r = p.clone() + ratio_from_u64(2 * d as u64) * l.clone();
            let laws = lazy_walk_fields(&p, &l, d, 12, 12);
            for (n, law) in laws.iter().enumerate() {
                for (idx, prob) in law.values.iter().enumerate() {
                    let x = law.coordinates(idx);
                    if x.iter().map(|c| c.abs()).sum::<i64>() > n as i64 {
                        continue;
                    }
                    let sum = (0..=n).fold(BigRational::zero(), |acc, k| {
                        let mu = BigRational::from_integer(table.get(n, k, &x).into());
                        acc + mu * p.powu(k as u32) * l.powu((n - k) as u32)
                    });
                    checked += 1;
                    if sum / r.powu(n as u32) != *prob {
                        bad += 1;
                    }
                }
            }
        }
    }
    report(
        8,
        "BRW path-count identity",
        bad == 0,
        started,
        format!("{checked} exact identities for n <= 12, d in {{1,2}}, {bad} mismatches"),
    );
}

#[test]
fn criterion_09_brw_series_vs_ode() {
    let started = Instant::now();
    let mut worst_rel: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for (phi, lambda) in [(1.0, 1.0), (2.0, 0.5)] {
        for t in [1.0, 2.0, 3.0] {
            let n = n_max_for(phi, lambda, 1, t, 1e-14);
            let s = brw_expectation_field(phi, lambda, 1, t, n, 1e-12).unwrap();
            let o = brw_expectation_ode(phi, lambda, 1, 25, t, 1e-3, 1e-6).unwrap();
            // Far sites carry values near rounding level; compare where E is not negligible.
            let peak = o.values.iter().copied().fold(0.0, f64::max);
            for x in -25i64..=25 {
                let ode = *o.get(&[x]).unwrap();
                if ode > 1e-6 * peak {
                    let series = s.field.get(&[x]).copied().unwrap_or(0.0);
                    worst_rel = worst_rel.max((series - ode).abs() / ode);
                }
            }
            let expected = ((phi + 2.0 * lambda - 1.0) * t).exp();
            worst_mass = worst_mass.max((s.field.total() - expected).abs() / expected);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        9,
        "BRW series vs ODE",
        worst_rel < 1e-6 && worst_mass < 1e-6 && secs < 20.0,
        started,
        format!("max relative error {worst_rel:.2e} (< 1e-6), total mass error {worst_mass:.2e} (< 1e-6)"),
    );
}

#[test]
fn criterion_10_subcritical_extinction() {
    let started = Instant::now();
    let geometry = Geometry::new(1, 50, 5, Boundary::Periodic).unwrap();
    let stopping = Stopping {
        t_max: 200.0,
        ..Stopping::default()
    };
    let mut details = Vec::new();
    let mut pass = true;
    // c = 1 is the least restrictive control, so it is the hardest case.
    for (i, (phi, lambda)) in [(0.4, 0.2), (0.8, 0.1)].into_iter().enumerate() {
        let params = Params::new(lambda, phi, 1, 5, ControlSpec::AllOne).unwrap();
        let est = estimate_survival(&Experiment::new(params, geometry.clone(), stopping), 1000, 1000 + i as u64).unwrap();
        pass &= est.survivors == 0;
        details.push(format!("(phi={phi},lambda={lambda}): {}/1000 survivors", est.survivors));
    }
    pass &= started.elapsed().as_secs_f64() < 60.0;
    report(10, "subcritical extinction", pass, started, details.join(", "));
}

#[test]
fn criterion_11_single_patch_survival() {
    let started = Instant::now();
    let c = ControlSpec::half_square_ratio();
    let escape = escape_probability_converged(2.0, &c, 16, 1e-4).unwrap();
    let params = Params::new(0.0, 2.0, 1, 1, c).unwrap();
    let geometry = Geometry::single_patch(1, 1).unwrap();
    // Large enough that only the population cap or extinction ends a run.
    let stopping = Stopping {
        t_max: 1e9,
        pop_cap: 2000,
    };
    let est = estimate_survival(&Experiment::new(params, geometry, stopping), 2000, 0).unwrap();
    let inside = est.ci_lo <= escape.probability && escape.probability <= est.ci_hi;
    report(
        11,
        "single-patch survival vs escape probability",
        inside && started.elapsed().as_secs_f64() < 120.0,
        started,
        format!(
            "Monte Carlo {}/2000 = {:.4}, 95% CI [{:.4}, {:.4}]; escape probability {:.5} (H = {})",
            est.survivors, est.estimate, est.ci_lo, est.ci_hi, escape.probability, escape.height
        ),
    );
}

#[test]
fn criterion_12_monotone_coupling() {
    let started = Instant::now();
    let stopping = Stopping {
        t_max: 30.0,
        pop_cap: 600,
    };
    let g = |n| Geometry::new(1, 12, n, Boundary::Periodic).unwrap();
    let p = |lambda, phi, n, c: ControlSpec| Params::new(lambda, phi, 1, n, c).unwrap();
    let log3 = ControlSpec::Logistic { kappa: 3 };
    let pairs: Vec<(&str, CouplingMode, Params, Params)> = vec![
        ("lambda", CouplingMode::Sitewise, p(0.6, 0.8, 3, log3.clone()), p(1.2, 0.8, 3, log3.clone())),
        ("phi", CouplingMode::Sitewise, p(0.9, 0.4, 3, log3.clone()), p(0.9, 1.6, 3, log3.clone())),
        ("c", CouplingMode::Sitewise, p(0.9, 1.0, 3, ControlSpec::delta0()), p(0.9, 1.0, 3, ControlSpec::half_square_ratio())),
        ("N vs 1", CouplingMode::Projection, p(0.8, 1.0, 1, log3.clone()), p(0.8, 1.0, 3, log3)),
    ];
    let mut runs = 0;
    let mut violations = Vec::new();
    let mut events = 0u64;
    for (name, mode, lo, hi) in &pairs {
        let geo_hi = g(hi.n);
        let geo_lo = g(lo.n);
        for seed in 0..50 {
            let rep = run_coupled(
                *mode,
                lo,
                hi,
                &geo_hi,
                LatticeState::single_particle(&geo_lo),
                LatticeState::single_particle(&geo_hi),
                &stopping,
                &mut from_seed(1200 + seed),
            )
            .unwrap();
            runs += 1;
            events += rep.events;
            if let Some(v) = rep.violation {
                violations.push(format!("{name} seed {seed}: {v:?}"));
            }
        }
    }
    report(
        12,
        "monotone coupling",
        runs == 200 && violations.is_empty(),
        started,
        format!("{runs} coupled runs ({events} events) over lambda, phi, c and projection pairs, violations {violations:?}"),
    );
}

#[test]
fn criterion_13_bound_and_simulation_agree() {
    let started = Instant::now();
    let points = [
        (0.5, ControlSpec::Indicator { kappa: 3 }),
        (1.0, ControlSpec::Indicator { kappa: 2 }),
        (1.5, ControlSpec::Logistic { kappa: 4 }),
        (1.5, ControlSpec::constant(0.5)),
        (0.8, ControlSpec::half_square_ratio()),
    ];
    let geometry = Geometry::new(1, 50, 1, Boundary::Periodic).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (i, (phi, c)) in points.into_iter().enumerate() {
        let (bound, _) = subcritical_lambda_bound(phi, &c, 1, 1, None).unwrap();
        let params = Params::new(0.9 * bound, phi, 1, 1, c.clone()).unwrap();
        let est = estimate_survival(&Experiment::new(params, geometry.clone(), Stopping::default()), 500, 1300 + i as u64).unwrap();
        pass &= est.survivors == 0;
        details.push(format!("{} phi={phi}: lambda*={bound:.4}, {}/500", c.family_name(), est.survivors));
    }
    report(13, "bound vs simulation", pass, started, details.join("; "));
}

/// Smallest mean of `c` over all ways of putting `m` particles on `n` sites.
fn exhaustive_min(c: &ControlSpec, n: usize, m: u64) -> BigRational {
    fn go(c: &ControlSpec, sites: usize, m: u64, acc: BigRational, best: &mut Option<BigRational>) {
        if sites == 1 {
            let v = acc + c.eval_exact(m);
            if best.as_ref().is_none_or(|b| v < *b) {
                *best = Some(v);
            }
            return;
        }
        for k in 0..=m {
            go(c, sites - 1, m - k, acc.clone() + c.eval_exact(k), best);
        }
    }
    let mut best = None;
    go(c, n, m, BigRational::zero(), &mut best);
    best.unwrap() / ratio_from_u64(n as u64)
}

#[test]
fn criterion_14_minimum_mean_control() {
    let started = Instant::now();
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut controls = families();
    controls.push(ControlSpec::delta0());
    controls.push(ControlSpec::table(&[1.0, 0.75, 0.25], 0.125));
    for c in &controls {
        for n in 1..=6usize {
            for m in 0..=8u64 {
                checked += 1;
                let dp: BigRational = min_mean_control(c, n, m);
                if dp != exhaustive_min(c, n, m) {
                    bad.push(format!("{c:?} N={n} M={m}"));
                }
            }
        }
    }
    for n in 1..=6usize {
        for m in 0..=n as u64 {
            checked += 1;
            let dp: BigRational = min_mean_control(&ControlSpec::delta0(), n, m);
            if dp != BigRational::one() - ratio_from_u64(m) / ratio_from_u64(n as u64) {
                bad.push(format!("delta0 N={n} M={m}"));
            }
        }
    }
    report(
        14,
        "minimum mean control",
        bad.is_empty(),
        started,
        format!("{checked} exact comparisons (DP vs enumeration for N <= 6, M <= 8; 1 - M/N for delta0), mismatches {bad:?}"),
    );
}

#[test]
fn criterion_15_contact_process_trend() {
    let started = Instant::now();
    let cfg = BisectionConfig {
        replicas: 500,
        hi: 0.5,
        tolerance: 0.01,
        ..BisectionConfig::default()
    };
    let mut rows = Vec::new();
    for n in [1usize, 2, 4, 8] {
        let args = PresetArgs {
            d: 1,
            n: Some(n),
            ..PresetArgs::default()
        };
        let params = preset(Preset::ContactProcess, &args).unwrap();
        let geometry = Geometry::new(1, 1000, n, Boundary::Periodic).unwrap();
        let b = bisect_critical(&Experiment::new(params, geometry, Stopping::default()), &cfg, 1500, None).unwrap();
        let (lo, hi) = b.confidence_interval();
        rows.push((n, b.estimate(), lo, hi));
    }
    let trend = rows
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 || (w[1].2 <= w[0].3 && w[0].2 <= w[1].3));
    let floor = rows.iter().all(|r| r.1 >= 0.45);
    let secs = started.elapsed().as_secs_f64();
    let text: Vec<String> = rows
        .iter()
        .map(|(n, est, lo, hi)| format!("N={n}: {est:.4} [{lo:.4}, {hi:.4}]"))
        .collect();
    report(
        15,
        "contact process trend in N",
        trend && floor && secs < 1200.0,
        started,
        format!("lambda_hat {} (nonincreasing within CI overlap: {trend}; all >= 0.45: {floor})", text.join(", ")),
    );
}
