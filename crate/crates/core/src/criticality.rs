//! Monte Carlo survival estimates, bisection for critical parameters and
//! parameter sweeps.
//!
//! Replica `i` of a run with master seed `s` always uses the stream
//! [`crate::rng::stream`]`(s, i)`, so estimates are reproducible bit for bit
//! regardless of thread count, and estimates at different parameter values
//! share random numbers.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Boundary, ControlSpec, Geometry, ModelError, Params};
use crate::numeric::{wilson_interval, Z95};
use crate::rng;
use crate::simulator::{LatticeState, SimError, Simulator, Stopping};

/// Survival probability threshold used to locate pseudo-critical points.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// One particle at the origin.
    #[default]
    SingleParticle,
    Empty,
}

impl Initial {
    pub fn state(&self, geometry: &Geometry) -> LatticeState {
        match self {
            Initial::SingleParticle => LatticeState::single_particle(geometry),
            Initial::Empty => LatticeState::empty(geometry),
        }
    }
}

/// Everything needed to run one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub params: Params,
    pub geometry: Geometry,
    pub stopping: Stopping,
    pub initial: Initial,
}

impl Experiment {
    pub fn new(params: Params, geometry: Geometry, stopping: Stopping) -> Self {
        Self {
            params,
            geometry,
            stopping,
            initial: Initial::SingleParticle,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        self.stopping.validate()?;
        // Constructing a simulator performs the remaining checks.
        Simulator::new(self.params.clone(), self.geometry.clone(), self.initial.state(&self.geometry)).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub replicas: u64,
    pub survivors: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub stopping: Stopping,
    pub seed: u64,
}

impl SurvivalEstimate {
    fn new(replicas: u64, survivors: u64, stopping: Stopping, seed: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(survivors, replicas, Z95);
        Self {
            replicas,
            survivors,
            estimate: if replicas == 0 { 0.0 } else { survivors as f64 / replicas as f64 },
            ci_lo,
            ci_hi,
            stopping,
            seed,
        }
    }
}

/// Runs `replicas` independent copies and counts those not extinct at the caps.
pub fn estimate_survival(exp: &Experiment, replicas: u64, seed: u64) -> Result<SurvivalEstimate, SimError> {
    exp.validate()?;
    let survivors = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut sim = Simulator::new(exp.params.clone(), exp.geometry.clone(), exp.initial.state(&exp.geometry))
                .expect("validated above");
            let mut rng = rng::stream(seed, i);
            u64::from(sim.run(&exp.stopping, &mut rng).survived())
        })
        .sum();
    Ok(SurvivalEstimate::new(replicas, survivors, exp.stopping, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    Phi,
}

impl Axis {
    fn apply(&self, params: &Params, value: f64) -> Params {
        match self {
            Axis::Lambda => params.with_lambda(value),
            Axis::Phi => params.with_phi(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub axis: Axis,
    pub threshold: f64,
    /// Stop once `hi - lo` is below this.
    pub tolerance: f64,
    pub replicas: u64,
    /// Largest number of survival estimates, bracketing included.
    pub budget: usize,
    pub lo: f64,
    pub hi: f64,
    /// Auto-bracketing doubles `hi` up to this value.
    pub max_value: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            axis: Axis::Lambda,
            threshold: DEFAULT_THRESHOLD,
            tolerance: 0.01,
            replicas: 500,
            budget: 40,
            lo: 0.0,
            hi: 1.0,
            max_value: 64.0,
        }
    }
}

/// One survival estimate taken during a bisection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub axis: Axis,
    pub value: f64,
    pub survival: SurvivalEstimate,
    pub above: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalBracket {
    pub axis: Axis,
    pub params: Params,
    pub lo: f64,
    pub hi: f64,
    pub threshold: f64,
    pub probes: Vec<Probe>,
}

impl CriticalBracket {
    /// Midpoint of the final bracket.
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Range of axis values that the probes cannot separate from the
    /// threshold: from the largest value whose survival interval lies
    /// entirely below it to the smallest whose interval lies entirely above.
    pub fn confidence_interval(&self) -> (f64, f64) {
        let below = self
            .probes
            .iter()
            .filter(|p| p.survival.ci_hi < self.threshold)
            .map(|p| p.value)
            .fold(f64::NAN, f64::max);
        let above = self
            .probes
            .iter()
            .filter(|p| p.survival.ci_lo > self.threshold)
            .map(|p| p.value)
            .fold(f64::NAN, f64::min);
        let first = self.probes.first().map_or(self.lo, |p| p.value);
        (
            if below.is_nan() { first.min(self.lo) } else { below },
            if above.is_nan() { f64::INFINITY } else { above },
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CriticalityError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no bracket: survival stays below {threshold} up to {axis:?} = {reached}")]
    NoBracket {
        axis: Axis,
        reached: f64,
        threshold: f64,
        probes: Vec<Probe>,
    },
    #[error("invalid bisection settings: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Bisects the survival probability along `cfg.axis` for the crossing of
/// `cfg.threshold`. Every probe reuses `seed`, so the probes form a common
/// random number family. Each probe is written to `log` as a JSON line.
pub fn bisect_critical(
    exp: &Experiment,
    cfg: &BisectionConfig,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<CriticalBracket, CriticalityError> {
    if !(cfg.lo >= 0.0 && cfg.hi > cfg.lo && cfg.tolerance > 0.0 && cfg.replicas > 0) {
        return Err(CriticalityError::Invalid(
            "need 0 <= lo < hi, tolerance > 0, replicas > 0".into(),
        ));
    }
    let mut probes = Vec::new();
    let mut probe = |value: f64, probes: &mut Vec<Probe>| -> Result<bool, CriticalityError> {
        let e = Experiment {
            params: cfg.axis.apply(&exp.params, value),
            ..exp.clone()
        };
        let survival = estimate_survival(&e, cfg.replicas, seed)?;
        let above = survival.estimate >= cfg.threshold;
        let p = Probe {
            axis: cfg.axis,
            value,
            survival,
            above,
        };
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut **w, &p)?;
            w.write_all(b"\n")?;
        }
        probes.push(p);
        Ok(above)
    };
    let bracket = |lo, hi, probes: Vec<Probe>| CriticalBracket {
        axis: cfg.axis,
        params: exp.params.clone(),
        lo,
        hi,
        threshold: cfg.threshold,
        probes,
    };

    let mut lo = cfg.lo;
    if probe(lo, &mut probes)? {
        return Ok(bracket(lo, lo, probes));
    }
    let mut hi = cfg.hi;
    while !probe(hi, &mut probes)? {
        lo = hi;
        hi *= 2.0;
        if hi > cfg.max_value || probes.len() >= cfg.budget {
            return Err(CriticalityError::NoBracket {
                axis: cfg.axis,
                reached: lo,
                threshold: cfg.threshold,
                probes,
            });
        }
    }
    while hi - lo >= cfg.tolerance && probes.len() < cfg.budget {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(bracket(lo, hi, probes))
}

/// Full factorial grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub phis: Vec<f64>,
    pub ns: Vec<usize>,
    pub controls: Vec<ControlSpec>,
    pub d: usize,
    /// Half-width of the box, in patches.
    pub side: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub phi: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub family: String,
    pub kappa: Option<u64>,
    pub replicas: u64,
    pub survivors: u64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn estimate(&self) -> f64 {
        self.survivors as f64 / self.replicas as f64
    }

    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{:?}|{}|{}",
            self.lambda, self.phi, self.n, self.d, self.family, self.kappa, self.replicas, self.seed
        )
    }
}

struct Point {
    lambda: f64,
    phi: f64,
    n: usize,
    control: ControlSpec,
}

impl SweepGrid {
    fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for control in &self.controls {
            for &n in &self.ns {
                for &phi in &self.phis {
                    for &lambda in &self.lambdas {
                        out.push(Point {
                            lambda,
                            phi,
                            n,
                            control: control.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.phis.len() * self.ns.len() * self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn row_for(grid: &SweepGrid, p: &Point, replicas: u64, seed: u64) -> SweepRow {
    SweepRow {
        lambda: p.lambda,
        phi: p.phi,
        n: p.n,
        d: grid.d,
        family: p.control.family_name().to_string(),
        kappa: p.control.kappa(),
        replicas,
        survivors: 0,
        ci_lo: 0.0,
        ci_hi: 0.0,
        seed,
    }
}

/// Runs every grid point with the same master seed.
///
/// With `csv_path`, rows already present in that file (same point, replica
/// count and seed) are reused and new rows are appended as they finish, so an
/// interrupted sweep can be resumed by running it again.
pub fn sweep(
    grid: &SweepGrid,
    stopping: &Stopping,
    replicas: u64,
    seed: u64,
    csv_path: Option<&Path>,
) -> Result<Vec<SweepRow>, CriticalityError> {
    let mut done: Vec<SweepRow> = Vec::new();
    if let Some(path) = csv_path {
        if path.exists() {
            done = read_sweep_csv(path)?;
        }
    }
    let known: HashSet<String> = done.iter().map(SweepRow::key).collect();
    let mut writer = match csv_path {
        Some(path) => {
            let fresh = done.is_empty();
            let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for p in grid.points() {
        let template = row_for(grid, &p, replicas, seed);
        if known.contains(&template.key()) {
            let prior = done.iter().find(|r| r.key() == template.key()).expect("key present");
            rows.push(prior.clone());
            continue;
        }
        let params = Params::new(p.lambda, p.phi, grid.d, p.n, p.control.clone()).map_err(SimError::from)?;
        let geometry = Geometry::new(grid.d, grid.side, p.n, grid.boundary).map_err(SimError::from)?;
        let est = estimate_survival(&Experiment::new(params, geometry, *stopping), replicas, seed)?;
        let row = SweepRow {
            survivors: est.survivors,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
            ..template
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, CriticalityError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), CriticalityError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A pair of rows that differ in one coordinate, where the larger parameter
/// has a survival interval entirely below that of the smaller one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityFlag {
    pub axis: &'static str,
    pub smaller: SweepRow,
    pub larger: SweepRow,
}

/// Checks survival monotonicity along `lambda`, `phi` and `N`.
pub fn monotonicity_flags(rows: &[SweepRow]) -> Vec<MonotonicityFlag> {
    let mut flags = Vec::new();
    type Proj = fn(&SweepRow) -> (f64, String);
    let axes: [(&'static str, Proj); 3] = [
        ("lambda", |r| (r.lambda, format!("{}|{}|{}|{:?}", r.phi, r.n, r.family, r.kappa))),
        ("phi", |r| (r.phi, format!("{}|{}|{}|{:?}", r.lambda, r.n, r.family, r.kappa))),
        ("N", |r| (r.n as f64, format!("{}|{}|{}|{:?}", r.lambda, r.phi, r.family, r.kappa))),
    ];
    for (name, proj) in axes {
        for a in rows {
            for b in rows {
                let ((va, ka), (vb, kb)) = (proj(a), proj(b));
                if ka == kb && a.d == b.d && va < vb && b.ci_hi < a.ci_lo {
                    flags.push(MonotonicityFlag {
                        axis: name,
                        smaller: a.clone(),
                        larger: b.clone(),
                    });
                }
            }
        }
    }
    flags
}

impl From<ModelError> for CriticalityError {
    fn from(e: ModelError) -> Self {
        CriticalityError::Sim(e.into())
    }
}
