//! Exact continuous-time simulation on a finite box.
//!
//! Event selection is hierarchical: a patch is drawn proportionally to its
//! total rate from a [`SumTree`], then the event type within the patch, then a
//! site from the patch aggregates. Per-event cost is `O(log #patches + d N)`.

mod coupled;
mod state;
mod sum_tree;

pub use coupled::{run_coupled, CouplingMode, DominationReport, Violation};
pub use state::{LatticeState, Site};
pub use sum_tree::SumTree;

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::model::{ControlTable, Geometry, ModelError, Params};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("parameters and geometry disagree: {0}")]
    Mismatch(String),
    #[error("initial state does not fit the geometry")]
    BadInitialState,
    #[error("no event can fire: total rate is zero (population {population})")]
    ZeroRate { population: u64 },
    #[error("coupling requires ordered inputs: {0}")]
    Unordered(String),
    #[error("i/o error while logging: {0}")]
    Io(#[from] std::io::Error),
}

/// How intra-patch births onto occupied sites are represented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraMode {
    /// Patch intra rate `(phi/N) P(x) CSum(x)`; every sampled birth succeeds.
    #[default]
    Exact,
    /// Patch intra rate `phi P(x)`; a uniform target accepts with probability
    /// `c(eta)`, failures are reported as [`Event::RejectedBirth`].
    WithRejections,
}

/// Rate decomposition of one patch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PatchRates {
    pub death: f64,
    pub intra: f64,
    /// Rate at which births from neighbouring patches land in this patch.
    pub inter_in: f64,
}

impl PatchRates {
    pub fn total(&self) -> f64 {
        self.death + self.intra + self.inter_in
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Death { site: Site },
    IntraBirth { patch: usize, target: Site },
    InterBirth { source: usize, target: Site },
    RejectedBirth { site: Site },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Death { .. } => "death",
            Event::IntraBirth { .. } => "intra_birth",
            Event::InterBirth { .. } => "inter_birth",
            Event::RejectedBirth { .. } => "rejected_birth",
        }
    }

    pub fn site(&self) -> Site {
        match *self {
            Event::Death { site } | Event::RejectedBirth { site } => site,
            Event::IntraBirth { target, .. } | Event::InterBirth { target, .. } => target,
        }
    }
}

/// Caps that end a run which has not gone extinct.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stopping {
    pub t_max: f64,
    pub pop_cap: u64,
}

impl Default for Stopping {
    fn default() -> Self {
        Self {
            t_max: 200.0,
            pop_cap: 2000,
        }
    }
}

impl Stopping {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.t_max > 0.0) || self.pop_cap == 0 {
            return Err(ModelError::InvalidParams("stopping caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Extinct { time: f64 },
    TimeCapReached,
    PopulationCapReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    #[serde(flatten)]
    pub status: Status,
    pub events: u64,
    pub peak_population: u64,
    pub final_time: f64,
    pub final_population: u64,
}

impl Outcome {
    /// Survival proxy: any run that did not go extinct.
    pub fn survived(&self) -> bool {
        !matches!(self.status, Status::Extinct { .. })
    }
}

/// One line of the optional trajectory log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub event: Event,
    pub population: u64,
}

/// Writes `time,event_kind,patch,site,population` lines.
pub struct CsvEventLog<W: Write> {
    out: W,
}

impl<W: Write> CsvEventLog<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "time,event_kind,patch,site,population")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, rec: &EventRecord) -> std::io::Result<()> {
        let site = rec.event.site();
        writeln!(
            self.out,
            "{},{},{},{},{}",
            rec.time,
            rec.event.kind(),
            site.patch,
            site.slot,
            rec.population
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub struct Simulator {
    params: Params,
    geometry: Geometry,
    control: ControlTable,
    state: LatticeState,
    tree: SumTree,
    mode: IntraMode,
}

impl Simulator {
    pub fn new(params: Params, geometry: Geometry, initial: LatticeState) -> Result<Self, SimError> {
        Self::with_mode(params, geometry, initial, IntraMode::Exact)
    }

    pub fn with_mode(params: Params, geometry: Geometry, mut initial: LatticeState, mode: IntraMode) -> Result<Self, SimError> {
        params.validate()?;
        check_geometry(&params, &geometry)?;
        if initial.occupancies().len() != geometry.site_count() || initial.patch_size() != geometry.patch_size() {
            return Err(SimError::BadInitialState);
        }
        let control = ControlTable::new(params.control.clone());
        initial.refresh_control(&control);
        let mut sim = Self {
            tree: SumTree::new(geometry.patch_count()),
            params,
            geometry,
            control,
            state: initial,
            mode,
        };
        for x in 0..sim.geometry.patch_count() {
            let r = sim.patch_rates(x).total();
            sim.tree.set(x, r);
        }
        Ok(sim)
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn control(&self) -> &ControlTable {
        &self.control
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    #[inline]
    fn neighbour_population(&self, x: usize) -> u64 {
        let mut sum: u64 = self
            .geometry
            .neighbors(x)
            .iter()
            .map(|&z| self.state.patch_population(z))
            .sum();
        if self.params.lambda_includes_own_patch {
            sum += self.state.patch_population(x);
        }
        sum
    }

    /// Rates of the three event types in patch `x` for the current state.
    pub fn patch_rates(&self, x: usize) -> PatchRates {
        let n = self.geometry.patch_size() as f64;
        let pop = self.state.patch_population(x) as f64;
        let intra = match self.mode {
            IntraMode::Exact => self.params.phi / n * pop * self.state.control_sum(x),
            IntraMode::WithRejections => self.params.phi * pop,
        };
        let empty = f64::from(self.state.empty_sites(x));
        let inter_in = if empty > 0.0 {
            self.params.lambda / n * empty * self.neighbour_population(x) as f64
        } else {
            0.0
        };
        PatchRates {
            death: pop,
            intra,
            inter_in,
        }
    }

    fn refresh_rates_around(&mut self, x: usize) {
        let r = self.patch_rates(x).total();
        self.tree.set(x, r);
        for i in 0..self.geometry.neighbors(x).len() {
            let z = self.geometry.neighbors(x)[i];
            let r = self.patch_rates(z).total();
            self.tree.set(z, r);
        }
    }

    /// Draws the next event, applies it and returns it with its waiting time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(Event, f64), SimError> {
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(SimError::ZeroRate {
                population: self.state.total_population(),
            });
        }
        let dt = rng.sample::<f64, _>(Exp1) / total;
        self.state.time += dt;
        Ok((self.fire(total, rng), dt))
    }

    fn fire<R: Rng + ?Sized>(&mut self, total: f64, rng: &mut R) -> Event {
        let x = self.tree.find(rng.random::<f64>() * total);
        let rates = self.patch_rates(x);
        let u = rng.random::<f64>() * rates.total();
        let n = self.geometry.patch_size();
        let event = if u < rates.death {
            let k = rng.random_range(0..self.state.patch_population(x));
            let slot = pick_cumulative(self.state.patch(x), |v| u64::from(v), k);
            let site = Site { patch: x, slot };
            self.state.shift(site, false, &self.control);
            Event::Death { site }
        } else if u < rates.death + rates.intra || rates.inter_in == 0.0 {
            match self.mode {
                IntraMode::Exact => {
                    let target = rng.random::<f64>() * self.state.control_sum(x);
                    let control = &self.control;
                    let slot = pick_weighted(self.state.patch(x), |v| control.get(v), target);
                    let site = Site { patch: x, slot };
                    self.state.shift(site, true, &self.control);
                    Event::IntraBirth { patch: x, target: site }
                }
                IntraMode::WithRejections => {
                    let slot = rng.random_range(0..n);
                    let site = Site { patch: x, slot };
                    let accept = self.control.get(self.state.occupancy(site));
                    if rng.random::<f64>() < accept {
                        self.state.shift(site, true, &self.control);
                        Event::IntraBirth { patch: x, target: site }
                    } else {
                        Event::RejectedBirth { site }
                    }
                }
            }
        } else {
            let k = rng.random_range(0..u64::from(self.state.empty_sites(x)));
            let slot = pick_cumulative(self.state.patch(x), |v| u64::from(v == 0), k);
            let site = Site { patch: x, slot };
            let source = self.pick_source(x, rng);
            self.state.shift(site, true, &self.control);
            Event::InterBirth { source, target: site }
        };
        self.state.events += 1;
        if !matches!(event, Event::RejectedBirth { .. }) {
            self.refresh_rates_around(x);
        }
        event
    }

    fn pick_source<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let k = rng.random_range(0..self.neighbour_population(x));
        let mut acc = 0;
        for &z in self.geometry.neighbors(x) {
            acc += self.state.patch_population(z);
            if k < acc {
                return z;
            }
        }
        x
    }

    /// Runs until extinction or a cap.
    pub fn run<R: Rng + ?Sized>(&mut self, stopping: &Stopping, rng: &mut R) -> Outcome {
        self.run_observed(stopping, rng, |_| Ok(()))
            .expect("observer without side effects cannot fail")
    }

    /// As [`Self::run`], streaming every executed event as a CSV line.
    pub fn run_logged<R: Rng + ?Sized, W: Write>(
        &mut self,
        stopping: &Stopping,
        rng: &mut R,
        log: &mut CsvEventLog<W>,
    ) -> Result<Outcome, SimError> {
        Ok(self.run_observed(stopping, rng, |rec| log.record(rec))?)
    }

    pub fn run_observed<R, F>(&mut self, stopping: &Stopping, rng: &mut R, mut observe: F) -> std::io::Result<Outcome>
    where
        R: Rng + ?Sized,
        F: FnMut(&EventRecord) -> std::io::Result<()>,
    {
        let mut peak = self.state.total_population();
        let status = loop {
            let pop = self.state.total_population();
            if pop == 0 {
                break Status::Extinct { time: self.state.time };
            }
            if pop >= stopping.pop_cap {
                break Status::PopulationCapReached;
            }
            let total = self.tree.total();
            let dt = rng.sample::<f64, _>(Exp1) / total;
            if self.state.time + dt > stopping.t_max {
                self.state.time = stopping.t_max;
                break Status::TimeCapReached;
            }
            self.state.time += dt;
            let event = self.fire(total, rng);
            let population = self.state.total_population();
            peak = peak.max(population);
            observe(&EventRecord {
                time: self.state.time,
                event,
                population,
            })?;
        };
        Ok(Outcome {
            status,
            events: self.state.events,
            peak_population: peak,
            final_time: self.state.time,
            final_population: self.state.total_population(),
        })
    }
}

fn check_geometry(params: &Params, geometry: &Geometry) -> Result<(), SimError> {
    if params.d != geometry.d() {
        return Err(SimError::Mismatch(format!("d = {} vs geometry d = {}", params.d, geometry.d())));
    }
    if params.n != geometry.patch_size() {
        return Err(SimError::Mismatch(format!(
            "N = {} vs geometry N = {}",
            params.n,
            geometry.patch_size()
        )));
    }
    Ok(())
}

/// Slot holding the `k`-th unit when slot `r` carries `weight(patch[r])` units.
#[inline]
fn pick_cumulative(patch: &[u32], weight: impl Fn(u32) -> u64, k: u64) -> usize {
    let mut acc = 0;
    for (r, &v) in patch.iter().enumerate() {
        acc += weight(v);
        if k < acc {
            return r;
        }
    }
    unreachable!("cumulative pick past the patch total")
}

/// Slot where the running sum of `weight` first exceeds `target`; never a
/// zero-weight slot.
#[inline]
fn pick_weighted(patch: &[u32], weight: impl Fn(u32) -> f64, target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = None;
    for (r, &v) in patch.iter().enumerate() {
        let w = weight(v);
        if w > 0.0 {
            acc += w;
            last = Some(r);
            if target < acc {
                return r;
            }
        }
    }
    last.expect("intra birth drawn in a patch with zero control sum")
}
