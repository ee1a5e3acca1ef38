//! Monotone coupling of two processes on one shared event stream.
//!
//! Every elementary transition (a site, or a patch total in projection mode)
//! carries a pair of rates `(a_lo, a_hi)`. A joint clock rings at
//! `max(a_lo, a_hi)` and a single uniform `U` decides: the low process moves
//! if `U max < a_lo`, the high process if `U max < a_hi`. Whenever the two
//! coordinates agree, ordered parameters give `a_lo <= a_hi` for births and
//! equal rates for deaths, so the order can never be broken.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{check_geometry, pick_cumulative, pick_weighted, LatticeState, SimError, Site, Stopping};
use crate::model::{ControlTable, Geometry, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Same patch size; checks `eta_lo(x, r) <= eta_hi(x, r)` at every site.
    Sitewise,
    /// Low process has `N = 1`; checks `xi_lo(x) <= sum_r eta_hi(x, r)`.
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub event: u64,
    pub patch: usize,
    pub slot: Option<usize>,
    pub lo: u64,
    pub hi: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub mode: CouplingMode,
    pub events: u64,
    pub final_time: f64,
    pub lo_population: u64,
    pub hi_population: u64,
    /// Whether the two occupancy fields were identical at every step.
    pub identical: bool,
    pub violation: Option<Violation>,
}

impl DominationReport {
    pub fn dominated(&self) -> bool {
        self.violation.is_none()
    }
}

struct Side<'a> {
    params: &'a Params,
    geometry: &'a Geometry,
    control: ControlTable,
    state: LatticeState,
}

impl Side<'_> {
    fn neighbour_population(&self, x: usize) -> u64 {
        let mut s: u64 = self
            .geometry
            .neighbors(x)
            .iter()
            .map(|&z| self.state.patch_population(z))
            .sum();
        if self.params.lambda_includes_own_patch {
            s += self.state.patch_population(x);
        }
        s
    }

    /// Per-site (death, intra, inter) rates.
    fn site_rates(&self, x: usize, slot: usize, nbr: u64) -> [f64; 3] {
        let n = self.geometry.patch_size() as f64;
        let v = self.state.occupancy(Site { patch: x, slot });
        let pop = self.state.patch_population(x) as f64;
        let intra = self.params.phi / n * pop * self.control.get(v);
        let inter = if v == 0 {
            self.params.lambda / n * nbr as f64
        } else {
            0.0
        };
        [f64::from(v), intra, inter]
    }

    /// Patch-total (up, down) rates.
    fn patch_rates(&self, x: usize) -> (f64, f64) {
        let n = self.geometry.patch_size() as f64;
        let pop = self.state.patch_population(x) as f64;
        let intra = self.params.phi / n * pop * self.state.control_sum(x);
        let inter = self.params.lambda / n * f64::from(self.state.empty_sites(x)) * self.neighbour_population(x) as f64;
        (intra + inter, pop)
    }

    /// Resolves a patch-level move to a concrete site, using private randomness.
    fn apply_patch_move<R: Rng + ?Sized>(&mut self, x: usize, up: bool, rng: &mut R) {
        let slot = if !up {
            let k = rng.random_range(0..self.state.patch_population(x));
            pick_cumulative(self.state.patch(x), u64::from, k)
        } else {
            let n = self.geometry.patch_size() as f64;
            let pop = self.state.patch_population(x) as f64;
            let intra = self.params.phi / n * pop * self.state.control_sum(x);
            let (total, _) = self.patch_rates(x);
            if rng.random::<f64>() * total < intra {
                let target = rng.random::<f64>() * self.state.control_sum(x);
                let control = &self.control;
                pick_weighted(self.state.patch(x), |v| control.get(v), target)
            } else {
                let k = rng.random_range(0..u64::from(self.state.empty_sites(x)));
                pick_cumulative(self.state.patch(x), |v| u64::from(v == 0), k)
            }
        };
        self.state.shift(Site { patch: x, slot }, up, &self.control);
    }
}

fn check_order(lo: &Params, hi: &Params, mode: CouplingMode) -> Result<(), SimError> {
    let mut problems = Vec::new();
    if lo.lambda > hi.lambda {
        problems.push(format!("lambda_lo = {} > lambda_hi = {}", lo.lambda, hi.lambda));
    }
    if lo.phi > hi.phi {
        problems.push(format!("phi_lo = {} > phi_hi = {}", lo.phi, hi.phi));
    }
    if !lo.control.dominated_by(&hi.control) {
        problems.push("c_lo is not pointwise <= c_hi".into());
    }
    if lo.d != hi.d || lo.lambda_includes_own_patch != hi.lambda_includes_own_patch {
        problems.push("d and neighbourhood convention must agree".into());
    }
    match mode {
        CouplingMode::Sitewise if lo.n != hi.n => problems.push("sitewise coupling needs equal N".into()),
        CouplingMode::Projection if lo.n != 1 => problems.push("projection coupling needs N_lo = 1".into()),
        _ => {}
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(SimError::Unordered(problems.join("; ")))
    }
}

/// Simulates two ordered processes together and reports the first violation
/// of the domination order, if any.
///
/// `geometry` is the box of the high process; in projection mode the low
/// process lives on the same box with `N = 1`. The run ends when the high
/// process dies out, reaches `pop_cap`, or at `t_max`.
pub fn run_coupled<R: Rng + ?Sized>(
    mode: CouplingMode,
    params_lo: &Params,
    params_hi: &Params,
    geometry: &Geometry,
    initial_lo: LatticeState,
    initial_hi: LatticeState,
    stopping: &Stopping,
    rng: &mut R,
) -> Result<DominationReport, SimError> {
    params_lo.validate()?;
    params_hi.validate()?;
    check_order(params_lo, params_hi, mode)?;
    check_geometry(params_hi, geometry)?;
    let geometry_lo = match mode {
        CouplingMode::Sitewise => geometry.clone(),
        CouplingMode::Projection => Geometry::new(geometry.d(), geometry.side(), 1, geometry.boundary())?,
    };
    if initial_lo.occupancies().len() != geometry_lo.site_count() || initial_hi.occupancies().len() != geometry.site_count()
    {
        return Err(SimError::BadInitialState);
    }
    let mut lo = Side {
        params: params_lo,
        geometry: &geometry_lo,
        control: ControlTable::new(params_lo.control.clone()),
        state: initial_lo,
    };
    let mut hi = Side {
        params: params_hi,
        geometry,
        control: ControlTable::new(params_hi.control.clone()),
        state: initial_hi,
    };
    lo.state.refresh_control(&lo.control);
    hi.state.refresh_control(&hi.control);

    let mut report = DominationReport {
        mode,
        events: 0,
        final_time: 0.0,
        lo_population: 0,
        hi_population: 0,
        identical: lo.state.occupancies() == hi.state.occupancies(),
        violation: None,
    };
    if let Some((patch, slot, a, b)) = first_violation(mode, &lo.state, &hi.state) {
        return Err(SimError::Unordered(format!(
            "initial states not ordered at patch {patch} slot {slot:?}: {a} > {b}"
        )));
    }

    let mut tree = super::SumTree::new(geometry.patch_count());
    let joint_patch_rate = |lo: &Side, hi: &Side, x: usize| -> f64 {
        match mode {
            CouplingMode::Sitewise => {
                let (nl, nh) = (lo.neighbour_population(x), hi.neighbour_population(x));
                (0..geometry.patch_size())
                    .map(|r| {
                        let a = lo.site_rates(x, r, nl);
                        let b = hi.site_rates(x, r, nh);
                        a[0].max(b[0]) + a[1].max(b[1]) + a[2].max(b[2])
                    })
                    .sum()
            }
            CouplingMode::Projection => {
                let (ul, dl) = lo.patch_rates(x);
                let (uh, dh) = hi.patch_rates(x);
                ul.max(uh) + dl.max(dh)
            }
        }
    };
    for x in 0..geometry.patch_count() {
        tree.set(x, joint_patch_rate(&lo, &hi, x));
    }

    let mut time = 0.0;
    loop {
        let pop_hi = hi.state.total_population();
        if pop_hi == 0 || pop_hi >= stopping.pop_cap {
            break;
        }
        let total = tree.total();
        if !(total > 0.0) {
            break;
        }
        let dt = rng.sample::<f64, _>(Exp1) / total;
        if time + dt > stopping.t_max {
            time = stopping.t_max;
            break;
        }
        time += dt;
        let x = tree.find(rng.random::<f64>() * total);
        let joint = joint_patch_rate(&lo, &hi, x);
        let mut u = rng.random::<f64>() * joint;
        let shared = rng.random::<f64>();
        match mode {
            CouplingMode::Sitewise => {
                let (nl, nh) = (lo.neighbour_population(x), hi.neighbour_population(x));
                let mut chosen = None;
                'outer: for r in 0..geometry.patch_size() {
                    let a = lo.site_rates(x, r, nl);
                    let b = hi.site_rates(x, r, nh);
                    for k in 0..3 {
                        let m = a[k].max(b[k]);
                        if u < m {
                            chosen = Some((r, k, a[k], b[k], m));
                            break 'outer;
                        }
                        u -= m;
                    }
                }
                // Rounding can leave `u` just past the last bucket.
                let (r, k, a, b, m) = match chosen {
                    Some(c) => c,
                    None => last_positive_bucket(&lo, &hi, x, nl, nh, geometry.patch_size()),
                };
                let site = Site { patch: x, slot: r };
                let up = k != 0;
                if shared * m < a {
                    lo.state.shift(site, up, &lo.control);
                }
                if shared * m < b {
                    hi.state.shift(site, up, &hi.control);
                }
            }
            CouplingMode::Projection => {
                let (ul, dl) = lo.patch_rates(x);
                let (uh, dh) = hi.patch_rates(x);
                let up_joint = ul.max(uh);
                let (up, a, b, m) = if u < up_joint || dl.max(dh) == 0.0 {
                    (true, ul, uh, up_joint)
                } else {
                    (false, dl, dh, dl.max(dh))
                };
                if shared * m < a {
                    lo.apply_patch_move(x, up, rng);
                }
                if shared * m < b {
                    hi.apply_patch_move(x, up, rng);
                }
            }
        }
        report.events += 1;
        tree.set(x, joint_patch_rate(&lo, &hi, x));
        for &z in geometry.neighbors(x) {
            tree.set(z, joint_patch_rate(&lo, &hi, z));
        }
        if report.identical && lo.state.occupancies() != hi.state.occupancies() {
            report.identical = false;
        }
        if report.violation.is_none() {
            if let Some((patch, slot, a, b)) = patch_violation(mode, &lo.state, &hi.state, x) {
                report.violation = Some(Violation {
                    time,
                    event: report.events,
                    patch,
                    slot,
                    lo: a,
                    hi: b,
                });
            }
        }
    }
    // Full sweep at the end guards the per-event local check.
    if report.violation.is_none() {
        if let Some((patch, slot, a, b)) = first_violation(mode, &lo.state, &hi.state) {
            report.violation = Some(Violation {
                time,
                event: report.events,
                patch,
                slot,
                lo: a,
                hi: b,
            });
        }
    }
    report.final_time = time;
    report.lo_population = lo.state.total_population();
    report.hi_population = hi.state.total_population();
    Ok(report)
}

fn last_positive_bucket(lo: &Side, hi: &Side, x: usize, nl: u64, nh: u64, n: usize) -> (usize, usize, f64, f64, f64) {
    let mut last = None;
    for r in 0..n {
        let a = lo.site_rates(x, r, nl);
        let b = hi.site_rates(x, r, nh);
        for k in 0..3 {
            let m = a[k].max(b[k]);
            if m > 0.0 {
                last = Some((r, k, a[k], b[k], m));
            }
        }
    }
    last.expect("patch drawn with zero joint rate")
}

type Breach = (usize, Option<usize>, u64, u64);

fn patch_violation(mode: CouplingMode, lo: &LatticeState, hi: &LatticeState, x: usize) -> Option<Breach> {
    match mode {
        CouplingMode::Sitewise => lo
            .patch(x)
            .iter()
            .zip(hi.patch(x))
            .position(|(a, b)| a > b)
            .map(|r| (x, Some(r), u64::from(lo.patch(x)[r]), u64::from(hi.patch(x)[r]))),
        CouplingMode::Projection => {
            let (a, b) = (lo.patch_population(x), hi.patch_population(x));
            (a > b).then_some((x, None, a, b))
        }
    }
}

fn first_violation(mode: CouplingMode, lo: &LatticeState, hi: &LatticeState) -> Option<Breach> {
    let patches = hi.occupancies().len() / hi.patch_size();
    (0..patches).find_map(|x| patch_violation(mode, lo, hi, x))
}
