use serde::{Deserialize, Serialize};

use crate::model::{ControlTable, Geometry};

/// Address of one site `(x, r)`: patch index and slot within the patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub patch: usize,
    pub slot: usize,
}

/// Occupancies `eta(x, r)` on a finite box plus the per-patch aggregates used
/// for event selection: population `P(x)`, empty-site count `Empty(x)` and
/// control sum `CSum(x) = sum_r c(eta(x, r))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    n: usize,
    eta: Vec<u32>,
    pop: Vec<u64>,
    empty: Vec<u32>,
    csum: Vec<f64>,
    total: u64,
    pub(crate) time: f64,
    pub(crate) events: u64,
}

impl LatticeState {
    /// No particles anywhere.
    pub fn empty(geometry: &Geometry) -> Self {
        let n = geometry.patch_size();
        let patches = geometry.patch_count();
        Self {
            n,
            eta: vec![0; geometry.site_count()],
            pop: vec![0; patches],
            empty: vec![n as u32; patches],
            // c(0) = 1 for every family.
            csum: vec![n as f64; patches],
            total: 0,
            time: 0.0,
            events: 0,
        }
    }

    /// One particle at slot 0 of the origin patch.
    pub fn single_particle(geometry: &Geometry) -> Self {
        let mut state = Self::empty(geometry);
        state.eta[geometry.origin() * state.n] = 1;
        state.recount();
        state
    }

    /// Arbitrary occupancy, indexed `patch * N + slot`.
    pub fn from_occupancy(geometry: &Geometry, eta: Vec<u32>) -> Option<Self> {
        if eta.len() != geometry.site_count() {
            return None;
        }
        let mut state = Self::empty(geometry);
        state.eta = eta;
        state.recount();
        Some(state)
    }

    /// Recomputes `P` and `Empty`; `CSum` is refreshed by [`Self::refresh_control`].
    fn recount(&mut self) {
        self.total = 0;
        for (x, patch) in self.eta.chunks(self.n).enumerate() {
            self.pop[x] = patch.iter().map(|&v| u64::from(v)).sum();
            self.empty[x] = patch.iter().filter(|&&v| v == 0).count() as u32;
            self.total += self.pop[x];
        }
    }

    pub(crate) fn refresh_control(&mut self, control: &ControlTable) {
        for x in 0..self.pop.len() {
            self.csum[x] = self.control_sum_of(x, control);
        }
    }

    #[inline]
    fn control_sum_of(&self, x: usize, control: &ControlTable) -> f64 {
        self.patch(x).iter().map(|&v| control.get(v)).sum()
    }

    /// Changes one site by `delta = +/-1` and refreshes that patch's caches.
    #[inline]
    pub(crate) fn shift(&mut self, site: Site, up: bool, control: &ControlTable) {
        let idx = site.patch * self.n + site.slot;
        let before = self.eta[idx];
        if up {
            self.eta[idx] = before + 1;
            self.pop[site.patch] += 1;
            self.total += 1;
            if before == 0 {
                self.empty[site.patch] -= 1;
            }
        } else {
            debug_assert!(before > 0);
            self.eta[idx] = before - 1;
            self.pop[site.patch] -= 1;
            self.total -= 1;
            if before == 1 {
                self.empty[site.patch] += 1;
            }
        }
        self.csum[site.patch] = self.control_sum_of(site.patch, control);
    }

    pub fn patch_size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn occupancy(&self, site: Site) -> u32 {
        self.eta[site.patch * self.n + site.slot]
    }

    #[inline]
    pub fn patch(&self, x: usize) -> &[u32] {
        &self.eta[x * self.n..(x + 1) * self.n]
    }

    pub fn occupancies(&self) -> &[u32] {
        &self.eta
    }

    #[inline]
    pub fn patch_population(&self, x: usize) -> u64 {
        self.pop[x]
    }

    #[inline]
    pub fn empty_sites(&self, x: usize) -> u32 {
        self.empty[x]
    }

    #[inline]
    pub fn control_sum(&self, x: usize) -> f64 {
        self.csum[x]
    }

    pub fn total_population(&self) -> u64 {
        self.total
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Patch totals `xi(x) = sum_r eta(x, r)`.
    pub fn projection(&self) -> Vec<u64> {
        self.pop.clone()
    }

    pub fn max_occupancy(&self) -> u32 {
        self.eta.iter().copied().max().unwrap_or(0)
    }

    /// Whether every cache equals its definition recomputed from `eta`.
    pub fn caches_consistent(&self, control: &ControlTable) -> bool {
        let mut fresh = self.clone();
        fresh.recount();
        fresh.refresh_control(control);
        fresh.pop == self.pop && fresh.empty == self.empty && fresh.csum == self.csum && fresh.total == self.total
    }
}
