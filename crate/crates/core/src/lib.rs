//! Simulation and numerical analysis of the patchy restrained process: a
//! population on `Z^d x K_N` with inter-patch breeding rate `lambda`,
//! intra-patch breeding rate `phi`, unit death rate and a self-regulating
//! acceptance function `c`.
//!
//! * [`model`]: control functions, parameters, geometry, named special cases.
//! * [`simulator`]: exact event-driven simulation and monotone couplings.
//! * [`meanfield`]: stationary solutions and integration of the mean-field ODEs.
//! * [`chain`]: the single-patch embedded random walk and the subcritical bound.
//! * [`brw`]: expectation of the dominating branching random walk.
//! * [`criticality`]: survival estimation, bisection and sweeps.
//! * [`cli`]: configuration and execution for the `prp` binary.

pub mod brw;
pub mod chain;
pub mod cli;
pub mod criticality;
pub mod meanfield;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod simulator;
