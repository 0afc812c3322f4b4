//! Numerical experiments on moment bounds and weak dependence for
//! slowly mixing (nonuniformly expanding) dynamical systems.
//!
//! The crate provides the doubling map, the Liverani–Saussol–Vaienti
//! intermittent map and an intermittent baker's map; Hölder observables and
//! their Birkhoff and iterated sums; a Young-tower return-time model; Monte
//! Carlo moment estimation with scaling fits; weak-dependence experiments on
//! blocks of sums; and fast–slow Euler schemes compared with their
//! homogenised SDE limit.
//!
//! Every Monte Carlo routine takes an explicit seed. Trial `t` draws from its
//! own ChaCha stream, so results do not depend on the thread count.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod experiments;
pub mod fastslow;
pub mod maps;
pub mod observables;
pub mod parallel;
pub mod selftest;
pub mod special;
pub mod stats;
pub mod sums;
pub mod tower;
pub mod weakdep;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use maps::{MapKind, MapSystem, OrbitCursor, Point};
pub use observables::{HolderObservable, ObservableForm};
pub use parallel::Exec;
pub use stats::{MomentEstimate, ScalingFit};

/// Sampling budget shared by the Monte Carlo routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    /// Number of independent trials (orbits or tower starts).
    pub trials: u64,
    /// Consecutive samples taken along each orbit, where applicable.
    pub orbit_len: u64,
    /// Burn-in steps for stationary starts; `None` uses the map default.
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub exec: Exec,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        McConfig {
            trials,
            orbit_len: 1,
            burn_in: None,
            seed,
            exec: Exec::default(),
        }
    }

    pub fn with_orbit_len(mut self, orbit_len: u64) -> Self {
        self.orbit_len = orbit_len;
        self
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}
