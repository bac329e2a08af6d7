//! Connectivity-aware UAV path planning in a dense urban radio environment.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: axis-aligned building world, line-of-sight tests, obstacle
//!   sensing and scenario files.
//! * [`radio`]: sectorised antenna gain, LoS/NLoS urban micro/macro path loss
//!   and RSRP at an arbitrary UAV position.
//! * [`coverage`]: RSRP heatmaps over horizontal grids.
//! * [`env`]: the flight MDP (state, hybrid action, banded reward).
//! * [`agent`]: from-scratch MLPs, PPO with GAE, and the A3-style handover
//!   baseline.
//! * [`harness`]: evaluation sweeps, metrics and comparison tables.
//! * [`validate`]: brute-force oracles used by the `validate` command and the
//!   acceptance suite.

pub mod agent;
pub mod coverage;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod radio;
pub mod rng;
pub mod validate;

pub use geometry::{Building, ObstacleReading, Scenario, Vec3};
pub use radio::{GbsClass, GbsConfig, RadioConfig};
