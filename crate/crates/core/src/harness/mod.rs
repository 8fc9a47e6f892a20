//! Experiment plumbing: seeded streams, Monte-Carlo statistics, instance
//! generators, exhaustive oracles and the calibration fixture.

pub mod brute;
pub mod calibration;
pub mod generators;
pub mod rng;
pub mod stats;
pub mod suite;
