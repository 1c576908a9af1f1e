//! Lane-change reward learning and trajectory generation.
//!
//! Rewards are linear in a set of hand-built lane-change features, two of
//! which weight collision risk by how badly a reference predictor has been
//! tracking each adjacent car. Weights are learned from demonstrations with a
//! Laplace-approximated maximum-entropy likelihood and used to generate
//! trajectories by single-shooting optimization over the controls of a
//! kinematic unicycle.
//!
//! The crate is `no_std` and needs only `alloc`; file formats and the
//! command-line tool live in the `lcirl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod irl;
pub mod jet;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod prediction;
pub mod scenario;
pub mod synth;
pub mod trajopt;

pub use error::{Error, Result};
