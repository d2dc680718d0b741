//! Joint access-point selection and power allocation for cognitive radio
//! networks.
//!
//! * [`netmodel`] builds and validates network snapshots.
//! * [`radio`] holds interference, rate and water-filling primitives.
//! * [`equilibria`] solves the per-AP power games (A-IWF, S-IWF).
//! * [`selection`] runs JASPA and its sequential/simultaneous variants and
//!   verifies joint equilibria.
//! * [`baselines`] provides closest-AP assignment, exhaustive search, the
//!   throughput bound and the multi-homing reference.
//! * [`experiment`] drives seeded Monte-Carlo batches and writes their outputs.

pub mod baselines;
pub mod equilibria;
pub mod error;
pub mod experiment;
pub mod netmodel;
pub mod radio;
pub mod selection;

pub use error::{Error, Result};
