//! Simulation and analysis of two-photon interference between two
//! independent quantum-dot emitters: emission and detection Monte Carlo,
//! time-tag correlation, peak integration, curve fitting and circuit
//! calibration.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod correlate;
pub mod error;
pub mod fitting;
pub mod interfere;
pub mod model;
pub mod pipeline;
mod rng;
pub mod simulate;
pub mod tags;

pub use error::{Error, Result};
pub use model::{CircuitSpec, DetectorSpec, EmitterSpec, PulseTrainSpec};
pub use tags::{TagRecord, TimeTagStream};
