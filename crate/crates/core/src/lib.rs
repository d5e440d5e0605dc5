//! Self-healing connectivity for offshore dual-modem CPEs.
//!
//! The crate covers the full loop: a seeded windfarm scenario generator
//! ([`sim`]), the cleaning and labelling pipeline ([`preprocess`]), a small
//! from-scratch LSTM classifier ([`nn`]), a streaming decision service that
//! preemptively restarts degrading modems ([`decision`]), and before/after
//! evaluation of the closed loop ([`eval`]).

pub mod decision;
pub mod error;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod sim;
pub mod telemetry;

pub use error::{Error, Result};
pub use telemetry::{
    ActionRecord, ActionSource, Cell, Dataset, ModemSample, Partitions, SiteTopology,
};
