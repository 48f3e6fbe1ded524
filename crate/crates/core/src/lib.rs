//! Reinforcement-learning search for parameterized quantum circuit
//! architectures used as classifiers.
//!
//! An outer-loop agent builds a circuit one gate at a time; after each gate
//! an inner loop trains the circuit's rotation angles on a dataset through
//! exact statevector simulation and reports its test accuracy, which drives
//! the shaped reward.

pub mod agent;
pub mod analysis;
pub mod circuits;
pub mod config;
pub mod datasets;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod inner_loop;
pub mod optim;
pub mod quantum;

pub use error::{Error, Result};
