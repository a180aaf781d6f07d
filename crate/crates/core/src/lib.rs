//! Continual learning on non-stationary streams.
//!
//! The crate drives a learner-versus-stream game: each step the learner pays
//! the loss on a fresh batch before seeing its labels, then updates from data
//! delayed by an online validation buffer and from a bounded replay memory.
//! Updates use either a fixed number of gradient steps per batch or the
//! validation-selected number of steps (`Optimizer::Congrad`).

pub mod buffers;
pub mod cli;
pub mod config;
pub mod error;
pub mod learners;
pub mod models;
pub mod optim;
pub mod protocol;
pub mod rng;
pub mod streams;

pub use error::{Error, Result};
