//! compasskit: discover accuracy-feasible configurations of a compound AI
//! workflow, derive queue-depth switching policies from an M/G/1 model, and
//! replay runtime configuration switching in a deterministic discrete-event
//! serving simulator.

pub mod cli;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod planner;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod search;
pub mod service;
pub mod sim;
pub mod space;

pub use error::{Error, Result};
