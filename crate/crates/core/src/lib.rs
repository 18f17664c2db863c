pub mod adversary;
pub mod bench;
pub mod checks;
pub mod confidence;
pub mod config;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod mdp;
pub mod occupancy_opt;
pub mod rng;

pub use error::{Error, Result};
