//! Simulation-sampled impact map: dataset generation, persistence and
//! Gaussian RBF interpolation of the post-impact object twist.

mod generate;
mod io;
mod rbf;

pub use generate::{generate_dataset, grid_keys, ImpactArm, ImpactSetup};
pub use io::{parse_dataset, write_dataset, DatasetHeader, ParseError};
pub use rbf::{default_rho, ImpactDataset, ImpactSample, RIDGE};

use thiserror::Error;

use crate::dynamics::SimError;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("dataset is empty")]
    Empty,
    #[error("sample {0} has {1} key coordinates, expected {2}")]
    KeyShape(usize, usize, usize),
    #[error("arm count must be 1 or 2 (got {0})")]
    ArmCount(usize),
    #[error("samples {0} and {1} have coincident keys")]
    DuplicateKeys(usize, usize),
    #[error("RBF shape parameter must be positive and finite (got {0})")]
    Rho(f64),
    #[error("interpolation matrix is ill-conditioned (estimate {0:e}); reduce rho or widen the key spacing")]
    IllConditioned(f64),
    #[error("weights have not been built")]
    WeightsMissing,
    #[error("query has {got} coordinates, expected {expected}")]
    QueryShape { got: usize, expected: usize },
    #[error("dual-arm sample count must be a perfect square (got {0})")]
    NotSquare(usize),
    #[error("only {kept} of {requested} samples were feasible")]
    TooFewSamples { kept: usize, requested: usize },
    #[error("setup has {setup} arms but the plant has {plant} robots")]
    Setup { setup: usize, plant: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}
