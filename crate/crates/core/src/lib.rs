//! Forward-only two-stage optimization.
//!
//! Stage 1 runs CMA-ES whose population is shifted by a sharpness-aware
//! worst-case perturbation; once the validation metric plateaus the mean is
//! handed to stage 2, a zeroth-order SGD with randomized central differences
//! restricted to a periodically rebuilt coordinate mask.

pub mod cmaes;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod objective;
pub mod objectives;
pub mod pruning;
pub mod rng;
pub mod vector;
pub mod zosgd;

pub use error::{Error, Result};
pub use objective::{Evaluator, Objective, Phase, QueryCounter, QueryTotals};
pub use rng::RngStream;
pub use vector::ParameterVector;
