//! Bayesian patchworks: a case-based reasoning model in which every case is
//! stitched together from a few influential neighbors in a parent set.
//!
//! * [`model`] holds the data types and the vote scores.
//! * [`inference`] runs collapsed Metropolis-within-Gibbs sampling.
//! * [`prediction`] turns posterior samples into labels and explanations.
//! * [`data`] loads and discretizes CSV data and builds fold plans.
//! * [`evaluation`] runs cross-validation, baselines and sweeps.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod prediction;
pub mod random;

pub use error::{Error, Result};
pub use model::{CategoricalDataset, Hyperparameters, ModelState, ParentSet, Variant};
