//! Model-based clustering of food-assistance accessibility.
//!
//! The crate joins family service records with agency locations and tract
//! incomes, measures how far each family travels to its assigned agency,
//! clusters families with Gaussian mixtures chosen by BIC, and summarizes
//! each cluster (household composition, distance spread, one-mile coverage,
//! poor/rich tract shares). A synthetic scenario generator stands in for
//! real service data.

pub mod error;
pub mod geo;
pub mod ingest;
pub mod matrix;
pub mod mixture;
pub mod profile;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use matrix::RowMatrix;
