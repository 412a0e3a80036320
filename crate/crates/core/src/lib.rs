//! Random community affiliation graphs.
//!
//! A graph on `n` vertices is built as the union of `m` independent
//! communities. Each community draws a size `X` and a density `Q`, picks `X`
//! vertices uniformly at random and links every pair among them independently
//! with probability `Q`. This crate samples such graphs, tracks their
//! component structure with union-find, evaluates the closed-form threshold
//! quantities (`h`, `kappa`, `lambda`, crossing probabilities, degree
//! probabilities) and runs reproducible Monte Carlo experiments comparing the
//! simulated connectivity probability with `exp(-exp(c))`.

pub mod analytic;
pub mod cli;
pub mod connectivity;
mod error;
pub mod experiment;
pub mod laws;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result, ValidationErrors, Violation};
