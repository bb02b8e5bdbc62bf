//! Coating-defect arrival modelling and inspection planning for ship fleets.
//!
//! Defect arrivals per compartment follow a power-law non-homogeneous Poisson
//! process. The crate fits that process to interval-censored inspection
//! counts (maximum likelihood, individual and hierarchical Bayesian MCMC),
//! prices inspection plans against an age-dependent repair cost, searches for
//! cheaper plans with a genetic algorithm, and ships a Monte-Carlo simulator
//! used to cross-check the analytic pieces.

pub mod fleet;
pub mod economics;
pub mod inference;
pub mod nhpp;
pub mod plan;
pub mod planner;
pub mod rng;
pub mod simulator;
