//! Genetic-algorithm search over the learning hyperparameters of a
//! goal-conditioned DDPG+HER agent, on small kinematic tasks with sparse
//! rewards. The GA minimizes epochs-to-goal of full training runs and the
//! tuned parameters are compared against hand-set defaults on episodes,
//! steps, epochs, and wall time.

pub mod agent;
pub mod commands;
pub mod config;
pub mod env;
pub mod error;
pub mod ga;
pub mod nn;
pub mod replay;
pub mod rundir;
pub mod trainer;

pub use error::{Error, Result};
