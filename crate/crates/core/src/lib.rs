//! Tabular reinforcement learning with an optimistic initial model.
//!
//! The crate provides exact finite MDPs and dynamic-programming oracles
//! ([`mdp`]), the optimistic count model ([`model`]) and its learner
//! ([`oim`]), comparison learners ([`baselines`]), benchmark environments
//! ([`env`]), sample-complexity bounds ([`pac`]) and a seeded experiment
//! harness ([`harness`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod oim;
pub mod pac;
pub mod par;
pub mod sweep;

pub use agent::{Agent, TieBreak};
pub use env::{EnvInstance, EnvSpec, Environment, MazeMap};
pub use error::{Error, Result};
pub use harness::{run_experiment, AgentSpec, ExperimentConfig, Protocol, Summary};
pub use mdp::{ActionId, MdpBuilder, Policy, QTable, StateId, TabularMdp};
pub use model::ExtendedCountsModel;
pub use oim::{OimAgent, OimConfig, SweepMode};
