//! Single-trajectory linear actor-critic on linear MDPs, with exact oracles
//! for auditing what a run actually did.

pub mod actor_critic;
pub mod audit;
pub mod build;
pub mod chain;
pub mod error;
pub mod exact;
pub mod harness;
pub mod io;
pub mod mdp;
