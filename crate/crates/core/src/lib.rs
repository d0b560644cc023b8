//! Recursive moral-hazard contracts between a security buyer and a managed
//! security service provider, and price competition among providers.

pub mod cli;
pub mod config;
pub mod contract;
pub mod error;
pub mod model;
pub mod oligopoly;
pub mod simulator;
