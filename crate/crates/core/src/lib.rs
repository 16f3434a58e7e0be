pub mod analytic;
pub mod canonical;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod gate;
pub mod pcac;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod types;
