//! Autobidding under value-maximizing agents with ROI and budget
//! constraints: repeated auctions, pacing and baseline strategies, benchmark
//! oracles, a seeded simulator and a command line front end.

pub mod auction;
pub mod cli;
pub mod environment;
pub mod ledger;
pub mod oracle;
pub mod rng;
pub mod simulator;
pub mod strategies;
