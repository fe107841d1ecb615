//! Long-term base station clustering by hedonic coalition formation.
//!
//! Cells form coalitions that share CSI and align interference internally.
//! The crate provides the closed-form long-term throughput model, the
//! coalition formation protocol with its stability certifier, an exhaustive
//! optimal-partition oracle, short-term precoders (alignment construction
//! and robust WMMSE) and a Monte Carlo harness around them.

pub mod coalition;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod longterm;
pub mod netgen;
pub mod oracle;
pub mod precoding;
pub mod rng;
pub mod structure;

pub use error::{Error, Result};
pub use netgen::{ChannelRealization, Network, Scenario, SnrReference};
pub use structure::{CellSet, CoalitionStructure};
