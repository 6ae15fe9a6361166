//! Data-driven computational mechanics with autoencoder-embedded material data.

pub mod autoencoder;
pub mod error;
pub mod global;
pub mod harness;
pub mod local;
pub mod meshfree;
pub mod phase;

pub use autoencoder::{Architecture, InputScaling, Network, TrainConfig, TrainedAutoencoder};
pub use error::{Error, Result};
pub use phase::{MaterialDataset, PhaseState, StandardizationStats, WeightMatrix};
