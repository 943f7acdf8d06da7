//! Experiment harness: gas campaigns, the signer-censorship experiment, the
//! adversarial suite and the GOMS workflow models.
//!
//! Every run builds its own [`World`] from a [`ScenarioSpec`](crate::config::ScenarioSpec),
//! so runs are independent and reproducible from the seed alone.

mod adversarial;
mod campaign;
mod censorship;
pub mod goms;
mod world;

use thiserror::Error;

use crate::config::ConfigError;
use crate::entrypoint::EntryPointError;
use crate::ledger::LedgerError;
use crate::paymasters::PaymasterError;
use crate::registry::RegistryError;
use crate::stats::StatsError;

pub use adversarial::{run_adversarial_suite, AdversarialReport, ThreatCheck};
pub use campaign::{run_campaign, run_system, Campaign, Excluded, OpReceipt, SystemRun, EOA_TX_GAS};
pub use censorship::{run_censorship_experiment, CensorshipReport, StorageAudit, Tally};
pub use world::{User, World};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("world setup failed: {0}")]
    Setup(String),
    #[error("entrypoint: {0}")]
    EntryPoint(#[from] EntryPointError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
}

impl From<LedgerError> for ScenarioError {
    fn from(e: LedgerError) -> Self {
        ScenarioError::Setup(e.to_string())
    }
}

impl From<RegistryError> for ScenarioError {
    fn from(e: RegistryError) -> Self {
        ScenarioError::Setup(e.to_string())
    }
}

impl From<PaymasterError> for ScenarioError {
    fn from(e: PaymasterError) -> Self {
        ScenarioError::Setup(e.to_string())
    }
}
