//! Deterministic simulator of ERC-4337 gas sponsorship.
//!
//! It compares asset-oriented paymasters, whose validity rests on on-chain
//! state the user owns, with process-oriented ones gated by an off-chain
//! signer or a DEX route. Every UserOperation runs through a simulated
//! EntryPoint ([`entrypoint::Chain`]) over an exact token ledger, is priced by
//! a calibrated or micro gas model, and leaves a [`entrypoint::GasReceipt`]
//! plus a storage-access trace.
//!
//! ```
//! use aoa_sim::config::{ScenarioSpec, SystemId};
//! use aoa_sim::scenarios::run_system;
//!
//! let mut spec = ScenarioSpec::default();
//! spec.run.n = 2;
//! let run = run_system(&spec, SystemId::T21).unwrap();
//! let r = &run.receipts[0].receipt;
//! assert_eq!((r.tx_gas_used, r.pvg, r.actual_gas_used), (167_830, 118_988, 286_818));
//! ```

pub mod config;
pub mod entrypoint;
pub mod gasmodel;
pub mod ledger;
pub mod paymasters;
pub mod registry;
pub mod report;
pub mod scenarios;
pub mod stats;
pub mod trace;
pub mod types;

/// Any error a campaign, suite or report can end in.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Scenario(#[from] scenarios::ScenarioError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// The guide's chapters, compiled so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/paymasters.md")]
    mod paymasters {}
    #[doc = include_str!("../../../book/src/entrypoint.md")]
    mod entrypoint {}
    #[doc = include_str!("../../../book/src/gas-model.md")]
    mod gas_model {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
