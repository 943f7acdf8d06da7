//! Scenario files.
//!
//! A scenario is a TOML document with the sections below; every key has a
//! default, so an empty file is a valid scenario.
//!
//! ```toml
//! [run]
//! name = "smoke"
//! seed = 7
//! n = 10
//! systems = ["T2.1", "B1_Alchemy"]
//!
//! [chain]
//! gas_price = "1e6"
//!
//! [[operators]]
//! name = "community-a"
//!
//! [faults]
//! signer_offline = [[0, 1000]]
//! ```
//!
//! `[gas]` holds the cost tables. The mode and the noise switch always come
//! from `[run]`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrypoint::AccountKind;
use crate::gasmodel::{GasCostTable, GasMode};
use crate::paymasters::PaymasterKind;
use crate::stats::DEFAULT_RESAMPLES;
use crate::types::{amount_serde, Rational, U256};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// One measured system of a gas campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SystemId {
    /// Direct EOA transfer, no EntryPoint.
    #[serde(rename = "A_EOA")]
    Eoa,
    /// PaymasterV4.
    #[serde(rename = "T1")]
    T1,
    /// SuperPaymaster.
    #[serde(rename = "T2.1")]
    T21,
    /// Verifying paymaster on a vendor account.
    #[serde(rename = "B1_Alchemy")]
    B1Alchemy,
    /// DEX-routed ERC-20 paymaster.
    #[serde(rename = "B2_Pimlico")]
    B2Pimlico,
}

impl SystemId {
    pub const ALL: [SystemId; 5] =
        [SystemId::Eoa, SystemId::T1, SystemId::T21, SystemId::B1Alchemy, SystemId::B2Pimlico];

    pub fn label(self) -> &'static str {
        match self {
            SystemId::Eoa => "A_EOA",
            SystemId::T1 => "T1",
            SystemId::T21 => "T2.1",
            SystemId::B1Alchemy => "B1_Alchemy",
            SystemId::B2Pimlico => "B2_Pimlico",
        }
    }

    pub fn paymaster_kind(self) -> Option<PaymasterKind> {
        match self {
            SystemId::Eoa => None,
            SystemId::T1 => Some(PaymasterKind::AoaV4),
            SystemId::T21 => Some(PaymasterKind::AoaSuper),
            SystemId::B1Alchemy => Some(PaymasterKind::PoaVerifying),
            SystemId::B2Pimlico => Some(PaymasterKind::PoaDexErc20),
        }
    }

    pub fn account_kind(self) -> AccountKind {
        match self {
            SystemId::B1Alchemy => AccountKind::Vendor,
            _ => AccountKind::Reference,
        }
    }

    pub fn for_kind(kind: PaymasterKind) -> SystemId {
        match kind {
            PaymasterKind::AoaV4 => SystemId::T1,
            PaymasterKind::AoaSuper => SystemId::T21,
            PaymasterKind::PoaVerifying => SystemId::B1Alchemy,
            PaymasterKind::PoaDexErc20 => SystemId::B2Pimlico,
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SystemId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemId::ALL.into_iter().find(|id| id.label() == s).ok_or_else(|| format!("unknown system {s:?}"))
    }
}

/// Half-open block interval `[start, end)`, written `[start, end]` in TOML.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange(pub u64, pub u64);

impl BlockRange {
    pub fn contains(&self, block: u64) -> bool {
        self.0 <= block && block < self.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub seed: u64,
    /// Operations per system.
    pub n: usize,
    pub gas_mode: GasMode,
    pub noise: bool,
    pub resamples: usize,
    pub systems: Vec<SystemId>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            name: "default".into(),
            seed: 42,
            n: 50,
            gas_mode: GasMode::Calibrated,
            noise: false,
            resamples: DEFAULT_RESAMPLES,
            systems: SystemId::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSpec {
    /// Wei per gas.
    #[serde(with = "amount_serde")]
    pub gas_price: U256,
    #[serde(with = "amount_serde")]
    pub protocol_hard_cap: U256,
    #[serde(with = "amount_serde")]
    pub max_single_tx_limit: U256,
    #[serde(with = "amount_serde")]
    pub mint_burn_floor: U256,
    pub l1_fee_share: f64,
    /// Uniform PVG for every stack instead of the calibrated table.
    pub pvg: Option<u64>,
    pub staleness_threshold: u64,
    pub dvt_freshness: u64,
    pub quorum: usize,
    pub keepers: usize,
    /// Wei per aPNTs base unit.
    pub eth_per_apnts: Rational,
    #[serde(with = "amount_serde")]
    pub paymaster_stake: U256,
    #[serde(with = "amount_serde")]
    pub paymaster_deposit: U256,
    /// Fee-token base units per wei.
    pub dex_oracle_price: Rational,
    #[serde(with = "amount_serde")]
    pub dex_pool_tokens: U256,
    #[serde(with = "amount_serde")]
    pub dex_pool_eth: U256,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            gas_price: U256::exp10(6),
            protocol_hard_cap: U256::exp10(15),
            max_single_tx_limit: U256::tokens(5_000),
            mint_burn_floor: U256::ether(),
            l1_fee_share: 0.08,
            pvg: None,
            staleness_threshold: 300,
            dvt_freshness: 50,
            quorum: 3,
            keepers: 3,
            eth_per_apnts: Rational::from_ints(1, 100_000),
            paymaster_stake: U256::ether(),
            paymaster_deposit: U256::tokens(1_000),
            dex_oracle_price: Rational::integer(3_000),
            dex_pool_tokens: U256::tokens(3_000_000),
            dex_pool_eth: U256::tokens(1_000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSpec {
    pub name: String,
    pub exchange_rate: Rational,
    #[serde(with = "amount_serde")]
    pub per_card_spending_cap: U256,
    pub rate_limit_window: u64,
    #[serde(with = "amount_serde")]
    pub apnts_balance: U256,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec {
            name: "community-a".into(),
            exchange_rate: Rational::integer(1),
            per_card_spending_cap: U256::exp10(16),
            rate_limit_window: 100,
            apnts_balance: U256::tokens(1_000_000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserSpec {
    pub count: usize,
    #[serde(with = "amount_serde")]
    pub xpnts_balance: U256,
    #[serde(with = "amount_serde")]
    pub fee_token_balance: U256,
    #[serde(with = "amount_serde")]
    pub gtoken_balance: U256,
    pub with_sbt: bool,
    pub approve_dex: bool,
    /// `maxCost` of every operation, in wei.
    #[serde(with = "amount_serde")]
    pub max_cost: U256,
}

impl Default for UserSpec {
    fn default() -> Self {
        UserSpec {
            count: 5,
            xpnts_balance: U256::tokens(10_000),
            fee_token_balance: U256::tokens(1_000_000),
            gtoken_balance: U256::tokens(10),
            with_sbt: true,
            approve_dex: true,
            max_cost: U256::exp10(13),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// ERC-20 transfer of the fee token to a fixed recipient.
    #[default]
    Transfer,
    Noop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub action: ActionKind,
    #[serde(with = "amount_serde")]
    pub transfer_amount: U256,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { action: ActionKind::Transfer, transfer_amount: U256::ether() }
    }
}

/// From `at_block` on, `active` keepers report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeeperChange {
    pub at_block: u64,
    pub active: usize,
}

/// Block-indexed fault schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSchedule {
    pub signer_offline: Vec<BlockRange>,
    /// User indices the signer service refuses.
    pub blacklist: Vec<usize>,
    /// Blocks at which the primary price feed is past its staleness threshold.
    pub price_feed_stale: Vec<BlockRange>,
    pub keeper_changes: Vec<KeeperChange>,
}

impl FaultSchedule {
    pub fn signer_offline_at(&self, block: u64) -> bool {
        self.signer_offline.iter().any(|r| r.contains(block))
    }

    pub fn feed_stale_at(&self, block: u64) -> bool {
        self.price_feed_stale.iter().any(|r| r.contains(block))
    }

    /// Keepers reporting at `block`, starting from `initial`.
    pub fn active_keepers_at(&self, block: u64, initial: usize) -> usize {
        self.keeper_changes
            .iter()
            .filter(|c| c.at_block <= block)
            .max_by_key(|c| c.at_block)
            .map_or(initial, |c| c.active)
    }
}

/// Attack volumes for the adversarial suite. Zero disables an attack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarySpec {
    pub replay: u32,
    pub drain: u32,
    pub direct_post_op: u32,
    pub sybil: u32,
    pub theft: u32,
    pub firewall_probes: u32,
    pub governance: bool,
    pub bundler_switch: bool,
    /// Turns the transfer firewall off to show the suite catches it.
    pub firewall_disabled: bool,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            replay: 10,
            drain: 5,
            direct_post_op: 5,
            sybil: 100,
            theft: 5,
            firewall_probes: 5,
            governance: true,
            bundler_switch: true,
            firewall_disabled: false,
        }
    }
}

impl AdversarySpec {
    pub fn none() -> AdversarySpec {
        AdversarySpec {
            replay: 0,
            drain: 0,
            direct_post_op: 0,
            sybil: 0,
            theft: 0,
            firewall_probes: 0,
            governance: false,
            bundler_switch: false,
            firewall_disabled: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub run: RunSpec,
    pub chain: ChainSpec,
    pub operators: Vec<OperatorSpec>,
    pub users: UserSpec,
    pub workload: WorkloadSpec,
    pub faults: FaultSchedule,
    pub adversaries: AdversarySpec,
    pub gas: GasCostTable,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            run: RunSpec::default(),
            chain: ChainSpec::default(),
            operators: vec![OperatorSpec::default()],
            users: UserSpec::default(),
            workload: WorkloadSpec::default(),
            faults: FaultSchedule::default(),
            adversaries: AdversarySpec::default(),
            gas: GasCostTable::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<ScenarioSpec, ConfigError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ScenarioSpec, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        ScenarioSpec::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.run.n == 0 {
            return invalid("run.n must be at least 1".into());
        }
        if self.run.resamples == 0 {
            return invalid("run.resamples must be at least 1".into());
        }
        if self.run.systems.is_empty() {
            return invalid("run.systems is empty".into());
        }
        if self.users.count == 0 {
            return invalid("users.count must be at least 1".into());
        }
        if self.operators.is_empty() {
            return invalid("at least one [[operators]] entry is required".into());
        }
        let mut names: Vec<&str> = self.operators.iter().map(|o| o.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("operator names must be unique".into());
        }
        for o in &self.operators {
            if !o.exchange_rate.is_positive() || o.rate_limit_window == 0 {
                return invalid(format!("operator {:?} needs a positive exchange_rate and rate_limit_window", o.name));
            }
        }
        if let Some(&i) = self.faults.blacklist.iter().find(|&&i| i >= self.users.count) {
            return invalid(format!("blacklist index {i} is out of range for {} users", self.users.count));
        }
        let ranges = self.faults.signer_offline.iter().chain(&self.faults.price_feed_stale);
        if let Some(r) = ranges.into_iter().find(|r| r.0 > r.1) {
            return invalid(format!("block range [{}, {}] is reversed", r.0, r.1));
        }
        if !(0.0..=1.0).contains(&self.chain.l1_fee_share) {
            return invalid("chain.l1_fee_share must lie in [0, 1]".into());
        }
        if !self.chain.eth_per_apnts.is_positive() || !self.chain.dex_oracle_price.is_positive() {
            return invalid("prices must be positive".into());
        }
        if self.chain.quorum == 0 {
            return invalid("chain.quorum must be at least 1".into());
        }
        for kind in PaymasterKind::ALL {
            if let Some(stack) = self.gas.calibrated.stacks.get(&kind) {
                if stack.residual().is_none() {
                    return invalid(format!("calibrated components of {kind} exceed its total"));
                }
            }
        }
        Ok(())
    }

    /// The gas table with `[run]`'s mode and noise switch applied.
    pub fn gas_table(&self) -> GasCostTable {
        let mut gas = self.gas.clone();
        gas.mode = self.run.gas_mode;
        gas.noise.enabled = self.run.noise;
        gas
    }
}
