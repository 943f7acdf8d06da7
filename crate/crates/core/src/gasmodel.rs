//! Gas accounting in two modes.
//!
//! * **Calibrated**: fixed per-component figures per paymaster kind. The
//!   `entryPointOverhead` component is the residual that makes each stack sum
//!   to its reference `txGasUsed` total.
//! * **Micro**: EVM-flavoured primitive prices applied to the storage trace of
//!   each phase. Useful for ordering and sensitivity questions, never for
//!   reproducing reference totals.
//!
//! Optional jitter perturbs the `entryPointOverhead` component with a bounded
//! uniform draw from a seeded stream.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paymasters::PaymasterKind;
use crate::trace::PhaseStats;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GasError {
    #[error("component {component} is not part of the {kind} pipeline")]
    UnknownComponent { kind: PaymasterKind, component: Component },
    #[error("l1 fee share {0} is outside [0, 1)")]
    InvalidShare(String),
    #[error("gas price must be positive")]
    InvalidGasPrice,
    #[error("calibrated components of {0} exceed its txGasUsed total")]
    NegativeResidual(PaymasterKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Component {
    AccountValidation,
    PaymasterValidation,
    Execution,
    PostOp,
    EntryPointOverhead,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::AccountValidation,
        Component::PaymasterValidation,
        Component::Execution,
        Component::PostOp,
        Component::EntryPointOverhead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::AccountValidation => "accountValidation",
            Component::PaymasterValidation => "paymasterValidation",
            Component::Execution => "execution",
            Component::PostOp => "postOp",
            Component::EntryPointOverhead => "entryPointOverhead",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GasMode {
    #[default]
    Calibrated,
    Micro,
}

impl std::str::FromStr for GasMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "calibrated" => Ok(GasMode::Calibrated),
            "micro" => Ok(GasMode::Micro),
            other => Err(format!("unknown gas mode {other:?} (expected calibrated or micro)")),
        }
    }
}

/// What a phase did, as far as micro-mode pricing is concerned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Usage {
    pub cold_reads: u32,
    pub warm_reads: u32,
    pub writes: u32,
    pub signatures: u32,
    pub swaps: u32,
}

impl From<PhaseStats> for Usage {
    fn from(s: PhaseStats) -> Usage {
        Usage { cold_reads: s.cold_reads, warm_reads: s.warm_reads, writes: s.writes, ..Usage::default() }
    }
}

/// Named components of one stack. `tx_gas_total` is the target sum; the
/// overhead residual is derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedStack {
    pub account_validation: u64,
    pub paymaster_validation: u64,
    pub execution: u64,
    pub post_op: Option<u64>,
    pub tx_gas_total: u64,
}

impl CalibratedStack {
    pub fn residual(&self) -> Option<u64> {
        let named = self.account_validation + self.paymaster_validation + self.execution + self.post_op.unwrap_or(0);
        self.tx_gas_total.checked_sub(named)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibratedTable {
    pub stacks: BTreeMap<PaymasterKind, CalibratedStack>,
}

impl Default for CalibratedTable {
    fn default() -> Self {
        let stack = |pmv, exec, post_op, total| CalibratedStack {
            account_validation: 12_000,
            paymaster_validation: pmv,
            execution: exec,
            post_op,
            tx_gas_total: total,
        };
        let stacks = BTreeMap::from([
            (PaymasterKind::AoaSuper, stack(48_625, 47_000, Some(5_000), 167_830)),
            (PaymasterKind::AoaV4, stack(35_549, 47_000, Some(5_000), 152_008)),
            (PaymasterKind::PoaVerifying, stack(16_000, 45_000, None, 205_951)),
            (PaymasterKind::PoaDexErc20, stack(25_000, 45_000, Some(150_000), 328_937)),
        ]);
        CalibratedTable { stacks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroTable {
    pub cold_storage_read: u64,
    pub warm_storage_read: u64,
    pub storage_write: u64,
    pub signature_verify: u64,
    pub hashing: u64,
    pub token_transfer_base: u64,
    pub swap_sequence: u64,
    pub approve_write: u64,
    pub entry_point_base: u64,
}

impl Default for MicroTable {
    fn default() -> Self {
        MicroTable {
            cold_storage_read: 2_100,
            warm_storage_read: 100,
            storage_write: 5_000,
            signature_verify: 3_000,
            hashing: 36,
            token_transfer_base: 21_000,
            swap_sequence: 150_000,
            approve_write: 46_000,
            entry_point_base: 40_000,
        }
    }
}

impl MicroTable {
    fn storage(&self, u: &Usage) -> u64 {
        u64::from(u.cold_reads) * self.cold_storage_read
            + u64::from(u.warm_reads) * self.warm_storage_read
            + u64::from(u.writes) * self.storage_write
    }
}

/// Half-width of the uniform jitter per stack, in gas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub aoa_super: u64,
    pub aoa_v4: u64,
    pub poa_verifying: u64,
    pub poa_dex_erc20: u64,
    pub eoa: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: false,
            aoa_super: 852,
            aoa_v4: 0,
            poa_verifying: 5_580,
            poa_dex_erc20: 37_549,
            eoa: 1_492,
        }
    }
}

impl NoiseConfig {
    /// Amplitude for a paymaster stack, `None` meaning the direct EOA path.
    pub fn amplitude(&self, kind: Option<PaymasterKind>) -> u64 {
        if !self.enabled {
            return 0;
        }
        match kind {
            Some(PaymasterKind::AoaSuper) => self.aoa_super,
            Some(PaymasterKind::AoaV4) => self.aoa_v4,
            Some(PaymasterKind::PoaVerifying) => self.poa_verifying,
            Some(PaymasterKind::PoaDexErc20) => self.poa_dex_erc20,
            None => self.eoa,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasCostTable {
    pub mode: GasMode,
    pub calibrated: CalibratedTable,
    pub micro: MicroTable,
    pub noise: NoiseConfig,
}

impl GasCostTable {
    pub fn calibrated() -> GasCostTable {
        GasCostTable::default()
    }

    pub fn micro(table: MicroTable) -> GasCostTable {
        GasCostTable { mode: GasMode::Micro, micro: table, ..GasCostTable::default() }
    }

    pub fn with_noise(mut self, enabled: bool) -> GasCostTable {
        self.noise.enabled = enabled;
        self
    }

    /// Whether `kind` has a postOp callback at all.
    pub fn has_post_op(&self, kind: PaymasterKind) -> bool {
        match self.mode {
            GasMode::Calibrated => self.calibrated.stacks.get(&kind).is_some_and(|s| s.post_op.is_some()),
            GasMode::Micro => kind != PaymasterKind::PoaVerifying,
        }
    }

    /// Deterministic gas of one component (no jitter).
    pub fn charge_component(&self, kind: PaymasterKind, component: Component, usage: &Usage) -> Result<u64, GasError> {
        let unknown = GasError::UnknownComponent { kind, component };
        if component == Component::PostOp && !self.has_post_op(kind) {
            return Err(unknown);
        }
        match self.mode {
            GasMode::Calibrated => {
                let s = self.calibrated.stacks.get(&kind).ok_or(unknown.clone())?;
                match component {
                    Component::AccountValidation => Ok(s.account_validation),
                    Component::PaymasterValidation => Ok(s.paymaster_validation),
                    Component::Execution => Ok(s.execution),
                    Component::PostOp => s.post_op.ok_or(unknown),
                    Component::EntryPointOverhead => s.residual().ok_or(GasError::NegativeResidual(kind)),
                }
            }
            GasMode::Micro => {
                let t = &self.micro;
                let storage = t.storage(usage);
                let sigs = u64::from(usage.signatures) * (t.signature_verify + t.hashing);
                Ok(match component {
                    Component::AccountValidation => t.signature_verify + t.hashing + storage,
                    Component::PaymasterValidation => storage + sigs,
                    Component::Execution => t.token_transfer_base + storage,
                    Component::PostOp => storage + u64::from(usage.swaps) * t.swap_sequence,
                    Component::EntryPointOverhead => t.entry_point_base + storage,
                })
            }
        }
    }

    /// Sum of the listed components, each charged with empty usage.
    pub fn assemble_tx_gas(&self, kind: PaymasterKind, present: &[Component]) -> Result<u64, GasError> {
        present
            .iter()
            .map(|c| self.charge_component(kind, *c, &Usage::default()))
            .sum()
    }

    /// Components of a full pipeline for `kind`, in receipt order.
    pub fn pipeline(&self, kind: PaymasterKind) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|c| *c != Component::PostOp || self.has_post_op(kind))
            .collect()
    }
}

/// ETH cost split between L2 execution and the L1 data fee, in wei.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EthCost {
    pub l2_cost: f64,
    pub l1_cost: f64,
    pub total: f64,
}

pub fn eth_cost(actual_gas_used: u64, gas_price_wei: f64, l1_share: f64) -> Result<EthCost, GasError> {
    if !(gas_price_wei > 0.0) {
        return Err(GasError::InvalidGasPrice);
    }
    if !(0.0..1.0).contains(&l1_share) {
        return Err(GasError::InvalidShare(l1_share.to_string()));
    }
    let l2_cost = actual_gas_used as f64 * gas_price_wei;
    let total = l2_cost / (1.0 - l1_share);
    Ok(EthCost { l2_cost, l1_cost: total - l2_cost, total })
}

/// Seeded jitter source for one stack.
///
/// Draws come in antithetic pairs `(u, -u)`, so any even number of committed
/// samples averages to exactly zero. `peek` is idempotent until `commit`, which
/// lets a caller discard the draw of an operation that was rejected.
#[derive(Clone, Debug)]
pub struct JitterStream {
    rng: ChaCha8Rng,
    amplitude: u64,
    mirror: Option<i64>,
    peeked: Option<i64>,
}

impl JitterStream {
    /// Stream `stream` of the ChaCha8 generator seeded with `seed`.
    pub fn new(seed: u64, stream: u64, amplitude: u64) -> JitterStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        JitterStream { rng, amplitude, mirror: None, peeked: None }
    }

    pub fn amplitude(&self) -> u64 {
        self.amplitude
    }

    pub fn peek(&mut self) -> i64 {
        if let Some(v) = self.peeked {
            return v;
        }
        let a = self.amplitude as i64;
        let v = match self.mirror {
            Some(m) => m,
            None if a == 0 => 0,
            None => self.rng.random_range(-a..=a),
        };
        self.peeked = Some(v);
        v
    }

    pub fn commit(&mut self) {
        if let Some(v) = self.peeked.take() {
            self.mirror = match self.mirror {
                Some(_) => None,
                None => Some(-v),
            };
        }
    }
}

/// Applies a signed jitter to a non-negative gas figure.
pub fn apply_jitter(gas: u64, jitter: i64) -> u64 {
    gas.saturating_add_signed(jitter)
}
