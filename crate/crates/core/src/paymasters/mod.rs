//! The four paymaster state machines.
//!
//! | kind | gate | settlement |
//! |---|---|---|
//! | [`PaymasterKind::AoaSuper`] | Gas Card mirror, operator config, rate limit, capped cost, token balance | pull + burn xPNTs, move operator aPNTs to the treasury |
//! | [`PaymasterKind::AoaV4`] | capped cost, token balance | pull the fee token |
//! | [`PaymasterKind::PoaVerifying`] | off-chain signer | deposit only |
//! | [`PaymasterKind::PoaDexErc20`] | oracle, allowance, pool liquidity | pull the fee token, swap to ETH |
//!
//! Validation never mutates anything. Settlement runs under an all-or-nothing
//! guard: on any error the paymaster and ledger are restored.

mod pool;
mod settlement;
mod validation;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::LedgerError;
use crate::registry::{OperatorConfig, PriceCache};
use crate::trace::AccessTrace;
use crate::types::{Address, Hash32, Rational, SecretKey, TokenId, U256};

pub use pool::Pool;
pub use settlement::{post_op, Settlement};
pub use validation::validate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PaymasterKind {
    AoaSuper,
    AoaV4,
    PoaVerifying,
    PoaDexErc20,
}

impl PaymasterKind {
    pub const ALL: [PaymasterKind; 4] =
        [PaymasterKind::AoaV4, PaymasterKind::AoaSuper, PaymasterKind::PoaVerifying, PaymasterKind::PoaDexErc20];

    pub fn is_aoa(self) -> bool {
        matches!(self, PaymasterKind::AoaSuper | PaymasterKind::AoaV4)
    }
}

impl fmt::Display for PaymasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaymasterError {
    #[error("sender {0} holds no eligible Gas Card")]
    NoSbt(Address),
    #[error("operator {0} is not configured on this paymaster")]
    UnknownOperator(Address),
    #[error("operator {0} is inactive")]
    OperatorInactive(Address),
    #[error("rate limited: spent {spent} + {cost} exceeds cap {cap}")]
    RateLimited { spent: U256, cost: U256, cap: U256 },
    #[error("insufficient gas token: have {have}, need {need}")]
    InsufficientGasToken { have: U256, need: U256 },
    #[error("cached price is missing or older than {max_age} blocks")]
    StalePrice { max_age: u64 },
    #[error("signer service is offline")]
    SignerOffline,
    #[error("sender {0} is blacklisted by the signer service")]
    SenderBlacklisted(Address),
    #[error("paymaster signature does not verify")]
    BadSignature,
    #[error("allowance {have} is below the quoted {need}")]
    NoAllowance { have: U256, need: U256 },
    #[error("pool cannot supply {0} wei")]
    InsufficientLiquidity(U256),
    #[error("price oracle unavailable")]
    OracleUnavailable,
    #[error("{0} is not the EntryPoint")]
    NotEntryPoint(Address),
    #[error("settlement context does not belong to the executing operation")]
    HashMismatch,
    #[error("actual cost {actual} exceeds capped cost {capped}")]
    CostExceedsCap { actual: U256, capped: U256 },
    #[error("burn {amount} exceeds the per-transaction limit {limit}")]
    ExceedsCap { amount: U256, limit: U256 },
    #[error("firewall violation: {0}")]
    FirewallViolation(LedgerError),
    #[error("ledger: {0}")]
    Ledger(LedgerError),
    #[error("amount conversion overflowed")]
    ConversionOverflow,
    #[error("paymaster kind mismatch: expected {expected}, found {found}")]
    WrongKind { expected: PaymasterKind, found: PaymasterKind },
    #[error("invalid paymaster instance: {0}")]
    InvalidInstance(&'static str),
}

impl From<LedgerError> for PaymasterError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::ExceedsCap { amount, limit } => PaymasterError::ExceedsCap { amount, limit },
            LedgerError::UnauthorizedDestination { .. } => PaymasterError::FirewallViolation(e),
            other => PaymasterError::Ledger(other),
        }
    }
}

/// Off-chain signing API fronting a POA paymaster.
#[derive(Clone, Debug)]
pub struct SignerService {
    pub online: bool,
    pub blacklist: BTreeSet<Address>,
    pub signing_key: SecretKey,
}

impl SignerService {
    pub fn new(signing_key: SecretKey) -> SignerService {
        SignerService { online: true, blacklist: BTreeSet::new(), signing_key }
    }

    /// A fresh signature over `user_op_hash`, if the service agrees to sign.
    pub fn request(&self, sender: Address, user_op_hash: &Hash32) -> Result<Hash32, PaymasterError> {
        if !self.online {
            return Err(PaymasterError::SignerOffline);
        }
        if self.blacklist.contains(&sender) {
            return Err(PaymasterError::SenderBlacklisted(sender));
        }
        Ok(self.signing_key.sign(user_op_hash))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UserOpState {
    #[serde(with = "crate::types::amount_serde")]
    pub spent_in_window: U256,
    pub window_start_block: u64,
    #[serde(with = "crate::types::amount_serde")]
    pub last_nonce_seen: U256,
}

/// Fee-token side of the DEX-routed baseline.
#[derive(Clone, Debug)]
pub struct DexState {
    pub fee_token: TokenId,
    /// Fee-token base units per wei; `None` models an unavailable oracle.
    pub oracle_price: Option<Rational>,
    pub oracle_addr: Address,
    pub pool_addr: Address,
    pub pool: Pool,
    /// ETH obtained from postOp swaps so far.
    pub eth_recovered: U256,
}

#[derive(Clone, Debug)]
pub struct PaymasterInstance {
    pub kind: PaymasterKind,
    pub addr: Address,
    pub entry_point_stake: U256,
    pub operators: BTreeMap<Address, OperatorConfig>,
    pub user_op_state: BTreeMap<(Address, Address), UserOpState>,
    pub cached_price: Option<PriceCache>,
    pub sbt_holders: BTreeMap<Address, bool>,
    pub protocol_hard_cap: U256,
    pub signer_service: Option<SignerService>,
    /// Key the on-chain contract checks POA signatures against.
    pub verifying_key: Option<SecretKey>,
    pub treasury: Address,
    pub apnts: Option<TokenId>,
    pub staleness_threshold: u64,
    pub dex: Option<DexState>,
    /// Registry contract address, only consulted by the broken variant below.
    pub registry_addr: Address,
    /// Test hook: makes validation read the operator config live from the
    /// registry instead of the local mirror.
    #[doc(hidden)]
    pub live_registry_reads: bool,
}

impl PaymasterInstance {
    /// Bare instance of `kind`; callers fill in the kind-specific parts.
    pub fn new(kind: PaymasterKind, addr: Address, protocol_hard_cap: U256) -> PaymasterInstance {
        PaymasterInstance {
            kind,
            addr,
            entry_point_stake: U256::zero(),
            operators: BTreeMap::new(),
            user_op_state: BTreeMap::new(),
            cached_price: None,
            sbt_holders: BTreeMap::new(),
            protocol_hard_cap,
            signer_service: None,
            verifying_key: None,
            treasury: Address::ZERO,
            apnts: None,
            staleness_threshold: 300,
            dex: None,
            registry_addr: Address::ZERO,
            live_registry_reads: false,
        }
    }

    /// Checks the structural requirements of the instance's kind.
    pub fn check(&self) -> Result<(), PaymasterError> {
        use PaymasterError::InvalidInstance;
        if self.kind.is_aoa() {
            if self.signer_service.is_some() {
                return Err(InvalidInstance("AOA paymasters have no signer service"));
            }
            if self.entry_point_stake.is_zero() {
                return Err(InvalidInstance("AOA paymasters must be staked"));
            }
        } else if self.signer_service.is_none() {
            return Err(InvalidInstance("POA paymasters need a signer service"));
        }
        match self.kind {
            PaymasterKind::AoaSuper if self.apnts.is_none() || self.treasury.is_zero() => {
                Err(InvalidInstance("AoaSuper needs an aPNTs token and a treasury"))
            }
            PaymasterKind::PoaVerifying if self.verifying_key.is_none() => {
                Err(InvalidInstance("PoaVerifying needs a verifying key"))
            }
            PaymasterKind::PoaDexErc20 if self.dex.is_none() => Err(InvalidInstance("PoaDexErc20 needs a pool")),
            _ => Ok(()),
        }
    }

    pub fn has_post_op(&self) -> bool {
        self.kind != PaymasterKind::PoaVerifying
    }
}

/// Everything settlement needs, bound to one operation hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SettlementContext {
    pub kind: PaymasterKind,
    pub operator: Option<Address>,
    pub sender: Address,
    #[serde(with = "crate::types::amount_serde")]
    pub nonce: U256,
    pub user_op_hash: Hash32,
    #[serde(with = "crate::types::amount_serde")]
    pub capped_cost: U256,
    pub token: Option<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationResult {
    pub valid: bool,
    pub capped_cost: U256,
    pub context: SettlementContext,
    pub gas_charged: u64,
    /// Paymaster-validation entries only.
    pub access_trace: AccessTrace,
}

/// Amount of aPNTs covering `eth` wei, rounded up.
pub fn apnts_for_eth(eth: U256, price: &PriceCache) -> Result<U256, PaymasterError> {
    price.eth_per_apnts.div_ceil(eth).ok_or(PaymasterError::ConversionOverflow)
}

/// xPNTs burned for `eth` wei under an operator's exchange rate, rounded up.
pub fn xpnts_for_eth(eth: U256, price: &PriceCache, rate: &Rational) -> Result<U256, PaymasterError> {
    rate.mul_ceil(apnts_for_eth(eth, price)?).ok_or(PaymasterError::ConversionOverflow)
}

/// Operator address carried in `paymasterData` of AOA operations.
pub fn operator_from_data(data: &[u8]) -> Option<Address> {
    let bytes: [u8; 20] = data.try_into().ok()?;
    Some(Address(bytes))
}
