//! Simulated EntryPoint with a one-operation bundler.
//!
//! [`Chain::handle_op`] walks a UserOperation through account validation,
//! paymaster validation, execution and postOp, recording every storage touch
//! and assembling a [`GasReceipt`]. Rejections in the two validation phases
//! leave no trace in state. A failed execution or postOp keeps the nonce bump
//! but reverts every ledger and paymaster effect of the operation.

mod bundler;
mod storage_rule;
mod userop;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::gasmodel::{apply_jitter, Component, GasCostTable, GasError, JitterStream, Usage};
use crate::ledger::{LedgerError, TokenLedger};
use crate::paymasters::{self, PaymasterError, PaymasterInstance, PaymasterKind, Settlement, ValidationResult};
use crate::registry::Registry;
use crate::trace::{AccessTrace, Phase, Recorder, Slot};
use crate::types::{Address, Hash32, SecretKey, U256};

pub use bundler::{AccountKind, BundlerProfile, PvgTable, Stack};
pub use storage_rule::{check_self_storage, StorageCheck};
pub use userop::{Action, UserOperation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryPointError {
    #[error("paymaster {0} is not registered on this chain")]
    UnknownPaymaster(Address),
    #[error("account {0} is not deployed")]
    UnknownAccount(Address),
    #[error("account signature or hash does not verify")]
    InvalidAccountSig,
    #[error("nonce {got} already used (next is {expected})")]
    NonceReplay { expected: U256, got: U256 },
    #[error("nonce {got} is ahead of the account (next is {expected})")]
    NonceGap { expected: U256, got: U256 },
    #[error("bundler profile has no PVG for {0:?}")]
    UnknownStack(Stack),
    #[error("paymaster rejected: {0}")]
    PaymasterRejected(PaymasterError),
    #[error("execution failed: {0}")]
    ExecutionFailed(LedgerError),
    #[error("postOp failed: {0}")]
    PostOpFailed(PaymasterError),
    #[error("paymaster deposit {have} cannot cover {need}")]
    InsufficientDeposit { have: U256, need: U256 },
    #[error("actual cost {need} exceeds the validated prefund {capped}")]
    CostExceedsPrefund { capped: U256, need: U256 },
    #[error("gas model: {0}")]
    Gas(GasError),
}

impl EntryPointError {
    /// Short machine-friendly name used in logs and CSVs.
    pub fn code(&self) -> &'static str {
        match self {
            EntryPointError::UnknownPaymaster(_) => "UnknownPaymaster",
            EntryPointError::UnknownAccount(_) => "UnknownAccount",
            EntryPointError::InvalidAccountSig => "InvalidAccountSig",
            EntryPointError::NonceReplay { .. } => "NonceReplay",
            EntryPointError::NonceGap { .. } => "NonceGap",
            EntryPointError::UnknownStack(_) => "UnknownStack",
            EntryPointError::PaymasterRejected(_) => "PaymasterRejected",
            EntryPointError::ExecutionFailed(_) => "ExecutionFailed",
            EntryPointError::PostOpFailed(_) => "PostOpFailed",
            EntryPointError::InsufficientDeposit { .. } => "InsufficientDeposit",
            EntryPointError::CostExceedsPrefund { .. } => "CostExceedsPrefund",
            EntryPointError::Gas(_) => "Gas",
        }
    }
}

/// Gas accounting of one bundled operation.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GasReceipt {
    pub tx_gas_used: u64,
    pub pvg: u64,
    pub actual_gas_used: u64,
    pub l1_fee_share: f64,
    pub components: BTreeMap<Component, u64>,
    /// xPNTs destroyed by this operation's settlement.
    #[serde(with = "crate::types::amount_serde")]
    pub settlement_burn: U256,
}

impl GasReceipt {
    pub fn new(components: BTreeMap<Component, u64>, pvg: u64, l1_fee_share: f64, settlement_burn: U256) -> GasReceipt {
        let tx_gas_used = components.values().sum();
        GasReceipt { tx_gas_used, pvg, actual_gas_used: tx_gas_used + pvg, l1_fee_share, components, settlement_burn }
    }

    /// `actualGasUsed = txGasUsed + pvg` and `txGasUsed = Σ components`.
    pub fn identity_holds(&self) -> bool {
        self.actual_gas_used == self.tx_gas_used + self.pvg && self.tx_gas_used == self.components.values().sum::<u64>()
    }

    pub fn component(&self, c: Component) -> u64 {
        self.components.get(&c).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct HandledOp {
    pub receipt: GasReceipt,
    pub trace: AccessTrace,
    pub validation: ValidationResult,
    pub settlement: Settlement,
}

#[derive(Clone, Debug)]
struct Account {
    key: SecretKey,
    kind: AccountKind,
}

/// One simulated chain: ledger, registry, paymasters, accounts and the
/// EntryPoint's own nonce and deposit maps.
#[derive(Clone, Debug)]
pub struct Chain {
    pub ledger: TokenLedger,
    pub registry: Registry,
    pub gas: GasCostTable,
    pub gas_price: U256,
    pub block: u64,
    paymasters: BTreeMap<Address, PaymasterInstance>,
    accounts: BTreeMap<Address, Account>,
    nonces: BTreeMap<Address, U256>,
    deposits: BTreeMap<Address, U256>,
    entry_point: Address,
    jitter: BTreeMap<PaymasterKind, JitterStream>,
}

/// Jitter stream index of each paymaster kind; stream 0 is the EOA path.
pub fn jitter_stream_id(kind: PaymasterKind) -> u64 {
    match kind {
        PaymasterKind::AoaV4 => 1,
        PaymasterKind::AoaSuper => 2,
        PaymasterKind::PoaVerifying => 3,
        PaymasterKind::PoaDexErc20 => 4,
    }
}

impl Chain {
    pub fn new(ledger: TokenLedger, registry: Registry, gas: GasCostTable, gas_price: U256, seed: u64) -> Chain {
        let jitter = PaymasterKind::ALL
            .into_iter()
            .map(|k| (k, JitterStream::new(seed, jitter_stream_id(k), gas.noise.amplitude(Some(k)))))
            .collect();
        Chain {
            ledger,
            registry,
            gas,
            gas_price,
            block: 0,
            paymasters: BTreeMap::new(),
            accounts: BTreeMap::new(),
            nonces: BTreeMap::new(),
            deposits: BTreeMap::new(),
            entry_point: Address::from_label("contract:EntryPoint"),
            jitter,
        }
    }

    pub fn entry_point(&self) -> Address {
        self.entry_point
    }

    pub fn add_account(&mut self, addr: Address, key: SecretKey, kind: AccountKind) {
        self.accounts.insert(addr, Account { key, kind });
    }

    pub fn add_paymaster(&mut self, pm: PaymasterInstance) -> Result<(), PaymasterError> {
        pm.check()?;
        self.paymasters.insert(pm.addr, pm);
        Ok(())
    }

    pub fn paymaster(&self, addr: Address) -> Option<&PaymasterInstance> {
        self.paymasters.get(&addr)
    }

    pub fn paymaster_mut(&mut self, addr: Address) -> Option<&mut PaymasterInstance> {
        self.paymasters.get_mut(&addr)
    }

    pub fn paymasters(&self) -> impl Iterator<Item = &PaymasterInstance> {
        self.paymasters.values()
    }

    /// Runs `f` with the registry and a paymaster borrowed side by side, for
    /// mirror writes.
    pub fn with_registry_and_paymaster<T>(
        &mut self,
        pm: Address,
        f: impl FnOnce(&Registry, &mut PaymasterInstance, &TokenLedger) -> T,
    ) -> Option<T> {
        let instance = self.paymasters.get_mut(&pm)?;
        Some(f(&self.registry, instance, &self.ledger))
    }

    pub fn deposit(&mut self, pm: Address, amount: U256) {
        let d = self.deposits.entry(pm).or_default();
        *d = d.saturating_add(amount);
    }

    pub fn deposit_of(&self, pm: Address) -> U256 {
        self.deposits.get(&pm).copied().unwrap_or_default()
    }

    pub fn nonce_of(&self, sender: Address) -> U256 {
        self.nonces.get(&sender).copied().unwrap_or_default()
    }

    /// Builds and signs an operation for `sender` at its next nonce.
    pub fn build_op(
        &self,
        sender: Address,
        action: Action,
        paymaster: Address,
        paymaster_data: Vec<u8>,
        max_cost: U256,
    ) -> Result<UserOperation, EntryPointError> {
        let account = self.accounts.get(&sender).ok_or(EntryPointError::UnknownAccount(sender))?;
        let op = UserOperation::new(sender, self.nonce_of(sender), action, paymaster, paymaster_data, max_cost);
        Ok(op.signed(&account.key))
    }

    /// A postOp call made by `caller`. `executing` is the hash the EntryPoint
    /// is currently executing, `None` outside any bundle.
    pub fn call_post_op(
        &mut self,
        caller: Address,
        pm: Address,
        executing: Option<Hash32>,
        ctx: &paymasters::SettlementContext,
        actual_cost: U256,
    ) -> Result<Settlement, PaymasterError> {
        let instance = self.paymasters.get_mut(&pm).ok_or(PaymasterError::UnknownOperator(pm))?;
        paymasters::post_op(
            instance,
            &mut self.ledger,
            caller,
            self.entry_point,
            executing,
            ctx,
            actual_cost,
            self.block,
            &mut Recorder::disabled(),
        )
    }

    pub fn handle_op(&mut self, op: &UserOperation, bundler: &BundlerProfile) -> Result<HandledOp, EntryPointError> {
        let ep = self.entry_point;
        let pm_kind = self.paymasters.get(&op.paymaster).ok_or(EntryPointError::UnknownPaymaster(op.paymaster))?.kind;
        let account = self.accounts.get(&op.sender).ok_or(EntryPointError::UnknownAccount(op.sender))?;
        let pvg = bundler.pvg_for(Stack { paymaster: pm_kind, account: account.kind })?;

        let mut rec = Recorder::new(Phase::AccountValidation);
        rec.read(op.sender, Slot::AccountKey);
        if op.compute_hash() != op.user_op_hash || !account.key.verify(&op.user_op_hash, &op.account_signature) {
            return Err(EntryPointError::InvalidAccountSig);
        }
        rec.read(ep, Slot::Nonce(op.sender));
        let expected = self.nonce_of(op.sender);
        if op.nonce < expected {
            return Err(EntryPointError::NonceReplay { expected, got: op.nonce });
        }
        if op.nonce > expected {
            return Err(EntryPointError::NonceGap { expected, got: op.nonce });
        }
        rec.write(ep, Slot::Nonce(op.sender));

        rec.set_phase(Phase::PaymasterValidation);
        let pm = &self.paymasters[&op.paymaster];
        let validation = paymasters::validate(pm, &self.ledger, op, self.block, &self.gas, &mut rec)
            .map_err(EntryPointError::PaymasterRejected)?;

        self.nonces.insert(op.sender, expected + 1);
        let ledger_before = self.ledger.clone();
        let pm_before = pm.clone();
        let deposit_before = self.deposit_of(op.paymaster);

        rec.set_phase(Phase::Execution);
        if let Action::Erc20Transfer { token, to, amount } = op.action {
            if let Err(e) = self.ledger.transfer_traced(token, op.sender, to, amount, &mut rec) {
                self.ledger = ledger_before;
                return Err(EntryPointError::ExecutionFailed(e));
            }
        }

        let jitter = self.jitter.get_mut(&pm_kind).map(|s| s.peek()).unwrap_or(0);
        let mut components = self.pre_post_op_components(pm_kind, op, &validation, rec.trace(), jitter)?;
        let actual_cost = self.gas_price.saturating_mul(U256::from(components.values().sum::<u64>() + pvg));

        let mut settlement = Settlement::default();
        rec.set_phase(Phase::PostOp);
        let instance = self.paymasters.get_mut(&op.paymaster).expect("looked up above");
        if instance.has_post_op() {
            let result = paymasters::post_op(
                instance,
                &mut self.ledger,
                ep,
                ep,
                Some(op.user_op_hash),
                &validation.context,
                actual_cost,
                self.block,
                &mut rec,
            );
            match result {
                Ok(s) => settlement = s,
                Err(e) => {
                    self.ledger = ledger_before;
                    *instance = pm_before;
                    return Err(EntryPointError::PostOpFailed(e));
                }
            }
            let swaps = u32::from(pm_kind == PaymasterKind::PoaDexErc20);
            let usage = Usage { swaps, ..Usage::from(rec.trace().stats_where(|a| a.phase == Phase::PostOp && a.contract != ep)) };
            let gas = self.gas.charge_component(pm_kind, Component::PostOp, &usage).map_err(EntryPointError::Gas)?;
            components.insert(Component::PostOp, gas);
        }

        rec.read(ep, Slot::Deposit(op.paymaster));
        rec.write(ep, Slot::Deposit(op.paymaster));
        // The EntryPoint's own touches are priced inside the overhead component.
        let overhead = self
            .gas
            .charge_component(pm_kind, Component::EntryPointOverhead, &Usage::from(rec.trace().stats_where(|a| a.contract == ep)))
            .map_err(EntryPointError::Gas)?;
        components.insert(Component::EntryPointOverhead, apply_jitter(overhead, jitter));

        let receipt = GasReceipt::new(components, pvg, bundler.l1_fee_share, settlement.xpnts_burned);
        let charge = self.gas_price.saturating_mul(U256::from(receipt.actual_gas_used));
        if charge > validation.capped_cost {
            self.ledger = ledger_before;
            self.paymasters.insert(op.paymaster, pm_before);
            return Err(EntryPointError::CostExceedsPrefund { capped: validation.capped_cost, need: charge });
        }
        if deposit_before < charge {
            self.ledger = ledger_before;
            self.paymasters.insert(op.paymaster, pm_before);
            return Err(EntryPointError::InsufficientDeposit { have: deposit_before, need: charge });
        }
        self.deposits.insert(op.paymaster, deposit_before - charge);
        if let Some(s) = self.jitter.get_mut(&pm_kind) {
            s.commit();
        }
        Ok(HandledOp { receipt, trace: rec.into_trace(), validation, settlement })
    }

    fn pre_post_op_components(
        &self,
        kind: PaymasterKind,
        op: &UserOperation,
        validation: &ValidationResult,
        trace: &AccessTrace,
        jitter: i64,
    ) -> Result<BTreeMap<Component, u64>, EntryPointError> {
        let ep = self.entry_point;
        let charge = |c: Component, usage: Usage| self.gas.charge_component(kind, c, &usage).map_err(EntryPointError::Gas);
        let phase_usage = |p: Phase| Usage::from(trace.stats_where(|a| a.phase == p && a.contract != ep));
        let mut components = BTreeMap::new();
        components.insert(Component::AccountValidation, charge(Component::AccountValidation, phase_usage(Phase::AccountValidation))?);
        components.insert(Component::PaymasterValidation, validation.gas_charged);
        if !matches!(op.action, Action::Noop) {
            components.insert(Component::Execution, charge(Component::Execution, phase_usage(Phase::Execution))?);
        }
        let overhead = charge(Component::EntryPointOverhead, Usage::from(trace.stats_where(|a| a.contract == ep)))?;
        components.insert(Component::EntryPointOverhead, apply_jitter(overhead, jitter));
        Ok(components)
    }
}
