//! Multi-token ledger with ERC-20 semantics, the Zero-Approve spender
//! firewall, GToken burn-to-mint Gas Card issuance and soulbound records.
//!
//! Auto-approved spenders see a virtual allowance of `U256::MAX` for every
//! owner, but when they pull funds the destination must be the spender itself
//! or the registered settlement address, and a single pull is capped at
//! `max_single_tx_limit`. Every other spender goes through the ordinary
//! allowance-decrementing path.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::trace::{Recorder, Slot};
use crate::types::{Address, TokenId, U256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown token {0:?}")]
    UnknownToken(TokenId),
    #[error("insufficient balance of {holder} in token {token:?}: have {have}, need {need}")]
    InsufficientBalance { token: TokenId, holder: Address, have: U256, need: U256 },
    #[error("transfer to the zero address")]
    ZeroAddressDestination,
    #[error("unauthorized destination {to} for auto-approved spender {spender}")]
    UnauthorizedDestination { token: TokenId, spender: Address, to: Address },
    #[error("amount {amount} exceeds the per-transaction limit {limit}")]
    ExceedsCap { amount: U256, limit: U256 },
    #[error("insufficient allowance for {spender} on {owner}: have {have}, need {need}")]
    InsufficientAllowance { owner: Address, spender: Address, have: U256, need: U256 },
    #[error("{0} already holds a Gas Card")]
    AlreadyHoldsSbt(Address),
    #[error("insufficient GToken: have {have}, need {need}")]
    InsufficientGToken { have: U256, need: U256 },
    #[error("burn {burn} is below the mint floor {floor}")]
    BurnBelowFloor { burn: U256, floor: U256 },
    #[error("{0} is not the governance address")]
    NotGovernance(Address),
    #[error("{0} holds no Gas Card")]
    NoSbtRecord(Address),
    #[error("arithmetic overflow")]
    Overflow,
}

/// Construction parameters.
#[derive(Clone, Debug)]
pub struct LedgerConfig {
    pub governance: Address,
    pub super_paymaster: Address,
    pub max_single_tx_limit: U256,
    pub mint_burn_floor: U256,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            governance: Address::from_label("governance"),
            super_paymaster: Address::from_label("superpaymaster"),
            max_single_tx_limit: U256::tokens(5_000),
            mint_burn_floor: U256::ether(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TokenInfo {
    pub name: String,
    pub contract: Address,
}

/// Non-transferable Gas Card. No operation rebinds `owner`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SbtRecord {
    pub owner: Address,
    pub community_associations: BTreeSet<Address>,
    pub minted_at_block: u64,
    #[serde(with = "crate::types::amount_serde")]
    pub gtoken_burned: U256,
}

#[derive(Clone, Debug)]
pub struct TokenLedger {
    tokens: Vec<TokenInfo>,
    balances: BTreeMap<(TokenId, Address), U256>,
    allowances: BTreeMap<(TokenId, Address, Address), U256>,
    auto_approved: BTreeMap<TokenId, BTreeSet<Address>>,
    total_supply: BTreeMap<TokenId, U256>,
    burned: BTreeMap<TokenId, U256>,
    sbts: BTreeMap<Address, SbtRecord>,
    sbt_contract: Address,
    gtoken: TokenId,
    max_single_tx_limit: U256,
    super_paymaster: Address,
    governance: Address,
    mint_burn_floor: U256,
    firewall_enabled: bool,
}

impl TokenLedger {
    /// Creates a ledger with GToken pre-registered.
    pub fn new(config: LedgerConfig) -> TokenLedger {
        let mut ledger = TokenLedger {
            tokens: Vec::new(),
            balances: BTreeMap::new(),
            allowances: BTreeMap::new(),
            auto_approved: BTreeMap::new(),
            total_supply: BTreeMap::new(),
            burned: BTreeMap::new(),
            sbts: BTreeMap::new(),
            sbt_contract: Address::from_label("contract:MySBT"),
            gtoken: TokenId(0),
            max_single_tx_limit: config.max_single_tx_limit,
            super_paymaster: config.super_paymaster,
            governance: config.governance,
            mint_burn_floor: config.mint_burn_floor,
            firewall_enabled: true,
        };
        ledger.gtoken = ledger.create_token("GToken");
        ledger
    }

    pub fn create_token(&mut self, name: &str) -> TokenId {
        let id = TokenId(self.tokens.len() as u16);
        self.tokens.push(TokenInfo {
            name: name.to_string(),
            contract: Address::from_label(&format!("token:{name}")),
        });
        self.total_supply.insert(id, U256::zero());
        id
    }

    pub fn gtoken(&self) -> TokenId {
        self.gtoken
    }

    pub fn tokens(&self) -> impl Iterator<Item = (TokenId, &TokenInfo)> {
        self.tokens.iter().enumerate().map(|(i, t)| (TokenId(i as u16), t))
    }

    pub fn token_info(&self, token: TokenId) -> Result<&TokenInfo, LedgerError> {
        self.tokens.get(token.0 as usize).ok_or(LedgerError::UnknownToken(token))
    }

    pub fn token_by_name(&self, name: &str) -> Option<TokenId> {
        self.tokens().find(|(_, t)| t.name == name).map(|(id, _)| id)
    }

    pub fn contract_of(&self, token: TokenId) -> Result<Address, LedgerError> {
        Ok(self.token_info(token)?.contract)
    }

    pub fn sbt_contract(&self) -> Address {
        self.sbt_contract
    }

    pub fn max_single_tx_limit(&self) -> U256 {
        self.max_single_tx_limit
    }

    pub fn super_paymaster(&self) -> Address {
        self.super_paymaster
    }

    pub fn governance(&self) -> Address {
        self.governance
    }

    pub fn mint_burn_floor(&self) -> U256 {
        self.mint_burn_floor
    }

    /// Test hook: disables the destination check of the auto-approved path.
    #[doc(hidden)]
    pub fn set_firewall_enabled(&mut self, enabled: bool) {
        self.firewall_enabled = enabled;
    }

    pub fn balance_of(&self, token: TokenId, holder: Address) -> U256 {
        self.balances.get(&(token, holder)).copied().unwrap_or_default()
    }

    pub fn balance_of_traced(
        &self,
        token: TokenId,
        holder: Address,
        rec: &mut Recorder,
    ) -> Result<U256, LedgerError> {
        rec.read(self.contract_of(token)?, Slot::Balance(holder));
        Ok(self.balance_of(token, holder))
    }

    pub fn total_supply(&self, token: TokenId) -> U256 {
        self.total_supply.get(&token).copied().unwrap_or_default()
    }

    /// Cumulative amount destroyed by burns (including Gas Card mints).
    pub fn total_burned(&self, token: TokenId) -> U256 {
        self.burned.get(&token).copied().unwrap_or_default()
    }

    pub fn is_auto_approved(&self, token: TokenId, spender: Address) -> bool {
        self.auto_approved.get(&token).is_some_and(|s| s.contains(&spender))
    }

    pub fn allowance(&self, token: TokenId, owner: Address, spender: Address) -> U256 {
        if self.is_auto_approved(token, spender) {
            return U256::MAX;
        }
        self.allowances.get(&(token, owner, spender)).copied().unwrap_or_default()
    }

    pub fn allowance_traced(
        &self,
        token: TokenId,
        owner: Address,
        spender: Address,
        rec: &mut Recorder,
    ) -> Result<U256, LedgerError> {
        let contract = self.contract_of(token)?;
        rec.read(contract, Slot::AutoApproved(spender));
        if self.is_auto_approved(token, spender) {
            return Ok(U256::MAX);
        }
        rec.read(contract, Slot::Allowance { owner, spender });
        Ok(self.allowance(token, owner, spender))
    }

    pub fn approve(&mut self, token: TokenId, owner: Address, spender: Address, amount: U256) -> Result<(), LedgerError> {
        self.token_info(token)?;
        self.allowances.insert((token, owner, spender), amount);
        Ok(())
    }

    /// Issues new units (community distribution, faucet, top-up).
    pub fn mint(&mut self, token: TokenId, to: Address, amount: U256) -> Result<(), LedgerError> {
        self.token_info(token)?;
        if to.is_zero() {
            return Err(LedgerError::ZeroAddressDestination);
        }
        let supply = self.total_supply(token).checked_add(amount).ok_or(LedgerError::Overflow)?;
        let bal = self.balance_of(token, to).checked_add(amount).ok_or(LedgerError::Overflow)?;
        self.total_supply.insert(token, supply);
        self.balances.insert((token, to), bal);
        Ok(())
    }

    pub fn transfer(&mut self, token: TokenId, from: Address, to: Address, amount: U256) -> Result<(), LedgerError> {
        self.transfer_traced(token, from, to, amount, &mut Recorder::disabled())
    }

    pub fn transfer_traced(
        &mut self,
        token: TokenId,
        from: Address,
        to: Address,
        amount: U256,
        rec: &mut Recorder,
    ) -> Result<(), LedgerError> {
        let contract = self.contract_of(token)?;
        if to.is_zero() {
            return Err(LedgerError::ZeroAddressDestination);
        }
        if amount.is_zero() {
            return Ok(());
        }
        rec.read(contract, Slot::Balance(from));
        let have = self.balance_of(token, from);
        if have < amount {
            return Err(LedgerError::InsufficientBalance { token, holder: from, have, need: amount });
        }
        if from == to {
            return Ok(());
        }
        rec.read(contract, Slot::Balance(to));
        let credited = self.balance_of(token, to).checked_add(amount).ok_or(LedgerError::Overflow)?;
        rec.write(contract, Slot::Balance(from));
        rec.write(contract, Slot::Balance(to));
        self.balances.insert((token, from), have - amount);
        self.balances.insert((token, to), credited);
        Ok(())
    }

    pub fn transfer_from(
        &mut self,
        token: TokenId,
        caller: Address,
        from: Address,
        to: Address,
        amount: U256,
    ) -> Result<(), LedgerError> {
        self.transfer_from_traced(token, caller, from, to, amount, &mut Recorder::disabled())
    }

    pub fn transfer_from_traced(
        &mut self,
        token: TokenId,
        caller: Address,
        from: Address,
        to: Address,
        amount: U256,
        rec: &mut Recorder,
    ) -> Result<(), LedgerError> {
        let contract = self.contract_of(token)?;
        rec.read(contract, Slot::AutoApproved(caller));
        if self.is_auto_approved(token, caller) {
            if self.firewall_enabled && to != caller && to != self.super_paymaster {
                return Err(LedgerError::UnauthorizedDestination { token, spender: caller, to });
            }
            if amount > self.max_single_tx_limit {
                return Err(LedgerError::ExceedsCap { amount, limit: self.max_single_tx_limit });
            }
            return self.transfer_traced(token, from, to, amount, rec);
        }
        rec.read(contract, Slot::Allowance { owner: from, spender: caller });
        let have = self.allowance(token, from, caller);
        if have < amount {
            return Err(LedgerError::InsufficientAllowance { owner: from, spender: caller, have, need: amount });
        }
        self.transfer_traced(token, from, to, amount, rec)?;
        if have != U256::MAX && !amount.is_zero() {
            rec.write(contract, Slot::Allowance { owner: from, spender: caller });
            self.allowances.insert((token, from, caller), have - amount);
        }
        Ok(())
    }

    /// Destroys `amount` of the holder's own balance.
    pub fn burn(&mut self, token: TokenId, holder: Address, amount: U256) -> Result<(), LedgerError> {
        self.burn_traced(token, holder, amount, &mut Recorder::disabled())
    }

    pub fn burn_traced(
        &mut self,
        token: TokenId,
        holder: Address,
        amount: U256,
        rec: &mut Recorder,
    ) -> Result<(), LedgerError> {
        let contract = self.contract_of(token)?;
        rec.read(contract, Slot::Balance(holder));
        let have = self.balance_of(token, holder);
        if have < amount {
            return Err(LedgerError::InsufficientBalance { token, holder, have, need: amount });
        }
        if amount.is_zero() {
            return Ok(());
        }
        rec.write(contract, Slot::Balance(holder));
        rec.read(contract, Slot::TotalSupply);
        rec.write(contract, Slot::TotalSupply);
        self.balances.insert((token, holder), have - amount);
        let supply = self.total_supply(token) - amount;
        self.total_supply.insert(token, supply);
        let burned = self.total_burned(token).saturating_add(amount);
        self.burned.insert(token, burned);
        Ok(())
    }

    /// Permissionless Gas Card issuance: burns `burn_amount` GToken from the
    /// minter and binds a soulbound record to it.
    pub fn mint_sbt(&mut self, minter: Address, burn_amount: U256, at_block: u64) -> Result<&SbtRecord, LedgerError> {
        if minter.is_zero() {
            return Err(LedgerError::ZeroAddressDestination);
        }
        if self.sbts.contains_key(&minter) {
            return Err(LedgerError::AlreadyHoldsSbt(minter));
        }
        if burn_amount < self.mint_burn_floor {
            return Err(LedgerError::BurnBelowFloor { burn: burn_amount, floor: self.mint_burn_floor });
        }
        let have = self.balance_of(self.gtoken, minter);
        if have < burn_amount {
            return Err(LedgerError::InsufficientGToken { have, need: burn_amount });
        }
        self.burn(self.gtoken, minter, burn_amount)?;
        let record = SbtRecord {
            owner: minter,
            community_associations: BTreeSet::new(),
            minted_at_block: at_block,
            gtoken_burned: burn_amount,
        };
        Ok(self.sbts.entry(minter).or_insert(record))
    }

    pub fn sbt(&self, owner: Address) -> Option<&SbtRecord> {
        self.sbts.get(&owner)
    }

    pub fn sbt_traced(&self, owner: Address, rec: &mut Recorder) -> Option<&SbtRecord> {
        rec.read(self.sbt_contract, Slot::SbtRecord(owner));
        self.sbt(owner)
    }

    pub fn sbts(&self) -> impl Iterator<Item = &SbtRecord> {
        self.sbts.values()
    }

    /// The card holder links its card to a community operator.
    pub fn associate_community(&mut self, owner: Address, operator: Address) -> Result<(), LedgerError> {
        let record = self.sbts.get_mut(&owner).ok_or(LedgerError::NoSbtRecord(owner))?;
        record.community_associations.insert(operator);
        Ok(())
    }

    pub fn set_auto_approved(
        &mut self,
        governance: Address,
        token: TokenId,
        spender: Address,
        enabled: bool,
    ) -> Result<(), LedgerError> {
        if governance != self.governance {
            return Err(LedgerError::NotGovernance(governance));
        }
        self.token_info(token)?;
        let set = self.auto_approved.entry(token).or_default();
        if enabled {
            set.insert(spender);
        } else {
            set.remove(&spender);
        }
        Ok(())
    }

    /// Tokens whose balances do not sum to their total supply.
    pub fn conservation_violations(&self) -> Vec<TokenId> {
        let mut sums: BTreeMap<TokenId, U256> = BTreeMap::new();
        for ((token, _), bal) in &self.balances {
            let e = sums.entry(*token).or_default();
            *e = e.saturating_add(*bal);
        }
        self.tokens()
            .map(|(id, _)| id)
            .filter(|id| sums.get(id).copied().unwrap_or_default() != self.total_supply(*id))
            .collect()
    }
}
