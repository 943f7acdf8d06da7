//! Shared fixtures: a reference token model written independently of the
//! ledger, and cached worlds.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use aoa_sim::config::{ScenarioSpec, SystemId};
use aoa_sim::ledger::{LedgerConfig, LedgerError, TokenLedger};
use aoa_sim::paymasters::PaymasterKind;
use aoa_sim::scenarios::World;
use aoa_sim::types::{Address, TokenId, U256};

pub const E18: u128 = 1_000_000_000_000_000_000;
pub const LIMIT: u128 = 5_000 * E18;

/// Actor indices. 3 and 4 and 5 are auto-approved for the community token;
/// 3 is the SuperPaymaster.
pub const ACTORS: [&str; 8] = ["u0", "u1", "u2", "super", "v4", "factory", "attacker", "recipient"];
pub const SUPER: usize = 3;
pub const AUTO: [usize; 3] = [3, 4, 5];

pub fn actor(i: usize) -> Address {
    Address::from_label(&format!("actor:{}", ACTORS[i]))
}

#[derive(Clone, Copy, Debug)]
pub enum LedgerOp {
    Mint { to: usize, amount: u128 },
    Transfer { from: usize, to: usize, amount: u128 },
    Approve { owner: usize, spender: usize, amount: Option<u128> },
    TransferFrom { caller: usize, from: usize, to: usize, amount: u128 },
    Burn { holder: usize, amount: u128 },
}

fn amount() -> impl Strategy<Value = u128> {
    prop_oneof![
        0u128..=10 * E18,
        0u128..=6_000 * E18,
        Just(LIMIT),
        Just(LIMIT + 1),
    ]
}

pub fn ledger_op() -> impl Strategy<Value = LedgerOp> {
    let a = 0..ACTORS.len();
    prop_oneof![
        1 => (a.clone(), amount()).prop_map(|(to, amount)| LedgerOp::Mint { to, amount }),
        1 => (a.clone(), a.clone(), amount()).prop_map(|(from, to, amount)| LedgerOp::Transfer { from, to, amount }),
        1 => (a.clone(), a.clone(), proptest::option::of(amount()))
            .prop_map(|(owner, spender, amount)| LedgerOp::Approve { owner, spender, amount }),
        3 => (a.clone(), a.clone(), a.clone(), amount())
            .prop_map(|(caller, from, to, amount)| LedgerOp::TransferFrom { caller, from, to, amount }),
        1 => (a, amount()).prop_map(|(holder, amount)| LedgerOp::Burn { holder, amount }),
    ]
}

/// Plain integer model of one firewalled token.
#[derive(Clone, Debug, Default)]
pub struct TokenModel {
    pub balances: [u128; 8],
    /// `None` is an unlimited approval.
    pub allowances: BTreeMap<(usize, usize), Option<u128>>,
    pub supply: u128,
    pub firewall: bool,
}

impl TokenModel {
    pub fn new(firewall: bool) -> TokenModel {
        TokenModel { firewall, ..TokenModel::default() }
    }

    fn move_funds(&mut self, from: usize, to: usize, amount: u128) -> Result<(), &'static str> {
        if amount == 0 {
            return Ok(());
        }
        if self.balances[from] < amount {
            return Err("InsufficientBalance");
        }
        self.balances[from] -= amount;
        self.balances[to] += amount;
        Ok(())
    }

    pub fn apply(&mut self, op: LedgerOp) -> Result<(), &'static str> {
        match op {
            LedgerOp::Mint { to, amount } => {
                self.balances[to] += amount;
                self.supply += amount;
                Ok(())
            }
            LedgerOp::Transfer { from, to, amount } => self.move_funds(from, to, amount),
            LedgerOp::Approve { owner, spender, amount } => {
                self.allowances.insert((owner, spender), amount);
                Ok(())
            }
            LedgerOp::TransferFrom { caller, from, to, amount } => {
                if AUTO.contains(&caller) {
                    if self.firewall && to != caller && to != SUPER {
                        return Err("UnauthorizedDestination");
                    }
                    if amount > LIMIT {
                        return Err("ExceedsCap");
                    }
                    return self.move_funds(from, to, amount);
                }
                let allowed = self.allowances.get(&(from, caller)).copied().unwrap_or(Some(0));
                if allowed.is_some_and(|a| a < amount) {
                    return Err("InsufficientAllowance");
                }
                self.move_funds(from, to, amount)?;
                if let Some(a) = allowed {
                    if amount > 0 {
                        self.allowances.insert((from, caller), Some(a - amount));
                    }
                }
                Ok(())
            }
            LedgerOp::Burn { holder, amount } => {
                if self.balances[holder] < amount {
                    return Err("InsufficientBalance");
                }
                self.balances[holder] -= amount;
                self.supply -= amount;
                Ok(())
            }
        }
    }
}

pub fn error_name(e: &LedgerError) -> &'static str {
    match e {
        LedgerError::InsufficientBalance { .. } => "InsufficientBalance",
        LedgerError::UnauthorizedDestination { .. } => "UnauthorizedDestination",
        LedgerError::ExceedsCap { .. } => "ExceedsCap",
        LedgerError::InsufficientAllowance { .. } => "InsufficientAllowance",
        _ => "other",
    }
}

/// A ledger with one community token whose auto-approved spenders match
/// [`AUTO`].
pub fn firewalled_ledger(firewall: bool) -> (TokenLedger, TokenId) {
    let governance = Address::from_label("governance");
    let mut ledger = TokenLedger::new(LedgerConfig {
        governance,
        super_paymaster: actor(SUPER),
        max_single_tx_limit: U256::from(LIMIT),
        mint_burn_floor: U256::from(E18),
    });
    let token = ledger.create_token("xPNTs");
    for i in AUTO {
        ledger.set_auto_approved(governance, token, actor(i), true).unwrap();
    }
    ledger.set_firewall_enabled(firewall);
    (ledger, token)
}

pub fn apply_ledger(ledger: &mut TokenLedger, token: TokenId, op: LedgerOp) -> Result<(), LedgerError> {
    match op {
        LedgerOp::Mint { to, amount } => ledger.mint(token, actor(to), U256::from(amount)),
        LedgerOp::Transfer { from, to, amount } => ledger.transfer(token, actor(from), actor(to), U256::from(amount)),
        LedgerOp::Approve { owner, spender, amount } => {
            ledger.approve(token, actor(owner), actor(spender), amount.map_or(U256::MAX, U256::from))
        }
        LedgerOp::TransferFrom { caller, from, to, amount } => {
            ledger.transfer_from(token, actor(caller), actor(from), actor(to), U256::from(amount))
        }
        LedgerOp::Burn { holder, amount } => ledger.burn(token, actor(holder), U256::from(amount)),
    }
}

/// Runs `ops` on both the ledger and the model and reports the first
/// divergence.
pub fn compare_with_model(ops: &[LedgerOp], firewall: bool) -> Result<(), String> {
    let (mut ledger, token) = firewalled_ledger(firewall);
    let mut model = TokenModel::new(firewall);
    for (i, op) in ops.iter().enumerate() {
        let got = apply_ledger(&mut ledger, token, *op).map_err(|e| error_name(&e));
        let want = model.apply(*op);
        if got != want {
            return Err(format!("step {i} {op:?}: ledger {got:?}, model {want:?}"));
        }
        for (a, bal) in model.balances.iter().enumerate() {
            if ledger.balance_of(token, actor(a)) != U256::from(*bal) {
                return Err(format!("step {i} {op:?}: balance of {} diverged", ACTORS[a]));
            }
        }
        if ledger.total_supply(token) != U256::from(model.supply) {
            return Err(format!("step {i}: supply diverged"));
        }
        if !ledger.conservation_violations().is_empty() {
            return Err(format!("step {i}: balances no longer sum to supply"));
        }
    }
    Ok(())
}

/// Default world for `kind` at block 1, built once and cloned per use.
pub fn world(kind: PaymasterKind) -> World {
    static WORLDS: OnceLock<BTreeMap<PaymasterKind, World>> = OnceLock::new();
    let worlds = WORLDS.get_or_init(|| {
        let spec = ScenarioSpec::default();
        PaymasterKind::ALL
            .into_iter()
            .map(|k| {
                let mut w = World::build(&spec, SystemId::for_kind(k).account_kind()).unwrap();
                w.advance_to(1);
                (k, w)
            })
            .collect()
    });
    worlds[&kind].clone()
}
