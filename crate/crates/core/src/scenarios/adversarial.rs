use serde::Serialize;

use crate::config::{ScenarioSpec, SystemId};
use crate::entrypoint::{BundlerProfile, EntryPointError};
use crate::ledger::LedgerError;
use crate::paymasters::{PaymasterError, PaymasterKind};
use crate::registry::RegistryError;
use crate::types::{Address, SecretKey, U256};

use super::{ScenarioError, World};

/// Outcome of one threat check. `violations` names every attempt that
/// got through.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ThreatCheck {
    pub id: String,
    pub title: String,
    pub attempts: u32,
    pub passed: bool,
    pub detail: String,
    pub violations: Vec<String>,
}

impl ThreatCheck {
    fn new(id: &str, title: &str, attempts: u32, detail: String, violations: Vec<String>) -> ThreatCheck {
        ThreatCheck {
            id: id.into(),
            title: title.into(),
            attempts,
            passed: violations.is_empty(),
            detail,
            violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdversarialReport {
    pub passed: bool,
    pub checks: Vec<ThreatCheck>,
}

impl AdversarialReport {
    pub fn check(&self, id: &str) -> Option<&ThreatCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Runs every attack of `spec.adversaries`; attacks with a zero count pass
/// vacuously.
pub fn run_adversarial_suite(spec: &ScenarioSpec) -> Result<AdversarialReport, ScenarioError> {
    let a = &spec.adversaries;
    let checks = vec![
        replay(spec, a.replay)?,
        sybil(spec, a.sybil)?,
        theft(spec, a.theft)?,
        drain(spec, a.drain)?,
        bundler_switch(spec, a.bundler_switch)?,
        governance(spec, a.governance)?,
        burn_safety(spec, a.direct_post_op, a.firewall_probes, a.firewall_disabled)?,
    ];
    Ok(AdversarialReport { passed: checks.iter().all(|c| c.passed), checks })
}

fn world(spec: &ScenarioSpec) -> Result<World, ScenarioError> {
    let mut w = World::build(spec, SystemId::T21.account_kind())?;
    w.advance_to(1);
    Ok(w)
}

fn replay(spec: &ScenarioSpec, n: u32) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut accepted = 0;
    let mut rejected = 0;
    if n > 0 {
        let mut w = world(spec)?;
        let op = w.op(PaymasterKind::AoaSuper, 0)?;
        for i in 0..n {
            match w.submit(&op) {
                Ok(_) => accepted += 1,
                Err(EntryPointError::NonceReplay { .. }) => rejected += 1,
                Err(e) => violations.push(format!("submission {i} failed for another reason: {e}")),
            }
        }
        if accepted != 1 {
            violations.push(format!("{accepted} submissions of one nonce were accepted"));
        }
    }
    let detail = format!("{accepted} accepted, {rejected} rejected as replays");
    Ok(ThreatCheck::new("replay", "Replay of a signed operation", n, detail, violations))
}

fn sybil(spec: &ScenarioSpec, n: u32) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let floor = spec.chain.mint_burn_floor;
    let mut w = world(spec)?;
    let ledger = &mut w.chain.ledger;
    let gtoken = ledger.gtoken();
    let identities: Vec<Address> = (0..n).map(|i| Address::from_label(&format!("sybil:{i}"))).collect();
    for &id in &identities {
        ledger.mint(gtoken, id, floor)?;
    }
    let supply_before = ledger.total_supply(gtoken);
    for &id in &identities {
        if let Err(e) = ledger.mint_sbt(id, floor, 1) {
            violations.push(format!("mint for {id} failed: {e}"));
        }
    }
    let expected = floor * U256::from(n);
    let burned = supply_before - ledger.total_supply(gtoken);
    if burned != expected {
        violations.push(format!("GToken supply fell by {burned}, expected {expected}"));
    }
    // A second card costs another floor and is refused anyway.
    if let Some(&first) = identities.first() {
        ledger.mint(gtoken, first, floor)?;
        if ledger.mint_sbt(first, floor, 2).is_ok() {
            violations.push(format!("{first} minted a second Gas Card"));
        }
    }
    let detail = format!("{n} identities burned {burned} GToken (floor {floor})");
    Ok(ThreatCheck::new("i", "Sybil Gas Card issuance", n, detail, violations))
}

fn theft(spec: &ScenarioSpec, n: u32) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut w = world(spec)?;
    let thief = Address::from_label("thief");
    let thief_key = SecretKey::from_label("key:thief");
    w.chain.add_account(thief, thief_key, SystemId::T21.account_kind());
    let victim = w.users[0].addr;
    let victim_token = w.xpnts[w.users[0].community];
    let balance_before = w.chain.ledger.balance_of(victim_token, victim);
    let pm = w.paymaster_addr(PaymasterKind::AoaSuper);
    let operator_data = w.operators[w.users[0].community].0.to_vec();
    for i in 0..n {
        let result = if i % 2 == 0 {
            // The thief's own account, riding the victim's community.
            w.chain
                .build_op(thief, w.action(), pm, operator_data.clone(), w.spec.users.max_cost)
                .and_then(|op| w.submit(&op))
        } else {
            // An operation for the victim's account signed with the wrong key.
            w.op(PaymasterKind::AoaSuper, 0).and_then(|op| {
                let mut forged = op;
                forged.account_signature = thief_key.sign(&forged.user_op_hash);
                w.submit(&forged)
            })
        };
        match result {
            Err(EntryPointError::PaymasterRejected(PaymasterError::NoSbt(_))) | Err(EntryPointError::InvalidAccountSig) => {}
            Ok(_) => violations.push(format!("attempt {i} was sponsored")),
            Err(e) => violations.push(format!("attempt {i} failed for another reason: {e}")),
        }
    }
    if w.chain.ledger.balance_of(victim_token, victim) != balance_before {
        violations.push("victim balance changed".into());
    }
    let detail = format!("{n} attempts to spend another account's Gas Card");
    Ok(ThreatCheck::new("ii", "Gas Card theft", n, detail, violations))
}

fn drain(spec: &ScenarioSpec, n: u32) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut w = world(spec)?;
    let hard_cap = spec.chain.protocol_hard_cap;
    let limit = w.chain.ledger.max_single_tx_limit();
    let max_cost = hard_cap.saturating_mul(U256::from(10u8));
    let pm = w.paymaster_addr(PaymasterKind::AoaSuper);
    let mut attempts = 0;
    for i in 0..n {
        attempts += 1;
        let user = i as usize % w.users.len();
        let deposit_before = w.chain.deposit_of(pm);
        let op = w.op_with_max_cost(PaymasterKind::AoaSuper, user, max_cost)?;
        match w.submit(&op) {
            Ok(handled) => {
                let bound = max_cost.min(hard_cap);
                let charged = deposit_before - w.chain.deposit_of(pm);
                if handled.validation.capped_cost > bound || charged > bound {
                    violations.push(format!("op {i} settled {charged} wei against a bound of {bound}"));
                }
                if handled.settlement.xpnts_burned > limit {
                    violations.push(format!("op {i} burned {} over the limit {limit}", handled.settlement.xpnts_burned));
                }
                // Replaying the settlement with an inflated cost.
                attempts += 1;
                let ctx = &handled.validation.context;
                let ep = w.chain.entry_point();
                match w.chain.call_post_op(ep, pm, Some(ctx.user_op_hash), ctx, hard_cap.saturating_mul(U256::from(10u8))) {
                    Err(PaymasterError::CostExceedsCap { .. }) => {}
                    other => violations.push(format!("inflated postOp after op {i}: {other:?}")),
                }
            }
            Err(e) => violations.push(format!("op {i} was rejected: {e}")),
        }
        // An oversized pull by an auto-approved spender.
        attempts += 1;
        let sender = w.users[user].addr;
        let token = w.xpnts[w.users[user].community];
        match w.chain.ledger.transfer_from(token, pm, sender, pm, limit + U256::one()) {
            Err(LedgerError::ExceedsCap { .. }) => {}
            other => violations.push(format!("pull above the limit after op {i}: {other:?}")),
        }
    }
    let detail = format!("maxCost {max_cost} against hard cap {hard_cap}; per-pull limit {limit}");
    Ok(ThreatCheck::new("iii", "Paymaster fund drain", attempts, detail, violations))
}

fn bundler_switch(spec: &ScenarioSpec, enabled: bool) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut attempts = 0;
    if enabled {
        let mut offline = spec.clone();
        offline.faults.signer_offline = vec![crate::config::BlockRange(0, u64::MAX)];
        let bundlers = [BundlerProfile::calibrated(), BundlerProfile::uniform(50_000), BundlerProfile::uniform(200_000)];
        for bundler in bundlers {
            for kind in [PaymasterKind::PoaVerifying, PaymasterKind::AoaSuper] {
                attempts += 1;
                let mut w = World::build(&offline, SystemId::for_kind(kind).account_kind())?;
                w.advance_to(1);
                w.bundler = bundler.clone();
                let result = w.op(kind, 0).and_then(|op| w.submit(&op));
                match (kind, result) {
                    (PaymasterKind::PoaVerifying, Err(EntryPointError::PaymasterRejected(PaymasterError::SignerOffline))) => {}
                    (PaymasterKind::AoaSuper, Ok(_)) => {}
                    (kind, other) => {
                        violations.push(format!("{kind} via {}: {:?}", bundler.name, other.map(|h| h.receipt.tx_gas_used)))
                    }
                }
            }
        }
    }
    let detail = "with the signer offline, no bundler revives POA sponsorship and none is needed for AOA".to_string();
    Ok(ThreatCheck::new("iv", "Validity gate under bundler choice", attempts, detail, violations))
}

fn governance(spec: &ScenarioSpec, enabled: bool) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut attempts = 0;
    if enabled {
        let mut w = world(spec)?;
        let attacker = Address::from_label("attacker");
        let operator = w.operators[0];
        let user = w.users[0].addr;
        let pm = w.paymaster_addr(PaymasterKind::AoaSuper);
        let mut expect = |name: &str, ok: bool| {
            attempts += 1;
            if !ok {
                violations.push(format!("{name} accepted a non-privileged caller"));
            }
        };
        let r = w.chain.registry.deactivate_operator(attacker, operator);
        expect("deactivate_operator", matches!(r, Err(RegistryError::NotGovernance(_))));
        let r = w.chain.with_registry_and_paymaster(pm, |reg, p, _| reg.sync_operator(attacker, p, operator));
        expect("sync_operator", matches!(r, Some(Err(RegistryError::NotRegistry(_)))));
        let r = w.chain.with_registry_and_paymaster(pm, |reg, p, l| reg.update_sbt_status(attacker, p, l, attacker, true));
        expect("update_sbt_status", matches!(r, Some(Err(RegistryError::NotRegistry(_)))));
        let r = w.chain.with_registry_and_paymaster(pm, |reg, p, _| reg.mirror_price(attacker, p));
        expect("mirror_price", matches!(r, Some(Err(RegistryError::NotRegistry(_)))));
        let token = w.xpnts[0];
        let r = w.chain.ledger.set_auto_approved(attacker, token, attacker, true);
        expect("set_auto_approved", matches!(r, Err(LedgerError::NotGovernance(_))));
        let r = w.chain.with_registry_and_paymaster(pm, |reg, p, l| reg.update_sbt_status(attacker, p, l, user, false));
        expect("revoke via update_sbt_status", matches!(r, Some(Err(RegistryError::NotRegistry(_)))));
    }
    let detail = "registry writes, operator deactivation and spender whitelisting from an outside address".to_string();
    Ok(ThreatCheck::new("v", "Registry governance and Gas Card issuance", attempts, detail, violations))
}

fn burn_safety(
    spec: &ScenarioSpec,
    direct_calls: u32,
    probes: u32,
    firewall_disabled: bool,
) -> Result<ThreatCheck, ScenarioError> {
    let mut violations = Vec::new();
    let mut w = world(spec)?;
    if firewall_disabled {
        w.chain.ledger.set_firewall_enabled(false);
    }
    let attacker = Address::from_label("attacker");
    let pm = w.paymaster_addr(PaymasterKind::AoaSuper);
    let ep = w.chain.entry_point();

    if direct_calls > 0 {
        let handled = w.op(PaymasterKind::AoaSuper, 0).and_then(|op| w.submit(&op))?;
        let ctx = handled.validation.context;
        let cost = U256::from(1_000u32);
        let burned_before = w.xpnts_burned();
        for i in 0..direct_calls {
            let (caller, executing) = match i % 3 {
                0 => (attacker, Some(ctx.user_op_hash)),
                1 => (ep, None),
                _ => (ep, Some(crate::types::Hash32::digest(format!("other:{i}").as_bytes()))),
            };
            match w.chain.call_post_op(caller, pm, executing, &ctx, cost) {
                Err(PaymasterError::NotEntryPoint(_)) | Err(PaymasterError::HashMismatch) => {}
                other => violations.push(format!("direct postOp {i} by {caller}: {other:?}")),
            }
        }
        let burned = w.xpnts_burned() - burned_before;
        if !burned.is_zero() {
            violations.push(format!("direct postOp calls burned {burned} xPNTs"));
        }
    }

    let spenders = [pm, w.paymaster_addr(PaymasterKind::AoaV4), w.factory];
    for i in 0..probes {
        let user = &w.users[i as usize % w.users.len()];
        let (victim, token) = (user.addr, w.xpnts[user.community]);
        let spender = spenders[i as usize % spenders.len()];
        let amount = U256::ether();
        match w.chain.ledger.transfer_from(token, spender, victim, attacker, amount) {
            Err(LedgerError::UnauthorizedDestination { .. }) => {}
            Ok(()) => {
                let name = w.chain.ledger.token_info(token).map(|t| t.name.clone()).unwrap_or_default();
                violations.push(format!("{spender} moved {amount} {name} from {victim} to {attacker}"));
            }
            Err(e) => violations.push(format!("probe {i} failed for another reason: {e}")),
        }
    }
    let detail = format!("{direct_calls} out-of-bundle postOp calls, {probes} third-party pulls by auto-approved spenders");
    Ok(ThreatCheck::new("vi", "xPNTs burn safety", direct_calls + probes, detail, violations))
}
