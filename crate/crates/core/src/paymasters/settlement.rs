use serde::Serialize;

use crate::ledger::TokenLedger;
use crate::trace::{Recorder, Slot};
use crate::types::{Address, Hash32, U256};

use super::{apnts_for_eth, xpnts_for_eth, PaymasterError, PaymasterInstance, PaymasterKind, SettlementContext};

/// Ledger effects of one successful postOp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Settlement {
    #[serde(with = "crate::types::amount_serde")]
    pub xpnts_burned: U256,
    #[serde(with = "crate::types::amount_serde")]
    pub apnts_to_treasury: U256,
    /// Fee token pulled from the sender (V4 and DEX kinds).
    #[serde(with = "crate::types::amount_serde")]
    pub token_charged: U256,
}

/// `postOp`. Only the EntryPoint may call it, only for the operation it is
/// currently executing (`executing`), and only for at most the capped cost.
/// On any error the paymaster and ledger are left exactly as they were.
#[allow(clippy::too_many_arguments)]
pub fn post_op(
    pm: &mut PaymasterInstance,
    ledger: &mut TokenLedger,
    caller: Address,
    entry_point: Address,
    executing: Option<Hash32>,
    ctx: &SettlementContext,
    actual_cost: U256,
    now_block: u64,
    rec: &mut Recorder,
) -> Result<Settlement, PaymasterError> {
    if caller != entry_point {
        return Err(PaymasterError::NotEntryPoint(caller));
    }
    if executing != Some(ctx.user_op_hash) {
        return Err(PaymasterError::HashMismatch);
    }
    if ctx.kind != pm.kind {
        return Err(PaymasterError::WrongKind { expected: pm.kind, found: ctx.kind });
    }
    if actual_cost > ctx.capped_cost {
        return Err(PaymasterError::CostExceedsCap { actual: actual_cost, capped: ctx.capped_cost });
    }
    let pm_before = pm.clone();
    let ledger_before = ledger.clone();
    let result = match pm.kind {
        PaymasterKind::AoaSuper => settle_super(pm, ledger, ctx, actual_cost, now_block, rec),
        PaymasterKind::AoaV4 => settle_v4(pm, ledger, ctx, actual_cost, rec),
        PaymasterKind::PoaVerifying => Ok(Settlement::default()),
        PaymasterKind::PoaDexErc20 => settle_dex(pm, ledger, ctx, actual_cost, rec),
    };
    if result.is_err() {
        *pm = pm_before;
        *ledger = ledger_before;
    }
    result
}

fn operator_terms(
    pm: &PaymasterInstance,
    ctx: &SettlementContext,
    actual_cost: U256,
    rec: &mut Recorder,
) -> Result<(Address, U256, U256), PaymasterError> {
    let operator = ctx.operator.ok_or(PaymasterError::UnknownOperator(Address::ZERO))?;
    rec.read(pm.addr, Slot::Operators(operator));
    let config = pm.operators.get(&operator).ok_or(PaymasterError::UnknownOperator(operator))?;
    rec.read(pm.addr, Slot::CachedPrice);
    let price = pm.cached_price.ok_or(PaymasterError::StalePrice { max_age: pm.staleness_threshold })?;
    let apnts = apnts_for_eth(actual_cost, &price)?;
    let xpnts = xpnts_for_eth(actual_cost, &price, &config.exchange_rate)?;
    Ok((operator, apnts, xpnts))
}

fn settle_super(
    pm: &mut PaymasterInstance,
    ledger: &mut TokenLedger,
    ctx: &SettlementContext,
    actual_cost: U256,
    now_block: u64,
    rec: &mut Recorder,
) -> Result<Settlement, PaymasterError> {
    let (operator, apnts, xpnts) = operator_terms(pm, ctx, actual_cost, rec)?;
    let xpnts_token = ctx.token.ok_or(PaymasterError::InvalidInstance("missing settlement token"))?;
    let apnts_token = pm.apnts.ok_or(PaymasterError::InvalidInstance("missing aPNTs token"))?;

    ledger.transfer_from_traced(xpnts_token, pm.addr, ctx.sender, pm.addr, xpnts, rec)?;
    ledger.burn_traced(xpnts_token, pm.addr, xpnts, rec)?;
    ledger.transfer_from_traced(apnts_token, pm.addr, operator, pm.addr, apnts, rec)?;
    ledger.transfer_traced(apnts_token, pm.addr, pm.treasury, apnts, rec)?;

    let window = pm.operators[&operator].rate_limit_window;
    rec.read(pm.addr, Slot::UserOpState { operator, sender: ctx.sender });
    let state = pm.user_op_state.entry((operator, ctx.sender)).or_default();
    if now_block >= state.window_start_block.saturating_add(window) {
        state.window_start_block = now_block;
        state.spent_in_window = U256::zero();
    }
    state.spent_in_window = state.spent_in_window.saturating_add(actual_cost);
    state.last_nonce_seen = ctx.nonce;
    rec.write(pm.addr, Slot::UserOpState { operator, sender: ctx.sender });

    Ok(Settlement { xpnts_burned: xpnts, apnts_to_treasury: apnts, token_charged: U256::zero() })
}

fn settle_v4(
    pm: &mut PaymasterInstance,
    ledger: &mut TokenLedger,
    ctx: &SettlementContext,
    actual_cost: U256,
    rec: &mut Recorder,
) -> Result<Settlement, PaymasterError> {
    let (_, _, amount) = operator_terms(pm, ctx, actual_cost, rec)?;
    let token = ctx.token.ok_or(PaymasterError::InvalidInstance("missing settlement token"))?;
    ledger.transfer_from_traced(token, pm.addr, ctx.sender, pm.addr, amount, rec)?;
    Ok(Settlement { token_charged: amount, ..Settlement::default() })
}

fn settle_dex(
    pm: &mut PaymasterInstance,
    ledger: &mut TokenLedger,
    ctx: &SettlementContext,
    actual_cost: U256,
    rec: &mut Recorder,
) -> Result<Settlement, PaymasterError> {
    let addr = pm.addr;
    let dex = pm.dex.as_mut().ok_or(PaymasterError::OracleUnavailable)?;
    rec.read(dex.oracle_addr, Slot::OracleRound);
    let quote = dex.oracle_price.ok_or(PaymasterError::OracleUnavailable)?;
    let amount = quote.mul_ceil(actual_cost).ok_or(PaymasterError::ConversionOverflow)?;
    ledger.transfer_from_traced(dex.fee_token, addr, ctx.sender, addr, amount, rec)?;
    ledger.transfer_traced(dex.fee_token, addr, dex.pool_addr, amount, rec)?;
    rec.read(dex.pool_addr, Slot::PoolReserves);
    let eth = dex.pool.swap_exact_in(amount).ok_or(PaymasterError::ConversionOverflow)?;
    rec.write(dex.pool_addr, Slot::PoolReserves);
    dex.eth_recovered = dex.eth_recovered.saturating_add(eth);
    Ok(Settlement { token_charged: amount, ..Settlement::default() })
}
