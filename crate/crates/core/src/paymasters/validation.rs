use crate::entrypoint::UserOperation;
use crate::gasmodel::{Component, GasCostTable, Usage};
use crate::ledger::TokenLedger;
use crate::registry::{OperatorConfig, PriceCache};
use crate::trace::{AccessTrace, Phase, Recorder, Slot};
use crate::types::{Address, U256};

use super::{
    operator_from_data, xpnts_for_eth, PaymasterError, PaymasterInstance, PaymasterKind, SettlementContext,
    ValidationResult,
};

/// `validatePaymasterUserOp`, dispatched on the paymaster kind.
///
/// Storage touches are recorded into `rec` under whatever phase it is set to;
/// the EntryPoint sets [`Phase::PaymasterValidation`] before calling.
pub fn validate(
    pm: &PaymasterInstance,
    ledger: &TokenLedger,
    op: &UserOperation,
    now_block: u64,
    gas: &GasCostTable,
    rec: &mut Recorder,
) -> Result<ValidationResult, PaymasterError> {
    let start = rec.len();
    let capped_cost = op.max_cost.min(pm.protocol_hard_cap);
    let mut context = SettlementContext {
        kind: pm.kind,
        operator: None,
        sender: op.sender,
        nonce: op.nonce,
        user_op_hash: op.user_op_hash,
        capped_cost,
        token: None,
    };
    let mut signatures = 0;
    match pm.kind {
        PaymasterKind::AoaSuper => {
            let (operator, config) = super_checks(pm, ledger, op, now_block, capped_cost, rec)?;
            context.operator = Some(operator);
            context.token = Some(config.supported_tokens[0]);
        }
        PaymasterKind::AoaV4 => {
            let (operator, config) = resolve_operator(pm, op, rec)?;
            token_sufficiency(pm, ledger, op.sender, config, now_block, capped_cost, rec)?;
            context.operator = Some(operator);
            context.token = Some(config.supported_tokens[0]);
        }
        PaymasterKind::PoaVerifying => {
            verifying_checks(pm, op, rec)?;
            signatures = 1;
        }
        PaymasterKind::PoaDexErc20 => {
            context.token = Some(dex_checks(pm, ledger, op, capped_cost, rec)?);
        }
    }
    let entries = rec.trace().entries[start..].to_vec();
    let usage = Usage { signatures, ..Usage::from(rec.trace().phase_stats(Phase::PaymasterValidation)) };
    let gas_charged = gas
        .charge_component(pm.kind, Component::PaymasterValidation, &usage)
        .map_err(|_| PaymasterError::InvalidInstance("gas table lacks paymasterValidation"))?;
    Ok(ValidationResult {
        valid: true,
        capped_cost,
        context,
        gas_charged,
        access_trace: AccessTrace { entries },
    })
}

fn resolve_operator<'a>(
    pm: &'a PaymasterInstance,
    op: &UserOperation,
    rec: &mut Recorder,
) -> Result<(Address, &'a OperatorConfig), PaymasterError> {
    let operator = operator_from_data(&op.paymaster_data).unwrap_or(Address::ZERO);
    if pm.live_registry_reads {
        rec.read(pm.registry_addr, Slot::RegistryOperator(operator));
    }
    rec.read(pm.addr, Slot::Operators(operator));
    let config = pm.operators.get(&operator).ok_or(PaymasterError::UnknownOperator(operator))?;
    if !config.is_active() {
        return Err(PaymasterError::OperatorInactive(operator));
    }
    Ok((operator, config))
}

fn fresh_price(pm: &PaymasterInstance, now_block: u64, rec: &mut Recorder) -> Result<PriceCache, PaymasterError> {
    rec.read(pm.addr, Slot::CachedPrice);
    match pm.cached_price {
        Some(p) if now_block.saturating_sub(p.updated_at_block) <= pm.staleness_threshold => Ok(p),
        _ => Err(PaymasterError::StalePrice { max_age: pm.staleness_threshold }),
    }
}

fn token_sufficiency(
    pm: &PaymasterInstance,
    ledger: &TokenLedger,
    sender: Address,
    config: &OperatorConfig,
    now_block: u64,
    capped_cost: U256,
    rec: &mut Recorder,
) -> Result<(), PaymasterError> {
    let price = fresh_price(pm, now_block, rec)?;
    let need = xpnts_for_eth(capped_cost, &price, &config.exchange_rate)?;
    let have = ledger.balance_of_traced(config.supported_tokens[0], sender, rec)?;
    if have < need {
        return Err(PaymasterError::InsufficientGasToken { have, need });
    }
    Ok(())
}

fn super_checks<'a>(
    pm: &'a PaymasterInstance,
    ledger: &TokenLedger,
    op: &UserOperation,
    now_block: u64,
    capped_cost: U256,
    rec: &mut Recorder,
) -> Result<(Address, &'a OperatorConfig), PaymasterError> {
    // Stage 1: Gas Card mirror.
    rec.read(pm.addr, Slot::SbtHolders(op.sender));
    if !pm.sbt_holders.get(&op.sender).copied().unwrap_or(false) {
        return Err(PaymasterError::NoSbt(op.sender));
    }
    // Stage 2: operator config and the per-card window.
    let (operator, config) = resolve_operator(pm, op, rec)?;
    rec.read(pm.addr, Slot::UserOpState { operator, sender: op.sender });
    let state = pm.user_op_state.get(&(operator, op.sender)).copied().unwrap_or_default();
    let spent = if now_block >= state.window_start_block.saturating_add(config.rate_limit_window) {
        U256::zero()
    } else {
        state.spent_in_window
    };
    let over = spent.checked_add(capped_cost).is_none_or(|total| total > config.per_card_spending_cap);
    if over {
        return Err(PaymasterError::RateLimited { spent, cost: capped_cost, cap: config.per_card_spending_cap });
    }
    // Stages 3 and 4: capped cost against the sender's token balance.
    token_sufficiency(pm, ledger, op.sender, config, now_block, capped_cost, rec)?;
    Ok((operator, config))
}

fn verifying_checks(pm: &PaymasterInstance, op: &UserOperation, rec: &mut Recorder) -> Result<(), PaymasterError> {
    let service = pm.signer_service.as_ref().ok_or(PaymasterError::SignerOffline)?;
    let signature = service.request(op.sender, &op.user_op_hash)?;
    rec.read(pm.addr, Slot::SignerKey);
    let key = pm.verifying_key.ok_or(PaymasterError::BadSignature)?;
    if !key.verify(&op.user_op_hash, &signature) {
        return Err(PaymasterError::BadSignature);
    }
    Ok(())
}

fn dex_checks(
    pm: &PaymasterInstance,
    ledger: &TokenLedger,
    op: &UserOperation,
    capped_cost: U256,
    rec: &mut Recorder,
) -> Result<crate::types::TokenId, PaymasterError> {
    let dex = pm.dex.as_ref().ok_or(PaymasterError::OracleUnavailable)?;
    rec.read(dex.oracle_addr, Slot::OracleRound);
    let quote = dex.oracle_price.ok_or(PaymasterError::OracleUnavailable)?;
    let need = quote.mul_ceil(capped_cost).ok_or(PaymasterError::ConversionOverflow)?;
    let allowance = ledger.allowance_traced(dex.fee_token, op.sender, pm.addr, rec)?;
    if allowance < need {
        return Err(PaymasterError::NoAllowance { have: allowance, need });
    }
    let have = ledger.balance_of_traced(dex.fee_token, op.sender, rec)?;
    if have < need {
        return Err(PaymasterError::InsufficientGasToken { have, need });
    }
    rec.read(dex.pool_addr, Slot::PoolReserves);
    if dex.pool.token_in_for(capped_cost).is_none() {
        return Err(PaymasterError::InsufficientLiquidity(capped_cost));
    }
    Ok(dex.fee_token)
}
