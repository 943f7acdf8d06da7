//! Storage-access tracing for handled user operations.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::types::Address;

/// Stage of the operation lifecycle a storage touch belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Phase {
    AccountValidation,
    PaymasterValidation,
    Execution,
    PostOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Read,
    Write,
}

/// Storage key inside one contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Slot {
    Balance(Address),
    Allowance { owner: Address, spender: Address },
    TotalSupply,
    AutoApproved(Address),
    SbtRecord(Address),
    Nonce(Address),
    Deposit(Address),
    AccountKey,
    SignerKey,
    Operators(Address),
    UserOpState { operator: Address, sender: Address },
    CachedPrice,
    SbtHolders(Address),
    RegistryOperator(Address),
    OracleRound,
    PoolReserves,
}

impl Slot {
    /// Whether the slot is keyed by `account`, i.e. belongs to the account's
    /// associated storage in an external contract.
    pub fn is_associated_with(&self, account: Address) -> bool {
        match *self {
            Slot::Balance(holder) => holder == account,
            Slot::Allowance { owner, .. } => owner == account,
            Slot::Nonce(a) | Slot::SbtRecord(a) => a == account,
            _ => false,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Balance(a) => write!(f, "balances[{a}]"),
            Slot::Allowance { owner, spender } => write!(f, "allowances[{owner}][{spender}]"),
            Slot::TotalSupply => write!(f, "totalSupply"),
            Slot::AutoApproved(a) => write!(f, "autoApproved[{a}]"),
            Slot::SbtRecord(a) => write!(f, "sbtRecords[{a}]"),
            Slot::Nonce(a) => write!(f, "nonces[{a}]"),
            Slot::Deposit(a) => write!(f, "deposits[{a}]"),
            Slot::AccountKey => write!(f, "accountKey"),
            Slot::SignerKey => write!(f, "verifyingSigner"),
            Slot::Operators(a) => write!(f, "operators[{a}]"),
            Slot::UserOpState { operator, sender } => {
                write!(f, "userOpState[{operator}][{sender}]")
            }
            Slot::CachedPrice => write!(f, "cachedPrice"),
            Slot::SbtHolders(a) => write!(f, "sbtHolders[{a}]"),
            Slot::RegistryOperator(a) => write!(f, "registry.operators[{a}]"),
            Slot::OracleRound => write!(f, "latestRound"),
            Slot::PoolReserves => write!(f, "reserves"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Access {
    pub contract: Address,
    pub slot: Slot,
    pub mode: AccessMode,
    pub phase: Phase,
}

/// Ordered storage touches of one handled operation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessTrace {
    pub entries: Vec<Access>,
}

impl AccessTrace {
    pub fn in_phase(&self, phase: Phase) -> impl Iterator<Item = &Access> {
        self.entries.iter().filter(move |a| a.phase == phase)
    }

    /// Read/write counts for one phase, splitting reads into cold (first
    /// touch of the slot within the whole trace) and warm.
    pub fn phase_stats(&self, phase: Phase) -> PhaseStats {
        self.stats_where(|a| a.phase == phase)
    }

    /// Like [`AccessTrace::phase_stats`] for an arbitrary entry filter.
    pub fn stats_where(&self, keep: impl Fn(&Access) -> bool) -> PhaseStats {
        let mut seen = BTreeSet::new();
        let mut stats = PhaseStats::default();
        for a in &self.entries {
            let first = seen.insert((a.contract, a.slot));
            if !keep(a) {
                continue;
            }
            match a.mode {
                AccessMode::Read if first => stats.cold_reads += 1,
                AccessMode::Read => stats.warm_reads += 1,
                AccessMode::Write => stats.writes += 1,
            }
        }
        stats
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseStats {
    pub cold_reads: u32,
    pub warm_reads: u32,
    pub writes: u32,
}

/// Collects [`Access`] entries while state machines run. A disabled recorder
/// drops everything, which is what setup code outside `handle_op` uses.
#[derive(Clone, Debug)]
pub struct Recorder {
    enabled: bool,
    phase: Phase,
    trace: AccessTrace,
}

impl Recorder {
    pub fn new(phase: Phase) -> Recorder {
        Recorder { enabled: true, phase, trace: AccessTrace::default() }
    }

    pub fn disabled() -> Recorder {
        Recorder { enabled: false, phase: Phase::Execution, trace: AccessTrace::default() }
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn read(&mut self, contract: Address, slot: Slot) {
        self.push(contract, slot, AccessMode::Read);
    }

    pub fn write(&mut self, contract: Address, slot: Slot) {
        self.push(contract, slot, AccessMode::Write);
    }

    fn push(&mut self, contract: Address, slot: Slot, mode: AccessMode) {
        if self.enabled {
            self.trace.entries.push(Access { contract, slot, mode, phase: self.phase });
        }
    }

    pub fn len(&self) -> usize {
        self.trace.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.entries.is_empty()
    }

    /// Drops entries recorded after `len`; used when a stage is rolled back.
    pub fn truncate(&mut self, len: usize) {
        self.trace.entries.truncate(len);
    }

    pub fn trace(&self) -> &AccessTrace {
        &self.trace
    }

    pub fn into_trace(self) -> AccessTrace {
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_then_warm() {
        let c = Address::from_label("c");
        let mut r = Recorder::new(Phase::PaymasterValidation);
        r.read(c, Slot::CachedPrice);
        r.read(c, Slot::CachedPrice);
        r.set_phase(Phase::PostOp);
        r.read(c, Slot::CachedPrice);
        r.write(c, Slot::CachedPrice);
        let t = r.into_trace();
        let v = t.phase_stats(Phase::PaymasterValidation);
        assert_eq!((v.cold_reads, v.warm_reads, v.writes), (1, 1, 0));
        let p = t.phase_stats(Phase::PostOp);
        assert_eq!((p.cold_reads, p.warm_reads, p.writes), (0, 1, 1));
    }

    #[test]
    fn disabled_recorder_is_silent() {
        let mut r = Recorder::disabled();
        r.read(Address::from_label("x"), Slot::TotalSupply);
        assert!(r.is_empty());
    }
}
