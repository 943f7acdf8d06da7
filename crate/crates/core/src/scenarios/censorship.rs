use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{ScenarioSpec, SystemId};
use crate::entrypoint::{check_self_storage, StorageCheck};
use crate::paymasters::PaymasterKind;
use crate::trace::Access;

use super::{ScenarioError, World};

/// Validation outcomes of one paymaster kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Tally {
    pub succeeded: u32,
    pub failed: u32,
    /// Failed operations per user index.
    pub failures_by_user: BTreeMap<usize, u32>,
    pub failure_reasons: BTreeMap<String, u32>,
}

/// Self-storage checks over every accepted operation of one kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StorageAudit {
    pub ops_checked: u32,
    pub ops_passed: u32,
    /// Distinct offending touches.
    pub violations: Vec<Access>,
    /// Distinct sender-associated touches, permitted but listed.
    pub associated: Vec<Access>,
}

impl StorageAudit {
    pub fn passed(&self) -> bool {
        self.ops_passed == self.ops_checked
    }

    fn add(&mut self, check: &StorageCheck) {
        self.ops_checked += 1;
        if check.passed() {
            self.ops_passed += 1;
        }
        for a in &check.violations {
            if !self.violations.iter().any(|v| v.contract == a.contract && v.slot == a.slot) {
                self.violations.push(*a);
            }
        }
        for a in &check.associated {
            if !self.associated.iter().any(|v| v.contract == a.contract && v.slot == a.slot) {
                self.associated.push(*a);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CensorshipReport {
    pub ops_per_kind: usize,
    pub tallies: BTreeMap<PaymasterKind, Tally>,
    pub storage: BTreeMap<PaymasterKind, StorageAudit>,
    /// Check of one SuperPaymaster operation whose validation reads the
    /// registry directly instead of its mirror.
    pub broken_variant: StorageCheck,
}

impl CensorshipReport {
    pub fn broken_variant_flagged(&self) -> bool {
        !self.broken_variant.passed()
    }
}

/// Runs `spec.run.n` operations through PoaVerifying and AoaSuper on
/// separate worlds under the same workload and fault schedule.
pub fn run_censorship_experiment(spec: &ScenarioSpec) -> Result<CensorshipReport, ScenarioError> {
    let mut tallies = BTreeMap::new();
    let mut storage = BTreeMap::new();
    for kind in [PaymasterKind::PoaVerifying, PaymasterKind::AoaSuper] {
        let mut world = World::build(spec, SystemId::for_kind(kind).account_kind())?;
        let pm = world.paymaster_addr(kind);
        let staked = world.chain.paymaster(pm).is_some_and(|p| !p.entry_point_stake.is_zero());
        let mut tally = Tally::default();
        let mut audit = StorageAudit::default();
        for i in 0..spec.run.n {
            world.advance_to(i as u64 + 1);
            let user = i % world.users.len();
            let sender = world.users[user].addr;
            match world.op(kind, user).and_then(|op| world.submit(&op)) {
                Ok(handled) => {
                    tally.succeeded += 1;
                    audit.add(&check_self_storage(&handled.trace, pm, sender, staked));
                }
                Err(e) => {
                    tally.failed += 1;
                    *tally.failures_by_user.entry(user).or_default() += 1;
                    *tally.failure_reasons.entry(e.to_string()).or_default() += 1;
                }
            }
        }
        tallies.insert(kind, tally);
        storage.insert(kind, audit);
    }

    let mut world = World::build(spec, SystemId::T21.account_kind())?;
    world.advance_to(1);
    let pm = world.paymaster_addr(PaymasterKind::AoaSuper);
    if let Some(p) = world.chain.paymaster_mut(pm) {
        p.live_registry_reads = true;
    }
    let sender = world.users[0].addr;
    let handled = world.op(PaymasterKind::AoaSuper, 0).and_then(|op| world.submit(&op))?;
    let broken_variant = check_self_storage(&handled.trace, pm, sender, true);

    Ok(CensorshipReport { ops_per_kind: spec.run.n, tallies, storage, broken_variant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BlockRange;

    fn spec(n: usize) -> ScenarioSpec {
        let mut spec = ScenarioSpec::default();
        spec.run.n = n;
        spec
    }

    #[test]
    fn no_fault_everything_succeeds() {
        let r = run_censorship_experiment(&spec(10)).unwrap();
        for kind in [PaymasterKind::PoaVerifying, PaymasterKind::AoaSuper] {
            assert_eq!(r.tallies[&kind].succeeded, 10);
            assert!(r.storage[&kind].passed());
        }
        assert!(r.broken_variant_flagged());
    }

    #[test]
    fn offline_signer_only_hurts_poa() {
        let mut s = spec(10);
        s.faults.signer_offline.push(BlockRange(0, u64::MAX));
        let r = run_censorship_experiment(&s).unwrap();
        assert_eq!(r.tallies[&PaymasterKind::PoaVerifying].succeeded, 0);
        assert_eq!(r.tallies[&PaymasterKind::AoaSuper].succeeded, 10);
    }
}
