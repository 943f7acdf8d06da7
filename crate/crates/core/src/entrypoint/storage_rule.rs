use serde::Serialize;

use crate::trace::{Access, AccessTrace, Phase};
use crate::types::Address;

/// Outcome of the validation-phase storage check for one paymaster.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StorageCheck {
    /// Paymaster-validation touches outside the paymaster's own storage and
    /// outside the sender's associated slots.
    pub violations: Vec<Access>,
    /// Touches of slots keyed by the sender in other contracts (its token
    /// balance, allowance, nonce). Permitted for unstaked entities too.
    pub associated: Vec<Access>,
    /// Set when the paymaster is staked and still has violations; a staked
    /// entity may be allowed broader access, which this checker does not grant.
    pub staked_note: Option<String>,
}

impl StorageCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_self_storage(trace: &AccessTrace, paymaster: Address, sender: Address, staked: bool) -> StorageCheck {
    let mut check = StorageCheck::default();
    for a in trace.in_phase(Phase::PaymasterValidation) {
        if a.contract == paymaster {
            continue;
        }
        if a.slot.is_associated_with(sender) {
            check.associated.push(*a);
        } else {
            check.violations.push(*a);
        }
    }
    if staked && !check.violations.is_empty() {
        check.staked_note = Some(format!(
            "{} non-self read(s) by a staked paymaster; reported under the strict rule, not relaxed",
            check.violations.len()
        ));
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Recorder, Slot};

    #[test]
    fn registry_read_is_flagged() {
        let pm = Address::from_label("pm");
        let sender = Address::from_label("sender");
        let registry = Address::from_label("registry");
        let token = Address::from_label("token");
        let mut r = Recorder::new(Phase::PaymasterValidation);
        r.read(pm, Slot::SbtHolders(sender));
        r.read(registry, Slot::RegistryOperator(pm));
        r.read(token, Slot::Balance(sender));
        let check = check_self_storage(r.trace(), pm, sender, true);
        assert_eq!(check.violations.len(), 1);
        assert_eq!(check.violations[0].contract, registry);
        assert_eq!(check.associated.len(), 1);
        assert!(check.staked_note.is_some());
    }

    #[test]
    fn empty_trace_passes() {
        let check = check_self_storage(&AccessTrace::default(), Address::from_label("pm"), Address::ZERO, false);
        assert!(check.passed());
    }
}
