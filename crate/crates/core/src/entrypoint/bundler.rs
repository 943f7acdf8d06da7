use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::paymasters::PaymasterKind;

use super::EntryPointError;

/// Smart-account family of the sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccountKind {
    /// SimpleAccount-style reference implementation.
    Reference,
    /// Vendor-integrated modular account.
    Vendor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stack {
    pub paymaster: PaymasterKind,
    pub account: AccountKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PvgTable {
    /// Reference PVG per paymaster kind, for either account kind.
    Calibrated,
    Uniform(u64),
    Custom(BTreeMap<Stack, u64>),
}

impl PvgTable {
    pub fn calibrated_value(kind: PaymasterKind) -> u64 {
        match kind {
            PaymasterKind::AoaV4 => 119_084,
            PaymasterKind::AoaSuper => 118_988,
            PaymasterKind::PoaVerifying => 51_348,
            PaymasterKind::PoaDexErc20 => 58_192,
        }
    }
}

/// How a bundler prices pre-verification gas and what fee share goes to L1.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlerProfile {
    pub name: String,
    pub pvg: PvgTable,
    pub l1_fee_share: f64,
    /// Annotation only; no behaviour depends on it.
    pub entry_point_version: String,
}

impl BundlerProfile {
    pub fn calibrated() -> BundlerProfile {
        BundlerProfile {
            name: "calibrated".into(),
            pvg: PvgTable::Calibrated,
            l1_fee_share: 0.08,
            entry_point_version: "v0.7".into(),
        }
    }

    pub fn uniform(pvg: u64) -> BundlerProfile {
        BundlerProfile { name: format!("uniform-{pvg}"), pvg: PvgTable::Uniform(pvg), ..BundlerProfile::calibrated() }
    }

    pub fn pvg_for(&self, stack: Stack) -> Result<u64, EntryPointError> {
        match &self.pvg {
            PvgTable::Calibrated => Ok(PvgTable::calibrated_value(stack.paymaster)),
            PvgTable::Uniform(c) => Ok(*c),
            PvgTable::Custom(map) => map.get(&stack).copied().ok_or(EntryPointError::UnknownStack(stack)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_and_uniform_profiles() {
        let p = BundlerProfile::calibrated();
        let super_ref = Stack { paymaster: PaymasterKind::AoaSuper, account: AccountKind::Reference };
        let verifying_vendor = Stack { paymaster: PaymasterKind::PoaVerifying, account: AccountKind::Vendor };
        assert_eq!(p.pvg_for(super_ref).unwrap(), 118_988);
        assert_eq!(p.pvg_for(verifying_vendor).unwrap(), 51_348);
        let u = BundlerProfile::uniform(7);
        assert_eq!(u.pvg_for(super_ref).unwrap(), 7);
        assert_eq!(u.pvg_for(verifying_vendor).unwrap(), 7);
    }

    #[test]
    fn custom_table_can_miss() {
        let stack = Stack { paymaster: PaymasterKind::AoaV4, account: AccountKind::Reference };
        let p = BundlerProfile { pvg: PvgTable::Custom(BTreeMap::new()), ..BundlerProfile::calibrated() };
        assert_eq!(p.pvg_for(stack), Err(EntryPointError::UnknownStack(stack)));
    }
}
