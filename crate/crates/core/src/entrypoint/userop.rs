use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::types::{Address, Hash32, SecretKey, TokenId, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Action {
    Erc20Transfer {
        token: TokenId,
        to: Address,
        #[serde(with = "crate::types::amount_serde")]
        amount: U256,
    },
    Noop,
}

/// A UserOperation. `user_op_hash` covers every field except the account
/// signature, which signs that hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UserOperation {
    pub sender: Address,
    #[serde(with = "crate::types::amount_serde")]
    pub nonce: U256,
    pub action: Action,
    pub paymaster: Address,
    pub paymaster_data: Vec<u8>,
    pub account_signature: Hash32,
    #[serde(with = "crate::types::amount_serde")]
    pub max_cost: U256,
    pub user_op_hash: Hash32,
}

impl UserOperation {
    /// Unsigned operation with its hash filled in.
    pub fn new(
        sender: Address,
        nonce: U256,
        action: Action,
        paymaster: Address,
        paymaster_data: Vec<u8>,
        max_cost: U256,
    ) -> UserOperation {
        let mut op = UserOperation {
            sender,
            nonce,
            action,
            paymaster,
            paymaster_data,
            account_signature: Hash32::default(),
            max_cost,
            user_op_hash: Hash32::default(),
        };
        op.user_op_hash = op.compute_hash();
        op
    }

    pub fn compute_hash(&self) -> Hash32 {
        let mut h = Sha256::new();
        h.update(self.sender.0);
        h.update(self.nonce.to_big_endian());
        match self.action {
            Action::Erc20Transfer { token, to, amount } => {
                h.update([1u8]);
                h.update(token.0.to_be_bytes());
                h.update(to.0);
                h.update(amount.to_big_endian());
            }
            Action::Noop => h.update([0u8]),
        }
        h.update(self.paymaster.0);
        h.update((self.paymaster_data.len() as u64).to_be_bytes());
        h.update(&self.paymaster_data);
        h.update(self.max_cost.to_big_endian());
        Hash32(h.finalize().into())
    }

    pub fn signed(mut self, key: &SecretKey) -> UserOperation {
        self.account_signature = key.sign(&self.user_op_hash);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_covers_action() {
        let a = Address::from_label("a");
        let op = UserOperation::new(a, U256::zero(), Action::Noop, a, vec![], U256::one());
        assert_eq!(op.user_op_hash, op.compute_hash());
        let mut tampered = op.clone();
        tampered.action = Action::Erc20Transfer { token: TokenId(1), to: a, amount: U256::one() };
        assert_ne!(tampered.compute_hash(), tampered.user_op_hash);
    }
}
