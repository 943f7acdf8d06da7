//! Constant-product token/ETH pool with zero fee.

use serde::Serialize;

use crate::types::{narrow, U256, U512};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Pool {
    #[serde(with = "crate::types::amount_serde")]
    pub reserve_token: U256,
    #[serde(with = "crate::types::amount_serde")]
    pub reserve_eth: U256,
}

impl Pool {
    /// Tokens needed to take `eth_out` out of the pool, rounded up. `None`
    /// when the pool cannot supply that much ETH.
    pub fn token_in_for(&self, eth_out: U256) -> Option<U256> {
        if eth_out >= self.reserve_eth {
            return None;
        }
        let num = self.reserve_token.widen() * eth_out.widen();
        let den = (self.reserve_eth - eth_out).widen();
        narrow((num + den - U512::one()) / den)
    }

    /// ETH received for selling `token_in`, rounded down.
    pub fn eth_out_for(&self, token_in: U256) -> U256 {
        let num = self.reserve_eth.widen() * token_in.widen();
        let den = self.reserve_token.widen() + token_in.widen();
        narrow(num / den).expect("output is below reserve_eth")
    }

    /// Sells `token_in` into the pool and returns the ETH paid out.
    pub fn swap_exact_in(&mut self, token_in: U256) -> Option<U256> {
        let out = self.eth_out_for(token_in);
        self.reserve_token = self.reserve_token.checked_add(token_in)?;
        self.reserve_eth -= out;
        Some(out)
    }
}
