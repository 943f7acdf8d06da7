//! Community operator registry and the mirror writer that keeps paymaster
//! self-storage current (SBT eligibility, operator configs, cached price).
//!
//! Nothing in here runs during a validation phase. The registry writes into a
//! [`PaymasterInstance`] ahead of time so that validation only ever reads the
//! paymaster's own maps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::TokenLedger;
use crate::paymasters::PaymasterInstance;
use crate::types::{Address, Rational, TokenId, U256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("operator {0} is already registered")]
    DuplicateOperator(Address),
    #[error("invalid operator config: {0}")]
    InvalidConfig(&'static str),
    #[error("operator {0} is not registered")]
    UnknownOperator(Address),
    #[error("{0} is not the registry")]
    NotRegistry(Address),
    #[error("{0} is not the governance address")]
    NotGovernance(Address),
    #[error("{0} holds no Gas Card")]
    NoSbtRecord(Address),
    #[error("price feed is {age} blocks old (threshold {threshold})")]
    StaleFeed { age: u64, threshold: u64 },
    #[error("price must be positive")]
    NonPositivePrice,
    #[error("{got} keeper reports, quorum is {need}")]
    QuorumNotMet { got: usize, need: usize },
    #[error("keeper {0} reported twice")]
    DuplicateKeeper(Address),
    #[error("keeper {keeper} report from block {at} is older than the freshness bound")]
    StaleReports { keeper: Address, at: u64 },
    #[error("block {now} precedes the cached update at {last}")]
    BlockRegression { now: u64, last: u64 },
}

/// Per-community parameters resolved by the paymaster at validation time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OperatorConfig {
    pub operator: Address,
    pub supported_tokens: Vec<TokenId>,
    /// xPNTs base units per aPNTs base unit.
    pub exchange_rate: Rational,
    /// Wei of sponsored cost per card per window.
    #[serde(with = "crate::types::amount_serde")]
    pub per_card_spending_cap: U256,
    pub rate_limit_window: u64,
    #[serde(with = "crate::types::amount_serde")]
    pub deposit_balance: U256,
}

impl OperatorConfig {
    pub fn is_active(&self) -> bool {
        !self.supported_tokens.is_empty()
    }

    fn check(&self) -> Result<(), RegistryError> {
        if !self.exchange_rate.is_positive() {
            return Err(RegistryError::InvalidConfig("exchangeRate must be positive"));
        }
        if self.rate_limit_window == 0 {
            return Err(RegistryError::InvalidConfig("rateLimitWindow must be at least 1"));
        }
        if self.supported_tokens.is_empty() {
            return Err(RegistryError::InvalidConfig("supportedTokens is empty"));
        }
        if self.operator.is_zero() {
            return Err(RegistryError::InvalidConfig("operator is the zero address"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PriceSource {
    PrimaryOracle,
    DvtFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PriceCache {
    /// Wei per aPNTs base unit.
    pub eth_per_apnts: Rational,
    pub updated_at_block: u64,
    pub source: PriceSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeeperReport {
    pub keeper: Address,
    pub reported_price: Rational,
    pub at_block: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PriceFeedConfig {
    pub staleness_threshold: u64,
    pub dvt_freshness: u64,
    pub quorum: usize,
}

impl Default for PriceFeedConfig {
    fn default() -> Self {
        PriceFeedConfig { staleness_threshold: 300, dvt_freshness: 50, quorum: 3 }
    }
}

/// Lower median of a non-empty list: the element at index `(n - 1) / 2`
/// after sorting.
pub fn median(values: &[Rational]) -> Option<Rational> {
    let mut sorted = values.to_vec();
    sorted.sort();
    sorted.get(sorted.len().checked_sub(1)? / 2).copied()
}

#[derive(Clone, Debug)]
pub struct Registry {
    addr: Address,
    governance: Address,
    operators: BTreeMap<Address, OperatorConfig>,
    price: Option<PriceCache>,
    feed: PriceFeedConfig,
}

impl Registry {
    pub fn new(governance: Address, feed: PriceFeedConfig) -> Registry {
        Registry {
            addr: Address::from_label("contract:Registry"),
            governance,
            operators: BTreeMap::new(),
            price: None,
            feed,
        }
    }

    pub fn addr(&self) -> Address {
        self.addr
    }

    pub fn feed_config(&self) -> PriceFeedConfig {
        self.feed
    }

    pub fn price(&self) -> Option<PriceCache> {
        self.price
    }

    pub fn operator(&self, operator: Address) -> Option<&OperatorConfig> {
        self.operators.get(&operator)
    }

    pub fn operators(&self) -> impl Iterator<Item = &OperatorConfig> {
        self.operators.values()
    }

    pub fn register_operator(&mut self, config: OperatorConfig) -> Result<(), RegistryError> {
        if self.operators.contains_key(&config.operator) {
            return Err(RegistryError::DuplicateOperator(config.operator));
        }
        config.check()?;
        self.operators.insert(config.operator, config);
        Ok(())
    }

    /// Deactivates an operator by clearing its supported tokens.
    pub fn deactivate_operator(&mut self, caller: Address, operator: Address) -> Result<(), RegistryError> {
        if caller != self.governance {
            return Err(RegistryError::NotGovernance(caller));
        }
        let config = self.operators.get_mut(&operator).ok_or(RegistryError::UnknownOperator(operator))?;
        config.supported_tokens.clear();
        Ok(())
    }

    /// Copies the registered config of `operator` into the paymaster's
    /// `operators` map.
    pub fn sync_operator(
        &self,
        caller: Address,
        pm: &mut PaymasterInstance,
        operator: Address,
    ) -> Result<(), RegistryError> {
        if caller != self.addr {
            return Err(RegistryError::NotRegistry(caller));
        }
        let config = self.operators.get(&operator).ok_or(RegistryError::UnknownOperator(operator))?;
        pm.operators.insert(operator, config.clone());
        Ok(())
    }

    pub fn update_sbt_status(
        &self,
        caller: Address,
        pm: &mut PaymasterInstance,
        ledger: &TokenLedger,
        holder: Address,
        eligible: bool,
    ) -> Result<(), RegistryError> {
        if caller != self.addr {
            return Err(RegistryError::NotRegistry(caller));
        }
        if eligible && ledger.sbt(holder).is_none() {
            return Err(RegistryError::NoSbtRecord(holder));
        }
        pm.sbt_holders.insert(holder, eligible);
        Ok(())
    }

    /// Copies the registry's cached price into the paymaster.
    pub fn mirror_price(&self, caller: Address, pm: &mut PaymasterInstance) -> Result<(), RegistryError> {
        if caller != self.addr {
            return Err(RegistryError::NotRegistry(caller));
        }
        pm.cached_price = self.price;
        Ok(())
    }

    fn check_block(&self, now: u64) -> Result<(), RegistryError> {
        match self.price {
            Some(p) if now < p.updated_at_block => {
                Err(RegistryError::BlockRegression { now, last: p.updated_at_block })
            }
            _ => Ok(()),
        }
    }

    /// Primary path. A stale feed leaves the cache untouched and returns
    /// [`RegistryError::StaleFeed`] so the caller can fall back to keepers.
    pub fn update_price(
        &mut self,
        feed_price: Rational,
        feed_age_blocks: u64,
        now_block: u64,
    ) -> Result<PriceCache, RegistryError> {
        if !feed_price.is_positive() {
            return Err(RegistryError::NonPositivePrice);
        }
        if feed_age_blocks > self.feed.staleness_threshold {
            return Err(RegistryError::StaleFeed {
                age: feed_age_blocks,
                threshold: self.feed.staleness_threshold,
            });
        }
        self.check_block(now_block)?;
        let cache = PriceCache { eth_per_apnts: feed_price, updated_at_block: now_block, source: PriceSource::PrimaryOracle };
        self.price = Some(cache);
        Ok(cache)
    }

    /// Keeper fallback: median over a quorum of fresh, distinct reports.
    pub fn update_price_dvt(&mut self, reports: &[KeeperReport], now_block: u64) -> Result<PriceCache, RegistryError> {
        let mut seen = BTreeSet::new();
        for r in reports {
            if !seen.insert(r.keeper) {
                return Err(RegistryError::DuplicateKeeper(r.keeper));
            }
            if !r.reported_price.is_positive() {
                return Err(RegistryError::NonPositivePrice);
            }
            if r.at_block > now_block || now_block - r.at_block > self.feed.dvt_freshness {
                return Err(RegistryError::StaleReports { keeper: r.keeper, at: r.at_block });
            }
        }
        if reports.len() < self.feed.quorum {
            return Err(RegistryError::QuorumNotMet { got: reports.len(), need: self.feed.quorum });
        }
        self.check_block(now_block)?;
        let prices: Vec<Rational> = reports.iter().map(|r| r.reported_price).collect();
        let price = median(&prices).expect("quorum is at least one report");
        let cache = PriceCache { eth_per_apnts: price, updated_at_block: now_block, source: PriceSource::DvtFallback };
        self.price = Some(cache);
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(op: &str) -> OperatorConfig {
        OperatorConfig {
            operator: Address::from_label(op),
            supported_tokens: vec![TokenId(1)],
            exchange_rate: Rational::integer(1),
            per_card_spending_cap: U256::exp10(21),
            rate_limit_window: 100,
            deposit_balance: U256::zero(),
        }
    }

    fn registry() -> Registry {
        Registry::new(Address::from_label("governance"), PriceFeedConfig::default())
    }

    fn report(k: &str, p: &str, at: u64) -> KeeperReport {
        KeeperReport { keeper: Address::from_label(k), reported_price: p.parse().unwrap(), at_block: at }
    }

    #[test]
    fn register_rules() {
        let mut r = registry();
        r.register_operator(config("op")).unwrap();
        assert_eq!(
            r.register_operator(config("op")),
            Err(RegistryError::DuplicateOperator(Address::from_label("op")))
        );
        let mut bad = config("other");
        bad.exchange_rate = Rational::integer(0);
        assert!(matches!(r.register_operator(bad), Err(RegistryError::InvalidConfig(_))));
    }

    #[test]
    fn primary_feed() {
        let mut r = registry();
        let p = Rational::from_ints(1, 100_000);
        let c = r.update_price(p, 0, 10).unwrap();
        assert_eq!((c.eth_per_apnts, c.updated_at_block, c.source), (p, 10, PriceSource::PrimaryOracle));
        let err = r.update_price(Rational::integer(2), 301, 11).unwrap_err();
        assert!(matches!(err, RegistryError::StaleFeed { .. }));
        assert_eq!(r.price(), Some(c));
        assert_eq!(r.update_price(Rational::integer(0), 0, 12), Err(RegistryError::NonPositivePrice));
        assert!(r.update_price(p, 300, 12).is_ok());
    }

    #[test]
    fn dvt_median_and_quorum() {
        let mut r = registry();
        let c = r.update_price_dvt(&[report("k1", "1.0", 5), report("k2", "1.2", 5), report("k3", "1.1", 5)], 10).unwrap();
        assert_eq!(c.eth_per_apnts, "1.1".parse().unwrap());
        assert_eq!(c.source, PriceSource::DvtFallback);

        let err = r.update_price_dvt(&[report("k1", "1.0", 5), report("k2", "1.2", 5)], 11).unwrap_err();
        assert_eq!(err, RegistryError::QuorumNotMet { got: 2, need: 3 });

        let c = r.update_price_dvt(&[report("k1", "1.0", 5), report("k2", "100", 5), report("k3", "1.0", 5)], 12).unwrap();
        assert_eq!(c.eth_per_apnts, Rational::integer(1));

        let dup = [report("k1", "1", 12), report("k1", "1", 12), report("k3", "1", 12)];
        assert!(matches!(r.update_price_dvt(&dup, 12), Err(RegistryError::DuplicateKeeper(_))));
        let old = [report("k1", "1", 0), report("k2", "1", 12), report("k3", "1", 12)];
        assert!(matches!(r.update_price_dvt(&old, 60), Err(RegistryError::StaleReports { .. })));
    }

    #[test]
    fn even_count_takes_lower_median() {
        let v: Vec<Rational> = [4u64, 1, 3, 2].iter().map(|x| Rational::integer(*x)).collect();
        assert_eq!(median(&v), Some(Rational::integer(2)));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn deactivate_needs_governance() {
        let mut r = registry();
        r.register_operator(config("op")).unwrap();
        let op = Address::from_label("op");
        assert_eq!(r.deactivate_operator(op, op), Err(RegistryError::NotGovernance(op)));
        r.deactivate_operator(Address::from_label("governance"), op).unwrap();
        assert!(!r.operator(op).unwrap().is_active());
    }
}
