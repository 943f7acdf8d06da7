use std::collections::BTreeMap;

use crate::config::{ActionKind, ScenarioSpec};
use crate::entrypoint::{AccountKind, Action, BundlerProfile, Chain, EntryPointError, HandledOp, UserOperation};
use crate::ledger::{LedgerConfig, TokenLedger};
use crate::paymasters::{DexState, PaymasterInstance, PaymasterKind, Pool, SignerService};
use crate::registry::{KeeperReport, OperatorConfig, PriceFeedConfig, Registry};
use crate::types::{Address, SecretKey, TokenId, U256};

use super::ScenarioError;

#[derive(Clone, Debug)]
pub struct User {
    pub addr: Address,
    pub key: SecretKey,
    /// Index into [`World::operators`] of the user's community.
    pub community: usize,
}

/// A fully wired chain built from a scenario: tokens, Gas Cards, registry,
/// the four paymasters and their mirrors.
#[derive(Clone, Debug)]
pub struct World {
    pub spec: ScenarioSpec,
    pub chain: Chain,
    pub bundler: BundlerProfile,
    pub users: Vec<User>,
    pub operators: Vec<Address>,
    /// xPNTs token of each operator, same order as `operators`.
    pub xpnts: Vec<TokenId>,
    pub apnts: TokenId,
    pub fee_token: TokenId,
    pub recipient: Address,
    pub treasury: Address,
    /// Auto-approved xPNTs spender other than the paymasters.
    pub factory: Address,
    pub keepers: Vec<Address>,
    pub paymasters: BTreeMap<PaymasterKind, Address>,
}

impl World {
    /// Builds the world with every account of kind `account_kind`.
    pub fn build(spec: &ScenarioSpec, account_kind: AccountKind) -> Result<World, ScenarioError> {
        spec.validate()?;
        let c = &spec.chain;
        let governance = Address::from_label("governance");
        let super_addr = Address::from_label("pm:super");
        let mut ledger = TokenLedger::new(LedgerConfig {
            governance,
            super_paymaster: super_addr,
            max_single_tx_limit: c.max_single_tx_limit,
            mint_burn_floor: c.mint_burn_floor,
        });
        let apnts = ledger.create_token("aPNTs");
        let fee_token = ledger.create_token("USDC");
        let xpnts: Vec<TokenId> = spec.operators.iter().map(|o| ledger.create_token(&format!("xPNTs:{}", o.name))).collect();
        let operators: Vec<Address> =
            spec.operators.iter().map(|o| Address::from_label(&format!("operator:{}", o.name))).collect();

        let paymasters = BTreeMap::from([
            (PaymasterKind::AoaSuper, super_addr),
            (PaymasterKind::AoaV4, Address::from_label("pm:v4")),
            (PaymasterKind::PoaVerifying, Address::from_label("pm:verifying")),
            (PaymasterKind::PoaDexErc20, Address::from_label("pm:dex")),
        ]);
        let factory = Address::from_label("factory");
        for &x in &xpnts {
            for spender in [super_addr, paymasters[&PaymasterKind::AoaV4], factory] {
                ledger.set_auto_approved(governance, x, spender, true)?;
            }
        }
        ledger.set_auto_approved(governance, apnts, super_addr, true)?;

        for (addr, o) in operators.iter().zip(&spec.operators) {
            ledger.mint(apnts, *addr, o.apnts_balance)?;
        }

        let u = &spec.users;
        let users: Vec<User> = (0..u.count)
            .map(|i| User {
                addr: Address::from_label(&format!("user:{i}")),
                key: SecretKey::from_label(&format!("key:user:{i}")),
                community: i % operators.len(),
            })
            .collect();
        let dex_addr = paymasters[&PaymasterKind::PoaDexErc20];
        for user in &users {
            ledger.mint(xpnts[user.community], user.addr, u.xpnts_balance)?;
            ledger.mint(fee_token, user.addr, u.fee_token_balance)?;
            ledger.mint(ledger.gtoken(), user.addr, u.gtoken_balance)?;
            if u.with_sbt {
                ledger.mint_sbt(user.addr, c.mint_burn_floor, 0)?;
                ledger.associate_community(user.addr, operators[user.community])?;
            }
            if u.approve_dex {
                ledger.approve(fee_token, user.addr, dex_addr, U256::MAX)?;
            }
        }
        let pool_addr = Address::from_label("pool:USDC-ETH");
        ledger.mint(fee_token, pool_addr, c.dex_pool_tokens)?;

        let mut registry = Registry::new(
            governance,
            PriceFeedConfig { staleness_threshold: c.staleness_threshold, dvt_freshness: c.dvt_freshness, quorum: c.quorum },
        );
        for ((addr, o), &token) in operators.iter().zip(&spec.operators).zip(&xpnts) {
            registry.register_operator(OperatorConfig {
                operator: *addr,
                supported_tokens: vec![token],
                exchange_rate: o.exchange_rate,
                per_card_spending_cap: o.per_card_spending_cap,
                rate_limit_window: o.rate_limit_window,
                deposit_balance: o.apnts_balance,
            })?;
        }
        registry.update_price(c.eth_per_apnts, 0, 0)?;

        let treasury = Address::from_label("treasury");
        let mut instances = Vec::new();
        for (&kind, &addr) in &paymasters {
            let mut pm = PaymasterInstance::new(kind, addr, c.protocol_hard_cap);
            pm.staleness_threshold = c.staleness_threshold;
            pm.registry_addr = registry.addr();
            match kind {
                PaymasterKind::AoaSuper => {
                    pm.entry_point_stake = c.paymaster_stake;
                    pm.apnts = Some(apnts);
                    pm.treasury = treasury;
                }
                PaymasterKind::AoaV4 => pm.entry_point_stake = c.paymaster_stake,
                PaymasterKind::PoaVerifying => {
                    let key = SecretKey::from_label("signer:verifying");
                    let mut service = SignerService::new(key);
                    service.blacklist = spec.faults.blacklist.iter().map(|&i| users[i].addr).collect();
                    pm.signer_service = Some(service);
                    pm.verifying_key = Some(key);
                }
                PaymasterKind::PoaDexErc20 => {
                    pm.signer_service = Some(SignerService::new(SecretKey::from_label("signer:dex")));
                    pm.dex = Some(DexState {
                        fee_token,
                        oracle_price: Some(c.dex_oracle_price),
                        oracle_addr: Address::from_label("oracle:USDC-ETH"),
                        pool_addr,
                        pool: Pool { reserve_token: c.dex_pool_tokens, reserve_eth: c.dex_pool_eth },
                        eth_recovered: U256::zero(),
                    });
                }
            }
            if kind.is_aoa() {
                for &op in &operators {
                    registry.sync_operator(registry.addr(), &mut pm, op)?;
                }
                registry.mirror_price(registry.addr(), &mut pm)?;
            }
            if kind == PaymasterKind::AoaSuper {
                for user in &users {
                    if ledger.sbt(user.addr).is_some() {
                        registry.update_sbt_status(registry.addr(), &mut pm, &ledger, user.addr, true)?;
                    }
                }
            }
            instances.push(pm);
        }

        let mut chain = Chain::new(ledger, registry, spec.gas_table(), c.gas_price, spec.run.seed);
        for pm in instances {
            let addr = pm.addr;
            chain.add_paymaster(pm)?;
            chain.deposit(addr, c.paymaster_deposit);
        }
        for user in &users {
            chain.add_account(user.addr, user.key, account_kind);
        }

        let mut bundler = match c.pvg {
            Some(pvg) => BundlerProfile::uniform(pvg),
            None => BundlerProfile::calibrated(),
        };
        bundler.l1_fee_share = c.l1_fee_share;

        let mut world = World {
            spec: spec.clone(),
            chain,
            bundler,
            users,
            operators,
            xpnts,
            apnts,
            fee_token,
            recipient: Address::from_label("recipient"),
            treasury,
            factory,
            keepers: (0..c.keepers).map(|i| Address::from_label(&format!("keeper:{i}"))).collect(),
            paymasters,
        };
        world.advance_to(0);
        Ok(world)
    }

    pub fn paymaster_addr(&self, kind: PaymasterKind) -> Address {
        self.paymasters[&kind]
    }

    /// Moves the chain to `block` and applies the fault schedule: signer
    /// availability, then a price update (primary feed, or the keeper
    /// fallback while the feed is stale) mirrored into the AOA paymasters.
    pub fn advance_to(&mut self, block: u64) {
        self.chain.block = block;
        let faults = &self.spec.faults;
        let online = !faults.signer_offline_at(block);
        for kind in [PaymasterKind::PoaVerifying, PaymasterKind::PoaDexErc20] {
            if let Some(service) =
                self.chain.paymaster_mut(self.paymasters[&kind]).and_then(|pm| pm.signer_service.as_mut())
            {
                service.online = online;
            }
        }

        let price = self.spec.chain.eth_per_apnts;
        let registry = &mut self.chain.registry;
        let updated = if faults.feed_stale_at(block) {
            let active = faults.active_keepers_at(block, self.keepers.len()).min(self.keepers.len());
            let reports: Vec<KeeperReport> = self.keepers[..active]
                .iter()
                .map(|&keeper| KeeperReport { keeper, reported_price: price, at_block: block })
                .collect();
            registry.update_price_dvt(&reports, block).is_ok()
        } else {
            registry.update_price(price, 0, block).is_ok()
        };
        if updated {
            for kind in [PaymasterKind::AoaSuper, PaymasterKind::AoaV4] {
                let addr = self.paymasters[&kind];
                self.chain.with_registry_and_paymaster(addr, |reg, pm, _| reg.mirror_price(reg.addr(), pm));
            }
        }
    }

    pub fn action(&self) -> Action {
        match self.spec.workload.action {
            ActionKind::Transfer => Action::Erc20Transfer {
                token: self.fee_token,
                to: self.recipient,
                amount: self.spec.workload.transfer_amount,
            },
            ActionKind::Noop => Action::Noop,
        }
    }

    /// Signed operation from `user` through the `kind` paymaster, with the
    /// scenario's `maxCost`.
    pub fn op(&self, kind: PaymasterKind, user: usize) -> Result<UserOperation, EntryPointError> {
        self.op_with_max_cost(kind, user, self.spec.users.max_cost)
    }

    pub fn op_with_max_cost(
        &self,
        kind: PaymasterKind,
        user: usize,
        max_cost: U256,
    ) -> Result<UserOperation, EntryPointError> {
        let u = &self.users[user];
        let data = if kind.is_aoa() { self.operators[u.community].0.to_vec() } else { Vec::new() };
        self.chain.build_op(u.addr, self.action(), self.paymasters[&kind], data, max_cost)
    }

    pub fn submit(&mut self, op: &UserOperation) -> Result<HandledOp, EntryPointError> {
        let bundler = self.bundler.clone();
        self.chain.handle_op(op, &bundler)
    }

    /// Sum of xPNTs burned across every community token.
    pub fn xpnts_burned(&self) -> U256 {
        self.xpnts.iter().fold(U256::zero(), |acc, &t| acc + self.chain.ledger.total_burned(t))
    }
}
