use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{ScenarioSpec, SystemId};
use crate::entrypoint::GasReceipt;
use crate::gasmodel::{apply_jitter, Component, JitterStream};
use crate::stats::SystemSamples;
use crate::types::U256;

use super::{ScenarioError, World};

/// Fixed `txGasUsed` of a plain EOA token transfer.
pub const EOA_TX_GAS: u64 = 43_334;

/// An operation that did not produce a receipt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Excluded {
    pub op_index: usize,
    pub code: String,
    pub reason: String,
}

/// A receipt and the index of the operation that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OpReceipt {
    pub op_index: usize,
    #[serde(flatten)]
    pub receipt: GasReceipt,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemRun {
    pub system: SystemId,
    pub receipts: Vec<OpReceipt>,
    pub excluded: Vec<Excluded>,
    /// Names of tokens whose balances do not sum to their supply afterwards.
    pub conservation_violations: Vec<String>,
    /// Ledger-side total of xPNTs burned during the run.
    #[serde(with = "crate::types::amount_serde")]
    pub xpnts_burned: U256,
    /// Sum of `settlementBurn` over the receipts.
    #[serde(with = "crate::types::amount_serde")]
    pub settlement_burns: U256,
}

impl SystemRun {
    /// Balances match supplies and every burn is accounted for by a receipt.
    pub fn conserved(&self) -> bool {
        self.conservation_violations.is_empty() && self.xpnts_burned == self.settlement_burns
    }

    pub fn samples(&self) -> SystemSamples {
        SystemSamples {
            system: self.system.label().to_string(),
            tx_gas: self.receipts.iter().map(|r| r.receipt.tx_gas_used as f64).collect(),
            actual_gas: self.receipts.iter().map(|r| r.receipt.actual_gas_used as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Campaign {
    pub runs: Vec<SystemRun>,
}

impl Campaign {
    pub fn run(&self, system: SystemId) -> Option<&SystemRun> {
        self.runs.iter().find(|r| r.system == system)
    }

    pub fn samples(&self) -> Vec<SystemSamples> {
        self.runs.iter().map(SystemRun::samples).collect()
    }
}

/// `spec.run.n` operations of one system on a fresh world. Operation `i`
/// runs at block `i + 1` from user `i mod users.count`.
pub fn run_system(spec: &ScenarioSpec, system: SystemId) -> Result<SystemRun, ScenarioError> {
    let mut world = World::build(spec, system.account_kind())?;
    let burned_before = world.xpnts_burned();
    let mut receipts = Vec::with_capacity(spec.run.n);
    let mut excluded = Vec::new();
    let mut eoa_jitter = JitterStream::new(spec.run.seed, 0, world.chain.gas.noise.amplitude(None));
    for i in 0..spec.run.n {
        world.advance_to(i as u64 + 1);
        let user = i % world.users.len();
        match system.paymaster_kind() {
            None => match eoa_transfer(&mut world, user, &mut eoa_jitter) {
                Ok(receipt) => receipts.push(OpReceipt { op_index: i, receipt }),
                Err(e) => excluded.push(Excluded { op_index: i, code: "ExecutionFailed".into(), reason: e.to_string() }),
            },
            Some(kind) => {
                let result = world.op(kind, user).and_then(|op| world.submit(&op));
                match result {
                    Ok(handled) => receipts.push(OpReceipt { op_index: i, receipt: handled.receipt }),
                    Err(e) => excluded.push(Excluded { op_index: i, code: e.code().into(), reason: e.to_string() }),
                }
            }
        }
    }
    let ledger = &world.chain.ledger;
    let conservation_violations = ledger
        .conservation_violations()
        .into_iter()
        .map(|t| ledger.token_info(t).map(|i| i.name.clone()).unwrap_or_default())
        .collect();
    let settlement_burns = receipts.iter().fold(U256::zero(), |acc, r| acc + r.receipt.settlement_burn);
    Ok(SystemRun {
        system,
        receipts,
        excluded,
        conservation_violations,
        xpnts_burned: world.xpnts_burned() - burned_before,
        settlement_burns,
    })
}

/// Direct transfer without the EntryPoint, priced at [`EOA_TX_GAS`] plus jitter.
fn eoa_transfer(
    world: &mut World,
    user: usize,
    jitter: &mut JitterStream,
) -> Result<GasReceipt, crate::ledger::LedgerError> {
    let amount = world.spec.workload.transfer_amount;
    let from = world.users[user].addr;
    world.chain.ledger.transfer(world.fee_token, from, world.recipient, amount)?;
    let gas = apply_jitter(EOA_TX_GAS, jitter.peek());
    jitter.commit();
    Ok(GasReceipt::new(BTreeMap::from([(Component::Execution, gas)]), 0, world.bundler.l1_fee_share, U256::zero()))
}

/// Runs every system of `spec.run.systems` in parallel, one world each.
pub fn run_campaign(spec: &ScenarioSpec) -> Result<Campaign, ScenarioError> {
    spec.validate()?;
    let results: Vec<Result<SystemRun, ScenarioError>> = std::thread::scope(|s| {
        let handles: Vec<_> = spec.run.systems.iter().map(|&sys| s.spawn(move || run_system(spec, sys))).collect();
        handles.into_iter().map(|h| h.join().expect("campaign thread panicked")).collect()
    });
    Ok(Campaign { runs: results.into_iter().collect::<Result<_, _>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, noise: bool) -> ScenarioSpec {
        let mut spec = ScenarioSpec::default();
        spec.run.n = n;
        spec.run.noise = noise;
        spec
    }

    #[test]
    fn calibrated_means_are_exact() {
        let campaign = run_campaign(&spec(4, false)).unwrap();
        let expected = [
            (SystemId::Eoa, EOA_TX_GAS),
            (SystemId::T1, 152_008),
            (SystemId::T21, 167_830),
            (SystemId::B1Alchemy, 205_951),
            (SystemId::B2Pimlico, 328_937),
        ];
        for (sys, gas) in expected {
            let run = campaign.run(sys).unwrap();
            assert!(run.excluded.is_empty(), "{sys}: {:?}", run.excluded);
            assert!(run.receipts.iter().all(|r| r.receipt.tx_gas_used == gas), "{sys}");
            assert!(run.conserved());
        }
        assert!(campaign.run(SystemId::T21).unwrap().settlement_burns > U256::zero());
    }

    #[test]
    fn jitter_is_antithetic_and_bounded() {
        let run = run_system(&spec(50, true), SystemId::T21).unwrap();
        let gas: Vec<u64> = run.receipts.iter().map(|r| r.receipt.tx_gas_used).collect();
        assert_eq!(gas.iter().sum::<u64>(), 50 * 167_830);
        assert!(gas.iter().all(|g| g.abs_diff(167_830) <= 852));
        assert!(gas.iter().any(|&g| g != 167_830));
    }

    #[test]
    fn same_seed_same_receipts() {
        let a = run_system(&spec(6, true), SystemId::B2Pimlico).unwrap();
        let b = run_system(&spec(6, true), SystemId::B2Pimlico).unwrap();
        assert_eq!(a.receipts, b.receipts);
    }

    #[test]
    fn rejections_are_logged() {
        let mut s = spec(3, false);
        s.faults.signer_offline.push(crate::config::BlockRange(2, 3));
        let run = run_system(&s, SystemId::B1Alchemy).unwrap();
        assert_eq!(run.receipts.len(), 2);
        assert_eq!(run.excluded, vec![Excluded {
            op_index: 1,
            code: "PaymasterRejected".into(),
            reason: "paymaster rejected: signer service is offline".into(),
        }]);
    }
}
