use std::path::PathBuf;

use aoa_sim::config::{BlockRange, KeeperChange, ScenarioSpec};
use aoa_sim::gasmodel::GasMode;
use aoa_sim::paymasters::PaymasterKind;
use aoa_sim::scenarios::{run_campaign, run_censorship_experiment};

fn scenario(name: &str) -> ScenarioSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioSpec::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn default_file_matches_builtin_defaults() {
    assert_eq!(scenario("default.toml"), ScenarioSpec::default());
}

#[test]
fn signer_offline_file() {
    let spec = scenario("signer-offline.toml");
    assert_eq!(spec.faults.signer_offline, vec![BlockRange(0, 1000)]);
    let report = run_censorship_experiment(&spec).unwrap();
    assert_eq!(report.tallies[&PaymasterKind::PoaVerifying].succeeded, 0);
    assert_eq!(report.tallies[&PaymasterKind::AoaSuper].succeeded, 50);
}

#[test]
fn stale_feed_file() {
    let spec = scenario("stale-feed.toml");
    assert_eq!(spec.faults.keeper_changes, vec![KeeperChange { at_block: 30, active: 1 }]);
    let campaign = run_campaign(&spec).unwrap();
    // Op i runs at block i + 1. The last quorum update lands at block 29 and
    // the cache is usable for 300 blocks after it.
    let last_update = 29;
    let expired: Vec<usize> = (0..spec.run.n).filter(|i| *i as u64 + 1 > last_update + 300).collect();
    assert_eq!(expired.len(), 71);
    for run in &campaign.runs {
        assert!(run.conserved());
        let excluded: Vec<usize> = run.excluded.iter().map(|e| e.op_index).collect();
        match run.system.paymaster_kind() {
            Some(k) if k.is_aoa() => {
                assert_eq!(excluded, expired, "{}", run.system);
                assert!(run.excluded.iter().all(|e| e.reason.contains("older than 300 blocks")), "{:?}", run.excluded[0]);
            }
            _ => assert!(excluded.is_empty(), "{}", run.system),
        }
    }
}

#[test]
fn micro_file() {
    let spec = scenario("micro.toml");
    assert_eq!(spec.run.gas_mode, GasMode::Micro);
    assert_eq!(spec.gas.micro, ScenarioSpec::default().gas.micro);
    run_campaign(&spec).unwrap();
}
