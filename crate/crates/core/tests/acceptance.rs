//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Built with `harness = false` so the lines reach the terminal.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use aoa_sim::config::{BlockRange, ScenarioSpec, SystemId};
use aoa_sim::entrypoint::EntryPointError;
use aoa_sim::gasmodel::{Component, GasMode};
use aoa_sim::ledger::{LedgerConfig, TokenLedger};
use aoa_sim::paymasters::{PaymasterError, PaymasterKind};
use aoa_sim::report::summary_csv;
use aoa_sim::scenarios::goms::{self, WorkflowLabel};
use aoa_sim::scenarios::{run_campaign, run_censorship_experiment, run_system, Campaign};
use aoa_sim::stats::{bootstrap_ci, cliffs_delta, summarize, Metric, DEFAULT_RESAMPLES};
use aoa_sim::types::{Address, Hash32, SecretKey, U256};

use common::*;

/// Reference receipts: (txGasUsed, PVG, actualGasUsed).
const TABLE: [(SystemId, (u64, u64, u64)); 4] = [
    (SystemId::T1, (152_008, 119_084, 271_092)),
    (SystemId::T21, (167_830, 118_988, 286_818)),
    (SystemId::B1Alchemy, (205_951, 51_348, 257_299)),
    (SystemId::B2Pimlico, (328_937, 58_192, 387_129)),
];

const IDENTITY_BUDGET: Duration = Duration::from_secs(1);
const CENSORSHIP_BUDGET: Duration = Duration::from_secs(5);
const THREAT_BUDGET: Duration = Duration::from_secs(60);
const THREAT_CASES: u32 = 10_000;
const DELTA_CASES: u32 = 100;
const PCT_TOLERANCE_PP: f64 = 0.01;
const CI_HALF_WIDTH_MAX: f64 = 300.0;
const CAMPAIGN_OPS: usize = 50;
const CONSERVATION_CAMPAIGNS: u32 = 24;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn jittered_campaign() -> Result<Campaign, String> {
    let mut spec = ScenarioSpec::default();
    spec.run.n = CAMPAIGN_OPS;
    spec.run.noise = true;
    run_campaign(&spec).map_err(|e| e.to_string())
}

fn receipt_identity() -> Verdict {
    let start = Instant::now();
    let mut spec = ScenarioSpec::default();
    spec.run.n = CAMPAIGN_OPS;
    let mut checked = 0;
    for (system, want) in TABLE {
        let run = run_system(&spec, system).map_err(|e| e.to_string())?;
        ensure(run.receipts.len() == CAMPAIGN_OPS, || format!("{system}: {} receipts", run.receipts.len()))?;
        for r in &run.receipts {
            let r = &r.receipt;
            let got = (r.tx_gas_used, r.pvg, r.actual_gas_used);
            ensure(got == want, || format!("{system}: {got:?}, expected {want:?}"))?;
            ensure(r.actual_gas_used == r.tx_gas_used + r.pvg, || format!("{system}: identity broken"))?;
            checked += 1;
        }
    }
    let took = start.elapsed();
    ensure(took < IDENTITY_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{checked} receipts exact in {took:.2?}"))
}

fn validation_deltas() -> Verdict {
    let spec = ScenarioSpec { run: aoa_sim::config::RunSpec { n: 1, ..Default::default() }, ..Default::default() };
    let receipt = |s| run_system(&spec, s).map(|r| r.receipts[0].receipt.clone()).map_err(|e| e.to_string());
    let (v4, sup, ver) = (receipt(SystemId::T1)?, receipt(SystemId::T21)?, receipt(SystemId::B1Alchemy)?);
    let pmv = |r: &aoa_sim::entrypoint::GasReceipt| r.component(Component::PaymasterValidation) as i64;
    let d_ver = pmv(&sup) - pmv(&ver);
    let d_v4 = pmv(&sup) - pmv(&v4);
    let d_total = sup.actual_gas_used as i64 - v4.actual_gas_used as i64;
    let pct = 100.0 * d_total as f64 / v4.actual_gas_used as f64;
    ensure(d_ver == 32_625, || format!("Super - Verifying validation = {d_ver}"))?;
    ensure(d_v4 == 13_076, || format!("Super - V4 validation = {d_v4}"))?;
    ensure(d_total == 15_726, || format!("Super - V4 total = {d_total}"))?;
    ensure((pct - 5.80).abs() <= PCT_TOLERANCE_PP, || format!("overhead {pct:.4}%"))?;
    Ok(format!("{d_ver}, {d_v4}, {d_total} gas (+{pct:.2}%)"))
}

fn censorship() -> Verdict {
    let start = Instant::now();
    let mut spec = ScenarioSpec::default();
    spec.run.n = CAMPAIGN_OPS;
    spec.faults.signer_offline = vec![BlockRange(0, u64::MAX)];
    let offline = run_censorship_experiment(&spec).map_err(|e| e.to_string())?;
    let ok = |r: &aoa_sim::scenarios::CensorshipReport, k: PaymasterKind| r.tallies[&k].succeeded as usize;
    ensure(ok(&offline, PaymasterKind::PoaVerifying) == 0, || "POA sponsored with the signer offline".into())?;
    ensure(ok(&offline, PaymasterKind::AoaSuper) == CAMPAIGN_OPS, || "AOA lost operations".into())?;

    let blacklisted = 1;
    spec.faults.signer_offline.clear();
    spec.faults.blacklist = vec![blacklisted];
    let listed = run_censorship_experiment(&spec).map_err(|e| e.to_string())?;
    let poa = &listed.tallies[&PaymasterKind::PoaVerifying];
    // Ops rotate through the users, so the blacklisted one sends n / users of them.
    let expected = (0..CAMPAIGN_OPS).filter(|i| i % spec.users.count == blacklisted).count() as u32;
    ensure(
        poa.failures_by_user.keys().eq([&blacklisted]) && poa.failed == expected,
        || format!("blacklist failures {:?}", poa.failures_by_user),
    )?;
    ensure(ok(&listed, PaymasterKind::AoaSuper) == CAMPAIGN_OPS, || "AOA affected by the blacklist".into())?;

    for report in [&offline, &listed] {
        let audit = &report.storage[&PaymasterKind::AoaSuper];
        ensure(audit.passed() && audit.ops_checked as usize == CAMPAIGN_OPS, || format!("{:?}", audit.violations))?;
        ensure(report.broken_variant_flagged(), || "registry-reading variant passed the check".into())?;
    }
    let took = start.elapsed();
    ensure(took < CENSORSHIP_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("offline 0/{n} vs {n}/{n}, blacklist fails {expected} ops of user {blacklisted}, in {took:.2?}", n = CAMPAIGN_OPS))
}

fn separation() -> Verdict {
    let campaign = jittered_campaign()?;
    let table = summarize(&campaign.samples(), DEFAULT_RESAMPLES, 42).map_err(|e| e.to_string())?;
    let delta = |a: SystemId, b: SystemId| {
        table.delta(a.label(), b.label()).map(|d| d.delta).ok_or_else(|| format!("no delta for {a} vs {b}"))
    };
    let d_ver = delta(SystemId::T21, SystemId::B1Alchemy)?;
    let d_dex = delta(SystemId::T21, SystemId::B2Pimlico)?;
    let d_v4 = delta(SystemId::T1, SystemId::T21)?;
    ensure(d_ver == 1.0 && d_dex == 1.0, || format!("Super vs POA: {d_ver}, {d_dex}"))?;
    ensure(d_v4 == 1.0, || format!("V4 vs Super: {d_v4}"))?;
    let mean = |s: SystemId| table.row(s.label(), Metric::TxGasUsed).map(|r| r.mean).unwrap_or(f64::NAN);
    ensure(mean(SystemId::T1) < mean(SystemId::T21), || "V4 not lower".into())?;

    let sample = || prop::collection::vec((-20i32..20).prop_map(f64::from), 1..10);
    runner(DELTA_CASES)
        .run(&(sample(), sample(), 0.1f64..10.0, -100f64..100.0), |(a, b, scale, shift)| {
            let ab = cliffs_delta(&a, &b).unwrap().delta;
            prop_assert_eq!(ab, -cliffs_delta(&b, &a).unwrap().delta);
            let f = |x: &f64| (x * scale + shift).powi(3);
            let (fa, fb): (Vec<f64>, Vec<f64>) = (a.iter().map(f).collect(), b.iter().map(f).collect());
            prop_assert_eq!(ab, cliffs_delta(&fa, &fb).unwrap().delta);
            Ok(())
        })
        .map_err(|e| format!("delta property: {e}"))?;
    Ok(format!("δ(Super,Verifying) = {d_ver:+.3}, δ(Super,Dex) = {d_dex:+.3}, δ(V4,Super) = {d_v4:+.3}; {DELTA_CASES} property cases"))
}

fn bootstrap() -> Verdict {
    let (lo, hi) = bootstrap_ci(&[167_830.0; 50], DEFAULT_RESAMPLES, 0.95, 7).map_err(|e| e.to_string())?;
    ensure(hi - lo == 0.0, || format!("constant sample width {}", hi - lo))?;

    let campaign = jittered_campaign()?;
    let first = summarize(&campaign.samples(), DEFAULT_RESAMPLES, 42).map_err(|e| e.to_string())?;
    let again = summarize(&jittered_campaign()?.samples(), DEFAULT_RESAMPLES, 42).map_err(|e| e.to_string())?;
    let csv = |t| summary_csv(t).map_err(|e| e.to_string());
    ensure(csv(&first)? == csv(&again)?, || "seeded summaries differ".into())?;

    let row = first.row(SystemId::T21.label(), Metric::TxGasUsed).ok_or("no Super row")?;
    let half = (row.ci95.1 - row.ci95.0) / 2.0;
    ensure(half <= CI_HALF_WIDTH_MAX, || format!("Super half-width {half:.1}"))?;
    Ok(format!("zero width on constants, reproducible, Super ±{half:.0} gas (σ {:.0})", row.sigma))
}

fn replay_case(kind: PaymasterKind, steps: &[(u8, usize)]) -> Result<(), TestCaseError> {
    let mut w = world(kind);
    let mut accepted: Vec<aoa_sim::entrypoint::UserOperation> = Vec::new();
    let mut seen = BTreeSet::new();
    for &(what, idx) in steps {
        let op = match what {
            0 => w.op(kind, idx % 5).unwrap(),
            _ if accepted.is_empty() => continue,
            _ => accepted[idx % accepted.len()].clone(),
        };
        let fresh = seen.insert((op.sender, op.nonce));
        match w.submit(&op) {
            Ok(_) => {
                prop_assert!(fresh, "nonce {} of {} accepted twice", op.nonce, op.sender);
                accepted.push(op);
            }
            Err(EntryPointError::NonceReplay { .. }) => prop_assert!(!fresh),
            Err(e) => prop_assert!(false, "unexpected rejection {e}"),
        }
    }
    Ok(())
}

fn drain_case(kind: PaymasterKind, ops: &[(usize, u128)]) -> Result<(), TestCaseError> {
    let mut w = world(kind);
    let hard_cap = w.spec.chain.protocol_hard_cap;
    let limit = w.chain.ledger.max_single_tx_limit();
    let pm = w.paymaster_addr(kind);
    for &(user, max_cost) in ops {
        let max_cost = U256::from(max_cost);
        let before = (w.chain.deposit_of(pm), w.xpnts_burned());
        let op = w.op_with_max_cost(kind, user, max_cost).unwrap();
        let result = w.submit(&op);
        let charged = before.0 - w.chain.deposit_of(pm);
        let burned = w.xpnts_burned() - before.1;
        let bound = max_cost.min(hard_cap);
        match result {
            Ok(h) => {
                prop_assert!(charged <= bound, "charged {charged} over {bound}");
                prop_assert!(h.validation.capped_cost <= bound);
                prop_assert!(burned <= limit && h.settlement.xpnts_burned == burned);
            }
            Err(_) => prop_assert!(charged.is_zero() && burned.is_zero()),
        }
    }
    Ok(())
}

fn threats() -> Verdict {
    let start = Instant::now();
    let kinds = prop::sample::select(PaymasterKind::ALL.to_vec());

    // Exactly once per nonce.
    let steps = prop::collection::vec((0u8..3, 0usize..64), 1..6);
    runner(THREAT_CASES)
        .run(&(kinds.clone(), steps), |(kind, steps)| replay_case(kind, &steps))
        .map_err(|e| format!("replay: {e}"))?;

    // Drain bounding, with maxCost from far below the real cost to 100x the cap.
    let cap = ScenarioSpec::default().chain.protocol_hard_cap.as_u128();
    let max_cost = prop_oneof![0u128..1_000_000_000_000, 0u128..=100 * cap];
    let ops = prop::collection::vec((0usize..5, max_cost), 1..4);
    let aoa = prop::sample::select(vec![PaymasterKind::AoaSuper, PaymasterKind::AoaV4]);
    runner(THREAT_CASES)
        .run(&(aoa.clone(), ops), |(kind, ops)| drain_case(kind, &ops))
        .map_err(|e| format!("drain: {e}"))?;

    // Direct postOp: only the EntryPoint, only for the hash it is executing.
    let mut settled = Vec::new();
    for kind in [PaymasterKind::AoaSuper, PaymasterKind::AoaV4] {
        let mut w = world(kind);
        let h = w.op(kind, 0).and_then(|op| w.submit(&op)).map_err(|e| e.to_string())?;
        settled.push((kind, w, h.validation.context));
    }
    let callers = prop_oneof![Just(None), (0u32..1_000).prop_map(Some)];
    let executing = prop_oneof![Just(0u8), Just(1), Just(2)];
    runner(THREAT_CASES)
        .run(&(0usize..2, callers, executing, 0u64..u64::MAX), |(which, caller, executing, cost)| {
            let (_, base, ctx) = &settled[which];
            let mut w = base.clone();
            let ep = w.chain.entry_point();
            let caller = caller.map_or(ep, |i| Address::from_label(&format!("caller:{i}")));
            let executing = match executing {
                0 => None,
                1 => Some(ctx.user_op_hash),
                _ => Some(Hash32::digest(&cost.to_be_bytes())),
            };
            let pm = w.paymaster_addr(ctx.kind);
            let burned = w.xpnts_burned();
            let fees: Vec<U256> = w.chain.ledger.tokens().map(|(t, _)| w.chain.ledger.balance_of(t, ctx.sender)).collect();
            let r = w.chain.call_post_op(caller, pm, executing, ctx, U256::from(cost));
            if caller != ep || executing != Some(ctx.user_op_hash) {
                prop_assert!(
                    matches!(r, Err(PaymasterError::NotEntryPoint(_)) | Err(PaymasterError::HashMismatch)),
                    "{r:?}"
                );
                prop_assert_eq!(w.xpnts_burned(), burned);
                let after: Vec<U256> = w.chain.ledger.tokens().map(|(t, _)| w.chain.ledger.balance_of(t, ctx.sender)).collect();
                prop_assert_eq!(after, fees);
            }
            Ok(())
        })
        .map_err(|e| format!("direct postOp: {e}"))?;

    // Firewall: randomized sequences against the reference model, plus an
    // explicit scan for third-party pulls.
    let seqs = prop::collection::vec(ledger_op(), 1..24);
    runner(THREAT_CASES)
        .run(&seqs, |ops| {
            compare_with_model(&ops, true).map_err(TestCaseError::fail)?;
            let (mut ledger, token) = firewalled_ledger(true);
            for op in ops {
                let ok = apply_ledger(&mut ledger, token, op).is_ok();
                if let LedgerOp::TransferFrom { caller, to, amount, .. } = op {
                    if ok && AUTO.contains(&caller) && amount > 0 {
                        prop_assert!(to == caller || to == SUPER, "{} pulled to {}", ACTORS[caller], ACTORS[to]);
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| format!("firewall: {e}"))?;

    // Sybil: cost is linear in the number of identities.
    let minters = prop::collection::vec((0usize..64, 0u128..3 * E18, any::<bool>()), 1..40);
    runner(THREAT_CASES)
        .run(&minters, |attempts| {
            let mut ledger = TokenLedger::new(LedgerConfig::default());
            let g = ledger.gtoken();
            let floor = ledger.mint_burn_floor();
            let who = |i: usize| Address::from_label(&format!("sybil:{i}"));
            for &(i, balance, _) in &attempts {
                ledger.mint(g, who(i), U256::from(balance)).unwrap();
            }
            let supply = ledger.total_supply(g);
            let mut cards = BTreeSet::new();
            for &(i, _, below_floor) in &attempts {
                let burn = if below_floor { floor - U256::one() } else { floor };
                let can = !below_floor && !cards.contains(&i) && ledger.balance_of(g, who(i)) >= floor;
                let r = ledger.mint_sbt(who(i), burn, 0);
                prop_assert_eq!(r.is_ok(), can, "{:?}", r.map(|_| ()));
                if can {
                    cards.insert(i);
                }
            }
            let n = U256::from(cards.len());
            prop_assert_eq!(supply - ledger.total_supply(g), n * floor);
            prop_assert_eq!(ledger.total_burned(g), n * floor);
            Ok(())
        })
        .map_err(|e| format!("sybil: {e}"))?;

    let took = start.elapsed();
    ensure(took < THREAT_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("5 properties x {THREAT_CASES} cases in {took:.1?}"))
}

fn goms_constants() -> Verdict {
    use WorkflowLabel::*;
    let labels = [EoaRecovery, PoaSteadyState, AoaSteadyState, AoaInit, AoaTopUp];
    let totals: Vec<u32> = labels.iter().map(|&l| goms::goms_count(goms::model(l).operators()).total).collect();
    ensure(totals == [9, 4, 2, 4, 2], || format!("totals {totals:?}"))?;
    let table = goms::render_table();
    for line in ["reduction AoaSteadyState vs PoaSteadyState: 50%", "reduction AoaSteadyState vs EoaRecovery: 78%"] {
        ensure(table.contains(line), || format!("missing {line:?}"))?;
    }
    Ok(format!("totals {totals:?}, 50% and 78%"))
}

fn conservation() -> Verdict {
    let cases = (any::<u64>(), 1usize..25, any::<bool>(), prop_oneof![Just(GasMode::Calibrated), Just(GasMode::Micro)]);
    runner(CONSERVATION_CAMPAIGNS)
        .run(&cases, |(seed, n, noise, mode)| {
            let mut spec = ScenarioSpec::default();
            spec.run.seed = seed;
            spec.run.n = n;
            spec.run.noise = noise;
            spec.run.gas_mode = mode;
            let campaign = run_campaign(&spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for run in &campaign.runs {
                prop_assert!(run.conservation_violations.is_empty(), "{}: {:?}", run.system, run.conservation_violations);
                let receipts = run.receipts.iter().fold(U256::zero(), |acc, r| acc + r.receipt.settlement_burn);
                prop_assert_eq!(run.xpnts_burned, receipts, "{}", run.system);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{CONSERVATION_CAMPAIGNS} randomized campaigns, balances sum to supply and burns match receipts"))
}

fn main() {
    // Warm the shared worlds so their construction is not billed to a budget.
    let _ = world(PaymasterKind::AoaSuper);
    let _ = SecretKey::from_label("warm");

    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("receipt identity", receipt_identity),
        ("validation deltas", validation_deltas),
        ("censorship experiment", censorship),
        ("Cliff's delta separation", separation),
        ("bootstrap CI", bootstrap),
        ("threat suite", threats),
        ("GOMS constants", goms_constants),
        ("conservation", conservation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
