use std::collections::BTreeSet;
use std::path::PathBuf;

use pastro_core::checker::records_conflict;
use pastro_core::trace::EventKind;
use pastro_core::{check_trace, run, Check, RunTrace, Scenario, SimOptions};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).unwrap()
}

fn with_messages() -> SimOptions {
    SimOptions {
        record_messages: true,
        horizon: None,
    }
}

#[test]
fn every_shipped_scenario_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn smoke_matches_golden_trace() {
    let golden = include_str!("golden/smoke-seed0.jsonl");
    let out = run(&scenario("smoke"), 0, &with_messages());
    let text = out.trace.to_jsonl();
    if text != golden {
        let first = text
            .lines()
            .zip(golden.lines())
            .position(|(a, b)| a != b)
            .unwrap_or(text.lines().count().min(golden.lines().count()));
        panic!("trace diverges from golden at line {}", first + 1);
    }
    assert!(check_trace(&out.trace, &Check::ALL).passed());
}

#[test]
fn same_seed_same_bytes() {
    let sc = scenario("standard");
    let a = run(&sc, 7, &with_messages()).trace.to_jsonl();
    let b = run(&sc, 7, &with_messages()).trace.to_jsonl();
    assert_eq!(a, b);
    let c = run(&sc, 8, &with_messages()).trace.to_jsonl();
    assert_ne!(a, c);
}

#[test]
fn verdicts_survive_serialization() {
    let sc = scenario("double-spend");
    let out = run(&sc, 3, &SimOptions::default());
    let back = RunTrace::from_jsonl(&out.trace.to_jsonl()).unwrap();
    assert_eq!(back, out.trace);
    assert_eq!(check_trace(&back, &Check::ALL), check_trace(&out.trace, &Check::ALL));
}

#[test]
fn double_spends_never_both_confirm() {
    let sc = scenario("double-spend");
    for seed in 0..10 {
        let t = run(&sc, seed, &SimOptions::default()).trace;
        let mut installed: BTreeSet<_> = BTreeSet::new();
        for e in &t.events {
            if let EventKind::Installed { conf, .. } = &e.kind {
                installed.insert(*conf);
            }
        }
        for d in installed {
            let recs: Vec<_> = t.confs[&d].iter().map(|id| &t.txs[id]).collect();
            for (i, a) in recs.iter().enumerate() {
                for b in &recs[i + 1..] {
                    assert!(!records_conflict(a, b), "seed {seed}: {a:?} and {b:?}");
                }
            }
        }
        // the Byzantine owners did issue conflicting pairs
        let all: Vec<_> = t.txs.values().collect();
        let pairs = all
            .iter()
            .enumerate()
            .flat_map(|(i, a)| all[i + 1..].iter().map(move |b| (a, b)))
            .filter(|(a, b)| records_conflict(a, b))
            .count();
        assert!(pairs >= 1, "seed {seed} issued no conflicting pair");
    }
}

#[test]
fn horizon_override_cuts_the_run() {
    let sc = scenario("standard");
    let opts = SimOptions {
        record_messages: false,
        horizon: Some(200),
    };
    let t = run(&sc, 1, &opts).trace;
    assert_eq!(t.meta.horizon, 200);
    assert!(t.events.iter().all(|e| e.tick <= 200));
}

#[test]
fn oversized_corruption_is_refused_and_recorded() {
    let mut sc = scenario("smoke");
    // with four equal stakes any second corruption would leave half the stake
    sc.adversary.script = toml::from_str::<Scenario>(
        r#"
name = "x"
processes = 4
stake = [3, 3, 3, 3]
horizon = 10
[workload]
transfers = 0
window = 0
[adversary]
script = [{ at = 5, target = 0, behavior = "drop-all" }, { at = 6, target = 1, behavior = "drop-all" }]
"#,
    )
    .unwrap()
    .adversary
    .script;
    let t = run(&sc, 0, &SimOptions::default()).trace;
    let corrupt: Vec<(u32, bool)> = t
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Corrupt {
                process, accepted, ..
            } => Some((process.0, *accepted)),
            _ => None,
        })
        .collect();
    assert_eq!(corrupt, vec![(0, true), (1, false)]);
    assert!(check_trace(&t, &Check::ALL).passed());
}

#[test]
fn stale_signing_after_handover_is_impotent() {
    let sc = scenario("handover");
    for seed in 0..10 {
        let t = run(&sc, seed, &SimOptions::default()).trace;
        assert!(t.forgeries().all(|(_, ok)| !ok), "seed {seed}");
        let report = check_trace(&t, &[Check::Theorems]);
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}
