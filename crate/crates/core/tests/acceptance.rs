//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! Bounds are fixed here, not tuned per machine: a criterion whose time
//! budget is exceeded fails like any other.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pastro_core::canon::Digest;
use pastro_core::checker::records_conflict;
use pastro_core::message::Stage;
use pastro_core::trace::{EventKind, RunTrace, TxRecord};
use pastro_core::{
    check_trace, fuzz, run, Check, Configuration, Mutation, ProcessId, Scenario, SimOptions,
    Transaction,
};

const SAFETY_RUNS: u64 = 1000;
const SAFETY_BUDGET: Duration = Duration::from_secs(300);
const LIVENESS_RUNS: u64 = 200;
const LIVENESS_BUDGET: Duration = Duration::from_secs(120);
const DOUBLE_SPEND_RUNS: u64 = 100;
const HANDOVER_RUNS: u64 = 100;
const COMPARABILITY_RUNS: u64 = 200;
const MUTATION_SEEDS: u64 = 20;
const DETERMINISM_SAMPLES: usize = 20;
const QUORUM_MAX_MEMBERS: u32 = 6;
const QUORUM_MAX_STAKE: u64 = 3;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn traces(sc: &Scenario, seeds: std::ops::Range<u64>) -> Vec<RunTrace> {
    let opts = SimOptions::default();
    seeds.into_par_iter().map(|s| run(sc, s, &opts).trace).collect()
}

fn safety() -> Outcome {
    let t0 = Instant::now();
    let sum = fuzz(
        &scenario("standard"),
        0..SAFETY_RUNS,
        &[Check::Consistency, Check::Monotonicity, Check::Theorems],
    );
    let took = t0.elapsed();
    outcome(
        sum.passed() && sum.runs == SAFETY_RUNS && took <= SAFETY_BUDGET,
        format!(
            "{} runs, {} failing {:?}, {:.1}s (budget {}s)",
            sum.runs,
            sum.failures.len(),
            sum.by_check,
            took.as_secs_f64(),
            SAFETY_BUDGET.as_secs()
        ),
    )
}

fn liveness() -> Outcome {
    let t0 = Instant::now();
    let seeds = SAFETY_RUNS..SAFETY_RUNS + LIVENESS_RUNS;
    let sum = fuzz(&scenario("standard"), seeds, &[Check::Validity, Check::Agreement]);
    let took = t0.elapsed();
    outcome(
        sum.passed() && took <= LIVENESS_BUDGET,
        format!(
            "{} runs, {} failing, {:.1}s (budget {}s)",
            sum.runs,
            sum.failures.len(),
            took.as_secs_f64(),
            LIVENESS_BUDGET.as_secs()
        ),
    )
}

fn conflicting_pairs(t: &RunTrace) -> Vec<(Digest, Digest)> {
    let all: Vec<&TxRecord> = t.txs.values().collect();
    let mut out = Vec::new();
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            if records_conflict(a, b) {
                out.push((a.id, b.id));
            }
        }
    }
    out
}

fn double_spend() -> Outcome {
    let ts = traces(&scenario("double-spend"), 0..DOUBLE_SPEND_RUNS);
    let mut pairs = 0;
    let mut bad = Vec::new();
    let mut vacuous = 0;
    for t in &ts {
        let ps = conflicting_pairs(t);
        if ps.is_empty() {
            vacuous += 1;
        }
        pairs += ps.len();
        let installed: BTreeSet<Digest> = t
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Installed { conf, .. } => Some(*conf),
                _ => None,
            })
            .collect();
        for d in installed {
            let ids: BTreeSet<&Digest> = t.confs[&d].iter().collect();
            if ps.iter().any(|(a, b)| ids.contains(a) && ids.contains(b)) {
                bad.push(t.meta.seed);
                break;
            }
        }
    }
    outcome(
        bad.is_empty() && vacuous == 0,
        format!(
            "{} runs, {pairs} conflicting pairs issued, {} runs with both halves installed, {vacuous} runs without a pair",
            ts.len(),
            bad.len()
        ),
    )
}

fn forward_security() -> Outcome {
    let ts = traces(&scenario("handover"), 0..HANDOVER_RUNS);
    let mut attempts = 0;
    let mut signed = 0;
    let mut accepted = 0;
    let mut lemma = 0;
    for t in &ts {
        for (e, ok) in t.forgeries() {
            attempts += 1;
            if let EventKind::Forgery { signatures, .. } = &e.kind {
                if *signatures > 0 {
                    signed += 1;
                }
            }
            if ok {
                accepted += 1;
            }
        }
        if !check_trace(t, &[Check::Theorems]).passed() {
            lemma += 1;
        }
    }
    outcome(
        accepted == 0 && lemma == 0 && attempts > 0,
        format!(
            "{} runs, {attempts} stale-signing attempts ({signed} with some signatures issued), {accepted} accepted, {lemma} runs failing theorems",
            ts.len()
        ),
    )
}

fn comparability() -> Outcome {
    let sc = scenario("contention");
    assert!(sc.processes <= 4 && sc.workload.transfers <= 4);
    let ts = traces(&sc, 0..COMPARABILITY_RUNS);
    let mut pairs = 0u64;
    let mut bad = 0u64;
    for t in &ts {
        for stage in [Stage::ConfigLa, Stage::HistLa] {
            let sets: Vec<BTreeSet<Digest>> = t
                .observed
                .iter()
                .filter(|o| o.stage == stage)
                .map(|o| match stage {
                    Stage::HistLa => t.hists[&o.digest].iter().copied().collect(),
                    _ => t.confs[&o.digest].iter().copied().collect(),
                })
                .collect();
            for a in &sets {
                for b in &sets {
                    pairs += 1;
                    if !a.is_subset(b) && !b.is_subset(a) {
                        bad += 1;
                    }
                }
            }
        }
    }
    outcome(
        bad == 0 && pairs > 0,
        format!("{} runs, {pairs} output pairs compared, {bad} incomparable", ts.len()),
    )
}

fn mutations() -> Outcome {
    let cases = [
        (Mutation::DropKeyUpdate, Check::Theorems, "smoke"),
        (Mutation::SkipAcks2, Check::Validity, "smoke"),
        (Mutation::SkipConflictMarking, Check::Consistency, "double-spend"),
        (Mutation::InstallNonCandidate, Check::Agreement, "smoke"),
        (Mutation::MutateTp, Check::Monotonicity, "smoke"),
    ];
    let mut detected = 0;
    let mut lines = Vec::new();
    for (m, check, base) in cases {
        let honest = scenario(base);
        let mut mutated = honest.clone();
        mutated.mutation = m;
        let clean = fuzz(&honest, 0..MUTATION_SEEDS, &[check]);
        let dirty = fuzz(&mutated, 0..MUTATION_SEEDS, &[check]);
        let ok = clean.passed() && !dirty.passed();
        if ok {
            detected += 1;
        }
        lines.push(format!("{m:?}->{check} {}/{}", dirty.failures.len(), dirty.runs));
    }
    outcome(
        detected == cases.len(),
        format!("{detected}/{} detected ({})", cases.len(), lines.join(", ")),
    )
}

fn determinism() -> Outcome {
    let names = ["smoke", "standard", "double-spend", "handover", "contention"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let picks: Vec<(&str, u64)> = (0..DETERMINISM_SAMPLES)
        .map(|_| (names[rng.gen_range(0..names.len())], rng.gen_range(0..1000)))
        .collect();
    let opts = SimOptions {
        record_messages: true,
        horizon: None,
    };
    let mismatches: Vec<String> = picks
        .par_iter()
        .filter_map(|(name, seed)| {
            let sc = scenario(name);
            let a = run(&sc, *seed, &opts).trace;
            let b = run(&sc, *seed, &opts).trace;
            let same = a.to_jsonl() == b.to_jsonl()
                && check_trace(&a, &Check::ALL) == check_trace(&b, &Check::ALL);
            (!same).then(|| format!("{name}/{seed}"))
        })
        .collect();
    outcome(
        mismatches.is_empty(),
        format!("{} replays, mismatches: {:?}", picks.len(), mismatches),
    )
}

fn quorum_oracle() -> Outcome {
    let mut configs = 0u64;
    let mut subsets = 0u64;
    let mut disagreements = 0u64;
    let mut split_quorums = 0u64;
    for n in 1..=QUORUM_MAX_MEMBERS {
        let combos = (QUORUM_MAX_STAKE + 1).pow(n);
        for code in 0..combos {
            let mut c = code;
            let stakes: Vec<u64> = (0..n)
                .map(|_| {
                    let s = c % (QUORUM_MAX_STAKE + 1);
                    c /= QUORUM_MAX_STAKE + 1;
                    s
                })
                .collect();
            let total: u64 = stakes.iter().sum();
            if total == 0 {
                continue;
            }
            configs += 1;
            let g = Transaction::genesis((0..n).map(ProcessId).zip(stakes.iter().copied()));
            let conf = Configuration::new([g]);
            let weight = |m: u32| -> u64 { (0..n).filter(|i| m & (1 << i) != 0).map(|i| stakes[i as usize]).sum() };
            let mut quorums = Vec::new();
            for m in 0..(1u32 << n) {
                subsets += 1;
                let members: Vec<ProcessId> = (0..n).filter(|i| m & (1 << i) != 0).map(ProcessId).collect();
                let oracle = 3 * weight(m) > 2 * total;
                if conf.is_quorum(members.iter(), total) != oracle {
                    disagreements += 1;
                }
                if oracle {
                    quorums.push(m);
                }
            }
            // with less than a third faulty, two quorums share a correct member
            for f in 0..(1u32 << n) {
                if 3 * weight(f) >= total {
                    continue;
                }
                for a in &quorums {
                    for b in &quorums {
                        if weight(a & b & !f) == 0 {
                            split_quorums += 1;
                        }
                    }
                }
            }
        }
    }
    outcome(
        disagreements == 0 && split_quorums == 0,
        format!(
            "{configs} configurations, {subsets} subsets, {disagreements} disagreements, {split_quorums} quorum pairs without a correct common member"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("AC1 safety corpus", safety),
        ("AC2 liveness corpus", liveness),
        ("AC3 double-spend suite", double_spend),
        ("AC4 forward-security suite", forward_security),
        ("AC5 comparability oracle", comparability),
        ("AC6 checker vacuity guard", mutations),
        ("AC7 determinism", determinism),
        ("AC8 quorum micro-oracle", quorum_oracle),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let o = f();
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {name}: {} [{:.1}s]", o.detail, t0.elapsed().as_secs_f64());
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
