use std::path::PathBuf;
use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use pastro_core::canon::Encoder;
use pastro_core::fscrypto::FsOracle;
use pastro_core::ledger::conflicting_members;
use pastro_core::{check_trace, run, Check, Configuration, ProcessId, Scenario, SimOptions, Transaction};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).unwrap()
}

/// A genesis over `n` processes and one spend per process, two of them conflicting.
fn busy_configuration(n: u32) -> (Configuration, u64) {
    let g = Transaction::genesis((0..n).map(|i| (ProcessId(i), 100)));
    let mut txs: Vec<Arc<Transaction>> = vec![g.clone()];
    for i in 0..n {
        let p = ProcessId(i);
        let q = ProcessId((i + 1) % n);
        txs.push(Transaction::new(p, [(q, 40), (p, 60)], [g.clone()]));
    }
    txs.push(Transaction::new(ProcessId(0), [(ProcessId(2), 100)], [g]));
    (Configuration::new(txs), 100 * n as u64)
}

fn ledger(c: &mut Criterion) {
    let (conf, total) = busy_configuration(64);
    let members: Vec<ProcessId> = (0..48).map(ProcessId).collect();
    c.bench_function("is_quorum/64", |b| {
        b.iter(|| conf.is_quorum(black_box(members.iter()), total))
    });
    c.bench_function("conflicting_members/66", |b| {
        b.iter(|| conflicting_members(conf.transactions().map(|t| t.as_ref())))
    });
}

fn signatures(c: &mut Criterion) {
    let m = Encoder::new("bench").u64(7).finish();
    c.bench_function("fs_sign+verify", |b| {
        b.iter_batched(
            FsOracle::new,
            |mut o| {
                let s = o.fs_sign(ProcessId(1), &m, 3);
                o.fs_verify(&m, ProcessId(1), s.as_ref(), 3)
            },
            BatchSize::SmallInput,
        )
    });
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(10);
    for name in ["smoke", "double-spend", "standard"] {
        let sc = scenario(name);
        g.bench_function(name, |b| b.iter(|| run(&sc, 1, &SimOptions::default())));
    }
    let t = run(&scenario("standard"), 1, &SimOptions::default()).trace;
    g.bench_function("check/standard", |b| b.iter(|| check_trace(&t, &Check::ALL)));
    g.finish();
}

criterion_group!(benches, ledger, signatures, simulation);
criterion_main!(benches);
