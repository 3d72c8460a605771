//! Trace checker.
//!
//! Works on transaction-id sets and the trace's transaction table only, so
//! its verdicts do not depend on the protocol's own set and conflict code.
//! A verdict is a pure function of the trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canon::Digest;
use crate::ledger::{exceeds_two_thirds, Amount, ProcessId, TxId};
use crate::message::Stage;
use crate::trace::{EventKind, RunTrace, TxRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Consistency,
    Monotonicity,
    Validity,
    Agreement,
    Theorems,
    Availability,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::Consistency,
        Check::Monotonicity,
        Check::Validity,
        Check::Agreement,
        Check::Theorems,
        Check::Availability,
    ];
    pub const SAFETY: [Check; 4] = [
        Check::Consistency,
        Check::Monotonicity,
        Check::Theorems,
        Check::Availability,
    ];
    pub const LIVENESS: [Check; 2] = [Check::Validity, Check::Agreement];

    pub fn name(&self) -> &'static str {
        match self {
            Check::Consistency => "consistency",
            Check::Monotonicity => "monotonicity",
            Check::Validity => "validity",
            Check::Agreement => "agreement",
            Check::Theorems => "theorems",
            Check::Availability => "availability",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: Check,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, c: Check) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == c)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.passed)
    }
}

type Ids = BTreeSet<TxId>;

/// A configuration as seen at some point of the run.
#[derive(Clone, Debug)]
struct Snapshot {
    turn: u64,
    process: ProcessId,
    conf: Digest,
}

/// Indexed view over a trace.
pub struct TraceIndex<'a> {
    trace: &'a RunTrace,
    corrupted_at: BTreeMap<ProcessId, u64>,
    conf_ids: BTreeMap<Digest, Ids>,
    genesis_conf: Digest,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a RunTrace) -> Self {
        let mut corrupted_at = BTreeMap::new();
        for e in &trace.events {
            if let EventKind::Corrupt {
                process,
                accepted: true,
                ..
            } = &e.kind
            {
                corrupted_at.entry(*process).or_insert(e.turn);
            }
        }
        let conf_ids: BTreeMap<Digest, Ids> = trace
            .confs
            .iter()
            .map(|(d, txs)| (*d, txs.iter().copied().collect()))
            .collect();
        let genesis_conf = conf_ids
            .iter()
            .find(|(_, ids)| ids.len() == 1 && ids.contains(&trace.meta.genesis))
            .map(|(d, _)| *d)
            .unwrap_or(Digest::NULL);
        TraceIndex {
            trace,
            corrupted_at,
            conf_ids,
            genesis_conf,
        }
    }

    /// Correct during `turn`. A corruption takes effect at the end of the
    /// turn that records it.
    pub fn correct_at(&self, p: ProcessId, turn: u64) -> bool {
        self.corrupted_at.get(&p).map_or(true, |t| turn < *t)
    }

    pub fn correct_at_end(&self, p: ProcessId) -> bool {
        !self.corrupted_at.contains_key(&p)
    }

    fn ids(&self, d: &Digest) -> &Ids {
        static EMPTY: Ids = BTreeSet::new();
        self.conf_ids.get(d).unwrap_or(&EMPTY)
    }

    fn tx(&self, id: &TxId) -> Option<&TxRecord> {
        self.trace.txs.get(id)
    }

    fn snapshots(&self) -> Vec<Snapshot> {
        let mut out: Vec<Snapshot> = (0..self.trace.meta.processes)
            .map(|p| Snapshot {
                turn: 0,
                process: ProcessId(p),
                conf: self.genesis_conf,
            })
            .collect();
        for e in &self.trace.events {
            if let EventKind::Installed { process, conf } = &e.kind {
                if self.correct_at(*process, e.turn) {
                    out.push(Snapshot {
                        turn: e.turn,
                        process: *process,
                        conf: *conf,
                    });
                }
            }
        }
        out
    }

    fn stake(&self, conf: &Ids, q: ProcessId) -> Amount {
        let mut bal: i128 = 0;
        for id in conf {
            if let Some(t) = self.tx(id) {
                for (r, a) in &t.tau {
                    if *r == q {
                        bal += *a as i128;
                    }
                }
                if t.owner == Some(q) {
                    bal -= t.tau.iter().map(|(_, a)| *a as i128).sum::<i128>();
                }
            }
        }
        bal.max(0) as Amount
    }

    fn final_tp(&self, p: ProcessId) -> Option<&Ids> {
        self.trace
            .finals
            .iter()
            .find(|f| f.process == p)
            .map(|f| self.ids(&f.t_p))
    }
}

/// Two transactions conflict when they share an owner and a dependency.
pub fn records_conflict(a: &TxRecord, b: &TxRecord) -> bool {
    a.id != b.id
        && a.owner.is_some()
        && a.owner == b.owner
        && a.deps.iter().any(|d| b.deps.contains(d))
}

/// Brute-force pairwise scan.
fn find_conflict<'t, I>(idx: &TraceIndex<'_>, ids: I) -> Option<(TxId, TxId)>
where
    I: IntoIterator<Item = &'t TxId>,
{
    let recs: Vec<&TxRecord> = ids.into_iter().filter_map(|id| idx.tx(id)).collect();
    for (i, a) in recs.iter().enumerate() {
        for b in &recs[i + 1..] {
            if records_conflict(a, b) {
                return Some((a.id, b.id));
            }
        }
    }
    None
}

/// Index pairs of a list of id sets that are not related by inclusion.
fn first_incomparable(sets: &[(Digest, &Ids)]) -> Option<(Digest, Digest)> {
    let mut sorted: Vec<&(Digest, &Ids)> = sets.iter().collect();
    sorted.sort_by_key(|(d, s)| (s.len(), *d));
    sorted.dedup_by_key(|(d, _)| *d);
    // a family is a chain iff consecutive members by size are nested
    for w in sorted.windows(2) {
        let (da, a) = w[0];
        let (db, b) = w[1];
        if !a.is_subset(b) {
            return Some((*da, *db));
        }
    }
    None
}

fn pass(check: Check) -> Verdict {
    Verdict {
        check,
        passed: true,
        witness: None,
    }
}

fn fail(check: Check, witness: String) -> Verdict {
    Verdict {
        check,
        passed: false,
        witness: Some(witness),
    }
}

pub fn check_consistency(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Consistency;
    let snaps = idx.snapshots();
    let mut seen: BTreeMap<Digest, &Snapshot> = BTreeMap::new();
    for s in &snaps {
        seen.entry(s.conf).or_insert(s);
    }
    for (d, s) in &seen {
        let ids = idx.ids(d);
        if let Some((a, b)) = find_conflict(idx, ids) {
            return fail(
                c,
                format!("{} at turn {} holds conflicting {a:?} and {b:?}", s.process, s.turn),
            );
        }
        if let Some(bad) = ids.iter().find(|id| !idx.tx(id).is_some_and(|t| t.cert_valid)) {
            return fail(
                c,
                format!("{} at turn {} holds unverifiable {bad:?}", s.process, s.turn),
            );
        }
    }
    let sets: Vec<(Digest, &Ids)> = seen.keys().map(|d| (*d, idx.ids(d))).collect();
    if let Some((a, b)) = first_incomparable(&sets) {
        let (sa, sb) = (seen[&a], seen[&b]);
        return fail(
            c,
            format!(
                "T_{}(turn {}) = {a:?} and T_{}(turn {}) = {b:?} are incomparable",
                sa.process, sa.turn, sb.process, sb.turn
            ),
        );
    }
    pass(c)
}

pub fn check_monotonicity(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Monotonicity;
    let mut last: BTreeMap<ProcessId, &Snapshot> = BTreeMap::new();
    let snaps = idx.snapshots();
    for s in &snaps {
        if let Some(prev) = last.get(&s.process) {
            if !idx.ids(&prev.conf).is_subset(idx.ids(&s.conf)) {
                return fail(
                    c,
                    format!(
                        "T_{} shrank between turn {} ({:?}) and turn {} ({:?})",
                        s.process, prev.turn, prev.conf, s.turn, s.conf
                    ),
                );
            }
        }
        last.insert(s.process, s);
    }
    pass(c)
}

pub fn check_validity(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Validity;
    for e in &idx.trace.events {
        if let EventKind::Transfer { process, tx } = &e.kind {
            if !idx.correct_at_end(*process) {
                continue;
            }
            let confirmed = idx.final_tp(*process).is_some_and(|t| t.contains(tx));
            if !confirmed {
                return fail(
                    c,
                    format!(
                        "transfer {tx:?} by {process} (turn {}) not in its final T_p; horizon {} may be too short",
                        e.turn, idx.trace.meta.horizon
                    ),
                );
            }
        }
    }
    pass(c)
}

pub fn check_agreement(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Agreement;
    let finals: Vec<(ProcessId, &Ids)> = idx
        .trace
        .finals
        .iter()
        .filter(|f| idx.correct_at_end(f.process))
        .map(|f| (f.process, idx.ids(&f.t_p)))
        .collect();
    let mut done: BTreeSet<Digest> = BTreeSet::new();
    for s in idx.snapshots() {
        if !done.insert(s.conf) {
            continue;
        }
        let ids = idx.ids(&s.conf);
        for (q, fin) in &finals {
            if !ids.is_subset(fin) {
                return fail(
                    c,
                    format!(
                        "T_{}(turn {}) = {:?} is not contained in the final T_{q}",
                        s.process, s.turn, s.conf
                    ),
                );
            }
        }
    }
    pass(c)
}

pub fn check_theorems(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Theorems;
    let trace = idx.trace;

    // (a) lattice agreement outputs are comparable, validated sets never conflict
    let mut by_stage: BTreeMap<Stage, Vec<Digest>> = BTreeMap::new();
    for o in &trace.observed {
        by_stage.entry(o.stage).or_default().push(o.digest);
    }
    let configs: Vec<(Digest, &Ids)> = by_stage
        .get(&Stage::ConfigLa)
        .into_iter()
        .flatten()
        .map(|d| (*d, idx.ids(d)))
        .collect();
    if let Some((a, b)) = first_incomparable(&configs) {
        return fail(c, format!("configuration outputs {a:?} and {b:?} are incomparable"));
    }
    let validated: Ids = by_stage
        .get(&Stage::TxVal)
        .into_iter()
        .flatten()
        .flat_map(|d| idx.ids(d).iter().copied())
        .collect();
    if let Some((a, b)) = find_conflict(idx, &validated) {
        return fail(c, format!("validated sets contain conflicting {a:?} and {b:?}"));
    }

    // (b) histories form a chain of chains
    let hists: Vec<Digest> = by_stage.get(&Stage::HistLa).cloned().unwrap_or_default();
    let hist_sets: BTreeMap<Digest, BTreeSet<Digest>> = hists
        .iter()
        .map(|h| (*h, trace.hists.get(h).into_iter().flatten().copied().collect()))
        .collect();
    let mut sorted: Vec<(&Digest, &BTreeSet<Digest>)> = hist_sets.iter().collect();
    sorted.sort_by_key(|(d, s)| (s.len(), **d));
    for w in sorted.windows(2) {
        if !w[0].1.is_subset(w[1].1) {
            return fail(c, format!("history outputs {:?} and {:?} are incomparable", w[0].0, w[1].0));
        }
    }
    let mut pivots: BTreeSet<Digest> = BTreeSet::new();
    for (h, confs) in &hist_sets {
        let members: Vec<(Digest, &Ids)> = confs.iter().map(|d| (*d, idx.ids(d))).collect();
        if let Some((a, b)) = first_incomparable(&members) {
            return fail(c, format!("history {h:?} holds incomparable {a:?} and {b:?}"));
        }
        if let Some((d, _)) = members.iter().max_by_key(|(d, s)| (s.len(), *d)) {
            pivots.insert(*d);
        }
    }

    // (c) installed configurations are conflict-free
    let snaps = idx.snapshots();
    for s in &snaps {
        if let Some((a, b)) = find_conflict(idx, idx.ids(&s.conf)) {
            return fail(c, format!("installed {:?} holds conflicting {a:?} and {b:?}", s.conf));
        }
    }

    // (d) superseded pivotal configurations can no longer be signed for by a quorum
    let key_log = &trace.key_log;
    let total = trace.meta.total;
    for p in &pivots {
        let ids = idx.ids(p);
        let Some(sup) = snaps
            .iter()
            .filter(|s| s.turn > 0)
            .find(|s| {
                let later = idx.ids(&s.conf);
                ids.len() < later.len() && ids.is_subset(later)
            })
        else {
            continue;
        };
        let height = ids.len() as u64;
        let mut st: BTreeMap<ProcessId, u64> = BTreeMap::new();
        for k in key_log.iter().filter(|k| k.clock <= sup.turn) {
            let e = st.entry(k.process).or_insert(0);
            *e = (*e).max(k.timestamp);
        }
        let signers: Vec<ProcessId> = (0..trace.meta.processes)
            .map(ProcessId)
            .filter(|q| st.get(q).copied().unwrap_or(0) <= height)
            .collect();
        let weight: u128 = signers.iter().map(|q| idx.stake(ids, *q) as u128).sum();
        if exceeds_two_thirds(weight, total) {
            return fail(
                c,
                format!(
                    "pivotal {p:?} superseded at turn {} while {signers:?} could still sign at height {height}",
                    sup.turn
                ),
            );
        }
    }

    // (e) only candidate configurations are installed, (f) outputs verify
    let mut candidates: BTreeSet<Digest> = BTreeSet::new();
    candidates.insert(idx.genesis_conf);
    for e in &trace.events {
        match &e.kind {
            EventKind::NewHistory { process, history } if idx.correct_at(*process, e.turn) => {
                candidates.extend(trace.hists.get(history).into_iter().flatten().copied());
            }
            EventKind::Installed { process, conf } if idx.correct_at(*process, e.turn) => {
                if !candidates.contains(conf) {
                    return fail(
                        c,
                        format!("{process} installed non-candidate {conf:?} at turn {}", e.turn),
                    );
                }
            }
            EventKind::Output {
                process,
                stage,
                digest,
                verified: false,
            } if idx.correct_at(*process, e.turn) => {
                return fail(
                    c,
                    format!("{process} produced an unverifiable {stage:?} output {digest:?}"),
                );
            }
            EventKind::Forgery {
                conf,
                accepted: true,
                ..
            } => {
                return fail(c, format!("forged certificate at the height of {conf:?} verified"));
            }
            _ => {}
        }
    }
    pass(c)
}

/// Every accepted corruption left each active candidate configuration with
/// more than two thirds of the stake in correct hands.
pub fn check_availability(idx: &TraceIndex<'_>) -> Verdict {
    let c = Check::Availability;
    let trace = idx.trace;
    let snaps = idx.snapshots();
    let mut since: BTreeMap<Digest, u64> = BTreeMap::new();
    since.insert(idx.genesis_conf, 0);
    for e in &trace.events {
        if let EventKind::NewHistory { process, history } = &e.kind {
            if idx.correct_at(*process, e.turn) {
                for d in trace.hists.get(history).into_iter().flatten() {
                    since.entry(*d).or_insert(e.turn);
                }
            }
        }
    }
    for (d, from) in &since {
        let ids = idx.ids(d);
        let until = snaps
            .iter()
            .find(|s| {
                let later = idx.ids(&s.conf);
                ids.len() < later.len() && ids.is_subset(later)
            })
            .map_or(u64::MAX, |s| s.turn);
        if until <= *from {
            // superseded before it became a candidate
            continue;
        }
        let faulty: u128 = idx
            .corrupted_at
            .iter()
            .filter(|(_, t)| **t < until)
            .map(|(q, _)| idx.stake(ids, *q) as u128)
            .sum();
        let total_stake: u128 = (0..trace.meta.processes)
            .map(|q| idx.stake(ids, ProcessId(q)) as u128)
            .sum();
        let correct = total_stake.saturating_sub(faulty);
        if !exceeds_two_thirds(correct, trace.meta.total) {
            return fail(
                c,
                format!("candidate {d:?} active from turn {from} kept only {correct} correct stake"),
            );
        }
    }
    pass(c)
}

pub fn check_trace(trace: &RunTrace, checks: &[Check]) -> Report {
    let idx = TraceIndex::new(trace);
    let verdicts = checks
        .iter()
        .map(|c| match c {
            Check::Consistency => check_consistency(&idx),
            Check::Monotonicity => check_monotonicity(&idx),
            Check::Validity => check_validity(&idx),
            Check::Agreement => check_agreement(&idx),
            Check::Theorems => check_theorems(&idx),
            Check::Availability => check_availability(&idx),
        })
        .collect();
    Report {
        scenario: trace.meta.scenario.clone(),
        seed: trace.meta.seed,
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: u8, owner: Option<u32>, deps: &[u8]) -> TxRecord {
        TxRecord {
            id: Digest([n; 32]),
            owner: owner.map(ProcessId),
            tau: vec![],
            deps: deps.iter().map(|d| Digest([*d; 32])).collect(),
            cert_valid: true,
        }
    }

    #[test]
    fn conflict_relation() {
        let a = rec(1, Some(0), &[9]);
        let b = rec(2, Some(0), &[9, 8]);
        let c = rec(3, Some(1), &[9]);
        let d = rec(4, Some(0), &[7]);
        assert!(records_conflict(&a, &b));
        assert!(records_conflict(&b, &a));
        assert!(!records_conflict(&a, &a));
        assert!(!records_conflict(&a, &c));
        assert!(!records_conflict(&a, &d));
    }

    #[test]
    fn chain_detection() {
        let s = |v: &[u8]| -> Ids { v.iter().map(|b| Digest([*b; 32])).collect() };
        let (a, b, c) = (s(&[1]), s(&[1, 2]), s(&[1, 3]));
        let da = Digest([10; 32]);
        let db = Digest([11; 32]);
        let dc = Digest([12; 32]);
        assert!(first_incomparable(&[(da, &a), (db, &b)]).is_none());
        assert!(first_incomparable(&[(da, &a), (db, &b), (dc, &c)]).is_some());
    }

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(Check::parse(c.name()), Some(c));
        }
        assert_eq!(Check::parse("nope"), None);
    }
}
