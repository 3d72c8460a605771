//! The dynamic adversary: gated corruption plus the Byzantine payloads.
//!
//! A corruption is accepted only if every active candidate configuration
//! keeps more than two thirds of `M` in correct hands afterwards. On top of
//! that exact rule the ledger applies a projected test against
//! configurations that do not exist yet (see [`CorruptionLedger::projected_ok`]),
//! because a candidate that appears after the corruption must be available
//! too.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::canon::Digest;
use crate::fscrypto::{FsOracle, SignedTx};
use crate::ledger::{exceeds_two_thirds, Amount, Configuration, History, ProcessId, Transaction};
use crate::scenario::Behavior;
use crate::verify::{
    abla_confirm_digest, propose_resp_digest, ConfigCert, HistLa, HistoryCert, SigAcks, ValueSet,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    AlreadyByzantine,
    /// Corrupting would leave this candidate with too little correct stake.
    Candidate { conf: Digest, correct: u128 },
    /// Stake the corrupted set may still control could exceed one third.
    Projected { bound: u128 },
}

impl Rejection {
    pub fn reason(&self) -> String {
        match self {
            Rejection::AlreadyByzantine => "already byzantine".into(),
            Rejection::Candidate { conf, correct } => {
                format!("candidate {} would keep {correct} correct stake", conf.short())
            }
            Rejection::Projected { bound } => {
                format!("corrupted set could control up to {bound}")
            }
        }
    }
}

/// Corruption status plus the candidate configuration lifecycle.
#[derive(Clone, Debug, Default)]
pub struct CorruptionLedger {
    byzantine: BTreeMap<ProcessId, (u64, Behavior)>,
    active: BTreeMap<Digest, Configuration>,
    /// Highest configuration installed by a correct process.
    max_installed: Option<Configuration>,
    seen: BTreeSet<Digest>,
}

impl CorruptionLedger {
    pub fn new(genesis: &Configuration) -> Self {
        let mut l = CorruptionLedger::default();
        l.active.insert(genesis.digest(), genesis.clone());
        l.seen.insert(genesis.digest());
        l.max_installed = Some(genesis.clone());
        l
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.byzantine.contains_key(&p)
    }

    pub fn behavior(&self, p: ProcessId) -> Option<Behavior> {
        self.byzantine.get(&p).map(|(_, b)| *b)
    }

    pub fn byzantine(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.byzantine.keys().copied()
    }

    pub fn active(&self) -> impl Iterator<Item = &Configuration> {
        self.active.values()
    }

    pub fn max_installed(&self) -> Option<&Configuration> {
        self.max_installed.as_ref()
    }

    fn superseded(&self, c: &Configuration) -> bool {
        self.max_installed
            .as_ref()
            .is_some_and(|m| c.is_strict_subset(m))
    }

    /// A correct process triggered `NewHistory(h)`.
    pub fn on_new_history(&mut self, h: &History) {
        for c in h.configurations() {
            if self.seen.insert(c.digest()) && !self.superseded(c) {
                self.active.insert(c.digest(), c.clone());
            }
        }
    }

    /// A correct process installed `c`. Returns the candidates it supersedes.
    pub fn on_installed(&mut self, c: &Configuration) -> Vec<Configuration> {
        if self.max_installed.as_ref().map_or(true, |m| m.is_strict_subset(c)) {
            self.max_installed = Some(c.clone());
        }
        let gone: Vec<Digest> = self
            .active
            .iter()
            .filter(|(_, a)| a.is_strict_subset(c))
            .map(|(d, _)| *d)
            .collect();
        gone.iter().filter_map(|d| self.active.remove(d)).collect()
    }

    /// The exact availability rule.
    pub fn exact_ok(&self, p: ProcessId, total: Amount) -> Result<(), Rejection> {
        for (d, c) in &self.active {
            let correct = c.weight(
                c.members()
                    .iter()
                    .filter(|q| **q != p && self.is_correct(**q)),
            );
            if !exceeds_two_thirds(correct, total) {
                return Err(Rejection::Candidate { conf: *d, correct });
            }
        }
        Ok(())
    }

    /// Bounds what the corrupted set could hold in any configuration that
    /// contains the highest installed one: everything ever paid to a
    /// process minus what it provably spent there. Sound as long as
    /// corrupted processes are never paid afterwards.
    pub fn projected_ok<'a, I>(&self, p: ProcessId, registry: I, total: Amount) -> Result<(), Rejection>
    where
        I: IntoIterator<Item = &'a Arc<Transaction>>,
    {
        let who: BTreeSet<ProcessId> = self.byzantine.keys().copied().chain([p]).collect();
        let mut received: BTreeMap<ProcessId, u128> = BTreeMap::new();
        for t in registry {
            for (q, a) in t.tau() {
                if who.contains(q) {
                    *received.entry(*q).or_default() += *a as u128;
                }
            }
        }
        let mut bound: u128 = 0;
        for q in &who {
            let spent: u128 = self.max_installed.as_ref().map_or(0, |m| {
                m.transactions()
                    .filter(|t| t.owner() == Some(*q))
                    .map(|t| t.value() as u128)
                    .sum()
            });
            bound += received.get(q).copied().unwrap_or(0).saturating_sub(spent);
        }
        let correct = (total as u128).saturating_sub(bound);
        if exceeds_two_thirds(correct, total) {
            Ok(())
        } else {
            Err(Rejection::Projected { bound })
        }
    }

    pub fn try_corrupt<'a, I>(
        &mut self,
        p: ProcessId,
        tick: u64,
        behavior: Behavior,
        registry: I,
        total: Amount,
    ) -> Result<(), Rejection>
    where
        I: IntoIterator<Item = &'a Arc<Transaction>>,
    {
        if !self.is_correct(p) {
            return Err(Rejection::AlreadyByzantine);
        }
        self.exact_ok(p, total)?;
        self.projected_ok(p, registry, total)?;
        self.byzantine.insert(p, (tick, behavior));
        Ok(())
    }
}

/// Two owner-signed transactions spending the same dependencies.
pub fn double_spend(
    oracle: &mut FsOracle,
    owner: ProcessId,
    deps: &[Arc<Transaction>],
    to: [ProcessId; 2],
) -> Option<[SignedTx; 2]> {
    let value: Amount = deps.iter().map(|d| d.amount_to(owner)).sum();
    if value == 0 || deps.is_empty() {
        return None;
    }
    let mk = |oracle: &mut FsOracle, r: ProcessId| {
        let tx = Transaction::new(owner, [(r, value)], deps.iter().cloned());
        let cert = oracle.sign_tx(owner, &tx).expect("owner signs its own transaction");
        SignedTx::new(tx, cert)
    };
    let a = mk(oracle, to[0]);
    let b = mk(oracle, to[1]);
    (a.tx.id() != b.tx.id()).then_some([a, b])
}

/// A configuration that was never agreed on: `c` plus an unsigned payment.
pub fn fake_extension(c: &Configuration, owner: ProcessId, salt: u64) -> (Configuration, Arc<Transaction>) {
    let base = c
        .transactions()
        .next()
        .cloned()
        .expect("configurations are never empty");
    let tx = Transaction::new(owner, [(owner, 1 + salt)], [base]);
    (c.with(tx.clone()), tx)
}

/// Outcome of a stale-signing attempt against one pivotal configuration.
#[derive(Debug)]
pub struct Forgery {
    pub history: History,
    pub cert: HistoryCert,
    pub height: u64,
    pub signatures: u32,
}

/// Builds a history certificate for `pivot_history ∪ {C ∪ fake}` signed by
/// `coalition` at `height(C)`, where `C` is the pivot's highest
/// configuration. Only signatures the oracle actually issues are used.
pub fn forge_history(
    oracle: &mut FsOracle,
    pivot_history: &History,
    pivot_cert: &HistoryCert,
    coalition: &[ProcessId],
    salt: u64,
) -> Option<Forgery> {
    let c = pivot_history.highest().ok()?.clone();
    let owner = *coalition.first()?;
    let (fake, _) = fake_extension(&c, owner, salt);
    let forged = pivot_history.join(&History::singleton(fake));
    let height = c.height();
    let values: ValueSet<HistLa> = ValueSet::single(forged.clone(), ConfigCert::null());
    let m1 = propose_resp_digest(&values);
    let mut acks1 = SigAcks::new();
    for q in coalition {
        if let Some(s) = oracle.fs_sign(*q, &m1, height) {
            acks1.insert(*q, s);
        }
    }
    let m2 = abla_confirm_digest::<HistLa>(&acks1);
    let mut acks2 = SigAcks::new();
    for q in coalition {
        if let Some(s) = oracle.fs_sign(*q, &m2, height) {
            acks2.insert(*q, s);
        }
    }
    let signatures = acks1.len() as u32;
    let cert = HistoryCert::new(values, acks1, acks2, pivot_history.clone(), pivot_cert.clone());
    Some(Forgery {
        history: forged,
        cert,
        height,
        signatures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{Genesis, Verifier, VerifyCache};

    const A: ProcessId = ProcessId(0);
    const B: ProcessId = ProcessId(1);
    const C: ProcessId = ProcessId(2);

    #[test]
    fn exact_gate_matches_integer_test() {
        // stakes 6 and 3 of M = 9: losing b leaves 6, and 18 > 18 fails
        let g = Transaction::genesis([(A, 6), (B, 3)]);
        let conf = Configuration::new([g.clone()]);
        let mut l = CorruptionLedger::new(&conf);
        let reg = [g];
        assert!(matches!(
            l.try_corrupt(B, 0, Behavior::DropAll, reg.iter(), 9),
            Err(Rejection::Candidate { correct: 6, .. })
        ));
        // 4, 3, 2: losing c leaves 7
        let g = Transaction::genesis([(A, 4), (B, 3), (C, 2)]);
        let conf = Configuration::new([g.clone()]);
        let mut l = CorruptionLedger::new(&conf);
        let reg = [g];
        assert!(l.try_corrupt(C, 0, Behavior::DropAll, reg.iter(), 9).is_ok());
        assert!(!l.is_correct(C));
        assert_eq!(
            l.try_corrupt(C, 1, Behavior::DropAll, reg.iter(), 9),
            Err(Rejection::AlreadyByzantine)
        );
    }

    #[test]
    fn zero_stake_is_always_corruptible() {
        let g = Transaction::genesis([(A, 1)]);
        let conf = Configuration::new([g.clone()]);
        let mut l = CorruptionLedger::new(&conf);
        assert!(l.try_corrupt(C, 0, Behavior::Replay, [g].iter(), 1).is_ok());
    }

    #[test]
    fn superseded_members_become_corruptible() {
        let g = Transaction::genesis([(A, 3), (B, 1)]);
        let c0 = Configuration::new([g.clone()]);
        let mut l = CorruptionLedger::new(&c0);
        let tx = Transaction::new(A, [(B, 3)], [g.clone()]);
        let c1 = c0.with(tx.clone());
        let reg = [g, tx];
        // still active: A holds 3 of 4
        assert!(l.exact_ok(A, 4).is_err());
        l.on_new_history(&History::new([c0.clone(), c1.clone()]));
        let gone = l.on_installed(&c1);
        assert_eq!(gone, vec![c0]);
        assert!(l.try_corrupt(A, 5, Behavior::StaleSign, reg.iter(), 4).is_ok());
    }

    #[test]
    fn projected_gate_counts_unconfirmed_receipts() {
        let g = Transaction::genesis([(A, 4), (B, 4), (C, 1)]);
        let c0 = Configuration::new([g.clone()]);
        let l = CorruptionLedger::new(&c0);
        // c may soon hold 5 of 9 once a pending payment lands
        let pending = Transaction::new(A, [(C, 4)], [g.clone()]);
        let reg = [g.clone(), pending];
        assert!(l.exact_ok(C, 9).is_ok());
        assert!(l.projected_ok(C, [g].iter(), 9).is_ok());
        assert!(matches!(
            l.projected_ok(C, reg.iter(), 9),
            Err(Rejection::Projected { bound: 5 })
        ));
    }

    #[test]
    fn stale_coalition_cannot_forge_after_key_update() {
        let g = Transaction::genesis([(A, 4), (B, 3), (C, 2)]);
        let gen = Genesis::new(g);
        let mut oracle = FsOracle::new();
        // at height 1 nobody has moved on yet: a quorum forges
        let f = forge_history(&mut oracle, &gen.history, &HistoryCert::null(), &[A, B], 0).unwrap();
        let mut cache = VerifyCache::new();
        assert!(Verifier::new(&oracle, &gen, &mut cache).verify_history(&f.history, &f.cert));
        // after the update, signing at height 1 is refused
        oracle.update_fs_key(A, 2);
        oracle.update_fs_key(B, 2);
        let f = forge_history(&mut oracle, &gen.history, &HistoryCert::null(), &[A, B], 1).unwrap();
        assert_eq!(f.signatures, 0);
        let mut cache = VerifyCache::new();
        assert!(!Verifier::new(&oracle, &gen, &mut cache).verify_history(&f.history, &f.cert));
    }

    #[test]
    fn double_spend_pair_conflicts() {
        let g = Transaction::genesis([(A, 4), (B, 3), (C, 2)]);
        let mut oracle = FsOracle::new();
        let [a, b] = double_spend(&mut oracle, A, &[g], [B, C]).unwrap();
        assert!(crate::ledger::conflicts(&a.tx, &b.tx));
        assert!(a.tx.is_valid() && b.tx.is_valid());
    }
}
