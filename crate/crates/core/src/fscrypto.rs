//! Signature layer.
//!
//! Signatures are modeled by an oracle rather than a real scheme. The oracle
//! owns the ledger of everything that was ever signed, so a signature verifies
//! exactly when the claimed signer produced it. Forward-secure signatures add
//! a per-process timestamp `st_p`: signing for a timestamp below `st_p` is
//! refused, for correct and corrupted processes alike.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::canon::{Digest, Encoder};
use crate::ledger::{ProcessId, Transaction};

/// A forward-secure signature. Only the oracle can mint one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    signer: ProcessId,
    timestamp: u64,
    token: u64,
}

impl Signature {
    pub fn signer(&self) -> ProcessId {
        self.signer
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn digest(&self) -> Digest {
        Encoder::new("pastro/fssig")
            .u32(self.signer.0)
            .u64(self.timestamp)
            .u64(self.token)
            .finish()
    }
}

/// A plain (non key-evolving) signature, used for transaction certificates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlainSignature {
    signer: ProcessId,
    token: u64,
}

impl PlainSignature {
    pub fn signer(&self) -> ProcessId {
        self.signer
    }
}

/// Certificate that a transaction was issued by its owner. The initial
/// transaction carries the null certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxCert {
    Null,
    Signed(PlainSignature),
}

impl TxCert {
    pub fn digest(&self) -> Digest {
        match self {
            TxCert::Null => Digest::NULL,
            TxCert::Signed(s) => Encoder::new("pastro/txsig")
                .u32(s.signer.0)
                .u64(s.token)
                .finish(),
        }
    }
}

/// A transaction together with its owner certificate.
#[derive(Clone, Debug)]
pub struct SignedTx {
    pub tx: Arc<Transaction>,
    pub cert: TxCert,
}

impl SignedTx {
    pub fn new(tx: Arc<Transaction>, cert: TxCert) -> Self {
        SignedTx { tx, cert }
    }

    pub fn genesis(tx: Arc<Transaction>) -> Self {
        SignedTx {
            tx,
            cert: TxCert::Null,
        }
    }
}

impl PartialEq for SignedTx {
    fn eq(&self, other: &Self) -> bool {
        self.tx.id() == other.tx.id() && self.cert == other.cert
    }
}

impl Eq for SignedTx {}

/// One refused or issued forward-secure signing request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAttempt {
    pub clock: u64,
    pub signer: ProcessId,
    pub timestamp: u64,
    pub current: u64,
    pub issued: bool,
}

/// A change of `st_p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyUpdate {
    pub clock: u64,
    pub process: ProcessId,
    pub timestamp: u64,
}

/// The signature oracle of a run.
#[derive(Clone, Debug, Default)]
pub struct FsOracle {
    st: BTreeMap<ProcessId, u64>,
    fs_ledger: HashMap<(Digest, ProcessId, u64), u64>,
    plain_ledger: HashMap<(Digest, ProcessId), u64>,
    corrupted: BTreeSet<ProcessId>,
    max_timestamp: Option<u64>,
    next_token: u64,
    clock: u64,
    issued: u64,
    refusals: Vec<SignAttempt>,
    key_log: Vec<KeyUpdate>,
}

impl FsOracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Oracle whose `fs_sign` refuses every timestamp above `max`.
    pub fn with_max_timestamp(max: u64) -> Self {
        FsOracle {
            max_timestamp: Some(max),
            ..Self::default()
        }
    }

    /// Logical time stamped on log records; set by the simulator.
    pub fn set_clock(&mut self, clock: u64) {
        self.clock = clock;
    }

    pub fn st(&self, p: ProcessId) -> u64 {
        self.st.get(&p).copied().unwrap_or(0)
    }

    /// `st_p := max(st_p, t)`.
    pub fn update_fs_key(&mut self, p: ProcessId, t: u64) {
        let cur = self.st.entry(p).or_insert(0);
        if t > *cur {
            *cur = t;
            self.key_log.push(KeyUpdate {
                clock: self.clock,
                process: p,
                timestamp: t,
            });
        }
    }

    /// Signs `m` for timestamp `t` on behalf of `p`, or refuses when
    /// `t < st_p`.
    pub fn fs_sign(&mut self, p: ProcessId, m: &Digest, t: u64) -> Option<Signature> {
        let current = self.st(p);
        let over_max = self.max_timestamp.is_some_and(|max| t > max);
        if t < current || over_max {
            self.refusals.push(SignAttempt {
                clock: self.clock,
                signer: p,
                timestamp: t,
                current,
                issued: false,
            });
            return None;
        }
        let next = &mut self.next_token;
        let token = *self.fs_ledger.entry((*m, p, t)).or_insert_with(|| {
            *next += 1;
            *next
        });
        self.issued += 1;
        Some(Signature {
            signer: p,
            timestamp: t,
            token,
        })
    }

    /// `true` iff `s` was issued to `p` for exactly `(m, t)`.
    pub fn fs_verify(&self, m: &Digest, p: ProcessId, s: Option<&Signature>, t: u64) -> bool {
        let Some(s) = s else { return false };
        s.signer == p
            && s.timestamp == t
            && self.fs_ledger.get(&(*m, p, t)) == Some(&s.token)
    }

    pub fn sign_plain(&mut self, p: ProcessId, m: &Digest) -> PlainSignature {
        let next = &mut self.next_token;
        let token = *self.plain_ledger.entry((*m, p)).or_insert_with(|| {
            *next += 1;
            *next
        });
        PlainSignature { signer: p, token }
    }

    pub fn verify_plain(&self, m: &Digest, p: ProcessId, s: &PlainSignature) -> bool {
        s.signer == p && self.plain_ledger.get(&(*m, p)) == Some(&s.token)
    }

    /// Owner certificate for `tx`. Returns `None` when `p` is not the owner.
    pub fn sign_tx(&mut self, p: ProcessId, tx: &Transaction) -> Option<TxCert> {
        (tx.owner() == Some(p)).then(|| TxCert::Signed(self.sign_plain(p, &tx.id())))
    }

    /// The certificate was issued by the owner for exactly this transaction.
    pub fn verify_sender(&self, tx: &Transaction, cert: &TxCert) -> bool {
        match (tx.owner(), cert) {
            (None, TxCert::Null) => true,
            (Some(owner), TxCert::Signed(s)) => self.verify_plain(&tx.id(), owner, s),
            _ => false,
        }
    }

    pub fn mark_corrupted(&mut self, p: ProcessId) {
        self.corrupted.insert(p);
    }

    pub fn is_corrupted(&self, p: ProcessId) -> bool {
        self.corrupted.contains(&p)
    }

    pub fn issued_count(&self) -> u64 {
        self.issued
    }

    pub fn refusals(&self) -> &[SignAttempt] {
        &self.refusals
    }

    pub fn key_log(&self) -> &[KeyUpdate] {
        &self.key_log
    }

    pub fn timestamps(&self) -> &BTreeMap<ProcessId, u64> {
        &self.st
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: ProcessId = ProcessId(1);
    const Q: ProcessId = ProcessId(2);

    fn msg(n: u64) -> Digest {
        Encoder::new("m").u64(n).finish()
    }

    #[test]
    fn key_update_is_monotone() {
        let mut o = FsOracle::new();
        o.update_fs_key(P, 5);
        assert_eq!(o.st(P), 5);
        o.update_fs_key(P, 3);
        assert_eq!(o.st(P), 5);
        o.update_fs_key(P, 5);
        assert_eq!(o.st(P), 5);
        assert_eq!(o.key_log().len(), 1);
    }

    #[test]
    fn sign_respects_timestamp() {
        let mut o = FsOracle::new();
        o.update_fs_key(P, 2);
        let s = o.fs_sign(P, &msg(1), 3).expect("t >= st");
        assert_eq!(s.timestamp(), 3);
        o.update_fs_key(P, 5);
        assert!(o.fs_sign(P, &msg(1), 3).is_none());
        assert_eq!(o.refusals().len(), 1);
    }

    #[test]
    fn corrupted_process_cannot_sign_in_the_past() {
        let mut o = FsOracle::new();
        o.update_fs_key(P, 7);
        o.mark_corrupted(P);
        assert!(o.fs_sign(P, &msg(9), 6).is_none());
        assert!(o.fs_sign(P, &msg(9), 7).is_some());
    }

    #[test]
    fn verify_checks_message_signer_and_timestamp() {
        let mut o = FsOracle::new();
        let s = o.fs_sign(P, &msg(1), 4).unwrap();
        assert!(o.fs_verify(&msg(1), P, Some(&s), 4));
        assert!(!o.fs_verify(&msg(1), P, Some(&s), 5));
        assert!(!o.fs_verify(&msg(2), P, Some(&s), 4));
        assert!(!o.fs_verify(&msg(1), Q, Some(&s), 4));
        assert!(!o.fs_verify(&msg(1), P, None, 4));
    }

    #[test]
    fn bounded_timestamps() {
        let mut o = FsOracle::with_max_timestamp(10);
        assert!(o.fs_sign(P, &msg(0), 10).is_some());
        assert!(o.fs_sign(P, &msg(0), 11).is_none());
    }

    #[test]
    fn sender_certificates() {
        let mut o = FsOracle::new();
        let g = Transaction::genesis([(P, 6)]);
        let tx = Transaction::new(P, [(Q, 6)], [g.clone()]);
        let cert = o.sign_tx(P, &tx).unwrap();
        assert!(o.verify_sender(&tx, &cert));
        assert!(o.sign_tx(Q, &tx).is_none());
        let forged = TxCert::Signed(o.sign_plain(Q, &tx.id()));
        assert!(!o.verify_sender(&tx, &forged));
        assert!(o.verify_sender(&g, &TxCert::Null));
        assert!(!o.verify_sender(&tx, &TxCert::Null));
    }
}
