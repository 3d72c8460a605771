//! Transaction validation: two quorum round trips that certify a set of
//! transactions free of conflicts known to any acknowledging responder.
//!
//! The requester role and the responder role share `seen`. A responder
//! folds every transaction it considers correct into its reply ("helping"),
//! so a requester that hears about new transactions restarts with a bigger
//! set until a quorum echoes exactly what it sent.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::canon::Digest;
use crate::fscrypto::{Signature, SignedTx};
use crate::ledger::{conflicting_members, partition_correct_conflicting, Configuration, ProcessId, TxId};
use crate::message::{Env, Message, View};
use crate::verify::{
    tv_confirm_digest, validate_resp_digest, Genesis, SigAcks, TvAck, TvAcks, TxSet, TxSetCert,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Inactive,
    Requesting,
    Confirming,
}

/// A transaction may be validated against `conf` only when its
/// dependencies are confirmed there.
pub fn admissible(stx: &SignedTx, conf: &Configuration) -> bool {
    stx.tx.dep_ids().all(|d| conf.contains(d))
}

pub struct TxVal {
    seen: TxSet,
    correct: TxSet,
    conflicting: TxSet,
    sent: TxSet,
    acks1: TvAcks,
    acks2: SigAcks,
    status: Status,
    seq: u64,
    conf: Option<Configuration>,
    confirm_digest: Option<Digest>,
    restarts: u64,
    /// Responder never reports conflicts.
    pub skip_conflicts: bool,
    /// Requester returns right after the first phase.
    pub skip_acks2: bool,
}

impl TxVal {
    pub fn new(genesis: &Genesis) -> TxVal {
        let init = TxSet::single(genesis.signed_tx());
        TxVal {
            seen: init.clone(),
            correct: init.clone(),
            conflicting: TxSet::new(),
            sent: init,
            acks1: TvAcks::new(),
            acks2: SigAcks::new(),
            status: Status::Inactive,
            seq: 0,
            conf: None,
            confirm_digest: None,
            restarts: 0,
            skip_conflicts: false,
            skip_acks2: false,
        }
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn seen(&self) -> &TxSet {
        &self.seen
    }

    pub fn correct(&self) -> &TxSet {
        &self.correct
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Adds already verified transactions to `seen`.
    pub fn merge_seen(&mut self, txs: &TxSet) {
        if self.seen.extend(txs) {
            self.recompute();
        }
    }

    fn recompute(&mut self) {
        let part = partition_correct_conflicting(self.seen.transactions(), |_| true);
        self.correct = self.seen.filter(|s| part.correct.contains(&s.tx.id()));
        self.conflicting = self.seen.filter(|s| part.conflicting.contains(&s.tx.id()));
    }

    pub fn validate(&mut self, stx: SignedTx, view: &View<'_>, env: &mut Env<'_>) {
        self.request(&TxSet::single(stx), view, env);
    }

    /// Starts (or restarts) the first phase against the current highest
    /// configuration.
    pub fn request(&mut self, txs: &TxSet, view: &View<'_>, env: &mut Env<'_>) {
        if self.status != Status::Inactive {
            self.restarts += 1;
        }
        self.merge_seen(txs);
        let conf = view.highest.clone();
        // Everything seen goes out, conflicting pairs included, so responders
        // mark them; sending only `correct` can restart forever when the
        // requester knows a conflict a responder does not.
        self.sent = self.seen.filter(|s| admissible(s, &conf));
        self.acks1.clear();
        self.acks2.clear();
        self.confirm_digest = None;
        self.seq += 1;
        self.status = Status::Requesting;
        self.conf = Some(conf.clone());
        env.multicast(
            &conf,
            Message::ValidateReq {
                txs: self.sent.clone(),
                sn: self.seq,
                conf: conf.clone(),
            },
        );
    }

    /// Drops an in-flight request without producing an output.
    pub fn abort(&mut self) {
        self.status = Status::Inactive;
        self.acks1.clear();
        self.acks2.clear();
    }

    /// Advances phases whose quorum condition now holds. Returns the output
    /// once the second phase completes.
    pub fn poll(&mut self, view: &View<'_>, env: &mut Env<'_>) -> Option<(Configuration, TxSetCert)> {
        if self.status == Status::Requesting && env.is_quorum(self.acks1.keys(), view.highest) {
            if self.skip_acks2 {
                return Some(self.finish(view));
            }
            self.status = Status::Confirming;
            env.multicast(
                view.highest,
                Message::TvConfirmReq {
                    acks: Arc::new(self.acks1.clone()),
                    sn: self.seq,
                    conf: view.highest.clone(),
                },
            );
        }
        if self.status == Status::Confirming && env.is_quorum(self.acks2.keys(), view.highest) {
            return Some(self.finish(view));
        }
        None
    }

    fn finish(&mut self, view: &View<'_>) -> (Configuration, TxSetCert) {
        self.status = Status::Inactive;
        let mut marked: BTreeSet<TxId> = BTreeSet::new();
        for ack in self.acks1.values() {
            marked.extend(ack.conflicts.ids().copied());
        }
        let txs = self.sent.filter(|s| !marked.contains(&s.tx.id())).to_configuration();
        let cert = TxSetCert::new(
            self.sent.clone(),
            std::mem::take(&mut self.acks1),
            std::mem::take(&mut self.acks2),
            view.history.clone(),
            view.hist_cert.clone(),
        );
        (txs, cert)
    }

    /// Responder side of the first phase. The caller has already checked the
    /// wait-guard on `conf`.
    pub fn on_validate_req(
        &mut self,
        from: ProcessId,
        txs: &TxSet,
        sn: u64,
        conf: &Configuration,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if !env.verifier().verify_senders(txs.iter()) {
            return;
        }
        self.merge_seen(txs);
        if conf != view.highest || !txs.iter().all(|s| admissible(s, conf)) {
            return;
        }
        let conflicts = if self.skip_conflicts {
            TxSet::new()
        } else {
            self.conflicting.clone()
        };
        let mut reply = txs.clone();
        reply.extend(&self.correct.filter(|s| admissible(s, conf)));
        let m = validate_resp_digest(&reply, &conflicts);
        if let Some(sig) = env.oracle.fs_sign(view.me, &m, conf.height()) {
            env.send(
                from,
                Message::ValidateResp {
                    txs: reply,
                    conflicts,
                    sig,
                    sn,
                },
            );
        }
    }

    pub fn on_validate_resp(
        &mut self,
        from: ProcessId,
        txs: &TxSet,
        conflicts: &TxSet,
        sig: &Signature,
        sn: u64,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if sn != self.seq || self.status != Status::Requesting {
            return;
        }
        let height = view.highest.height();
        let m = validate_resp_digest(txs, conflicts);
        let mut valid = env.oracle.fs_verify(&m, from, Some(sig), height);
        valid = valid && {
            let mut v = env.verifier();
            v.verify_senders(txs.iter()) && v.verify_senders(conflicts.iter())
        };
        valid = valid && conflicting_members(conflicts.transactions()).len() == conflicts.len();
        valid = valid && txs.iter().all(|s| admissible(s, view.highest));
        if !valid {
            return;
        }
        if txs.same_ids(&self.sent) {
            self.acks1.insert(
                from,
                TvAck {
                    sig: *sig,
                    conflicts: conflicts.clone(),
                },
            );
        } else if self.sent.ids_subset(txs) {
            self.request(txs, view, env);
        }
    }

    pub fn on_confirm_req(
        &mut self,
        from: ProcessId,
        acks: &TvAcks,
        sn: u64,
        conf: &Configuration,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if conf != view.highest {
            return;
        }
        let m = tv_confirm_digest(acks);
        if let Some(sig) = env.oracle.fs_sign(view.me, &m, conf.height()) {
            env.send(from, Message::TvConfirmResp { sig, sn });
        }
    }

    pub fn on_confirm_resp(
        &mut self,
        from: ProcessId,
        sig: &Signature,
        sn: u64,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if sn != self.seq || self.status != Status::Confirming {
            return;
        }
        let acks1 = &self.acks1;
        let m = *self.confirm_digest.get_or_insert_with(|| tv_confirm_digest(acks1));
        if env.oracle.fs_verify(&m, from, Some(sig), view.highest.height()) {
            self.acks2.insert(from, *sig);
        }
    }
}
