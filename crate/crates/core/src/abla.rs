//! Adjustable Byzantine lattice agreement, one body for both instances.
//!
//! `values` accumulates every verifiable input this process has heard of,
//! as requester or as responder. A round proposes a snapshot of it
//! (`proposal`); responders echo the union of the proposal and their own
//! values, and a quorum echoing the proposal unchanged lets the round move to
//! its second phase. The certificate carries the snapshot, which is what the
//! first-phase acknowledgements signed.

use std::sync::Arc;

use crate::canon::Digest;
use crate::fscrypto::Signature;
use crate::ledger::{Configuration, ProcessId};
use crate::message::{AblaMsg, Env, Message, View};
use crate::verify::{
    abla_confirm_digest, propose_resp_digest, AblaCert, AblaKind, Genesis, SigAcks, ValueSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Inactive,
    Proposing,
    Confirming,
}

pub struct Abla<K: AblaKind> {
    values: ValueSet<K>,
    proposal: ValueSet<K>,
    acks1: SigAcks,
    acks2: SigAcks,
    status: Status,
    seq: u64,
    confirm_digest: Option<Digest>,
    restarts: u64,
    wrap: fn(AblaMsg<K>) -> Message,
    pub skip_acks2: bool,
}

impl<K: AblaKind> Abla<K> {
    pub fn new(genesis: &Genesis, wrap: fn(AblaMsg<K>) -> Message) -> Self {
        let values = ValueSet::initial(genesis);
        Abla {
            proposal: values.clone(),
            values,
            acks1: SigAcks::new(),
            acks2: SigAcks::new(),
            status: Status::Inactive,
            seq: 0,
            confirm_digest: None,
            restarts: 0,
            wrap,
            skip_acks2: false,
        }
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn values(&self) -> &ValueSet<K> {
        &self.values
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Adds already verified values; existing first components keep their
    /// certificate.
    pub fn merge_values(&mut self, vs: &ValueSet<K>) {
        self.values.merge(vs);
    }

    pub fn propose(&mut self, v: K::Value, cert: K::Input, view: &View<'_>, env: &mut Env<'_>) {
        self.refine(&ValueSet::single(v, cert), view, env);
    }

    pub fn refine(&mut self, vs: &ValueSet<K>, view: &View<'_>, env: &mut Env<'_>) {
        if self.status != Status::Inactive {
            self.restarts += 1;
        }
        self.acks1.clear();
        self.acks2.clear();
        self.confirm_digest = None;
        self.values.merge(vs);
        self.proposal = self.values.clone();
        self.seq += 1;
        self.status = Status::Proposing;
        let msg = (self.wrap)(AblaMsg::ProposeReq {
            values: self.proposal.clone(),
            sn: self.seq,
            conf: view.highest.clone(),
        });
        env.multicast(view.highest, msg);
    }

    pub fn abort(&mut self) {
        self.status = Status::Inactive;
        self.acks1.clear();
        self.acks2.clear();
    }

    pub fn poll(&mut self, view: &View<'_>, env: &mut Env<'_>) -> Option<(K::Value, AblaCert<K>)> {
        if self.status == Status::Proposing && env.is_quorum(self.acks1.keys(), view.highest) {
            if self.skip_acks2 {
                return Some(self.finish(view));
            }
            self.status = Status::Confirming;
            let msg = (self.wrap)(AblaMsg::ConfirmReq {
                acks: Arc::new(self.acks1.clone()),
                sn: self.seq,
                conf: view.highest.clone(),
            });
            env.multicast(view.highest, msg);
        }
        if self.status == Status::Confirming && env.is_quorum(self.acks2.keys(), view.highest) {
            return Some(self.finish(view));
        }
        None
    }

    fn finish(&mut self, view: &View<'_>) -> (K::Value, AblaCert<K>) {
        self.status = Status::Inactive;
        let v = self
            .proposal
            .join()
            .expect("a proposal always holds the initial value");
        let cert = AblaCert::new(
            self.proposal.clone(),
            std::mem::take(&mut self.acks1),
            std::mem::take(&mut self.acks2),
            view.history.clone(),
            view.hist_cert.clone(),
        );
        (v, cert)
    }

    /// Dispatches one message of this instance. Requests reach here only
    /// after the caller's wait-guard on their configuration passed.
    pub fn handle(&mut self, from: ProcessId, msg: &AblaMsg<K>, view: &View<'_>, env: &mut Env<'_>) {
        match msg {
            AblaMsg::ProposeReq { values, sn, conf } => {
                self.on_propose_req(from, values, *sn, conf, view, env)
            }
            AblaMsg::ProposeResp { values, sig, sn } => {
                self.on_propose_resp(from, values, sig, *sn, view, env)
            }
            AblaMsg::ConfirmReq { acks, sn, conf } => {
                self.on_confirm_req(from, acks, *sn, conf, view, env)
            }
            AblaMsg::ConfirmResp { sig, sn } => self.on_confirm_resp(from, sig, *sn, view, env),
        }
    }

    fn on_propose_req(
        &mut self,
        from: ProcessId,
        vs: &ValueSet<K>,
        sn: u64,
        conf: &Configuration,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        let fresh = vs.difference(&self.values);
        if !env.verifier().verify_values(&fresh) {
            return;
        }
        self.values.merge(&fresh);
        if conf != view.highest {
            return;
        }
        let mut reply = vs.clone();
        reply.merge(&self.values);
        let m = propose_resp_digest(&reply);
        if let Some(sig) = env.oracle.fs_sign(view.me, &m, conf.height()) {
            let msg = (self.wrap)(AblaMsg::ProposeResp {
                values: reply,
                sig,
                sn,
            });
            env.send(from, msg);
        }
    }

    fn on_propose_resp(
        &mut self,
        from: ProcessId,
        vs: &ValueSet<K>,
        sig: &Signature,
        sn: u64,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if sn != self.seq || self.status != Status::Proposing {
            return;
        }
        let m = propose_resp_digest(vs);
        if !env.oracle.fs_verify(&m, from, Some(sig), view.highest.height()) {
            return;
        }
        if vs.same_firsts(&self.proposal) {
            self.acks1.insert(from, *sig);
            return;
        }
        // Only a strictly new value justifies a restart; a reply missing
        // part of the proposal comes from a faulty responder.
        let extra = vs.difference(&self.proposal);
        if extra.is_empty() {
            return;
        }
        let fresh = extra.difference(&self.values);
        if env.verifier().verify_values(&fresh) {
            self.refine(&extra, view, env);
        }
    }

    fn on_confirm_req(
        &mut self,
        from: ProcessId,
        acks: &SigAcks,
        sn: u64,
        conf: &Configuration,
        view: &View<'_>,
        env: &mut Env<'_>,
    ) {
        if conf != view.highest {
            return;
        }
        let m = abla_confirm_digest::<K>(acks);
        if let Some(sig) = env.oracle.fs_sign(view.me, &m, conf.height()) {
            env.send(from, (self.wrap)(AblaMsg::ConfirmResp { sig, sn }));
        }
    }

    fn on_confirm_resp(
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
        let m = *self
            .confirm_digest
            .get_or_insert_with(|| abla_confirm_digest::<K>(acks1));
        if env.oracle.fs_verify(&m, from, Some(sig), view.highest.height()) {
            self.acks2.insert(from, *sig);
        }
    }
}
