//! One Pastro process: the transfer pipeline, history adoption and the
//! state transfer protocol.
//!
//! Handlers never block. A request whose wait-guard does not hold yet is
//! parked and re-examined whenever `T_p` or the history changes; quorum
//! conditions are polled in [`Node::settle`] after every turn.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::abla::{self, Abla};
use crate::canon::Digest;
use crate::fscrypto::SignedTx;
use crate::ledger::{Configuration, History, ProcessId, TxId};
use crate::message::{Env, Message, NodeEvent, Output, Stage, View};
use crate::txval::TxVal;
use crate::verify::{
    ConfigCert, ConfigLa, Genesis, HistLa, HistoryCert, TxSet, TxSetCert, ValueSet,
};

/// Deliberate protocol defects, used to show that each check can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// No process ever advances its signing key.
    DropKeyUpdate,
    /// Certificates are issued after the first phase.
    SkipAcks2,
    /// Responders never report conflicting transactions.
    SkipConflictMarking,
    /// Process 0 confirms its own transfers locally without running the pipeline.
    InstallNonCandidate,
    /// Process 0 forgets a confirmed transaction whenever it installs.
    MutateTp,
}

struct TransferState {
    tx: SignedTx,
    txs: Option<(Configuration, TxSetCert)>,
    conf: Option<(Configuration, ConfigCert)>,
}

struct Driver {
    next: Configuration,
    stages: Vec<Configuration>,
    idx: usize,
    sn: u64,
    responded: BTreeSet<ProcessId>,
}

pub struct Node {
    id: ProcessId,
    t_p: Configuration,
    c_cur: Configuration,
    history: History,
    hist_cert: HistoryCert,
    tv: TxVal,
    config_la: Abla<ConfigLa>,
    hist_la: Abla<HistLa>,
    transfer: Option<TransferState>,
    driver: Option<Driver>,
    st_seq: u64,
    completes: BTreeMap<Digest, (Configuration, BTreeSet<ProcessId>)>,
    parked: Vec<(ProcessId, Arc<Message>)>,
    version: u64,
    parked_version: u64,
    mutation: Mutation,
    /// Own transactions, used by the workload to avoid double spending.
    spent: BTreeSet<TxId>,
}

impl Node {
    pub fn new(id: ProcessId, genesis: &Genesis, mutation: Mutation) -> Node {
        let mut tv = TxVal::new(genesis);
        let mut config_la = Abla::new(genesis, Message::ConfigLa);
        let mut hist_la = Abla::new(genesis, Message::HistLa);
        if mutation == Mutation::SkipConflictMarking {
            tv.skip_conflicts = true;
        }
        if mutation == Mutation::SkipAcks2 {
            tv.skip_acks2 = true;
            config_la.skip_acks2 = true;
            hist_la.skip_acks2 = true;
        }
        Node {
            id,
            t_p: genesis.conf.clone(),
            c_cur: genesis.conf.clone(),
            history: genesis.history.clone(),
            hist_cert: HistoryCert::null(),
            tv,
            config_la,
            hist_la,
            transfer: None,
            driver: None,
            st_seq: 0,
            completes: BTreeMap::new(),
            parked: Vec::new(),
            version: 0,
            parked_version: 0,
            mutation,
            spent: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn t_p(&self) -> &Configuration {
        &self.t_p
    }

    pub fn c_cur(&self) -> &Configuration {
        &self.c_cur
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn hist_cert(&self) -> &HistoryCert {
        &self.hist_cert
    }

    pub fn highest(&self) -> &Configuration {
        self.history
            .highest()
            .expect("an adopted history is always a verified chain")
    }

    pub fn seen(&self) -> &TxSet {
        self.tv.seen()
    }

    pub fn is_busy(&self) -> bool {
        self.transfer.is_some()
    }

    pub fn pending_tx(&self) -> Option<TxId> {
        self.transfer.as_ref().map(|t| t.tx.tx.id())
    }

    pub fn restarts(&self) -> u64 {
        self.tv.restarts() + self.config_la.restarts() + self.hist_la.restarts()
    }

    pub fn parked_len(&self) -> usize {
        self.parked.len()
    }

    /// Dependencies this process has not consumed in any transaction it issued.
    pub fn unspent(&self) -> Vec<Arc<crate::ledger::Transaction>> {
        self.t_p
            .transactions()
            .filter(|t| t.amount_to(self.id) > 0 && !self.spent.contains(&t.id()))
            .cloned()
            .collect()
    }

    /// `Transfer(tx, σ)`. The caller guarantees that `tx` is owned by this
    /// process and does not conflict with its earlier transactions.
    pub fn transfer(&mut self, stx: SignedTx, env: &mut Env<'_>) {
        assert_eq!(stx.tx.owner(), Some(self.id), "transfer of a foreign transaction");
        assert!(self.transfer.is_none(), "one transfer at a time");
        self.spent.extend(stx.tx.dep_ids().copied());
        let id = stx.tx.id();
        env.event(NodeEvent::Transfer { tx: id });
        if self.mutation == Mutation::InstallNonCandidate && self.id == ProcessId(0) {
            self.t_p = self.t_p.with(stx.tx.clone());
            self.version += 1;
            env.event(NodeEvent::Installed {
                conf: self.t_p.clone(),
            });
            env.event(NodeEvent::TransferComplete {
                tx: id,
                short_circuit: false,
            });
            return;
        }
        self.transfer = Some(TransferState {
            tx: stx.clone(),
            txs: None,
            conf: None,
        });
        let highest = self.highest().clone();
        let view = View {
            me: self.id,
            t_p: &self.t_p,
            history: &self.history,
            hist_cert: &self.hist_cert,
            highest: &highest,
        };
        self.tv.validate(stx, &view, env);
        self.settle(env);
    }

    /// Point-to-point delivery.
    pub fn on_message(&mut self, from: ProcessId, msg: Arc<Message>, env: &mut Env<'_>) {
        if self.guard(&msg) {
            self.dispatch(from, &msg, env);
        } else {
            self.parked.push((from, msg));
        }
        self.settle(env);
    }

    /// Weak reliable broadcast delivery.
    pub fn on_wrb(&mut self, _from: ProcessId, msg: &Message, env: &mut Env<'_>) {
        if let Message::NewHistory { history, cert } = msg {
            self.on_new_history(history, cert, env);
            self.settle(env);
        }
    }

    /// Weak uniform reliable broadcast delivery.
    pub fn on_wurb(&mut self, from: ProcessId, msg: &Message, env: &mut Env<'_>) {
        if let Message::UpdateComplete { conf } = msg {
            self.completes
                .entry(conf.digest())
                .or_insert_with(|| (conf.clone(), BTreeSet::new()))
                .1
                .insert(from);
            self.settle(env);
        }
    }

    /// Wait-guards of requests.
    fn guard(&self, msg: &Message) -> bool {
        let serving = |conf: &Configuration| *conf == self.t_p || !self.highest().is_subset(conf);
        match msg {
            Message::ValidateReq { conf, .. } | Message::TvConfirmReq { conf, .. } => serving(conf),
            Message::ConfigLa(m) => m.target().map_or(true, serving),
            Message::HistLa(m) => m.target().map_or(true, serving),
            Message::UpdateRead { conf, .. } => conf.is_strict_subset(self.highest()),
            _ => true,
        }
    }

    fn dispatch(&mut self, from: ProcessId, msg: &Message, env: &mut Env<'_>) {
        let highest = self.highest().clone();
        let view = View {
            me: self.id,
            t_p: &self.t_p,
            history: &self.history,
            hist_cert: &self.hist_cert,
            highest: &highest,
        };
        match msg {
            Message::ValidateReq { txs, sn, conf } => {
                self.tv.on_validate_req(from, txs, *sn, conf, &view, env)
            }
            Message::ValidateResp {
                txs,
                conflicts,
                sig,
                sn,
            } => self
                .tv
                .on_validate_resp(from, txs, conflicts, sig, *sn, &view, env),
            Message::TvConfirmReq { acks, sn, conf } => {
                self.tv.on_confirm_req(from, acks, *sn, conf, &view, env)
            }
            Message::TvConfirmResp { sig, sn } => {
                self.tv.on_confirm_resp(from, sig, *sn, &view, env)
            }
            Message::ConfigLa(m) => self.config_la.handle(from, m, &view, env),
            Message::HistLa(m) => self.hist_la.handle(from, m, &view, env),
            Message::UpdateRead { sn, .. } => {
                env.send(
                    from,
                    Message::UpdateReadResp {
                        txs: self.tv.seen().clone(),
                        values1: self.config_la.values().clone(),
                        values2: self.hist_la.values().clone(),
                        sn: *sn,
                    },
                );
            }
            Message::UpdateReadResp {
                txs,
                values1,
                values2,
                sn,
            } => self.on_update_read_resp(from, txs, values1, values2, *sn, env),
            // broadcast payloads arriving point-to-point are ignored
            Message::NewHistory { .. } | Message::UpdateComplete { .. } => {}
        }
    }

    fn on_update_read_resp(
        &mut self,
        from: ProcessId,
        txs: &TxSet,
        values1: &ValueSet<ConfigLa>,
        values2: &ValueSet<HistLa>,
        sn: u64,
        env: &mut Env<'_>,
    ) {
        let ok = {
            let mut v = env.verifier();
            v.verify_senders(txs.iter()) && v.verify_values(values1) && v.verify_values(values2)
        };
        if !ok {
            return;
        }
        self.tv.merge_seen(txs);
        self.config_la.merge_values(values1);
        self.hist_la.merge_values(values2);
        if let Some(d) = &mut self.driver {
            if d.sn == sn {
                d.responded.insert(from);
            }
        }
    }

    fn on_new_history(&mut self, h: &History, cert: &HistoryCert, env: &mut Env<'_>) {
        if !self.history.is_strict_subset(h) || !env.verifier().verify_history(h, cert) {
            return;
        }
        env.event(NodeEvent::NewHistory { history: h.clone() });
        self.history = h.clone();
        self.hist_cert = cert.clone();
        self.version += 1;
        let c_h = self.highest().clone();
        if self.mutation != Mutation::DropKeyUpdate {
            env.oracle.update_fs_key(self.id, c_h.height());
        }
        let Some(t) = &self.transfer else { return };
        let view = View {
            me: self.id,
            t_p: &self.t_p,
            history: &self.history,
            hist_cert: &self.hist_cert,
            highest: &c_h,
        };
        if c_h.contains(&t.tx.tx.id()) {
            let tx = t.tx.tx.id();
            self.tv.abort();
            self.config_la.abort();
            self.hist_la.abort();
            self.transfer = None;
            env.event(NodeEvent::TransferComplete {
                tx,
                short_circuit: true,
            });
        } else if t.txs.is_none() {
            env.event(NodeEvent::Restart { stage: Stage::TxVal });
            self.tv.request(&TxSet::new(), &view, env);
        } else if t.conf.is_none() {
            env.event(NodeEvent::Restart {
                stage: Stage::ConfigLa,
            });
            self.config_la.refine(&ValueSet::new(), &view, env);
        } else {
            env.event(NodeEvent::Restart {
                stage: Stage::HistLa,
            });
            self.hist_la.refine(&ValueSet::new(), &view, env);
        }
    }

    /// Runs every enabled continuation until none is.
    fn settle(&mut self, env: &mut Env<'_>) {
        loop {
            let mut progress = false;
            if self.parked_version != self.version && !self.parked.is_empty() {
                self.parked_version = self.version;
                let parked = std::mem::take(&mut self.parked);
                for (from, msg) in parked {
                    if self.guard(&msg) {
                        self.dispatch(from, &msg, env);
                        progress = true;
                    } else {
                        self.parked.push((from, msg));
                    }
                }
            }
            progress |= self.advance_pipeline(env);
            progress |= self.drive_state_transfer(env);
            progress |= self.try_install(env);
            if !progress {
                break;
            }
        }
    }

    fn advance_pipeline(&mut self, env: &mut Env<'_>) -> bool {
        let Some(t) = &mut self.transfer else {
            return false;
        };
        let highest = self
            .history
            .highest()
            .expect("adopted history is a chain")
            .clone();
        let view = View {
            me: self.id,
            t_p: &self.t_p,
            history: &self.history,
            hist_cert: &self.hist_cert,
            highest: &highest,
        };
        if t.txs.is_none() {
            let Some((txs, cert)) = self.tv.poll(&view, env) else {
                return false;
            };
            let verified = env.verifier().verify_transaction_set(&txs, &cert);
            env.event(NodeEvent::Output {
                stage: Stage::TxVal,
                digest: txs.digest(),
                verified,
            });
            t.txs = Some((txs.clone(), cert.clone()));
            self.config_la.propose(txs, cert, &view, env);
            return true;
        }
        if t.conf.is_none() {
            if self.config_la.status() == abla::Status::Inactive {
                return false;
            }
            let Some((c, cert)) = self.config_la.poll(&view, env) else {
                return false;
            };
            let verified = env.verifier().verify_configuration(&c, &cert);
            env.event(NodeEvent::Output {
                stage: Stage::ConfigLa,
                digest: c.digest(),
                verified,
            });
            t.conf = Some((c.clone(), cert.clone()));
            self.hist_la.propose(History::singleton(c), cert, &view, env);
            return true;
        }
        if self.hist_la.status() == abla::Status::Inactive {
            return false;
        }
        let Some((h, cert)) = self.hist_la.poll(&view, env) else {
            return false;
        };
        let verified = env.verifier().verify_history(&h, &cert);
        env.event(NodeEvent::Output {
            stage: Stage::HistLa,
            digest: h.digest(),
            verified,
        });
        let tx = t.tx.tx.id();
        self.transfer = None;
        env.event(NodeEvent::TransferComplete {
            tx,
            short_circuit: false,
        });
        env.out.push(Output::Wrb {
            msg: Arc::new(Message::NewHistory { history: h, cert }),
        });
        true
    }

    fn drive_state_transfer(&mut self, env: &mut Env<'_>) -> bool {
        let mut progress = false;
        loop {
            let Some(d) = &mut self.driver else {
                let next = self.highest().clone();
                if self.c_cur == next {
                    return progress;
                }
                let stages: Vec<Configuration> = self
                    .history
                    .configurations()
                    .filter(|c| self.c_cur.is_subset(c) && c.is_strict_subset(&next))
                    .cloned()
                    .collect();
                self.driver = Some(Driver {
                    next,
                    stages,
                    idx: 0,
                    sn: 0,
                    responded: BTreeSet::new(),
                });
                self.send_update_read(env);
                progress = true;
                continue;
            };
            if let Some(c) = d.stages.get(d.idx) {
                // skipped once a later installation overtook it
                if c.is_strict_subset(&self.c_cur) || env.is_quorum(d.responded.iter(), c) {
                    d.idx += 1;
                    self.send_update_read(env);
                    progress = true;
                    continue;
                }
                return progress;
            }
            let next = d.next.clone();
            self.driver = None;
            if self.c_cur.is_strict_subset(&next) {
                self.c_cur = next.clone();
                env.out.push(Output::Wurb {
                    msg: Arc::new(Message::UpdateComplete { conf: next.clone() }),
                    tag: next,
                });
            }
            progress = true;
        }
    }

    fn send_update_read(&mut self, env: &mut Env<'_>) {
        let Some(d) = &mut self.driver else { return };
        let Some(c) = d.stages.get(d.idx) else { return };
        self.st_seq += 1;
        d.sn = self.st_seq;
        d.responded.clear();
        env.multicast(
            c,
            Message::UpdateRead {
                sn: d.sn,
                conf: c.clone(),
            },
        );
    }

    fn try_install(&mut self, env: &mut Env<'_>) -> bool {
        let mut ready: Vec<Configuration> = Vec::new();
        let mut stale: Vec<Digest> = Vec::new();
        for (d, (c, senders)) in &self.completes {
            if c.is_subset(&self.t_p) {
                stale.push(*d);
            } else if self.history.contains(c) && env.is_quorum(senders.iter(), c) {
                ready.push(c.clone());
            }
        }
        for d in stale {
            self.completes.remove(&d);
        }
        let mut progress = false;
        ready.sort();
        for c in ready {
            if !self.t_p.is_strict_subset(&c) {
                continue;
            }
            self.completes.remove(&c.digest());
            if self.c_cur.is_strict_subset(&c) {
                self.c_cur = c.clone();
            }
            let mut installed = c;
            if self.mutation == Mutation::MutateTp && self.id == ProcessId(0) {
                let victim = self
                    .t_p
                    .transactions()
                    .find(|t| !t.is_genesis())
                    .map(|t| t.id());
                if let Some(v) = victim {
                    installed = installed.without(&v);
                }
            }
            self.t_p = installed;
            self.version += 1;
            env.event(NodeEvent::Installed {
                conf: self.t_p.clone(),
            });
            progress = true;
        }
        progress
    }
}
