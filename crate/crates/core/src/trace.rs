//! Run traces: an append-only event log plus the tables needed to interpret
//! it, serialized as newline-delimited JSON.
//!
//! Records come out in a fixed order (meta, transactions, configurations,
//! histories, events, key updates, refused signatures, observations, final
//! states) and every table is sorted, so a trace is a deterministic function
//! of the run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::Digest;
use crate::fscrypto::{KeyUpdate, SignAttempt};
use crate::ledger::{Amount, ProcessId, TxId};
use crate::message::Stage;
use crate::netbcast::NetStats;
use crate::node::Mutation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub seed: u64,
    pub processes: u32,
    pub total: Amount,
    pub genesis: TxId,
    pub horizon: u64,
    pub fairness_bound: u64,
    pub end_tick: u64,
    pub mutation: Mutation,
    pub net: NetStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub id: TxId,
    pub owner: Option<ProcessId>,
    pub tau: Vec<(ProcessId, Amount)>,
    pub deps: Vec<TxId>,
    /// Owner certificate verifies and the value equation holds.
    pub cert_valid: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EventKind {
    Send {
        from: ProcessId,
        to: ProcessId,
        msg: String,
    },
    Deliver {
        from: ProcessId,
        to: ProcessId,
        msg: String,
    },
    Transfer {
        process: ProcessId,
        tx: TxId,
    },
    TransferComplete {
        process: ProcessId,
        tx: TxId,
        short_circuit: bool,
    },
    NewHistory {
        process: ProcessId,
        history: Digest,
    },
    Installed {
        process: ProcessId,
        conf: Digest,
    },
    Output {
        process: ProcessId,
        stage: Stage,
        digest: Digest,
        verified: bool,
    },
    Restart {
        process: ProcessId,
        stage: Stage,
    },
    Corrupt {
        process: ProcessId,
        accepted: bool,
        behavior: String,
        reason: String,
    },
    Forgery {
        conf: Digest,
        height: u64,
        coalition: Vec<ProcessId>,
        signatures: u32,
        accepted: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Handler turn in which the event happened; also the signature
    /// oracle's clock.
    pub turn: u64,
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalState {
    pub process: ProcessId,
    pub correct: bool,
    pub t_p: Digest,
    pub busy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub stage: Stage,
    pub digest: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum Record {
    Meta(TraceMeta),
    Tx(TxRecord),
    Conf { digest: Digest, txs: Vec<TxId> },
    Hist { digest: Digest, confs: Vec<Digest> },
    Event(TraceEvent),
    Key(KeyUpdate),
    Refused(SignAttempt),
    Observed(Observation),
    Final(FinalState),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace has no meta record")]
    NoMeta,
}

/// A complete run record. The checker reads nothing else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub txs: BTreeMap<TxId, TxRecord>,
    pub confs: BTreeMap<Digest, Vec<TxId>>,
    pub hists: BTreeMap<Digest, Vec<Digest>>,
    pub events: Vec<TraceEvent>,
    pub key_log: Vec<KeyUpdate>,
    pub refusals: Vec<SignAttempt>,
    pub observed: Vec<Observation>,
    pub finals: Vec<FinalState>,
}

impl RunTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: Record| {
            out.push_str(&serde_json::to_string(&r).expect("trace records serialize"));
            out.push('\n');
        };
        push(Record::Meta(self.meta.clone()));
        for t in self.txs.values() {
            push(Record::Tx(t.clone()));
        }
        for (d, txs) in &self.confs {
            push(Record::Conf {
                digest: *d,
                txs: txs.clone(),
            });
        }
        for (d, confs) in &self.hists {
            push(Record::Hist {
                digest: *d,
                confs: confs.clone(),
            });
        }
        for e in &self.events {
            push(Record::Event(e.clone()));
        }
        for k in &self.key_log {
            push(Record::Key(k.clone()));
        }
        for r in &self.refusals {
            push(Record::Refused(r.clone()));
        }
        for o in &self.observed {
            push(Record::Observed(o.clone()));
        }
        for f in &self.finals {
            push(Record::Final(f.clone()));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<RunTrace, TraceError> {
        let mut meta = None;
        let mut t = RunTrace {
            meta: TraceMeta {
                scenario: String::new(),
                seed: 0,
                processes: 0,
                total: 0,
                genesis: Digest::NULL,
                horizon: 0,
                fairness_bound: 0,
                end_tick: 0,
                mutation: Mutation::None,
                net: NetStats::default(),
            },
            txs: BTreeMap::new(),
            confs: BTreeMap::new(),
            hists: BTreeMap::new(),
            events: Vec::new(),
            key_log: Vec::new(),
            refusals: Vec::new(),
            observed: Vec::new(),
            finals: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(line).map_err(|source| TraceError::Json { line: i + 1, source })?;
            match rec {
                Record::Meta(m) => meta = Some(m),
                Record::Tx(r) => {
                    t.txs.insert(r.id, r);
                }
                Record::Conf { digest, txs } => {
                    t.confs.insert(digest, txs);
                }
                Record::Hist { digest, confs } => {
                    t.hists.insert(digest, confs);
                }
                Record::Event(e) => t.events.push(e),
                Record::Key(k) => t.key_log.push(k),
                Record::Refused(r) => t.refusals.push(r),
                Record::Observed(o) => t.observed.push(o),
                Record::Final(f) => t.finals.push(f),
            }
        }
        t.meta = meta.ok_or(TraceError::NoMeta)?;
        Ok(t)
    }

    /// Stable content digest of the serialized trace.
    pub fn digest(&self) -> Digest {
        crate::canon::Encoder::new("pastro/trace")
            .bytes(self.to_jsonl().as_bytes())
            .finish()
    }

    pub fn forgeries(&self) -> impl Iterator<Item = (&TraceEvent, bool)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Forgery { accepted, .. } => Some((e, *accepted)),
            _ => None,
        })
    }
}
