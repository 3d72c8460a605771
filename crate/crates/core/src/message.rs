//! Protocol messages and the interface a process handler sees while it runs.

use std::sync::Arc;

use crate::fscrypto::{FsOracle, Signature};
use crate::ledger::{Configuration, History, ProcessId, TxId};
use crate::verify::{
    AblaKind, ConfigLa, Genesis, HistLa, HistoryCert, SigAcks, TvAcks, TxSet, ValueSet, Verifier,
    VerifyCache,
};

#[derive(Debug)]
pub enum AblaMsg<K: AblaKind> {
    ProposeReq {
        values: ValueSet<K>,
        sn: u64,
        conf: Configuration,
    },
    ProposeResp {
        values: ValueSet<K>,
        sig: Signature,
        sn: u64,
    },
    ConfirmReq {
        acks: Arc<SigAcks>,
        sn: u64,
        conf: Configuration,
    },
    ConfirmResp {
        sig: Signature,
        sn: u64,
    },
}

impl<K: AblaKind> AblaMsg<K> {
    /// Configuration a request is addressed to, if it is a request.
    pub fn target(&self) -> Option<&Configuration> {
        match self {
            AblaMsg::ProposeReq { conf, .. } | AblaMsg::ConfirmReq { conf, .. } => Some(conf),
            _ => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AblaMsg::ProposeReq { .. } => "ProposeReq",
            AblaMsg::ProposeResp { .. } => "ProposeResp",
            AblaMsg::ConfirmReq { .. } => "ConfirmReq",
            AblaMsg::ConfirmResp { .. } => "ConfirmResp",
        }
    }
}

#[derive(Debug)]
pub enum Message {
    ValidateReq {
        txs: TxSet,
        sn: u64,
        conf: Configuration,
    },
    ValidateResp {
        txs: TxSet,
        conflicts: TxSet,
        sig: Signature,
        sn: u64,
    },
    TvConfirmReq {
        acks: Arc<TvAcks>,
        sn: u64,
        conf: Configuration,
    },
    TvConfirmResp {
        sig: Signature,
        sn: u64,
    },
    ConfigLa(AblaMsg<ConfigLa>),
    HistLa(AblaMsg<HistLa>),
    NewHistory {
        history: History,
        cert: HistoryCert,
    },
    UpdateRead {
        sn: u64,
        conf: Configuration,
    },
    UpdateReadResp {
        txs: TxSet,
        values1: ValueSet<ConfigLa>,
        values2: ValueSet<HistLa>,
        sn: u64,
    },
    UpdateComplete {
        conf: Configuration,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::ValidateReq { .. } => "ValidateReq",
            Message::ValidateResp { .. } => "ValidateResp",
            Message::TvConfirmReq { .. } => "TvConfirmReq",
            Message::TvConfirmResp { .. } => "TvConfirmResp",
            Message::ConfigLa(m) => match m.kind() {
                "ProposeReq" => "ConfigLa.ProposeReq",
                "ProposeResp" => "ConfigLa.ProposeResp",
                "ConfirmReq" => "ConfigLa.ConfirmReq",
                _ => "ConfigLa.ConfirmResp",
            },
            Message::HistLa(m) => match m.kind() {
                "ProposeReq" => "HistLa.ProposeReq",
                "ProposeResp" => "HistLa.ProposeResp",
                "ConfirmReq" => "HistLa.ConfirmReq",
                _ => "HistLa.ConfirmResp",
            },
            Message::NewHistory { .. } => "NewHistory",
            Message::UpdateRead { .. } => "UpdateRead",
            Message::UpdateReadResp { .. } => "UpdateReadResp",
            Message::UpdateComplete { .. } => "UpdateComplete",
        }
    }
}

/// Which object produced an output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TxVal,
    ConfigLa,
    HistLa,
}

/// Observable events raised by a process.
#[derive(Clone, Debug)]
pub enum NodeEvent {
    Transfer { tx: TxId },
    TransferComplete { tx: TxId, short_circuit: bool },
    NewHistory { history: History },
    Installed { conf: Configuration },
    Output { stage: Stage, digest: crate::canon::Digest, verified: bool },
    Restart { stage: Stage },
}

/// Effects of one handler turn, applied by the simulator afterwards.
#[derive(Debug)]
pub enum Output {
    Send { to: ProcessId, msg: Arc<Message> },
    Multicast { to: Vec<ProcessId>, msg: Arc<Message> },
    Wrb { msg: Arc<Message> },
    Wurb { msg: Arc<Message>, tag: Configuration },
    Event(NodeEvent),
}

/// Shared run state lent to a handler for one turn.
pub struct Env<'a> {
    pub tick: u64,
    pub oracle: &'a mut FsOracle,
    pub cache: &'a mut VerifyCache,
    pub genesis: &'a Genesis,
    pub out: &'a mut Vec<Output>,
}

impl<'a> Env<'a> {
    pub fn verifier(&mut self) -> Verifier<'_> {
        Verifier::new(self.oracle, self.genesis, self.cache)
    }

    pub fn send(&mut self, to: ProcessId, msg: Message) {
        self.out.push(Output::Send {
            to,
            msg: Arc::new(msg),
        });
    }

    pub fn multicast(&mut self, conf: &Configuration, msg: Message) {
        self.out.push(Output::Multicast {
            to: conf.members().into_iter().collect(),
            msg: Arc::new(msg),
        });
    }

    pub fn event(&mut self, e: NodeEvent) {
        self.out.push(Output::Event(e));
    }

    /// Quorum test against the run's total stake.
    pub fn is_quorum<'b, I>(&self, signers: I, conf: &Configuration) -> bool
    where
        I: IntoIterator<Item = &'b ProcessId>,
    {
        conf.is_quorum(signers, self.genesis.total)
    }
}

/// Read-only slice of the process state that the objects consult.
pub struct View<'a> {
    pub me: ProcessId,
    pub t_p: &'a Configuration,
    pub history: &'a History,
    pub hist_cert: &'a HistoryCert,
    pub highest: &'a Configuration,
}
