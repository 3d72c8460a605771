//! Transactions, configurations, stake and weighted quorums.
//!
//! A configuration is a set of transactions. It doubles as the stake
//! distribution of the system: the balance of a process is what it received
//! minus what it spent inside the configuration, and a set of processes is a
//! quorum when it holds strictly more than two thirds of the total stake `M`.
//! Configurations are ordered by inclusion; a [`History`] is a set of
//! configurations that is expected to form a chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{Digest, Encoder};

/// Identity of a process in the finite universe of a scenario.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

pub type Amount = u64;
pub type TxId = Digest;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("dependency {0:?} cannot be resolved")]
    UnresolvedDependency(TxId),
    #[error("history contains incomparable configurations")]
    IncomparableHistory,
    #[error("history is empty")]
    EmptyHistory,
}

/// `3 * weight > 2 * total`, the exact form of "more than two thirds".
pub fn exceeds_two_thirds(weight: u128, total: Amount) -> bool {
    3 * weight > 2 * total as u128
}

/// A transfer `(owner, tau, deps)`.
///
/// `deps` are identified by id; the dependency transactions themselves travel
/// with the transaction so that any process can check the value equation
/// without a shared registry.
pub struct Transaction {
    owner: Option<ProcessId>,
    tau: BTreeMap<ProcessId, Amount>,
    deps: BTreeMap<TxId, Arc<Transaction>>,
    id: TxId,
}

impl Transaction {
    /// The initial transaction: no owner, no dependencies.
    pub fn genesis<I>(tau: I) -> Arc<Transaction>
    where
        I: IntoIterator<Item = (ProcessId, Amount)>,
    {
        Arc::new(Self::build(None, tau, std::iter::empty()))
    }

    pub fn new<I, D>(owner: ProcessId, tau: I, deps: D) -> Arc<Transaction>
    where
        I: IntoIterator<Item = (ProcessId, Amount)>,
        D: IntoIterator<Item = Arc<Transaction>>,
    {
        Arc::new(Self::build(Some(owner), tau, deps))
    }

    fn build<I, D>(owner: Option<ProcessId>, tau: I, deps: D) -> Transaction
    where
        I: IntoIterator<Item = (ProcessId, Amount)>,
        D: IntoIterator<Item = Arc<Transaction>>,
    {
        let mut map: BTreeMap<ProcessId, Amount> = BTreeMap::new();
        for (q, d) in tau {
            *map.entry(q).or_default() += d;
        }
        // zero amounts are not part of the encoding
        map.retain(|_, d| *d > 0);
        let deps: BTreeMap<TxId, Arc<Transaction>> =
            deps.into_iter().map(|t| (t.id, t)).collect();
        let id = Self::encode(owner, &map, deps.keys());
        Transaction {
            owner,
            tau: map,
            deps,
            id,
        }
    }

    fn encode<'a>(
        owner: Option<ProcessId>,
        tau: &BTreeMap<ProcessId, Amount>,
        deps: impl ExactSizeIterator<Item = &'a TxId>,
    ) -> TxId {
        let mut enc = Encoder::new("pastro/tx");
        match owner {
            None => enc.u8(0),
            Some(p) => enc.u8(1).u32(p.0),
        };
        enc.u32(tau.len() as u32);
        for (q, d) in tau {
            enc.u32(q.0).u64(*d);
        }
        enc.digest_set(deps);
        enc.finish()
    }

    pub fn id(&self) -> TxId {
        self.id
    }

    pub fn owner(&self) -> Option<ProcessId> {
        self.owner
    }

    pub fn is_genesis(&self) -> bool {
        self.owner.is_none()
    }

    pub fn tau(&self) -> &BTreeMap<ProcessId, Amount> {
        &self.tau
    }

    /// `tau(q)`, zero when `q` receives nothing.
    pub fn amount_to(&self, q: ProcessId) -> Amount {
        self.tau.get(&q).copied().unwrap_or(0)
    }

    pub fn dep_ids(&self) -> impl ExactSizeIterator<Item = &TxId> {
        self.deps.keys()
    }

    pub fn deps(&self) -> impl ExactSizeIterator<Item = &Arc<Transaction>> {
        self.deps.values()
    }

    pub fn value(&self) -> Amount {
        value(self)
    }

    /// Value equation checked against the embedded dependencies.
    pub fn is_valid(&self) -> bool {
        is_valid_transaction(self, |id| self.deps.get(id).map(|t| t.as_ref())).unwrap_or(false)
    }
}

impl PartialEq for Transaction {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Transaction {}

impl std::hash::Hash for Transaction {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state)
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.owner {
            None => write!(f, "tx_init{:?}", self.id),
            Some(p) => write!(f, "tx{:?}[{} -> {:?}]", self.id, p, self.tau),
        }
    }
}

/// Sum of all amounts in the transfer map.
pub fn value(tx: &Transaction) -> Amount {
    tx.tau.values().sum()
}

/// Funds spent equal funds received through the dependencies.
///
/// The initial transaction is valid whenever it distributes a positive amount.
pub fn is_valid_transaction<'a, F>(tx: &Transaction, resolve: F) -> Result<bool, LedgerError>
where
    F: Fn(&TxId) -> Option<&'a Transaction>,
{
    let Some(owner) = tx.owner else {
        return Ok(tx.deps.is_empty() && value(tx) > 0);
    };
    if tx.deps.is_empty() {
        return Ok(false);
    }
    let mut received: u128 = 0;
    for id in tx.deps.keys() {
        let dep = resolve(id).ok_or(LedgerError::UnresolvedDependency(*id))?;
        received += dep.amount_to(owner) as u128;
    }
    Ok(value(tx) as u128 == received && value(tx) > 0)
}

/// Same owner, distinct transactions, overlapping dependencies.
pub fn conflicts(a: &Transaction, b: &Transaction) -> bool {
    if a.id == b.id || a.owner.is_none() || a.owner != b.owner {
        return false;
    }
    let (small, large) = if a.deps.len() <= b.deps.len() {
        (a, b)
    } else {
        (b, a)
    };
    small.deps.keys().any(|d| large.deps.contains_key(d))
}

/// Ids of the transactions that conflict with at least one other member.
pub fn conflicting_members<'a, I>(txs: I) -> BTreeSet<TxId>
where
    I: IntoIterator<Item = &'a Transaction>,
{
    // (owner, dependency) -> spenders
    let mut spenders: BTreeMap<(ProcessId, TxId), BTreeSet<TxId>> = BTreeMap::new();
    for tx in txs {
        if let Some(owner) = tx.owner {
            for d in tx.deps.keys() {
                spenders.entry((owner, *d)).or_default().insert(tx.id);
            }
        }
    }
    let mut out = BTreeSet::new();
    for ids in spenders.values() {
        if ids.len() > 1 {
            out.extend(ids.iter().copied());
        }
    }
    out
}

/// Result of splitting a set of signed transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub correct: BTreeSet<TxId>,
    pub conflicting: BTreeSet<TxId>,
}

/// Splits `txs` into transactions with a valid certificate and no conflict
/// partner, and transactions that conflict with another member.
pub fn partition_correct_conflicting<'a, I, F>(txs: I, cert_ok: F) -> Partition
where
    I: IntoIterator<Item = &'a Transaction> + Clone,
    F: Fn(&TxId) -> bool,
{
    let conflicting = conflicting_members(txs.clone());
    let correct = txs
        .into_iter()
        .map(|t| t.id)
        .filter(|id| !conflicting.contains(id) && cert_ok(id))
        .collect();
    Partition {
        correct,
        conflicting,
    }
}

struct ConfInner {
    txs: BTreeMap<TxId, Arc<Transaction>>,
    digest: Digest,
    balances: OnceLock<BTreeMap<ProcessId, i128>>,
}

/// A set of transactions.
#[derive(Clone)]
pub struct Configuration(Arc<ConfInner>);

impl Configuration {
    pub fn new<I>(txs: I) -> Configuration
    where
        I: IntoIterator<Item = Arc<Transaction>>,
    {
        Self::from_map(txs.into_iter().map(|t| (t.id, t)).collect())
    }

    pub fn from_map(txs: BTreeMap<TxId, Arc<Transaction>>) -> Configuration {
        let digest = Encoder::new("pastro/conf").digest_set(txs.keys()).finish();
        Configuration(Arc::new(ConfInner {
            txs,
            digest,
            balances: OnceLock::new(),
        }))
    }

    pub fn empty() -> Configuration {
        Self::from_map(BTreeMap::new())
    }

    pub fn digest(&self) -> Digest {
        self.0.digest
    }

    pub fn txs(&self) -> &BTreeMap<TxId, Arc<Transaction>> {
        &self.0.txs
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &TxId> {
        self.0.txs.keys()
    }

    pub fn transactions(&self) -> impl ExactSizeIterator<Item = &Arc<Transaction>> + Clone {
        self.0.txs.values()
    }

    /// Number of transactions.
    pub fn height(&self) -> u64 {
        self.0.txs.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.0.txs.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.0.txs.contains_key(id)
    }

    pub fn get(&self, id: &TxId) -> Option<&Arc<Transaction>> {
        self.0.txs.get(id)
    }

    pub fn is_subset(&self, other: &Configuration) -> bool {
        if self.digest() == other.digest() {
            return true;
        }
        if self.height() > other.height() {
            return false;
        }
        self.0.txs.keys().all(|id| other.0.txs.contains_key(id))
    }

    pub fn is_strict_subset(&self, other: &Configuration) -> bool {
        self.height() < other.height() && self.is_subset(other)
    }

    pub fn comparable(&self, other: &Configuration) -> bool {
        self.is_subset(other) || other.is_subset(self)
    }

    pub fn join(&self, other: &Configuration) -> Configuration {
        if other.is_subset(self) {
            return self.clone();
        }
        if self.is_subset(other) {
            return other.clone();
        }
        let mut txs = self.0.txs.clone();
        txs.extend(other.0.txs.iter().map(|(k, v)| (*k, v.clone())));
        Self::from_map(txs)
    }

    pub fn with(&self, tx: Arc<Transaction>) -> Configuration {
        let mut txs = self.0.txs.clone();
        txs.insert(tx.id, tx);
        Self::from_map(txs)
    }

    pub fn without(&self, id: &TxId) -> Configuration {
        let mut txs = self.0.txs.clone();
        txs.remove(id);
        Self::from_map(txs)
    }

    fn balances(&self) -> &BTreeMap<ProcessId, i128> {
        self.0.balances.get_or_init(|| {
            let mut b: BTreeMap<ProcessId, i128> = BTreeMap::new();
            for tx in self.0.txs.values() {
                for (q, d) in &tx.tau {
                    *b.entry(*q).or_default() += *d as i128;
                }
                if let Some(owner) = tx.owner {
                    *b.entry(owner).or_default() -= value(tx) as i128;
                }
            }
            b
        })
    }

    /// Received minus sent, as a signed quantity.
    pub fn balance(&self, q: ProcessId) -> i128 {
        self.balances().get(&q).copied().unwrap_or(0)
    }

    /// Stake of `q`. Negative balances (which valid configurations never
    /// have) carry no weight.
    pub fn stake(&self, q: ProcessId) -> Amount {
        self.balance(q).max(0) as Amount
    }

    /// Processes that received funds at least once.
    pub fn members(&self) -> BTreeSet<ProcessId> {
        self.0
            .txs
            .values()
            .flat_map(|tx| tx.tau.keys().copied())
            .collect()
    }

    pub fn weight<'a, I>(&self, processes: I) -> u128
    where
        I: IntoIterator<Item = &'a ProcessId>,
    {
        processes
            .into_iter()
            .map(|q| self.stake(*q) as u128)
            .sum()
    }

    /// `true` iff `processes` hold strictly more than two thirds of `total`.
    pub fn is_quorum<'a, I>(&self, processes: I, total: Amount) -> bool
    where
        I: IntoIterator<Item = &'a ProcessId>,
    {
        exceeds_two_thirds(self.weight(processes), total)
    }

    /// Some pair of conflicting members, if any.
    pub fn find_conflict(&self) -> Option<(TxId, TxId)> {
        let txs: Vec<&Arc<Transaction>> = self.0.txs.values().collect();
        let mut by_owner: BTreeMap<ProcessId, Vec<&Arc<Transaction>>> = BTreeMap::new();
        for t in &txs {
            if let Some(o) = t.owner {
                by_owner.entry(o).or_default().push(t);
            }
        }
        for group in by_owner.values() {
            for (i, a) in group.iter().enumerate() {
                for b in &group[i + 1..] {
                    if conflicts(a, b) {
                        return Some((a.id, b.id));
                    }
                }
            }
        }
        None
    }

    /// No two member transactions conflict.
    pub fn is_valid(&self) -> bool {
        self.find_conflict().is_none()
    }

    /// Sum of all balances.
    pub fn total_balance(&self) -> i128 {
        self.balances().values().sum()
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.digest() == other.digest()
    }
}

impl Eq for Configuration {}

impl std::hash::Hash for Configuration {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.digest().hash(state)
    }
}

impl PartialOrd for Configuration {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Height first, then digest. A total order used for canonical iteration;
/// it agrees with inclusion on comparable configurations.
impl Ord for Configuration {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.height(), self.digest()).cmp(&(other.height(), other.digest()))
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{:?}/h{}", self.digest(), self.height())
    }
}

struct HistInner {
    confs: BTreeMap<Digest, Configuration>,
    digest: Digest,
    chain: OnceLock<Option<Vec<Configuration>>>,
}

/// A set of configurations.
#[derive(Clone)]
pub struct History(Arc<HistInner>);

impl History {
    pub fn new<I>(confs: I) -> History
    where
        I: IntoIterator<Item = Configuration>,
    {
        Self::from_map(confs.into_iter().map(|c| (c.digest(), c)).collect())
    }

    fn from_map(confs: BTreeMap<Digest, Configuration>) -> History {
        let digest = Encoder::new("pastro/hist").digest_set(confs.keys()).finish();
        History(Arc::new(HistInner {
            confs,
            digest,
            chain: OnceLock::new(),
        }))
    }

    pub fn singleton(c: Configuration) -> History {
        Self::new([c])
    }

    pub fn digest(&self) -> Digest {
        self.0.digest
    }

    pub fn len(&self) -> usize {
        self.0.confs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.confs.is_empty()
    }

    pub fn configurations(&self) -> impl ExactSizeIterator<Item = &Configuration> {
        self.0.confs.values()
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.0.confs.contains_key(&c.digest())
    }

    pub fn is_subset(&self, other: &History) -> bool {
        self.len() <= other.len() && self.0.confs.keys().all(|k| other.0.confs.contains_key(k))
    }

    pub fn is_strict_subset(&self, other: &History) -> bool {
        self.len() < other.len() && self.is_subset(other)
    }

    pub fn join(&self, other: &History) -> History {
        if other.is_subset(self) {
            return self.clone();
        }
        if self.is_subset(other) {
            return other.clone();
        }
        let mut confs = self.0.confs.clone();
        confs.extend(other.0.confs.iter().map(|(k, v)| (*k, v.clone())));
        Self::from_map(confs)
    }

    /// Members in ascending inclusion order, or `None` when some pair is
    /// incomparable.
    pub fn chain(&self) -> Option<&[Configuration]> {
        self.0
            .chain
            .get_or_init(|| {
                let mut v: Vec<Configuration> = self.0.confs.values().cloned().collect();
                v.sort();
                let ok = v.windows(2).all(|w| w[0].is_strict_subset(&w[1]));
                ok.then_some(v)
            })
            .as_deref()
    }

    pub fn is_chain(&self) -> bool {
        self.chain().is_some()
    }

    /// The inclusion-maximal member.
    pub fn highest(&self) -> Result<&Configuration, LedgerError> {
        if self.is_empty() {
            return Err(LedgerError::EmptyHistory);
        }
        self.chain()
            .and_then(|c| c.last())
            .ok_or(LedgerError::IncomparableHistory)
    }
}

/// Free-function form of [`History::highest`].
pub fn highest_conf(h: &History) -> Result<&Configuration, LedgerError> {
    h.highest()
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.digest() == other.digest()
    }
}

impl Eq for History {}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.confs.values()).finish()
    }
}
