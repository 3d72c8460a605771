//! Certificates and the verifying functions.
//!
//! Three kinds of objects are certified: transaction sets produced by
//! transaction validation, configurations produced by the configuration
//! lattice agreement, and histories produced by the history lattice
//! agreement. Every certificate embeds the history (and its certificate)
//! under which it was produced, so verification recurses down to the
//! initial history, whose certificate is null.
//!
//! Verification is a pure function of its inputs and the signature ledger.
//! Positive verdicts are memoized by content digest in [`VerifyCache`]; the
//! ledger only grows, so a positive verdict never becomes stale.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::canon::{Digest, Encoder};
use crate::fscrypto::{FsOracle, Signature, SignedTx};
use crate::ledger::{conflicting_members, Amount, Configuration, History, ProcessId, Transaction, TxId};

/// System-wide constants fixed by the initial transaction.
#[derive(Clone, Debug)]
pub struct Genesis {
    pub tx: Arc<Transaction>,
    pub total: Amount,
    pub conf: Configuration,
    pub history: History,
}

impl Genesis {
    pub fn new(tx: Arc<Transaction>) -> Genesis {
        let total = tx.value();
        let conf = Configuration::new([tx.clone()]);
        let history = History::singleton(conf.clone());
        Genesis {
            tx,
            total,
            conf,
            history,
        }
    }

    pub fn signed_tx(&self) -> SignedTx {
        SignedTx::genesis(self.tx.clone())
    }
}

/// A set of signed transactions keyed by transaction id.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct TxSet(Arc<BTreeMap<TxId, SignedTx>>);

impl TxSet {
    pub fn new() -> TxSet {
        TxSet::default()
    }

    pub fn single(stx: SignedTx) -> TxSet {
        let mut s = TxSet::new();
        s.insert(stx);
        s
    }

    pub fn from_iter<I: IntoIterator<Item = SignedTx>>(it: I) -> TxSet {
        TxSet(Arc::new(it.into_iter().map(|s| (s.tx.id(), s)).collect()))
    }

    pub fn insert(&mut self, stx: SignedTx) -> bool {
        if self.0.contains_key(&stx.tx.id()) {
            return false;
        }
        Arc::make_mut(&mut self.0).insert(stx.tx.id(), stx);
        true
    }

    /// Adds every member of `other` not already present.
    pub fn extend(&mut self, other: &TxSet) -> bool {
        if other.0.keys().all(|k| self.0.contains_key(k)) {
            return false;
        }
        let map = Arc::make_mut(&mut self.0);
        for (k, v) in other.0.iter() {
            map.entry(*k).or_insert_with(|| v.clone());
        }
        true
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.0.contains_key(id)
    }

    pub fn get(&self, id: &TxId) -> Option<&SignedTx> {
        self.0.get(id)
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &TxId> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &SignedTx> + Clone {
        self.0.values()
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> + Clone {
        self.0.values().map(|s| s.tx.as_ref())
    }

    pub fn same_ids(&self, other: &TxSet) -> bool {
        self.len() == other.len() && self.0.keys().zip(other.0.keys()).all(|(a, b)| a == b)
    }

    pub fn ids_subset(&self, other: &TxSet) -> bool {
        self.len() <= other.len() && self.0.keys().all(|k| other.0.contains_key(k))
    }

    pub fn filter<F: Fn(&SignedTx) -> bool>(&self, keep: F) -> TxSet {
        TxSet(Arc::new(
            self.0
                .iter()
                .filter(|(_, v)| keep(v))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        ))
    }

    /// Digest over member ids.
    pub fn digest(&self) -> Digest {
        Encoder::new("pastro/txset").digest_set(self.0.keys()).finish()
    }

    pub fn to_configuration(&self) -> Configuration {
        Configuration::from_map(self.0.iter().map(|(k, v)| (*k, v.tx.clone())).collect())
    }
}

impl fmt::Debug for TxSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.keys()).finish()
    }
}

/// Signatures collected in a second phase, or in the first phase of a
/// lattice agreement.
pub type SigAcks = BTreeMap<ProcessId, Signature>;

/// First-phase acknowledgement of transaction validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TvAck {
    pub sig: Signature,
    pub conflicts: TxSet,
}

pub type TvAcks = BTreeMap<ProcessId, TvAck>;

fn sig_acks_digest(tag: &str, acks: &SigAcks) -> Digest {
    let mut enc = Encoder::new(tag);
    enc.u32(acks.len() as u32);
    for (q, s) in acks {
        enc.u32(q.0).digest(&s.digest());
    }
    enc.finish()
}

pub fn tv_acks_digest(acks: &TvAcks) -> Digest {
    let mut enc = Encoder::new("pastro/tv/acks1");
    enc.u32(acks.len() as u32);
    for (q, a) in acks {
        enc.u32(q.0).digest(&a.sig.digest()).digest(&a.conflicts.digest());
    }
    enc.finish()
}

/// Message signed by a validation responder.
pub fn validate_resp_digest(txs: &TxSet, conflicts: &TxSet) -> Digest {
    Encoder::new("pastro/tv/ValidateResp")
        .digest(&txs.digest())
        .digest(&conflicts.digest())
        .finish()
}

/// Message signed by a second-phase responder of transaction validation.
pub fn tv_confirm_digest(acks1: &TvAcks) -> Digest {
    Encoder::new("pastro/tv/ConfirmResp")
        .digest(&tv_acks_digest(acks1))
        .finish()
}

/// Message signed by a lattice agreement responder; covers first components
/// only.
pub fn propose_resp_digest<K: AblaKind>(values: &ValueSet<K>) -> Digest {
    Encoder::new(K::NAMESPACE)
        .bytes(b"ProposeResp")
        .digest(&values.firsts_digest())
        .finish()
}

pub fn abla_confirm_digest<K: AblaKind>(acks1: &SigAcks) -> Digest {
    Encoder::new(K::NAMESPACE)
        .bytes(b"ConfirmResp")
        .digest(&sig_acks_digest("pastro/abla/acks1", acks1))
        .finish()
}

/// Certificate of a validated transaction set. `None` is the null
/// certificate, legal only for the initial configuration.
#[derive(Clone, Default)]
pub struct TxSetCert(pub Option<Arc<TxSetCertBody>>);

pub struct TxSetCertBody {
    pub sent: TxSet,
    pub acks1: TvAcks,
    pub acks2: SigAcks,
    pub history: History,
    pub history_cert: HistoryCert,
    digest: Digest,
}

impl TxSetCert {
    pub fn null() -> Self {
        TxSetCert(None)
    }

    pub fn new(
        sent: TxSet,
        acks1: TvAcks,
        acks2: SigAcks,
        history: History,
        history_cert: HistoryCert,
    ) -> Self {
        let digest = Encoder::new("pastro/cert/txset")
            .digest(&sent.digest())
            .digest(&tv_acks_digest(&acks1))
            .digest(&sig_acks_digest("pastro/tv/acks2", &acks2))
            .digest(&history.digest())
            .digest(&history_cert.digest())
            .finish();
        TxSetCert(Some(Arc::new(TxSetCertBody {
            sent,
            acks1,
            acks2,
            history,
            history_cert,
            digest,
        })))
    }

    pub fn digest(&self) -> Digest {
        self.0.as_ref().map_or(Digest::NULL, |b| b.digest)
    }

    pub fn is_null(&self) -> bool {
        self.0.is_none()
    }
}

impl fmt::Debug for TxSetCert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            None => f.write_str("⊥"),
            Some(b) => write!(f, "TxSetCert{:?}", b.digest),
        }
    }
}

/// An element of a lattice.
pub trait Lattice: Clone + PartialEq + fmt::Debug {
    fn digest(&self) -> Digest;
    fn join(&self, other: &Self) -> Self;
    fn leq(&self, other: &Self) -> bool;
}

impl Lattice for Configuration {
    fn digest(&self) -> Digest {
        Configuration::digest(self)
    }
    fn join(&self, other: &Self) -> Self {
        Configuration::join(self, other)
    }
    fn leq(&self, other: &Self) -> bool {
        self.is_subset(other)
    }
}

impl Lattice for History {
    fn digest(&self) -> Digest {
        History::digest(self)
    }
    fn join(&self, other: &Self) -> Self {
        History::join(self, other)
    }
    fn leq(&self, other: &Self) -> bool {
        self.is_subset(other)
    }
}

/// Parameters of one lattice agreement instance.
pub trait AblaKind: Sized + 'static {
    type Value: Lattice;
    type Input: Clone + Default + fmt::Debug;
    /// Message namespace; keeps the two instances' traffic and signatures apart.
    const NAMESPACE: &'static str;

    fn initial(genesis: &Genesis) -> Self::Value;
    fn input_digest(cert: &Self::Input) -> Digest;
    fn verify_input(v: &Self::Value, cert: &Self::Input, ver: &mut Verifier<'_>) -> bool;
    /// Structural well-formedness of an output value.
    fn well_formed(_v: &Self::Value) -> bool {
        true
    }
    fn observe(obs: &mut Observed, v: &Self::Value);
}

/// Lattice agreement over sets of transactions.
#[derive(Debug)]
pub struct ConfigLa;

/// Lattice agreement over sets of configurations.
#[derive(Debug)]
pub struct HistLa;

impl AblaKind for ConfigLa {
    type Value = Configuration;
    type Input = TxSetCert;
    const NAMESPACE: &'static str = "pastro/config-la";

    fn initial(genesis: &Genesis) -> Configuration {
        genesis.conf.clone()
    }
    fn input_digest(cert: &TxSetCert) -> Digest {
        cert.digest()
    }
    fn verify_input(v: &Configuration, cert: &TxSetCert, ver: &mut Verifier<'_>) -> bool {
        ver.verify_transaction_set(v, cert)
    }
    fn observe(obs: &mut Observed, v: &Configuration) {
        obs.configurations.entry(v.digest()).or_insert_with(|| v.clone());
    }
}

impl AblaKind for HistLa {
    type Value = History;
    type Input = ConfigCert;
    const NAMESPACE: &'static str = "pastro/hist-la";

    fn initial(genesis: &Genesis) -> History {
        genesis.history.clone()
    }
    fn input_digest(cert: &ConfigCert) -> Digest {
        cert.digest()
    }
    fn verify_input(v: &History, cert: &ConfigCert, ver: &mut Verifier<'_>) -> bool {
        let mut it = v.configurations();
        match (it.next(), it.next()) {
            (Some(c), None) => ver.verify_configuration(c, cert),
            _ => false,
        }
    }
    fn well_formed(v: &History) -> bool {
        v.is_chain()
    }
    fn observe(obs: &mut Observed, v: &History) {
        obs.histories.entry(v.digest()).or_insert_with(|| v.clone());
    }
}

/// Accumulated inputs of a lattice agreement, keyed by the digest of the
/// value. At most one certificate is kept per value.
pub struct ValueSet<K: AblaKind>(Arc<BTreeMap<Digest, (K::Value, K::Input)>>);

impl<K: AblaKind> Clone for ValueSet<K> {
    fn clone(&self) -> Self {
        ValueSet(self.0.clone())
    }
}

impl<K: AblaKind> Default for ValueSet<K> {
    fn default() -> Self {
        ValueSet(Arc::new(BTreeMap::new()))
    }
}

impl<K: AblaKind> fmt::Debug for ValueSet<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.keys()).finish()
    }
}

impl<K: AblaKind> ValueSet<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// `{(v_init, ⊥)}`.
    pub fn initial(genesis: &Genesis) -> Self {
        let mut s = Self::new();
        s.insert(K::initial(genesis), K::Input::default());
        s
    }

    pub fn single(v: K::Value, cert: K::Input) -> Self {
        let mut s = Self::new();
        s.insert(v, cert);
        s
    }

    /// Inserts unless a value with the same first component is present.
    pub fn insert(&mut self, v: K::Value, cert: K::Input) -> bool {
        let d = v.digest();
        if self.0.contains_key(&d) {
            return false;
        }
        Arc::make_mut(&mut self.0).insert(d, (v, cert));
        true
    }

    /// `self ∪ other.filter(v ∉ self.firsts())`.
    pub fn merge(&mut self, other: &ValueSet<K>) -> bool {
        if other.0.keys().all(|k| self.0.contains_key(k)) {
            return false;
        }
        let map = Arc::make_mut(&mut self.0);
        for (k, v) in other.0.iter() {
            map.entry(*k).or_insert_with(|| v.clone());
        }
        true
    }

    /// Entries of `self` whose first component is not in `other`.
    pub fn difference(&self, other: &ValueSet<K>) -> ValueSet<K> {
        ValueSet(Arc::new(
            self.0
                .iter()
                .filter(|(k, _)| !other.0.contains_key(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        ))
    }

    pub fn same_firsts(&self, other: &ValueSet<K>) -> bool {
        self.0.len() == other.0.len() && self.0.keys().zip(other.0.keys()).all(|(a, b)| a == b)
    }

    pub fn contains_first(&self, d: &Digest) -> bool {
        self.0.contains_key(d)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K::Value, &K::Input)> {
        self.0.values().map(|(v, c)| (v, c))
    }

    pub fn firsts(&self) -> impl Iterator<Item = &K::Value> {
        self.0.values().map(|(v, _)| v)
    }

    pub fn firsts_digest(&self) -> Digest {
        Encoder::new("pastro/values/firsts")
            .digest_set(self.0.keys())
            .finish()
    }

    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::new("pastro/values");
        enc.u32(self.0.len() as u32);
        for (k, (_, c)) in self.0.iter() {
            enc.digest(k).digest(&K::input_digest(c));
        }
        enc.finish()
    }

    /// Join of all first components; `None` for the empty set.
    pub fn join(&self) -> Option<K::Value> {
        let mut it = self.firsts();
        let first = it.next()?.clone();
        Some(it.fold(first, |acc, v| acc.join(v)))
    }
}

/// Certificate of a lattice agreement output. `None` is the null
/// certificate, legal only for the initial value.
pub struct AblaCert<K: AblaKind>(pub Option<Arc<AblaCertBody<K>>>);

pub struct AblaCertBody<K: AblaKind> {
    pub values: ValueSet<K>,
    pub acks1: SigAcks,
    pub acks2: SigAcks,
    pub history: History,
    pub history_cert: HistoryCert,
    digest: Digest,
}

pub type ConfigCert = AblaCert<ConfigLa>;
pub type HistoryCert = AblaCert<HistLa>;

impl<K: AblaKind> Clone for AblaCert<K> {
    fn clone(&self) -> Self {
        AblaCert(self.0.clone())
    }
}

impl<K: AblaKind> Default for AblaCert<K> {
    fn default() -> Self {
        AblaCert(None)
    }
}

impl<K: AblaKind> fmt::Debug for AblaCert<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            None => f.write_str("⊥"),
            Some(b) => write!(f, "AblaCert{:?}", b.digest),
        }
    }
}

impl<K: AblaKind> AblaCert<K> {
    pub fn null() -> Self {
        AblaCert(None)
    }

    pub fn new(
        values: ValueSet<K>,
        acks1: SigAcks,
        acks2: SigAcks,
        history: History,
        history_cert: HistoryCert,
    ) -> Self {
        let digest = Encoder::new(K::NAMESPACE)
            .bytes(b"cert")
            .digest(&values.digest())
            .digest(&sig_acks_digest("pastro/abla/acks1", &acks1))
            .digest(&sig_acks_digest("pastro/abla/acks2", &acks2))
            .digest(&history.digest())
            .digest(&history_cert.digest())
            .finish();
        AblaCert(Some(Arc::new(AblaCertBody {
            values,
            acks1,
            acks2,
            history,
            history_cert,
            digest,
        })))
    }

    pub fn digest(&self) -> Digest {
        self.0.as_ref().map_or(Digest::NULL, |b| b.digest)
    }

    pub fn is_null(&self) -> bool {
        self.0.is_none()
    }
}

/// Every object that passed verification during a run, first occurrence
/// only. The checker cross-compares these.
#[derive(Clone, Debug, Default)]
pub struct Observed {
    pub tx_sets: BTreeMap<Digest, Configuration>,
    pub configurations: BTreeMap<Digest, Configuration>,
    pub histories: BTreeMap<Digest, History>,
    pub senders: BTreeSet<TxId>,
}

/// Memo of positive verdicts plus the observation log.
#[derive(Debug, Default)]
pub struct VerifyCache {
    ok: HashSet<Digest>,
    senders: HashSet<(TxId, Digest)>,
    pub observed: Observed,
    hits: u64,
    misses: u64,
}

impl VerifyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }
}

/// The verifying functions, bound to a signature ledger.
pub struct Verifier<'a> {
    oracle: &'a FsOracle,
    genesis: &'a Genesis,
    cache: &'a mut VerifyCache,
}

impl<'a> Verifier<'a> {
    pub fn new(oracle: &'a FsOracle, genesis: &'a Genesis, cache: &'a mut VerifyCache) -> Self {
        Verifier {
            oracle,
            genesis,
            cache,
        }
    }

    pub fn genesis(&self) -> &Genesis {
        self.genesis
    }

    /// Owner certificate plus the value equation.
    pub fn verify_sender(&mut self, stx: &SignedTx) -> bool {
        let key = (stx.tx.id(), stx.cert.digest());
        if self.cache.senders.contains(&key) {
            return true;
        }
        let ok = if stx.tx.is_genesis() {
            stx.tx.id() == self.genesis.tx.id() && self.oracle.verify_sender(&stx.tx, &stx.cert)
        } else {
            self.oracle.verify_sender(&stx.tx, &stx.cert) && stx.tx.is_valid()
        };
        if ok {
            self.cache.senders.insert(key);
            self.cache.observed.senders.insert(stx.tx.id());
        }
        ok
    }

    /// Conjunction over `txs`; vacuously true.
    pub fn verify_senders<'b, I>(&mut self, txs: I) -> bool
    where
        I: IntoIterator<Item = &'b SignedTx>,
    {
        txs.into_iter().all(|s| self.verify_sender(s))
    }

    pub fn contains_quorum<'b, I>(&self, signers: I, conf: &Configuration) -> bool
    where
        I: IntoIterator<Item = &'b ProcessId>,
    {
        conf.is_quorum(signers, self.genesis.total)
    }

    pub fn verify_transaction_set(&mut self, txs: &Configuration, cert: &TxSetCert) -> bool {
        let Some(body) = &cert.0 else {
            return *txs == self.genesis.conf;
        };
        let key = Encoder::new("pastro/verified/txset")
            .digest(&txs.digest())
            .digest(&body.digest)
            .finish();
        if self.cache.ok.contains(&key) {
            self.cache.hits += 1;
            return true;
        }
        self.cache.misses += 1;
        if !self.verify_history(&body.history, &body.history_cert) {
            return false;
        }
        let Ok(conf) = body.history.highest() else {
            return false;
        };
        let conf = conf.clone();
        let height = conf.height();

        let mut marked: BTreeSet<TxId> = BTreeSet::new();
        for ack in body.acks1.values() {
            marked.extend(ack.conflicts.ids().copied());
        }
        let expected = body.sent.ids().filter(|id| !marked.contains(id));
        if !expected.eq(txs.ids()) {
            return false;
        }
        if !self.contains_quorum(body.acks1.keys(), &conf)
            || !self.contains_quorum(body.acks2.keys(), &conf)
        {
            return false;
        }
        for (q, ack) in &body.acks1 {
            let m = validate_resp_digest(&body.sent, &ack.conflicts);
            if !self.oracle.fs_verify(&m, *q, Some(&ack.sig), height) {
                return false;
            }
            let partners = conflicting_members(ack.conflicts.transactions());
            if partners.len() != ack.conflicts.len() {
                return false;
            }
        }
        let m2 = tv_confirm_digest(&body.acks1);
        for (q, sig) in &body.acks2 {
            if !self.oracle.fs_verify(&m2, *q, Some(sig), height) {
                return false;
            }
        }
        // dependencies must be confirmed in the configuration validated against
        let closed = txs
            .transactions()
            .all(|t| t.dep_ids().all(|d| conf.contains(d)));
        if !closed {
            return false;
        }
        self.cache.ok.insert(key);
        self.cache
            .observed
            .tx_sets
            .entry(txs.digest())
            .or_insert_with(|| txs.clone());
        true
    }

    /// Output verification of a lattice agreement instance.
    pub fn verify_output<K: AblaKind>(&mut self, v: &K::Value, cert: &AblaCert<K>) -> bool {
        let Some(body) = &cert.0 else {
            return *v == K::initial(self.genesis);
        };
        let key = Encoder::new(K::NAMESPACE)
            .bytes(b"verified")
            .digest(&v.digest())
            .digest(&body.digest)
            .finish();
        if self.cache.ok.contains(&key) {
            self.cache.hits += 1;
            return true;
        }
        self.cache.misses += 1;
        if !K::well_formed(v) {
            return false;
        }
        if !self.verify_history(&body.history, &body.history_cert) {
            return false;
        }
        let Ok(conf) = body.history.highest() else {
            return false;
        };
        let conf = conf.clone();
        let height = conf.height();
        match body.values.join() {
            Some(j) if j == *v => {}
            _ => return false,
        }
        if !self.contains_quorum(body.acks1.keys(), &conf)
            || !self.contains_quorum(body.acks2.keys(), &conf)
        {
            return false;
        }
        let m1 = propose_resp_digest(&body.values);
        for (q, sig) in &body.acks1 {
            if !self.oracle.fs_verify(&m1, *q, Some(sig), height) {
                return false;
            }
        }
        let m2 = abla_confirm_digest::<K>(&body.acks1);
        for (q, sig) in &body.acks2 {
            if !self.oracle.fs_verify(&m2, *q, Some(sig), height) {
                return false;
            }
        }
        self.cache.ok.insert(key);
        K::observe(&mut self.cache.observed, v);
        true
    }

    pub fn verify_configuration(&mut self, c: &Configuration, cert: &ConfigCert) -> bool {
        self.verify_output::<ConfigLa>(c, cert)
    }

    pub fn verify_history(&mut self, h: &History, cert: &HistoryCert) -> bool {
        self.verify_output::<HistLa>(h, cert)
    }

    /// Every entry is a verifiable input of the instance; vacuously true.
    pub fn verify_values<K: AblaKind>(&mut self, vs: &ValueSet<K>) -> bool {
        vs.iter().all(|(v, c)| K::verify_input(v, c, self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fscrypto::TxCert;

    const A: ProcessId = ProcessId(0);
    const B: ProcessId = ProcessId(1);
    const C: ProcessId = ProcessId(2);

    fn genesis() -> Genesis {
        Genesis::new(Transaction::genesis([(A, 4), (B, 3), (C, 2)]))
    }

    #[test]
    fn contains_quorum_is_strict_two_thirds() {
        let g = genesis();
        let o = FsOracle::new();
        let mut cache = VerifyCache::new();
        let v = Verifier::new(&o, &g, &mut cache);
        // a + b hold 7 of 9: 21 > 18
        assert!(v.contains_quorum(&[A, B], &g.conf));
        // a + c hold exactly 6 of 9: 18 > 18 fails
        assert!(!v.contains_quorum(&[A, C], &g.conf));
        assert!(!v.contains_quorum(&[], &g.conf));
    }

    #[test]
    fn null_certificates_accept_only_initial_values() {
        let g = genesis();
        let o = FsOracle::new();
        let mut cache = VerifyCache::new();
        let mut v = Verifier::new(&o, &g, &mut cache);
        assert!(v.verify_configuration(&g.conf, &ConfigCert::null()));
        assert!(v.verify_history(&g.history, &HistoryCert::null()));
        let t = Transaction::new(A, [(B, 4)], [g.tx.clone()]);
        let c1 = g.conf.with(t);
        let h = History::new([g.conf.clone(), c1.clone()]);
        assert!(!v.verify_history(&h, &HistoryCert::null()));
        assert!(!v.verify_configuration(&c1, &ConfigCert::null()));
        assert!(v.verify_transaction_set(&g.conf, &TxSetCert::null()));
    }

    #[test]
    fn senders_conjunction() {
        let g = genesis();
        let mut o = FsOracle::new();
        let t1 = Transaction::new(A, [(B, 4)], [g.tx.clone()]);
        let t2 = Transaction::new(B, [(C, 3)], [g.tx.clone()]);
        let c1 = o.sign_tx(A, &t1).unwrap();
        let c2 = o.sign_tx(B, &t2).unwrap();
        let forged = TxCert::Signed(o.sign_plain(C, &t2.id()));
        let mut cache = VerifyCache::new();
        let mut v = Verifier::new(&o, &g, &mut cache);
        let good = [SignedTx::new(t1.clone(), c1), SignedTx::new(t2.clone(), c2)];
        assert!(v.verify_senders(good.iter()));
        let bad = [SignedTx::new(t1, c1), SignedTx::new(t2, forged)];
        assert!(!v.verify_senders(bad.iter()));
        assert!(v.verify_senders(std::iter::empty()));
    }

    #[test]
    fn hand_built_configuration_certificate() {
        let g = genesis();
        let mut o = FsOracle::new();
        let t1 = Transaction::new(A, [(B, 4)], [g.tx.clone()]);
        let c1 = g.conf.with(t1);
        let values: ValueSet<ConfigLa> = ValueSet::single(c1.clone(), TxSetCert::null());
        let m1 = propose_resp_digest(&values);
        let mut acks1 = SigAcks::new();
        for q in [A, B] {
            acks1.insert(q, o.fs_sign(q, &m1, 1).unwrap());
        }
        let m2 = abla_confirm_digest::<ConfigLa>(&acks1);
        let mut acks2 = SigAcks::new();
        for q in [A, B] {
            acks2.insert(q, o.fs_sign(q, &m2, 1).unwrap());
        }
        let cert = ConfigCert::new(
            values.clone(),
            acks1.clone(),
            acks2.clone(),
            g.history.clone(),
            HistoryCert::null(),
        );
        let mut cache = VerifyCache::new();
        {
            let mut v = Verifier::new(&o, &g, &mut cache);
            assert!(v.verify_configuration(&c1, &cert));
            assert!(!v.verify_configuration(&g.conf, &cert));
        }
        assert!(cache.observed.configurations.contains_key(&c1.digest()));

        // second phase signed one timestamp too late
        let mut late = SigAcks::new();
        for q in [A, B] {
            late.insert(q, o.fs_sign(q, &m2, 2).unwrap());
        }
        let bad = ConfigCert::new(values, acks1, late, g.history.clone(), HistoryCert::null());
        let mut cache = VerifyCache::new();
        let mut v = Verifier::new(&o, &g, &mut cache);
        assert!(!v.verify_configuration(&c1, &bad));
    }
}
