//! The discrete-event harness: one scenario, one seed, one trace.
//!
//! Every popped network event is one handler turn, and the turn number is
//! the signature oracle's clock. Corruption requests raised during a turn
//! run in turns of their own right after it, so a process is either correct
//! or Byzantine for the whole of any turn.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{self, CorruptionLedger};
use crate::canon::Digest;
use crate::checker::{check_trace, Check, Report};
use crate::fscrypto::{FsOracle, SignedTx};
use crate::ledger::{Amount, Configuration, History, ProcessId, Transaction, TxId};
use crate::message::{Env, Message, NodeEvent, Output, Stage};
use crate::netbcast::{Event, Network};
use crate::node::Node;
use crate::scenario::{AmountPolicy, Behavior, NamedTarget, Scenario, Target, Trigger};
use crate::trace::{
    EventKind, FinalState, Observation, RunTrace, TraceEvent, TraceMeta, TxRecord,
};
use crate::verify::{Genesis, HistoryCert, TxSet, Verifier, VerifyCache};

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    /// Log every send and delivery. Off for corpus runs.
    pub record_messages: bool,
    pub horizon: Option<u64>,
}

/// Counters that are not part of the trace.
#[derive(Clone, Debug, Default)]
pub struct RunStats {
    pub turns: u64,
    pub transfers: u64,
    pub completed: u64,
    pub restarts: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub corruptions: u64,
    pub rejections: u64,
    /// Workload transfers that never found a free, funded payer.
    pub abandoned: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub stats: RunStats,
}

#[derive(Debug)]
enum Timer {
    Transfer { payer: ProcessId, attempt: u32 },
    Policy,
    Script(usize),
    Byz { p: ProcessId, attempt: u32 },
}

const REPLAY_BUFFER: usize = 32;
const REPLAY_BUDGET: u32 = 200;
const EQUIVOCATIONS: u32 = 4;
const BYZ_ATTEMPTS: u32 = 50;

struct ByzState {
    behavior: Behavior,
    buffer: VecDeque<Arc<Message>>,
    budget: u32,
}

struct Sim<'s> {
    sc: &'s Scenario,
    seed: u64,
    opts: SimOptions,
    horizon: u64,
    rng: ChaCha8Rng,
    net: Network<Message, Timer>,
    oracle: FsOracle,
    cache: VerifyCache,
    genesis: Genesis,
    nodes: Vec<Node>,
    adv: CorruptionLedger,
    byz: BTreeMap<ProcessId, ByzState>,
    registry: BTreeMap<TxId, SignedTx>,
    registry_txs: Vec<Arc<Transaction>>,
    /// Highest configuration of a broadcast history, with that history.
    pivots: BTreeMap<Digest, (History, HistoryCert)>,
    forged: BTreeSet<(Digest, Vec<ProcessId>)>,
    pending: Vec<(ProcessId, Behavior)>,
    turn: u64,
    events: Vec<TraceEvent>,
    confs: BTreeMap<Digest, Vec<TxId>>,
    hists: BTreeMap<Digest, Vec<Digest>>,
    extra_txs: BTreeMap<TxId, Arc<Transaction>>,
    policy_hits: u32,
    salt: u64,
    stats: RunStats,
}

/// Runs `sc` with `seed` and returns its trace.
pub fn run(sc: &Scenario, seed: u64, opts: &SimOptions) -> RunOutcome {
    Sim::new(sc, seed, opts.clone()).run()
}

impl<'s> Sim<'s> {
    fn new(sc: &'s Scenario, seed: u64, opts: SimOptions) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net_rng = ChaCha8Rng::seed_from_u64(seed);
        net_rng.set_stream(1);
        let g = Transaction::genesis(sc.process_ids().into_iter().zip(sc.stake.iter().copied()));
        let genesis = Genesis::new(g.clone());
        let nodes = sc
            .process_ids()
            .into_iter()
            .map(|p| Node::new(p, &genesis, sc.mutation))
            .collect();
        let mut registry = BTreeMap::new();
        registry.insert(g.id(), genesis.signed_tx());
        let adv = CorruptionLedger::new(&genesis.conf);
        let mut sim = Sim {
            sc,
            seed,
            horizon: opts.horizon.unwrap_or(sc.horizon),
            opts,
            rng,
            net: Network::new(sc.process_ids(), sc.network, net_rng),
            oracle: FsOracle::new(),
            cache: VerifyCache::new(),
            nodes,
            adv,
            byz: BTreeMap::new(),
            registry,
            registry_txs: vec![g],
            pivots: BTreeMap::new(),
            forged: BTreeSet::new(),
            pending: Vec::new(),
            turn: 0,
            events: Vec::new(),
            confs: BTreeMap::new(),
            hists: BTreeMap::new(),
            extra_txs: BTreeMap::new(),
            policy_hits: 0,
            salt: 0,
            stats: RunStats::default(),
            genesis,
        };
        let gconf = sim.genesis.conf.clone();
        let ghist = sim.genesis.history.clone();
        sim.record_hist(&ghist);
        sim.pivots
            .insert(gconf.digest(), (ghist, HistoryCert::null()));
        sim
    }

    fn total(&self) -> Amount {
        self.genesis.total
    }

    fn is_correct(&self, p: ProcessId) -> bool {
        self.adv.is_correct(p)
    }

    fn push(&mut self, kind: EventKind) {
        self.events.push(TraceEvent {
            turn: self.turn,
            tick: self.net.now(),
            kind,
        });
    }

    fn record_conf(&mut self, c: &Configuration) -> Digest {
        let d = c.digest();
        if !self.confs.contains_key(&d) {
            for t in c.transactions() {
                if !self.registry.contains_key(&t.id()) {
                    self.extra_txs.entry(t.id()).or_insert_with(|| t.clone());
                }
            }
            self.confs.insert(d, c.ids().copied().collect());
        }
        d
    }

    fn record_hist(&mut self, h: &History) -> Digest {
        let d = h.digest();
        if !self.hists.contains_key(&d) {
            let mut ds = Vec::with_capacity(h.len());
            for c in h.configurations() {
                ds.push(self.record_conf(c));
            }
            self.hists.insert(d, ds);
        }
        d
    }

    fn register(&mut self, stx: &SignedTx) {
        if self.registry.insert(stx.tx.id(), stx.clone()).is_none() {
            self.registry_txs.push(stx.tx.clone());
        }
    }

    fn run(mut self) -> RunOutcome {
        self.schedule_workload();
        if let Some(p) = &self.sc.adversary.policy {
            self.net.schedule_timer(p.start + p.every, Timer::Policy);
        }
        for (i, e) in self.sc.adversary.script.iter().enumerate() {
            if let Some(at) = e.at {
                self.net.schedule_timer(at, Timer::Script(i));
            }
        }
        let total = self.total();
        loop {
            let adv = &self.adv;
            let Some((tick, ev)) = self.net.pop(|p| adv.is_correct(p), total) else {
                break;
            };
            if tick > self.horizon {
                break;
            }
            self.next_turn();
            self.handle(ev);
            self.run_pending();
        }
        self.finish()
    }

    fn next_turn(&mut self) {
        self.turn += 1;
        self.oracle.set_clock(self.turn);
    }

    fn schedule_workload(&mut self) {
        let w = &self.sc.workload;
        let payers: Vec<ProcessId> = match &w.payers {
            Some(ps) => ps.iter().map(|p| ProcessId(*p)).collect(),
            None => self.sc.process_ids(),
        };
        for _ in 0..w.transfers {
            let at = self.rng.gen_range(0..=w.window);
            let payer = *payers.choose(&mut self.rng).expect("payers are non-empty");
            self.net
                .schedule_timer(at, Timer::Transfer { payer, attempt: 0 });
        }
    }

    fn handle(&mut self, ev: Event<Message, Timer>) {
        match ev {
            Event::Deliver { from, to, msg } => {
                if self.opts.record_messages {
                    self.push(EventKind::Deliver {
                        from,
                        to,
                        msg: msg.kind().into(),
                    });
                }
                if self.is_correct(to) {
                    self.step(to, |n, env| n.on_message(from, msg, env));
                } else {
                    self.byz_deliver(to, from, msg);
                }
            }
            Event::WrbDeliver { id, from, to, msg } => {
                if self.is_correct(to) {
                    self.net.wrb_relay(id);
                    self.step(to, |n, env| n.on_wrb(from, &msg, env));
                } else if self.runs_honest_code(to) {
                    self.step(to, |n, env| n.on_wrb(from, &msg, env));
                }
            }
            Event::WurbDeliver { from, to, msg } => {
                if self.is_correct(to) || self.runs_honest_code(to) {
                    self.step(to, |n, env| n.on_wurb(from, &msg, env));
                }
            }
            Event::Timer(t) => self.on_timer(t),
        }
    }

    fn runs_honest_code(&self, p: ProcessId) -> bool {
        matches!(
            self.byz.get(&p).map(|b| b.behavior),
            Some(Behavior::SelectiveSilence | Behavior::DoubleSpend | Behavior::EquivocateHistories)
        )
    }

    fn step<F>(&mut self, p: ProcessId, f: F)
    where
        F: FnOnce(&mut Node, &mut Env<'_>),
    {
        let mut out = Vec::new();
        {
            let mut env = Env {
                tick: self.net.now(),
                oracle: &mut self.oracle,
                cache: &mut self.cache,
                genesis: &self.genesis,
                out: &mut out,
            };
            f(&mut self.nodes[p.0 as usize], &mut env);
        }
        self.apply(p, out);
    }

    /// Selective silence mutes a process towards the even-numbered others.
    fn muted(&self, from: ProcessId, to: ProcessId) -> bool {
        from != to
            && to.0 % 2 == 0
            && matches!(
                self.byz.get(&from).map(|b| b.behavior),
                Some(Behavior::SelectiveSilence)
            )
    }

    fn send(&mut self, from: ProcessId, to: ProcessId, msg: Arc<Message>) {
        if self.muted(from, to) {
            return;
        }
        if self.opts.record_messages {
            self.push(EventKind::Send {
                from,
                to,
                msg: msg.kind().into(),
            });
        }
        self.net.send(from, to, msg);
    }

    fn apply(&mut self, p: ProcessId, out: Vec<Output>) {
        for o in out {
            match o {
                Output::Send { to, msg } => self.send(p, to, msg),
                Output::Multicast { to, msg } => {
                    for q in to {
                        self.send(p, q, msg.clone());
                    }
                }
                Output::Wrb { msg } => {
                    if self.is_correct(p) {
                        if let Message::NewHistory { history, cert } = &*msg {
                            if let Ok(c) = history.highest() {
                                self.pivots
                                    .entry(c.digest())
                                    .or_insert_with(|| (history.clone(), cert.clone()));
                            }
                        }
                    }
                    let targets: Vec<ProcessId> = self
                        .sc
                        .process_ids()
                        .into_iter()
                        .filter(|q| !self.muted(p, *q))
                        .collect();
                    self.net.wrb_broadcast(p, msg, Some(&targets));
                }
                Output::Wurb { msg, tag } => self.net.wurb_broadcast(p, msg, tag),
                Output::Event(e) => self.node_event(p, e),
            }
        }
    }

    fn node_event(&mut self, p: ProcessId, e: NodeEvent) {
        let correct = self.is_correct(p);
        let kind = match e {
            NodeEvent::Transfer { tx } => EventKind::Transfer { process: p, tx },
            NodeEvent::TransferComplete { tx, short_circuit } => {
                if correct {
                    self.stats.completed += 1;
                }
                EventKind::TransferComplete {
                    process: p,
                    tx,
                    short_circuit,
                }
            }
            NodeEvent::NewHistory { history } => {
                let d = self.record_hist(&history);
                if correct {
                    self.adv.on_new_history(&history);
                } else if self.byz.get(&p).is_some_and(|b| b.behavior == Behavior::EquivocateHistories) {
                    self.equivocate(p);
                }
                EventKind::NewHistory {
                    process: p,
                    history: d,
                }
            }
            NodeEvent::Installed { conf } => {
                let d = self.record_conf(&conf);
                self.push(EventKind::Installed {
                    process: p,
                    conf: d,
                });
                if correct {
                    let gone = self.adv.on_installed(&conf);
                    for c in gone {
                        self.on_supersede(&c);
                    }
                    self.stale_sign();
                }
                return;
            }
            NodeEvent::Output {
                stage,
                digest,
                verified,
            } => EventKind::Output {
                process: p,
                stage,
                digest,
                verified,
            },
            NodeEvent::Restart { stage } => EventKind::Restart { process: p, stage },
        };
        self.push(kind);
    }

    fn on_supersede(&mut self, c: &Configuration) {
        for e in &self.sc.adversary.script {
            if e.trigger != Some(Trigger::OnSupersede) {
                continue;
            }
            match e.target {
                Target::Process(n) => self.pending.push((ProcessId(n), e.behavior)),
                Target::Named(NamedTarget::Members) => {
                    for q in c.members() {
                        self.pending.push((q, e.behavior));
                    }
                }
                Target::Named(NamedTarget::Richest) => {
                    if let Some(q) = self.by_stake().first() {
                        self.pending.push((*q, e.behavior));
                    }
                }
            }
        }
    }

    /// Correct processes, richest first in the highest installed configuration.
    fn by_stake(&self) -> Vec<ProcessId> {
        let conf = self
            .adv
            .max_installed()
            .cloned()
            .unwrap_or_else(|| self.genesis.conf.clone());
        let mut ps: Vec<ProcessId> = self
            .sc
            .process_ids()
            .into_iter()
            .filter(|p| self.is_correct(*p))
            .collect();
        ps.sort_by_key(|p| (std::cmp::Reverse(conf.stake(*p)), *p));
        ps
    }

    fn on_timer(&mut self, t: Timer) {
        match t {
            Timer::Transfer { payer, attempt } => self.transfer(payer, attempt),
            Timer::Policy => {
                let Some(policy) = self.sc.adversary.policy.clone() else {
                    return;
                };
                if policy.max.is_some_and(|m| self.policy_hits >= m) {
                    return;
                }
                let behavior = policy.behaviors[self.policy_hits as usize % policy.behaviors.len()];
                let ranked = self.by_stake();
                let total = self.total();
                let pick = ranked.iter().copied().find(|p| {
                    self.adv.exact_ok(*p, total).is_ok()
                        && self.adv.projected_ok(*p, self.registry_txs.iter(), total).is_ok()
                });
                match pick {
                    Some(p) => {
                        self.policy_hits += 1;
                        self.pending.push((p, behavior));
                    }
                    // record why the richest one was refused
                    None => {
                        if let Some(p) = ranked.first() {
                            self.pending.push((*p, behavior));
                        }
                    }
                }
                let at = self.net.now() + policy.every;
                self.net.schedule_timer(at, Timer::Policy);
            }
            Timer::Script(i) => {
                let e = self.sc.adversary.script[i].clone();
                let target = match e.target {
                    Target::Process(n) => Some(ProcessId(n)),
                    Target::Named(NamedTarget::Richest) => self.by_stake().first().copied(),
                    Target::Named(NamedTarget::Members) => None,
                };
                if let Some(p) = target {
                    self.pending.push((p, e.behavior));
                }
            }
            Timer::Byz { p, attempt } => self.double_spend(p, attempt),
        }
    }

    fn transfer(&mut self, payer: ProcessId, attempt: u32) {
        let w = &self.sc.workload;
        let payer = if self.is_correct(payer) {
            payer
        } else {
            // the payer went Byzantine: hand the transfer to a correct one
            let correct: Vec<ProcessId> = match &w.payers {
                Some(ps) => ps.iter().map(|p| ProcessId(*p)).collect(),
                None => self.sc.process_ids(),
            }
            .into_iter()
            .filter(|p| self.adv.is_correct(*p))
            .collect();
            match correct.choose(&mut self.rng) {
                Some(p) => *p,
                None => {
                    self.stats.abandoned += 1;
                    return;
                }
            }
        };
        let node = &self.nodes[payer.0 as usize];
        let deps = node.unspent();
        if node.is_busy() || deps.is_empty() {
            if attempt + 1 < w.max_attempts {
                let at = self.net.now() + w.retry;
                self.net.schedule_timer(
                    at,
                    Timer::Transfer {
                        payer,
                        attempt: attempt + 1,
                    },
                );
            } else {
                self.stats.abandoned += 1;
            }
            return;
        }
        let recipients: Vec<ProcessId> = match &w.recipients {
            Some(rs) => rs.iter().map(|r| ProcessId(*r)).collect(),
            None => self.sc.process_ids(),
        }
        .into_iter()
        .filter(|r| *r != payer && self.is_correct(*r))
        .collect();
        let Some(&to) = recipients.choose(&mut self.rng) else {
            self.stats.abandoned += 1;
            return;
        };
        let value: Amount = deps.iter().map(|d| d.amount_to(payer)).sum();
        let amount = match w.amount {
            AmountPolicy::All => value,
            AmountPolicy::Random => self.rng.gen_range(1..=value),
        };
        let mut tau = vec![(to, amount)];
        if value > amount {
            tau.push((payer, value - amount));
        }
        let tx = Transaction::new(payer, tau, deps);
        let cert = self
            .oracle
            .sign_tx(payer, &tx)
            .expect("owner signs its own transaction");
        let stx = SignedTx::new(tx, cert);
        self.register(&stx);
        self.stats.transfers += 1;
        self.step(payer, |n, env| n.transfer(stx, env));
    }

    fn run_pending(&mut self) {
        while !self.pending.is_empty() {
            let batch = std::mem::take(&mut self.pending);
            for (p, behavior) in batch {
                if !self.is_correct(p) {
                    continue;
                }
                self.next_turn();
                let total = self.total();
                let tick = self.net.now();
                let res = self
                    .adv
                    .try_corrupt(p, tick, behavior, self.registry_txs.iter(), total);
                let accepted = res.is_ok();
                self.push(EventKind::Corrupt {
                    process: p,
                    accepted,
                    behavior: behavior.name().into(),
                    reason: res.err().map(|r| r.reason()).unwrap_or_default(),
                });
                if accepted {
                    self.stats.corruptions += 1;
                    self.corrupt(p, behavior);
                } else {
                    self.stats.rejections += 1;
                }
            }
        }
    }

    fn corrupt(&mut self, p: ProcessId, behavior: Behavior) {
        self.oracle.mark_corrupted(p);
        self.byz.insert(
            p,
            ByzState {
                behavior,
                buffer: VecDeque::new(),
                budget: match behavior {
                    Behavior::Replay => REPLAY_BUDGET,
                    Behavior::EquivocateHistories => EQUIVOCATIONS,
                    _ => 0,
                },
            },
        );
        match behavior {
            Behavior::DoubleSpend => {
                let at = self.net.now();
                self.net.schedule_timer(at, Timer::Byz { p, attempt: 0 });
            }
            Behavior::EquivocateHistories => self.equivocate(p),
            _ => {}
        }
        self.stale_sign();
    }

    fn byz_deliver(&mut self, p: ProcessId, from: ProcessId, msg: Arc<Message>) {
        let Some(b) = self.byz.get_mut(&p) else { return };
        match b.behavior {
            Behavior::DropAll | Behavior::StaleSign => {}
            Behavior::Replay => {
                if b.buffer.len() == REPLAY_BUFFER {
                    b.buffer.pop_front();
                }
                b.buffer.push_back(msg);
                if b.budget == 0 {
                    return;
                }
                b.budget -= 1;
                let i = self.rng.gen_range(0..b.buffer.len());
                let m = b.buffer[i].clone();
                let n = self.sc.processes;
                let to = ProcessId(self.rng.gen_range(0..n));
                self.send(p, to, m);
            }
            Behavior::SelectiveSilence | Behavior::DoubleSpend | Behavior::EquivocateHistories => {
                self.step(p, |n, env| n.on_message(from, msg, env));
            }
        }
    }

    /// Two conflicting spends: one through the honest pipeline, one pushed
    /// straight at the validators.
    fn double_spend(&mut self, p: ProcessId, attempt: u32) {
        let node = &self.nodes[p.0 as usize];
        let deps = node.unspent();
        if node.is_busy() || deps.is_empty() {
            if attempt + 1 < BYZ_ATTEMPTS {
                let at = self.net.now() + self.sc.workload.retry;
                self.net.schedule_timer(
                    at,
                    Timer::Byz {
                        p,
                        attempt: attempt + 1,
                    },
                );
            }
            return;
        }
        let mut others: Vec<ProcessId> = self
            .sc
            .process_ids()
            .into_iter()
            .filter(|q| *q != p && self.is_correct(*q))
            .collect();
        others.shuffle(&mut self.rng);
        if others.len() < 2 {
            return;
        }
        let Some([a, b]) = adversary::double_spend(&mut self.oracle, p, &deps, [others[0], others[1]])
        else {
            return;
        };
        self.register(&a);
        self.register(&b);
        let conf = self.nodes[p.0 as usize].highest().clone();
        self.step(p, |n, env| n.transfer(a, env));
        let msg = Arc::new(Message::ValidateReq {
            txs: TxSet::single(b),
            sn: 0,
            conf: conf.clone(),
        });
        for q in conf.members() {
            self.send(p, q, msg.clone());
        }
    }

    /// Certificate-invalid extensions of the current history, a different
    /// one to each half of the system.
    fn equivocate(&mut self, p: ProcessId) {
        let Some(b) = self.byz.get_mut(&p) else { return };
        if b.budget == 0 {
            return;
        }
        b.budget -= 1;
        let node = &self.nodes[p.0 as usize];
        let h = node.history().clone();
        let cert = node.hist_cert().clone();
        let c = node.highest().clone();
        let others: Vec<ProcessId> = self.sc.process_ids().into_iter().filter(|q| *q != p).collect();
        let (left, right) = others.split_at(others.len() / 2);
        for half in [left, right] {
            self.salt += 1;
            let (fake, _) = adversary::fake_extension(&c, p, self.salt);
            let forged = h.join(&History::singleton(fake));
            let msg = Arc::new(Message::NewHistory {
                history: forged,
                cert: cert.clone(),
            });
            self.net.wrb_broadcast(p, msg, Some(half));
        }
    }

    /// The corrupted processes pool their keys and try to certify a fork
    /// of every superseded pivotal configuration at its own height.
    fn stale_sign(&mut self) {
        if !self.byz.values().any(|b| b.behavior == Behavior::StaleSign) {
            return;
        }
        let Some(top) = self.adv.max_installed().cloned() else {
            return;
        };
        let coalition: Vec<ProcessId> = self.byz.keys().copied().collect();
        let targets: Vec<(Digest, History, HistoryCert)> = self
            .pivots
            .iter()
            .filter(|(d, _)| !self.forged.contains(&(**d, coalition.clone())))
            .filter_map(|(d, (h, cert))| {
                let c = h.highest().ok()?;
                c.is_strict_subset(&top).then(|| (*d, h.clone(), cert.clone()))
            })
            .collect();
        for (d, h, cert) in targets {
            self.forged.insert((d, coalition.clone()));
            self.salt += 1;
            let Some(f) = adversary::forge_history(&mut self.oracle, &h, &cert, &coalition, self.salt)
            else {
                continue;
            };
            let accepted =
                Verifier::new(&self.oracle, &self.genesis, &mut self.cache).verify_history(&f.history, &f.cert);
            let conf = h.highest().expect("pivot histories are chains").clone();
            let conf = self.record_conf(&conf);
            self.push(EventKind::Forgery {
                conf,
                height: f.height,
                coalition: coalition.clone(),
                signatures: f.signatures,
                accepted,
            });
            if accepted {
                self.record_hist(&f.history);
                let msg = Arc::new(Message::NewHistory {
                    history: f.history,
                    cert: f.cert,
                });
                self.net.wrb_broadcast(coalition[0], msg, None);
            }
        }
    }

    fn finish(mut self) -> RunOutcome {
        let mut finals = Vec::new();
        for i in 0..self.nodes.len() {
            let t_p = self.nodes[i].t_p().clone();
            let d = self.record_conf(&t_p);
            let p = self.nodes[i].id();
            finals.push(FinalState {
                process: p,
                correct: self.is_correct(p),
                t_p: d,
                busy: self.nodes[i].is_busy(),
            });
            self.stats.restarts += self.nodes[i].restarts();
        }
        let obs = std::mem::take(&mut self.cache.observed);
        let mut observed = Vec::new();
        for c in obs.tx_sets.values() {
            observed.push(Observation {
                stage: Stage::TxVal,
                digest: self.record_conf(c),
            });
        }
        for c in obs.configurations.values() {
            observed.push(Observation {
                stage: Stage::ConfigLa,
                digest: self.record_conf(c),
            });
        }
        for h in obs.histories.values() {
            observed.push(Observation {
                stage: Stage::HistLa,
                digest: self.record_hist(h),
            });
        }
        let mut txs = BTreeMap::new();
        for stx in self.registry.values() {
            let ok = self.oracle.verify_sender(&stx.tx, &stx.cert)
                && (stx.tx.is_genesis() || stx.tx.is_valid());
            txs.insert(stx.tx.id(), tx_record(&stx.tx, ok));
        }
        for t in self.extra_txs.values() {
            txs.entry(t.id()).or_insert_with(|| tx_record(t, false));
        }
        let (hits, misses) = self.cache.stats();
        self.stats.cache_hits = hits;
        self.stats.cache_misses = misses;
        self.stats.turns = self.turn;
        let meta = TraceMeta {
            scenario: self.sc.name.clone(),
            seed: self.seed,
            processes: self.sc.processes,
            total: self.genesis.total,
            genesis: self.genesis.tx.id(),
            horizon: self.horizon,
            fairness_bound: self.sc.network.max,
            end_tick: self.net.now(),
            mutation: self.sc.mutation,
            net: self.net.stats(),
        };
        let trace = RunTrace {
            meta,
            txs,
            confs: self.confs,
            hists: self.hists,
            events: self.events,
            key_log: self.oracle.key_log().to_vec(),
            refusals: self.oracle.refusals().to_vec(),
            observed,
            finals,
        };
        RunOutcome {
            trace,
            stats: self.stats,
        }
    }
}

fn tx_record(t: &Transaction, cert_valid: bool) -> TxRecord {
    TxRecord {
        id: t.id(),
        owner: t.owner(),
        tau: t.tau().iter().map(|(p, a)| (*p, *a)).collect(),
        deps: t.dep_ids().copied().collect(),
        cert_valid,
    }
}

/// Runs and checks one seed.
pub fn run_checked(sc: &Scenario, seed: u64, opts: &SimOptions, checks: &[Check]) -> (RunOutcome, Report) {
    let out = run(sc, seed, opts);
    let report = check_trace(&out.trace, checks);
    (out, report)
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct FuzzSummary {
    pub runs: u64,
    pub failures: Vec<u64>,
    pub first_failure: Option<Report>,
    /// Per-check failure counts.
    pub by_check: BTreeMap<String, u64>,
}

impl FuzzSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every seed in `seeds` in parallel and aggregates the verdicts.
pub fn fuzz(sc: &Scenario, seeds: std::ops::Range<u64>, checks: &[Check]) -> FuzzSummary {
    use rayon::prelude::*;
    let opts = SimOptions::default();
    let reports: Vec<Report> = seeds
        .into_par_iter()
        .map(|s| run_checked(sc, s, &opts, checks).1)
        .collect();
    let mut sum = FuzzSummary {
        runs: reports.len() as u64,
        ..FuzzSummary::default()
    };
    for r in reports {
        if r.passed() {
            continue;
        }
        for v in r.failures() {
            *sum.by_check.entry(v.check.name().to_string()).or_default() += 1;
        }
        sum.failures.push(r.seed);
        if sum.first_failure.is_none() {
            sum.first_failure = Some(r);
        }
    }
    sum
}
