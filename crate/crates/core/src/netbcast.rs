//! Simulated asynchronous network: point-to-point channels, weak reliable
//! broadcast (WRB) and weak uniform reliable broadcast (WURB).
//!
//! Everything runs off one event queue ordered by `(tick, seq)`. Delays are
//! drawn uniformly from `[min, max]` with a seeded generator, so `max` is
//! also the fairness bound: an envelope between correct processes is
//! delivered at most `max` ticks after it was sent.
//!
//! Gossip is bookkeeping rather than traffic. A WRB message is handed to
//! every target once; when a correct process delivers it, every process that
//! has not been scheduled yet is scheduled, which is all the propagation
//! property asks for. A WURB message is released at a process only after the
//! correct processes holding more than two thirds of the tag configuration's
//! stake have received it.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::{Amount, Configuration, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub min: u64,
    pub max: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel { min: 1, max: 10 }
    }
}

#[derive(Debug)]
pub enum Event<M, T> {
    Deliver {
        from: ProcessId,
        to: ProcessId,
        msg: Arc<M>,
    },
    WrbDeliver {
        id: usize,
        from: ProcessId,
        to: ProcessId,
        msg: Arc<M>,
    },
    WurbDeliver {
        from: ProcessId,
        to: ProcessId,
        msg: Arc<M>,
    },
    Timer(T),
}

enum Item<M, T> {
    Direct {
        from: ProcessId,
        to: ProcessId,
        msg: Arc<M>,
    },
    Wrb {
        id: usize,
        to: ProcessId,
    },
    Wurb {
        id: usize,
        to: ProcessId,
    },
    Timer(T),
}

struct WrbRecord<M> {
    origin: ProcessId,
    msg: Arc<M>,
    scheduled: BTreeSet<ProcessId>,
    delivered: BTreeSet<ProcessId>,
}

struct WurbRecord<M> {
    origin: ProcessId,
    msg: Arc<M>,
    tag: Configuration,
    scheduled: BTreeSet<ProcessId>,
    acked: BTreeSet<ProcessId>,
    waiting: Vec<ProcessId>,
    released: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub wrb: u64,
    pub wurb: u64,
}

pub struct Network<M, T> {
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    items: HashMap<u64, Item<M, T>>,
    ready: VecDeque<Event<M, T>>,
    next_seq: u64,
    now: u64,
    rng: ChaCha8Rng,
    delay: DelayModel,
    processes: Vec<ProcessId>,
    wrb: Vec<WrbRecord<M>>,
    wurb: Vec<WurbRecord<M>>,
    stats: NetStats,
}

impl<M, T> Network<M, T> {
    pub fn new(processes: Vec<ProcessId>, delay: DelayModel, rng: ChaCha8Rng) -> Self {
        assert!(delay.min <= delay.max, "delay bounds out of order");
        Network {
            queue: BinaryHeap::new(),
            items: HashMap::new(),
            ready: VecDeque::new(),
            next_seq: 0,
            now: 0,
            rng,
            delay,
            processes,
            wrb: Vec::new(),
            wurb: Vec::new(),
            stats: NetStats::default(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn processes(&self) -> &[ProcessId] {
        &self.processes
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.ready.is_empty()
    }

    fn push(&mut self, at: u64, item: Item<M, T>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.items.insert(seq, item);
    }

    fn delay(&mut self) -> u64 {
        self.rng.gen_range(self.delay.min..=self.delay.max)
    }

    pub fn schedule_timer(&mut self, at: u64, timer: T) {
        self.push(at.max(self.now), Item::Timer(timer));
    }

    pub fn send(&mut self, from: ProcessId, to: ProcessId, msg: Arc<M>) {
        let at = self.now + self.delay();
        self.stats.sent += 1;
        self.push(at, Item::Direct { from, to, msg });
    }

    /// WRB-broadcast. `targets` restricts the initial hand-off, which only a
    /// faulty broadcaster would do.
    pub fn wrb_broadcast(&mut self, from: ProcessId, msg: Arc<M>, targets: Option<&[ProcessId]>) {
        self.stats.wrb += 1;
        let id = self.wrb.len();
        let targets: Vec<ProcessId> = targets.map_or_else(|| self.processes.clone(), |t| t.to_vec());
        self.wrb.push(WrbRecord {
            origin: from,
            msg,
            scheduled: BTreeSet::new(),
            delivered: BTreeSet::new(),
        });
        for to in targets {
            self.schedule_wrb(id, to);
        }
    }

    fn schedule_wrb(&mut self, id: usize, to: ProcessId) {
        if self.wrb[id].scheduled.insert(to) {
            let at = self.now + self.delay();
            self.push(at, Item::Wrb { id, to });
        }
    }

    /// Gossip step after a correct process delivered WRB message `id`.
    pub fn wrb_relay(&mut self, id: usize) {
        let all = self.processes.clone();
        for to in all {
            self.schedule_wrb(id, to);
        }
    }

    pub fn wurb_broadcast(&mut self, from: ProcessId, msg: Arc<M>, tag: Configuration) {
        self.stats.wurb += 1;
        let id = self.wurb.len();
        self.wurb.push(WurbRecord {
            origin: from,
            msg,
            tag,
            scheduled: BTreeSet::new(),
            acked: BTreeSet::new(),
            waiting: Vec::new(),
            released: false,
        });
        let all = self.processes.clone();
        for to in all {
            self.schedule_wurb(id, to);
        }
    }

    fn schedule_wurb(&mut self, id: usize, to: ProcessId) {
        if self.wurb[id].scheduled.insert(to) {
            let at = self.now + self.delay();
            self.push(at, Item::Wurb { id, to });
        }
    }

    /// Next event in `(tick, seq)` order. `is_correct` decides whose receipt
    /// counts towards a WURB quorum; `total` is the system's stake.
    pub fn pop<F>(&mut self, is_correct: F, total: Amount) -> Option<(u64, Event<M, T>)>
    where
        F: Fn(ProcessId) -> bool,
    {
        loop {
            if let Some(e) = self.ready.pop_front() {
                return Some((self.now, e));
            }
            let Reverse((at, seq)) = self.queue.pop()?;
            self.now = at;
            let item = self.items.remove(&seq).expect("queued item is stored");
            match item {
                Item::Timer(t) => return Some((at, Event::Timer(t))),
                Item::Direct { from, to, msg } => {
                    self.stats.delivered += 1;
                    return Some((at, Event::Deliver { from, to, msg }));
                }
                Item::Wrb { id, to } => {
                    let rec = &mut self.wrb[id];
                    if rec.delivered.insert(to) {
                        self.stats.delivered += 1;
                        return Some((
                            at,
                            Event::WrbDeliver {
                                id,
                                from: rec.origin,
                                to,
                                msg: rec.msg.clone(),
                            },
                        ));
                    }
                }
                Item::Wurb { id, to } => {
                    let rec = &mut self.wurb[id];
                    if is_correct(to) {
                        rec.acked.insert(to);
                    }
                    rec.waiting.push(to);
                    if !rec.released && rec.tag.is_quorum(rec.acked.iter(), total) {
                        rec.released = true;
                    }
                    if rec.released {
                        for q in std::mem::take(&mut rec.waiting) {
                            self.stats.delivered += 1;
                            self.ready.push_back(Event::WurbDeliver {
                                from: rec.origin,
                                to: q,
                                msg: rec.msg.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Transaction;
    use rand::SeedableRng;

    fn procs(n: u32) -> Vec<ProcessId> {
        (0..n).map(ProcessId).collect()
    }

    fn drain(net: &mut Network<u32, ()>, correct: &[ProcessId]) -> Vec<(u64, Event<u32, ()>)> {
        let mut out = Vec::new();
        while let Some(e) = net.pop(|p| correct.contains(&p), 9) {
            out.push(e);
        }
        out
    }

    #[test]
    fn point_to_point_within_bounds() {
        let mut net: Network<u32, ()> =
            Network::new(procs(2), DelayModel { min: 2, max: 5 }, ChaCha8Rng::seed_from_u64(1));
        for i in 0..50 {
            net.send(ProcessId(0), ProcessId(1), Arc::new(i));
        }
        net.send(ProcessId(1), ProcessId(1), Arc::new(99));
        let evs = drain(&mut net, &procs(2));
        assert_eq!(evs.len(), 51);
        let mut got: Vec<u32> = Vec::new();
        for (at, e) in evs {
            assert!((2..=5).contains(&at));
            if let Event::Deliver { msg, .. } = e {
                got.push(*msg);
            }
        }
        got.sort();
        assert_eq!(got.len(), 51);
        assert_eq!(got[50], 99);
    }

    #[test]
    fn wrb_relay_reaches_everyone_once() {
        let mut net: Network<u32, ()> =
            Network::new(procs(4), DelayModel::default(), ChaCha8Rng::seed_from_u64(2));
        // a faulty broadcaster hands the message to one process only
        net.wrb_broadcast(ProcessId(3), Arc::new(7), Some(&[ProcessId(0)]));
        let mut delivered = Vec::new();
        while let Some((_, e)) = net.pop(|_| true, 9) {
            if let Event::WrbDeliver { id, to, from, .. } = e {
                assert_eq!(from, ProcessId(3));
                delivered.push(to);
                net.wrb_relay(id);
            }
        }
        delivered.sort();
        assert_eq!(delivered, procs(4));
    }

    #[test]
    fn wurb_waits_for_quorum_of_tag() {
        // stakes 4, 3, 2: {p0, p1} is the only quorum among pairs
        let g = Transaction::genesis([(ProcessId(0), 4), (ProcessId(1), 3), (ProcessId(2), 2)]);
        let conf = Configuration::new([g]);
        let mut net: Network<u32, ()> =
            Network::new(procs(3), DelayModel::default(), ChaCha8Rng::seed_from_u64(3));
        net.wurb_broadcast(ProcessId(0), Arc::new(1), conf.clone());
        // p1 never acknowledges: {p0, p2} hold 6 of 9, not a quorum
        let evs = drain(&mut net, &[ProcessId(0), ProcessId(2)]);
        assert!(evs.is_empty());

        let mut net: Network<u32, ()> =
            Network::new(procs(3), DelayModel::default(), ChaCha8Rng::seed_from_u64(3));
        net.wurb_broadcast(ProcessId(0), Arc::new(1), conf);
        let evs = drain(&mut net, &procs(3));
        assert_eq!(evs.len(), 3);
    }

    #[test]
    fn same_seed_same_schedule() {
        let run = |seed| {
            let mut net: Network<u32, ()> =
                Network::new(procs(3), DelayModel::default(), ChaCha8Rng::seed_from_u64(seed));
            for i in 0..20 {
                net.send(ProcessId(i % 3), ProcessId((i + 1) % 3), Arc::new(i));
            }
            drain(&mut net, &procs(3))
                .into_iter()
                .map(|(t, e)| match e {
                    Event::Deliver { msg, .. } => (t, *msg),
                    _ => unreachable!(),
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
