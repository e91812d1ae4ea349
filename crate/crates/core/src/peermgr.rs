//! Connection slots, the outbound fill policy and inbound acceptance.
//!
//! Each fill with `n` free outbound slots asks the table for `n / 2`
//! candidates and takes the remaining `n - n / 2` from the front of the
//! lookup buffer, refilling the buffer by one lookup when it runs dry.
//! Dials in flight hold their slot until they succeed or fail.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::Ipv4Addr;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ident::{NodeId, NodeRecord};
use crate::table::{DiscoveryTable, ReadMode};

pub const DEFAULT_MAX_PEERS: usize = 25;
pub const DEFAULT_THROTTLE_WINDOW: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub max_peers: usize,
    pub outbound_slots: usize,
    pub inbound_slots: usize,
}

impl SlotConfig {
    pub fn new(max_peers: usize) -> Self {
        let outbound_slots = max_peers / 3;
        SlotConfig {
            max_peers,
            outbound_slots,
            inbound_slots: max_peers - outbound_slots,
        }
    }
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_PEERS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inbound,
    Outbound,
}

/// Which mechanism produced a connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Table,
    Buffer,
    Inbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub peer: NodeRecord,
    pub direction: Direction,
    pub provenance: Provenance,
    pub established_at: Duration,
    pub scheduled_end: Option<Duration>,
}

/// Live connections keyed by peer id. A peer is connected at most once.
#[derive(Debug, Clone, Default)]
pub struct ConnectionSet {
    conns: BTreeMap<NodeId, Connection>,
    inbound: usize,
    outbound: usize,
}

impl ConnectionSet {
    pub fn get(&self, id: &NodeId) -> Option<&Connection> {
        self.conns.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.conns.contains_key(id)
    }

    pub fn count(&self, dir: Direction) -> usize {
        match dir {
            Direction::Inbound => self.inbound,
            Direction::Outbound => self.outbound,
        }
    }

    pub fn len(&self) -> usize {
        self.conns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Connection> {
        self.conns.values()
    }

    fn insert(&mut self, c: Connection) {
        match c.direction {
            Direction::Inbound => self.inbound += 1,
            Direction::Outbound => self.outbound += 1,
        }
        self.conns.insert(c.peer.id, c);
    }

    fn remove(&mut self, id: &NodeId) -> Option<Connection> {
        let c = self.conns.remove(id)?;
        match c.direction {
            Direction::Inbound => self.inbound -= 1,
            Direction::Outbound => self.outbound -= 1,
        }
        Some(c)
    }
}

/// Results of the last lookup, closest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupBuffer {
    queue: VecDeque<NodeRecord>,
}

impl LookupBuffer {
    pub fn refill(&mut self, nodes: impl IntoIterator<Item = NodeRecord>) {
        self.queue.clear();
        self.queue.extend(nodes);
    }

    pub fn pop(&mut self) -> Option<NodeRecord> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeRecord> {
        self.queue.iter()
    }
}

/// Per-IP inbound rate limit. `window: None` disables it.
#[derive(Debug, Clone, Default)]
pub struct InboundThrottle {
    window: Option<Duration>,
    last_attempt: HashMap<Ipv4Addr, Duration>,
}

impl InboundThrottle {
    pub fn new(window: Option<Duration>) -> Self {
        InboundThrottle {
            window,
            last_attempt: HashMap::new(),
        }
    }

    pub fn window(&self) -> Option<Duration> {
        self.window
    }

    /// Passes and records the attempt, or reports when the IP may retry.
    fn check(&mut self, ip: Ipv4Addr, now: Duration) -> Result<(), Duration> {
        let Some(window) = self.window else {
            return Ok(());
        };
        if let Some(&last) = self.last_attempt.get(&ip) {
            if now < last + window {
                return Err(last + window);
            }
        }
        self.last_attempt.insert(ip, now);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InboundDecision {
    Accepted,
    RejectedFull,
    /// Carries the earliest time the IP passes the throttle.
    RejectedThrottled {
        retry_at: Duration,
    },
    /// The peer already holds a connection in either direction.
    RejectedDuplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dial {
    pub peer: NodeRecord,
    pub provenance: Provenance,
    /// Started only after the lookup that produced it completes.
    pub after_lookup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressReason {
    SelfDial,
    Connected,
    Pending,
    Repeated,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FillPlan {
    pub free: usize,
    pub table_quota: usize,
    pub buffer_quota: usize,
    pub table_selected: usize,
    pub buffer_selected: usize,
    pub dials: Vec<Dial>,
    pub suppressed: Vec<(NodeRecord, Provenance, SuppressReason)>,
    pub lookup_triggered: bool,
}

#[derive(Debug, Clone)]
pub struct PeerManager {
    local_id: NodeId,
    slots: SlotConfig,
    conns: ConnectionSet,
    pending: BTreeMap<NodeId, Dial>,
    buffer: LookupBuffer,
    throttle: InboundThrottle,
}

impl PeerManager {
    pub fn new(local_id: NodeId, slots: SlotConfig, throttle_window: Option<Duration>) -> Self {
        PeerManager {
            local_id,
            slots,
            conns: ConnectionSet::default(),
            pending: BTreeMap::new(),
            buffer: LookupBuffer::default(),
            throttle: InboundThrottle::new(throttle_window),
        }
    }

    pub fn slots(&self) -> SlotConfig {
        self.slots
    }

    pub fn connections(&self) -> &ConnectionSet {
        &self.conns
    }

    pub fn buffer(&self) -> &LookupBuffer {
        &self.buffer
    }

    pub fn pending(&self) -> impl Iterator<Item = &Dial> {
        self.pending.values()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn free_outbound(&self) -> usize {
        self.slots
            .outbound_slots
            .saturating_sub(self.conns.count(Direction::Outbound) + self.pending.len())
    }

    pub fn free_inbound(&self) -> usize {
        self.slots.inbound_slots - self.conns.count(Direction::Inbound)
    }

    fn suppress_reason(&self, peer: &NodeRecord, planned: &[Dial]) -> Option<SuppressReason> {
        if peer.id == self.local_id {
            Some(SuppressReason::SelfDial)
        } else if self.conns.contains(&peer.id) {
            Some(SuppressReason::Connected)
        } else if self.pending.contains_key(&peer.id) {
            Some(SuppressReason::Pending)
        } else if planned.iter().any(|d| d.peer.id == peer.id) {
            Some(SuppressReason::Repeated)
        } else {
            None
        }
    }

    /// Fill free outbound slots. `lookup` runs a lookup to a fresh random
    /// target and returns its result list; it is called at most once.
    ///
    /// Every selected candidate consumes its source's quota, including
    /// candidates suppressed as self, connected, pending or repeated.
    pub fn fill_outbound<R, L>(
        &mut self,
        table: &DiscoveryTable,
        rng: &mut R,
        mode: ReadMode,
        mut lookup: L,
    ) -> FillPlan
    where
        R: Rng + ?Sized,
        L: FnMut(&mut R) -> Vec<NodeRecord>,
    {
        let free = self.free_outbound();
        let table_quota = free / 2;
        let buffer_quota = free - table_quota;
        let mut plan = FillPlan {
            free,
            table_quota,
            buffer_quota,
            ..FillPlan::default()
        };
        if free == 0 {
            return plan;
        }

        let mut selected: Vec<(NodeRecord, Provenance, bool)> = Vec::with_capacity(free);
        for rec in table.read_random_nodes(table_quota, rng, mode) {
            selected.push((rec, Provenance::Table, false));
        }
        plan.table_selected = selected.len();

        let mut refilled = false;
        while plan.buffer_selected < buffer_quota {
            match self.buffer.pop() {
                Some(rec) => {
                    selected.push((rec, Provenance::Buffer, refilled));
                    plan.buffer_selected += 1;
                }
                None if !refilled => {
                    refilled = true;
                    plan.lookup_triggered = true;
                    let nodes = lookup(rng);
                    self.buffer.refill(nodes);
                }
                None => break,
            }
        }

        for (peer, provenance, after_lookup) in selected {
            match self.suppress_reason(&peer, &plan.dials) {
                Some(reason) => plan.suppressed.push((peer, provenance, reason)),
                None => plan.dials.push(Dial {
                    peer,
                    provenance,
                    after_lookup,
                }),
            }
        }
        for d in &plan.dials {
            self.pending.insert(d.peer.id, *d);
        }
        plan
    }

    /// Complete a pending dial. Returns the new connection, or `None` when
    /// the dial is unknown or the peer connected inbound in the meantime.
    pub fn dial_succeeded(
        &mut self,
        peer: &NodeId,
        now: Duration,
        scheduled_end: Option<Duration>,
    ) -> Option<Connection> {
        let dial = self.pending.remove(peer)?;
        if self.conns.contains(peer) {
            return None;
        }
        let c = Connection {
            peer: dial.peer,
            direction: Direction::Outbound,
            provenance: dial.provenance,
            established_at: now,
            scheduled_end,
        };
        self.conns.insert(c);
        Some(c)
    }

    /// Drop a pending dial; returns it when it existed.
    pub fn dial_failed(&mut self, peer: &NodeId) -> Option<Dial> {
        self.pending.remove(peer)
    }

    pub fn accept_inbound(
        &mut self,
        peer: NodeRecord,
        now: Duration,
        scheduled_end: Option<Duration>,
    ) -> InboundDecision {
        if let Err(retry_at) = self.throttle.check(peer.ip, now) {
            return InboundDecision::RejectedThrottled { retry_at };
        }
        if self.conns.contains(&peer.id) || peer.id == self.local_id {
            return InboundDecision::RejectedDuplicate;
        }
        if self.free_inbound() == 0 {
            return InboundDecision::RejectedFull;
        }
        self.conns.insert(Connection {
            peer,
            direction: Direction::Inbound,
            provenance: Provenance::Inbound,
            established_at: now,
            scheduled_end,
        });
        InboundDecision::Accepted
    }

    /// Remove a connection. Unknown peers are ignored with a warning.
    pub fn on_disconnect(&mut self, peer: &NodeId) -> Option<Connection> {
        let removed = self.conns.remove(peer);
        if removed.is_none() {
            log::warn!("disconnect for unknown peer {}", peer.short());
        }
        removed
    }

    /// Drop every connection, pending dial and buffered record.
    pub fn reset(&mut self) -> Vec<Connection> {
        let dropped: Vec<Connection> = self.conns.iter().copied().collect();
        self.conns = ConnectionSet::default();
        self.pending.clear();
        self.buffer = LookupBuffer::default();
        dropped
    }

    /// All slots occupied and every peer adversarial.
    pub fn is_eclipsed<F: Fn(&NodeId) -> bool>(&self, adversarial: F) -> bool {
        self.conns.count(Direction::Inbound) == self.slots.inbound_slots
            && self.conns.count(Direction::Outbound) == self.slots.outbound_slots
            && self.conns.iter().all(|c| adversarial(&c.peer.id))
    }
}
