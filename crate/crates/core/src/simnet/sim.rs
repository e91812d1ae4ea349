//! The event loop.

use std::collections::HashMap;
use std::net::Ipv4Addr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;

use super::churn::sample_connection_duration;
use super::config::{ScenarioConfig, TraceDetail};
use super::queue::EventQueue;
use super::trace::{nanos, EventKind, MessageKind, Outcome, OutcomeRecord, SimTrace, TraceEvent};
use crate::attacker::{prepare_attack_with_pool, AttackPlan};
use crate::error::{Error, Result};
use crate::ident::{generate_id, log_distance, NodeId, NodeRecord};
use crate::idpool::{build_pool, SybilPool};
use crate::lookup::{handle_findnode, run_lookup, LookupResult};
use crate::peermgr::{Direction, InboundDecision, PeerManager, Provenance, SlotConfig};
use crate::rng::{derive_seed, derived_rng, SimRng};
use crate::table::{AddOutcome, DiscoveryTable, RevalidationReport, TableConfig};

const STREAM_POPULATION: u64 = 1;
const STREAM_ATTACK: u64 = 2;
const STREAM_DYNAMICS: u64 = 3;
const STREAM_PRESENCE: u64 = 4;
const STREAM_HONEST_TABLES: u64 = 5;
const STREAM_POOL: u64 = 6;
const STREAM_BOOTSTRAP: u64 = 7;

const VICTIM_IP: Ipv4Addr = Ipv4Addr::new(100, 64, 0, 1);
const DEVP2P_PORT: u16 = 30303;

/// Sybil pools shared between runs, keyed by `(size, seed)`.
#[derive(Debug, Default)]
pub struct PoolCache {
    pools: Mutex<HashMap<(usize, u64), Arc<SybilPool>>>,
}

impl PoolCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, size: usize, seed: u64) -> Result<Arc<SybilPool>> {
        let mut pools = self.pools.lock().expect("pool cache poisoned");
        if let Some(p) = pools.get(&(size, seed)) {
            return Ok(Arc::clone(p));
        }
        let pool = Arc::new(build_pool(size, &mut derived_rng(seed, STREAM_POOL))?);
        pools.insert((size, seed), Arc::clone(&pool));
        Ok(pool)
    }
}

/// Run one scenario with a private pool cache.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace> {
    run_scenario_with(cfg, &PoolCache::new())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, pools: &PoolCache) -> Result<SimTrace> {
    cfg.validate()?;
    Simulator::new(cfg, pools)?.run()
}

fn exp_delay<R: Rng + ?Sized>(rng: &mut R, mean_secs: f64) -> Duration {
    let x: f64 = rng.sample(Exp1);
    Duration::from_secs_f64(x * mean_secs)
}

/// Alternating online/offline renewal process of one honest node.
struct Presence {
    online: bool,
    next_toggle: Duration,
    rng: SimRng,
}

#[derive(Debug, Clone, Copy)]
enum DialResult {
    Failed,
    /// Connected; `None` lasts until the end of the run.
    Connected(Option<Duration>),
}

#[derive(Debug)]
enum Event {
    VictimStart,
    AttackStart,
    Revalidate,
    Refresh,
    Fill,
    DialDone {
        peer: NodeId,
        result: DialResult,
    },
    Disconnect {
        peer: NodeId,
        since: Duration,
    },
    HonestPing,
    HonestInbound,
    SybilPings,
    Flood,
    Checkpoint,
    /// The victim sends a ping to `to`.
    SendPing {
        to: NodeRecord,
    },
    /// A message from `from` arrives at the victim.
    AtVictim {
        from: NodeRecord,
        kind: MessageKind,
    },
    /// A message from the victim arrives at `to`.
    AtRemote {
        to: NodeRecord,
        kind: MessageKind,
    },
}

/// Everything the victim talks to.
struct World {
    records: Vec<NodeRecord>,
    index: HashMap<NodeId, usize>,
    tables: HashMap<usize, DiscoveryTable>,
    presence: Vec<Option<Presence>>,
    seed: u64,
    mean_online: f64,
    mean_offline: f64,
    neighbors_limit: usize,
    plan: Option<AttackPlan>,
    attack_active: bool,
}

impl World {
    fn online(&mut self, i: usize, now: Duration) -> bool {
        let (on, off) = (self.mean_online, self.mean_offline);
        let p = self.presence[i].get_or_insert_with(|| {
            let mut rng = derived_rng(derive_seed(self.seed, STREAM_PRESENCE), i as u64);
            let online = rng.random::<f64>() < on / (on + off);
            let next_toggle = exp_delay(&mut rng, if online { on } else { off });
            Presence {
                online,
                next_toggle,
                rng,
            }
        });
        while p.next_toggle <= now {
            p.online = !p.online;
            let mean = if p.online { on } else { off };
            p.next_toggle += exp_delay(&mut p.rng, mean);
        }
        p.online
    }

    fn is_adversarial(&self, id: &NodeId) -> bool {
        self.plan.as_ref().is_some_and(|p| p.is_sybil(id))
    }

    /// Whether `id` answers a packet sent at `now`.
    fn responsive(&mut self, id: &NodeId, now: Duration) -> bool {
        if self.attack_active && self.is_adversarial(id) {
            return true;
        }
        match self.index.get(id) {
            Some(&i) => self.online(i, now),
            None => false,
        }
    }

    /// Every honest node knows every other one, up to its bucket capacity.
    fn honest_table(&mut self, i: usize) -> &DiscoveryTable {
        let records = &self.records;
        let seed = self.seed;
        self.tables.entry(i).or_insert_with(|| {
            let mut t = DiscoveryTable::with_config(records[i].id, TableConfig::default());
            let mut order: Vec<usize> = (0..records.len()).filter(|&j| j != i).collect();
            order.shuffle(&mut derived_rng(
                derive_seed(seed, STREAM_HONEST_TABLES),
                i as u64,
            ));
            for j in order {
                t.add_seen(records[j]).expect("distinct ids");
            }
            t
        })
    }

    /// FindNode answer, `None` on timeout.
    fn findnode(
        &mut self,
        peer: &NodeRecord,
        target: &NodeId,
        now: Duration,
    ) -> Option<Vec<NodeRecord>> {
        if self.attack_active && self.is_adversarial(&peer.id) {
            let plan = self.plan.as_ref().expect("attack active");
            return Some(plan.poison_findnode(target, self.neighbors_limit));
        }
        let &i = self.index.get(&peer.id)?;
        if !self.online(i, now) {
            return None;
        }
        let limit = self.neighbors_limit;
        Some(handle_findnode(self.honest_table(i), target, limit))
    }
}

struct Simulator<'a> {
    cfg: &'a ScenarioConfig,
    queue: EventQueue<Event>,
    rng: SimRng,
    victim: NodeRecord,
    table: DiscoveryTable,
    pm: PeerManager,
    world: World,
    events: Vec<TraceEvent>,
    attack_start: Duration,
    end: Duration,
    next_fill: Option<Duration>,
    flood_scheduled: bool,
    last_buffer_lookup: Option<Duration>,
    eclipsed_at: Option<Duration>,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ScenarioConfig, pools: &PoolCache) -> Result<Self> {
        let mut pop = derived_rng(cfg.seed, STREAM_POPULATION);
        let mut victim_id = generate_id(&mut pop);
        let records: Vec<NodeRecord> = (0..cfg.honest_count)
            .map(|i| {
                let ip = Ipv4Addr::from(0x0A00_0001u32 + ((i as u32) << 8));
                NodeRecord::new(generate_id(&mut pop), ip, DEVP2P_PORT)
            })
            .collect();

        let plan = match &cfg.attack {
            None => None,
            Some(spec) => {
                let plan = match &spec.plan_file {
                    Some(path) => {
                        let mut plan = AttackPlan::load(path)?;
                        if plan.pool().is_none() {
                            plan.attach_pool(pools.get(plan.pool_size, spec.pool_seed)?)?;
                        }
                        victim_id = plan.victim_id;
                        plan
                    }
                    None => {
                        let pool = pools.get(spec.config.pool_size, spec.pool_seed)?;
                        let mut rng = derived_rng(cfg.seed, STREAM_ATTACK);
                        prepare_attack_with_pool(victim_id, &spec.config, pool, &mut rng)?
                    }
                };
                plan.audit().map_err(Error::InvalidScenario)?;
                Some(plan)
            }
        };
        if records.iter().any(|r| r.id == victim_id) {
            return Err(Error::InvalidScenario(
                "victim id collides with an honest id".into(),
            ));
        }

        let index = records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let variant = cfg.geth_variant;
        let table_cfg = TableConfig {
            subnet_limits: variant.subnet_limits,
            ..TableConfig::default()
        };
        let victim = NodeRecord::new(victim_id, VICTIM_IP, DEVP2P_PORT);
        let attack_start = cfg.attack_start();
        Ok(Simulator {
            cfg,
            queue: EventQueue::new(),
            rng: derived_rng(cfg.seed, STREAM_DYNAMICS),
            victim,
            table: DiscoveryTable::with_config(victim_id, table_cfg),
            pm: PeerManager::new(
                victim_id,
                SlotConfig::new(variant.max_peers),
                variant.throttle_window(),
            ),
            world: World {
                presence: (0..records.len()).map(|_| None).collect(),
                records,
                index,
                tables: HashMap::new(),
                seed: cfg.seed,
                mean_online: cfg.honest.mean_online_secs,
                mean_offline: cfg.honest.mean_offline_secs,
                neighbors_limit: cfg.neighbors_limit,
                plan,
                attack_active: false,
            },
            events: Vec::new(),
            attack_start,
            end: cfg.end_time(),
            next_fill: None,
            flood_scheduled: false,
            last_buffer_lookup: None,
            eclipsed_at: None,
        })
    }

    fn now(&self) -> Duration {
        self.queue.now()
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(TraceEvent {
            time_ns: nanos(self.now()),
            node: self.victim.id,
            kind,
        });
    }

    fn emit_message(&mut self, kind: MessageKind, from: NodeId, to: NodeId) {
        if self.cfg.trace_detail >= TraceDetail::Messages {
            self.emit(EventKind::Message { kind, from, to });
        }
    }

    fn latency(&mut self) -> Duration {
        self.cfg.latency_model.sample(&mut self.rng)
    }

    fn secs(v: f64) -> Duration {
        Duration::from_secs_f64(v)
    }

    fn run(mut self) -> Result<SimTrace> {
        let timers = self.cfg.timers;
        self.queue.schedule_at(Duration::ZERO, Event::VictimStart);
        if self.world.plan.is_some() {
            self.queue
                .schedule_at(self.attack_start, Event::AttackStart);
        }
        self.queue
            .schedule_at(Self::secs(timers.checkpoint_secs), Event::Checkpoint);
        let d = exp_delay(&mut self.rng, timers.revalidate_mean_secs);
        self.queue.schedule_at(d, Event::Revalidate);
        if self.cfg.honest.ping_rate > 0.0 && !self.world.records.is_empty() {
            let d = exp_delay(&mut self.rng, 1.0 / self.cfg.honest.ping_rate);
            self.queue.schedule_at(d, Event::HonestPing);
        }
        if self.cfg.honest.inbound_rate > 0.0 && !self.world.records.is_empty() {
            let d = exp_delay(&mut self.rng, 1.0 / self.cfg.honest.inbound_rate);
            self.queue.schedule_at(d, Event::HonestInbound);
        }

        while let Some(t) = self.queue.peek_time() {
            if t > self.end {
                break;
            }
            let (_, ev) = self.queue.pop().expect("peeked");
            self.handle(ev)?;
            if self.eclipsed_at.is_some() {
                break;
            }
        }

        let result = match self.eclipsed_at {
            Some(t) => OutcomeRecord {
                outcome: Outcome::Eclipsed,
                eclipse_time_ns: Some(nanos(t - self.attack_start)),
                seed: self.cfg.seed,
            },
            None => OutcomeRecord {
                outcome: Outcome::Timeout,
                eclipse_time_ns: None,
                seed: self.cfg.seed,
            },
        };
        Ok(SimTrace {
            events: self.events,
            result,
        })
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        let now = self.now();
        let timers = self.cfg.timers;
        match ev {
            Event::VictimStart => {
                self.emit(EventKind::VictimStart);
                let n = self.world.records.len();
                let mut rng = derived_rng(self.cfg.seed, STREAM_BOOTSTRAP);
                let picks = rand::seq::index::sample(&mut rng, n, self.cfg.bootstrap_count);
                for i in picks {
                    let rec = self.world.records[i];
                    self.table_add(rec)?;
                }
                self.queue.schedule_at(now, Event::Refresh);
                self.request_fill(Duration::ZERO);
            }
            Event::AttackStart => {
                self.world.attack_active = true;
                self.emit(EventKind::AttackStart);
                self.queue.schedule_at(now, Event::SybilPings);
                self.request_flood(Duration::ZERO);
                self.check_eclipse();
            }
            Event::SybilPings => {
                let plan = self.world.plan.as_ref().expect("attack configured");
                let sybils: Vec<NodeRecord> = plan.bucket_sybils.values().copied().collect();
                let next = plan.next_ping_delay(&mut self.rng);
                self.queue.schedule_in(next, Event::SybilPings);
                for rec in sybils {
                    self.emit_message(MessageKind::Ping, rec.id, self.victim.id);
                    self.table_add(rec)?;
                    self.emit_message(MessageKind::Pong, self.victim.id, rec.id);
                }
            }
            Event::HonestPing => {
                let i = self.rng.random_range(0..self.world.records.len());
                if self.world.online(i, now) {
                    let from = self.world.records[i];
                    let d = self.latency();
                    self.queue.schedule_in(
                        d,
                        Event::AtVictim {
                            from,
                            kind: MessageKind::Ping,
                        },
                    );
                }
                let d = exp_delay(&mut self.rng, 1.0 / self.cfg.honest.ping_rate);
                self.queue.schedule_in(d, Event::HonestPing);
            }
            Event::AtVictim { from, kind } => {
                self.emit_message(kind, from.id, self.victim.id);
                match kind {
                    MessageKind::Ping => {
                        self.table_add(from)?;
                        self.emit_message(MessageKind::Pong, self.victim.id, from.id);
                    }
                    MessageKind::Pong => {
                        self.table_add(from)?;
                    }
                    _ => {}
                }
            }
            Event::SendPing { to } => {
                self.emit_message(MessageKind::Ping, self.victim.id, to.id);
                let d = self.latency();
                self.queue.schedule_in(
                    d,
                    Event::AtRemote {
                        to,
                        kind: MessageKind::Ping,
                    },
                );
            }
            Event::AtRemote { to, kind } => {
                if kind == MessageKind::Ping && self.world.responsive(&to.id, now) {
                    let d = self.latency();
                    self.queue.schedule_in(
                        d,
                        Event::AtVictim {
                            from: to,
                            kind: MessageKind::Pong,
                        },
                    );
                }
            }
            Event::Revalidate => {
                let world = &mut self.world;
                let report = self
                    .table
                    .revalidate_step(&mut self.rng, |r| world.responsive(&r.id, now));
                if let RevalidationReport::Replaced {
                    removed, promoted, ..
                } = report
                {
                    if self.cfg.trace_detail >= TraceDetail::Table {
                        self.emit(EventKind::TableEvict {
                            peer: removed.id,
                            promoted: promoted.map(|p| p.id),
                        });
                    }
                }
                let d = exp_delay(&mut self.rng, timers.revalidate_mean_secs);
                self.queue.schedule_in(d, Event::Revalidate);
            }
            Event::Refresh => {
                let target = generate_id(&mut self.rng);
                let (res, took) = self.lookup(&target)?;
                self.bond_with(&res, took);
                self.queue
                    .schedule_in(Self::secs(timers.refresh_secs), Event::Refresh);
            }
            Event::Fill => {
                if self.next_fill == Some(now) {
                    self.next_fill = None;
                    self.fill()?;
                }
            }
            Event::DialDone { peer, result } => {
                match result {
                    DialResult::Connected(life) => {
                        if let Some(c) = self.pm.dial_succeeded(&peer, now, life.map(|l| now + l)) {
                            self.connected(
                                c.peer,
                                Direction::Outbound,
                                c.provenance,
                                c.scheduled_end,
                            );
                        }
                    }
                    DialResult::Failed => {
                        if let Some(d) = self.pm.dial_failed(&peer) {
                            self.emit(EventKind::DialFailed {
                                peer,
                                provenance: d.provenance,
                            });
                        }
                    }
                }
                self.request_fill(Duration::ZERO);
            }
            Event::Disconnect { peer, since } => {
                let current = self
                    .pm
                    .connections()
                    .get(&peer)
                    .is_some_and(|c| c.established_at == since);
                if current {
                    let c = self.pm.on_disconnect(&peer).expect("checked");
                    self.emit(EventKind::Disconnect {
                        peer,
                        direction: c.direction,
                    });
                    match c.direction {
                        Direction::Outbound => self.request_fill(Duration::ZERO),
                        Direction::Inbound => {
                            self.request_flood(Self::secs(timers.flood_poll_secs))
                        }
                    }
                }
            }
            Event::HonestInbound => {
                let i = self.rng.random_range(0..self.world.records.len());
                let rec = self.world.records[i];
                if self.world.online(i, now) && !self.pm.connections().contains(&rec.id) {
                    let life = sample_connection_duration(&self.cfg.churn_model, &mut self.rng);
                    if self.pm.accept_inbound(rec, now, Some(now + life))
                        == InboundDecision::Accepted
                    {
                        self.connected(
                            rec,
                            Direction::Inbound,
                            Provenance::Inbound,
                            Some(now + life),
                        );
                    }
                }
                let d = exp_delay(&mut self.rng, 1.0 / self.cfg.honest.inbound_rate);
                self.queue.schedule_in(d, Event::HonestInbound);
            }
            Event::Flood => {
                self.flood_scheduled = false;
                self.flood();
            }
            Event::Checkpoint => {
                self.checkpoint();
                self.queue
                    .schedule_in(Self::secs(timers.checkpoint_secs), Event::Checkpoint);
            }
        }
        Ok(())
    }

    fn adversarial(&self, id: &NodeId) -> bool {
        self.world.attack_active && self.world.is_adversarial(id)
    }

    fn table_add(&mut self, rec: NodeRecord) -> Result<()> {
        let outcome = self.table.add_seen(rec)?;
        if self.cfg.trace_detail >= TraceDetail::Table
            && matches!(outcome, AddOutcome::Added | AddOutcome::ReplacementAdded)
        {
            let bucket = log_distance(&self.victim.id, &rec.id).expect("not self");
            self.emit(EventKind::TableAdd {
                peer: rec.id,
                bucket,
                replacement: outcome == AddOutcome::ReplacementAdded,
            });
        }
        Ok(())
    }

    /// Synchronous lookup; returns the result and its simulated duration.
    fn lookup(&mut self, target: &NodeId) -> Result<(LookupResult, Duration)> {
        let now = self.now();
        let (res, took) = lookup_in(
            &self.table,
            &mut self.world,
            &mut self.rng,
            self.cfg,
            target,
            now,
        )?;
        self.trace_lookup(&res, took);
        Ok((res, took))
    }

    fn trace_lookup(&mut self, res: &LookupResult, took: Duration) {
        let adversarial_results = res.nodes.iter().filter(|r| self.adversarial(&r.id)).count();
        self.emit(EventKind::Lookup {
            target: res.target,
            rounds: res.rounds,
            queried: res.queried.len(),
            adversarial_results,
            duration_ns: nanos(took),
        });
    }

    /// Ping the lookup results once the lookup has finished; pongs add them.
    fn bond_with(&mut self, res: &LookupResult, after: Duration) {
        for r in &res.nodes {
            self.queue.schedule_in(after, Event::SendPing { to: *r });
        }
    }

    fn request_fill(&mut self, delay: Duration) {
        let at = self.now() + delay;
        if self.next_fill.map_or(true, |t| t > at) {
            self.next_fill = Some(at);
            self.queue.schedule_at(at, Event::Fill);
        }
    }

    fn fill(&mut self) -> Result<()> {
        let now = self.now();
        if self.pm.free_outbound() == 0 {
            return Ok(());
        }
        let interval = Self::secs(self.cfg.timers.lookup_interval_secs);
        let lookup_allowed = self
            .last_buffer_lookup
            .map_or(true, |t| now >= t + interval);
        let mut looked: Option<Result<(LookupResult, Duration)>> = None;
        let table = &self.table;
        let world = &mut self.world;
        let cfg = self.cfg;
        let plan = self
            .pm
            .fill_outbound(table, &mut self.rng, cfg.geth_variant.read_mode, |rng| {
                if !lookup_allowed {
                    return Vec::new();
                }
                let target = generate_id(rng);
                let out = lookup_in(table, world, rng, cfg, &target, now);
                let nodes = out
                    .as_ref()
                    .map(|(r, _)| r.nodes.clone())
                    .unwrap_or_default();
                looked = Some(out);
                nodes
            });
        let mut lookup_took = Duration::ZERO;
        if let Some(out) = looked {
            let (res, took) = out?;
            self.last_buffer_lookup = Some(now);
            self.trace_lookup(&res, took);
            self.bond_with(&res, took);
            lookup_took = took;
        }
        for dial in plan.dials {
            let start = if dial.after_lookup {
                lookup_took
            } else {
                Duration::ZERO
            };
            self.start_dial(dial.peer, start);
        }
        if self.pm.free_outbound() > 0 {
            self.request_fill(Self::secs(self.cfg.timers.fill_retry_secs));
        }
        Ok(())
    }

    fn start_dial(&mut self, peer: NodeRecord, start_in: Duration) {
        let now = self.now();
        let rtt = self.latency() + self.latency();
        let (done_in, result) = if self.adversarial(&peer.id) {
            (rtt, DialResult::Connected(None))
        } else {
            let online = match self.world.index.get(&peer.id) {
                Some(&i) => self.world.online(i, now + start_in),
                None => false,
            };
            if !online {
                (
                    Self::secs(self.cfg.timers.connect_timeout_secs),
                    DialResult::Failed,
                )
            } else if self.rng.random::<f64>() < self.cfg.dial_failure_prob {
                (rtt, DialResult::Failed)
            } else {
                let life = sample_connection_duration(&self.cfg.churn_model, &mut self.rng);
                (rtt, DialResult::Connected(Some(life)))
            }
        };
        self.emit_message(MessageKind::Connect, self.victim.id, peer.id);
        self.queue.schedule_in(
            start_in + done_in,
            Event::DialDone {
                peer: peer.id,
                result,
            },
        );
    }

    fn connected(
        &mut self,
        peer: NodeRecord,
        direction: Direction,
        provenance: Provenance,
        end: Option<Duration>,
    ) {
        let now = self.now();
        let adversarial = self.adversarial(&peer.id);
        self.emit(EventKind::Connect {
            peer: peer.id,
            direction,
            provenance,
            adversarial,
        });
        if let Some(end) = end {
            self.queue.schedule_at(
                end,
                Event::Disconnect {
                    peer: peer.id,
                    since: now,
                },
            );
        }
        self.check_eclipse();
    }

    fn request_flood(&mut self, delay: Duration) {
        if self.world.attack_active && !self.flood_scheduled {
            self.flood_scheduled = true;
            self.queue.schedule_in(delay, Event::Flood);
        }
    }

    /// Inbound fillers try to take every free inbound slot.
    fn flood(&mut self) {
        let now = self.now();
        let fillers = self
            .world
            .plan
            .as_ref()
            .expect("attack configured")
            .inbound_fillers
            .clone();
        for rec in fillers {
            if self.pm.free_inbound() == 0 {
                break;
            }
            if self.pm.connections().contains(&rec.id) {
                continue;
            }
            self.emit_message(MessageKind::Connect, rec.id, self.victim.id);
            match self.pm.accept_inbound(rec, now, None) {
                InboundDecision::Accepted => {
                    self.connected(rec, Direction::Inbound, Provenance::Inbound, None);
                    if self.eclipsed_at.is_some() {
                        return;
                    }
                }
                InboundDecision::RejectedThrottled { .. } | InboundDecision::RejectedFull => break,
                InboundDecision::RejectedDuplicate => {}
            }
        }
        if self.pm.free_inbound() > 0 {
            self.request_flood(Self::secs(self.cfg.timers.flood_poll_secs));
        }
    }

    fn check_eclipse(&mut self) {
        if self.eclipsed_at.is_some() || !self.world.attack_active {
            return;
        }
        let world = &self.world;
        if self.pm.is_eclipsed(|id| world.is_adversarial(id)) {
            self.eclipsed_at = Some(self.now());
            self.emit(EventKind::Eclipsed);
        }
    }

    fn checkpoint(&mut self) {
        let mut adv = [0usize; 2];
        for c in self.pm.connections().iter() {
            if self.adversarial(&c.peer.id) {
                adv[(c.direction == Direction::Outbound) as usize] += 1;
            }
        }
        let table_adversarial = self
            .table
            .entries()
            .filter(|r| self.adversarial(&r.id))
            .count();
        let world = &self.world;
        let eclipsed = self
            .pm
            .is_eclipsed(|id| world.attack_active && world.is_adversarial(id));
        let conns = self.pm.connections();
        self.emit(EventKind::Checkpoint {
            outbound: conns.count(Direction::Outbound),
            inbound: conns.count(Direction::Inbound),
            adversarial_outbound: adv[1],
            adversarial_inbound: adv[0],
            table_size: self.table.len(),
            table_adversarial,
            eclipsed,
        });
    }
}

/// Lookup from the victim's table through the world. Each round lasts as
/// long as its slowest reply; unanswered queries cost the UDP timeout.
fn lookup_in<R: Rng + ?Sized>(
    table: &DiscoveryTable,
    world: &mut World,
    rng: &mut R,
    cfg: &ScenarioConfig,
    target: &NodeId,
    now: Duration,
) -> Result<(LookupResult, Duration)> {
    let timeout = Duration::from_secs_f64(cfg.timers.udp_timeout_secs);
    let mut delays = Vec::new();
    let res = run_lookup(table, target, |peer, t| {
        match world.findnode(peer, t, now) {
            Some(answer) => {
                let rtt = cfg.latency_model.sample(rng) + cfg.latency_model.sample(rng);
                delays.push(rtt.min(timeout));
                answer
            }
            None => {
                delays.push(timeout);
                Vec::new()
            }
        }
    })?;
    let mut took = Duration::ZERO;
    let mut at = 0;
    for &n in &res.queried_per_round {
        took += delays[at..at + n]
            .iter()
            .copied()
            .max()
            .unwrap_or(Duration::ZERO);
        at += n;
    }
    Ok((res, took))
}
