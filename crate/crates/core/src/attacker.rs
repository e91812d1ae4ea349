//! Attack plan: mined bucket identities, a poisoning pool and the endpoints
//! the adversary speaks from.
//!
//! All Sybil addresses live in two /24 subnets. Subnet A holds the ten
//! bucket identities for distances 239..=248, subnet B the seven for
//! 249..=255. Pool identities answering FindNode and the inbound fillers
//! also use subnet A.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{
    generate_id, log_distance, mine_bucket_set, NodeId, NodeRecord, SubnetKey, MAX_DISTANCE,
    MIN_BUCKET_DISTANCE,
};
use crate::idpool::{build_pool, SybilPool};
use crate::table::TABLE_SUBNET_LIMIT;

pub const DEFAULT_PING_INTERVAL: Duration = Duration::from_secs(3);
pub const PING_JITTER: f64 = 0.2;
pub const DEFAULT_SUBNET_A: SubnetKey = SubnetKey([203, 0, 113]);
pub const DEFAULT_SUBNET_B: SubnetKey = SubnetKey([198, 51, 100]);
/// Enough connecting endpoints to fill 34 inbound slots.
pub const DEFAULT_INBOUND_FILLERS: usize = 34;
/// Last distance assigned to subnet A.
const SUBNET_A_LAST: u8 = MIN_BUCKET_DISTANCE + TABLE_SUBNET_LIMIT as u8 - 1;

/// Tunables for [`prepare_attack_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub pool_size: usize,
    pub ping_interval_secs: f64,
    pub inbound_fillers: usize,
    /// Distinct host addresses used inside each subnet.
    pub addresses_per_subnet: u8,
    pub subnet_a: SubnetKey,
    pub subnet_b: SubnetKey,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            pool_size: 1_000_000,
            ping_interval_secs: DEFAULT_PING_INTERVAL.as_secs_f64(),
            inbound_fillers: DEFAULT_INBOUND_FILLERS,
            addresses_per_subnet: 4,
            subnet_a: DEFAULT_SUBNET_A,
            subnet_b: DEFAULT_SUBNET_B,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::param("pool_size", "must be at least 1"));
        }
        if !(self.ping_interval_secs > 0.0 && self.ping_interval_secs.is_finite()) {
            return Err(Error::param("ping_interval_secs", "must be positive"));
        }
        if self.addresses_per_subnet == 0 || self.addresses_per_subnet > 254 {
            return Err(Error::param("addresses_per_subnet", "must be in 1..=254"));
        }
        if self.subnet_a == self.subnet_b {
            return Err(Error::param("subnet_b", "must differ from subnet_a"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackPlan {
    pub victim_id: NodeId,
    pub bucket_sybils: BTreeMap<u8, NodeRecord>,
    /// Ids generated while mining each bucket identity.
    pub mining_attempts: BTreeMap<u8, u64>,
    pub subnets: [SubnetKey; 2],
    pub addresses_per_subnet: u8,
    pub ping_interval_secs: f64,
    pub inbound_fillers: Vec<NodeRecord>,
    pub pool_size: usize,
    /// Where the pool is stored when the plan is saved.
    pub pool_file: Option<PathBuf>,
    #[serde(skip)]
    pool: Option<Arc<SybilPool>>,
}

/// Mine bucket identities and build a fresh pool of `pool_size` ids.
pub fn prepare_attack<R: Rng + ?Sized>(
    victim_id: NodeId,
    pool_size: usize,
    rng: &mut R,
) -> Result<AttackPlan> {
    prepare_attack_with(
        victim_id,
        &AttackConfig {
            pool_size,
            ..AttackConfig::default()
        },
        rng,
    )
}

pub fn prepare_attack_with<R: Rng + ?Sized>(
    victim_id: NodeId,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackPlan> {
    cfg.validate()?;
    let mut plan = plan_identities(victim_id, cfg, rng)?;
    let pool = build_pool(cfg.pool_size, rng)?;
    plan.attach_pool(Arc::new(pool))?;
    Ok(plan)
}

/// Like [`prepare_attack_with`] but reuses an existing pool.
pub fn prepare_attack_with_pool<R: Rng + ?Sized>(
    victim_id: NodeId,
    cfg: &AttackConfig,
    pool: Arc<SybilPool>,
    rng: &mut R,
) -> Result<AttackPlan> {
    cfg.validate()?;
    let mut plan = plan_identities(victim_id, cfg, rng)?;
    plan.attach_pool(pool)?;
    Ok(plan)
}

fn plan_identities<R: Rng + ?Sized>(
    victim_id: NodeId,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackPlan> {
    let mined = mine_bucket_set(&victim_id, rng)?;
    let hosts = cfg.addresses_per_subnet;
    let mut bucket_sybils = BTreeMap::new();
    let mut mining_attempts = BTreeMap::new();
    for (i, (&d, report)) in mined.ids.iter().enumerate() {
        let subnet = if d <= SUBNET_A_LAST {
            cfg.subnet_a
        } else {
            cfg.subnet_b
        };
        let ip = subnet.host(1 + (i as u8 % hosts));
        bucket_sybils.insert(d, NodeRecord::new(report.id, ip, 30303 + i as u16));
        mining_attempts.insert(d, report.attempts);
    }
    let filler_ip = cfg.subnet_a.host(1);
    let inbound_fillers = (0..cfg.inbound_fillers)
        .map(|i| NodeRecord::new(generate_id(rng), filler_ip, 40000 + i as u16))
        .collect();
    Ok(AttackPlan {
        victim_id,
        bucket_sybils,
        mining_attempts,
        subnets: [cfg.subnet_a, cfg.subnet_b],
        addresses_per_subnet: hosts,
        ping_interval_secs: cfg.ping_interval_secs,
        inbound_fillers,
        pool_size: cfg.pool_size,
        pool_file: None,
        pool: None,
    })
}

impl AttackPlan {
    pub fn pool(&self) -> Option<&Arc<SybilPool>> {
        self.pool.as_ref()
    }

    pub fn attach_pool(&mut self, pool: Arc<SybilPool>) -> Result<()> {
        if pool.is_empty() {
            return Err(Error::param("pool", "empty pool"));
        }
        self.pool_size = pool.size();
        self.pool = Some(pool);
        Ok(())
    }

    pub fn ping_interval(&self) -> Duration {
        Duration::from_secs_f64(self.ping_interval_secs)
    }

    /// Next keep-alive delay: the ping interval scaled by a uniform factor
    /// in `[1 - PING_JITTER, 1 + PING_JITTER]`.
    pub fn next_ping_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let f = rng.random_range(1.0 - PING_JITTER..=1.0 + PING_JITTER);
        Duration::from_secs_f64(self.ping_interval_secs * f)
    }

    /// Endpoint a pool identity answers on.
    pub fn pool_endpoint(&self, id: NodeId) -> NodeRecord {
        let h =
            id.high_u64() ^ u64::from_be_bytes(id.as_bytes()[24..].try_into().expect("8 bytes"));
        let host = 1 + (h % self.addresses_per_subnet as u64) as u8;
        let port = 1024 + ((h >> 8) % 60_000) as u16;
        NodeRecord::new(id, self.subnets[0].host(host), port)
    }

    /// FindNode answer from any Sybil: the pool's closest ids to `target`.
    pub fn poison_findnode(&self, target: &NodeId, limit: usize) -> Vec<NodeRecord> {
        match &self.pool {
            Some(pool) => pool
                .closest(target, limit)
                .into_iter()
                .map(|id| self.pool_endpoint(id))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn is_bucket_sybil(&self, id: &NodeId) -> bool {
        self.bucket_sybils.values().any(|r| r.id == *id)
    }

    /// Any identity controlled by the adversary.
    pub fn is_sybil(&self, id: &NodeId) -> bool {
        self.is_bucket_sybil(id)
            || self.inbound_fillers.iter().any(|r| r.id == *id)
            || self.pool.as_ref().is_some_and(|p| p.contains(id))
    }

    /// Set of bucket and filler ids; pool membership is checked separately.
    pub fn identity_set(&self) -> BTreeSet<NodeId> {
        self.bucket_sybils
            .values()
            .chain(self.inbound_fillers.iter())
            .map(|r| r.id)
            .collect()
    }

    pub fn total_mining_attempts(&self) -> u64 {
        self.mining_attempts.values().sum()
    }

    pub fn in_attacker_subnet(&self, ip: Ipv4Addr) -> bool {
        self.subnets.contains(&SubnetKey::of(ip))
    }

    /// Check every structural invariant of the plan.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let expected: Vec<u8> = (MIN_BUCKET_DISTANCE..=MAX_DISTANCE).collect();
        if self.bucket_sybils.keys().copied().collect::<Vec<_>>() != expected {
            return Err("bucket identities must cover 239..=255 exactly".into());
        }
        if self.subnets[0] == self.subnets[1] {
            return Err("subnets must be distinct".into());
        }
        let mut per_subnet = BTreeMap::<SubnetKey, usize>::new();
        for (&d, r) in &self.bucket_sybils {
            if log_distance(&self.victim_id, &r.id) != Some(d) {
                return Err(format!("identity for {d} sits at another distance"));
            }
            *per_subnet.entry(r.subnet()).or_default() += 1;
        }
        if per_subnet.values().any(|&c| c > TABLE_SUBNET_LIMIT) {
            return Err("more than ten bucket identities share a /24".into());
        }
        let all_ips = self
            .bucket_sybils
            .values()
            .chain(self.inbound_fillers.iter())
            .map(|r| r.ip);
        for ip in all_ips {
            if !self.in_attacker_subnet(ip) {
                return Err(format!("{ip} is outside the attacker subnets"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write the plan as JSON and the pool next to it.
    pub fn save(
        &mut self,
        plan_path: impl AsRef<std::path::Path>,
        pool_path: impl AsRef<std::path::Path>,
    ) -> Result<()> {
        if let Some(pool) = &self.pool {
            pool.save(pool_path.as_ref())?;
        }
        self.pool_file = Some(pool_path.as_ref().to_path_buf());
        std::fs::write(plan_path, self.to_json()?)?;
        Ok(())
    }

    /// Read a plan and, when it names one, its pool file.
    pub fn load(plan_path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(plan_path)?;
        let mut plan: AttackPlan = serde_json::from_str(&text)?;
        if let Some(path) = plan.pool_file.clone() {
            plan.attach_pool(Arc::new(SybilPool::load(path)?))?;
        }
        Ok(plan)
    }
}
