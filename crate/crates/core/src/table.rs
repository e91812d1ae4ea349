//! Discovery table: 17 k-buckets with replacement lists and /24 limits.
//!
//! Entry flow on an unsolicited ping or a pong reply:
//!
//! ```text
//! in bucket?            -> bump to front                 (Bumped)
//! bucket not full?      -> subnet check, insert at front (Added)
//! in replacements?      -> nothing                       (Noop)
//! otherwise             -> subnet check, append to list  (ReplacementAdded)
//! ```
//!
//! A record already in a replacement list is not moved within that list on
//! re-contact.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{
    log_distance, xor_cmp, NodeId, NodeRecord, SubnetKey, MAX_DISTANCE, MIN_BUCKET_DISTANCE,
};

pub const BUCKET_SIZE: usize = 16;
pub const MAX_REPLACEMENTS: usize = 10;
pub const NUM_BUCKETS: usize = (MAX_DISTANCE - MIN_BUCKET_DISTANCE) as usize + 1;
pub const BUCKET_SUBNET_LIMIT: usize = 2;
pub const TABLE_SUBNET_LIMIT: usize = 10;
/// Default `max` for [`DiscoveryTable::read_random_nodes`].
pub const READ_RANDOM_DEFAULT: usize = 4;

/// How `read_random_nodes` samples the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadMode {
    /// Heads of distinct, uniformly chosen non-empty buckets.
    Heads,
    /// Uniform sample without replacement over all bucket entries.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Bumped,
    Added,
    ReplacementAdded,
    RejectedSubnet,
    Noop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevalidationReport {
    /// No bucket had entries.
    Empty,
    /// Probed entry answered and moved to the front.
    Alive { distance: u8, node: NodeRecord },
    /// Probed entry was dropped; `promoted` took its place at the tail.
    Replaced {
        distance: u8,
        removed: NodeRecord,
        promoted: Option<NodeRecord>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Bucket {
    pub distance: u8,
    /// Front is the most recently active entry.
    pub entries: VecDeque<NodeRecord>,
    /// FIFO: oldest at the front.
    pub replacements: VecDeque<NodeRecord>,
}

impl Bucket {
    fn new(distance: u8) -> Self {
        Bucket {
            distance,
            entries: VecDeque::with_capacity(BUCKET_SIZE),
            replacements: VecDeque::with_capacity(MAX_REPLACEMENTS),
        }
    }

    pub fn head(&self) -> Option<&NodeRecord> {
        self.entries.front()
    }

    fn position(&self, id: &NodeId) -> Option<usize> {
        self.entries.iter().position(|e| e.id == *id)
    }

    fn subnet_count(&self, subnet: SubnetKey) -> usize {
        self.entries.iter().filter(|e| e.subnet() == subnet).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableConfig {
    /// Enforce the per-bucket and per-table /24 limits.
    pub subnet_limits: bool,
    /// Entries per bucket. Raising it models nodes with complete knowledge.
    #[serde(default = "default_bucket_size")]
    pub bucket_size: usize,
}

fn default_bucket_size() -> usize {
    BUCKET_SIZE
}

impl TableConfig {
    pub fn without_subnet_limits() -> Self {
        TableConfig {
            subnet_limits: false,
            ..Self::default()
        }
    }

    /// No subnet limits and unbounded buckets.
    pub fn unbounded() -> Self {
        TableConfig {
            subnet_limits: false,
            bucket_size: usize::MAX,
        }
    }
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            subnet_limits: true,
            bucket_size: BUCKET_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryTable {
    local_id: NodeId,
    config: TableConfig,
    buckets: Vec<Bucket>,
    subnet_counts: BTreeMap<SubnetKey, usize>,
}

/// JSON view of a table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TableSnapshot {
    pub local_id: NodeId,
    pub buckets: Vec<Bucket>,
}

impl DiscoveryTable {
    pub fn new(local_id: NodeId) -> Self {
        Self::with_config(local_id, TableConfig::default())
    }

    pub fn with_config(local_id: NodeId, config: TableConfig) -> Self {
        DiscoveryTable {
            local_id,
            config,
            buckets: (MIN_BUCKET_DISTANCE..=MAX_DISTANCE)
                .map(Bucket::new)
                .collect(),
            subnet_counts: BTreeMap::new(),
        }
    }

    pub fn local_id(&self) -> &NodeId {
        &self.local_id
    }

    pub fn config(&self) -> TableConfig {
        self.config
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    /// Bucket labelled with log-distance `distance` (239..=255).
    pub fn bucket(&self, distance: u8) -> Option<&Bucket> {
        distance
            .checked_sub(MIN_BUCKET_DISTANCE)
            .and_then(|i| self.buckets.get(i as usize))
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(|b| b.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(|b| b.entries.is_empty())
    }

    pub fn entries(&self) -> impl Iterator<Item = &NodeRecord> {
        self.buckets.iter().flat_map(|b| b.entries.iter())
    }

    pub fn subnet_count(&self, subnet: SubnetKey) -> usize {
        self.subnet_counts.get(&subnet).copied().unwrap_or(0)
    }

    /// `true` if `id` is a bucket entry (replacements excluded).
    pub fn contains(&self, id: &NodeId) -> bool {
        self.bucket_index(id)
            .map(|i| self.buckets[i].position(id).is_some())
            .unwrap_or(false)
    }

    /// `true` if `id` is a bucket entry or waits in a replacement list.
    pub fn knows(&self, id: &NodeId) -> bool {
        self.bucket_index(id)
            .map(|i| {
                let b = &self.buckets[i];
                b.position(id).is_some() || b.replacements.iter().any(|r| r.id == *id)
            })
            .unwrap_or(false)
    }

    fn bucket_index(&self, id: &NodeId) -> Option<usize> {
        let d = log_distance(&self.local_id, id)?;
        Some(d.max(MIN_BUCKET_DISTANCE) as usize - MIN_BUCKET_DISTANCE as usize)
    }

    /// Bucket responsible for `id`; distances below 239 share the 239 bucket.
    pub fn bucket_for(&self, id: &NodeId) -> Result<&Bucket> {
        let i = self.bucket_index(id).ok_or(Error::SelfRecord)?;
        Ok(&self.buckets[i])
    }

    fn subnet_allows(&self, bucket: usize, subnet: SubnetKey) -> bool {
        !self.config.subnet_limits
            || (self.buckets[bucket].subnet_count(subnet) < BUCKET_SUBNET_LIMIT
                && self.subnet_count(subnet) < TABLE_SUBNET_LIMIT)
    }

    fn count_in(&mut self, rec: &NodeRecord) {
        *self.subnet_counts.entry(rec.subnet()).or_default() += 1;
    }

    fn count_out(&mut self, rec: &NodeRecord) {
        let key = rec.subnet();
        if let Some(c) = self.subnet_counts.get_mut(&key) {
            *c -= 1;
            if *c == 0 {
                self.subnet_counts.remove(&key);
            }
        }
    }

    /// Handle an unsolicited ping or a pong reply from `rec`.
    pub fn add_seen(&mut self, rec: NodeRecord) -> Result<AddOutcome> {
        let bi = self.bucket_index(&rec.id).ok_or(Error::SelfRecord)?;
        let bucket = &mut self.buckets[bi];
        if let Some(pos) = bucket.position(&rec.id) {
            let e = bucket.entries.remove(pos).expect("position is valid");
            bucket.entries.push_front(e);
            return Ok(AddOutcome::Bumped);
        }
        if bucket.entries.len() < self.config.bucket_size {
            if !self.subnet_allows(bi, rec.subnet()) {
                return Ok(AddOutcome::RejectedSubnet);
            }
            let bucket = &mut self.buckets[bi];
            // A node can sit in the list while its bucket has room only after
            // entries were removed; the list must never shadow an entry.
            if let Some(pos) = bucket.replacements.iter().position(|r| r.id == rec.id) {
                bucket.replacements.remove(pos);
            }
            bucket.entries.push_front(rec);
            self.count_in(&rec);
            return Ok(AddOutcome::Added);
        }
        if bucket.replacements.iter().any(|r| r.id == rec.id) {
            return Ok(AddOutcome::Noop);
        }
        if !self.subnet_allows(bi, rec.subnet()) {
            return Ok(AddOutcome::RejectedSubnet);
        }
        let bucket = &mut self.buckets[bi];
        if bucket.replacements.len() >= MAX_REPLACEMENTS {
            bucket.replacements.pop_front();
        }
        bucket.replacements.push_back(rec);
        Ok(AddOutcome::ReplacementAdded)
    }

    /// Remove a bucket entry outright. Returns the removed record.
    pub fn remove(&mut self, id: &NodeId) -> Option<NodeRecord> {
        let bi = self.bucket_index(id)?;
        let pos = self.buckets[bi].position(id)?;
        let rec = self.buckets[bi].entries.remove(pos)?;
        self.count_out(&rec);
        Some(rec)
    }

    /// Probe the last entry of one random non-empty bucket.
    ///
    /// A live entry moves to the front. A dead one is dropped and a random
    /// replacement that passes the subnet limits is appended at the tail.
    pub fn revalidate_step<R, F>(&mut self, rng: &mut R, mut liveness: F) -> RevalidationReport
    where
        R: Rng + ?Sized,
        F: FnMut(&NodeRecord) -> bool,
    {
        let non_empty: Vec<usize> = (0..NUM_BUCKETS)
            .filter(|&i| !self.buckets[i].entries.is_empty())
            .collect();
        if non_empty.is_empty() {
            return RevalidationReport::Empty;
        }
        let bi = non_empty[rng.random_range(0..non_empty.len())];
        let distance = self.buckets[bi].distance;
        let last = *self.buckets[bi]
            .entries
            .back()
            .expect("bucket is non-empty");
        if liveness(&last) {
            let b = &mut self.buckets[bi];
            let e = b.entries.pop_back().expect("non-empty");
            b.entries.push_front(e);
            return RevalidationReport::Alive {
                distance,
                node: last,
            };
        }
        self.buckets[bi].entries.pop_back();
        self.count_out(&last);
        let eligible: Vec<usize> = (0..self.buckets[bi].replacements.len())
            .filter(|&j| {
                let subnet = self.buckets[bi].replacements[j].subnet();
                self.subnet_allows(bi, subnet)
            })
            .collect();
        let promoted = if eligible.is_empty() {
            None
        } else {
            let j = eligible[rng.random_range(0..eligible.len())];
            let rec = self.buckets[bi]
                .replacements
                .remove(j)
                .expect("index valid");
            self.buckets[bi].entries.push_back(rec);
            self.count_in(&rec);
            Some(rec)
        };
        RevalidationReport::Replaced {
            distance,
            removed: last,
            promoted,
        }
    }

    /// Up to `max` records for outbound dialing.
    pub fn read_random_nodes<R: Rng + ?Sized>(
        &self,
        max: usize,
        rng: &mut R,
        mode: ReadMode,
    ) -> Vec<NodeRecord> {
        if max == 0 {
            return Vec::new();
        }
        match mode {
            ReadMode::Heads => {
                let heads: Vec<&NodeRecord> =
                    self.buckets.iter().filter_map(Bucket::head).collect();
                let n = max.min(heads.len());
                sample(rng, heads.len(), n)
                    .into_iter()
                    .map(|i| *heads[i])
                    .collect()
            }
            ReadMode::Uniform => {
                let all: Vec<&NodeRecord> = self.entries().collect();
                let n = max.min(all.len());
                sample(rng, all.len(), n)
                    .into_iter()
                    .map(|i| *all[i])
                    .collect()
            }
        }
    }

    /// The `k` bucket entries closest to `target` by xor-distance, ascending.
    pub fn closest_known(&self, target: &NodeId, k: usize) -> Vec<NodeRecord> {
        let mut all: Vec<NodeRecord> = self.entries().copied().collect();
        let by_distance = |a: &NodeRecord, b: &NodeRecord| xor_cmp(&a.id, &b.id, target);
        if all.len() > k && k > 0 {
            all.select_nth_unstable_by(k - 1, by_distance);
            all.truncate(k);
        }
        all.truncate(k);
        all.sort_unstable_by(by_distance);
        all
    }

    pub fn snapshot(&self) -> TableSnapshot {
        TableSnapshot {
            local_id: self.local_id,
            buckets: self.buckets.clone(),
        }
    }

    /// Check every structural invariant; returns a description of the first
    /// violation.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let mut recount = BTreeMap::<SubnetKey, usize>::new();
        for b in &self.buckets {
            if b.entries.len() > self.config.bucket_size {
                return Err(format!(
                    "bucket {} holds {} entries",
                    b.distance,
                    b.entries.len()
                ));
            }
            if b.replacements.len() > MAX_REPLACEMENTS {
                return Err(format!(
                    "bucket {} has {} replacements",
                    b.distance,
                    b.replacements.len()
                ));
            }
            for e in &b.entries {
                let d = log_distance(&self.local_id, &e.id)
                    .ok_or_else(|| "local id stored in its own table".to_string())?;
                if d.max(MIN_BUCKET_DISTANCE) != b.distance {
                    return Err(format!("entry at distance {d} in bucket {}", b.distance));
                }
                if b.replacements.iter().any(|r| r.id == e.id) {
                    return Err(format!("{:?} is both entry and replacement", e.id));
                }
                *recount.entry(e.subnet()).or_default() += 1;
            }
            let mut ids: Vec<NodeId> = b.entries.iter().map(|e| e.id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(format!("duplicate entry in bucket {}", b.distance));
            }
            if self.config.subnet_limits {
                for e in &b.entries {
                    if b.subnet_count(e.subnet()) > BUCKET_SUBNET_LIMIT {
                        return Err(format!(
                            "bucket {} over subnet limit for {}",
                            b.distance,
                            e.subnet()
                        ));
                    }
                }
            }
        }
        if recount != self.subnet_counts {
            return Err("subnet counters out of sync".into());
        }
        if self.config.subnet_limits {
            if let Some((k, c)) = recount.iter().find(|(_, &c)| c > TABLE_SUBNET_LIMIT) {
                return Err(format!("{c} table entries share {k}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::generate_id;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    /// Id at exactly log-distance `d` from `local`, low bits from `salt`.
    fn id_at(local: &NodeId, d: u8, salt: u64) -> NodeId {
        let mut b = *local.as_bytes();
        let flip = 255 - d as usize;
        b[flip / 8] ^= 0x80 >> (flip % 8);
        let mut id = NodeId::from_bytes(b);
        // Perturb bits strictly below the flipped one.
        let mut rng = rng_from_seed(salt);
        let noise = generate_id(&mut rng);
        let mut out = *id.as_bytes();
        for i in (flip + 1)..256 {
            if noise.bit(i) {
                out[i / 8] ^= 0x80 >> (i % 8);
            }
        }
        id = NodeId::from_bytes(out);
        assert_eq!(log_distance(local, &id), Some(d));
        id
    }

    fn rec(id: NodeId, a: u8, b: u8, c: u8, d: u8) -> NodeRecord {
        NodeRecord::new(id, Ipv4Addr::new(a, b, c, d), 30303)
    }

    fn fresh() -> (NodeId, DiscoveryTable) {
        let local = generate_id(&mut rng_from_seed(1));
        (local, DiscoveryTable::new(local))
    }

    #[test]
    fn bucket_for_examples() {
        let (local, t) = fresh();
        assert_eq!(t.bucket_for(&id_at(&local, 255, 1)).unwrap().distance, 255);
        assert_eq!(t.bucket_for(&id_at(&local, 247, 1)).unwrap().distance, 247);
        assert_eq!(t.bucket_for(&id_at(&local, 100, 1)).unwrap().distance, 239);
        assert_eq!(t.bucket_for(&id_at(&local, 0, 1)).unwrap().distance, 239);
        assert!(matches!(t.bucket_for(&local), Err(Error::SelfRecord)));
    }

    #[test]
    fn close_ids_clamp_into_lowest_bucket() {
        let (local, mut t) = fresh();
        for (i, d) in [238u8, 200, 100, 3].into_iter().enumerate() {
            let r = rec(id_at(&local, d, i as u64), 10, i as u8, 0, 1);
            assert_eq!(t.add_seen(r).unwrap(), AddOutcome::Added);
        }
        assert_eq!(t.bucket(239).unwrap().entries.len(), 4);
        t.audit().unwrap();
    }

    #[test]
    fn add_to_empty_bucket() {
        let (local, mut t) = fresh();
        let r = rec(id_at(&local, 250, 1), 1, 2, 3, 4);
        assert_eq!(t.add_seen(r).unwrap(), AddOutcome::Added);
        assert_eq!(t.bucket(250).unwrap().head(), Some(&r));
        assert!(matches!(
            t.add_seen(rec(local, 1, 1, 1, 1)),
            Err(Error::SelfRecord)
        ));
    }

    #[test]
    fn bump_moves_to_front() {
        let (local, mut t) = fresh();
        let recs: Vec<_> = (0..8)
            .map(|i| rec(id_at(&local, 255, i), 10, i as u8, 0, 1))
            .collect();
        for r in &recs {
            t.add_seen(*r).unwrap();
        }
        // Front-insertion puts recs[2] at index 5.
        let b = t.bucket(255).unwrap();
        assert_eq!(b.entries[5], recs[2]);
        assert_eq!(t.add_seen(recs[2]).unwrap(), AddOutcome::Bumped);
        let b = t.bucket(255).unwrap();
        assert_eq!(b.entries[0], recs[2]);
        assert_eq!(b.entries.len(), 8);
    }

    #[test]
    fn third_record_from_subnet_rejected_in_bucket() {
        let (local, mut t) = fresh();
        for i in 0..2 {
            assert_eq!(
                t.add_seen(rec(id_at(&local, 254, i), 10, 0, 0, i as u8))
                    .unwrap(),
                AddOutcome::Added
            );
        }
        assert_eq!(
            t.add_seen(rec(id_at(&local, 254, 9), 10, 0, 0, 9)).unwrap(),
            AddOutcome::RejectedSubnet
        );
        // Other buckets still accept that subnet.
        assert_eq!(
            t.add_seen(rec(id_at(&local, 253, 9), 10, 0, 0, 9)).unwrap(),
            AddOutcome::Added
        );
    }

    #[test]
    fn table_wide_subnet_limit() {
        let (local, mut t) = fresh();
        let mut added = 0;
        for (k, d) in (245u8..=255).enumerate() {
            let out = t
                .add_seen(rec(id_at(&local, d, k as u64), 10, 0, 0, k as u8))
                .unwrap();
            if out == AddOutcome::Added {
                added += 1;
            } else {
                assert_eq!(out, AddOutcome::RejectedSubnet);
            }
        }
        assert_eq!(added, TABLE_SUBNET_LIMIT);
        t.audit().unwrap();
    }

    #[test]
    fn subnet_limits_can_be_disabled() {
        let local = generate_id(&mut rng_from_seed(1));
        let mut t = DiscoveryTable::with_config(local, TableConfig::without_subnet_limits());
        for i in 0..5 {
            assert_eq!(
                t.add_seen(rec(id_at(&local, 254, i), 10, 0, 0, 1)).unwrap(),
                AddOutcome::Added
            );
        }
        t.audit().unwrap();
    }

    fn fill_bucket(
        t: &mut DiscoveryTable,
        local: &NodeId,
        d: u8,
        n: usize,
        salt: u64,
    ) -> Vec<NodeRecord> {
        (0..n)
            .map(|i| {
                let r = rec(id_at(local, d, salt + i as u64), 20, d, i as u8, 1);
                t.add_seen(r).unwrap();
                r
            })
            .collect()
    }

    #[test]
    fn full_bucket_uses_replacement_fifo() {
        let (local, mut t) = fresh();
        fill_bucket(&mut t, &local, 255, BUCKET_SIZE, 0);
        let extra: Vec<_> = (0..MAX_REPLACEMENTS + 1)
            .map(|i| rec(id_at(&local, 255, 1000 + i as u64), 30, i as u8, 0, 1))
            .collect();
        for r in &extra[..MAX_REPLACEMENTS] {
            assert_eq!(t.add_seen(*r).unwrap(), AddOutcome::ReplacementAdded);
        }
        assert_eq!(t.add_seen(extra[3]).unwrap(), AddOutcome::Noop);
        assert_eq!(
            t.add_seen(extra[MAX_REPLACEMENTS]).unwrap(),
            AddOutcome::ReplacementAdded
        );
        let b = t.bucket(255).unwrap();
        assert_eq!(b.replacements.len(), MAX_REPLACEMENTS);
        // Oldest inserted was evicted.
        assert!(!b.replacements.contains(&extra[0]));
        assert_eq!(b.replacements.back(), Some(&extra[MAX_REPLACEMENTS]));
        t.audit().unwrap();
    }

    #[test]
    fn revalidation_paths() {
        let (local, mut t) = fresh();
        let mut rng = rng_from_seed(4);
        assert_eq!(
            t.revalidate_step(&mut rng, |_| true),
            RevalidationReport::Empty
        );

        let recs = fill_bucket(&mut t, &local, 255, BUCKET_SIZE, 0);
        let tail = recs[0];
        match t.revalidate_step(&mut rng, |_| true) {
            RevalidationReport::Alive {
                distance: 255,
                node,
            } => assert_eq!(node, tail),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.bucket(255).unwrap().head(), Some(&tail));
        assert_eq!(t.len(), BUCKET_SIZE);

        let r1 = rec(id_at(&local, 255, 500), 40, 0, 0, 1);
        t.add_seen(r1).unwrap();
        let dead = *t.bucket(255).unwrap().entries.back().unwrap();
        match t.revalidate_step(&mut rng, |_| false) {
            RevalidationReport::Replaced {
                removed, promoted, ..
            } => {
                assert_eq!(removed, dead);
                assert_eq!(promoted, Some(r1));
            }
            other => panic!("{other:?}"),
        }
        let b = t.bucket(255).unwrap();
        assert_eq!(b.entries.back(), Some(&r1));
        assert!(b.replacements.is_empty());
        assert_eq!(b.entries.len(), BUCKET_SIZE);

        match t.revalidate_step(&mut rng, |_| false) {
            RevalidationReport::Replaced { promoted: None, .. } => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(t.len(), BUCKET_SIZE - 1);
        t.audit().unwrap();
    }

    #[test]
    fn heads_mode() {
        let (local, mut t) = fresh();
        let mut rng = rng_from_seed(5);
        let r = fill_bucket(&mut t, &local, 250, 3, 0);
        let got = t.read_random_nodes(4, &mut rng, ReadMode::Heads);
        assert_eq!(got, vec![r[2]]);
        assert!(t.read_random_nodes(0, &mut rng, ReadMode::Heads).is_empty());
    }

    #[test]
    fn heads_mode_returns_only_adversarial_heads() {
        let (local, mut t) = fresh();
        let mut rng = rng_from_seed(6);
        let mut adversarial = Vec::new();
        for d in 239u8..=255 {
            fill_bucket(&mut t, &local, d, 3, d as u64 * 10);
            let s = rec(id_at(&local, d, 9000 + d as u64), 66, 0, d, 1);
            t.add_seen(s).unwrap();
            adversarial.push(s.id);
        }
        for _ in 0..1000 {
            let got = t.read_random_nodes(4, &mut rng, ReadMode::Heads);
            assert_eq!(got.len(), 4);
            assert!(got.iter().all(|r| adversarial.contains(&r.id)));
            let mut ids: Vec<_> = got.iter().map(|r| r.id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 4);
        }
    }

    #[test]
    fn uniform_mode_samples_everything() {
        let (local, mut t) = fresh();
        let mut rng = rng_from_seed(7);
        for d in 250u8..=255 {
            fill_bucket(&mut t, &local, d, 4, d as u64);
        }
        let got = t.read_random_nodes(100, &mut rng, ReadMode::Uniform);
        assert_eq!(got.len(), 24);
        let mut seen = std::collections::HashMap::<NodeId, u32>::new();
        for _ in 0..24_000 {
            for r in t.read_random_nodes(1, &mut rng, ReadMode::Uniform) {
                *seen.entry(r.id).or_default() += 1;
            }
        }
        assert_eq!(seen.len(), 24);
        assert!(seen.values().all(|&c| (800..1200).contains(&c)));
    }

    #[test]
    fn closest_known_matches_scan() {
        let mut rng = rng_from_seed(8);
        let local = generate_id(&mut rng);
        let mut t = DiscoveryTable::with_config(local, TableConfig::without_subnet_limits());
        for i in 0..3000u32 {
            let r = NodeRecord::new(generate_id(&mut rng), Ipv4Addr::from(0x0a00_0000 + i), 1);
            t.add_seen(r).unwrap();
        }
        for _ in 0..100 {
            let target = generate_id(&mut rng);
            let mut all: Vec<_> = t.entries().copied().collect();
            all.sort_by(|a, b| xor_cmp(&a.id, &b.id, &target));
            all.truncate(16);
            assert_eq!(t.closest_known(&target, 16), all);
        }
        let small = DiscoveryTable::new(local);
        assert!(small.closest_known(&local, 16).is_empty());
    }

    #[test]
    fn snapshot_json_shape() {
        let (local, mut t) = fresh();
        t.add_seen(rec(id_at(&local, 255, 1), 1, 2, 3, 4)).unwrap();
        let v = serde_json::to_value(t.snapshot()).unwrap();
        assert_eq!(v["local_id"], local.to_hex());
        let buckets = v["buckets"].as_array().unwrap();
        assert_eq!(buckets.len(), 17);
        let last = &buckets[16];
        assert_eq!(last["distance"], 255);
        let e = &last["entries"][0];
        assert_eq!(e["ip"], "1.2.3.4");
        assert_eq!(e["udp_port"], 30303);
        assert!(e["id"].is_string());
        assert!(last["replacements"].as_array().unwrap().is_empty());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Seen { d: u8, salt: u8, subnet: u8 },
        Revalidate { live: bool },
        Remove { d: u8, salt: u8 },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (247u8..=255, 0u8..40, 0u8..6).prop_map(|(d, salt, subnet)| Op::Seen { d, salt, subnet }),
            2 => any::<bool>().prop_map(|live| Op::Revalidate { live }),
            1 => (247u8..=255, 0u8..40).prop_map(|(d, salt)| Op::Remove { d, salt }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn invariants_hold_after_every_mutation(ops in prop::collection::vec(op(), 1..300), seed in any::<u64>()) {
            let local = generate_id(&mut rng_from_seed(seed));
            let mut t = DiscoveryTable::new(local);
            let mut rng = rng_from_seed(seed ^ 1);
            for op in ops {
                match op {
                    Op::Seen { d, salt, subnet } => {
                        let r = rec(id_at(&local, d, salt as u64 * 1000 + d as u64), 10, 0, subnet, salt);
                        let out = t.add_seen(r).unwrap();
                        if out == AddOutcome::Bumped || out == AddOutcome::Added {
                            prop_assert_eq!(t.bucket(d).unwrap().head().map(|h| h.id), Some(r.id));
                        }
                    }
                    Op::Revalidate { live } => { t.revalidate_step(&mut rng, |_| live); }
                    Op::Remove { d, salt } => { t.remove(&id_at(&local, d, salt as u64 * 1000 + d as u64)); }
                }
                prop_assert_eq!(t.audit(), Ok(()));
            }
        }
    }
}
