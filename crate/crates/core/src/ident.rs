//! Node identities, the two distance notions used by discovery, and Sybil ID
//! mining.
//!
//! A [`NodeId`] stands in for the 256-bit hash of a node's public key. Key
//! generation is modeled as a uniform 256-bit draw from a seeded source; only
//! uniformity matters for bucket placement and lookup ordering.
//!
//! Two metrics coexist:
//! - the *log-distance* `floor(log2(a ^ b))`, which selects the bucket;
//! - the plain *xor-distance* `a ^ b` read as an unsigned integer, which
//!   orders lookup candidates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::derived_rng;

pub const ID_BITS: usize = 256;

/// Smallest log-distance that still has its own bucket.
pub const MIN_BUCKET_DISTANCE: u8 = 239;
/// Largest possible log-distance.
pub const MAX_DISTANCE: u8 = 255;

/// Mining gives up after this many multiples of the expected attempt count.
pub const MINING_CAP_FACTOR: u64 = 64;

/// A 256-bit node identifier, compared as a big-endian unsigned integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId([u8; 32]);

impl NodeId {
    pub const ZERO: NodeId = NodeId([0; 32]);

    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        NodeId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// The id whose lowest 64 bits are `v`; handy in tests.
    pub fn from_low_u64(v: u64) -> Self {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&v.to_be_bytes());
        NodeId(b)
    }

    /// Bit `i`, counted from the most significant bit (bit 0).
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    #[inline]
    pub fn xor(&self, other: &NodeId) -> NodeId {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        NodeId(out)
    }

    /// Number of leading zero bits (256 for the zero id).
    pub fn leading_zeros(&self) -> u32 {
        let mut n = 0;
        for chunk in self.0.chunks_exact(8) {
            let word = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
            if word != 0 {
                return n + word.leading_zeros();
            }
            n += 64;
        }
        n
    }

    /// Top 64 bits as an integer.
    pub fn high_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().expect("8 bytes"))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Short form for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({}..)", self.short())
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.len() != 64 {
            return Err(Error::InvalidNodeId(format!(
                "expected 64 hex characters, got {}",
                s.len()
            )));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::InvalidNodeId(e.to_string()))?;
        Ok(NodeId(out))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `floor(log2(a ^ b))`, i.e. 255 minus the common-prefix length.
///
/// Returns `None` when `a == b`: the logarithm is undefined there, and 0 is a
/// legitimate distance for ids that differ only in the last bit.
pub fn log_distance(a: &NodeId, b: &NodeId) -> Option<u8> {
    let lz = a.xor(b).leading_zeros();
    if lz as usize == ID_BITS {
        None
    } else {
        Some((ID_BITS as u32 - 1 - lz) as u8)
    }
}

/// Compare `a` and `b` by xor-distance to `target`.
#[inline]
pub fn xor_cmp(a: &NodeId, b: &NodeId, target: &NodeId) -> Ordering {
    for i in 0..32 {
        let da = a.0[i] ^ target.0[i];
        let db = b.0[i] ^ target.0[i];
        if da != db {
            return da.cmp(&db);
        }
    }
    Ordering::Equal
}

/// `true` iff `a ^ target < b ^ target`.
#[inline]
pub fn xor_less(a: &NodeId, b: &NodeId, target: &NodeId) -> bool {
    xor_cmp(a, b, target) == Ordering::Less
}

/// Draw a uniformly distributed id.
pub fn generate_id<R: RngCore + ?Sized>(rng: &mut R) -> NodeId {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    NodeId(b)
}

/// First 24 bits of an IPv4 address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubnetKey(pub [u8; 3]);

impl SubnetKey {
    pub fn of(ip: Ipv4Addr) -> Self {
        let o = ip.octets();
        SubnetKey([o[0], o[1], o[2]])
    }

    /// Address `host` inside this /24.
    pub fn host(&self, host: u8) -> Ipv4Addr {
        Ipv4Addr::new(self.0[0], self.0[1], self.0[2], host)
    }
}

impl fmt::Display for SubnetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}.0/24", self.0[0], self.0[1], self.0[2])
    }
}

/// Contact information for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub ip: Ipv4Addr,
    pub udp_port: u16,
    pub tcp_port: u16,
}

impl NodeRecord {
    pub fn new(id: NodeId, ip: Ipv4Addr, port: u16) -> Self {
        NodeRecord {
            id,
            ip,
            udp_port: port,
            tcp_port: port,
        }
    }

    pub fn subnet(&self) -> SubnetKey {
        SubnetKey::of(self.ip)
    }
}

/// Result of mining one id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub id: NodeId,
    /// Ids generated, including the successful one.
    pub attempts: u64,
}

fn check_mining_distance(d: u8) -> Result<()> {
    if d < MIN_BUCKET_DISTANCE {
        return Err(Error::DistanceOutOfRange(d as u16));
    }
    Ok(())
}

/// Expected attempts to hit log-distance `d` with one uniform draw.
fn expected_attempts(d: u8) -> u64 {
    1u64 << (ID_BITS as u32 - d as u32)
}

/// Generate ids until one lands at log-distance `d` from `local`.
pub fn mine_id_for_distance<R: RngCore + ?Sized>(
    local: &NodeId,
    d: u8,
    rng: &mut R,
) -> Result<MiningReport> {
    check_mining_distance(d)?;
    let cap = expected_attempts(d) * MINING_CAP_FACTOR;
    mine_with_cap(local, d, cap, rng)
}

fn mine_with_cap<R: RngCore + ?Sized>(
    local: &NodeId,
    d: u8,
    cap: u64,
    rng: &mut R,
) -> Result<MiningReport> {
    let mut attempts = 0u64;
    while attempts < cap {
        attempts += 1;
        let id = generate_id(rng);
        if log_distance(local, &id) == Some(d) {
            return Ok(MiningReport { id, attempts });
        }
    }
    Err(Error::MiningCapExceeded {
        distance: d,
        attempts,
    })
}

/// One mined id per bucket distance 239..=255.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSet {
    pub local: NodeId,
    pub ids: BTreeMap<u8, MiningReport>,
}

impl BucketSet {
    pub fn total_attempts(&self) -> u64 {
        self.ids.values().map(|r| r.attempts).sum()
    }
}

/// Mine an id for every distance 239..=255.
///
/// Each distance is mined from its own stream derived from one draw of `rng`,
/// so the result is the same whether distances run sequentially or in
/// parallel.
pub fn mine_bucket_set<R: Rng + ?Sized>(local: &NodeId, rng: &mut R) -> Result<BucketSet> {
    mine_bucket_set_with(local, rng, Execution::default())
}

pub fn mine_bucket_set_with<R: Rng + ?Sized>(
    local: &NodeId,
    rng: &mut R,
    exec: Execution,
) -> Result<BucketSet> {
    let seed: u64 = rng.random();
    let distances: Vec<u8> = (MIN_BUCKET_DISTANCE..=MAX_DISTANCE).collect();
    let mined = exec.map(distances, |d| {
        let mut stream = derived_rng(seed, d as u64);
        mine_id_for_distance(local, d, &mut stream).map(|r| (d, r))
    });
    let ids = mined.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    Ok(BucketSet { local: *local, ids })
}
