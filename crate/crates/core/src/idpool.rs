//! Pre-computed Sybil id pool.
//!
//! Ids are kept in a sorted array. Every contiguous range of ids sharing a
//! prefix is a subtree of the binary trie over the id space, so an exact
//! k-nearest query by xor-distance walks the trie implicitly: at each level
//! the half agreeing with the target's next bit is strictly closer than the
//! other half and is emitted first.

use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ident::{generate_id, NodeId};
use crate::par::Execution;
use crate::rng::derived_rng;

pub const POOL_MAGIC: &[u8; 6] = b"SPOOL1";

const BUILD_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SybilPool {
    ids: Vec<NodeId>,
}

impl SybilPool {
    /// Build from arbitrary ids; sorts and rejects duplicates.
    pub fn from_ids(mut ids: Vec<NodeId>) -> Result<Self> {
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("ids", "pool ids must be distinct"));
        }
        Ok(SybilPool { ids })
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in ascending order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.ids.binary_search(id).is_ok()
    }

    /// The `min(k, n)` ids closest to `target` by xor-distance, ascending.
    pub fn closest(&self, target: &NodeId, k: usize) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(k.min(self.ids.len()));
        collect_closest(&self.ids, target, 0, k, &mut out);
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(POOL_MAGIC)?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for id in &self.ids {
            w.write_all(id.as_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != POOL_MAGIC {
            return Err(Error::PoolFormat("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let n = u64::from_le_bytes(len) as usize;
        let mut ids = Vec::with_capacity(n);
        let mut buf = [0u8; 32];
        for i in 0..n {
            r.read_exact(&mut buf)
                .map_err(|e| Error::PoolFormat(format!("truncated after {i} of {n} ids: {e}")))?;
            ids.push(NodeId::from_bytes(buf));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::PoolFormat("trailing bytes after last id".into()));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::PoolFormat("ids are not strictly ascending".into()));
        }
        Ok(SybilPool { ids })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(f))
    }
}

fn collect_closest(
    ids: &[NodeId],
    target: &NodeId,
    mut bit: usize,
    k: usize,
    out: &mut Vec<NodeId>,
) {
    if ids.is_empty() || out.len() >= k {
        return;
    }
    if ids.len() == 1 {
        out.push(ids[0]);
        return;
    }
    // Everything in the slice shares the prefix up to the first bit where its
    // extremes differ; skip straight to it.
    let first = ids[0];
    let last = ids[ids.len() - 1];
    bit = bit.max(first.xor(&last).leading_zeros() as usize);
    let split = ids.partition_point(|id| !id.bit(bit));
    let (zeros, ones) = ids.split_at(split);
    let (near, far) = if target.bit(bit) {
        (ones, zeros)
    } else {
        (zeros, ones)
    };
    collect_closest(near, target, bit + 1, k, out);
    collect_closest(far, target, bit + 1, k, out);
}

/// Draw a pool of `n` distinct uniform ids.
///
/// Ids are generated in fixed-size chunks, each from its own stream derived
/// from one draw of `rng`, so the pool depends only on the seed.
pub fn build_pool<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SybilPool> {
    build_pool_with(n, rng, Execution::default())
}

pub fn build_pool_with<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<SybilPool> {
    if n == 0 {
        return Err(Error::param("n", "pool size must be at least 1"));
    }
    let seed: u64 = rng.random();
    let chunks = n.div_ceil(BUILD_CHUNK);
    let parts = exec.map_range(chunks, |c| {
        let len = BUILD_CHUNK.min(n - c * BUILD_CHUNK);
        let mut stream = derived_rng(seed, c as u64);
        (0..len)
            .map(|_| generate_id(&mut stream))
            .collect::<Vec<_>>()
    });
    let mut ids: Vec<NodeId> = parts.into_iter().flatten().collect();
    ids.sort_unstable();
    ids.dedup();
    // Top up after (astronomically unlikely) collisions.
    let mut extra = derived_rng(seed, u64::MAX);
    while ids.len() < n {
        let id = generate_id(&mut extra);
        if let Err(pos) = ids.binary_search(&id) {
            ids.insert(pos, id);
        }
    }
    Ok(SybilPool { ids })
}

/// Probability that the smallest of `n` fresh uniform ids beats the smallest
/// of `m` others: `1 - (1 - 1/(m+1))^n`.
pub fn min_beats_network_prob(m: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if m == 0 {
        return 1.0;
    }
    let q = -1.0 / (m as f64 + 1.0);
    -((n as f64) * q.ln_1p()).exp_m1()
}
