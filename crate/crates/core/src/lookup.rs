//! Iterative closest-node lookup.
//!
//! Every round queries all not-yet-queried members of the candidate set,
//! merges the answers and keeps the 16 closest to the target. The lookup
//! stops once a round leaves the candidate set unchanged.

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{generate_id, xor_cmp, NodeId, NodeRecord};
use crate::table::DiscoveryTable;

/// Candidate set size and the default response limit.
pub const LOOKUP_SIZE: usize = 16;
pub const MAX_LOOKUP_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupResult {
    pub target: NodeId,
    pub nodes: Vec<NodeRecord>,
    pub rounds: usize,
    /// Ids that were sent a FindNode, in query order.
    pub queried: Vec<NodeId>,
    /// Number of queries issued in each round.
    pub queried_per_round: Vec<usize>,
}

impl LookupResult {
    pub fn was_queried(&self, id: &NodeId) -> bool {
        self.queried.contains(id)
    }
}

fn merge_closest(
    target: &NodeId,
    set: &mut Vec<NodeRecord>,
    incoming: &[NodeRecord],
    local: &NodeId,
) {
    for r in incoming {
        if r.id != *local && !set.iter().any(|s| s.id == r.id) {
            set.push(*r);
        }
    }
    set.sort_by(|a, b| xor_cmp(&a.id, &b.id, target));
    set.truncate(LOOKUP_SIZE);
}

/// Run a lookup for `target` starting from `table`'s closest entries.
///
/// `query(peer, target)` returns the peer's FindNode answer; an empty list
/// stands for a timeout.
pub fn run_lookup<F>(table: &DiscoveryTable, target: &NodeId, mut query: F) -> Result<LookupResult>
where
    F: FnMut(&NodeRecord, &NodeId) -> Vec<NodeRecord>,
{
    let local = *table.local_id();
    let mut candidates = table.closest_known(target, LOOKUP_SIZE);
    let mut queried = BTreeSet::new();
    let mut order = Vec::new();
    let mut per_round = Vec::new();

    loop {
        if per_round.len() == MAX_LOOKUP_ROUNDS {
            return Err(Error::LookupDiverged(MAX_LOOKUP_ROUNDS));
        }
        let pending: Vec<NodeRecord> = candidates
            .iter()
            .filter(|c| !queried.contains(&c.id))
            .copied()
            .collect();
        let mut next = candidates.clone();
        for peer in &pending {
            queried.insert(peer.id);
            order.push(peer.id);
            let answer = query(peer, target);
            merge_closest(target, &mut next, &answer, &local);
        }
        per_round.push(pending.len());
        if next == candidates {
            break;
        }
        candidates = next;
    }

    Ok(LookupResult {
        target: *target,
        nodes: candidates,
        rounds: per_round.len(),
        queried: order,
        queried_per_round: per_round,
    })
}

/// Answer a FindNode from the responder's own table.
pub fn handle_findnode(table: &DiscoveryTable, target: &NodeId, limit: usize) -> Vec<NodeRecord> {
    table.closest_known(target, limit)
}

pub fn random_target<R: RngCore + ?Sized>(rng: &mut R) -> NodeId {
    generate_id(rng)
}
