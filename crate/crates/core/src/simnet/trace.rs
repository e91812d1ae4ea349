//! Event trace and its newline-delimited JSON form.

use std::io::{self, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ident::NodeId;
use crate::peermgr::{Direction, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Ping,
    Pong,
    Findnode,
    Neighbors,
    Connect,
    Disconnect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    VictimStart,
    AttackStart,
    Connect {
        peer: NodeId,
        direction: Direction,
        provenance: Provenance,
        adversarial: bool,
    },
    /// The sampled lifetime elapsed.
    Disconnect {
        peer: NodeId,
        direction: Direction,
    },
    DialFailed {
        peer: NodeId,
        provenance: Provenance,
    },
    Lookup {
        target: NodeId,
        rounds: usize,
        queried: usize,
        adversarial_results: usize,
        duration_ns: u64,
    },
    TableAdd {
        peer: NodeId,
        bucket: u8,
        replacement: bool,
    },
    TableEvict {
        peer: NodeId,
        promoted: Option<NodeId>,
    },
    Message {
        kind: MessageKind,
        from: NodeId,
        to: NodeId,
    },
    Checkpoint {
        outbound: usize,
        inbound: usize,
        adversarial_outbound: usize,
        adversarial_inbound: usize,
        table_size: usize,
        table_adversarial: usize,
        eclipsed: bool,
    },
    Eclipsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_ns: u64,
    /// Node the event happened at.
    pub node: NodeId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Eclipsed,
    Timeout,
}

/// Final trace line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub outcome: Outcome,
    /// Time from attack start to eclipse.
    pub eclipse_time_ns: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: Vec<TraceEvent>,
    pub result: OutcomeRecord,
}

pub(crate) fn nanos(t: Duration) -> u64 {
    t.as_nanos() as u64
}

impl SimTrace {
    pub fn outcome(&self) -> Outcome {
        self.result.outcome
    }

    pub fn eclipse_time(&self) -> Option<Duration> {
        self.result.eclipse_time_ns.map(Duration::from_nanos)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &self.result)?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn connection_events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| {
            matches!(
                e.kind,
                EventKind::Connect { .. } | EventKind::Disconnect { .. }
            )
        })
    }
}
