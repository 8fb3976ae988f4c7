use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sim::packet::PacketKind;
use crate::sim::topology::NodeId;

/// What happened to a packet at a node. The last five variants are terminal:
/// every originated packet ends in exactly one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Originate,
    Transmit,
    Receive,
    Delivered,
    /// Link loss, including a send toward a node out of radio range.
    Lost,
    TtlExpired,
    /// Drop rule, missing rule, or full table.
    Rejected,
    InFlight,
}

impl TraceEvent {
    pub fn is_terminal(self) -> bool {
        !matches!(self, TraceEvent::Originate | TraceEvent::Transmit | TraceEvent::Receive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_us: u64,
    pub node: NodeId,
    /// Next hop for transmissions and losses, previous hop otherwise.
    pub peer: Option<NodeId>,
    pub origin: NodeId,
    pub event: TraceEvent,
    pub kind: PacketKind,
    pub bytes: u16,
    pub created_us: u64,
    pub bogus: bool,
    pub tampered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Infrastructure {
    pub controller: NodeId,
    pub data_sink: NodeId,
    pub mgmt_sink: NodeId,
}

impl Infrastructure {
    pub fn contains(&self, node: NodeId) -> bool {
        node == self.controller || node == self.data_sink || node == self.mgmt_sink
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub node_count: usize,
    pub infrastructure: Option<Infrastructure>,
    pub duration_us: u64,
    pub records: Vec<TraceRecord>,
}

/// Per-fate packet counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub originated: u64,
    pub delivered: u64,
    pub lost: u64,
    pub ttl_expired: u64,
    pub rejected: u64,
    pub in_flight: u64,
}

impl Accounting {
    pub fn terminal(&self) -> u64 {
        self.delivered + self.lost + self.ttl_expired + self.rejected + self.in_flight
    }

    pub fn reconciles(&self) -> bool {
        self.originated == self.terminal()
    }
}

impl EventTrace {
    pub fn accounting(&self) -> Accounting {
        let mut a = Accounting::default();
        for r in &self.records {
            match r.event {
                TraceEvent::Originate => a.originated += 1,
                TraceEvent::Delivered => a.delivered += 1,
                TraceEvent::Lost => a.lost += 1,
                TraceEvent::TtlExpired => a.ttl_expired += 1,
                TraceEvent::Rejected => a.rejected += 1,
                TraceEvent::InFlight => a.in_flight += 1,
                TraceEvent::Transmit | TraceEvent::Receive => {}
            }
        }
        a
    }

    /// One JSON object per line.
    pub fn write_ndjson(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
