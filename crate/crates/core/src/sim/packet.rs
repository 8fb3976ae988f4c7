use serde::{Deserialize, Serialize};

use crate::sim::routing::{Action, Match};
use crate::sim::topology::NodeId;

/// Southbound message types plus periodic management traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    FlowRequest,
    FlowSetup,
    FlowIdRegister,
    Ack,
    NeighborReport,
    Management,
}

impl PacketKind {
    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Data | PacketKind::Management)
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Data => "data",
            PacketKind::FlowRequest => "flow_request",
            PacketKind::FlowSetup => "flow_setup",
            PacketKind::FlowIdRegister => "flow_id_register",
            PacketKind::Ack => "ack",
            PacketKind::NeighborReport => "neighbor_report",
            PacketKind::Management => "management",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dest {
    Node(NodeId),
    Flow(u32),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadMeta {
    pub tampered: bool,
    /// Injected by an FDFF attacker.
    pub bogus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Body {
    Empty,
    Request { flow: u32 },
    Setup { matcher: Match, action: Action },
    /// Reported neighbors with their link metric in `[0, 1]`.
    Report(Vec<(NodeId, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRoute {
    pub hops: Vec<NodeId>,
    /// Index of the node currently holding the packet.
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub kind: PacketKind,
    pub src: NodeId,
    pub dst: Dest,
    pub flow_id: Option<u32>,
    pub ttl: u8,
    pub meta: PayloadMeta,
    pub created_us: u64,
    pub body: Body,
    pub route: Option<SourceRoute>,
}

const HEADER_BYTES: usize = 12;

impl Packet {
    /// On-air size used by the transmit cost model.
    pub fn size_bytes(&self, payload: usize) -> usize {
        let body = match (&self.body, self.kind) {
            (_, PacketKind::Data | PacketKind::Management) => payload,
            (Body::Report(list), _) => 2 + 3 * list.len(),
            (Body::Setup { .. }, _) => 8,
            (Body::Request { .. }, _) => 6,
            (_, PacketKind::FlowIdRegister) => 4,
            _ => 2,
        };
        let route = self.route.as_ref().map_or(0, |r| 2 * r.hops.len());
        HEADER_BYTES + body + route
    }
}
