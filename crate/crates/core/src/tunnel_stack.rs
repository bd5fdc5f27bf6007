//! User-plane data path: flow classification, TEID tunnels, BAP
//! encapsulation and per-link RLC queues.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::bap::{bap_address, BapHeader, DEFAULT_PATH, HEADER_LEN};
use crate::topology::{LinkDirection, NodeId};

/// GTP-U (8) + UDP (8) + IPv4 (20).
pub const TUNNEL_HEADER_BYTES: u32 = 36;
pub const BAP_HEADER_BYTES: u32 = HEADER_LEN as u32;
pub const DEFAULT_QUEUE_BYTES: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Teid(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Pdu,
    NonPdu,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StackError {
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("no forwarding entry for TEID {0:?}")]
    NoForwardingEntry(Teid),
    #[error("duplicate TEID {0:?}")]
    DuplicateTeid(Teid),
    #[error("duplicate flow id {0}")]
    DuplicateFlow(FlowId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub direction: LinkDirection,
    pub teid: Teid,
    pub kind: FlowKind,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    flows: Vec<Flow>,
    index: HashMap<FlowId, usize>,
}

impl FlowTable {
    pub fn new(flows: Vec<Flow>) -> Result<Self, StackError> {
        let mut index = HashMap::new();
        let mut teids = HashMap::new();
        for (i, f) in flows.iter().enumerate() {
            if index.insert(f.id, i).is_some() {
                return Err(StackError::DuplicateFlow(f.id));
            }
            if teids.insert(f.teid, f.id).is_some() {
                return Err(StackError::DuplicateTeid(f.teid));
            }
        }
        Ok(Self { flows, index })
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn get(&self, id: FlowId) -> Option<&Flow> {
        self.index.get(&id).map(|&i| &self.flows[i])
    }

    pub fn classify(&self, flow: FlowId) -> Result<Teid, StackError> {
        self.get(flow).map(|f| f.teid).ok_or(StackError::UnknownFlow(flow))
    }

    /// TEID → (BAP destination, path) entries used at tunnel ingress.
    pub fn forwarding_table(&self) -> HashMap<Teid, (u16, u16)> {
        self.flows.iter().map(|f| (f.teid, (bap_address(f.dst), DEFAULT_PATH))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowId,
    pub payload_bytes: u32,
    pub tunnel: Option<Teid>,
    pub bap: Option<BapHeader>,
}

impl Packet {
    pub fn new(id: u64, flow: FlowId, payload_bytes: u32) -> Self {
        Self { id, flow, payload_bytes, tunnel: None, bap: None }
    }

    /// On-air size including any headers present.
    pub fn size_bytes(&self) -> u32 {
        self.payload_bytes
            + if self.tunnel.is_some() { TUNNEL_HEADER_BYTES } else { 0 }
            + if self.bap.is_some() { BAP_HEADER_BYTES } else { 0 }
    }

    pub fn size_bits(&self) -> u64 {
        u64::from(self.size_bytes()) * 8
    }
}

/// Adds the tunnel header (PDU flows only) and the BAP header. Non-PDU
/// packets carry the LAN flag.
pub fn encapsulate(packet: Packet, flow: &Flow, forwarding: &HashMap<Teid, (u16, u16)>) -> Result<Packet, StackError> {
    let (dest, path) = *forwarding.get(&flow.teid).ok_or(StackError::NoForwardingEntry(flow.teid))?;
    let mut out = packet;
    match flow.kind {
        FlowKind::Pdu => {
            out.tunnel = Some(flow.teid);
            out.bap = Some(BapHeader::data(dest, path, false));
        }
        FlowKind::NonPdu => {
            out.tunnel = None;
            out.bap = Some(BapHeader::data(dest, path, true));
        }
    }
    Ok(out)
}

pub fn decapsulate(packet: Packet) -> Packet {
    Packet { tunnel: None, bap: None, ..packet }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    DroppedOverflow,
}

/// RLC-UM queue with drop-tail admission.
#[derive(Debug, Clone)]
pub struct RlcQueue {
    pub max_bytes: u64,
    cur_bytes: u64,
    fifo: VecDeque<Packet>,
}

impl RlcQueue {
    pub fn new(max_bytes: u64) -> Self {
        Self { max_bytes, cur_bytes: 0, fifo: VecDeque::new() }
    }

    pub fn cur_bytes(&self) -> u64 {
        self.cur_bytes
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.fifo.iter()
    }

    pub fn enqueue(&mut self, packet: Packet) -> EnqueueOutcome {
        let size = u64::from(packet.size_bytes());
        if self.cur_bytes + size > self.max_bytes {
            return EnqueueOutcome::DroppedOverflow;
        }
        self.cur_bytes += size;
        self.fifo.push_back(packet);
        EnqueueOutcome::Accepted
    }

    /// Removes the longest FIFO prefix that fits in `budget_bits`.
    pub fn dequeue_up_to(&mut self, budget_bits: u64) -> Vec<Packet> {
        let mut out = Vec::new();
        let mut left = budget_bits;
        while let Some(head) = self.fifo.front() {
            let bits = head.size_bits();
            if bits > left {
                break;
            }
            left -= bits;
            self.cur_bytes -= u64::from(head.size_bytes());
            out.extend(self.fifo.pop_front());
        }
        out
    }

    /// Drains everything left, e.g. at end of run.
    pub fn drain(&mut self) -> Vec<Packet> {
        self.cur_bytes = 0;
        self.fifo.drain(..).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Delivered,
    DroppedOverflow,
    DroppedNoRoute,
    InFlight,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "delivered",
            Outcome::DroppedOverflow => "dropped_overflow",
            Outcome::DroppedNoRoute => "dropped_no_route",
            Outcome::InFlight => "in_flight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "delivered" => Outcome::Delivered,
            "dropped_overflow" => Outcome::DroppedOverflow,
            "dropped_no_route" => Outcome::DroppedNoRoute,
            "in_flight" => Outcome::InFlight,
            _ => return None,
        })
    }
}

pub type HopTrace = SmallVec<[NodeId; 6]>;

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub pkt_id: u64,
    pub flow_id: FlowId,
    pub size_bytes: u32,
    pub created_slot: u64,
    pub created_at_s: f64,
    pub delivered_slot: Option<u64>,
    pub delivered_at_s: Option<f64>,
    pub hop_trace: HopTrace,
    pub outcome: Outcome,
}

impl PacketRecord {
    pub fn latency_s(&self) -> Option<f64> {
        self.delivered_at_s.map(|t| t - self.created_at_s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conservation {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_overflow: u64,
    pub dropped_no_route: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a PacketRecord>) -> Self {
        let mut c = Conservation::default();
        for r in records {
            c.generated += 1;
            match r.outcome {
                Outcome::Delivered => c.delivered += 1,
                Outcome::DroppedOverflow => c.dropped_overflow += 1,
                Outcome::DroppedNoRoute => c.dropped_no_route += 1,
                Outcome::InFlight => c.in_flight += 1,
            }
        }
        c
    }

    pub fn holds(&self) -> bool {
        self.generated == self.delivered + self.dropped_overflow + self.dropped_no_route + self.in_flight
    }
}
