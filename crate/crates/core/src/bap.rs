//! BAP Data PDU header codec, routing tables and forwarding decisions.
//!
//! Wire layout, MSB first:
//!
//! ```text
//! byte0: D/C R2 R1 R0 DEST9 DEST8 DEST7 DEST6
//! byte1: DEST5 .. DEST0 PATH9 PATH8
//! byte2: PATH7 .. PATH0
//! ```

use std::collections::HashMap;

use thiserror::Error;

use crate::topology::{LinkDirection, NodeId, Topology, TopologyError};

pub const HEADER_LEN: usize = 3;
pub const MAX_FIELD: u16 = 1023;
/// Reserved bit marking non-PDU (LAN) traffic.
pub const LAN_FLAG: u8 = 0b001;
/// Single path per destination in spanning-tree topologies.
pub const DEFAULT_PATH: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BapError {
    #[error("{field} = {value} does not fit in 10 bits")]
    Range { field: &'static str, value: u16 },
    #[error("reserved bits {0:#05b} do not fit in 3 bits")]
    ReservedRange(u8),
    #[error("BAP header must be {HEADER_LEN} bytes, got {0}")]
    Framing(usize),
    #[error("no {direction} route at node {node} for destination {dest} path {path}")]
    NoRoute { node: NodeId, dest: u16, path: u16, direction: LinkDirection },
    #[error("BAP address {0} is not assigned")]
    UnknownAddress(u16),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BapHeader {
    /// false = Data PDU, true = Control PDU.
    pub dc: bool,
    pub dest: u16,
    pub path: u16,
    pub r_bits: u8,
}

impl BapHeader {
    pub fn data(dest: u16, path: u16, lan: bool) -> Self {
        Self { dc: false, dest, path, r_bits: if lan { LAN_FLAG } else { 0 } }
    }

    pub fn is_lan(&self) -> bool {
        self.r_bits & LAN_FLAG != 0
    }
}

pub fn encode_header(h: &BapHeader) -> Result<[u8; HEADER_LEN], BapError> {
    if h.dest > MAX_FIELD {
        return Err(BapError::Range { field: "dest", value: h.dest });
    }
    if h.path > MAX_FIELD {
        return Err(BapError::Range { field: "path", value: h.path });
    }
    if h.r_bits > 0b111 {
        return Err(BapError::ReservedRange(h.r_bits));
    }
    let word = (u32::from(h.dc) << 23) | (u32::from(h.r_bits) << 20) | (u32::from(h.dest) << 10) | u32::from(h.path);
    Ok([(word >> 16) as u8, (word >> 8) as u8, word as u8])
}

pub fn decode_header(bytes: &[u8]) -> Result<BapHeader, BapError> {
    let b: [u8; HEADER_LEN] = bytes.try_into().map_err(|_| BapError::Framing(bytes.len()))?;
    let word = (u32::from(b[0]) << 16) | (u32::from(b[1]) << 8) | u32::from(b[2]);
    Ok(BapHeader {
        dc: word >> 23 != 0,
        r_bits: ((word >> 20) & 0b111) as u8,
        dest: ((word >> 10) & 0x3ff) as u16,
        path: (word & 0x3ff) as u16,
    })
}

pub fn bap_address(n: NodeId) -> u16 {
    n.0 + 1
}

pub fn node_for_address(addr: u16) -> Option<NodeId> {
    addr.checked_sub(1).map(NodeId)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingTable {
    pub direction: Option<LinkDirection>,
    entries: HashMap<(u16, u16), NodeId>,
}

impl RoutingTable {
    fn new(direction: LinkDirection) -> Self {
        Self { direction: Some(direction), entries: HashMap::new() }
    }

    pub fn lookup(&self, dest: u16, path: u16) -> Option<NodeId> {
        self.entries.get(&(dest, path)).copied()
    }

    pub fn insert(&mut self, dest: u16, path: u16, next_hop: NodeId) {
        self.entries.insert((dest, path), next_hop);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTables {
    pub ul: RoutingTable,
    pub dl: RoutingTable,
}

/// Per-node UL and DL tables. DL entries at `n` cover every strict
/// descendant and point at the child whose subtree holds it; the UL entry
/// points at the parent for the node's own donor.
pub fn build_routing_tables(topo: &Topology) -> Vec<NodeTables> {
    let mut tables: Vec<NodeTables> = topo
        .nodes()
        .map(|_| NodeTables { ul: RoutingTable::new(LinkDirection::Uplink), dl: RoutingTable::new(LinkDirection::Downlink) })
        .collect();
    for dest in topo.nodes() {
        let path = topo.path_from_donor(dest);
        for w in path.windows(2) {
            tables[w[0].index()].dl.insert(bap_address(dest), DEFAULT_PATH, w[1]);
        }
    }
    for n in topo.nodes() {
        if let Some(p) = topo.parent(n) {
            let donor = topo.donor_of(n);
            tables[n.index()].ul.insert(bap_address(donor), DEFAULT_PATH, p);
        }
    }
    tables
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    DeliverToUpperLayers,
    DeliverToLan,
    ForwardTo(NodeId),
}

pub fn forward(
    node: NodeId,
    header: &BapHeader,
    direction: LinkDirection,
    tables: &[NodeTables],
) -> Result<ForwardDecision, BapError> {
    if header.dest == bap_address(node) {
        return Ok(if header.is_lan() { ForwardDecision::DeliverToLan } else { ForwardDecision::DeliverToUpperLayers });
    }
    let t = tables.get(node.index()).ok_or(BapError::UnknownAddress(bap_address(node)))?;
    let table = match direction {
        LinkDirection::Downlink => &t.dl,
        LinkDirection::Uplink => &t.ul,
    };
    table
        .lookup(header.dest, header.path)
        .map(ForwardDecision::ForwardTo)
        .ok_or(BapError::NoRoute { node, dest: header.dest, path: header.path, direction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Role;

    #[test]
    fn zero_and_all_ones() {
        assert_eq!(encode_header(&BapHeader::default()).unwrap(), [0, 0, 0]);
        let max = BapHeader { dc: true, dest: 1023, path: 1023, r_bits: 7 };
        assert_eq!(encode_header(&max).unwrap(), [0xff; 3]);
        assert_eq!(decode_header(&[0xff; 3]).unwrap(), max);
        assert_eq!(decode_header(&[0; 3]).unwrap(), BapHeader::default());
    }

    #[test]
    fn range_and_framing_errors() {
        assert!(encode_header(&BapHeader { dest: 1024, ..Default::default() }).is_err());
        assert!(encode_header(&BapHeader { path: 1024, ..Default::default() }).is_err());
        assert!(encode_header(&BapHeader { r_bits: 8, ..Default::default() }).is_err());
        assert_eq!(decode_header(&[1, 2]), Err(BapError::Framing(2)));
        assert_eq!(decode_header(&[1, 2, 3, 4]), Err(BapError::Framing(4)));
    }

    fn chain() -> Topology {
        Topology::new(vec![Role::Donor, Role::Node, Role::Node], vec![None, Some(NodeId(0)), Some(NodeId(1))]).unwrap()
    }

    #[test]
    fn chain_routes() {
        let t = build_routing_tables(&chain());
        let a = NodeId(1);
        assert_eq!(t[1].dl.lookup(bap_address(NodeId(2)), DEFAULT_PATH), Some(NodeId(2)));
        assert_eq!(t[1].ul.lookup(bap_address(NodeId(0)), DEFAULT_PATH), Some(NodeId(0)));
        let h = BapHeader::data(bap_address(NodeId(2)), DEFAULT_PATH, false);
        assert_eq!(forward(a, &h, LinkDirection::Downlink, &t), Ok(ForwardDecision::ForwardTo(NodeId(2))));
        assert_eq!(forward(NodeId(2), &h, LinkDirection::Downlink, &t), Ok(ForwardDecision::DeliverToUpperLayers));
        let lan = BapHeader::data(bap_address(NodeId(2)), DEFAULT_PATH, true);
        assert_eq!(forward(NodeId(2), &lan, LinkDirection::Downlink, &t), Ok(ForwardDecision::DeliverToLan));
        // Leaf has no DL routes.
        let up = BapHeader::data(bap_address(NodeId(1)), DEFAULT_PATH, false);
        assert!(matches!(forward(NodeId(2), &up, LinkDirection::Downlink, &t), Err(BapError::NoRoute { .. })));
        let wrong_path = BapHeader::data(bap_address(NodeId(2)), 2, false);
        assert!(forward(a, &wrong_path, LinkDirection::Downlink, &t).is_err());
    }

    #[test]
    fn addresses() {
        assert_eq!(bap_address(NodeId(0)), 1);
        assert_eq!(node_for_address(1), Some(NodeId(0)));
        assert_eq!(node_for_address(0), None);
    }
}
