use iab_core::bap::{bap_address, build_routing_tables, decode_header, encode_header, forward, BapHeader, ForwardDecision};
use iab_core::scenario::builtin_topology;
use iab_core::topology::{LinkDirection, NodeId};
use proptest::prelude::*;

// Bytes from a bit-string assembler that concatenates the fields MSB first.
const GOLDEN: &[((bool, u8, u16, u16), [u8; 3])] = &[
    ((false, 0, 5, 3), [0x00, 0x14, 0x03]),
    ((false, 1, 5, 1), [0x10, 0x14, 0x01]),
    ((true, 0, 0, 0), [0x80, 0x00, 0x00]),
    ((false, 0, 1023, 0), [0x0f, 0xfc, 0x00]),
    ((false, 0, 0, 1023), [0x00, 0x03, 0xff]),
    ((false, 7, 0, 0), [0x70, 0x00, 0x00]),
    ((true, 5, 682, 341), [0xda, 0xa9, 0x55]),
    ((false, 1, 2, 1), [0x10, 0x08, 0x01]),
];

#[test]
fn golden_vectors() {
    for &((dc, r_bits, dest, path), bytes) in GOLDEN {
        let h = BapHeader { dc, dest, path, r_bits };
        assert_eq!(encode_header(&h).unwrap(), bytes, "{h:?}");
        assert_eq!(decode_header(&bytes).unwrap(), h);
    }
    assert_eq!(encode_header(&BapHeader::data(2, 1, true)).unwrap(), [0x10, 0x08, 0x01]);
}

fn header() -> impl Strategy<Value = BapHeader> {
    (any::<bool>(), 0u8..8, 0u16..1024, 0u16..1024).prop_map(|(dc, r_bits, dest, path)| BapHeader { dc, dest, path, r_bits })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encode_decode_identity(h in header()) {
        prop_assert_eq!(decode_header(&encode_header(&h).unwrap()).unwrap(), h);
    }

    #[test]
    fn decode_encode_identity(b in any::<[u8; 3]>()) {
        prop_assert_eq!(encode_header(&decode_header(&b).unwrap()).unwrap(), b);
    }

    #[test]
    fn out_of_range_rejected(dest in 1024u16.., path in 1024u16..) {
        let bad_dest = BapHeader { dest, ..Default::default() };
        let bad_path = BapHeader { path, ..Default::default() };
        prop_assert!(encode_header(&bad_dest).is_err());
        prop_assert!(encode_header(&bad_path).is_err());
    }
}

/// Walks a packet hop by hop and returns the visited nodes.
fn walk(start: NodeId, h: &BapHeader, dir: LinkDirection, tables: &[iab_core::bap::NodeTables]) -> Vec<NodeId> {
    let mut at = start;
    let mut trace = vec![at];
    loop {
        match forward(at, h, dir, tables).unwrap() {
            ForwardDecision::ForwardTo(next) => {
                at = next;
                trace.push(at);
                assert!(trace.len() <= tables.len(), "loop at {trace:?}");
            }
            _ => return trace,
        }
    }
}

#[test]
fn every_destination_reached_without_loops() {
    for k in 1..=4 {
        let topo = builtin_topology(k).unwrap().topology().unwrap();
        let tables = build_routing_tables(&topo);
        for dest in topo.nodes().filter(|n| topo.parent(*n).is_some()) {
            let donor = topo.donor_of(dest);
            let h = BapHeader::data(bap_address(dest), 1, true);
            let down = walk(donor, &h, LinkDirection::Downlink, &tables);
            assert_eq!(down, topo.path_from_donor(dest), "topology {k}");
            for w in down.windows(2) {
                assert_eq!(topo.layer(w[1]), topo.layer(w[0]) + 1);
            }
            assert_eq!(forward(dest, &h, LinkDirection::Downlink, &tables).unwrap(), ForwardDecision::DeliverToLan);

            let up_h = BapHeader::data(bap_address(donor), 1, true);
            let up = walk(dest, &up_h, LinkDirection::Uplink, &tables);
            assert_eq!(*up.last().unwrap(), donor);
            for w in up.windows(2) {
                assert_eq!(topo.layer(w[1]) + 1, topo.layer(w[0]));
            }
        }
    }
}

#[test]
fn unknown_destination_has_no_route() {
    let topo = builtin_topology(3).unwrap().topology().unwrap();
    let tables = build_routing_tables(&topo);
    let h = BapHeader::data(999, 1, false);
    assert!(forward(NodeId(0), &h, LinkDirection::Downlink, &tables).is_err());
}
