//! Spanning-tree backhaul topologies: a forest of trees rooted at donors.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node index, assigned in scenario order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Donor,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkDirection {
    #[serde(rename = "dl", alias = "downlink")]
    Downlink,
    #[serde(rename = "ul", alias = "uplink")]
    Uplink,
}

impl LinkDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkDirection::Downlink => "dl",
            LinkDirection::Uplink => "ul",
        }
    }
}

impl fmt::Display for LinkDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maximum number of nodes addressable by a 10-bit BAP address (0 reserved).
pub const MAX_NODES: usize = 1023;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology has no donor")]
    NoDonor,
    #[error("node {0} is its own parent")]
    SelfParent(NodeId),
    #[error("node {node} references unknown parent {parent}")]
    UnknownParent { node: NodeId, parent: NodeId },
    #[error("donor {0} must not have a parent")]
    DonorWithParent(NodeId),
    #[error("node {0} has no parent")]
    Orphan(NodeId),
    #[error("node {0} has more than one parent")]
    MultipleParents(NodeId),
    #[error("cycle through node {0}")]
    Cycle(NodeId),
    #[error("{0} nodes exceed the BAP address space")]
    TooManyNodes(usize),
}

/// A parent/child edge. `child` identifies the edge uniquely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    roles: Vec<Role>,
    parents: Vec<Option<NodeId>>,
    layers: Vec<u8>,
    roots: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds a topology from per-node roles and parent lists. Every IAB-node
    /// needs exactly one parent; donors have none.
    pub fn from_parent_lists(roles: Vec<Role>, parents: Vec<Vec<NodeId>>) -> Result<Self, TopologyError> {
        let mut single = Vec::with_capacity(parents.len());
        for (i, p) in parents.into_iter().enumerate() {
            match p.len() {
                0 => single.push(None),
                1 => single.push(Some(p[0])),
                _ => return Err(TopologyError::MultipleParents(NodeId(i as u16))),
            }
        }
        Self::new(roles, single)
    }

    pub fn new(roles: Vec<Role>, parents: Vec<Option<NodeId>>) -> Result<Self, TopologyError> {
        assert_eq!(roles.len(), parents.len(), "one parent entry per node");
        let n = roles.len();
        if n > MAX_NODES {
            return Err(TopologyError::TooManyNodes(n));
        }
        if !roles.contains(&Role::Donor) {
            return Err(TopologyError::NoDonor);
        }
        for (i, (role, parent)) in roles.iter().zip(&parents).enumerate() {
            let id = NodeId(i as u16);
            match (role, parent) {
                (Role::Donor, Some(_)) => return Err(TopologyError::DonorWithParent(id)),
                (Role::Node, None) => return Err(TopologyError::Orphan(id)),
                (Role::Node, Some(p)) if *p == id => return Err(TopologyError::SelfParent(id)),
                (Role::Node, Some(p)) if p.index() >= n => {
                    return Err(TopologyError::UnknownParent { node: id, parent: *p })
                }
                _ => {}
            }
        }

        let mut layers = vec![u8::MAX; n];
        for i in 0..n {
            let mut chain = Vec::new();
            let mut cur = NodeId(i as u16);
            while layers[cur.index()] == u8::MAX {
                if chain.len() > n {
                    return Err(TopologyError::Cycle(NodeId(i as u16)));
                }
                chain.push(cur);
                match parents[cur.index()] {
                    None => {
                        layers[cur.index()] = 0;
                        chain.pop();
                        break;
                    }
                    Some(p) => cur = p,
                }
            }
            let mut depth = layers[cur.index()];
            for node in chain.into_iter().rev() {
                depth = depth.checked_add(1).ok_or(TopologyError::Cycle(node))?;
                layers[node.index()] = depth;
            }
        }

        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[p.index()].push(NodeId(i as u16));
            }
        }
        let roots = (0..n)
            .filter(|&i| roles[i] == Role::Donor)
            .map(|i| NodeId(i as u16))
            .collect();
        Ok(Self { roles, parents, layers, roots, children })
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(|i| NodeId(i as u16))
    }

    pub fn role(&self, n: NodeId) -> Role {
        self.roles[n.index()]
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.parents[n.index()]
    }

    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.children[n.index()]
    }

    /// Hop count from the node's donor.
    pub fn layer(&self, n: NodeId) -> u8 {
        self.layers[n.index()]
    }

    pub fn max_depth(&self) -> u8 {
        self.layers.iter().copied().max().unwrap_or(0)
    }

    pub fn donors(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn donor_of(&self, mut n: NodeId) -> NodeId {
        while let Some(p) = self.parent(n) {
            n = p;
        }
        n
    }

    /// Nodes from the donor down to `n`, inclusive.
    pub fn path_from_donor(&self, n: NodeId) -> Vec<NodeId> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// True when `ancestor` lies on the path from `n` to its donor (or is `n`).
    pub fn is_ancestor_or_self(&self, ancestor: NodeId, n: NodeId) -> bool {
        let mut cur = Some(n);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    /// All backhaul edges, ordered by child id.
    pub fn edges(&self) -> Vec<Edge> {
        self.nodes()
            .filter_map(|c| self.parent(c).map(|p| Edge { parent: p, child: c }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u16) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn chain_layers() {
        let t = Topology::new(vec![Role::Donor, Role::Node, Role::Node], vec![None, Some(n(0)), Some(n(1))]).unwrap();
        assert_eq!(t.layer(n(2)), 2);
        assert_eq!(t.max_depth(), 2);
        assert_eq!(t.path_from_donor(n(2)), vec![n(0), n(1), n(2)]);
        assert_eq!(t.donor_of(n(2)), n(0));
        assert!(t.is_ancestor_or_self(n(1), n(2)));
        assert!(!t.is_ancestor_or_self(n(2), n(1)));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            Topology::new(vec![Role::Donor, Role::Node], vec![None, Some(n(1))]),
            Err(TopologyError::SelfParent(n(1)))
        );
        assert_eq!(
            Topology::new(vec![Role::Donor, Role::Node, Role::Node], vec![None, Some(n(2)), Some(n(1))]),
            Err(TopologyError::Cycle(n(1)))
        );
        assert_eq!(
            Topology::from_parent_lists(vec![Role::Donor, Role::Donor, Role::Node], vec![vec![], vec![], vec![n(0), n(1)]]),
            Err(TopologyError::MultipleParents(n(2)))
        );
        assert_eq!(Topology::new(vec![Role::Node], vec![None]), Err(TopologyError::NoDonor));
        assert_eq!(
            Topology::new(vec![Role::Donor, Role::Node], vec![None, Some(n(7))]),
            Err(TopologyError::UnknownParent { node: n(1), parent: n(7) })
        );
    }
}
