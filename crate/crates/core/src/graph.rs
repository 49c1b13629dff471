//! Directed mixed graphs with node roles.
//!
//! A [`Dmg`] carries directed (`→`) and bidirected (`↔`) edges between
//! distinct nodes. A pair of nodes may carry any combination of `A→B`,
//! `B→A` and `A↔B`; each is stored as an independent flag. Graphs may be
//! cyclic. Node sets are bitmasks, which bounds a graph to 64 nodes.
//!
//! The text format is line based and order-insensitive:
//!
//! ```text
//! # comment
//! node C context
//! node X system
//! node S selection
//! edge C -> X
//! edge X <-> S
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

pub const MAX_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    System,
    Context,
    /// Unobserved and always conditioned on.
    Selection,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::System => "system",
            NodeRole::Context => "context",
            NodeRole::Selection => "selection",
        }
    }
}

impl FromStr for NodeRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "system" => Ok(NodeRole::System),
            "context" => Ok(NodeRole::Context),
            "selection" => Ok(NodeRole::Selection),
            other => Err(Error::InvalidArgument(format!(
                "unknown node role `{other}`"
            ))),
        }
    }
}

/// A set of node ids, stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSet(pub u64);

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);

    pub fn singleton(v: NodeId) -> Self {
        NodeSet(1 << v)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, v: NodeId) -> bool {
        v < 64 && self.0 >> v & 1 == 1
    }

    pub fn insert(&mut self, v: NodeId) {
        self.0 |= 1 << v;
    }

    pub fn remove(&mut self, v: NodeId) {
        self.0 &= !(1 << v);
    }

    pub fn with(self, v: NodeId) -> Self {
        NodeSet(self.0 | 1 << v)
    }

    pub fn union(self, other: NodeSet) -> Self {
        NodeSet(self.0 | other.0)
    }

    pub fn intersection(self, other: NodeSet) -> Self {
        NodeSet(self.0 & other.0)
    }

    pub fn difference(self, other: NodeSet) -> Self {
        NodeSet(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: NodeSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = NodeId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(v)
            }
        })
    }

    /// All subsets of `self`, including the empty set and `self`.
    pub fn subsets(self) -> impl Iterator<Item = NodeSet> {
        // Standard submask enumeration, descending from `self` to the empty set.
        let full = self.0;
        let mut next = Some(full);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == 0 {
                None
            } else {
                Some((cur - 1) & full)
            };
            Some(NodeSet(cur))
        })
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut s = NodeSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Edge flags for one unordered pair `(i, j)` with `i < j`.
///
/// The eight combinations of the three flags enumerate every way two nodes
/// can be connected in a [`Dmg`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EdgeState(pub u8);

impl EdgeState {
    /// `i → j`
    pub const FORWARD: u8 = 1;
    /// `j → i`
    pub const BACKWARD: u8 = 2;
    /// `i ↔ j`
    pub const BIDIRECTED: u8 = 4;

    pub const COUNT: u8 = 8;

    pub fn forward(self) -> bool {
        self.0 & Self::FORWARD != 0
    }

    pub fn backward(self) -> bool {
        self.0 & Self::BACKWARD != 0
    }

    pub fn bidirected(self) -> bool {
        self.0 & Self::BIDIRECTED != 0
    }
}

/// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn node_pairs(n: usize) -> Vec<(NodeId, NodeId)> {
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    pairs
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dmg {
    names: Vec<String>,
    roles: Vec<NodeRole>,
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
    spouses: Vec<NodeSet>,
}

impl Dmg {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from `(name, role)` pairs and one [`EdgeState`] per
    /// entry of [`node_pairs`].
    pub fn from_pair_states(nodes: &[(&str, NodeRole)], states: &[EdgeState]) -> Result<Self> {
        let mut g = Dmg::new();
        for (name, role) in nodes {
            g.add_node(name, *role)?;
        }
        let pairs = node_pairs(nodes.len());
        if pairs.len() != states.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} edge states, got {}",
                pairs.len(),
                states.len()
            )));
        }
        for (&(i, j), &s) in pairs.iter().zip(states) {
            g.set_pair(i, j, s);
        }
        Ok(g)
    }

    pub fn add_node(&mut self, name: &str, role: NodeRole) -> Result<NodeId> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::DuplicateNode(name.to_string()));
        }
        if self.names.len() == MAX_NODES {
            return Err(Error::TooManyNodes { max: MAX_NODES });
        }
        self.names.push(name.to_string());
        self.roles.push(role);
        self.parents.push(NodeSet::EMPTY);
        self.children.push(NodeSet::EMPTY);
        self.spouses.push(NodeSet::EMPTY);
        Ok(self.names.len() - 1)
    }

    pub fn add_directed(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        self.check_pair(from, to)?;
        self.children[from].insert(to);
        self.parents[to].insert(from);
        Ok(())
    }

    pub fn add_bidirected(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        self.check_pair(a, b)?;
        self.spouses[a].insert(b);
        self.spouses[b].insert(a);
        Ok(())
    }

    pub fn remove_directed(&mut self, from: NodeId, to: NodeId) {
        self.children[from].remove(to);
        self.parents[to].remove(from);
    }

    /// Name-based convenience for building fixtures.
    pub fn add_edge_by_name(&mut self, from: &str, to: &str, bidirected: bool) -> Result<()> {
        let a = self.node(from)?;
        let b = self.node(to)?;
        if bidirected {
            self.add_bidirected(a, b)
        } else {
            self.add_directed(a, b)
        }
    }

    fn check_pair(&self, a: NodeId, b: NodeId) -> Result<()> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(Error::SelfLoop(self.names[a].clone()));
        }
        Ok(())
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if v < self.names.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(format!("#{v}")))
        }
    }

    fn check_set(&self, s: NodeSet) -> Result<()> {
        if s.is_subset(self.all()) {
            Ok(())
        } else {
            let bad = s.difference(self.all()).iter().next().unwrap_or(0);
            Err(Error::UnknownNode(format!("#{bad}")))
        }
    }

    /// Overwrites whatever edges `i` and `j` had with `state`.
    pub fn set_pair(&mut self, i: NodeId, j: NodeId, state: EdgeState) {
        debug_assert!(i < j);
        self.children[i].remove(j);
        self.parents[j].remove(i);
        self.children[j].remove(i);
        self.parents[i].remove(j);
        self.spouses[i].remove(j);
        self.spouses[j].remove(i);
        if state.forward() {
            self.children[i].insert(j);
            self.parents[j].insert(i);
        }
        if state.backward() {
            self.children[j].insert(i);
            self.parents[i].insert(j);
        }
        if state.bidirected() {
            self.spouses[i].insert(j);
            self.spouses[j].insert(i);
        }
    }

    pub fn pair_state(&self, i: NodeId, j: NodeId) -> EdgeState {
        let mut s = 0;
        if self.children[i].contains(j) {
            s |= EdgeState::FORWARD;
        }
        if self.children[j].contains(i) {
            s |= EdgeState::BACKWARD;
        }
        if self.spouses[i].contains(j) {
            s |= EdgeState::BIDIRECTED;
        }
        EdgeState(s)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn all(&self) -> NodeSet {
        NodeSet::full(self.len())
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn role(&self, v: NodeId) -> NodeRole {
        self.roles[v]
    }

    pub fn set_role(&mut self, v: NodeId, role: NodeRole) {
        self.roles[v] = role;
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn node_set(&self, names: &[&str]) -> Result<NodeSet> {
        names.iter().map(|n| self.node(n)).collect()
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> NodeSet {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn selection_nodes(&self) -> NodeSet {
        self.nodes_with_role(NodeRole::Selection)
    }

    pub fn parents(&self, v: NodeId) -> NodeSet {
        self.parents[v]
    }

    pub fn children(&self, v: NodeId) -> NodeSet {
        self.children[v]
    }

    pub fn spouses(&self, v: NodeId) -> NodeSet {
        self.spouses[v]
    }

    pub fn has_directed(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from].contains(to)
    }

    pub fn has_bidirected(&self, a: NodeId, b: NodeId) -> bool {
        self.spouses[a].contains(b)
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.len()).flat_map(move |a| self.children[a].iter().map(move |b| (a, b)))
    }

    pub fn bidirected_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.len()).flat_map(move |a| {
            self.spouses[a]
                .iter()
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    pub fn directed_edge_count(&self) -> usize {
        self.children.iter().map(|c| c.len()).sum()
    }

    pub fn is_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.children[a].contains(b) || self.parents[a].contains(b) || self.spouses[a].contains(b)
    }

    /// Reflexive ancestors: `x ⊆ an(x)`.
    pub fn ancestors(&self, x: NodeSet) -> Result<NodeSet> {
        self.check_set(x)?;
        Ok(closure(x, &self.parents))
    }

    /// Reflexive descendants: `x ⊆ de(x)`.
    pub fn descendants(&self, x: NodeSet) -> Result<NodeSet> {
        self.check_set(x)?;
        Ok(closure(x, &self.children))
    }

    pub(crate) fn an(&self, x: NodeSet) -> NodeSet {
        closure(x, &self.parents)
    }

    pub(crate) fn de(&self, x: NodeSet) -> NodeSet {
        closure(x, &self.children)
    }

    /// Nodes on directed cycles through `v`, plus `v` itself.
    pub fn strongly_connected_component(&self, v: NodeId) -> Result<NodeSet> {
        self.check_node(v)?;
        Ok(self.scc(v))
    }

    pub(crate) fn scc(&self, v: NodeId) -> NodeSet {
        let s = NodeSet::singleton(v);
        self.an(s).intersection(self.de(s))
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Kahn's algorithm over directed edges; `None` if a directed cycle exists.
    /// Ties are broken by node id, so the order is deterministic.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut ready: std::collections::BTreeSet<NodeId> =
            (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children[v].iter() {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// No System or Selection node is an ancestor of a Context node.
    pub fn validate_jci1(&self) -> bool {
        let context = self.nodes_with_role(NodeRole::Context);
        self.an(context).difference(context).is_empty()
    }

    /// Marginalizes the nodes outside `keep`.
    ///
    /// A kept pair gets `a → b` when a directed path from `a` to `b` runs
    /// through dropped nodes only, and `a ↔ b` when a collider-free path with
    /// arrowheads at both ends runs through dropped nodes only. Kept nodes
    /// retain their relative order and roles.
    pub fn latent_projection(&self, keep: NodeSet) -> Result<Dmg> {
        self.check_set(keep)?;
        let dropped = self.all().difference(keep);
        // For every node u: kept nodes reachable from u by a directed path of
        // length >= 1 whose intermediate nodes are all dropped.
        let n = self.len();
        let mut reach = vec![NodeSet::EMPTY; n];
        for (u, r) in reach.iter_mut().enumerate() {
            let mut frontier = self.children[u];
            let mut seen = NodeSet::EMPTY;
            while !frontier.is_empty() {
                seen = seen.union(frontier);
                let mut next = NodeSet::EMPTY;
                for w in frontier.intersection(dropped).iter() {
                    next = next.union(self.children[w]);
                }
                frontier = next.difference(seen);
            }
            *r = seen.intersection(keep);
        }
        // heads[a]: nodes that can end a collider-free, all-dropped-interior
        // segment pointing into kept node a (a itself, or a dropped node with a
        // directed dropped path into a).
        let mut heads = vec![NodeSet::EMPTY; n];
        for a in keep.iter() {
            heads[a].insert(a);
        }
        for l in dropped.iter() {
            for a in reach[l].iter() {
                heads[a].insert(l);
            }
        }

        let kept: Vec<NodeId> = keep.iter().collect();
        let mut out = Dmg::new();
        for &v in &kept {
            out.add_node(&self.names[v], self.roles[v])?;
        }
        for (ia, &a) in kept.iter().enumerate() {
            for (ib, &b) in kept.iter().enumerate() {
                if a != b && reach[a].contains(b) {
                    out.add_directed(ia, ib)?;
                }
            }
        }
        for (ia, &a) in kept.iter().enumerate() {
            for (ib, &b) in kept.iter().enumerate().skip(ia + 1) {
                let shared_source = heads[a].intersection(heads[b]).intersection(dropped);
                let linked = shared_source.iter().next().is_some()
                    || heads[a]
                        .iter()
                        .any(|u| !self.spouses[u].intersection(heads[b]).is_empty());
                if linked {
                    out.add_bidirected(ia, ib)?;
                }
            }
        }
        Ok(out)
    }

    /// Serializes to the line-based text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, role) in self.names.iter().zip(&self.roles) {
            s.push_str(&format!("node {name} {}\n", role.as_str()));
        }
        for (a, b) in self.directed_edges() {
            s.push_str(&format!("edge {} -> {}\n", self.names[a], self.names[b]));
        }
        for (a, b) in self.bidirected_edges() {
            s.push_str(&format!("edge {} <-> {}\n", self.names[a], self.names[b]));
        }
        s
    }
}

fn closure(start: NodeSet, step: &[NodeSet]) -> NodeSet {
    let mut seen = start;
    let mut frontier = start;
    while !frontier.is_empty() {
        let mut next = NodeSet::EMPTY;
        for v in frontier.iter() {
            next = next.union(step[v]);
        }
        frontier = next.difference(seen);
        seen = seen.union(frontier);
    }
    seen
}

impl FromStr for Dmg {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut g = Dmg::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |msg: &str| Error::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            match parts.as_slice() {
                ["node", id, role] => {
                    let role = role
                        .parse::<NodeRole>()
                        .map_err(|_| parse_err(&format!("unknown role `{role}`")))?;
                    g.add_node(id, role)
                        .map_err(|e| parse_err(&e.to_string()))?;
                }
                ["edge", a, arrow @ ("->" | "<->"), b] => {
                    edges.push((line_no, a.to_string(), *arrow == "<->", b.to_string()));
                }
                _ => return Err(parse_err(&format!("cannot parse `{line}`"))),
            }
        }
        for (line, a, bidirected, b) in edges {
            g.add_edge_by_name(&a, &b, bidirected)
                .map_err(|e| Error::Parse {
                    line,
                    msg: e.to_string(),
                })?;
        }
        Ok(g)
    }
}

impl fmt::Display for Dmg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(text: &str) -> Dmg {
        text.parse().unwrap()
    }

    fn names(g: &Dmg, s: NodeSet) -> Vec<&str> {
        s.iter().map(|v| g.name(v)).collect()
    }

    #[test]
    fn chain_ancestors() {
        let g = graph("node A system\nnode B system\nnode C system\nedge A -> B\nedge B -> C");
        let an = g.ancestors(g.node_set(&["C"]).unwrap()).unwrap();
        assert_eq!(names(&g, an), ["A", "B", "C"]);
    }

    #[test]
    fn ancestors_are_reflexive() {
        let g = graph("node A system\nnode B system");
        let an = g.ancestors(NodeSet::singleton(0)).unwrap();
        assert_eq!(an, NodeSet::singleton(0));
    }

    #[test]
    fn two_cycle_closure() {
        let g = graph("node X system\nnode Y system\nedge X -> Y\nedge Y -> X");
        assert_eq!(g.ancestors(NodeSet::singleton(0)).unwrap(), NodeSet(0b11));
    }

    #[test]
    fn unknown_node_is_an_error() {
        let g = graph("node A system");
        assert!(matches!(
            g.ancestors(NodeSet::singleton(3)),
            Err(Error::UnknownNode(_))
        ));
        assert!(g.strongly_connected_component(1).is_err());
    }

    #[test]
    fn scc_examples() {
        let dag = graph("node A system\nnode B system\nedge A -> B");
        assert_eq!(
            dag.strongly_connected_component(1).unwrap(),
            NodeSet::singleton(1)
        );

        let g = graph(
            "node X system\nnode Y system\nnode Z system\nedge X -> Y\nedge Y -> X\nedge Y -> Z",
        );
        assert_eq!(
            names(&g, g.strongly_connected_component(0).unwrap()),
            ["X", "Y"]
        );
        assert_eq!(
            g.strongly_connected_component(2).unwrap(),
            NodeSet::singleton(2)
        );

        let iso = graph("node X system\nnode Y system\nnode Z system\nedge X -> Y\nedge Y -> X");
        assert_eq!(
            iso.strongly_connected_component(2).unwrap(),
            NodeSet::singleton(2)
        );
    }

    #[test]
    fn projection_examples() {
        let chain = graph("node A system\nnode L system\nnode B system\nedge A -> L\nedge L -> B");
        let p = chain
            .latent_projection(chain.node_set(&["A", "B"]).unwrap())
            .unwrap();
        assert!(p.has_directed(0, 1));
        assert_eq!(p.directed_edge_count(), 1);
        assert_eq!(p.bidirected_edges().count(), 0);

        let fork = graph("node A system\nnode L system\nnode B system\nedge L -> A\nedge L -> B");
        let p = fork
            .latent_projection(fork.node_set(&["A", "B"]).unwrap())
            .unwrap();
        assert!(p.has_bidirected(0, 1));
        assert_eq!(p.directed_edge_count(), 0);

        let collider =
            graph("node A system\nnode L system\nnode B system\nedge A -> L\nedge B -> L");
        let p = collider
            .latent_projection(collider.node_set(&["A", "B"]).unwrap())
            .unwrap();
        assert_eq!(p.directed_edge_count(), 0);
        assert_eq!(p.bidirected_edges().count(), 0);
    }

    #[test]
    fn projection_through_bidirected_segment() {
        // A <- L1 <-> L2 -> B
        let g = graph(
            "node A system\nnode L1 system\nnode L2 system\nnode B system\n\
             edge L1 -> A\nedge L1 <-> L2\nedge L2 -> B",
        );
        let p = g
            .latent_projection(g.node_set(&["A", "B"]).unwrap())
            .unwrap();
        assert!(p.has_bidirected(0, 1));
    }

    #[test]
    fn jci1_examples() {
        let ok = graph("node C context\nnode X system\nedge C -> X");
        assert!(ok.validate_jci1());
        let bad = graph("node C context\nnode X system\nedge X -> C");
        assert!(!bad.validate_jci1());
        let confounded = graph("node C context\nnode X system\nedge C <-> X");
        assert!(confounded.validate_jci1());
        let sel = graph("node C context\nnode S selection\nedge S -> C");
        assert!(!sel.validate_jci1());
    }

    #[test]
    fn text_format_is_order_insensitive() {
        let g =
            graph("edge A -> B # trailing\n# comment\nnode B system\nnode A context\nedge A <-> B");
        assert_eq!(g.role(1), NodeRole::Context);
        let back: Dmg = g.to_text().parse().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            "node A sys".parse::<Dmg>(),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            "node A system\nedge A -> B".parse::<Dmg>(),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!("node A system\nedge A -> A".parse::<Dmg>().is_err());
        assert!("node A system\nnode A context".parse::<Dmg>().is_err());
        assert!("node A system\nedge A => A".parse::<Dmg>().is_err());
    }

    #[test]
    fn subsets_enumerates_power_set() {
        let s = NodeSet(0b1011);
        let subs: Vec<NodeSet> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|x| x.is_subset(s)));
    }

    #[test]
    fn pair_states_round_trip() {
        let nodes = [
            ("A", NodeRole::System),
            ("B", NodeRole::System),
            ("C", NodeRole::System),
        ];
        let states = [EdgeState(5), EdgeState(2), EdgeState(7)];
        let g = Dmg::from_pair_states(&nodes, &states).unwrap();
        for (k, (i, j)) in node_pairs(3).into_iter().enumerate() {
            assert_eq!(g.pair_state(i, j), states[k]);
        }
    }
    #[test]
    fn set_pair_overwrites() {
        let mut g = Dmg::new();
        g.add_node("A", NodeRole::System).unwrap();
        g.add_node("B", NodeRole::System).unwrap();
        g.set_pair(0, 1, EdgeState(7));
        g.set_pair(0, 1, EdgeState(1));
        assert_eq!(g.pair_state(0, 1), EdgeState(1));
        assert!(g.is_acyclic());
        g.set_pair(0, 1, EdgeState(0));
        assert_eq!(g.pair_state(0, 1), EdgeState(0));
    }
}
