//! Random benchmark graphs with a selection mechanism, and the fixed
//! benchmark graph.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dmg, NodeId, NodeRole, NodeSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSamplerParams {
    /// Number of system variables.
    pub p: usize,
    pub edge_prob: f64,
    /// Minimum number of collider triples `a → c ← b` with `a`, `b` non-adjacent.
    pub min_colliders: usize,
    pub n_selection_parents: usize,
    pub max_retries: usize,
}

impl GraphSamplerParams {
    /// Defaults for `p = 8` and `p = 16`; other sizes reuse the `p = 16` row.
    pub fn for_size(p: usize) -> Self {
        let (edge_prob, min_colliders, n_selection_parents) =
            if p <= 8 { (0.15, 3, 1) } else { (0.09, 5, 3) };
        GraphSamplerParams {
            p,
            edge_prob,
            min_colliders,
            n_selection_parents,
            max_retries: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.edge_prob > 0.0 && self.edge_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "edge probability {} not in (0, 1)",
                self.edge_prob
            )));
        }
        if self.p < 2 || self.p + 2 > crate::graph::MAX_NODES {
            return Err(Error::InvalidArgument(format!(
                "unsupported system size p = {}",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledGraph {
    pub graph: Dmg,
    pub collider_triples: usize,
    pub collider_nodes: usize,
    /// Rejected draws before acceptance.
    pub retries: usize,
    /// Directed-edge count of every draw, rejected ones included.
    pub drawn_edge_counts: Vec<usize>,
}

/// Parents of each node in a plain adjacency representation.
struct Digraph {
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
}

impl Digraph {
    fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.parents[a].contains(b) || self.children[a].contains(b)
    }

    fn is_acyclic(&self) -> bool {
        let n = self.parents.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut stack: Vec<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for c in self.children[v].iter() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == n
    }

    fn colliders(&self) -> (usize, NodeSet) {
        let mut triples = 0;
        let mut nodes = NodeSet::EMPTY;
        for c in 0..self.parents.len() {
            let pa: Vec<NodeId> = self.parents[c].iter().collect();
            for (i, &a) in pa.iter().enumerate() {
                for &b in &pa[i + 1..] {
                    if !self.adjacent(a, b) {
                        triples += 1;
                        nodes.insert(c);
                    }
                }
            }
        }
        (triples, nodes)
    }

    fn descendants(&self, from: NodeSet) -> NodeSet {
        let mut seen = from;
        let mut stack: Vec<NodeId> = from.iter().collect();
        while let Some(v) = stack.pop() {
            for c in self.children[v].difference(seen).iter() {
                seen.insert(c);
                stack.push(c);
            }
        }
        seen
    }
}

/// Number of unordered collider triples in the directed part of `g`.
pub fn collider_triples(g: &Dmg) -> usize {
    let mut count = 0;
    for c in g.all().iter() {
        let pa: Vec<NodeId> = g.parents(c).iter().collect();
        for (i, &a) in pa.iter().enumerate() {
            for &b in &pa[i + 1..] {
                if !g.is_adjacent(a, b) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Samples a random acyclic graph over `p + 1` nodes, one source of which
/// becomes the context `C`; the others are named `X1..Xp`. A selection node
/// `S` is attached to childless descendants of collider nodes.
pub fn sample_random_graph(params: &GraphSamplerParams, seed: u64) -> Result<SampledGraph> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.p + 1;
    let mut drawn = Vec::new();
    for retry in 0..params.max_retries {
        let mut dg = Digraph {
            parents: vec![NodeSet::EMPTY; n],
            children: vec![NodeSet::EMPTY; n],
        };
        let mut edges = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(params.edge_prob) {
                    dg.parents[j].insert(i);
                    dg.children[i].insert(j);
                    edges += 1;
                }
            }
        }
        drawn.push(edges);
        if !dg.is_acyclic() {
            continue;
        }
        let (triples, collider_nodes) = dg.colliders();
        if triples < params.min_colliders {
            continue;
        }
        let leaves: Vec<NodeId> = dg
            .descendants(collider_nodes)
            .iter()
            .filter(|&v| dg.children[v].is_empty())
            .collect();
        if leaves.len() < params.n_selection_parents {
            continue;
        }
        let sel_parents: Vec<NodeId> = leaves
            .choose_multiple(&mut rng, params.n_selection_parents)
            .copied()
            .collect();
        let sources: Vec<NodeId> = (0..n).filter(|&v| dg.parents[v].is_empty()).collect();
        let context = *sources.choose(&mut rng).expect("a DAG has a source");

        // C first, then X1..Xp in draw order, then S.
        let mut order: Vec<NodeId> = vec![context];
        order.extend((0..n).filter(|&v| v != context));
        let mut g = Dmg::new();
        let mut id = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            id[v] = if k == 0 {
                g.add_node("C", NodeRole::Context)?
            } else {
                g.add_node(&format!("X{k}"), NodeRole::System)?
            };
        }
        let s = g.add_node("S", NodeRole::Selection)?;
        for v in 0..n {
            for c in dg.children[v].iter() {
                g.add_directed(id[v], id[c])?;
            }
        }
        for v in sel_parents {
            g.add_directed(id[v], s)?;
        }
        return Ok(SampledGraph {
            graph: g,
            collider_triples: triples,
            collider_nodes: collider_nodes.len(),
            retries: retry,
            drawn_edge_counts: drawn,
        });
    }
    Err(Error::RetriesExhausted(params.max_retries))
}

/// The fixed benchmark graph: a Y-Structure `⟨C,X4,X5,X6⟩` next to the
/// selection-induced LCD failure `⟨C,X1,X2⟩`.
pub fn fixed_graph() -> Dmg {
    let text = "\
node C context
node X1 system
node X2 system
node X3 system
node X4 system
node X5 system
node X6 system
node S selection
edge C -> X1
edge X1 -> S
edge X2 -> S
edge X3 -> X2
edge C -> X5
edge X4 -> X5
edge X5 -> X6
";
    text.parse().expect("fixed graph parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_colliders(g: &Dmg) -> usize {
        let mut count = 0;
        for c in g.all().iter() {
            for a in g.all().iter() {
                for b in g.all().iter() {
                    if a < b
                        && a != c
                        && b != c
                        && g.has_directed(a, c)
                        && g.has_directed(b, c)
                        && !g.has_directed(a, b)
                        && !g.has_directed(b, a)
                    {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn small_graphs_meet_constraints() {
        let params = GraphSamplerParams::for_size(8);
        for seed in 0..100 {
            let s = sample_random_graph(&params, seed).unwrap();
            let g = &s.graph;
            assert!(g.is_acyclic());
            assert!(g.validate_jci1());
            let sel = g.node("S").unwrap();
            assert_eq!(g.parents(sel).len(), 1);
            assert!(g.children(sel).is_empty());
            let c = g.node("C").unwrap();
            assert!(g.parents(c).is_empty());
            assert_eq!(g.nodes_with_role(NodeRole::Context).len(), 1);
            assert_eq!(g.nodes_with_role(NodeRole::System).len(), 8);
            // Colliders are counted before S is attached.
            let mut without_s = g.clone();
            for p in g.parents(sel).iter() {
                without_s.remove_directed(p, sel);
            }
            assert_eq!(brute_colliders(&without_s), s.collider_triples);
            assert!(s.collider_triples >= 3);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = GraphSamplerParams::for_size(16);
        let a = sample_random_graph(&params, 42).unwrap();
        let b = sample_random_graph(&params, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_parents_are_leaf_descendants_of_colliders() {
        let params = GraphSamplerParams::for_size(16);
        for seed in 0..30 {
            let g = sample_random_graph(&params, seed).unwrap().graph;
            let sel = g.node("S").unwrap();
            assert_eq!(g.parents(sel).len(), 3);
            for p in g.parents(sel).iter() {
                assert_eq!(g.children(p), NodeSet::singleton(sel));
                let colliders: NodeSet =
                    g.all()
                        .iter()
                        .filter(|&c| {
                            let pa: Vec<_> = g
                                .parents(c)
                                .difference(NodeSet::singleton(sel))
                                .iter()
                                .collect();
                            c != sel
                                && pa.iter().enumerate().any(|(i, &a)| {
                                    pa[i + 1..].iter().any(|&b| !g.is_adjacent(a, b))
                                })
                        })
                        .collect();
                assert!(!g
                    .ancestors(NodeSet::singleton(p))
                    .unwrap()
                    .is_disjoint(colliders));
            }
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut params = GraphSamplerParams::for_size(8);
        params.edge_prob = 1.0;
        assert!(sample_random_graph(&params, 0).is_err());
        let mut params = GraphSamplerParams::for_size(8);
        params.min_colliders = 1000;
        params.max_retries = 5;
        assert!(matches!(
            sample_random_graph(&params, 0),
            Err(Error::RetriesExhausted(5))
        ));
    }

    #[test]
    fn fixed_graph_structure() {
        let g = fixed_graph();
        assert_eq!(g.len(), 8);
        assert_eq!(g.directed_edge_count(), 7);
        assert!(g.validate_jci1());
        assert_eq!(collider_triples(&g), 2);
        let an = |v: &str| g.ancestors(g.node_set(&[v]).unwrap()).unwrap();
        assert_eq!(an("X6"), g.node_set(&["X6", "X5", "X4", "C"]).unwrap());
        assert_eq!(an("X2"), g.node_set(&["X2", "X3"]).unwrap());
    }
}
