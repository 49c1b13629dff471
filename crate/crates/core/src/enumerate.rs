//! Exhaustive and randomized verification over small directed mixed graphs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{node_pairs, Dmg, EdgeState, NodeId, NodeRole, NodeSet};
use crate::patterns::{find_y_structures, SearchOptions};
use crate::separation::{check_lemma1, Lemma1Report, OracleModel, Separator};

/// Largest node count accepted by exhaustive enumeration.
pub const MAX_ENUMERATION_NODES: usize = 5;

/// Iterates every assignment of the 8 edge states to the node pairs, in
/// lexicographic order of the pair-state digits.
pub struct DmgEnumerator {
    template: Dmg,
    pairs: Vec<(NodeId, NodeId)>,
    next: u64,
    total: u64,
    jci: bool,
}

impl DmgEnumerator {
    pub fn total(&self) -> u64 {
        self.total
    }
}

fn decode_into(g: &mut Dmg, pairs: &[(NodeId, NodeId)], mut code: u64) {
    for &(i, j) in pairs.iter().rev() {
        g.set_pair(i, j, EdgeState((code % 8) as u8));
        code /= 8;
    }
}

impl Iterator for DmgEnumerator {
    type Item = Dmg;

    fn next(&mut self) -> Option<Dmg> {
        while self.next < self.total {
            let mut g = self.template.clone();
            decode_into(&mut g, &self.pairs, self.next);
            self.next += 1;
            if !self.jci || g.validate_jci1() {
                return Some(g);
            }
        }
        None
    }
}

fn template(nodes: &[(&str, NodeRole)]) -> Result<Dmg> {
    if nodes.len() > MAX_ENUMERATION_NODES {
        return Err(Error::TooManyNodes {
            max: MAX_ENUMERATION_NODES,
        });
    }
    let mut g = Dmg::new();
    for (name, role) in nodes {
        g.add_node(name, *role)?;
    }
    Ok(g)
}

/// All DMGs over `nodes`, optionally filtered by JCI-1 validity.
pub fn enumerate_dmgs(nodes: &[(&str, NodeRole)], jci: bool) -> Result<DmgEnumerator> {
    let template = template(nodes)?;
    let pairs = node_pairs(nodes.len());
    let total = 8u64.pow(pairs.len() as u32);
    Ok(DmgEnumerator {
        template,
        pairs,
        next: 0,
        total,
        jci,
    })
}

/// Oracle verdicts of every `(a, b | Z)` query over the observed nodes, with
/// all Selection nodes conditioned. Bit set means independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndependenceSignature {
    pub bits: u128,
    pub len: u8,
}

impl fmt::Display for IndependenceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.len {
            f.write_str(if self.bits >> k & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The canonical query order: pairs `a < b` of observed nodes, then
/// conditioning sets in increasing bitmask order.
pub fn signature_queries(g: &Dmg) -> Vec<(NodeId, NodeId, NodeSet)> {
    let obs = g.all().difference(g.selection_nodes());
    let mut out = Vec::new();
    for a in obs.iter() {
        for b in obs.iter().filter(|&b| b > a) {
            let rest = obs.difference(NodeSet::singleton(a).with(b));
            let mut zs: Vec<NodeSet> = rest.subsets().collect();
            zs.sort_by_key(|z| z.0);
            out.extend(zs.into_iter().map(|z| (a, b, z)));
        }
    }
    out
}

pub fn signature(g: &Dmg) -> Result<IndependenceSignature> {
    let queries = signature_queries(g);
    if queries.len() > 128 {
        return Err(Error::TooManyNodes { max: 6 });
    }
    let sep = Separator::new(g);
    let sel = g.selection_nodes();
    Ok(signature_with(&sep, sel, &queries))
}

fn signature_with(
    sep: &Separator<'_>,
    sel: NodeSet,
    queries: &[(NodeId, NodeId, NodeSet)],
) -> IndependenceSignature {
    let mut bits = 0u128;
    for (k, &(a, b, z)) in queries.iter().enumerate() {
        if sep.sigma_separated_unchecked(NodeSet::singleton(a), NodeSet::singleton(b), z.union(sel))
        {
            bits |= 1 << k;
        }
    }
    IndependenceSignature {
        bits,
        len: queries.len() as u8,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub signature: String,
    pub graph_count: u64,
    /// Graphs in which some Selection node has at least one edge.
    pub selection_active: u64,
    pub x_in_an_y: u64,
    pub y_in_an_x: u64,
    pub forces_x_in_an_y: bool,
    pub forces_y_in_an_x: bool,
    /// `C ⊥̸ Y` and `C ⊥ Y | X`.
    pub lcd_pattern: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreeVarReport {
    pub n_selection: usize,
    pub sink_selection: bool,
    pub jci: bool,
    pub queries: Vec<String>,
    pub raw_graphs: u64,
    /// Graphs left after the JCI-1 and sink filters.
    pub jci_graphs: u64,
    pub buckets: Vec<BucketReport>,
    /// Buckets holding a selection-active graph that force a presence claim;
    /// always 0 without selection nodes.
    pub forcing_buckets: usize,
    pub lcd_buckets: usize,
    pub lcd_buckets_force_x_in_an_y: bool,
    /// LCD-pattern graphs with `Y ∈ an(X)` or `X ↔ Y`.
    pub lcd_soundness_violations: u64,
}

impl ThreeVarReport {
    /// No bucket realizable with active selection forces an ancestral claim.
    pub fn no_sound_rule(&self) -> bool {
        self.forcing_buckets == 0
    }
}

#[derive(Clone, Copy, Default)]
struct BucketAcc {
    graphs: u64,
    active: u64,
    x_an_y: u64,
    y_an_x: u64,
    lcd: bool,
    lcd_unsound: u64,
}

impl BucketAcc {
    fn merge(&mut self, o: &BucketAcc) {
        self.graphs += o.graphs;
        self.active += o.active;
        self.x_an_y += o.x_an_y;
        self.y_an_x += o.y_an_x;
        self.lcd |= o.lcd;
        self.lcd_unsound += o.lcd_unsound;
    }
}

/// Enumerates every JCI-1 DMG over `{C, X, Y}` plus `n_selection` Selection
/// nodes, buckets them by independence signature, and records which
/// ancestral claims between `X` and `Y` each bucket forces.
///
/// With `sink_selection`, Selection nodes never have children. Without
/// `jci`, graphs where `C` has ancestors are kept too.
pub fn verify_no_sound_3var_rule(
    n_selection: usize,
    sink_selection: bool,
    jci: bool,
) -> Result<ThreeVarReport> {
    if n_selection > 1 {
        return Err(Error::InvalidArgument(format!(
            "{n_selection} selection nodes need 8^{} graphs; at most 1 is supported",
            node_pairs(3 + n_selection).len()
        )));
    }
    let names: Vec<String> = ["C", "X", "Y"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n_selection).map(|k| format!("S{k}")))
        .collect();
    let nodes: Vec<(&str, NodeRole)> = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let role = match k {
                0 => NodeRole::Context,
                1 | 2 => NodeRole::System,
                _ => NodeRole::Selection,
            };
            (n.as_str(), role)
        })
        .collect();
    let base = template(&nodes)?;
    let pairs = node_pairs(nodes.len());
    let total = 8u64.pow(pairs.len() as u32);
    let (c, x, y) = (0, 1, 2);
    let queries = signature_queries(&base);
    let sel = base.selection_nodes();

    let chunk = 8u64.pow(pairs.len().saturating_sub(2) as u32);
    let n_chunks = total / chunk;
    let partial: Vec<(HashMap<IndependenceSignature, BucketAcc>, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut map: HashMap<IndependenceSignature, BucketAcc> = HashMap::new();
            let mut valid = 0u64;
            let mut g = base.clone();
            for code in k * chunk..(k + 1) * chunk {
                decode_into(&mut g, &pairs, code);
                if sink_selection && sel.iter().any(|s| !g.children(s).is_empty()) {
                    continue;
                }
                if jci && !g.validate_jci1() {
                    continue;
                }
                valid += 1;
                let sep = Separator::new(&g);
                let sig = signature_with(&sep, sel, &queries);
                let an_y = g.ancestors(NodeSet::singleton(y)).expect("node in range");
                let an_x = g.ancestors(NodeSet::singleton(x)).expect("node in range");
                let active = sel
                    .iter()
                    .any(|s| g.parents(s).len() + g.children(s).len() + g.spouses(s).len() > 0);
                let lcd = !sep.sigma_separated_unchecked(
                    NodeSet::singleton(c),
                    NodeSet::singleton(y),
                    sel,
                ) && sep.sigma_separated_unchecked(
                    NodeSet::singleton(c),
                    NodeSet::singleton(y),
                    sel.with(x),
                );
                let acc = map.entry(sig).or_default();
                acc.graphs += 1;
                acc.active += u64::from(active);
                acc.x_an_y += u64::from(an_y.contains(x));
                acc.y_an_x += u64::from(an_x.contains(y));
                acc.lcd = lcd;
                if lcd && (an_x.contains(y) || g.has_bidirected(x, y)) {
                    acc.lcd_unsound += 1;
                }
            }
            (map, valid)
        })
        .collect();

    let mut merged: BTreeMap<IndependenceSignature, BucketAcc> = BTreeMap::new();
    let mut jci_graphs = 0;
    for (map, valid) in partial {
        jci_graphs += valid;
        for (sig, acc) in map {
            merged.entry(sig).or_default().merge(&acc);
        }
    }

    let mut report = ThreeVarReport {
        n_selection,
        sink_selection,
        jci,
        queries: queries
            .iter()
            .map(|&(a, b, z)| {
                let zs: Vec<&str> = z.iter().map(|v| base.name(v)).collect();
                format!(
                    "{} _|_ {} | {{{}}}",
                    base.name(a),
                    base.name(b),
                    zs.join(",")
                )
            })
            .collect(),
        raw_graphs: total,
        jci_graphs,
        lcd_buckets_force_x_in_an_y: true,
        ..Default::default()
    };
    for (sig, acc) in merged {
        let forces_x = acc.x_an_y == acc.graphs;
        let forces_y = acc.y_an_x == acc.graphs;
        if n_selection > 0 && acc.active > 0 && (forces_x || forces_y) {
            report.forcing_buckets += 1;
        }
        if acc.lcd {
            report.lcd_buckets += 1;
            report.lcd_buckets_force_x_in_an_y &= forces_x;
            report.lcd_soundness_violations += acc.lcd_unsound;
        }
        report.buckets.push(BucketReport {
            signature: sig.to_string(),
            graph_count: acc.graphs,
            selection_active: acc.active,
            x_in_an_y: acc.x_an_y,
            y_in_an_x: acc.y_an_x,
            forces_x_in_an_y: forces_x,
            forces_y_in_an_x: forces_y,
            lcd_pattern: acc.lcd,
        });
    }
    Ok(report)
}

/// A DMG with independent edge states on every pair: uniform over the 8
/// states, or empty with probability `empty_pair_prob` and otherwise uniform
/// over the 7 non-empty states. With `allow_cycles = false`, draws repeat
/// until the directed part is acyclic.
pub fn random_dmg<R: Rng>(
    rng: &mut R,
    nodes: &[(&str, NodeRole)],
    allow_cycles: bool,
    empty_pair_prob: Option<f64>,
) -> Result<Dmg> {
    if let Some(q) = empty_pair_prob {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "empty-pair probability {q} not in [0, 1]"
            )));
        }
    }
    let mut g = Dmg::new();
    for (name, role) in nodes {
        g.add_node(name, *role)?;
    }
    let pairs = node_pairs(nodes.len());
    loop {
        for &(i, j) in &pairs {
            let state = match empty_pair_prob {
                None => rng.random_range(0..8),
                Some(q) if rng.random_bool(q) => 0,
                Some(_) => rng.random_range(1..8),
            };
            g.set_pair(i, j, EdgeState(state));
        }
        if allow_cycles || g.is_acyclic() {
            return Ok(g);
        }
    }
}

fn system_names(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("N{k}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct YStructureCounterexample {
    pub graph: String,
    pub tuple: Vec<String>,
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct YStructureReport {
    pub graphs: u64,
    pub graphs_with_hits: u64,
    pub hits: u64,
    pub counterexamples: u64,
    /// Up to ten counterexamples, for inspection.
    pub examples: Vec<YStructureCounterexample>,
}

impl YStructureReport {
    fn merge(&mut self, o: YStructureReport) {
        self.graphs += o.graphs;
        self.graphs_with_hits += o.graphs_with_hits;
        self.hits += o.hits;
        self.counterexamples += o.counterexamples;
        for e in o.examples {
            if self.examples.len() < 10 {
                self.examples.push(e);
            }
        }
    }
}

/// Runs the oracle Extended Y-Structure search on `g` and checks each hit's
/// conclusions: `X ∈ an(Y)`, `Y ∉ an(X)`, `X ∉ an(S)` and no `X ↔ Y` in the
/// latent projection onto the observed and Selection nodes.
pub fn check_extended_ystructures(g: &Dmg) -> Result<YStructureReport> {
    let model = OracleModel::new(g.clone());
    let hits = find_y_structures(&model, true, None, &SearchOptions::default())?;
    let projection = g.latent_projection(g.all())?;
    let an_s = g.ancestors(g.selection_nodes())?;
    let mut report = YStructureReport {
        graphs: 1,
        graphs_with_hits: u64::from(!hits.is_empty()),
        ..Default::default()
    };
    for hit in &hits {
        report.hits += 1;
        let x = g.node(&hit.source)?;
        let y = g.node(&hit.target)?;
        let mut failed = Vec::new();
        if !g.ancestors(NodeSet::singleton(y))?.contains(x) {
            failed.push("X in an(Y)".to_string());
        }
        if g.ancestors(NodeSet::singleton(x))?.contains(y) {
            failed.push("Y not in an(X)".to_string());
        }
        if an_s.contains(x) {
            failed.push("X not in an(S)".to_string());
        }
        if projection.has_bidirected(x, y) {
            failed.push("X and Y unconfounded".to_string());
        }
        if !failed.is_empty() {
            report.counterexamples += 1;
            if report.examples.len() < 10 {
                report.examples.push(YStructureCounterexample {
                    graph: g.to_text(),
                    tuple: hit.tuple.clone(),
                    failed,
                });
            }
        }
    }
    Ok(report)
}

/// Samples `n_graphs` DMGs over four system nodes plus `0..=max_selection`
/// Selection nodes and checks every oracle Extended Y-Structure hit.
pub fn verify_extended_ystructure(
    n_graphs: u64,
    max_selection: usize,
    seed: u64,
    allow_cycles: bool,
    empty_pair_prob: Option<f64>,
) -> Result<YStructureReport> {
    if 4 + max_selection > 8 {
        return Err(Error::InvalidArgument("at most 4 selection nodes".into()));
    }
    let sys = ["V", "W", "X", "Y"];
    let sel_names: Vec<String> = (1..=max_selection).map(|k| format!("S{k}")).collect();
    const BLOCK: u64 = 256;
    let blocks = n_graphs.div_ceil(BLOCK);
    let parts: Vec<YStructureReport> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<YStructureReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let mut rep = YStructureReport::default();
            for _ in b * BLOCK..((b + 1) * BLOCK).min(n_graphs) {
                let k = rng.random_range(0..=max_selection);
                let nodes: Vec<(&str, NodeRole)> = sys
                    .iter()
                    .map(|&n| (n, NodeRole::System))
                    .chain(
                        sel_names[..k]
                            .iter()
                            .map(|n| (n.as_str(), NodeRole::Selection)),
                    )
                    .collect();
                let g = random_dmg(&mut rng, &nodes, allow_cycles, empty_pair_prob)?;
                rep.merge(check_extended_ystructures(&g)?);
            }
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    let mut report = YStructureReport::default();
    for p in parts {
        report.merge(p);
    }
    Ok(report)
}

/// Runs the minimal (in)dependence check on `n_graphs` random DMGs with
/// 3 to `max_nodes` nodes.
pub fn verify_lemma1(
    n_graphs: u64,
    max_nodes: usize,
    seed: u64,
    allow_cycles: bool,
) -> Result<Lemma1Report> {
    if !(3..=7).contains(&max_nodes) {
        return Err(Error::InvalidArgument("max_nodes must lie in 3..=7".into()));
    }
    let names = system_names(max_nodes);
    let parts: Vec<Lemma1Report> = (0..n_graphs)
        .into_par_iter()
        .map(|i| -> Result<Lemma1Report> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let n = rng.random_range(3..=max_nodes);
            let nodes: Vec<(&str, NodeRole)> = names[..n]
                .iter()
                .map(|s| (s.as_str(), NodeRole::System))
                .collect();
            let g = random_dmg(&mut rng, &nodes, allow_cycles, None)?;
            check_lemma1(&g)
        })
        .collect::<Result<_>>()?;
    let mut report = Lemma1Report::default();
    for p in parts {
        report.merge(p);
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub graphs: u64,
    pub queries: u64,
    pub disagreements: u64,
}

/// Compares σ- and d-separation on every query `(X, Y | C)` of disjoint
/// sets with `X`, `Y` non-empty, over random acyclic DMGs.
pub fn verify_sigma_d_equivalence(
    n_graphs: u64,
    max_nodes: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if !(2..=8).contains(&max_nodes) {
        return Err(Error::InvalidArgument("max_nodes must lie in 2..=8".into()));
    }
    let names = system_names(max_nodes);
    let parts: Vec<EquivalenceReport> = (0..n_graphs)
        .into_par_iter()
        .map(|i| -> Result<EquivalenceReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let n = rng.random_range(2..=max_nodes);
            let nodes: Vec<(&str, NodeRole)> = names[..n]
                .iter()
                .map(|s| (s.as_str(), NodeRole::System))
                .collect();
            let g = random_dmg(&mut rng, &nodes, false, None)?;
            let sep = Separator::new(&g);
            let mut rep = EquivalenceReport {
                graphs: 1,
                ..Default::default()
            };
            // Each node goes to X, Y, C or nowhere: base-4 digits.
            for code in 0..4u64.pow(n as u32) {
                let (mut x, mut y, mut c) = (NodeSet::EMPTY, NodeSet::EMPTY, NodeSet::EMPTY);
                let mut rest = code;
                for v in 0..n {
                    match rest % 4 {
                        1 => x.insert(v),
                        2 => y.insert(v),
                        3 => c.insert(v),
                        _ => {}
                    }
                    rest /= 4;
                }
                if x.is_empty() || y.is_empty() {
                    continue;
                }
                rep.queries += 1;
                if sep.sigma_separated(x, y, c)? != sep.d_separated(x, y, c)? {
                    rep.disagreements += 1;
                }
            }
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    let mut report = EquivalenceReport::default();
    for p in parts {
        report.graphs += p.graphs;
        report.queries += p.queries;
        report.disagreements += p.disagreements;
    }
    Ok(report)
}
