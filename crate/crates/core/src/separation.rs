//! σ-separation, d-separation and the graph-based independence oracle.
//!
//! Queries run as a reachability closure over `(node, arrival mark)` states,
//! a Bayes-ball style search generalized to the σ blocking rules. The arrival
//! mark records whether the walk entered the node through an arrowhead or a
//! tail and, for tails, whether the previous node lies in the same strongly
//! connected component. [`sigma_separated_by_paths`] is an independent
//! path-enumerating reference used to cross-check the closure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dmg, NodeId, NodeRole, NodeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Independent,
    Dependent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiVerdict {
    pub verdict: Verdict,
    /// Present for statistical tests, absent for oracle answers.
    pub p_value: Option<f64>,
}

impl CiVerdict {
    pub fn oracle(independent: bool) -> Self {
        CiVerdict {
            verdict: if independent {
                Verdict::Independent
            } else {
                Verdict::Dependent
            },
            p_value: None,
        }
    }

    pub fn is_independent(&self) -> bool {
        self.verdict == Verdict::Independent
    }

    pub fn is_dependent(&self) -> bool {
        self.verdict == Verdict::Dependent
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub role: NodeRole,
}

/// Answers conditional independence queries over a fixed set of observed
/// variables, addressed by index into [`CiModel::variables`].
///
/// Selection is implicit: implementations condition on it in every query.
pub trait CiModel: Sync {
    fn variables(&self) -> &[Variable];

    fn query(&self, x: usize, y: usize, z: &[usize]) -> Result<CiVerdict>;

    fn index_of(&self, name: &str) -> Result<usize> {
        self.variables()
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    fn name(&self, i: usize) -> &str {
        &self.variables()[i].name
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rule {
    Sigma,
    D,
}

/// Precomputed ancestor sets and strongly connected components for repeated
/// separation queries on one graph.
#[derive(Clone, Debug)]
pub struct Separator<'g> {
    g: &'g Dmg,
    index: SepIndex,
}

/// Per-node reflexive ancestor sets and strongly connected components.
#[derive(Clone, Debug)]
struct SepIndex {
    an_of: Vec<NodeSet>,
    scc: Vec<NodeSet>,
}

impl SepIndex {
    fn new(g: &Dmg) -> Self {
        let n = g.len();
        let an_of: Vec<NodeSet> = (0..n).map(|v| g.an(NodeSet::singleton(v))).collect();
        let scc = (0..n)
            .map(|v| an_of[v].intersection(g.de(NodeSet::singleton(v))))
            .collect();
        SepIndex { an_of, scc }
    }

    fn ancestors(&self, s: NodeSet) -> NodeSet {
        s.iter()
            .fold(NodeSet::EMPTY, |acc, v| acc.union(self.an_of[v]))
    }
}

// Arrival marks.
const HEAD: usize = 0;
const TAIL_SAME: usize = 1;
const TAIL_OTHER: usize = 2;

impl<'g> Separator<'g> {
    pub fn new(g: &'g Dmg) -> Self {
        Separator {
            g,
            index: SepIndex::new(g),
        }
    }

    pub fn graph(&self) -> &Dmg {
        self.g
    }

    fn ancestors(&self, s: NodeSet) -> NodeSet {
        self.index.ancestors(s)
    }

    fn validate(&self, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<()> {
        let all = self.g.all();
        for s in [x, y, c] {
            if !s.is_subset(all) {
                let bad = s.difference(all).iter().next().unwrap_or(0);
                return Err(Error::UnknownNode(format!("#{bad}")));
            }
        }
        if !x.is_disjoint(y) || !x.is_disjoint(c) || !y.is_disjoint(c) {
            return Err(Error::Overlap);
        }
        Ok(())
    }

    pub fn sigma_separated(&self, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<bool> {
        self.validate(x, y, c)?;
        Ok(!connected(self.g, &self.index, x, y, c, Rule::Sigma))
    }

    pub fn d_separated(&self, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<bool> {
        self.validate(x, y, c)?;
        Ok(!connected(self.g, &self.index, x, y, c, Rule::D))
    }

    /// Unchecked σ-separation for hot loops; inputs must be disjoint.
    pub(crate) fn sigma_separated_unchecked(&self, x: NodeSet, y: NodeSet, c: NodeSet) -> bool {
        !connected(self.g, &self.index, x, y, c, Rule::Sigma)
    }
}

fn connected(g: &Dmg, index: &SepIndex, x: NodeSet, y: NodeSet, c: NodeSet, rule: Rule) -> bool {
    if x.is_empty() || y.is_empty() {
        return false;
    }
    let scc = &index.scc;
    let an_c = index.ancestors(c);
    // visited[mark] is the set of nodes reached with that arrival mark.
    let mut visited = [NodeSet::EMPTY; 3];
    let mut stack: Vec<(NodeId, usize)> = Vec::new();

    let push =
        |u: NodeId, mark: usize, visited: &mut [NodeSet; 3], stack: &mut Vec<(NodeId, usize)>| {
            if !visited[mark].contains(u) {
                visited[mark].insert(u);
                stack.push((u, mark));
            }
        };

    let arrival_tail = |from: NodeId, at: NodeId| -> usize {
        // Edge at -> from: tail at `at`, pointing to `from`.
        if scc[at].contains(from) {
            TAIL_SAME
        } else {
            TAIL_OTHER
        }
    };

    for s in x.iter() {
        for u in g.children(s).iter() {
            push(u, HEAD, &mut visited, &mut stack);
        }
        for u in g.spouses(s).iter() {
            push(u, HEAD, &mut visited, &mut stack);
        }
        for u in g.parents(s).iter() {
            push(u, arrival_tail(s, u), &mut visited, &mut stack);
        }
    }

    while let Some((v, mark)) = stack.pop() {
        if y.contains(v) {
            return true;
        }
        let in_c = c.contains(v);
        // Edges out of v with an arrowhead at v: v <- u and v <-> u.
        // Combined with an arrowhead arrival these make v a collider.
        let into_v_allowed = if mark == HEAD {
            an_c.contains(v)
        } else {
            // Non-collider; arrival by tail.
            !in_c || (rule == Rule::Sigma && mark == TAIL_SAME)
        };
        if into_v_allowed {
            for u in g.parents(v).iter() {
                push(u, arrival_tail(v, u), &mut visited, &mut stack);
            }
            for u in g.spouses(v).iter() {
                push(u, HEAD, &mut visited, &mut stack);
            }
        }
        // Edges v -> u: tail at v, so v is a non-collider pointing to u.
        let blocked_by_arrival = in_c && (rule == Rule::D || mark == TAIL_OTHER);
        if !blocked_by_arrival {
            for u in g.children(v).iter() {
                if in_c && !scc[v].contains(u) {
                    continue;
                }
                push(u, HEAD, &mut visited, &mut stack);
            }
        }
    }
    false
}

pub fn sigma_separated(g: &Dmg, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<bool> {
    Separator::new(g).sigma_separated(x, y, c)
}

pub fn d_separated(g: &Dmg, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<bool> {
    Separator::new(g).d_separated(x, y, c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mark {
    Head,
    Tail,
}

/// Reference σ-separation: enumerates every path between `x` and `y` and
/// applies the blocking clauses literally. Exponential; meant for graphs of
/// at most seven nodes in tests.
pub fn sigma_separated_by_paths(g: &Dmg, x: NodeSet, y: NodeSet, c: NodeSet) -> Result<bool> {
    if !x.is_disjoint(y) || !x.is_disjoint(c) || !y.is_disjoint(c) {
        return Err(Error::Overlap);
    }
    let an_c = g.ancestors(c)?;
    let scc: Vec<NodeSet> = (0..g.len()).map(|v| g.scc(v)).collect();

    // (neighbor, mark at current node, mark at neighbor)
    let steps = |v: NodeId| -> Vec<(NodeId, Mark, Mark)> {
        let mut out = Vec::new();
        out.extend(g.children(v).iter().map(|u| (u, Mark::Tail, Mark::Head)));
        out.extend(g.parents(v).iter().map(|u| (u, Mark::Head, Mark::Tail)));
        out.extend(g.spouses(v).iter().map(|u| (u, Mark::Head, Mark::Head)));
        out
    };

    // A path is a node sequence plus the edge marks between consecutive nodes.
    struct Path {
        nodes: Vec<NodeId>,
        marks: Vec<(Mark, Mark)>,
    }

    fn blocked(p: &Path, an_c: NodeSet, c: NodeSet, scc: &[NodeSet]) -> bool {
        for k in 1..p.nodes.len() - 1 {
            let v = p.nodes[k];
            let into = p.marks[k - 1].1; // mark at v on the edge from the previous node
            let out = p.marks[k].0; // mark at v on the edge to the next node
            let collider = into == Mark::Head && out == Mark::Head;
            if collider {
                if !an_c.contains(v) {
                    return true;
                }
            } else if c.contains(v) {
                let prev = p.nodes[k - 1];
                let next = p.nodes[k + 1];
                if into == Mark::Tail && !scc[v].contains(prev) {
                    return true;
                }
                if out == Mark::Tail && !scc[v].contains(next) {
                    return true;
                }
            }
        }
        false
    }

    fn dfs(
        p: &mut Path,
        y: NodeSet,
        steps: &dyn Fn(NodeId) -> Vec<(NodeId, Mark, Mark)>,
        check: &dyn Fn(&Path) -> bool,
    ) -> bool {
        let v = *p.nodes.last().unwrap();
        for (u, mv, mu) in steps(v) {
            if p.nodes.contains(&u) {
                continue;
            }
            p.nodes.push(u);
            p.marks.push((mv, mu));
            let open = if y.contains(u) { check(p) } else { false };
            if open || dfs(p, y, steps, check) {
                return true;
            }
            p.nodes.pop();
            p.marks.pop();
        }
        false
    }

    let check = |p: &Path| !blocked(p, an_c, c, &scc);
    for s in x.iter() {
        let mut p = Path {
            nodes: vec![s],
            marks: Vec::new(),
        };
        if dfs(&mut p, y, &steps, &check) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// σ-separation oracle over the observable nodes of a graph. Every query is
/// conditioned on all Selection nodes.
#[derive(Clone, Debug)]
pub struct OracleModel {
    graph: Dmg,
    vars: Vec<Variable>,
    node_of: Vec<NodeId>,
    selection: NodeSet,
    index: SepIndex,
}

impl OracleModel {
    pub fn new(graph: Dmg) -> Self {
        let node_of: Vec<NodeId> = (0..graph.len())
            .filter(|&v| graph.role(v) != NodeRole::Selection)
            .collect();
        let vars = node_of
            .iter()
            .map(|&v| Variable {
                name: graph.name(v).to_string(),
                role: graph.role(v),
            })
            .collect();
        let index = SepIndex::new(&graph);
        let selection = graph.selection_nodes();
        OracleModel {
            graph,
            vars,
            node_of,
            selection,
            index,
        }
    }

    pub fn graph(&self) -> &Dmg {
        &self.graph
    }

    pub fn node(&self, var: usize) -> NodeId {
        self.node_of[var]
    }

    fn to_node(&self, i: usize) -> Result<NodeId> {
        self.node_of
            .get(i)
            .copied()
            .ok_or(Error::UnknownVariable(i))
    }
}

impl CiModel for OracleModel {
    fn variables(&self) -> &[Variable] {
        &self.vars
    }

    fn query(&self, x: usize, y: usize, z: &[usize]) -> Result<CiVerdict> {
        let xn = self.to_node(x)?;
        let yn = self.to_node(y)?;
        let zn = z
            .iter()
            .map(|&i| self.to_node(i))
            .collect::<Result<NodeSet>>()?;
        let (xs, ys) = (NodeSet::singleton(xn), NodeSet::singleton(yn));
        let c = zn.union(self.selection);
        if !xs.is_disjoint(ys) || !c.is_disjoint(xs.union(ys)) {
            return Err(Error::Overlap);
        }
        Ok(CiVerdict::oracle(!connected(
            &self.graph,
            &self.index,
            xs,
            ys,
            c,
            Rule::Sigma,
        )))
    }
}

/// `sigma_separated({x}, {y}, z ∪ selection)` on node ids of `g`.
pub fn oracle_ci(g: &Dmg, x: NodeId, y: NodeId, z: NodeSet) -> Result<CiVerdict> {
    let sel = g.selection_nodes();
    for v in z.with(x).with(y).iter() {
        if v < g.len() && sel.contains(v) {
            return Err(Error::SelectionQueried(g.name(v).to_string()));
        }
    }
    let independent = sigma_separated(
        g,
        NodeSet::singleton(x),
        NodeSet::singleton(y),
        z.union(sel),
    )?;
    Ok(CiVerdict::oracle(independent))
}

fn check_disjoint(x: usize, y: usize, w: &[usize], z: &[usize]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for &v in [x, y].iter().chain(w).chain(z) {
        if !seen.insert(v) {
            return Err(Error::Overlap);
        }
    }
    Ok(())
}

fn minimal<M: CiModel + ?Sized>(
    m: &M,
    x: usize,
    y: usize,
    w: &[usize],
    z: &[usize],
    want_independent: bool,
) -> Result<bool> {
    check_disjoint(x, y, w, z)?;
    if z.len() >= 64 {
        return Err(Error::InvalidArgument("minimality set too large".into()));
    }
    let full = (1u64 << z.len()) - 1;
    let mut cond: Vec<usize> = Vec::with_capacity(w.len() + z.len());
    // The full set first, then every proper subset.
    for mask in std::iter::once(full).chain((0..full).rev()) {
        cond.clear();
        cond.extend_from_slice(w);
        cond.extend(
            z.iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &v)| v),
        );
        let v = m.query(x, y, &cond)?;
        let expect_indep = if mask == full {
            want_independent
        } else {
            !want_independent
        };
        let ok = if expect_indep {
            v.is_independent()
        } else {
            v.is_dependent()
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `x ⊥ y | w ∪ [z]`: independent given `w ∪ z`, dependent given `w ∪ z'`
/// for every proper subset `z'` of `z`. Inconclusive answers make it false.
pub fn is_minimal_independence<M: CiModel + ?Sized>(
    m: &M,
    x: usize,
    y: usize,
    w: &[usize],
    z: &[usize],
) -> Result<bool> {
    minimal(m, x, y, w, z, true)
}

/// `x ⊥̸ y | w ∪ [z]`, the dual of [`is_minimal_independence`].
pub fn is_minimal_dependence<M: CiModel + ?Sized>(
    m: &M,
    x: usize,
    y: usize,
    w: &[usize],
    z: &[usize],
) -> Result<bool> {
    minimal(m, x, y, w, z, false)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Counterexample {
    pub x: String,
    pub y: String,
    pub w: Vec<String>,
    pub z: Vec<String>,
    pub minimal_independence: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub tuples_checked: usize,
    pub minimal_independences: usize,
    pub minimal_dependences: usize,
    /// Minimal independences where some element of `z` is not in `an(x ∪ y ∪ w)`.
    pub independence_violations: Vec<Lemma1Counterexample>,
    /// Minimal dependences where every element of `z` is in `an(x ∪ y ∪ w)`.
    pub dependence_violations: Vec<Lemma1Counterexample>,
    /// Minimal dependences where at least one element of `z` is in
    /// `an(x ∪ y ∪ w)`: the elementwise reading of the dependence rule.
    pub dependence_elementwise_violations: usize,
}

impl Lemma1Report {
    pub fn counterexamples(&self) -> usize {
        self.independence_violations.len() + self.dependence_violations.len()
    }

    pub fn merge(&mut self, other: Lemma1Report) {
        self.tuples_checked += other.tuples_checked;
        self.minimal_independences += other.minimal_independences;
        self.minimal_dependences += other.minimal_dependences;
        self.independence_violations
            .extend(other.independence_violations);
        self.dependence_violations
            .extend(other.dependence_violations);
        self.dependence_elementwise_violations += other.dependence_elementwise_violations;
    }
}

/// Exhaustively checks the minimal (in)dependence rules on `g`.
///
/// Every node takes part, Selection nodes included (they may sit in `w`).
/// For each unordered pair `{x, y}` and each disjoint `(w, z)` with `z`
/// non-empty: a minimal independence requires `z ⊆ an(x ∪ y ∪ w)`, and a
/// minimal dependence requires `z ⊄ an(x ∪ y ∪ w)`.
pub fn check_lemma1(g: &Dmg) -> Result<Lemma1Report> {
    let n = g.len();
    if n > 7 {
        return Err(Error::InvalidArgument(format!(
            "check_lemma1 supports at most 7 nodes, got {n}"
        )));
    }
    let sep = Separator::new(g);
    let mut report = Lemma1Report::default();
    let all = g.all();
    let names = |s: NodeSet| s.iter().map(|v| g.name(v).to_string()).collect::<Vec<_>>();

    for x in 0..n {
        for y in x + 1..n {
            let xs = NodeSet::singleton(x);
            let ys = NodeSet::singleton(y);
            let rest = all.difference(xs).difference(ys);
            for w in rest.subsets() {
                // Separation verdicts for every subset of rest \ w, keyed by mask.
                let free = rest.difference(w);
                for z in free.subsets() {
                    if z.is_empty() {
                        continue;
                    }
                    report.tuples_checked += 1;
                    let sep_full = sep.sigma_separated_unchecked(xs, ys, w.union(z));
                    let mut all_sub_sep = true;
                    let mut all_sub_con = true;
                    for zp in z.subsets() {
                        if zp == z {
                            continue;
                        }
                        if sep.sigma_separated_unchecked(xs, ys, w.union(zp)) {
                            all_sub_con = false;
                        } else {
                            all_sub_sep = false;
                        }
                        if !all_sub_sep && !all_sub_con {
                            break;
                        }
                    }
                    let an = sep.ancestors(xs.union(ys).union(w));
                    let example = |min_indep| Lemma1Counterexample {
                        x: g.name(x).to_string(),
                        y: g.name(y).to_string(),
                        w: names(w),
                        z: names(z),
                        minimal_independence: min_indep,
                    };
                    if sep_full && all_sub_con {
                        report.minimal_independences += 1;
                        if !z.is_subset(an) {
                            report.independence_violations.push(example(true));
                        }
                    }
                    if !sep_full && all_sub_sep {
                        report.minimal_dependences += 1;
                        if z.is_subset(an) {
                            report.dependence_violations.push(example(false));
                        }
                        if !z.is_disjoint(an) {
                            report.dependence_elementwise_violations += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
