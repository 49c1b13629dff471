//! Linear-Gaussian structural causal models with selection by rejection.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::citest::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Dmg, NodeId, NodeRole, NodeSet};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

/// Rows are kept when the sum over Selection nodes lies in `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub lower: f64,
    pub upper: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule {
            lower: 2.0,
            upper: 2.5,
        }
    }
}

impl SelectionRule {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower < upper {
            Ok(SelectionRule { lower, upper })
        } else {
            Err(Error::InvalidArgument(format!(
                "selection interval [{lower}, {upper}] is empty"
            )))
        }
    }

    pub fn accepts(&self, sum: f64) -> bool {
        sum >= self.lower && sum <= self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InterventionKind {
    SetValue(f64),
    /// Clamp to `-depth` noise scales of the target.
    Knockout {
        depth: f64,
    },
}

impl InterventionKind {
    pub fn knockout() -> Self {
        InterventionKind::Knockout { depth: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub target: String,
    pub kind: InterventionKind,
}

/// A linear-Gaussian SCM over an acyclic graph without bidirected edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScmJson", try_from = "ScmJson")]
pub struct LinearScm {
    graph: Dmg,
    /// Incoming `(parent, weight)` per node.
    weights: Vec<Vec<(NodeId, f64)>>,
    noise_scale: Vec<f64>,
    order: Vec<NodeId>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    name: String,
    role: NodeRole,
    noise_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    from: String,
    to: String,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct ScmJson {
    nodes: Vec<NodeJson>,
    edges: Vec<EdgeJson>,
    seed: u64,
}

impl From<LinearScm> for ScmJson {
    fn from(s: LinearScm) -> Self {
        let g = &s.graph;
        ScmJson {
            nodes: g
                .all()
                .iter()
                .map(|v| NodeJson {
                    name: g.name(v).into(),
                    role: g.role(v),
                    noise_scale: s.noise_scale[v],
                })
                .collect(),
            edges: g
                .all()
                .iter()
                .flat_map(|v| {
                    s.weights[v].iter().map(move |&(p, w)| EdgeJson {
                        from: g.name(p).into(),
                        to: g.name(v).into(),
                        weight: w,
                    })
                })
                .collect(),
            seed: s.seed,
        }
    }
}

impl TryFrom<ScmJson> for LinearScm {
    type Error = Error;

    fn try_from(j: ScmJson) -> Result<Self> {
        let mut g = Dmg::new();
        for n in &j.nodes {
            g.add_node(&n.name, n.role)?;
            if !(n.noise_scale.is_finite() && n.noise_scale > 0.0) {
                return Err(Error::Format(format!(
                    "noise scale of `{}` must be positive",
                    n.name
                )));
            }
        }
        let mut weights = vec![Vec::new(); g.len()];
        for e in &j.edges {
            let (a, b) = (g.node(&e.from)?, g.node(&e.to)?);
            g.add_directed(a, b)?;
            weights[b].push((a, e.weight));
        }
        let order = g.topological_order().ok_or(Error::Cyclic)?;
        let noise_scale = j.nodes.iter().map(|n| n.noise_scale).collect();
        Ok(LinearScm {
            graph: g,
            weights,
            noise_scale,
            order,
            seed: j.seed,
        })
    }
}

fn check_simulable(g: &Dmg) -> Result<Vec<NodeId>> {
    if let Some((a, b)) = g.bidirected_edges().next() {
        return Err(Error::Bidirected(g.name(a).into(), g.name(b).into()));
    }
    g.topological_order().ok_or(Error::Cyclic)
}

impl LinearScm {
    /// Draws raw weights uniformly from `±[0.5, 1.5]`, then rescales each node
    /// in topological order so that its marginal variance is exactly 1.
    pub fn sample_weights(g: &Dmg, seed: u64) -> Result<Self> {
        let order = check_simulable(g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let magnitude = Uniform::new_inclusive(0.5, 1.5).expect("valid range");
        let mut weights = vec![Vec::new(); g.len()];
        for &v in &order {
            for p in g.parents(v).iter() {
                let w: f64 = rng.sample(magnitude);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                weights[v].push((p, sign * w));
            }
        }
        let mut scm = LinearScm {
            graph: g.clone(),
            weights,
            noise_scale: vec![1.0; g.len()],
            order,
            seed,
        };
        scm.standardize();
        Ok(scm)
    }

    /// Builds an SCM from explicit weights `(from, to, w)` and noise scales,
    /// without rescaling.
    pub fn from_weights(g: &Dmg, edges: &[(&str, &str, f64)], noise_scale: &[f64]) -> Result<Self> {
        let order = check_simulable(g)?;
        if noise_scale.len() != g.len() {
            return Err(Error::InvalidArgument(
                "one noise scale per node required".into(),
            ));
        }
        let mut weights = vec![Vec::new(); g.len()];
        for &(a, b, w) in edges {
            let (a, b) = (g.node(a)?, g.node(b)?);
            if !g.has_directed(a, b) {
                return Err(Error::InvalidArgument(format!(
                    "no edge {} -> {} in graph",
                    g.name(a),
                    g.name(b)
                )));
            }
            weights[b].push((a, w));
        }
        for v in g.all().iter() {
            if weights[v].len() != g.parents(v).len() {
                return Err(Error::InvalidArgument(format!(
                    "missing weights into `{}`",
                    g.name(v)
                )));
            }
        }
        Ok(LinearScm {
            graph: g.clone(),
            weights,
            noise_scale: noise_scale.to_vec(),
            order,
            seed: 0,
        })
    }

    fn standardize(&mut self) {
        let n = self.graph.len();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for idx in 0..self.order.len() {
            let v = self.order[idx];
            let raw = self.fill_covariance_row(&mut cov, v);
            let sd = raw.sqrt();
            for (_, w) in &mut self.weights[v] {
                *w /= sd;
            }
            self.noise_scale[v] /= sd;
            self.fill_covariance_row(&mut cov, v);
        }
    }

    /// Writes row/column `v` of the covariance given its parents' rows and
    /// returns `Var(v)`.
    fn fill_covariance_row(&self, cov: &mut DMatrix<f64>, v: NodeId) -> f64 {
        let n = self.graph.len();
        for u in 0..n {
            if u == v {
                continue;
            }
            let c: f64 = self.weights[v].iter().map(|&(p, w)| w * cov[(p, u)]).sum();
            cov[(v, u)] = c;
            cov[(u, v)] = c;
        }
        let mut var = self.noise_scale[v].powi(2);
        for &(p, wp) in &self.weights[v] {
            for &(q, wq) in &self.weights[v] {
                var += wp * wq * cov[(p, q)];
            }
        }
        cov[(v, v)] = var;
        var
    }

    /// Exact covariance of all nodes without selection or intervention.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.graph.len();
        let mut cov = DMatrix::zeros(n, n);
        for &v in &self.order {
            self.fill_covariance_row(&mut cov, v);
        }
        cov
    }

    pub fn graph(&self) -> &Dmg {
        &self.graph
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_scale(&self, v: NodeId) -> f64 {
        self.noise_scale[v]
    }

    pub fn weight(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.weights[to]
            .iter()
            .find(|(p, _)| *p == from)
            .map(|&(_, w)| w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateOptions {
    pub selection: Option<SelectionRule>,
    pub intervention: Option<Intervention>,
    pub max_attempts: u64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            selection: None,
            intervention: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl SimulateOptions {
    pub fn selected() -> Self {
        SimulateOptions {
            selection: Some(SelectionRule::default()),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimulationStats {
    pub attempts: u64,
    pub accepted: usize,
}

/// A compiled sampling plan: nodes feeding the selection nodes are sampled
/// first, once per attempt; the rest only for accepted rows.
struct Plan {
    pre: Vec<NodeId>,
    post: Vec<NodeId>,
    selection: Vec<NodeId>,
    clamp: Option<(NodeId, f64)>,
}

impl LinearScm {
    fn plan(&self, opts: &SimulateOptions) -> Result<Plan> {
        let g = &self.graph;
        let clamp = match &opts.intervention {
            None => None,
            Some(iv) => {
                let t = g.node(&iv.target)?;
                if g.role(t) != NodeRole::System {
                    return Err(Error::InvalidArgument(format!(
                        "intervention target `{}` is not a system node",
                        iv.target
                    )));
                }
                let value = match iv.kind {
                    InterventionKind::SetValue(x) => x,
                    InterventionKind::Knockout { depth } => -depth * self.noise_scale[t],
                };
                Some((t, value))
            }
        };
        let selection: Vec<NodeId> = match opts.selection {
            Some(_) => g.selection_nodes().iter().collect(),
            None => Vec::new(),
        };
        // Ancestors of the selection nodes in the mutilated graph.
        let mut pre_set = NodeSet::EMPTY;
        let mut stack = selection.clone();
        while let Some(v) = stack.pop() {
            if pre_set.contains(v) {
                continue;
            }
            pre_set.insert(v);
            if clamp.is_some_and(|(t, _)| t == v) {
                continue;
            }
            stack.extend(g.parents(v).iter());
        }
        let pre = self
            .order
            .iter()
            .copied()
            .filter(|v| pre_set.contains(*v))
            .collect();
        let post = self
            .order
            .iter()
            .copied()
            .filter(|v| !pre_set.contains(*v))
            .collect();
        Ok(Plan {
            pre,
            post,
            selection,
            clamp,
        })
    }

    #[inline]
    fn draw<R: Rng>(&self, v: NodeId, row: &mut [f64], clamp: Option<(NodeId, f64)>, rng: &mut R) {
        if let Some((t, x)) = clamp {
            if t == v {
                row[v] = x;
                return;
            }
        }
        let e: f64 = rng.sample(StandardNormal);
        let mut val = self.noise_scale[v] * e;
        for &(p, w) in &self.weights[v] {
            val += w * row[p];
        }
        row[v] = val;
    }

    /// Samples `n` rows; under selection, attempts are rejected until `n` are
    /// accepted. Selection columns are dropped from the output.
    pub fn simulate_with_rng<R: Rng>(
        &self,
        n: usize,
        opts: &SimulateOptions,
        rng: &mut R,
    ) -> Result<(Dataset, SimulationStats)> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let plan = self.plan(opts)?;
        let g = &self.graph;
        let observed: Vec<NodeId> = g
            .all()
            .iter()
            .filter(|&v| g.role(v) != NodeRole::Selection)
            .collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); observed.len()];
        let mut row = vec![0.0; g.len()];
        let mut stats = SimulationStats::default();
        let rule = opts.selection.unwrap_or_default();
        while stats.accepted < n {
            if stats.attempts >= opts.max_attempts {
                return Err(Error::AttemptCapExceeded {
                    attempts: stats.attempts,
                    accepted: stats.accepted,
                });
            }
            stats.attempts += 1;
            for &v in &plan.pre {
                self.draw(v, &mut row, plan.clamp, rng);
            }
            if !plan.selection.is_empty() {
                let sum: f64 = plan.selection.iter().map(|&s| row[s]).sum();
                if !rule.accepts(sum) {
                    continue;
                }
            }
            for &v in &plan.post {
                self.draw(v, &mut row, plan.clamp, rng);
            }
            for (col, &v) in columns.iter_mut().zip(&observed) {
                col.push(row[v]);
            }
            stats.accepted += 1;
        }
        let names = observed.iter().map(|&v| g.name(v).to_string()).collect();
        let roles = observed.iter().map(|&v| g.role(v)).collect();
        Ok((Dataset::new(names, roles, columns)?, stats))
    }

    pub fn simulate(&self, n: usize, opts: &SimulateOptions, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.simulate_with_rng(n, opts, &mut rng)?.0)
    }

    /// `(D_S, D_∅)`: the same SCM with selection on and off, from independent
    /// RNG streams of `seed`.
    pub fn simulate_paired(&self, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut rng_s = ChaCha8Rng::seed_from_u64(seed);
        rng_s.set_stream(1);
        let mut rng_0 = ChaCha8Rng::seed_from_u64(seed);
        rng_0.set_stream(2);
        let (ds, _) = self.simulate_with_rng(n, &SimulateOptions::selected(), &mut rng_s)?;
        let (d0, _) = self.simulate_with_rng(n, &SimulateOptions::default(), &mut rng_0)?;
        Ok((ds, d0))
    }

    /// Fraction of `attempts` raw draws accepted by `rule`.
    pub fn acceptance_rate(&self, rule: SelectionRule, attempts: u64, seed: u64) -> Result<f64> {
        let opts = SimulateOptions {
            selection: Some(rule),
            ..Default::default()
        };
        let plan = self.plan(&opts)?;
        if plan.selection.is_empty() {
            return Ok(1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = vec![0.0; self.graph.len()];
        let mut accepted = 0u64;
        for _ in 0..attempts {
            for &v in &plan.pre {
                self.draw(v, &mut row, None, &mut rng);
            }
            let sum: f64 = plan.selection.iter().map(|&s| row[s]).sum();
            accepted += u64::from(rule.accepts(sum));
        }
        Ok(accepted as f64 / attempts as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityOptions {
    pub n_bins: usize,
    pub min_bin_rows: usize,
    pub bootstrap: usize,
    pub confidence: f64,
}

impl Default for IdentifiabilityOptions {
    fn default() -> Self {
        IdentifiabilityOptions {
            n_bins: 10,
            min_bin_rows: 30,
            bootstrap: 200,
            confidence: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub x: f64,
    pub n_obs: usize,
    pub n_do: usize,
    pub observational_mean: f64,
    pub interventional_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub bins: Vec<BinReport>,
    pub dropped_bins: usize,
    /// `max_b |E[Y | x_b, S] − E[Y | do(x_b), S]|` over kept bins.
    pub max_discrepancy: f64,
    /// Bootstrap quantile of the centred maximum discrepancy.
    pub critical_value: f64,
    pub consistent_with_zero: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Compares `E[Y | X = x, selected]` from observational data against
/// `E[Y | do(X = x), selected]` on a grid of `x`.
///
/// The grid is the within-bin mean of `X` over equal-count bins of the
/// selected observational sample. Each interventional arm gets
/// `n / n_bins` selected rows. The discrepancy is consistent with zero when
/// it does not exceed the bootstrap quantile of `max_b |d*_b − d_b|`.
pub fn check_identifiability(
    scm: &LinearScm,
    x: &str,
    y: &str,
    n: usize,
    seed: u64,
    opts: &IdentifiabilityOptions,
) -> Result<IdentifiabilityReport> {
    if opts.n_bins == 0 || opts.bootstrap == 0 || !(0.0..1.0).contains(&opts.confidence) {
        return Err(Error::InvalidArgument(
            "bins, bootstrap count and confidence must be valid".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = scm
        .simulate_with_rng(n, &SimulateOptions::selected(), &mut rng)?
        .0;
    let (xi, yi) = (obs.index_of(x)?, obs.index_of(y)?);
    let mut pairs: Vec<(f64, f64)> = obs
        .column(xi)
        .iter()
        .copied()
        .zip(obs.column(yi).iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let per_bin = n / opts.n_bins;
    let mut bins = Vec::new();
    let mut obs_y: Vec<Vec<f64>> = Vec::new();
    let mut do_y: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for b in 0..opts.n_bins {
        let lo = b * n / opts.n_bins;
        let hi = (b + 1) * n / opts.n_bins;
        let chunk = &pairs[lo..hi];
        if chunk.len() < opts.min_bin_rows || per_bin < opts.min_bin_rows {
            dropped += 1;
            continue;
        }
        let xs: Vec<f64> = chunk.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = chunk.iter().map(|p| p.1).collect();
        let center = mean(&xs);
        let iv = SimulateOptions {
            intervention: Some(Intervention {
                target: x.to_string(),
                kind: InterventionKind::SetValue(center),
            }),
            ..SimulateOptions::selected()
        };
        let arm = scm.simulate_with_rng(per_bin, &iv, &mut rng)?.0;
        let dy = arm.column(arm.index_of(y)?).to_vec();
        bins.push(BinReport {
            x: center,
            n_obs: ys.len(),
            n_do: dy.len(),
            observational_mean: mean(&ys),
            interventional_mean: mean(&dy),
        });
        obs_y.push(ys);
        do_y.push(dy);
    }
    if bins.is_empty() {
        return Err(Error::InsufficientRows {
            have: n,
            need: opts.min_bin_rows * opts.n_bins,
        });
    }
    let d: Vec<f64> = bins
        .iter()
        .map(|b| b.observational_mean - b.interventional_mean)
        .collect();
    let max_discrepancy = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let resample_mean = |v: &[f64], rng: &mut ChaCha8Rng| -> f64 {
        let mut s = 0.0;
        for _ in 0..v.len() {
            s += v[rng.random_range(0..v.len())];
        }
        s / v.len() as f64
    };
    let mut stats = Vec::with_capacity(opts.bootstrap);
    for _ in 0..opts.bootstrap {
        let mut t: f64 = 0.0;
        for (b, db) in d.iter().enumerate() {
            let star = resample_mean(&obs_y[b], &mut rng) - resample_mean(&do_y[b], &mut rng);
            t = t.max((star - db).abs());
        }
        stats.push(t);
    }
    stats.sort_by(f64::total_cmp);
    let k = ((opts.confidence * stats.len() as f64).ceil() as usize).clamp(1, stats.len()) - 1;
    let critical_value = stats[k];
    Ok(IdentifiabilityReport {
        bins,
        dropped_bins: dropped,
        max_discrepancy,
        critical_value,
        consistent_with_zero: max_discrepancy <= critical_value,
    })
}
