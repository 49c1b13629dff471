//! Ground truth, PR/ROC curves, bootstrap aggregation and the simulation
//! experiment drivers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::{ContextTest, DataCiModel, Dataset, DecisionPolicy};
use crate::error::{Error, Result};
use crate::graph::{Dmg, NodeRole, NodeSet};
use crate::icp::{icp_predict, IcpOptions};
use crate::patterns::{
    find_lcd, find_y_structures, hit_holds, hit_score, score_predictions, Method, PatternHit,
    Prediction, SearchOptions,
};
use crate::randgraph::{fixed_graph, sample_random_graph, GraphSamplerParams};
use crate::scm::{Intervention, InterventionKind, LinearScm, SimulateOptions};
use crate::separation::{CiModel, OracleModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    GraphAncestral,
    OraclePattern,
    InterventionEffect,
}

/// Positive ordered pairs over a fixed node list. Every ordered pair of
/// distinct nodes is a candidate; the ones not in `positives` are negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub provenance: Provenance,
    pub nodes: Vec<String>,
    pub positives: BTreeSet<(String, String)>,
}

impl GroundTruth {
    pub fn n_candidates(&self) -> usize {
        self.nodes.len() * self.nodes.len().saturating_sub(1)
    }

    pub fn n_positives(&self) -> usize {
        self.positives.len()
    }

    pub fn n_negatives(&self) -> usize {
        self.n_candidates() - self.n_positives()
    }

    pub fn is_candidate(&self, source: &str, target: &str) -> bool {
        source != target
            && self.nodes.iter().any(|n| n == source)
            && self.nodes.iter().any(|n| n == target)
    }

    pub fn is_positive(&self, source: &str, target: &str) -> bool {
        self.positives
            .contains(&(source.to_string(), target.to_string()))
    }
}

/// Ordered system pairs `(a, b)` with `b` a proper descendant of `a`.
pub fn ancestral_ground_truth(g: &Dmg) -> GroundTruth {
    ancestral_ground_truth_with(g, false)
}

/// As [`ancestral_ground_truth`], optionally with the context nodes added to
/// the candidate set.
pub fn ancestral_ground_truth_with(g: &Dmg, include_context: bool) -> GroundTruth {
    let mut keep = g.nodes_with_role(NodeRole::System);
    if include_context {
        keep = keep.union(g.nodes_with_role(NodeRole::Context));
    }
    let mut positives = BTreeSet::new();
    for a in keep.iter() {
        let de = g
            .descendants(NodeSet::singleton(a))
            .expect("node of the graph");
        for b in de.intersection(keep).iter() {
            if a != b {
                positives.insert((g.name(a).to_string(), g.name(b).to_string()));
            }
        }
    }
    GroundTruth {
        provenance: Provenance::GraphAncestral,
        nodes: keep.iter().map(|v| g.name(v).to_string()).collect(),
        positives,
    }
}

/// Does the independence pattern of `hit` exist in `g`, with every
/// Selection node conditioned?
pub fn oracle_pattern_check(g: &Dmg, hit: &PatternHit) -> Result<bool> {
    hit_holds(&OracleModel::new(g.clone()), hit)
}

/// `S_ij = |x_{j;i} − μ_j| / σ_j` for every system target `i` in
/// `iv_samples` and every other system variable `j`, with `μ`, `σ` from
/// `obs`. Each row of `iv_samples` is laid out like the columns of `obs`.
pub fn intervention_effects(
    obs: &Dataset,
    iv_samples: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<(String, String, f64)>> {
    let system = obs.system_columns();
    let n = obs.n_rows() as f64;
    if obs.n_rows() < 2 {
        return Err(Error::InsufficientRows {
            have: obs.n_rows(),
            need: 2,
        });
    }
    let mut stats = BTreeMap::new();
    for &j in &system {
        let col = obs.column(j);
        let mu = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if sd.is_nan() || sd <= 0.0 {
            return Err(Error::ConstantColumn(obs.name(j).to_string()));
        }
        stats.insert(j, (mu, sd));
    }
    let mut out = Vec::new();
    for (target, row) in iv_samples {
        let i = obs.index_of(target)?;
        if obs.role(i) != NodeRole::System {
            return Err(Error::InvalidArgument(format!(
                "`{target}` is not a system variable"
            )));
        }
        if row.len() != obs.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "interventional row for `{target}` has {} values, expected {}",
                row.len(),
                obs.n_cols()
            )));
        }
        for &j in &system {
            if j != i {
                let (mu, sd) = stats[&j];
                out.push((
                    target.clone(),
                    obs.name(j).to_string(),
                    (row[j] - mu).abs() / sd,
                ));
            }
        }
    }
    Ok(out)
}

/// Pairs whose effect size is among the top `quantile` fraction of all
/// `S_ij`. Ties at the cut are all positive.
pub fn intervention_ground_truth(
    obs: &Dataset,
    iv_samples: &BTreeMap<String, Vec<f64>>,
    quantile: f64,
) -> Result<GroundTruth> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile {quantile} not in (0, 1]"
        )));
    }
    let effects = intervention_effects(obs, iv_samples)?;
    let mut sorted: Vec<f64> = effects.iter().map(|e| e.2).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((quantile * sorted.len() as f64).ceil() as usize).max(1);
    let cut = sorted.get(k - 1).copied().unwrap_or(f64::INFINITY);
    Ok(GroundTruth {
        provenance: Provenance::InterventionEffect,
        nodes: obs
            .system_columns()
            .into_iter()
            .map(|j| obs.name(j).to_string())
            .collect(),
        positives: effects
            .into_iter()
            .filter(|e| e.2 >= cut)
            .map(|(a, b, _)| (a, b))
            .collect(),
    })
}

/// One knockout sample per system variable, without selection.
pub fn knockout_samples(scm: &LinearScm, seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
    let g = scm.graph();
    let mut out = BTreeMap::new();
    for (k, v) in g.nodes_with_role(NodeRole::System).iter().enumerate() {
        let opts = SimulateOptions {
            intervention: Some(Intervention {
                target: g.name(v).to_string(),
                kind: InterventionKind::knockout(),
            }),
            ..Default::default()
        };
        let d = scm.simulate(1, &opts, child_seed(seed, k as u64))?;
        let row = (0..d.n_cols()).map(|j| d.column(j)[0]).collect();
        out.insert(g.name(v).to_string(), row);
    }
    Ok(out)
}

/// Score equivalent to a p-value of 0.01 for the pattern scores.
pub fn marker_score() -> f64 {
    -(0.01f64).ln()
}

/// Threshold at which a method's curve gets its marker. ICP scores are
/// p-values, the others `−ln p`.
pub fn marker_threshold(method: Method) -> f64 {
    match method {
        Method::Icp => 0.01,
        _ => marker_score(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub marker: bool,
}

/// Sweeps the distinct scores in descending order; equal scores enter
/// together. The marker goes on the last point whose threshold is at least
/// `marker_at`.
pub fn sweep(items: &[(f64, bool)], n_pos: usize, n_neg: usize, marker_at: f64) -> Vec<CurvePoint> {
    let mut sorted: Vec<(f64, bool)> = items.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            threshold: t,
            tp,
            fp,
            precision: tp as f64 / (tp + fp) as f64,
            recall: ratio(tp, n_pos),
            fpr: ratio(fp, n_neg),
            marker: false,
        });
    }
    if let Some(last) = points.iter().rposition(|p| p.threshold >= marker_at) {
        points[last].marker = true;
    }
    points
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Predictions outside the truth's candidate pairs are ignored.
fn label(preds: &[Prediction], truth: &GroundTruth) -> Vec<(f64, bool)> {
    preds
        .iter()
        .filter(|p| truth.is_candidate(&p.source, &p.target))
        .map(|p| (p.score, truth.is_positive(&p.source, &p.target)))
        .collect()
}

fn marker_for(preds: &[Prediction]) -> f64 {
    preds
        .first()
        .map(|p| marker_threshold(p.kind))
        .unwrap_or_else(marker_score)
}

pub fn pr_curve(preds: &[Prediction], truth: &GroundTruth) -> Vec<CurvePoint> {
    sweep(
        &label(preds, truth),
        truth.n_positives(),
        truth.n_negatives(),
        marker_for(preds),
    )
}

/// As [`pr_curve`], starting from the origin.
pub fn roc_curve(preds: &[Prediction], truth: &GroundTruth) -> Vec<CurvePoint> {
    let mut pts = vec![origin()];
    pts.extend(pr_curve(preds, truth));
    pts
}

fn origin() -> CurvePoint {
    CurvePoint {
        threshold: f64::INFINITY,
        tp: 0,
        fp: 0,
        precision: 1.0,
        recall: 0.0,
        fpr: 0.0,
        marker: false,
    }
}

/// `Σ (R_k − R_{k−1}) P_k` over the sweep.
pub fn average_precision(points: &[CurvePoint]) -> f64 {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in points {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    ap
}

/// Trapezoidal area under the ROC curve, closed by a straight segment to
/// `(1, 1)`: unscored pairs tie below every scored one.
pub fn auc_roc(points: &[CurvePoint]) -> f64 {
    let mut area = 0.0;
    let (mut x0, mut y0) = (0.0, 0.0);
    for p in points.iter().chain(std::iter::once(&CurvePoint {
        recall: 1.0,
        fpr: 1.0,
        ..origin()
    })) {
        area += (p.fpr - x0) * (p.recall + y0) / 2.0;
        x0 = p.fpr;
        y0 = p.recall;
    }
    area
}

/// How data are turned into predictions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub policy: DecisionPolicy,
    pub context_test: ContextTest,
    /// Name of a variable to fix as the Y-Structure auxiliary `V`.
    pub fixed_v: Option<String>,
    pub icp: IcpOptions,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MethodOutput {
    /// Empty for ICP.
    pub hits: Vec<PatternHit>,
    pub predictions: Vec<Prediction>,
}

fn require_context(d: &Dataset, method: Method) -> Result<usize> {
    d.context_column()
        .ok_or_else(|| Error::InvalidArgument(format!("{method} needs a context column")))
}

/// Runs one method on `d`. ICP binarizes a continuous context at its mean.
pub fn run_method(d: &Dataset, method: Method, cfg: &MethodConfig) -> Result<MethodOutput> {
    if method == Method::Icp {
        let c = require_context(d, method)?;
        let mut owned;
        let data = if d.is_discrete(c) {
            d
        } else {
            owned = d.clone();
            owned.binarize_at_mean(c);
            &owned
        };
        let mut predictions = Vec::new();
        for t in data.system_columns() {
            let r = icp_predict(data, t, c, &cfg.policy, &cfg.icp)?;
            predictions.extend(r.predictions(data));
        }
        return Ok(MethodOutput {
            hits: Vec::new(),
            predictions,
        });
    }
    let model = DataCiModel::new(d, cfg.policy)?.with_context_test(cfg.context_test)?;
    let opts = SearchOptions::default();
    let hits = match method {
        Method::Lcd => find_lcd(&model, require_context(d, method)?, &opts)?,
        Method::YSt | Method::YStExt => {
            let v = match &cfg.fixed_v {
                Some(name) => Some(model.index_of(name)?),
                None => None,
            };
            find_y_structures(&model, method == Method::YStExt, v, &opts)?
        }
        Method::Icp => unreachable!(),
    };
    let predictions = score_predictions(&hits)?;
    Ok(MethodOutput { hits, predictions })
}

/// Derives an independent seed for replicate `i`.
pub fn child_seed(seed: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng.next_u64()
}

/// Mean score of each `(source, target)` over `b` half-subsamples drawn
/// without replacement. A run that misses a pair contributes 0.
pub fn bootstrap_scores(
    method: Method,
    d: &Dataset,
    cfg: &MethodConfig,
    b: usize,
    seed: u64,
) -> Result<Vec<Prediction>> {
    if b == 0 {
        return Err(Error::InvalidArgument("at least one bootstrap run".into()));
    }
    let half = d.n_rows() / 2;
    let runs: Vec<Vec<Prediction>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, r));
            let mut rows = rand::seq::index::sample(&mut rng, d.n_rows(), half).into_vec();
            rows.sort_unstable();
            run_method(&d.select_rows(&rows), method, cfg).map(|o| o.predictions)
        })
        .collect::<Result<_>>()?;
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for run in runs {
        for p in run {
            let e = acc.entry((p.source, p.target)).or_default();
            e.0 += p.score;
            e.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((source, target), (sum, k))| Prediction {
            source,
            target,
            score: sum / b as f64,
            kind: method,
            n_hits: k,
            supporting_hits: Vec::new(),
        })
        .collect())
}

/// `D_S` (selection on) or `D_∅` (selection off).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "D_S")]
    Selected,
    #[serde(rename = "D_0")]
    Unselected,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Selected, Arm::Unselected];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Selected => "D_S",
            Arm::Unselected => "D_0",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedGraphConfig {
    pub n_models: usize,
    pub n: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub method: MethodConfig,
}

impl Default for FixedGraphConfig {
    fn default() -> Self {
        FixedGraphConfig {
            n_models: 200,
            n: 10_000,
            seed: 1,
            methods: vec![Method::Icp, Method::Lcd, Method::YStExt, Method::YSt],
            method: MethodConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub method: Method,
    pub dataset: Arm,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
}

/// Counts of all emitted predictions against the ancestral truth, summed
/// over models, one row per method and arm.
pub fn run_fixed_graph_experiment(cfg: &FixedGraphConfig) -> Result<Vec<CountRow>> {
    let g = fixed_graph();
    let truth = ancestral_ground_truth(&g);
    let per_model: Vec<Vec<CountRow>> = (0..cfg.n_models as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<CountRow>> {
            let scm = LinearScm::sample_weights(&g, child_seed(cfg.seed, 2 * i))?;
            let (ds, d0) = scm.simulate_paired(cfg.n, child_seed(cfg.seed, 2 * i + 1))?;
            let mut rows = Vec::new();
            for (arm, d) in [(Arm::Selected, &ds), (Arm::Unselected, &d0)] {
                for &m in &cfg.methods {
                    let preds = run_method(d, m, &cfg.method)?.predictions;
                    let tp = preds
                        .iter()
                        .filter(|p| truth.is_positive(&p.source, &p.target))
                        .count();
                    rows.push(CountRow {
                        method: m,
                        dataset: arm,
                        n_pred: preds.len(),
                        tp,
                        fp: preds.len() - tp,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut total: BTreeMap<(Arm, usize), CountRow> = BTreeMap::new();
    for rows in per_model {
        for r in rows {
            let k = cfg.methods.iter().position(|&m| m == r.method).unwrap_or(0);
            let e = total.entry((r.dataset, k)).or_insert(CountRow {
                n_pred: 0,
                tp: 0,
                fp: 0,
                ..r.clone()
            });
            e.n_pred += r.n_pred;
            e.tp += r.tp;
            e.fp += r.fp;
        }
    }
    Ok(total.into_values().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomGraphConfig {
    pub sampler: GraphSamplerParams,
    pub n_graphs: usize,
    pub n: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub method: MethodConfig,
    /// Bootstrap runs per dataset; plain single runs when `None`.
    pub bootstrap: Option<usize>,
    /// Also score pattern hits against the oracle patterns of the true graph.
    pub oracle_patterns: bool,
}

impl RandomGraphConfig {
    pub fn new(p: usize) -> Self {
        RandomGraphConfig {
            sampler: GraphSamplerParams::for_size(p),
            n_graphs: 100,
            n: 10_000,
            seed: 1,
            methods: vec![Method::Icp, Method::Lcd, Method::YStExt, Method::YSt],
            method: MethodConfig::default(),
            bootstrap: None,
            oracle_patterns: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: Method,
    pub dataset: Arm,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub marker: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub method: Method,
    pub dataset: Arm,
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: usize,
    pub fp: usize,
    pub marker: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub method: Method,
    pub dataset: Arm,
    pub n_pred: usize,
    pub positives: usize,
    pub average_precision: f64,
    pub auc_roc: f64,
    /// Counts at the marker threshold.
    pub tp_at_marker: usize,
    pub fp_at_marker: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RandomGraphResult {
    pub pr: Vec<CurveRow>,
    pub roc: Vec<RocRow>,
    pub summary: Vec<CurveSummary>,
    /// PR curves against oracle patterns, one item per hit.
    pub oracle_pr: Vec<CurveRow>,
    pub oracle_summary: Vec<CurveSummary>,
    /// Retries the sampler needed, per graph.
    pub sampler_retries: Vec<usize>,
}

impl RandomGraphResult {
    pub fn summary_for(&self, method: Method, arm: Arm) -> Option<&CurveSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.dataset == arm)
    }
}

#[derive(Default)]
struct Pool {
    items: Vec<(f64, bool)>,
    positives: usize,
    negatives: usize,
}

impl Pool {
    fn absorb(&mut self, o: Pool) {
        self.items.extend(o.items);
        self.positives += o.positives;
        self.negatives += o.negatives;
    }
}

type PoolKey = (Method, Arm);

struct GraphOutcome {
    claims: BTreeMap<PoolKey, Pool>,
    patterns: BTreeMap<PoolKey, Pool>,
    retries: usize,
}

/// The true graph behind a dataset: without its Selection nodes for `D_∅`.
fn arm_graph(g: &Dmg, arm: Arm) -> Result<Dmg> {
    match arm {
        Arm::Selected => Ok(g.clone()),
        Arm::Unselected => {
            let keep = g.all().difference(g.selection_nodes());
            g.latent_projection(keep)
        }
    }
}

fn oracle_pattern_pool(g: &Dmg, method: Method, hits: &[PatternHit]) -> Result<Pool> {
    let oracle = OracleModel::new(g.clone());
    let truth = match method {
        Method::Lcd => match oracle
            .variables()
            .iter()
            .position(|v| v.role == NodeRole::Context)
        {
            Some(c) => find_lcd(&oracle, c, &SearchOptions::default())?,
            None => Vec::new(),
        },
        Method::YSt | Method::YStExt => find_y_structures(
            &oracle,
            method == Method::YStExt,
            None,
            &SearchOptions::default(),
        )?,
        Method::Icp => return Ok(Pool::default()),
    };
    let mut items = Vec::with_capacity(hits.len());
    for h in hits {
        let score = hit_score(h)?.unwrap_or(1.0);
        items.push((score, hit_holds(&oracle, h)?));
    }
    Ok(Pool {
        items,
        positives: truth.len(),
        negatives: 0,
    })
}

fn run_random_graph(cfg: &RandomGraphConfig, i: u64) -> Result<GraphOutcome> {
    let sampled = sample_random_graph(&cfg.sampler, child_seed(cfg.seed, 3 * i))?;
    let g = sampled.graph;
    let scm = LinearScm::sample_weights(&g, child_seed(cfg.seed, 3 * i + 1))?;
    let (ds, d0) = scm.simulate_paired(cfg.n, child_seed(cfg.seed, 3 * i + 2))?;
    let truth = ancestral_ground_truth(&g);
    let mut claims = BTreeMap::new();
    let mut patterns = BTreeMap::new();
    for (arm, d) in [(Arm::Selected, &ds), (Arm::Unselected, &d0)] {
        for &m in &cfg.methods {
            let out = match cfg.bootstrap {
                Some(b) => MethodOutput {
                    hits: Vec::new(),
                    predictions: bootstrap_scores(
                        m,
                        d,
                        &cfg.method,
                        b,
                        child_seed(cfg.seed, 3 * i + 2) ^ m as u64,
                    )?,
                },
                None => run_method(d, m, &cfg.method)?,
            };
            claims.insert(
                (m, arm),
                Pool {
                    items: label(&out.predictions, &truth),
                    positives: truth.n_positives(),
                    negatives: truth.n_negatives(),
                },
            );
            if cfg.oracle_patterns && m != Method::Icp && cfg.bootstrap.is_none() {
                let pool = oracle_pattern_pool(&arm_graph(&g, arm)?, m, &out.hits)?;
                patterns.insert((m, arm), pool);
            }
        }
    }
    Ok(GraphOutcome {
        claims,
        patterns,
        retries: sampled.retries,
    })
}

fn curves(
    pools: BTreeMap<PoolKey, Pool>,
    pr: &mut Vec<CurveRow>,
    mut roc: Option<&mut Vec<RocRow>>,
    summary: &mut Vec<CurveSummary>,
) {
    for ((method, arm), pool) in pools {
        let marker = marker_threshold(method);
        let pts = sweep(&pool.items, pool.positives, pool.negatives, marker);
        let at_marker = pts.iter().find(|p| p.marker);
        summary.push(CurveSummary {
            method,
            dataset: arm,
            n_pred: pool.items.len(),
            positives: pool.positives,
            average_precision: average_precision(&pts),
            auc_roc: auc_roc(&pts),
            tp_at_marker: at_marker.map_or(0, |p| p.tp),
            fp_at_marker: at_marker.map_or(0, |p| p.fp),
        });
        for p in &pts {
            pr.push(CurveRow {
                method,
                dataset: arm,
                threshold: p.threshold,
                precision: p.precision,
                recall: p.recall,
                tp: p.tp,
                fp: p.fp,
                marker: p.marker,
            });
        }
        if let Some(roc) = roc.as_deref_mut() {
            for p in std::iter::once(&origin()).chain(&pts) {
                roc.push(RocRow {
                    method,
                    dataset: arm,
                    threshold: p.threshold,
                    fpr: p.fpr,
                    tpr: p.recall,
                    tp: p.tp,
                    fp: p.fp,
                    marker: p.marker,
                });
            }
        }
    }
}

/// Pools predictions over `n_graphs` random graphs and builds PR and ROC
/// curves per method and arm.
pub fn run_random_graph_experiment(cfg: &RandomGraphConfig) -> Result<RandomGraphResult> {
    cfg.sampler.validate()?;
    let outcomes: Vec<GraphOutcome> = (0..cfg.n_graphs as u64)
        .into_par_iter()
        .map(|i| run_random_graph(cfg, i))
        .collect::<Result<_>>()?;
    let mut claims: BTreeMap<PoolKey, Pool> = BTreeMap::new();
    let mut patterns: BTreeMap<PoolKey, Pool> = BTreeMap::new();
    let mut result = RandomGraphResult::default();
    for o in outcomes {
        for (k, p) in o.claims {
            claims.entry(k).or_default().absorb(p);
        }
        for (k, p) in o.patterns {
            patterns.entry(k).or_default().absorb(p);
        }
        result.sampler_retries.push(o.retries);
    }
    curves(
        claims,
        &mut result.pr,
        Some(&mut result.roc),
        &mut result.summary,
    );
    curves(
        patterns,
        &mut result.oracle_pr,
        None,
        &mut result.oracle_summary,
    );
    Ok(result)
}

/// The random-graph experiment at each sample size in `ns`.
pub fn run_sample_size_sweep(
    cfg: &RandomGraphConfig,
    ns: &[usize],
) -> Result<Vec<(usize, RandomGraphResult)>> {
    ns.iter()
        .map(|&n| {
            let c = RandomGraphConfig { n, ..cfg.clone() };
            run_random_graph_experiment(&c).map(|r| (n, r))
        })
        .collect()
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dmg;

    fn pred(s: &str, t: &str, score: f64) -> Prediction {
        Prediction {
            source: s.into(),
            target: t.into(),
            score,
            kind: Method::Lcd,
            n_hits: 1,
            supporting_hits: Vec::new(),
        }
    }

    fn names(pairs: &BTreeSet<(String, String)>) -> Vec<(&str, &str)> {
        pairs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect()
    }

    #[test]
    fn fixed_graph_truth() {
        let t = ancestral_ground_truth(&fixed_graph());
        assert_eq!(
            names(&t.positives),
            vec![("X3", "X2"), ("X4", "X5"), ("X4", "X6"), ("X5", "X6")]
        );
        assert_eq!(t.n_candidates(), 30);
        let with_c = ancestral_ground_truth_with(&fixed_graph(), true);
        assert_eq!(with_c.n_positives(), 7);
        assert!(with_c.is_positive("C", "X6"));
    }

    #[test]
    fn chain_and_empty_truth() {
        let chain: Dmg = "node A system\nnode B system\nnode C system\nnode D system\n\
                          edge A -> B\nedge B -> C\nedge C -> D"
            .parse()
            .unwrap();
        assert_eq!(ancestral_ground_truth(&chain).n_positives(), 6);
        let empty: Dmg = "node A system\nnode B system".parse().unwrap();
        assert!(ancestral_ground_truth(&empty).positives.is_empty());
    }

    #[test]
    fn lcd_failure_pattern_exists_though_claim_is_wrong() {
        let g: Dmg = "node C context\nnode X system\nnode Y system\nnode S selection\n\
                      edge C -> X\nedge X -> S\nedge Y -> S"
            .parse()
            .unwrap();
        let hits = find_lcd(&OracleModel::new(g.clone()), 0, &SearchOptions::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(oracle_pattern_check(&g, &hits[0]).unwrap());
        assert!(!ancestral_ground_truth(&g).is_positive("X", "Y"));
        let without_s = arm_graph(&g, Arm::Unselected).unwrap();
        assert!(!oracle_pattern_check(&without_s, &hits[0]).unwrap());
    }

    #[test]
    fn effect_size_arithmetic() {
        let obs = Dataset::new(
            vec!["A".into(), "B".into()],
            vec![NodeRole::System; 2],
            vec![vec![0.0, 1.0, 2.0], vec![-1.0, 1.0, 3.0]],
        )
        .unwrap();
        // B has mean 1 and sample SD 2.
        let iv = BTreeMap::from([("A".to_string(), vec![0.0, 5.0])]);
        let e = intervention_effects(&obs, &iv).unwrap();
        assert_eq!(e, vec![("A".to_string(), "B".to_string(), 2.0)]);
        let flat = Dataset::new(
            vec!["A".into(), "B".into()],
            vec![NodeRole::System; 2],
            vec![vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            intervention_effects(&flat, &iv),
            Err(Error::ConstantColumn(_))
        ));
    }

    #[test]
    fn knockout_truth_finds_strong_direct_effect() {
        let g = fixed_graph();
        let scm = LinearScm::from_weights(
            &g,
            &[
                ("C", "X1", 1.0),
                ("X1", "S", 1.0),
                ("X2", "S", 1.0),
                ("X3", "X2", 0.2),
                ("C", "X5", 0.2),
                ("X4", "X5", 0.2),
                ("X5", "X6", 3.0),
            ],
            &[1.0; 8],
        )
        .unwrap();
        let obs = scm.simulate(5000, &SimulateOptions::default(), 3).unwrap();
        let iv = knockout_samples(&scm, 4).unwrap();
        assert_eq!(iv.len(), 6);
        let truth = intervention_ground_truth(&obs, &iv, 0.05).unwrap();
        assert!(truth.is_positive("X5", "X6"), "{:?}", truth.positives);
        assert_eq!(truth.n_positives(), 2);
    }

    #[test]
    fn pr_precision_sequence() {
        let truth = GroundTruth {
            provenance: Provenance::GraphAncestral,
            nodes: vec!["A".into(), "B".into(), "C".into()],
            positives: [("A", "B"), ("B", "C")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        };
        let preds = vec![
            pred("A", "B", 9.0),
            pred("B", "C", 8.0),
            pred("C", "A", 1.0),
        ];
        let pts = pr_curve(&preds, &truth);
        let prec: Vec<f64> = pts.iter().map(|p| p.precision).collect();
        assert_eq!(prec, vec![1.0, 1.0, 2.0 / 3.0]);
        assert_eq!(pts.iter().filter(|p| p.marker).count(), 1);
        assert!(pts[1].marker);
        assert!((average_precision(&pts) - 1.0).abs() < 1e-12);

        let wrong = vec![pred("B", "A", 3.0), pred("C", "B", 2.0)];
        assert!(pr_curve(&wrong, &truth).iter().all(|p| p.precision == 0.0));

        let roc = roc_curve(&preds, &truth);
        assert_eq!(roc.len(), 4);
        assert!((auc_roc(&roc) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_enter_together() {
        let pts = sweep(&[(1.0, true), (1.0, false), (0.5, true)], 2, 4, 10.0);
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].tp, pts[0].fp), (1, 1));
        assert!(pts.iter().all(|p| !p.marker));
    }

    #[test]
    fn random_scores_have_chance_auc() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let items: Vec<(f64, bool)> = (0..10_000)
            .map(|_| (rng.random::<f64>(), rng.random_bool(0.3)))
            .collect();
        let pos = items.iter().filter(|i| i.1).count();
        let pts = sweep(&items, pos, items.len() - pos, 0.5);
        let mut roc = vec![origin()];
        roc.extend(pts);
        let auc = auc_roc(&roc);
        // Mann-Whitney null SD: sqrt((n1 + n0 + 1) / (12 n1 n0)).
        let (n1, n0) = (pos as f64, (items.len() - pos) as f64);
        let sd = ((n1 + n0 + 1.0) / (12.0 * n1 * n0)).sqrt();
        assert!((auc - 0.5).abs() < 3.0 * sd, "auc {auc}, sd {sd}");
    }

    #[test]
    fn bootstrap_of_strong_chain() {
        let g: Dmg = "node C context\nnode X system\nnode Y system\nedge C -> X\nedge X -> Y"
            .parse()
            .unwrap();
        let scm =
            LinearScm::from_weights(&g, &[("C", "X", 0.5), ("X", "Y", 0.5)], &[1.0; 3]).unwrap();
        let d = scm.simulate(2000, &SimulateOptions::default(), 8).unwrap();
        let cfg = MethodConfig::default();
        let single = run_method(&d, Method::Lcd, &cfg).unwrap().predictions;
        assert_eq!(single.len(), 1);
        let boot = bootstrap_scores(Method::Lcd, &d, &cfg, 20, 1).unwrap();
        assert_eq!(boot.len(), 1);
        assert_eq!(boot[0].n_hits, 20);
        // Half the rows roughly halves −ln p of a strong dependence.
        let ratio = boot[0].score / single[0].score;
        assert!((0.4..0.6).contains(&ratio), "{ratio}");

        let one = bootstrap_scores(Method::Lcd, &d, &cfg, 1, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(5, 0));
        let mut rows = rand::seq::index::sample(&mut rng, d.n_rows(), 1000).into_vec();
        rows.sort_unstable();
        let direct = run_method(&d.select_rows(&rows), Method::Lcd, &cfg)
            .unwrap()
            .predictions;
        assert_eq!(one[0].score, direct[0].score);
    }

    #[test]
    fn bootstrap_of_noise_is_quiet() {
        let names = vec!["C".to_string(), "X".into(), "Y".into()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..1000)
                    .map(|_| {
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let roles = vec![NodeRole::Context, NodeRole::System, NodeRole::System];
        let d = Dataset::new(names, roles, cols).unwrap();
        let boot = bootstrap_scores(Method::Lcd, &d, &MethodConfig::default(), 20, 3).unwrap();
        assert!(boot.iter().all(|p| p.score < 1.0), "{boot:?}");
    }

    #[test]
    fn fixed_graph_smoke() {
        let cfg = FixedGraphConfig {
            n_models: 3,
            n: 2000,
            ..Default::default()
        };
        let rows = run_fixed_graph_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows, run_fixed_graph_experiment(&cfg).unwrap());
        for r in &rows {
            assert_eq!(r.n_pred, r.tp + r.fp);
        }
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back: Vec<CountRow> = read_rows(&buf[..]).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn random_graph_smoke() {
        let mut cfg = RandomGraphConfig::new(8);
        cfg.n_graphs = 3;
        cfg.n = 1000;
        cfg.oracle_patterns = true;
        let r = run_random_graph_experiment(&cfg).unwrap();
        assert_eq!(r.summary.len(), 8);
        assert_eq!(r.oracle_summary.len(), 6);
        assert_eq!(r.sampler_retries.len(), 3);
        for w in r.pr.windows(2) {
            if (w[0].method, w[0].dataset) == (w[1].method, w[1].dataset) {
                assert!(w[1].recall >= w[0].recall);
                assert!(w[1].threshold < w[0].threshold);
            }
        }
        let mut buf = Vec::new();
        write_rows(&mut buf, &r.pr).unwrap();
        let head = String::from_utf8(buf.clone()).unwrap();
        assert!(head.starts_with("method,dataset,threshold,precision,recall,tp,fp,marker\n"));
        let back: Vec<CurveRow> = read_rows(&buf[..]).unwrap();
        assert_eq!(back, r.pr);
    }
}
