//! `selbias` command-line driver.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use selbias::citest::{ContextTest, Dataset, DecisionPolicy};
use selbias::enumerate::{verify_extended_ystructure, verify_no_sound_3var_rule};
use selbias::eval::{
    ancestral_ground_truth_with, auc_roc, average_precision, bootstrap_scores, pr_curve, roc_curve,
    run_fixed_graph_experiment, run_method, run_random_graph_experiment, write_rows, Arm, CountRow,
    CurveRow, CurveSummary, FixedGraphConfig, MethodConfig, RandomGraphConfig, RandomGraphResult,
    RocRow,
};
use selbias::graph::Dmg;
use selbias::icp::{IcpOptions, Preselection};
use selbias::patterns::{
    find_lcd, find_y_structures, read_predictions, score_predictions, write_predictions, Method,
    SearchOptions,
};
use selbias::randgraph::GraphSamplerParams;
use selbias::scm::LinearScm;
use selbias::separation::{CiModel, OracleModel};

#[derive(Parser, Debug)]
#[command(
    name = "selbias",
    version,
    about = "Local constraint-based causal discovery under selection bias"
)]
struct Cli {
    /// Worker threads; defaults to the number of cores. Never changes output.
    #[arg(long, global = true, env = "SELBIAS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample an SCM on a graph and write D_S and D_0 as CSV.
    Simulate(SimulateArgs),
    /// Run a method on a CSV dataset and write scored predictions.
    Discover(DiscoverArgs),
    /// Run a pattern search with the separation oracle on a graph file.
    OracleDiscover(OracleDiscoverArgs),
    /// Enumerate all three-variable DMGs and report forced ancestral claims.
    Enumerate3(Enumerate3Args),
    /// Check Extended Y-Structure conclusions on random DMGs.
    VerifyYst(VerifyYstArgs),
    /// Run the fixed-graph or random-graph benchmark.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Score a prediction CSV against the ancestral relations of a graph.
    Eval(EvalArgs),
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Counts of predictions, TP and FP on the fixed benchmark graph.
    FixedGraph(FixedGraphArgs),
    /// PR and ROC curves pooled over random graphs.
    RandomGraphs(RandomGraphArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Lcd,
    Yst,
    YstExt,
    Icp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lcd => Method::Lcd,
            MethodArg::Yst => Method::YSt,
            MethodArg::YstExt => Method::YStExt,
            MethodArg::Icp => Method::Icp,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ContextTestArg {
    PartialCorrelation,
    MeanVariance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PreselectionArg {
    Auto,
    Always,
    Never,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Independence is accepted for p-values above alpha.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Reject independence only below alpha / (number of variables).
    #[arg(long)]
    dual: bool,
    #[arg(long, value_enum, default_value = "partial-correlation")]
    context_test: ContextTestArg,
    #[arg(long, value_enum, default_value = "auto")]
    icp_preselection: PreselectionArg,
    /// Largest ICP parent set tested.
    #[arg(long)]
    icp_max_set: Option<usize>,
}

impl TestArgs {
    fn method_config(
        &self,
        n_vars: usize,
        fixed_v: Option<String>,
    ) -> anyhow::Result<MethodConfig> {
        let policy = if self.dual {
            DecisionPolicy::dual(self.alpha, n_vars)?
        } else {
            DecisionPolicy::single(self.alpha)?
        };
        Ok(MethodConfig {
            policy,
            context_test: match self.context_test {
                ContextTestArg::PartialCorrelation => ContextTest::PartialCorrelation,
                ContextTestArg::MeanVariance => ContextTest::MeanVariance,
            },
            fixed_v,
            icp: IcpOptions {
                preselection: match self.icp_preselection {
                    PreselectionArg::Auto => Preselection::Auto,
                    PreselectionArg::Always => Preselection::Always,
                    PreselectionArg::Never => Preselection::Never,
                },
                max_set_size: self.icp_max_set,
            },
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Graph in the text format.
    graph: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use the SCM in this JSON file instead of sampling weights.
    #[arg(long)]
    scm: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiscoverArgs {
    /// CSV dataset; roles come from the `<name>.json` sidecar.
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Fix the Y-Structure auxiliary V to this variable.
    #[arg(long)]
    fixed_v: Option<String>,
    #[command(flatten)]
    test: TestArgs,
    /// Average scores over this many half-subsamples.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; predictions go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleDiscoverArgs {
    graph: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    fixed_v: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Enumerate3Args {
    /// Number of Selection nodes (0 or 1).
    #[arg(long, default_value_t = 1)]
    selection: usize,
    /// Keep only graphs where C has no other ancestors.
    #[arg(long)]
    jci: bool,
    /// Selection nodes have no children.
    #[arg(long)]
    sink_selection: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyYstArgs {
    #[arg(long, default_value_t = 100_000)]
    graphs: u64,
    #[arg(long, default_value_t = 2)]
    max_selection: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Only acyclic graphs.
    #[arg(long)]
    acyclic: bool,
    /// Probability that a node pair has no edge; uniform edge states when absent.
    #[arg(long)]
    empty_pair_prob: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixedGraphArgs {
    #[arg(long, default_value_t = 200)]
    models: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["icp", "lcd", "yst-ext", "yst"])]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    test: TestArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RandomGraphArgs {
    /// Number of system variables.
    #[arg(long, default_value_t = 16)]
    p: usize,
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    /// One or more sample sizes; several give a sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10_000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["icp", "lcd", "yst-ext", "yst"])]
    methods: Vec<MethodArg>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    min_colliders: Option<usize>,
    #[arg(long)]
    selection_parents: Option<usize>,
    /// Also score hits against the oracle patterns of the true graph.
    #[arg(long)]
    oracle_patterns: bool,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[command(flatten)]
    test: TestArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction CSV.
    predictions: PathBuf,
    /// True graph in the text format.
    #[arg(long)]
    graph: PathBuf,
    /// Count context-sourced pairs as candidates.
    #[arg(long)]
    include_context: bool,
    /// Arm label written to the curve files.
    #[arg(long, value_parser = parse_arm, default_value = "D_S")]
    dataset: Arm,
    #[arg(long)]
    out: PathBuf,
}

fn parse_arm(s: &str) -> Result<Arm, String> {
    match s {
        "D_S" => Ok(Arm::Selected),
        "D_0" => Ok(Arm::Unselected),
        _ => Err(format!("unknown dataset `{s}` (expected D_S or D_0)")),
    }
}

/// Error classes and their exit codes.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    use selbias::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) => ("io", 3),
                E::Parse { .. } | E::Csv(_) | E::Json(_) | E::Format(_) => ("format", 4),
                E::UnknownNode(_)
                | E::DuplicateNode(_)
                | E::SelfLoop(_)
                | E::TooManyNodes { .. }
                | E::Overlap
                | E::SelectionQueried(_)
                | E::UnknownVariable(_)
                | E::Cyclic
                | E::Bidirected(..)
                | E::NotDiscrete(_)
                | E::MissingPValue { .. }
                | E::InvalidArgument(_) => ("invalid-input", 5),
                E::InsufficientRows { .. }
                | E::ConstantColumn(_)
                | E::SingularRegression
                | E::SmallContextLevel { .. }
                | E::AttemptCapExceeded { .. }
                | E::RetriesExhausted(_) => ("computation", 6),
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return ("io", 3);
        }
    }
    ("internal", 1)
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    let pipe = Some(io::ErrorKind::BrokenPipe);
    err.chain().any(|c| {
        if let Some(e) = c.downcast_ref::<io::Error>() {
            return Some(e.kind()) == pipe;
        }
        if let Some(e) = c.downcast_ref::<serde_json::Error>() {
            return e.io_error_kind() == pipe;
        }
        match c.downcast_ref::<selbias::Error>() {
            Some(selbias::Error::Io(e)) => Some(e.kind()) == pipe,
            Some(selbias::Error::Json(e)) => e.io_error_kind() == pipe,
            _ => false,
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = json!({"error": "usage", "code": 2, "message": e.to_string().trim_end()});
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            let msg = json!({"error": kind, "code": code, "message": format!("{e:#}")});
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Discover(a) => discover(a),
        Command::OracleDiscover(a) => oracle_discover(a),
        Command::Enumerate3(a) => enumerate3(a),
        Command::VerifyYst(a) => verify_yst(a),
        Command::Experiment(Experiment::FixedGraph(a)) => fixed_graph(a),
        Command::Experiment(Experiment::RandomGraphs(a)) => random_graphs(a),
        Command::Eval(a) => eval(a),
    }
}

/// `manifest.json`: the subcommand, its configuration and the version.
fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: &T,
) -> anyhow::Result<()> {
    let m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
    });
    write_json(&dir.join("manifest.json"), &m)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    write_rows(io::BufWriter::new(f), rows)?;
    Ok(())
}

fn read_graph(path: &Path) -> anyhow::Result<Dmg> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.parse::<Dmg>()?)
}

/// Writes JSON to `out/<name>` with a manifest, or to stdout.
fn emit_json<T: Serialize, C: Serialize>(
    out: Option<&Path>,
    name: &str,
    command: &str,
    seed: Option<u64>,
    config: &C,
    value: &T,
) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join(name), value)?;
            write_manifest(dir, command, seed, config)
        }
        None => {
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let scm = match &a.scm {
        Some(p) => LinearScm::from_json(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => LinearScm::sample_weights(&read_graph(&a.graph)?, a.seed)?,
    };
    let (ds, d0) = scm.simulate_paired(a.n, a.seed)?;
    create_dir(&a.out)?;
    fs::write(a.out.join("scm.json"), scm.to_json()? + "\n")?;
    ds.save(&a.out.join("d_s.csv"))?;
    d0.save(&a.out.join("d_0.csv"))?;
    write_manifest(
        &a.out,
        "simulate",
        Some(a.seed),
        &json!({"graph": a.graph, "n": a.n, "scm": a.scm}),
    )
}

fn discover(a: DiscoverArgs) -> anyhow::Result<()> {
    let d =
        Dataset::load(&a.data, None).with_context(|| format!("loading {}", a.data.display()))?;
    let method: Method = a.method.into();
    let cfg = a.test.method_config(d.n_cols(), a.fixed_v.clone())?;
    let (preds, hits) = match a.bootstrap {
        Some(b) => (bootstrap_scores(method, &d, &cfg, b, a.seed)?, Vec::new()),
        None => {
            let o = run_method(&d, method, &cfg)?;
            (o.predictions, o.hits)
        }
    };
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            let f = fs::File::create(dir.join("predictions.csv"))?;
            write_predictions(io::BufWriter::new(f), &preds)?;
            write_json(&dir.join("hits.json"), &hits)?;
            write_manifest(
                dir,
                "discover",
                Some(a.seed),
                &json!({"data": a.data, "method": method, "bootstrap": a.bootstrap, "method_config": cfg}),
            )
        }
        None => Ok(write_predictions(io::stdout().lock(), &preds)?),
    }
}

fn oracle_discover(a: OracleDiscoverArgs) -> anyhow::Result<()> {
    let g = read_graph(&a.graph)?;
    let m = OracleModel::new(g);
    let opts = SearchOptions::default();
    let method: Method = a.method.into();
    let fixed = a.fixed_v.as_deref().map(|n| m.index_of(n)).transpose()?;
    let hits = match method {
        Method::Lcd => {
            let c = m
                .variables()
                .iter()
                .position(|v| v.role == selbias::graph::NodeRole::Context)
                .ok_or_else(|| {
                    selbias::Error::InvalidArgument("graph has no context node".into())
                })?;
            find_lcd(&m, c, &opts)?
        }
        Method::YSt | Method::YStExt => {
            find_y_structures(&m, method == Method::YStExt, fixed, &opts)?
        }
        Method::Icp => {
            return Err(selbias::Error::InvalidArgument("ICP has no oracle version".into()).into())
        }
    };
    let preds = score_predictions(&hits)?;
    let report = json!({"hits": hits, "claims": preds.iter().map(|p| [&p.source, &p.target]).collect::<Vec<_>>()});
    emit_json(
        a.out.as_deref(),
        "hits.json",
        "oracle-discover",
        None,
        &json!({"graph": a.graph, "method": method, "fixed_v": a.fixed_v}),
        &report,
    )
}

fn enumerate3(a: Enumerate3Args) -> anyhow::Result<()> {
    let r = verify_no_sound_3var_rule(a.selection, a.sink_selection, a.jci)?;
    let value = json!({
        "no_sound_rule": r.no_sound_rule(),
        "report": r,
    });
    emit_json(
        a.out.as_deref(),
        "enumerate3.json",
        "enumerate3",
        None,
        &json!({"selection": a.selection, "jci": a.jci, "sink_selection": a.sink_selection}),
        &value,
    )
}

fn verify_yst(a: VerifyYstArgs) -> anyhow::Result<()> {
    let r = verify_extended_ystructure(
        a.graphs,
        a.max_selection,
        a.seed,
        !a.acyclic,
        a.empty_pair_prob,
    )?;
    emit_json(
        a.out.as_deref(),
        "verify_yst.json",
        "verify-yst",
        Some(a.seed),
        &json!({"graphs": a.graphs, "max_selection": a.max_selection, "acyclic": a.acyclic, "empty_pair_prob": a.empty_pair_prob}),
        &r,
    )
}

fn print_counts(rows: &[CountRow]) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{:<8} {:^20}   {:^20}", "", "D_0", "D_S")?;
    writeln!(
        out,
        "{:<8} {:>6} {:>6} {:>6}   {:>6} {:>6} {:>6}",
        "method", "#Pred", "TP", "FP", "#Pred", "TP", "FP"
    )?;
    let methods: Vec<Method> = rows.iter().map(|r| r.method).fold(Vec::new(), |mut v, m| {
        if !v.contains(&m) {
            v.push(m);
        }
        v
    });
    for m in methods {
        let get = |arm| rows.iter().find(|r| r.method == m && r.dataset == arm);
        let cell = |r: Option<&CountRow>| {
            r.map_or("-".to_string(), |r| {
                format!("{:>6} {:>6} {:>6}", r.n_pred, r.tp, r.fp)
            })
        };
        writeln!(
            out,
            "{:<8} {}   {}",
            m.as_str(),
            cell(get(Arm::Unselected)),
            cell(get(Arm::Selected))
        )?;
    }
    Ok(())
}

fn fixed_graph(a: FixedGraphArgs) -> anyhow::Result<()> {
    let cfg = FixedGraphConfig {
        n_models: a.models,
        n: a.n,
        seed: a.seed,
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        method: a.test.method_config(7, None)?,
    };
    let rows = run_fixed_graph_experiment(&cfg)?;
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            write_csv_file(&dir.join("fixed_graph.csv"), &rows)?;
            write_manifest(dir, "experiment fixed-graph", Some(a.seed), &cfg)?;
            print_counts(&rows)
        }
        None => Ok(write_rows(io::stdout().lock(), &rows)?),
    }
}

fn write_random_result(dir: &Path, suffix: &str, r: &RandomGraphResult) -> anyhow::Result<()> {
    write_csv_file(&dir.join(format!("pr{suffix}.csv")), &r.pr)?;
    write_csv_file(&dir.join(format!("roc{suffix}.csv")), &r.roc)?;
    write_csv_file(&dir.join(format!("summary{suffix}.csv")), &r.summary)?;
    if !r.oracle_pr.is_empty() {
        write_csv_file(&dir.join(format!("oracle_pr{suffix}.csv")), &r.oracle_pr)?;
        write_csv_file(
            &dir.join(format!("oracle_summary{suffix}.csv")),
            &r.oracle_summary,
        )?;
    }
    Ok(())
}

fn random_graphs(a: RandomGraphArgs) -> anyhow::Result<()> {
    let mut sampler = GraphSamplerParams::for_size(a.p);
    if let Some(q) = a.edge_prob {
        sampler.edge_prob = q;
    }
    if let Some(k) = a.min_colliders {
        sampler.min_colliders = k;
    }
    if let Some(k) = a.selection_parents {
        sampler.n_selection_parents = k;
    }
    if a.n.is_empty() {
        return Err(selbias::Error::InvalidArgument("no sample size given".into()).into());
    }
    let base = RandomGraphConfig {
        sampler,
        n_graphs: a.graphs,
        n: a.n[0],
        seed: a.seed,
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        // One context plus p system variables.
        method: a.test.method_config(a.p + 1, None)?,
        bootstrap: a.bootstrap,
        oracle_patterns: a.oracle_patterns,
    };
    create_dir(&a.out)?;
    let sweep = a.n.len() > 1;
    for &n in &a.n {
        let cfg = RandomGraphConfig { n, ..base.clone() };
        let r = run_random_graph_experiment(&cfg)?;
        let suffix = if sweep {
            format!("_n{n}")
        } else {
            String::new()
        };
        write_random_result(&a.out, &suffix, &r)?;
    }
    write_manifest(
        &a.out,
        "experiment random-graphs",
        Some(a.seed),
        &json!({"config": base, "sample_sizes": a.n}),
    )
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let g = read_graph(&a.graph)?;
    let f = fs::File::open(&a.predictions)
        .with_context(|| format!("reading {}", a.predictions.display()))?;
    let preds =
        read_predictions(f).with_context(|| format!("reading {}", a.predictions.display()))?;
    let truth = ancestral_ground_truth_with(&g, a.include_context);
    let mut by_method: Vec<(Method, Vec<_>)> = Vec::new();
    for p in preds {
        match by_method.iter_mut().find(|(m, _)| *m == p.kind) {
            Some((_, v)) => v.push(p),
            None => by_method.push((p.kind, vec![p])),
        }
    }
    let (mut pr, mut roc, mut summary) = (Vec::new(), Vec::new(), Vec::new());
    for (method, preds) in &by_method {
        let pts = pr_curve(preds, &truth);
        let roc_pts = roc_curve(preds, &truth);
        let at_marker = pts.iter().find(|p| p.marker);
        summary.push(CurveSummary {
            method: *method,
            dataset: a.dataset,
            n_pred: preds.len(),
            positives: truth.n_positives(),
            average_precision: average_precision(&pts),
            auc_roc: auc_roc(&roc_pts),
            tp_at_marker: at_marker.map_or(0, |p| p.tp),
            fp_at_marker: at_marker.map_or(0, |p| p.fp),
        });
        pr.extend(pts.iter().map(|p| CurveRow {
            method: *method,
            dataset: a.dataset,
            threshold: p.threshold,
            precision: p.precision,
            recall: p.recall,
            tp: p.tp,
            fp: p.fp,
            marker: p.marker,
        }));
        roc.extend(roc_pts.iter().map(|p| RocRow {
            method: *method,
            dataset: a.dataset,
            threshold: p.threshold,
            fpr: p.fpr,
            tpr: p.recall,
            tp: p.tp,
            fp: p.fp,
            marker: p.marker,
        }));
    }
    create_dir(&a.out)?;
    write_csv_file(&a.out.join("pr.csv"), &pr)?;
    write_csv_file(&a.out.join("roc.csv"), &roc)?;
    write_csv_file(&a.out.join("summary.csv"), &summary)?;
    write_manifest(
        &a.out,
        "eval",
        None,
        &json!({"predictions": a.predictions, "graph": a.graph, "include_context": a.include_context, "dataset": a.dataset}),
    )
}
