//! Finite-sample conditional independence tests and the accept/reject policy.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::graph::NodeRole;
use crate::separation::{CiModel, CiVerdict, Variable, Verdict};

/// Largest absolute correlation fed into the Fisher transform.
pub const MAX_ABS_CORRELATION: f64 = 1.0 - 1e-12;

/// A column-major table of observed variables.
///
/// Columns are System or Context; Selection is never observed. At most one
/// column is a Context column.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    roles: Vec<NodeRole>,
    discrete: Vec<bool>,
    columns: Vec<Vec<f64>>,
}

/// Sidecar metadata for a dataset CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub context: Vec<String>,
    #[serde(default)]
    pub discrete: Vec<String>,
}

impl Dataset {
    pub fn new(names: Vec<String>, roles: Vec<NodeRole>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != roles.len() || names.len() != columns.len() {
            return Err(Error::Format(
                "names, roles and columns differ in length".into(),
            ));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Format("columns differ in length".into()));
            }
        }
        if roles.contains(&NodeRole::Selection) {
            return Err(Error::Format("selection columns cannot be observed".into()));
        }
        if roles.iter().filter(|r| **r == NodeRole::Context).count() > 1 {
            return Err(Error::Format(
                "at most one context column is supported".into(),
            ));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "column `{name}` has missing or non-finite values"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::DuplicateNode(n.clone()));
            }
        }
        let discrete = vec![false; names.len()];
        Ok(Dataset {
            names,
            roles,
            discrete,
            columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn role(&self, i: usize) -> NodeRole {
        self.roles[i]
    }

    pub fn is_discrete(&self, i: usize) -> bool {
        self.discrete[i]
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn context_column(&self) -> Option<usize> {
        self.roles.iter().position(|r| *r == NodeRole::Context)
    }

    pub fn system_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&i| self.roles[i] == NodeRole::System)
            .collect()
    }

    pub fn variables(&self) -> Vec<Variable> {
        self.names
            .iter()
            .zip(&self.roles)
            .map(|(name, role)| Variable {
                name: name.clone(),
                role: *role,
            })
            .collect()
    }

    pub fn set_discrete(&mut self, i: usize, discrete: bool) {
        self.discrete[i] = discrete;
    }

    pub fn set_role(&mut self, i: usize, role: NodeRole) -> Result<()> {
        if role == NodeRole::Selection {
            return Err(Error::Format("selection columns cannot be observed".into()));
        }
        if role == NodeRole::Context && self.context_column().is_some_and(|c| c != i) {
            return Err(Error::Format(
                "at most one context column is supported".into(),
            ));
        }
        self.roles[i] = role;
        Ok(())
    }

    /// Replaces column `i` by the indicator `value > mean` and marks it discrete.
    pub fn binarize_at_mean(&mut self, i: usize) {
        let col = &mut self.columns[i];
        let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
        for v in col.iter_mut() {
            *v = if *v > mean { 1.0 } else { 0.0 };
        }
        self.discrete[i] = true;
    }

    /// A dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Dataset {
            names: self.names.clone(),
            roles: self.roles.clone(),
            discrete: self.discrete.clone(),
            columns,
        }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            context: self
                .context_column()
                .map(|c| vec![self.names[c].clone()])
                .unwrap_or_default(),
            discrete: (0..self.n_cols())
                .filter(|&i| self.discrete[i])
                .map(|i| self.names[i].clone())
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names)?;
        let mut row = Vec::with_capacity(self.n_cols());
        for r in 0..self.n_rows() {
            row.clear();
            row.extend(self.columns.iter().map(|c| format!("{}", c[r])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: &DatasetMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let names: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    names.len()
                )));
            }
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!(
                        "row {}: cannot parse `{field}` as a number",
                        line + 2
                    ))
                })?;
                col.push(v);
            }
        }
        let mut roles = vec![NodeRole::System; names.len()];
        for c in &meta.context {
            let i = names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::UnknownNode(c.clone()))?;
            roles[i] = NodeRole::Context;
        }
        let mut d = Dataset::new(names, roles, columns)?;
        for c in &meta.discrete {
            let i = d.index_of(c)?;
            d.discrete[i] = true;
        }
        Ok(d)
    }

    /// Reads `path`, plus the sidecar `<path>.json` (or `sidecar`) when present.
    pub fn load(path: &Path, sidecar: Option<&Path>) -> Result<Self> {
        let default_sidecar = path.with_extension("json");
        let meta_path = sidecar.unwrap_or(&default_sidecar);
        let meta = if meta_path.exists() {
            serde_json::from_reader(std::fs::File::open(meta_path)?)?
        } else if sidecar.is_some() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("sidecar {} not found", meta_path.display()),
            )));
        } else {
            DatasetMeta::default()
        };
        Self::read_csv(std::fs::File::open(path)?, &meta)
    }

    /// Writes `path` and its sidecar `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        let meta = std::fs::File::create(path.with_extension("json"))?;
        serde_json::to_writer_pretty(meta, &self.meta())?;
        Ok(())
    }
}

/// Pearson correlation matrix of all columns.
pub fn correlation_matrix(d: &Dataset) -> Result<DMatrix<f64>> {
    let n = d.n_rows();
    if n < 2 {
        return Err(Error::InsufficientRows { have: n, need: 1 });
    }
    let k = d.n_cols();
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    for i in 0..k {
        let col = d.column(i);
        let mean = col.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let ss: f64 = c.iter().map(|v| v * v).sum();
        if ss <= 0.0 {
            return Err(Error::ConstantColumn(d.name(i).to_string()));
        }
        norms.push(ss.sqrt());
        centered.push(c);
    }
    let mut corr = DMatrix::identity(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    Ok(corr)
}

/// Partial correlation of `x` and `y` given `z`, from a correlation matrix.
///
/// Returns 0 when a conditioning variable determines `x` or `y` exactly.
pub fn partial_correlation(corr: &DMatrix<f64>, x: usize, y: usize, z: &[usize]) -> f64 {
    let r = match z {
        [] => corr[(x, y)],
        [w] => {
            let (rxy, rxz, ryz) = (corr[(x, y)], corr[(x, *w)], corr[(y, *w)]);
            (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt()
        }
        _ => {
            let idx: Vec<usize> = [x, y].iter().chain(z).copied().collect();
            let sub = corr.select_rows(&idx).select_columns(&idx);
            let prec = sub
                .clone()
                .try_inverse()
                .or_else(|| sub.pseudo_inverse(1e-12).ok());
            match prec {
                Some(p) => -p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt(),
                None => f64::NAN,
            }
        }
    };
    if r.is_finite() {
        r.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Two-sided Fisher-z p-value for a (partial) correlation `r` estimated from
/// `n` rows with `k` conditioning variables.
pub fn fisher_z_pvalue(r: f64, n: usize, k: usize) -> f64 {
    let r = r.clamp(-MAX_ABS_CORRELATION, MAX_ABS_CORRELATION);
    let z = r.abs().atanh();
    let stat = z * ((n - k - 3) as f64).sqrt();
    erfc(stat / std::f64::consts::SQRT_2).min(1.0)
}

/// Fisher-z partial correlation test of `x ⊥ y | z` on dataset columns.
pub fn partial_correlation_test(d: &Dataset, x: usize, y: usize, z: &[usize]) -> Result<f64> {
    let n = d.n_rows();
    if n <= z.len() + 3 {
        return Err(Error::InsufficientRows {
            have: n,
            need: z.len() + 3,
        });
    }
    if z.contains(&x) || z.contains(&y) || x == y && !z.is_empty() {
        return Err(Error::Overlap);
    }
    let idx: Vec<usize> = [x, y].iter().chain(z).copied().collect();
    for &i in &idx {
        if i >= d.n_cols() {
            return Err(Error::UnknownVariable(i));
        }
    }
    let sub = d.select_columns(&idx);
    let corr = correlation_matrix(&sub)?;
    let zs: Vec<usize> = (2..idx.len()).collect();
    let r = partial_correlation(&corr, 0, 1, &zs);
    Ok(fisher_z_pvalue(r, n, z.len()))
}

impl Dataset {
    fn select_columns(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: idx
                .iter()
                .enumerate()
                .map(|(k, &i)| format!("{}#{k}", self.names[i]))
                .collect(),
            roles: idx.iter().map(|_| NodeRole::System).collect(),
            discrete: idx.iter().map(|&i| self.discrete[i]).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }
}

/// Per-level second moments of a set of columns, for residual mean/variance
/// invariance tests under many candidate regressions.
///
/// Index 0 of every moment matrix is the intercept; column `j` of the input
/// sits at index `j + 1`. Columns are centered by their global mean.
#[derive(Clone, Debug)]
pub(crate) struct LevelMoments {
    levels: Vec<f64>,
    counts: Vec<usize>,
    moments: Vec<DMatrix<f64>>,
    total: DMatrix<f64>,
    n: usize,
}

impl LevelMoments {
    pub(crate) fn new(columns: &[&[f64]], context: &[f64]) -> Result<Self> {
        let n = context.len();
        let k = columns.len();
        let mut by_level: BTreeMap<u64, usize> = BTreeMap::new();
        let mut levels = Vec::new();
        let mut keys = Vec::with_capacity(n);
        // Context levels keyed by bit pattern after normalizing -0.0.
        for &c in context {
            let key = (c + 0.0).to_bits();
            let next = levels.len();
            let idx = *by_level.entry(key).or_insert_with(|| {
                levels.push(c);
                next
            });
            keys.push(idx);
        }
        let means: Vec<f64> = columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / n.max(1) as f64)
            .collect();
        let mut moments = vec![DMatrix::zeros(k + 1, k + 1); levels.len()];
        let mut counts = vec![0usize; levels.len()];
        let mut z = vec![0.0; k + 1];
        z[0] = 1.0;
        for r in 0..n {
            for j in 0..k {
                z[j + 1] = columns[j][r] - means[j];
            }
            let m = &mut moments[keys[r]];
            counts[keys[r]] += 1;
            for a in 0..=k {
                for b in a..=k {
                    m[(a, b)] += z[a] * z[b];
                }
            }
        }
        for m in &mut moments {
            m.fill_lower_triangle_with_upper_triangle();
        }
        let total = moments
            .iter()
            .fold(DMatrix::zeros(k + 1, k + 1), |acc, m| acc + m);
        // Sort levels ascending for deterministic reporting.
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
        let levels = order.iter().map(|&i| levels[i]).collect();
        let moments = order.iter().map(|&i| moments[i].clone()).collect();
        let counts = order.iter().map(|&i| counts[i]).collect();
        Ok(LevelMoments {
            levels,
            counts,
            moments,
            total,
            n,
        })
    }

    /// p-value of the mean-variance invariance test for regressing column
    /// `target` on columns `cond` (indices into the constructor's columns).
    pub(crate) fn invariance_pvalue(&self, target: usize, cond: &[usize]) -> Result<f64> {
        if self.levels.len() < 2 {
            return Ok(1.0);
        }
        for (l, &c) in self.levels.iter().zip(&self.counts) {
            if c < 3 {
                return Err(Error::SmallContextLevel { level: *l, rows: c });
            }
        }
        let design: Vec<usize> = std::iter::once(0)
            .chain(cond.iter().map(|c| c + 1))
            .collect();
        let t = target + 1;
        if self.n <= design.len() {
            return Err(Error::InsufficientRows {
                have: self.n,
                need: design.len(),
            });
        }
        let a_dd = self.total.select_rows(&design).select_columns(&design);
        let a_dt = DVector::from_iterator(design.len(), design.iter().map(|&i| self.total[(i, t)]));
        let beta = a_dd
            .cholesky()
            .ok_or(Error::SingularRegression)?
            .solve(&a_dt);

        let residual_stats = |m: &DMatrix<f64>, count: usize| -> (f64, f64, f64) {
            let m_d0 = DVector::from_iterator(design.len(), design.iter().map(|&i| m[(i, 0)]));
            let m_dt = DVector::from_iterator(design.len(), design.iter().map(|&i| m[(i, t)]));
            let m_dd = m.select_rows(&design).select_columns(&design);
            let sum = m[(t, 0)] - beta.dot(&m_d0);
            let ss = m[(t, t)] - 2.0 * beta.dot(&m_dt) + (beta.transpose() * &m_dd * &beta)[(0, 0)];
            let nf = count as f64;
            let mean = sum / nf;
            let var = ((ss - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (nf, mean, var)
        };

        let l = self.levels.len() as f64;
        let mut min_mean_p: f64 = 1.0;
        let mut min_var_p: f64 = 1.0;
        for (m, &count) in self.moments.iter().zip(&self.counts) {
            let rest = &self.total - m;
            let (n1, m1, v1) = residual_stats(m, count);
            let (n2, m2, v2) = residual_stats(&rest, self.n - count);
            min_mean_p = min_mean_p.min(welch_t_pvalue(n1, m1, v1, n2, m2, v2));
            min_var_p = min_var_p.min(f_test_pvalue(n1, v1, n2, v2));
        }
        let p_mean = (min_mean_p * l).min(1.0);
        let p_var = (min_var_p * l).min(1.0);
        Ok((2.0 * p_mean.min(p_var)).min(1.0))
    }
}

/// Two-sided Welch two-sample t-test from summary statistics.
pub fn welch_t_pvalue(n1: f64, m1: f64, v1: f64, n2: f64, m2: f64, v2: f64) -> f64 {
    let a = v1 / n1;
    let b = v2 / n2;
    let se2 = a + b;
    if se2 <= 0.0 {
        return if m1 == m2 { 1.0 } else { 0.0 };
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).min(1.0),
        Err(_) => 1.0,
    }
}

/// Two-sided F-test for equality of two variances.
pub fn f_test_pvalue(n1: f64, v1: f64, n2: f64, v2: f64) -> f64 {
    if v1 <= 0.0 && v2 <= 0.0 {
        return 1.0;
    }
    if v1 <= 0.0 || v2 <= 0.0 {
        return 0.0;
    }
    let f = v1 / v2;
    match FisherSnedecor::new(n1 - 1.0, n2 - 1.0) {
        Ok(dist) => (2.0 * dist.cdf(f).min(dist.sf(f))).min(1.0),
        Err(_) => 1.0,
    }
}

/// Mean-variance invariance test of `target` across the levels of a discrete
/// `context` column, after regressing `target` on `cond` with an intercept.
///
/// Per level, residual means are compared with a Welch t-test and residual
/// variances with a two-sided F-test (level vs. all other rows). Each family
/// is Bonferroni-corrected over levels, then the two families are combined
/// with a second Bonferroni factor of 2. A single level yields `p = 1`.
pub fn context_invariance_test(
    d: &Dataset,
    target: usize,
    cond: &[usize],
    context: usize,
) -> Result<f64> {
    if !d.is_discrete(context) {
        return Err(Error::NotDiscrete(d.name(context).to_string()));
    }
    if cond.contains(&target) || cond.contains(&context) || target == context {
        return Err(Error::Overlap);
    }
    let mut cols: Vec<&[f64]> = vec![d.column(target)];
    cols.extend(cond.iter().map(|&c| d.column(c)));
    let moments = LevelMoments::new(&cols, d.column(context))?;
    let cond_idx: Vec<usize> = (1..=cond.len()).collect();
    moments.invariance_pvalue(0, &cond_idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionMode {
    SingleThreshold,
    DualThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub alpha: f64,
    pub mode: DecisionMode,
    /// Dependence needs `p < alpha / dual_divisor` in dual mode.
    pub dual_divisor: usize,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        DecisionPolicy {
            alpha: 0.01,
            mode: DecisionMode::SingleThreshold,
            dual_divisor: 1,
        }
    }
}

impl DecisionPolicy {
    pub fn single(alpha: f64) -> Result<Self> {
        Self::check_alpha(alpha)?;
        Ok(DecisionPolicy {
            alpha,
            mode: DecisionMode::SingleThreshold,
            dual_divisor: 1,
        })
    }

    /// Dual thresholds; `n_variables` is the divisor for the dependence threshold.
    pub fn dual(alpha: f64, n_variables: usize) -> Result<Self> {
        Self::check_alpha(alpha)?;
        if n_variables == 0 {
            return Err(Error::InvalidArgument(
                "dual divisor must be positive".into(),
            ));
        }
        Ok(DecisionPolicy {
            alpha,
            mode: DecisionMode::DualThreshold,
            dual_divisor: n_variables,
        })
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )))
        }
    }
}

/// Maps a p-value to a verdict. With `null_is_independence = false` the
/// roles of the two outcomes are swapped.
pub fn decide(p: f64, policy: &DecisionPolicy, null_is_independence: bool) -> Verdict {
    let (accept, reject) = if null_is_independence {
        (Verdict::Independent, Verdict::Dependent)
    } else {
        (Verdict::Dependent, Verdict::Independent)
    };
    match policy.mode {
        DecisionMode::SingleThreshold => {
            if p < policy.alpha {
                reject
            } else {
                accept
            }
        }
        DecisionMode::DualThreshold => {
            if p >= policy.alpha {
                accept
            } else if p < policy.alpha / policy.dual_divisor as f64 {
                reject
            } else {
                Verdict::Inconclusive
            }
        }
    }
}

/// Which test handles queries between the context and a system variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextTest {
    /// Fisher-z on the context column like any other column.
    #[default]
    PartialCorrelation,
    /// Mean-variance invariance test; requires a discrete context column.
    MeanVariance,
}

/// Statistical [`CiModel`] over a dataset.
#[derive(Clone, Debug)]
pub struct DataCiModel<'a> {
    data: &'a Dataset,
    vars: Vec<Variable>,
    corr: DMatrix<f64>,
    policy: DecisionPolicy,
    context_test: ContextTest,
}

impl<'a> DataCiModel<'a> {
    pub fn new(data: &'a Dataset, policy: DecisionPolicy) -> Result<Self> {
        let corr = correlation_matrix(data)?;
        Ok(DataCiModel {
            data,
            vars: data.variables(),
            corr,
            policy,
            context_test: ContextTest::default(),
        })
    }

    pub fn with_context_test(mut self, test: ContextTest) -> Result<Self> {
        if test == ContextTest::MeanVariance {
            match self.data.context_column() {
                Some(c) if self.data.is_discrete(c) => {}
                Some(c) => return Err(Error::NotDiscrete(self.data.name(c).to_string())),
                None => {
                    return Err(Error::InvalidArgument(
                        "dataset has no context column".into(),
                    ))
                }
            }
        }
        self.context_test = test;
        Ok(self)
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn policy(&self) -> &DecisionPolicy {
        &self.policy
    }

    /// The raw p-value of `x ⊥ y | z`.
    pub fn p_value(&self, x: usize, y: usize, z: &[usize]) -> Result<f64> {
        let k = self.vars.len();
        for &i in [x, y].iter().chain(z) {
            if i >= k {
                return Err(Error::UnknownVariable(i));
            }
        }
        if x == y || z.contains(&x) || z.contains(&y) {
            return Err(Error::Overlap);
        }
        let n = self.data.n_rows();
        if n <= z.len() + 3 {
            return Err(Error::InsufficientRows {
                have: n,
                need: z.len() + 3,
            });
        }
        if self.context_test == ContextTest::MeanVariance {
            let ctx = self.data.context_column();
            if ctx == Some(x) {
                return context_invariance_test(self.data, y, z, x);
            }
            if ctx == Some(y) {
                return context_invariance_test(self.data, x, z, y);
            }
        }
        let r = partial_correlation(&self.corr, x, y, z);
        Ok(fisher_z_pvalue(r, n, z.len()))
    }
}

impl CiModel for DataCiModel<'_> {
    fn variables(&self) -> &[Variable] {
        &self.vars
    }

    fn query(&self, x: usize, y: usize, z: &[usize]) -> Result<CiVerdict> {
        let p = self.p_value(x, y, z)?;
        Ok(CiVerdict {
            verdict: decide(p, &self.policy, true),
            p_value: Some(p),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn dataset(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
        let names = cols.iter().map(|(n, _)| n.to_string()).collect();
        let roles = cols.iter().map(|_| NodeRole::System).collect();
        Dataset::new(names, roles, cols.into_iter().map(|(_, c)| c).collect()).unwrap()
    }

    #[test]
    fn orthogonal_columns_give_p_one() {
        let d = dataset(vec![
            ("A", vec![1.0, -1.0, 1.0, -1.0, 0.0, 0.0]),
            ("B", vec![1.0, 1.0, -1.0, -1.0, 0.0, 0.0]),
        ]);
        let p = partial_correlation_test(&d, 0, 1, &[]).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn perfect_correlation_is_clamped() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let d = dataset(vec![("X", x.clone()), ("Y", x)]);
        let p = partial_correlation_test(&d, 0, 1, &[]).unwrap();
        assert!(p < 1e-15);
    }

    #[test]
    fn fisher_z_fixture() {
        // z = atanh(0.5) = 0.5493061443, statistic = 10 z; p = erfc(5.493061443 / sqrt 2)
        // evaluated with mpmath at 50 digits.
        let p = fisher_z_pvalue(0.5, 103, 0);
        let oracle = 3.950_252_784_999_222e-8;
        assert!(((p - oracle) / oracle).abs() < 1e-9, "p = {p:e}");
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let d = dataset(vec![
            ("A", vec![1.0; 10]),
            ("B", (0..10).map(f64::from).collect()),
        ]);
        assert!(matches!(
            partial_correlation_test(&d, 0, 1, &[]),
            Err(Error::ConstantColumn(_))
        ));
        let small = dataset(vec![("A", vec![1.0, 2.0, 3.0]), ("B", vec![1.0, 3.0, 2.0])]);
        assert!(matches!(
            partial_correlation_test(&small, 0, 1, &[]),
            Err(Error::InsufficientRows { .. })
        ));
    }

    #[test]
    fn decision_policy_examples() {
        let single = DecisionPolicy::single(0.01).unwrap();
        assert_eq!(decide(0.5, &single, true), Verdict::Independent);
        assert_eq!(decide(0.001, &single, true), Verdict::Dependent);
        let dual = DecisionPolicy::dual(0.01, 8).unwrap();
        assert_eq!(decide(0.005, &dual, true), Verdict::Inconclusive);
        assert_eq!(decide(1e-5, &dual, true), Verdict::Dependent);
        assert_eq!(decide(0.01, &dual, true), Verdict::Independent);
        assert_eq!(decide(0.00125, &dual, true), Verdict::Inconclusive);
        assert!(DecisionPolicy::single(0.0).is_err());
        assert!(DecisionPolicy::single(1.0).is_err());
        assert!(DecisionPolicy::dual(0.01, 0).is_err());
    }

    fn context_dataset(levels: &[(f64, usize)], shift: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (k, &(level, n)) in levels.iter().enumerate() {
            for _ in 0..n {
                let xv: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                c.push(level);
                x.push(xv);
                y.push(0.8 * xv + e + if k == 0 { shift } else { 0.0 });
            }
        }
        let mut d = Dataset::new(
            vec!["C".into(), "X".into(), "Y".into()],
            vec![NodeRole::Context, NodeRole::System, NodeRole::System],
            vec![c, x, y],
        )
        .unwrap();
        d.set_discrete(0, true);
        d
    }

    #[test]
    fn single_context_level_gives_p_one() {
        let d = context_dataset(&[(1.0, 40)], 0.0, 1);
        assert_eq!(context_invariance_test(&d, 2, &[1], 0).unwrap(), 1.0);
    }

    #[test]
    fn shifted_level_is_detected() {
        let d = context_dataset(&[(0.0, 500), (1.0, 500)], 2.0, 2);
        let p = context_invariance_test(&d, 2, &[1], 0).unwrap();
        assert!(p < 1e-6, "p = {p:e}");
    }

    #[test]
    fn small_level_and_non_discrete_context_are_errors() {
        let d = context_dataset(&[(0.0, 50), (1.0, 2)], 0.0, 3);
        assert!(matches!(
            context_invariance_test(&d, 2, &[1], 0),
            Err(Error::SmallContextLevel { rows: 2, .. })
        ));
        let mut d = context_dataset(&[(0.0, 50), (1.0, 50)], 0.0, 3);
        d.set_discrete(0, false);
        assert!(matches!(
            context_invariance_test(&d, 2, &[1], 0),
            Err(Error::NotDiscrete(_))
        ));
    }

    #[test]
    fn collinear_regression_is_singular() {
        let mut d = context_dataset(&[(0.0, 50), (1.0, 50)], 0.0, 4);
        let dup = d.column(1).to_vec();
        d.columns.push(dup);
        d.names.push("X2".into());
        d.roles.push(NodeRole::System);
        d.discrete.push(false);
        assert!(matches!(
            context_invariance_test(&d, 2, &[1, 3], 0),
            Err(Error::SingularRegression)
        ));
    }

    #[test]
    fn csv_round_trip_with_sidecar() {
        let mut d = context_dataset(&[(0.0, 5), (1.0, 5)], 0.0, 5);
        d.set_discrete(0, true);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), &d.meta()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let text = "A,B\n1,2\n3\n";
        assert!(Dataset::read_csv(text.as_bytes(), &DatasetMeta::default()).is_err());
        let text = "A,B\n1,x\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), &DatasetMeta::default()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn mean_variance_model_routes_context_queries() {
        let d = context_dataset(&[(0.0, 300), (1.0, 300)], 2.0, 6);
        let m = DataCiModel::new(&d, DecisionPolicy::default())
            .unwrap()
            .with_context_test(ContextTest::MeanVariance)
            .unwrap();
        let direct = context_invariance_test(&d, 2, &[1], 0).unwrap();
        assert_eq!(m.p_value(0, 2, &[1]).unwrap(), direct);
        assert_eq!(m.p_value(2, 0, &[1]).unwrap(), direct);
        assert!(m.query(0, 2, &[1]).unwrap().is_dependent());
    }
}
