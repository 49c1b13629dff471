//! A simplified Invariant Causal Prediction baseline and componentwise
//! L2-boosting preselection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::{Dataset, DecisionPolicy, LevelMoments};
use crate::error::{Error, Result};
use crate::graph::NodeRole;
use crate::patterns::{Method, Prediction};

pub const BOOST_STEPS: usize = 100;
pub const BOOST_STEP_SIZE: f64 = 0.1;
pub const MAX_PRESELECTED: usize = 8;

/// Componentwise linear L2-boosting of `target` on the other System columns.
/// Returns the distinct covariates in the order they were first picked,
/// truncated to `max_vars`.
pub fn boost_preselect(d: &Dataset, target: usize, max_vars: usize) -> Result<Vec<usize>> {
    boost_preselect_with(d, target, max_vars, BOOST_STEPS, BOOST_STEP_SIZE)
}

pub fn boost_preselect_with(
    d: &Dataset,
    target: usize,
    max_vars: usize,
    steps: usize,
    step_size: f64,
) -> Result<Vec<usize>> {
    if target >= d.n_cols() {
        return Err(Error::UnknownVariable(target));
    }
    if d.role(target) != NodeRole::System {
        return Err(Error::InvalidArgument(format!(
            "`{}` is not a system column",
            d.name(target)
        )));
    }
    let n = d.n_rows();
    let center = |c: &[f64]| -> Vec<f64> {
        let m = c.iter().sum::<f64>() / n as f64;
        c.iter().map(|v| v - m).collect()
    };
    let mut resid = center(d.column(target));
    if resid.iter().all(|v| *v == 0.0) {
        return Err(Error::ConstantColumn(d.name(target).to_string()));
    }
    let covariates: Vec<(usize, Vec<f64>, f64)> = d
        .system_columns()
        .into_iter()
        .filter(|&j| j != target)
        .filter_map(|j| {
            let x = center(d.column(j));
            let ss: f64 = x.iter().map(|v| v * v).sum();
            (ss > 0.0).then_some((j, x, ss))
        })
        .collect();
    let mut picked = Vec::new();
    for _ in 0..steps {
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, (_, x, ss)) in covariates.iter().enumerate() {
            let dot: f64 = x.iter().zip(&resid).map(|(a, b)| a * b).sum();
            // |corr(x, r)| ∝ |dot| / ||x|| for a fixed residual.
            let score = dot.abs() / ss.sqrt();
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((k, score, dot / ss));
            }
        }
        let Some((k, _, beta)) = best else { break };
        let (j, x, _) = &covariates[k];
        for (r, xv) in resid.iter_mut().zip(x) {
            *r -= step_size * beta * xv;
        }
        if !picked.contains(j) {
            picked.push(*j);
        }
    }
    picked.truncate(max_vars);
    Ok(picked)
}

/// When to preselect the candidate pool by boosting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preselection {
    /// Only when there are more than 8 candidate covariates.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IcpOptions {
    pub preselection: Preselection,
    /// Largest subset size tested; all subsets when `None`.
    pub max_set_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub target: usize,
    pub pool: Vec<usize>,
    pub accepted_sets: Vec<Vec<usize>>,
    pub parent_estimate: Vec<usize>,
    /// `(parent, p)`: max invariance p-value over accepted sets containing it.
    pub parent_pvalues: Vec<(usize, f64)>,
    pub rejected: bool,
}

impl IcpResult {
    /// One prediction per estimated parent, scored by its p-value.
    pub fn predictions(&self, d: &Dataset) -> Vec<Prediction> {
        if self.rejected {
            return Vec::new();
        }
        self.parent_pvalues
            .iter()
            .map(|&(p, score)| Prediction {
                source: d.name(p).to_string(),
                target: d.name(self.target).to_string(),
                score,
                kind: Method::Icp,
                n_hits: self.accepted_sets.len(),
                supporting_hits: Vec::new(),
            })
            .collect()
    }
}

/// Tests every subset of the candidate pool for invariance of `target`
/// across the levels of `context`; the parent estimate is the intersection
/// of the accepted subsets.
pub fn icp_predict(
    d: &Dataset,
    target: usize,
    context: usize,
    policy: &DecisionPolicy,
    opts: &IcpOptions,
) -> Result<IcpResult> {
    if !d.is_discrete(context) {
        return Err(Error::NotDiscrete(d.name(context).to_string()));
    }
    let all: Vec<usize> = d
        .system_columns()
        .into_iter()
        .filter(|&j| j != target && j != context)
        .collect();
    let preselect = match opts.preselection {
        Preselection::Auto => all.len() > MAX_PRESELECTED,
        Preselection::Always => true,
        Preselection::Never => false,
    };
    let mut pool = if preselect {
        boost_preselect(d, target, MAX_PRESELECTED)?
    } else {
        all
    };
    pool.sort_unstable();
    if pool.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no candidate parents for `{}`",
            d.name(target)
        )));
    }
    if pool.len() > 24 {
        return Err(Error::InvalidArgument(format!(
            "candidate pool of {} is too large",
            pool.len()
        )));
    }
    let mut cols: Vec<&[f64]> = vec![d.column(target)];
    cols.extend(pool.iter().map(|&j| d.column(j)));
    let moments = LevelMoments::new(&cols, d.column(context))?;

    let max_size = opts.max_set_size.unwrap_or(pool.len());
    let masks: Vec<u32> = (0u32..1 << pool.len())
        .filter(|m| m.count_ones() as usize <= max_size)
        .collect();
    let pvalues: Vec<f64> = masks
        .par_iter()
        .map(|&mask| {
            // Column 0 of the moments is the target; pool member k is column k + 1.
            let cond: Vec<usize> = (0..pool.len())
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| k + 1)
                .collect();
            moments.invariance_pvalue(0, &cond)
        })
        .collect::<Result<_>>()?;

    let mut accepted_sets = Vec::new();
    let mut estimate: Option<u32> = None;
    let mut best = vec![f64::NEG_INFINITY; pool.len()];
    for (&mask, &p) in masks.iter().zip(&pvalues) {
        if p < policy.alpha {
            continue;
        }
        accepted_sets.push(
            (0..pool.len())
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| pool[k])
                .collect(),
        );
        estimate = Some(estimate.map_or(mask, |e| e & mask));
        for (k, b) in best.iter_mut().enumerate() {
            if mask >> k & 1 == 1 {
                *b = b.max(p);
            }
        }
    }
    let rejected = estimate.is_none();
    let est = estimate.unwrap_or(0);
    let parent_estimate: Vec<usize> = (0..pool.len())
        .filter(|k| est >> k & 1 == 1)
        .map(|k| pool[k])
        .collect();
    let parent_pvalues = (0..pool.len())
        .filter(|k| est >> k & 1 == 1)
        .map(|k| (pool[k], best[k]))
        .collect();
    Ok(IcpResult {
        target,
        pool,
        accepted_sets,
        parent_estimate,
        parent_pvalues,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn build(cols: Vec<(&str, NodeRole, Vec<f64>)>) -> Dataset {
        let names = cols.iter().map(|c| c.0.to_string()).collect();
        let roles = cols.iter().map(|c| c.1).collect();
        Dataset::new(names, roles, cols.into_iter().map(|c| c.2).collect()).unwrap()
    }

    fn chain(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let cv: f64 = rng.sample(StandardNormal);
            let xv = cv + rng.sample::<f64, _>(StandardNormal);
            let yv = xv + rng.sample::<f64, _>(StandardNormal);
            c.push(cv);
            x.push(xv);
            y.push(yv);
            z.push(rng.sample(StandardNormal));
        }
        let mut d = build(vec![
            ("C", NodeRole::Context, c),
            ("X", NodeRole::System, x),
            ("Y", NodeRole::System, y),
            ("Z", NodeRole::System, z),
        ]);
        d.binarize_at_mean(0);
        d
    }

    #[test]
    fn chain_recovers_parent() {
        let mut hits = 0;
        for seed in 0..20 {
            let d = chain(10_000, seed);
            let r =
                icp_predict(&d, 2, 0, &DecisionPolicy::default(), &IcpOptions::default()).unwrap();
            if r.parent_estimate == vec![1] {
                hits += 1;
            }
            for set in &r.accepted_sets {
                assert!(r.parent_estimate.iter().all(|p| set.contains(p)));
            }
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn invariant_target_gives_empty_estimate() {
        let d = chain(2000, 7);
        // Z does not depend on the context: the empty set is accepted.
        let r = icp_predict(&d, 3, 0, &DecisionPolicy::default(), &IcpOptions::default()).unwrap();
        assert!(!r.rejected);
        assert!(r.accepted_sets.contains(&vec![]));
        assert!(r.parent_estimate.is_empty());
        assert!(r.predictions(&d).is_empty());
    }

    #[test]
    fn no_invariant_set_rejects() {
        // The context shifts Y directly, so every residual depends on it.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let c: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + 3.0 * c[i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut d = build(vec![
            ("C", NodeRole::Context, c),
            ("X", NodeRole::System, x),
            ("Y", NodeRole::System, y),
        ]);
        d.set_discrete(0, true);
        let r = icp_predict(&d, 2, 0, &DecisionPolicy::default(), &IcpOptions::default()).unwrap();
        assert!(r.rejected);
        assert!(r.predictions(&d).is_empty());
    }

    #[test]
    fn continuous_context_is_an_error() {
        let mut d = chain(100, 1);
        d.set_discrete(0, false);
        assert!(matches!(
            icp_predict(&d, 2, 0, &DecisionPolicy::default(), &IcpOptions::default()),
            Err(Error::NotDiscrete(_))
        ));
    }

    #[test]
    fn boosting_picks_the_true_covariate_first() {
        let mut first = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 500;
            let mut cols: Vec<(String, Vec<f64>)> = (1..=16)
                .map(|k| {
                    (
                        format!("X{k}"),
                        (0..n).map(|_| rng.sample(StandardNormal)).collect(),
                    )
                })
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|i| 2.0 * cols[2].1[i] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            cols.push(("Y".into(), y));
            let d = Dataset::new(
                cols.iter().map(|c| c.0.clone()).collect(),
                vec![NodeRole::System; 17],
                cols.into_iter().map(|c| c.1).collect(),
            )
            .unwrap();
            let picked = boost_preselect(&d, 16, 8).unwrap();
            assert!(picked.len() <= 8);
            if picked.first() == Some(&2) {
                first += 1;
            }
        }
        assert!(first >= 190, "{first}/200");
    }

    #[test]
    fn boosting_rejects_constant_target() {
        let d = build(vec![
            ("A", NodeRole::System, vec![1.0; 10]),
            ("B", NodeRole::System, (0..10).map(f64::from).collect()),
        ]);
        assert!(matches!(
            boost_preselect(&d, 0, 8),
            Err(Error::ConstantColumn(_))
        ));
    }
}
