//! LCD, Y-Structure and Extended Y-Structure search, and scoring of the
//! ancestral claims they imply.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeRole;
use crate::separation::{CiModel, CiVerdict};

/// p-values below this are clamped before taking logs.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LCD")]
    Lcd,
    #[serde(rename = "YSt")]
    YSt,
    #[serde(rename = "YStExt")]
    YStExt,
    #[serde(rename = "ICP")]
    Icp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lcd, Method::YSt, Method::YStExt, Method::Icp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lcd => "LCD",
            Method::YSt => "YSt",
            Method::YStExt => "YStExt",
            Method::Icp => "ICP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// One discovered pattern instance: `⟨C,X,Y⟩` for LCD, `⟨V,W,X,Y⟩` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternHit {
    pub kind: Method,
    pub tuple: Vec<String>,
    pub source: String,
    pub target: String,
    /// Constraint p-values keyed like `"CY"` or `"VY|X"`; empty for oracle runs.
    pub pvalues: BTreeMap<String, f64>,
}

/// A scored ancestral claim `source ∈ an(target)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: String,
    pub target: String,
    pub score: f64,
    pub kind: Method,
    pub n_hits: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supporting_hits: Vec<PatternHit>,
}

/// Restricts the search space. `candidates[y]` lists the variables allowed
/// as `X` for target `y` (and as `W` when `y` plays the role of `X`).
#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub candidates: Option<Vec<Vec<usize>>>,
}

impl SearchOptions {
    fn allowed(&self, of: usize, all: &[usize]) -> Vec<usize> {
        match &self.candidates {
            Some(c) => c.get(of).cloned().unwrap_or_default(),
            None => all.to_vec(),
        }
    }
}

/// Marginal verdicts for every pair, computed once per search.
struct Marginals {
    n: usize,
    table: Vec<Option<CiVerdict>>,
}

impl Marginals {
    fn new<M: CiModel + ?Sized>(m: &M) -> Result<Self> {
        let n = m.variables().len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let verdicts: Vec<CiVerdict> = pairs
            .par_iter()
            .map(|&(i, j)| m.query(i, j, &[]))
            .collect::<Result<_>>()?;
        let mut table = vec![None; n * n];
        for (&(i, j), v) in pairs.iter().zip(verdicts) {
            table[i * n + j] = Some(v);
            table[j * n + i] = Some(v);
        }
        Ok(Marginals { n, table })
    }

    fn get(&self, i: usize, j: usize) -> CiVerdict {
        self.table[i * self.n + j].expect("marginal for distinct pair")
    }
}

fn record(p: &mut BTreeMap<String, f64>, key: &str, v: &CiVerdict) {
    if let Some(pv) = v.p_value {
        p.insert(key.to_string(), pv);
    }
}

fn system_vars<M: CiModel + ?Sized>(m: &M) -> Vec<usize> {
    (0..m.variables().len())
        .filter(|&i| m.variables()[i].role == NodeRole::System)
        .collect()
}

fn names<M: CiModel + ?Sized>(m: &M, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| m.name(i).to_string()).collect()
}

fn sort_hits(hits: &mut [PatternHit]) {
    hits.sort_by(|a, b| (a.kind, &a.tuple).cmp(&(b.kind, &b.tuple)));
}

/// All LCD triples `⟨C,X,Y⟩` with `C⊥̸Y`, `C⊥̸X`, `X⊥̸Y` and `C ⊥ Y | X`.
pub fn find_lcd<M: CiModel + ?Sized>(
    m: &M,
    context: usize,
    opts: &SearchOptions,
) -> Result<Vec<PatternHit>> {
    let vars = m.variables();
    if context >= vars.len() {
        return Err(Error::UnknownVariable(context));
    }
    if vars[context].role != NodeRole::Context {
        return Err(Error::InvalidArgument(format!(
            "`{}` is not a context variable",
            vars[context].name
        )));
    }
    let marg = Marginals::new(m)?;
    let system = system_vars(m);
    let c = context;
    let per_y: Vec<Vec<PatternHit>> = system
        .par_iter()
        .map(|&y| -> Result<Vec<PatternHit>> {
            let mut out = Vec::new();
            let cy = marg.get(c, y);
            if !cy.is_dependent() {
                return Ok(out);
            }
            for x in opts.allowed(y, &system) {
                if x == y || x == c || vars[x].role != NodeRole::System {
                    continue;
                }
                let cx = marg.get(c, x);
                let xy = marg.get(x, y);
                if !cx.is_dependent() || !xy.is_dependent() {
                    continue;
                }
                let cy_x = m.query(c, y, &[x])?;
                if !cy_x.is_independent() {
                    continue;
                }
                let mut p = BTreeMap::new();
                record(&mut p, "CY", &cy);
                record(&mut p, "CX", &cx);
                record(&mut p, "XY", &xy);
                record(&mut p, "CY|X", &cy_x);
                out.push(PatternHit {
                    kind: Method::Lcd,
                    tuple: names(m, &[c, x, y]),
                    source: m.name(x).to_string(),
                    target: m.name(y).to_string(),
                    pvalues: p,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut hits: Vec<PatternHit> = per_y.into_iter().flatten().collect();
    sort_hits(&mut hits);
    Ok(hits)
}

/// Y-Structures `⟨V,W,X,Y⟩`. Extended mode requires `V⊥̸Y`, `V ⊥ Y | X`,
/// `V⊥W` and `V⊥̸W | X`; plain mode also requires `W⊥̸Y` and `W ⊥ Y | X`.
pub fn find_y_structures<M: CiModel + ?Sized>(
    m: &M,
    extended: bool,
    fixed_v: Option<usize>,
    opts: &SearchOptions,
) -> Result<Vec<PatternHit>> {
    let vars = m.variables();
    let n = vars.len();
    if let Some(v) = fixed_v {
        if v >= n {
            return Err(Error::UnknownVariable(v));
        }
    }
    if n < 4 {
        return Ok(Vec::new());
    }
    let marg = Marginals::new(m)?;
    let system = system_vars(m);
    let all: Vec<usize> = (0..n).collect();
    let kind = if extended {
        Method::YStExt
    } else {
        Method::YSt
    };

    let per_y: Vec<Vec<PatternHit>> = system
        .par_iter()
        .map(|&y| -> Result<Vec<PatternHit>> {
            let mut out = Vec::new();
            for x in opts.allowed(y, &system) {
                if x == y || vars[x].role != NodeRole::System {
                    continue;
                }
                // Auxiliaries U with U⊥̸Y and U ⊥ Y | X, with their verdicts.
                let mut aux: BTreeMap<usize, (CiVerdict, CiVerdict)> = BTreeMap::new();
                for u in 0..n {
                    if u == x || u == y {
                        continue;
                    }
                    let uy = marg.get(u, y);
                    if !uy.is_dependent() {
                        continue;
                    }
                    let uy_x = m.query(u, y, &[x])?;
                    if uy_x.is_independent() {
                        aux.insert(u, (uy, uy_x));
                    }
                }
                let vs: Vec<usize> = match fixed_v {
                    Some(v) => aux.contains_key(&v).then_some(v).into_iter().collect(),
                    None => aux.keys().copied().collect(),
                };
                if vs.is_empty() {
                    continue;
                }
                let allowed = opts.allowed(x, &all);
                let ws: Vec<usize> = if extended {
                    allowed
                } else {
                    aux.keys()
                        .copied()
                        .filter(|w| allowed.contains(w))
                        .collect()
                };
                for &v in &vs {
                    let (vy, vy_x) = aux[&v];
                    for &w in &ws {
                        if w == v || w == x || w == y {
                            continue;
                        }
                        let vw = marg.get(v, w);
                        if !vw.is_independent() {
                            continue;
                        }
                        let vw_x = m.query(v, w, &[x])?;
                        if !vw_x.is_dependent() {
                            continue;
                        }
                        let wy = marg.get(w, y);
                        let mut p = BTreeMap::new();
                        record(&mut p, "VY", &vy);
                        record(&mut p, "VY|X", &vy_x);
                        record(&mut p, "VW", &vw);
                        record(&mut p, "VW|X", &vw_x);
                        record(&mut p, "WY", &wy);
                        if !extended {
                            record(&mut p, "WY|X", &aux[&w].1);
                        }
                        out.push(PatternHit {
                            kind,
                            tuple: names(m, &[v, w, x, y]),
                            source: m.name(x).to_string(),
                            target: m.name(y).to_string(),
                            pvalues: p,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut hits: Vec<PatternHit> = per_y.into_iter().flatten().collect();
    sort_hits(&mut hits);
    Ok(hits)
}

/// Re-evaluates the defining constraints of `hit` under `m`, looking the
/// tuple up by name.
pub fn hit_holds<M: CiModel + ?Sized>(m: &M, hit: &PatternHit) -> Result<bool> {
    let idx: Vec<usize> = hit
        .tuple
        .iter()
        .map(|n| m.index_of(n))
        .collect::<Result<_>>()?;
    let dep = |a: usize, b: usize, z: &[usize]| m.query(a, b, z).map(|v| v.is_dependent());
    let ind = |a: usize, b: usize, z: &[usize]| m.query(a, b, z).map(|v| v.is_independent());
    match (hit.kind, idx.as_slice()) {
        (Method::Lcd, &[c, x, y]) => {
            Ok(dep(c, y, &[])? && dep(c, x, &[])? && dep(x, y, &[])? && ind(c, y, &[x])?)
        }
        (Method::YSt | Method::YStExt, &[v, w, x, y]) => {
            let core = dep(v, y, &[])? && ind(v, y, &[x])? && ind(v, w, &[])? && dep(v, w, &[x])?;
            if hit.kind == Method::YStExt {
                Ok(core)
            } else {
                Ok(core && dep(w, y, &[])? && ind(w, y, &[x])?)
            }
        }
        _ => Err(Error::InvalidArgument(format!(
            "malformed {} hit {:?}",
            hit.kind, hit.tuple
        ))),
    }
}

/// `−ln p`, with `p` clamped below at [`P_FLOOR`].
pub fn neg_log_p(p: f64) -> f64 {
    -(p.max(P_FLOOR)).ln()
}

fn required(hit: &PatternHit, key: &str) -> Result<f64> {
    hit.pvalues
        .get(key)
        .copied()
        .ok_or_else(|| Error::MissingPValue {
            kind: hit.kind.to_string(),
            key: key.to_string(),
        })
}

/// Score of a single hit; `None` for oracle hits (no p-values at all).
pub fn hit_score(hit: &PatternHit) -> Result<Option<f64>> {
    if hit.pvalues.is_empty() {
        return Ok(None);
    }
    match hit.kind {
        Method::Lcd => Ok(Some(neg_log_p(required(hit, "CY")?))),
        Method::YSt | Method::YStExt => {
            let vy = neg_log_p(required(hit, "VY")?);
            let wy = neg_log_p(required(hit, "WY")?);
            Ok(Some(vy.min(wy)))
        }
        Method::Icp => Err(Error::InvalidArgument(
            "ICP predictions are scored by the icp module".into(),
        )),
    }
}

/// Groups hits by `(kind, source, target)` and scores each group by the
/// maximum over its hits. Oracle hits score 1.
pub fn score_predictions(hits: &[PatternHit]) -> Result<Vec<Prediction>> {
    let mut groups: BTreeMap<(Method, &str, &str), Vec<&PatternHit>> = BTreeMap::new();
    for h in hits {
        groups
            .entry((h.kind, &h.source, &h.target))
            .or_default()
            .push(h);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((kind, source, target), group) in groups {
        let mut score = f64::NEG_INFINITY;
        for h in &group {
            let s = hit_score(h)?.unwrap_or(1.0);
            score = score.max(s);
        }
        out.push(Prediction {
            source: source.to_string(),
            target: target.to_string(),
            score,
            kind,
            n_hits: group.len(),
            supporting_hits: group.into_iter().cloned().collect(),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    source: String,
    target: String,
    score: f64,
    kind: Method,
    n_hits: usize,
}

/// Writes `source,target,score,kind,n_hits`.
pub fn write_predictions<W: Write>(w: W, preds: &[Prediction]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in preds {
        out.serialize(PredictionRow {
            source: p.source.clone(),
            target: p.target.clone(),
            score: p.score,
            kind: p.kind,
            n_hits: p.n_hits,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(r: R) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PredictionRow = row?;
        if !row.score.is_finite() || row.score < 0.0 {
            return Err(Error::Format(format!(
                "invalid score {} for {} -> {}",
                row.score, row.source, row.target
            )));
        }
        out.push(Prediction {
            source: row.source,
            target: row.target,
            score: row.score,
            kind: row.kind,
            n_hits: row.n_hits,
            supporting_hits: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dmg;
    use crate::separation::OracleModel;

    fn oracle(text: &str) -> OracleModel {
        OracleModel::new(text.parse::<Dmg>().unwrap())
    }

    fn tuples(hits: &[PatternHit]) -> Vec<Vec<&str>> {
        hits.iter()
            .map(|h| h.tuple.iter().map(String::as_str).collect())
            .collect()
    }

    #[test]
    fn lcd_on_chain() {
        let m = oracle("node C context\nnode X system\nnode Y system\nedge C -> X\nedge X -> Y");
        let hits = find_lcd(&m, m.index_of("C").unwrap(), &SearchOptions::default()).unwrap();
        assert_eq!(tuples(&hits), vec![vec!["C", "X", "Y"]]);
        assert_eq!(
            (hits[0].source.as_str(), hits[0].target.as_str()),
            ("X", "Y")
        );
        assert!(hits[0].pvalues.is_empty());
    }

    #[test]
    fn lcd_fooled_by_selection() {
        let m = oracle(
            "node C context\nnode X system\nnode Y system\nnode S selection\n\
             edge C -> X\nedge X -> S\nedge Y -> S",
        );
        let hits = find_lcd(&m, 0, &SearchOptions::default()).unwrap();
        assert_eq!(tuples(&hits), vec![vec!["C", "X", "Y"]]);
    }

    #[test]
    fn lcd_empty_graph_and_bad_context() {
        let m = oracle("node C context\nnode X system\nnode Y system");
        assert!(find_lcd(&m, 0, &SearchOptions::default())
            .unwrap()
            .is_empty());
        assert!(find_lcd(&m, 1, &SearchOptions::default()).is_err());
        assert!(matches!(
            find_lcd(&m, 7, &SearchOptions::default()),
            Err(Error::UnknownVariable(7))
        ));
    }

    #[test]
    fn ystructure_examples() {
        let plain = oracle(
            "node V system\nnode W system\nnode X system\nnode Y system\n\
             edge V -> X\nedge W -> X\nedge X -> Y",
        );
        let yst = find_y_structures(&plain, false, None, &SearchOptions::default()).unwrap();
        assert_eq!(
            tuples(&yst),
            vec![vec!["V", "W", "X", "Y"], vec!["W", "V", "X", "Y"]]
        );

        let bidirected = oracle(
            "node V system\nnode W system\nnode X system\nnode Y system\n\
             edge V <-> X\nedge W <-> X\nedge X -> Y",
        );
        let yst = find_y_structures(&bidirected, false, None, &SearchOptions::default()).unwrap();
        assert!(tuples(&yst).contains(&vec!["V", "W", "X", "Y"]));
    }

    #[test]
    fn hits_recheck_on_their_own_graph_only() {
        let m = oracle(
            "node C context\nnode V system\nnode X system\nnode Y system\n\
             edge C -> X\nedge V -> X\nedge X -> Y",
        );
        let mut hits = find_lcd(&m, 0, &SearchOptions::default()).unwrap();
        hits.extend(find_y_structures(&m, false, None, &SearchOptions::default()).unwrap());
        hits.extend(find_y_structures(&m, true, None, &SearchOptions::default()).unwrap());
        assert!(hits.len() >= 3);
        for h in &hits {
            assert!(hit_holds(&m, h).unwrap(), "{h:?}");
        }
        let reversed = oracle(
            "node C context\nnode V system\nnode X system\nnode Y system\n\
             edge C -> X\nedge V -> X\nedge Y -> X",
        );
        for h in &hits {
            assert!(!hit_holds(&reversed, h).unwrap(), "{h:?}");
        }
        let mut bad = hits[0].clone();
        bad.tuple.pop();
        assert!(hit_holds(&m, &bad).is_err());
    }

    #[test]
    fn confounded_w_opens_v_to_y_given_x() {
        // V -> X <- W <-> Y is open given the collider X, so V ⊥ Y | X fails.
        let m = oracle(
            "node V system\nnode W system\nnode X system\nnode Y system\n\
             edge V -> X\nedge W -> X\nedge X -> Y\nedge W <-> Y",
        );
        let ext = find_y_structures(&m, true, None, &SearchOptions::default()).unwrap();
        assert!(!tuples(&ext).contains(&vec!["V", "W", "X", "Y"]));
        let (v, x, y) = (0, 2, 3);
        assert!(m.query(v, y, &[x]).unwrap().is_dependent());
    }

    #[test]
    fn extended_ystructure_under_selection() {
        let m = oracle(
            "node V system\nnode W system\nnode X system\nnode Y system\nnode S selection\n\
             edge V -> X\nedge X -> Y\nedge X <-> S\nedge W -> S",
        );
        let ext = find_y_structures(&m, true, None, &SearchOptions::default()).unwrap();
        assert!(tuples(&ext).contains(&vec!["V", "W", "X", "Y"]));
        // W -> S <-> X -> Y is open given S and blocked by X, so the two
        // extra constraints hold as well.
        let yst = find_y_structures(&m, false, None, &SearchOptions::default()).unwrap();
        assert!(tuples(&yst).contains(&vec!["V", "W", "X", "Y"]));
    }

    #[test]
    fn fixed_v_and_small_models() {
        let m = oracle(
            "node V system\nnode W system\nnode X system\nnode Y system\n\
             edge V -> X\nedge W -> X\nedge X -> Y",
        );
        let v = m.index_of("V").unwrap();
        let hits = find_y_structures(&m, false, Some(v), &SearchOptions::default()).unwrap();
        assert_eq!(tuples(&hits), vec![vec!["V", "W", "X", "Y"]]);
        assert!(find_y_structures(&m, false, Some(9), &SearchOptions::default()).is_err());
        let small =
            oracle("node C context\nnode X system\nnode Y system\nedge C -> X\nedge X -> Y");
        assert!(
            find_y_structures(&small, true, None, &SearchOptions::default())
                .unwrap()
                .is_empty()
        );
    }

    fn yst_hit(p_vy: f64, p_wy: f64) -> PatternHit {
        PatternHit {
            kind: Method::YSt,
            tuple: vec!["V".into(), "W".into(), "X".into(), "Y".into()],
            source: "X".into(),
            target: "Y".into(),
            pvalues: [("VY".to_string(), p_vy), ("WY".to_string(), p_wy)]
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn scoring_examples() {
        let preds = score_predictions(&[yst_hit(1e-4, 1e-2), yst_hit(1e-3, 1e-3)]).unwrap();
        assert_eq!(preds.len(), 1);
        assert!((preds[0].score - 6.907_755_278_982_137).abs() < 1e-12);
        assert_eq!(preds[0].n_hits, 2);

        let lcd = PatternHit {
            kind: Method::Lcd,
            tuple: vec!["C".into(), "X".into(), "Y".into()],
            source: "X".into(),
            target: "Y".into(),
            pvalues: [("CY".to_string(), 0.001)].into_iter().collect(),
        };
        let preds = score_predictions(std::slice::from_ref(&lcd)).unwrap();
        assert!((preds[0].score - 6.907_755_278_982_137).abs() < 1e-12);

        let zero = score_predictions(&[yst_hit(0.0, 0.0)]).unwrap();
        assert!((zero[0].score - 300.0 * std::f64::consts::LN_10).abs() < 1e-9);

        let mut missing = lcd;
        missing.pvalues = [("CX".to_string(), 0.1)].into_iter().collect();
        assert!(matches!(
            score_predictions(&[missing]),
            Err(Error::MissingPValue { .. })
        ));
    }

    #[test]
    fn oracle_hits_score_one() {
        let m = oracle("node C context\nnode X system\nnode Y system\nedge C -> X\nedge X -> Y");
        let hits = find_lcd(&m, 0, &SearchOptions::default()).unwrap();
        let preds = score_predictions(&hits).unwrap();
        assert_eq!(preds[0].score, 1.0);
    }

    #[test]
    fn prediction_csv_round_trip() {
        let preds = score_predictions(&[yst_hit(1e-4, 1e-2)]).unwrap();
        let mut buf = Vec::new();
        write_predictions(&mut buf, &preds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("source,target,score,kind,n_hits\n"));
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back[0].source, "X");
        assert_eq!(back[0].kind, Method::YSt);
        assert!((back[0].score - preds[0].score).abs() < 1e-12);
    }

    #[test]
    fn candidate_restriction_limits_x() {
        let m = oracle("node C context\nnode X system\nnode Y system\nedge C -> X\nedge X -> Y");
        let opts = SearchOptions {
            candidates: Some(vec![vec![], vec![], vec![]]),
        };
        assert!(find_lcd(&m, 0, &opts).unwrap().is_empty());
        let opts = SearchOptions {
            candidates: Some(vec![vec![], vec![], vec![1]]),
        };
        assert_eq!(find_lcd(&m, 0, &opts).unwrap().len(), 1);
    }
}
