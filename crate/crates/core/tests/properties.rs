use proptest::prelude::*;

use selbias::citest::{decide, fisher_z_pvalue, partial_correlation_test, Dataset, DecisionPolicy};
use selbias::eval::{average_precision, sweep};
use selbias::graph::{node_pairs, Dmg, EdgeState, NodeRole, NodeSet};
use selbias::patterns::{find_y_structures, SearchOptions};
use selbias::separation::{
    d_separated, sigma_separated, sigma_separated_by_paths, OracleModel, Verdict,
};

const NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// A DMG on `n` system nodes (the last `n_sel` of them Selection) with
/// arbitrary edge states.
fn dmg(max_nodes: usize, max_sel: usize) -> impl Strategy<Value = Dmg> {
    (2..=max_nodes)
        .prop_flat_map(move |n| {
            let pairs = node_pairs(n).len();
            (
                Just(n),
                0..=max_sel.min(n - 2),
                prop::collection::vec(0u8..8, pairs),
            )
        })
        .prop_map(|(n, n_sel, states)| {
            let nodes: Vec<(&str, NodeRole)> = (0..n)
                .map(|i| {
                    let role = if i >= n - n_sel {
                        NodeRole::Selection
                    } else {
                        NodeRole::System
                    };
                    (NAMES[i], role)
                })
                .collect();
            let states: Vec<EdgeState> = states.into_iter().map(EdgeState).collect();
            Dmg::from_pair_states(&nodes, &states).unwrap()
        })
}

/// Three disjoint sets over `n` nodes with `x`, `y` non-empty, or `None`.
fn split(n: usize, labels: &[u8]) -> Option<(NodeSet, NodeSet, NodeSet)> {
    let (mut x, mut y, mut c) = (NodeSet::EMPTY, NodeSet::EMPTY, NodeSet::EMPTY);
    for (v, &l) in labels.iter().take(n).enumerate() {
        match l {
            0 => x.insert(v),
            1 => y.insert(v),
            2 => c.insert(v),
            _ => {}
        }
    }
    (!x.is_empty() && !y.is_empty()).then_some((x, y, c))
}

fn verdict_rank(v: Verdict) -> u8 {
    match v {
        Verdict::Dependent => 0,
        Verdict::Inconclusive => 1,
        Verdict::Independent => 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn closure_matches_path_reference(
        g in dmg(5, 0),
        labels in prop::collection::vec(0u8..4, 5),
    ) {
        if let Some((x, y, c)) = split(g.len(), &labels) {
            prop_assert_eq!(
                sigma_separated(&g, x, y, c).unwrap(),
                sigma_separated_by_paths(&g, x, y, c).unwrap()
            );
        }
    }

    #[test]
    fn separation_is_symmetric(
        g in dmg(6, 0),
        labels in prop::collection::vec(0u8..4, 6),
    ) {
        if let Some((x, y, c)) = split(g.len(), &labels) {
            prop_assert_eq!(
                sigma_separated(&g, x, y, c).unwrap(),
                sigma_separated(&g, y, x, c).unwrap()
            );
            prop_assert_eq!(
                d_separated(&g, x, y, c).unwrap(),
                d_separated(&g, y, x, c).unwrap()
            );
        }
    }

    #[test]
    fn sigma_implies_d_separation(
        g in dmg(6, 0),
        labels in prop::collection::vec(0u8..4, 6),
    ) {
        if let Some((x, y, c)) = split(g.len(), &labels) {
            if sigma_separated(&g, x, y, c).unwrap() {
                prop_assert!(d_separated(&g, x, y, c).unwrap());
            }
        }
    }

    #[test]
    fn ystructures_are_extended_ystructures(g in dmg(6, 2)) {
        let m = OracleModel::new(g);
        let opts = SearchOptions::default();
        let plain = find_y_structures(&m, false, None, &opts).unwrap();
        let ext = find_y_structures(&m, true, None, &opts).unwrap();
        for h in &plain {
            prop_assert!(ext.iter().any(|e| e.tuple == h.tuple), "{:?}", h.tuple);
        }
    }

    #[test]
    fn text_round_trip(g in dmg(6, 2)) {
        let back: Dmg = g.to_text().parse().unwrap();
        prop_assert_eq!(back.to_text(), g.to_text());
    }

    #[test]
    fn projection_keeps_ancestry(g in dmg(6, 0), drop in 0usize..6) {
        prop_assume!(drop < g.len() && g.len() > 2);
        let keep = g.all().difference(NodeSet::singleton(drop));
        let p = g.latent_projection(keep).unwrap();
        let kept: Vec<usize> = keep.iter().collect();
        for (ia, &a) in kept.iter().enumerate() {
            let an = g.ancestors(NodeSet::singleton(a)).unwrap();
            let an_p = p.ancestors(NodeSet::singleton(ia)).unwrap();
            for (ib, &b) in kept.iter().enumerate() {
                prop_assert_eq!(an.contains(b), an_p.contains(ib));
            }
        }
    }

    #[test]
    fn curves_depend_only_on_score_order(
        items in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 1..40),
    ) {
        let n_pos = items.iter().filter(|i| i.1).count() + 3;
        let n_neg = items.len() + 3 - n_pos + 3;
        let a = sweep(&items, n_pos, n_neg, 0.0);
        let moved: Vec<(f64, bool)> = items.iter().map(|&(s, l)| (s.exp() * 2.0 + 7.0, l)).collect();
        let b = sweep(&moved, n_pos, n_neg, 0.0);
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!((p.tp, p.fp), (q.tp, q.fp));
            prop_assert_eq!(p.precision, q.precision);
            prop_assert_eq!(p.recall, q.recall);
        }
        prop_assert_eq!(average_precision(&a), average_precision(&b));
    }

    #[test]
    fn recall_and_counts_are_monotone(
        items in prop::collection::vec((0.0f64..10.0, any::<bool>()), 1..40),
    ) {
        let n_pos = items.iter().filter(|i| i.1).count();
        let n_neg = items.len() - n_pos;
        let pts = sweep(&items, n_pos, n_neg, 5.0);
        for w in pts.windows(2) {
            prop_assert!(w[0].threshold > w[1].threshold);
            prop_assert!(w[0].recall <= w[1].recall);
            prop_assert!(w[0].fpr <= w[1].fpr);
            prop_assert!(w[0].tp + w[0].fp < w[1].tp + w[1].fp);
        }
        let last = pts.last().unwrap();
        prop_assert_eq!(last.tp + last.fp, items.len());
        prop_assert!(pts.iter().filter(|p| p.marker).count() <= 1);
        let ap = average_precision(&pts);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn decisions_are_monotone_in_p(
        p in 0.0f64..=1.0,
        q in 0.0f64..=1.0,
        alpha in 0.001f64..0.2,
        k in 1usize..20,
    ) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        for policy in [DecisionPolicy::single(alpha).unwrap(), DecisionPolicy::dual(alpha, k).unwrap()] {
            prop_assert!(
                verdict_rank(decide(lo, &policy, true)) <= verdict_rank(decide(hi, &policy, true))
            );
            prop_assert!(
                verdict_rank(decide(lo, &policy, false)) >= verdict_rank(decide(hi, &policy, false))
            );
        }
    }

    #[test]
    fn fisher_z_is_symmetric_and_decreasing(r in 0.0f64..0.999, n in 10usize..5000, k in 0usize..5) {
        let p = fisher_z_pvalue(r, n, k);
        prop_assert_eq!(p, fisher_z_pvalue(-r, n, k));
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(fisher_z_pvalue((r + 0.1).min(0.9999), n, k) <= p);
    }

    #[test]
    fn partial_correlation_is_affine_invariant(
        rows in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 12..60),
        a in prop::sample::select(vec![-4.0, -0.5, 0.25, 3.0]),
        b in -10.0f64..10.0,
    ) {
        let col = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let (x, y, z) = (col(|r| r.0), col(|r| r.1 + 0.5 * r.0), col(|r| r.2 + r.1));
        let make = |x: Vec<f64>| {
            Dataset::new(
                vec!["X".into(), "Y".into(), "Z".into()],
                vec![NodeRole::System; 3],
                vec![x, y.clone(), z.clone()],
            )
            .unwrap()
        };
        let base = partial_correlation_test(&make(x.clone()), 0, 1, &[2]);
        let moved = partial_correlation_test(&make(x.iter().map(|v| a * v + b).collect()), 0, 1, &[2]);
        if let (Ok(p), Ok(q)) = (base, moved) {
            prop_assert!((p - q).abs() <= 1e-6 * p.max(1e-12) + 1e-9, "{} vs {}", p, q);
        }
    }
}
