//! Invariant checks as proptest runners. Each function runs its own case
//! budget and panics on a counterexample.

use std::collections::BTreeSet;

use bdhh::augmentation::{augment_embeddings, item_basket_attention, pool_basket};
use bdhh::behavior::{price_attention, AttentionWeights, Pooling};
use bdhh::dataio::{equal_frequency_levels, split_dataset, Basket, BasketSequence, ItemInfo, Vocabulary};
use bdhh::encoder::aggregate_feature;
use bdhh::hypergraph::{build_hypergraph, NodeRef, NodeType};
use bdhh::metrics::{hit_at_k, ndcg_at_k, RankedList};
use bdhh::objective::{loss, score_items, ScoreVector, TargetVector};
use bdhh::tape::Mat;
use proptest::prelude::*;

fn mat(rows: usize, cols: usize, vals: &[f64]) -> Mat {
    Mat::from_shape_vec((rows, cols), vals[..rows * cols].to_vec()).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn sums_to_one(w: &[f64]) -> bool {
    (w.iter().sum::<f64>() - 1.0).abs() <= 1e-6 && w.iter().all(|&x| (0.0..=1.0).contains(&x))
}

prop_compose! {
    fn attention_case()(heads in 1usize..4, per in 1usize..3, m in 1usize..6)
        (x in values(m * heads * per), w in values(4 * (heads * per).pow(2)), heads in Just(heads), d in Just(heads * per), m in Just(m))
        -> (Mat, AttentionWeights) {
        let dd = d * d;
        let aw = AttentionWeights {
            heads,
            query: mat(d, d, &w[..dd]),
            key: mat(d, d, &w[dd..2 * dd]),
            value: mat(d, d, &w[2 * dd..3 * dd]),
            output: mat(d, d, &w[3 * dd..]),
        };
        (mat(m, d, &x), aw)
    }
}

/// A random vocabulary plus baskets over it.
fn basket_world() -> impl Strategy<Value = (Vocabulary, Vec<Basket>)> {
    (1usize..8, 1usize..4, 1usize..4).prop_flat_map(|(n, np, nc)| {
        let infos = prop::collection::vec((0..np, 0..nc), n);
        let baskets = prop::collection::vec(prop::collection::btree_set(0..n, 1..4), 1..6);
        (Just((n, np, nc)), infos, baskets).prop_map(|((_, np, nc), infos, baskets)| {
            let items: Vec<ItemInfo> = infos
                .iter()
                .enumerate()
                .map(|(i, &(p, c))| ItemInfo { id: format!("i{i}"), price_level: p, category: c })
                .collect();
            let vocab = Vocabulary::new(vec!["u".into()], items, (0..nc).map(|c| format!("c{c}")).collect(), np).unwrap();
            let bs = baskets
                .into_iter()
                .enumerate()
                .map(|(k, set)| Basket { user: 0, seq_index: k, day: k as u32, items: set.into_iter().map(|i| vocab.item_ref(i)).collect() })
                .collect();
            (vocab, bs)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    fn price_attention_rows_are_distributions((x, w) in attention_case()) {
        let (_, weights, _) = price_attention(&x, &w, Pooling::Last).unwrap();
        for head in &weights {
            for row in head.rows() {
                prop_assert!(sums_to_one(&row.to_vec()));
            }
        }
    }

    fn price_attention_is_permutation_equivariant((x, w) in attention_case(), seed in any::<u64>()) {
        let m = x.nrows();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let xp = x.select(ndarray::Axis(0), &perm);
        let (out, _, phi) = price_attention(&x, &w, Pooling::Mean).unwrap();
        let (outp, _, phip) = price_attention(&xp, &w, Pooling::Mean).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..x.ncols() {
                prop_assert!((outp[[i, c]] - out[[p, c]]).abs() < 1e-9);
            }
        }
        for (a, b) in phi.iter().zip(&phip) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    fn neighbor_weights_sum_to_one(d in 1usize..5, n in 1usize..6, alpha in values(5), nb in values(30), shift in 0usize..6) {
        let ones: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0; d]).collect();
        let out = aggregate_feature(&vec![0.0; d], &ones, &alpha[..d]).unwrap();
        prop_assert!(out.iter().all(|&x| (x - 1.0).abs() <= 1e-6));
        let nbrs: Vec<Vec<f64>> = (0..n).map(|i| nb[i * d..(i + 1) * d].to_vec()).collect();
        let mut rotated = nbrs.clone();
        rotated.rotate_left(shift % n);
        let a = aggregate_feature(&vec![0.0; d], &nbrs, &alpha[..d]).unwrap();
        let b = aggregate_feature(&vec![0.0; d], &rotated, &alpha[..d]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    fn basket_pooling_bounded_and_order_free(d in 1usize..5, n in 1usize..6, v in prop::collection::vec(-50.0f64..50.0, 30), shift in 0usize..6) {
        let items: Vec<Vec<f64>> = (0..n).map(|i| v[i * d..(i + 1) * d].to_vec()).collect();
        let mut rotated = items.clone();
        rotated.rotate_left(shift % n);
        let a = pool_basket(&items).unwrap();
        let b = pool_basket(&rotated).unwrap();
        prop_assert!(a.iter().all(|x| x.abs() <= 1.0));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    fn basket_attention_is_distribution_and_order_free(d in 1usize..4, j in 1usize..5, v in values(16), w in values(16), b in values(4)) {
        let vecs = mat(j, d, &v);
        let (wa, ba) = (mat(d, d, &w), mat(d, 1, &b));
        let (weights, summary) = item_basket_attention(&vecs, &wa, &ba).unwrap();
        prop_assert!(sums_to_one(&weights));
        let rev: Vec<usize> = (0..j).rev().collect();
        let (weights_r, summary_r) = item_basket_attention(&vecs.select(ndarray::Axis(0), &rev), &wa, &ba).unwrap();
        for k in 0..j {
            prop_assert!((weights[k] - weights_r[j - 1 - k]).abs() < 1e-12);
        }
        for (x, y) in summary.iter().zip(&summary_r) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    fn augmentation_leaves_absent_rows(n in 2usize..7, v in values(21), w in values(9), b in values(3), rows in prop::collection::vec(prop::collection::vec(0usize..7, 1..4), 1..4)) {
        let d = 3;
        let h = mat(n, d, &v);
        let baskets: Vec<Vec<usize>> = rows.into_iter().map(|r| r.into_iter().map(|i| i % n).collect()).collect();
        let out = augment_embeddings(&h, &baskets, &mat(d, d, &w), &mat(d, 1, &b)).unwrap();
        for i in 0..n {
            if !baskets.iter().any(|bk| bk.contains(&i)) {
                prop_assert_eq!(out.row(i), h.row(i));
            }
        }
    }

    fn scores_softmax_properties(y in values(8), c in -100.0f64..100.0) {
        let a = ScoreVector::from_scores(y.clone());
        let b = ScoreVector::from_scores(y.iter().map(|v| v + c).collect());
        prop_assert!(sums_to_one(&a.probs));
        for (p, q) in a.probs.iter().zip(&b.probs) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    fn score_items_probabilities_sum_to_one(d in 1usize..4, m in 1usize..6, z in values(24), phi in values(8), lv in prop::collection::vec(0usize..3, 6)) {
        let z_id = mat(m, d, &z);
        let z_p = mat(3, d, &z[12..]);
        let s = score_items(&phi[..d], Some(&phi[4..4 + d]), &z_id, &z_p, &lv[..m]).unwrap();
        prop_assert!(sums_to_one(&s.probs));
    }

    fn loss_is_finite_and_permutation_invariant(p in prop::collection::vec(0.0f64..=1.0, 2..8), mask in any::<u8>(), shift in 0usize..8) {
        let n = p.len();
        let mut t: Vec<f64> = (0..n).map(|i| f64::from((mask >> (i % 8)) & 1)).collect();
        t[0] = 1.0;
        let target = TargetVector::new(t.clone()).unwrap();
        let l = loss(&p, &target).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
        let (mut pr, mut tr) = (p.clone(), t.clone());
        pr.rotate_left(shift % n);
        tr.rotate_left(shift % n);
        let lr = loss(&pr, &TargetVector::new(tr).unwrap()).unwrap();
        prop_assert!((l - lr).abs() < 1e-9);
    }

    fn metrics_ignore_order_below_k(n in 6usize..20, k in 1usize..6, truth in prop::collection::btree_set(0usize..20, 1..5), seed in any::<u64>()) {
        let truth: BTreeSet<usize> = truth.into_iter().map(|t| t % n).collect();
        let items: Vec<usize> = (0..n).collect();
        let mut tail = items[k..].to_vec();
        let r = (seed as usize) % tail.len().max(1);
        tail.rotate_left(r);
        let mut other = items[..k].to_vec();
        other.extend(tail);
        let a = RankedList::new(items).unwrap();
        let b = RankedList::new(other).unwrap();
        prop_assert_eq!(ndcg_at_k(&a, &truth, k).unwrap(), ndcg_at_k(&b, &truth, k).unwrap());
        prop_assert_eq!(hit_at_k(&a, &truth, k).unwrap(), hit_at_k(&b, &truth, k).unwrap());
        prop_assert!((0.0..=1.0).contains(&ndcg_at_k(&a, &truth, k).unwrap()));
    }

    fn ndcg_is_monotone(n in 3usize..15, k in 1usize..15, truth in prop::collection::btree_set(0usize..15, 1..5), pos in 1usize..15) {
        let truth: BTreeSet<usize> = truth.into_iter().map(|t| t % n).collect();
        let items: Vec<usize> = (0..n).collect();
        let pos = 1 + pos % (n - 1);
        if truth.contains(&items[pos]) {
            let mut up = items.clone();
            up.swap(pos, pos - 1);
            let before = ndcg_at_k(&RankedList::new(items).unwrap(), &truth, k).unwrap();
            let after = ndcg_at_k(&RankedList::new(up).unwrap(), &truth, k).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }

    fn price_levels_are_monotone(prices in prop::collection::vec(0u32..40, 1..40), k in 1usize..12) {
        let prices: Vec<f64> = prices.into_iter().map(|p| f64::from(p) / 4.0).collect();
        let lv = equal_frequency_levels(&prices, k);
        for i in 0..prices.len() {
            prop_assert!(lv[i] < k);
            for j in 0..prices.len() {
                if prices[i] < prices[j] {
                    prop_assert!(lv[i] <= lv[j]);
                }
                if prices[i] == prices[j] {
                    prop_assert_eq!(lv[i], lv[j]);
                }
            }
        }
    }

    fn incidence_is_symmetric((vocab, baskets) in basket_world()) {
        let g = build_hypergraph(baskets.iter(), &vocab).unwrap();
        for (e, edge) in g.edges.iter().enumerate() {
            for m in &edge.members {
                prop_assert!(g.incident_edges(*m).unwrap().contains(&e));
            }
        }
        for s in NodeType::ALL {
            for code in 0..g.n_nodes(s) {
                let node = NodeRef::new(s, code);
                for &e in g.incident_edges(node).unwrap() {
                    prop_assert!(g.edges[e].members.contains(&node));
                }
                for t in NodeType::ALL {
                    for nb in g.neighbors(node, t).unwrap() {
                        prop_assert!(g.neighbors(nb, s).unwrap().contains(&node));
                    }
                }
            }
        }
    }

    fn hypergraph_ignores_basket_order((vocab, baskets) in basket_world()) {
        let g = build_hypergraph(baskets.iter(), &vocab).unwrap();
        let h = build_hypergraph(baskets.iter().rev(), &vocab).unwrap();
        for s in NodeType::ALL {
            for t in NodeType::ALL {
                prop_assert_eq!(g.neighbor_table(s, t), h.neighbor_table(s, t));
            }
        }
    }

    fn split_covers_every_sequence(lens in prop::collection::vec(2usize..8, 1..10)) {
        let seqs: Vec<BasketSequence> = lens
            .iter()
            .enumerate()
            .map(|(u, &n)| BasketSequence {
                user: u,
                baskets: (0..n).map(|k| Basket { user: u, seq_index: k, day: k as u32, items: vec![] }).collect(),
            })
            .collect();
        let split = split_dataset(&seqs);
        prop_assert_eq!(split.test.len(), seqs.len());
        prop_assert_eq!(split.val.len(), lens.iter().filter(|&&n| n >= 3).count());
        prop_assert_eq!(split.train.len(), lens.iter().map(|&n| n.saturating_sub(2).saturating_sub(1)).sum::<usize>());
        for s in split.train.iter().chain(&split.val).chain(&split.test) {
            prop_assert!(s.target >= 1 && s.target < lens[s.sequence]);
        }
    }
}

pub const ALL: &[(&str, fn())] = &[
    ("price_attention_rows_are_distributions", price_attention_rows_are_distributions),
    ("price_attention_is_permutation_equivariant", price_attention_is_permutation_equivariant),
    ("neighbor_weights_sum_to_one", neighbor_weights_sum_to_one),
    ("basket_pooling_bounded_and_order_free", basket_pooling_bounded_and_order_free),
    ("basket_attention_is_distribution_and_order_free", basket_attention_is_distribution_and_order_free),
    ("augmentation_leaves_absent_rows", augmentation_leaves_absent_rows),
    ("scores_softmax_properties", scores_softmax_properties),
    ("score_items_probabilities_sum_to_one", score_items_probabilities_sum_to_one),
    ("loss_is_finite_and_permutation_invariant", loss_is_finite_and_permutation_invariant),
    ("metrics_ignore_order_below_k", metrics_ignore_order_below_k),
    ("ndcg_is_monotone", ndcg_is_monotone),
    ("price_levels_are_monotone", price_levels_are_monotone),
    ("incidence_is_symmetric", incidence_is_symmetric),
    ("hypergraph_ignores_basket_order", hypergraph_ignores_basket_order),
    ("split_covers_every_sequence", split_covers_every_sequence),
];

pub fn run(name: &str) {
    let (_, f) = ALL.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
