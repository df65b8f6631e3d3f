//! Plain-loop reference implementations checked against the library on
//! random small instances. Each check panics on the first mismatch.

use std::collections::BTreeSet;

use bdhh::augmentation::{augment_embeddings, item_basket_attention, pool_basket};
use bdhh::behavior::{interest_embedding, price_attention, AttentionWeights, InterestWeights, Pooling};
use bdhh::dataio::{equal_frequency_levels, Basket, ItemRef};
use bdhh::encoder::{aggregate_feature, gate_and_fuse, GateWeights};
use bdhh::hypergraph::{EdgeType, HeteroHypergraph, Hyperedge, NodeRef, NodeType};
use bdhh::metrics::{frequency_baseline, hit_at_k, ndcg_at_k, recall_at_k, RankedList};
use bdhh::objective::score_items;
use bdhh::tape::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vec_of(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn mat_of(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_vec((rows, cols), vec_of(r, rows * cols)).unwrap()
}

fn close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < TOL, "{x} vs {y}");
    }
}

fn loop_softmax(xs: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    let mut e = Vec::new();
    let mut total = 0.0;
    for &x in xs {
        let v = (x - m).exp();
        e.push(v);
        total += v;
    }
    e.iter().map(|v| v / total).collect()
}

fn loop_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x (1 x n) · W (n x m)`
fn vecmat(x: &[f64], w: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; w.ncols()];
    for c in 0..w.ncols() {
        for k in 0..x.len() {
            out[c] += x[k] * w[[k, c]];
        }
    }
    out
}

pub fn neighbor_aggregation_matches_loop(cases: usize) {
    let mut r = rng(1);
    for _ in 0..cases {
        let d = r.gen_range(1..6);
        let n = r.gen_range(0..6);
        let z = vec_of(&mut r, d);
        let nbrs: Vec<Vec<f64>> = (0..n).map(|_| vec_of(&mut r, d)).collect();
        let alpha = vec_of(&mut r, d);
        let got = aggregate_feature(&z, &nbrs, &alpha).unwrap();
        let mut want = vec![0.0; d];
        if n > 0 {
            let scores: Vec<f64> = nbrs.iter().map(|v| v.iter().zip(&alpha).map(|(a, b)| a * b).sum()).collect();
            let w = loop_softmax(&scores);
            for (i, v) in nbrs.iter().enumerate() {
                for c in 0..d {
                    want[c] += w[i] * v[c];
                }
            }
        }
        close(&got, &want);
    }
}

pub fn gate_fusion_matches_loop(cases: usize) {
    let mut r = rng(2);
    for _ in 0..cases {
        let d = r.gen_range(1..5);
        let (z, f1, f2) = (vec_of(&mut r, d), vec_of(&mut r, d), vec_of(&mut r, d));
        let w = GateWeights { gate: mat_of(&mut r, 3 * d, d), cross: [mat_of(&mut r, d, d), mat_of(&mut r, d, d)] };
        let (h, gamma) = gate_and_fuse(&z, &f1, &f2, &w).unwrap();
        let cat: Vec<f64> = z.iter().chain(&f1).chain(&f2).copied().collect();
        let a = vecmat(&cat, &w.gate);
        let b = vecmat(&f1, &w.cross[0]);
        let c = vecmat(&f2, &w.cross[1]);
        let g: Vec<f64> = (0..d).map(|i| loop_sigmoid(a[i] + b[i] + c[i])).collect();
        let want: Vec<f64> = (0..d).map(|i| g[i] * f1[i] + (1.0 - g[i]) * f2[i] + z[i]).collect();
        close(&gamma, &g);
        close(&h, &want);
    }
}

fn attention_oracle(x: &Mat, w: &AttentionWeights) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let (m, d) = x.dim();
    let dh = d / w.heads;
    let rows: Vec<Vec<f64>> = (0..m).map(|i| x.row(i).to_vec()).collect();
    let q: Vec<Vec<f64>> = rows.iter().map(|r| vecmat(r, &w.query)).collect();
    let k: Vec<Vec<f64>> = rows.iter().map(|r| vecmat(r, &w.key)).collect();
    let v: Vec<Vec<f64>> = rows.iter().map(|r| vecmat(r, &w.value)).collect();
    let mut concat = vec![vec![0.0; d]; m];
    let mut all_weights = Vec::new();
    for h in 0..w.heads {
        let cols = h * dh..(h + 1) * dh;
        let mut head_weights = Vec::new();
        for i in 0..m {
            let scores: Vec<f64> = (0..m)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let a = loop_softmax(&scores);
            for c in cols.clone() {
                concat[i][c] = (0..m).map(|j| a[j] * v[j][c]).sum();
            }
            head_weights.push(a);
        }
        all_weights.push(head_weights);
    }
    (concat.iter().map(|r| vecmat(r, &w.output)).collect(), all_weights)
}

pub fn price_attention_matches_loop(cases: usize) {
    let mut r = rng(3);
    for case in 0..cases {
        let heads = r.gen_range(1..4);
        let d = heads * r.gen_range(1..3);
        let m = r.gen_range(1..6);
        let x = mat_of(&mut r, m, d);
        let w = AttentionWeights {
            heads,
            query: mat_of(&mut r, d, d),
            key: mat_of(&mut r, d, d),
            value: mat_of(&mut r, d, d),
            output: mat_of(&mut r, d, d),
        };
        let pooling = if case % 2 == 0 { Pooling::Last } else { Pooling::Mean };
        let (out, weights, phi) = price_attention(&x, &w, pooling).unwrap();
        let (want_out, want_w) = attention_oracle(&x, &w);
        for i in 0..m {
            close(&out.row(i).to_vec(), &want_out[i]);
            for h in 0..heads {
                close(&weights[h].row(i).to_vec(), &want_w[h][i]);
            }
        }
        let want_phi: Vec<f64> = match pooling {
            Pooling::Last => want_out[m - 1].clone(),
            Pooling::Mean => (0..d).map(|c| want_out.iter().map(|r| r[c]).sum::<f64>() / m as f64).collect(),
        };
        close(&phi, &want_phi);
    }
}

pub fn interest_embedding_matches_loop(cases: usize) {
    let mut r = rng(4);
    for _ in 0..cases {
        let d = r.gen_range(1..5);
        let m = r.gen_range(1..6);
        let max_len = m + r.gen_range(0..3);
        let items: Vec<Vec<f64>> = (0..m).map(|_| vec_of(&mut r, d)).collect();
        let w = InterestWeights {
            positions: mat_of(&mut r, max_len, d),
            w_pos: mat_of(&mut r, d, d),
            w_item: mat_of(&mut r, d, d),
            w_basket: mat_of(&mut r, d, d),
            w_out: mat_of(&mut r, d, d),
            bias: mat_of(&mut r, 1, d),
            w_beta: mat_of(&mut r, d, 1),
        };
        let got = interest_embedding(&items, &w).unwrap();
        let rev: Vec<&Vec<f64>> = items.iter().rev().collect();
        let mean: Vec<f64> = (0..d).map(|c| rev.iter().map(|v| v[c]).sum::<f64>() / m as f64).collect();
        let basket = vecmat(&mean, &w.w_basket);
        let mut phi = vec![0.0; d];
        for (i, item) in rev.iter().enumerate() {
            let pos = vecmat(&w.positions.row(i).to_vec(), &w.w_pos);
            let it = vecmat(item, &w.w_item);
            let g: Vec<f64> = (0..d)
                .map(|c| {
                    let p = pos[c] + it[c] + basket[c] + w.bias[[0, c]];
                    p.tanh() * loop_sigmoid(p)
                })
                .collect();
            let glu = vecmat(&g, &w.w_out);
            let beta: f64 = (0..d).map(|c| glu[c] * w.w_beta[[c, 0]]).sum();
            for c in 0..d {
                phi[c] += beta * item[c];
            }
        }
        close(&got, &phi);
    }
}

pub fn basket_pooling_matches_loop(cases: usize) {
    let mut r = rng(5);
    for _ in 0..cases {
        let d = r.gen_range(1..5);
        let n = r.gen_range(1..6);
        let items: Vec<Vec<f64>> = (0..n).map(|_| vec_of(&mut r, d)).collect();
        let want: Vec<f64> = (0..d).map(|c| (items.iter().map(|v| v[c]).sum::<f64>() / n as f64).tanh()).collect();
        close(&pool_basket(&items).unwrap(), &want);
    }
}

pub fn basket_attention_matches_loop(cases: usize) {
    let mut r = rng(6);
    for _ in 0..cases {
        let d = r.gen_range(1..5);
        let j = r.gen_range(1..5);
        let v = mat_of(&mut r, j, d);
        let w = mat_of(&mut r, d, d);
        let b = mat_of(&mut r, d, 1);
        let (weights, summary) = item_basket_attention(&v, &w, &b).unwrap();
        let scores: Vec<f64> = (0..j)
            .map(|k| {
                let t = vecmat(&v.row(k).to_vec(), &w);
                (0..d).map(|c| t[c].tanh() * b[[c, 0]]).sum()
            })
            .collect();
        let a = loop_softmax(&scores);
        close(&weights, &a);
        let want: Vec<f64> = (0..d).map(|c| (0..j).map(|k| a[k] * v[[k, c]]).sum()).collect();
        close(&summary, &want);
    }
}

pub fn augmentation_matches_loop(cases: usize) {
    let mut r = rng(7);
    for _ in 0..cases {
        let d = r.gen_range(1..4);
        let n = r.gen_range(1..7);
        let h = mat_of(&mut r, n, d);
        let nb = r.gen_range(1..4);
        let baskets: Vec<Vec<usize>> = (0..nb).map(|_| (0..r.gen_range(1..4)).map(|_| r.gen_range(0..n)).collect()).collect();
        let w = mat_of(&mut r, d, d);
        let b = mat_of(&mut r, d, 1);
        let got = augment_embeddings(&h, &baskets, &w, &b).unwrap();
        let vecs: Vec<Vec<f64>> = baskets
            .iter()
            .map(|rows| (0..d).map(|c| (rows.iter().map(|&i| h[[i, c]]).sum::<f64>() / rows.len() as f64).tanh()).collect())
            .collect();
        let scores: Vec<f64> = vecs
            .iter()
            .map(|v| {
                let t = vecmat(v, &w);
                (0..d).map(|c| t[c].tanh() * b[[c, 0]]).sum()
            })
            .collect();
        for i in 0..n {
            let containing: Vec<usize> = (0..nb).filter(|&k| baskets[k].contains(&i)).collect();
            let mut want = h.row(i).to_vec();
            if !containing.is_empty() {
                let a = loop_softmax(&containing.iter().map(|&k| scores[k]).collect::<Vec<_>>());
                for (ai, &k) in a.iter().zip(&containing) {
                    for c in 0..d {
                        want[c] += ai * vecs[k][c];
                    }
                }
            }
            close(&got.row(i).to_vec(), &want);
        }
    }
}

pub fn scores_match_loop(cases: usize) {
    let mut r = rng(8);
    for case in 0..cases {
        let d = r.gen_range(1..5);
        let m = r.gen_range(1..8);
        let levels_n = r.gen_range(1..4);
        let z_id = mat_of(&mut r, m, d);
        let z_p = mat_of(&mut r, levels_n, d);
        let levels: Vec<usize> = (0..m).map(|_| r.gen_range(0..levels_n)).collect();
        let phi_d = vec_of(&mut r, d);
        let phi_p = vec_of(&mut r, d);
        let with_price = case % 3 != 0;
        let s = score_items(&phi_d, with_price.then_some(&phi_p[..]), &z_id, &z_p, &levels).unwrap();
        let y: Vec<f64> = (0..m)
            .map(|i| {
                let mut v: f64 = (0..d).map(|c| phi_d[c] * z_id[[i, c]]).sum();
                if with_price {
                    v += (0..d).map(|c| phi_p[c] * z_p[[levels[i], c]]).sum::<f64>();
                }
                v
            })
            .collect();
        close(&s.y, &y);
        close(&s.probs, &loop_softmax(&y));
    }
}

fn brute_ndcg(ranked: &[usize], truth: &BTreeSet<usize>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().enumerate() {
        if pos < k && truth.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).ln() * std::f64::consts::LN_2;
        }
    }
    let mut idcg = 0.0;
    for pos in 0..truth.len() {
        if pos < k {
            idcg += 1.0 / ((pos + 2) as f64).ln() * std::f64::consts::LN_2;
        }
    }
    dcg / idcg
}

pub fn ranking_metrics_match_brute_force(cases: usize) {
    let mut r = rng(9);
    for _ in 0..cases {
        let n = r.gen_range(5..25);
        let mut items: Vec<usize> = (0..n).collect();
        items.shuffle(&mut r);
        let truth: BTreeSet<usize> = (0..r.gen_range(1..6)).map(|_| r.gen_range(0..n)).collect();
        let k = r.gen_range(1..16);
        let ranked = RankedList::new(items.clone()).unwrap();
        let top: Vec<usize> = items.iter().take(k).copied().collect();
        let overlap = top.iter().filter(|i| truth.contains(i)).count();
        assert!((ndcg_at_k(&ranked, &truth, k).unwrap() - brute_ndcg(&items, &truth, k)).abs() < TOL);
        assert_eq!(hit_at_k(&ranked, &truth, k).unwrap(), if overlap > 0 { 1.0 } else { 0.0 });
        let recall = overlap as f64 / k.min(truth.len()) as f64;
        assert!((recall_at_k(&ranked, &truth, k).unwrap() - recall).abs() < TOL);
    }
}

pub fn binning_matches_brute_force(cases: usize) {
    let mut r = rng(10);
    for _ in 0..cases {
        let n = r.gen_range(1..30);
        let k = r.gen_range(1..12);
        let prices: Vec<f64> = (0..n).map(|_| (r.gen_range(0..15) as f64) * 0.5).collect();
        let got = equal_frequency_levels(&prices, k);
        let distinct: Vec<f64> = {
            let mut v = prices.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        for (i, &p) in prices.iter().enumerate() {
            let below = prices.iter().filter(|&&q| q < p).fold(BTreeSet::new(), |mut s, q| {
                s.insert(q.to_bits());
                s
            });
            let want = below.len() * k / distinct.len();
            assert_eq!(got[i], want, "price {p} in {prices:?}, k {k}");
            assert!(got[i] < k);
        }
    }
}

pub fn neighbor_queries_match_brute_force(cases: usize) {
    let mut r = rng(11);
    for _ in 0..cases {
        let (ni, np, nc) = (r.gen_range(1..8), r.gen_range(1..4), r.gen_range(1..4));
        let mut edges = Vec::new();
        for i in 0..ni {
            if r.gen_bool(0.8) {
                let members = [NodeRef::new(NodeType::Id, i), NodeRef::new(NodeType::Price, r.gen_range(0..np)), NodeRef::new(NodeType::Category, r.gen_range(0..nc))];
                edges.push(Hyperedge::new(EdgeType::ItemFeature, members));
            }
        }
        for _ in 0..r.gen_range(0..5) {
            let ids = (0..r.gen_range(1..4)).map(|_| NodeRef::new(NodeType::Id, r.gen_range(0..ni)));
            edges.push(Hyperedge::new(EdgeType::ItemId, ids));
            let ps = (0..r.gen_range(1..4)).map(|_| NodeRef::new(NodeType::Price, r.gen_range(0..np)));
            edges.push(Hyperedge::new(EdgeType::ItemPrice, ps));
        }
        let g = HeteroHypergraph::from_edges(ni, np, nc, edges.clone()).unwrap();
        for src in NodeType::ALL {
            for code in 0..g.n_nodes(src) {
                let node = NodeRef::new(src, code);
                for tgt in NodeType::ALL {
                    let mut want = Vec::new();
                    for e in &edges {
                        if e.members.contains(&node) {
                            for m in &e.members {
                                if m.node_type == tgt && *m != node && !want.contains(m) {
                                    want.push(*m);
                                }
                            }
                        }
                    }
                    want.sort();
                    assert_eq!(g.neighbors(node, tgt).unwrap(), want);
                }
            }
        }
    }
}

fn basket(items: &[usize]) -> Basket {
    Basket { user: 0, seq_index: 0, day: 0, items: items.iter().map(|&item| ItemRef { item, price: 0, category: 0 }).collect() }
}

pub fn frequency_baseline_matches_counting(cases: usize) {
    let mut r = rng(12);
    for _ in 0..cases {
        let n = r.gen_range(2..10);
        let users: Vec<Vec<Basket>> = (0..3)
            .map(|_| {
                (0..r.gen_range(1..4))
                    .map(|_| {
                        let set: BTreeSet<usize> = (0..r.gen_range(1..4)).map(|_| r.gen_range(0..n)).collect();
                        basket(&set.into_iter().collect::<Vec<_>>())
                    })
                    .collect()
            })
            .collect();
        let mut global = vec![0usize; n];
        for b in users.iter().flatten() {
            for it in &b.items {
                global[it.item] += 1;
            }
        }
        for hist in &users {
            let mut personal = vec![0usize; n];
            for b in hist {
                for it in &b.items {
                    personal[it.item] += 1;
                }
            }
            let mut keyed: Vec<(std::cmp::Reverse<usize>, std::cmp::Reverse<usize>, usize)> =
                (0..n).map(|i| (std::cmp::Reverse(personal[i]), std::cmp::Reverse(global[i]), i)).collect();
            keyed.sort();
            let want: Vec<usize> = keyed.into_iter().map(|k| k.2).collect();
            assert_eq!(frequency_baseline(hist, &global).items(), &want[..]);
        }
    }
}
