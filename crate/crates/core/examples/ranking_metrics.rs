//! NDCG, Hit and Recall at several cutoffs for one ranked list.

use std::collections::BTreeSet;

use bdhh::metrics::{hit_at_k, ndcg_at_k, recall_at_k, RankedList, CUTOFFS};

fn main() -> bdhh::Result<()> {
    let scores = [0.1, 0.9, 0.3, 0.8, 0.05, 0.4, 0.2, 0.7, 0.0, 0.6, 0.35, 0.15, 0.25, 0.45, 0.5, 0.55];
    let ranked = RankedList::from_scores(&scores);
    let truth: BTreeSet<usize> = [3, 5, 8].into_iter().collect();
    println!("ranking {:?}", ranked.items());
    println!("truth {truth:?}");
    for k in CUTOFFS {
        println!(
            "@{k:<2} ndcg={:.4} hit={:.0} recall={:.4}",
            ndcg_at_k(&ranked, &truth, k)?,
            hit_at_k(&ranked, &truth, k)?,
            recall_at_k(&ranked, &truth, k)?
        );
    }
    Ok(())
}
