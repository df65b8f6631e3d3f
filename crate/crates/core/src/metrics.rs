//! Top-K ranking metrics, the evaluation report, and a frequency baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::{Basket, BasketSequence, Sample};
use crate::error::{Error, Result};
use crate::model::Model;

pub const REPORT_VERSION: u32 = 1;
pub const CUTOFFS: [usize; 3] = [5, 10, 15];

/// Item codes ordered best first, without duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList(Vec<usize>);

impl RankedList {
    pub fn new(items: Vec<usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        if let Some(&dup) = items.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::Format { what: "ranked list", reason: format!("duplicate item {dup}") });
        }
        Ok(RankedList(items))
    }

    /// All items by descending score; ties go to the smaller code.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        RankedList(idx)
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.0[..k.min(self.0.len())]
    }
}

pub fn ndcg_at_k(ranked: &RankedList, truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let dcg: f64 = ranked
        .top(k)
        .iter()
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

/// 1 if any truth item is in the top `k`.
pub fn hit_at_k(ranked: &RankedList, truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    Ok(if ranked.top(k).iter().any(|i| truth.contains(i)) { 1.0 } else { 0.0 })
}

/// `|top-k ∩ truth| / min(k, |truth|)`.
pub fn recall_at_k(ranked: &RankedList, truth: &BTreeSet<usize>, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let hits = ranked.top(k).iter().filter(|i| truth.contains(i)).count();
    let denom = k.min(truth.len());
    Ok(if denom == 0 { 0.0 } else { hits as f64 / denom as f64 })
}

pub fn truth_set(basket: &Basket) -> BTreeSet<usize> {
    basket.items.iter().map(|i| i.item).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub ndcg: f64,
    pub hit: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub dataset: String,
    pub variant: String,
    pub users: usize,
    pub seed: u64,
    pub checkpoint: String,
    pub config_hash: String,
    pub metrics: Vec<CutoffMetrics>,
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&CutoffMetrics> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub const TSV_HEADER: &'static str = "dataset\tvariant\tk\tndcg\thit\trecall\tusers\tseed\tcheckpoint\tconfig_hash";

    /// Rows without the header, one per cutoff.
    pub fn tsv_rows(&self) -> String {
        let mut out = String::new();
        for m in &self.metrics {
            writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
                self.dataset, self.variant, m.k, m.ndcg, m.hit, m.recall, self.users, self.seed, self.checkpoint, self.config_hash
            )
            .expect("write to string");
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        format!("{}\n{}", Self::TSV_HEADER, self.tsv_rows())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: MetricsReport =
            serde_json::from_str(text).map_err(|e| Error::Format { what: "metrics report", reason: e.to_string() })?;
        if r.version != REPORT_VERSION {
            return Err(Error::Format { what: "metrics report", reason: format!("unsupported version {}", r.version) });
        }
        Ok(r)
    }
}

/// Per-user metric averages for arbitrary ranked lists.
pub fn average_metrics(rankings: &[(RankedList, BTreeSet<usize>)], cutoffs: &[usize]) -> Result<Vec<CutoffMetrics>> {
    let n = rankings.len().max(1) as f64;
    cutoffs
        .iter()
        .map(|&k| {
            let (mut ndcg, mut hit, mut recall) = (0.0, 0.0, 0.0);
            for (r, t) in rankings {
                ndcg += ndcg_at_k(r, t, k)?;
                hit += hit_at_k(r, t, k)?;
                recall += recall_at_k(r, t, k)?;
            }
            Ok(CutoffMetrics { k, ndcg: ndcg / n, hit: hit / n, recall: recall / n })
        })
        .collect()
}

pub struct RunInfo<'a> {
    pub dataset: &'a str,
    pub variant: &'a str,
    pub seed: u64,
    pub checkpoint: &'a str,
    pub config_hash: &'a str,
}

/// Ranks all items for each sample's history and averages metrics over users.
pub fn evaluate(model: &Model, seqs: &[BasketSequence], samples: &[Sample], info: &RunInfo) -> Result<MetricsReport> {
    let mut rankings = Vec::with_capacity(samples.len());
    for s in samples {
        let ranked = RankedList::from_scores(&model.scores(s.history(seqs))?);
        rankings.push((ranked, truth_set(s.target_basket(seqs))));
    }
    Ok(report_for(rankings, info))
}

pub fn report_for(rankings: Vec<(RankedList, BTreeSet<usize>)>, info: &RunInfo) -> MetricsReport {
    let metrics = if rankings.is_empty() {
        CUTOFFS.iter().map(|&k| CutoffMetrics { k, ndcg: 0.0, hit: 0.0, recall: 0.0 }).collect()
    } else {
        average_metrics(&rankings, &CUTOFFS).expect("truth sets come from non-empty baskets")
    };
    MetricsReport {
        version: REPORT_VERSION,
        dataset: info.dataset.to_string(),
        variant: info.variant.to_string(),
        users: rankings.len(),
        seed: info.seed,
        checkpoint: info.checkpoint.to_string(),
        config_hash: info.config_hash.to_string(),
        metrics,
    }
}

/// Mean NDCG@k of the model over `samples`.
pub fn mean_ndcg(model: &Model, seqs: &[BasketSequence], samples: &[Sample], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let ranked = RankedList::from_scores(&model.scores(s.history(seqs))?);
        total += ndcg_at_k(&ranked, &truth_set(s.target_basket(seqs)), k)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Item purchase counts over a set of baskets, indexed by item code.
pub fn item_counts<'a>(baskets: impl IntoIterator<Item = &'a Basket>, n_items: usize) -> Vec<usize> {
    let mut counts = vec![0; n_items];
    for b in baskets {
        for it in &b.items {
            counts[it.item] += 1;
        }
    }
    counts
}

/// All items ordered by personal frequency in `history`, then global
/// frequency, then item code.
pub fn frequency_baseline(history: &[Basket], global: &[usize]) -> RankedList {
    let mut personal: BTreeMap<usize, usize> = BTreeMap::new();
    for b in history {
        for it in &b.items {
            *personal.entry(it.item).or_default() += 1;
        }
    }
    let mut idx: Vec<usize> = (0..global.len()).collect();
    idx.sort_by(|&a, &b| {
        let pa = personal.get(&a).copied().unwrap_or(0);
        let pb = personal.get(&b).copied().unwrap_or(0);
        pb.cmp(&pa).then(global[b].cmp(&global[a])).then(a.cmp(&b))
    });
    RankedList(idx)
}

/// Evaluates the frequency baseline with global counts from `train_baskets`.
pub fn evaluate_baseline<'a>(
    seqs: &[BasketSequence],
    samples: &[Sample],
    train_baskets: impl IntoIterator<Item = &'a Basket>,
    n_items: usize,
    info: &RunInfo,
) -> MetricsReport {
    let global = item_counts(train_baskets, n_items);
    let rankings = samples
        .iter()
        .map(|s| (frequency_baseline(s.history(seqs), &global), truth_set(s.target_basket(seqs))))
        .collect();
    report_for(rankings, info)
}
