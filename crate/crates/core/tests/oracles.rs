mod common;

use common::oracle;

const CASES: usize = 250;

#[test]
fn neighbor_aggregation_matches_loop() {
    oracle::neighbor_aggregation_matches_loop(CASES);
}

#[test]
fn gate_fusion_matches_loop() {
    oracle::gate_fusion_matches_loop(CASES);
}

#[test]
fn price_attention_matches_loop() {
    oracle::price_attention_matches_loop(CASES);
}

#[test]
fn interest_embedding_matches_loop() {
    oracle::interest_embedding_matches_loop(CASES);
}

#[test]
fn basket_pooling_matches_loop() {
    oracle::basket_pooling_matches_loop(CASES);
}

#[test]
fn basket_attention_matches_loop() {
    oracle::basket_attention_matches_loop(CASES);
}

#[test]
fn augmentation_matches_loop() {
    oracle::augmentation_matches_loop(CASES);
}

#[test]
fn scores_match_loop() {
    oracle::scores_match_loop(CASES);
}

#[test]
fn ranking_metrics_match_brute_force() {
    oracle::ranking_metrics_match_brute_force(CASES);
}

#[test]
fn binning_matches_brute_force() {
    oracle::binning_matches_brute_force(CASES);
}

#[test]
fn neighbor_queries_match_brute_force() {
    oracle::neighbor_queries_match_brute_force(CASES);
}

#[test]
fn frequency_baseline_matches_counting() {
    oracle::frequency_baseline_matches_counting(CASES);
}
