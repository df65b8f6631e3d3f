//! Synthetic datasets for tests and examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{preprocess, Dataset, Grouping, PreprocessConfig, TransactionRecord};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub users: usize,
    pub baskets_per_user: usize,
    pub items: usize,
    pub set_size: usize,
    pub categories: usize,
    /// Random extra items added to each basket.
    pub noise_items: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig { users: 50, baskets_per_user: 20, items: 100, set_size: 5, categories: 10, noise_items: 0, seed: 7 }
    }
}

fn item_id(i: usize) -> String {
    format!("i{i:04}")
}

/// Personal item sets drawn from back-to-back shuffles of the vocabulary, so
/// every item belongs to some set when `users * set_size >= items`.
pub fn personal_sets(cfg: &PlantedConfig) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = Vec::new();
    let mut sets = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let mut set: Vec<usize> = Vec::with_capacity(cfg.set_size);
        while set.len() < cfg.set_size {
            if pool.is_empty() {
                pool = (0..cfg.items).collect();
                pool.shuffle(&mut rng);
            }
            let it = pool.pop().expect("refilled");
            if !set.contains(&it) {
                set.push(it);
            }
        }
        set.sort_unstable();
        sets.push(set);
    }
    sets
}

/// Raw records where every user buys their personal set in every basket.
pub fn planted_records(cfg: &PlantedConfig) -> Vec<TransactionRecord> {
    let sets = personal_sets(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let prices: Vec<f64> = (0..cfg.items).map(|_| rng.gen_range(0.5..20.0)).collect();
    let mut out = Vec::new();
    for (u, set) in sets.iter().enumerate() {
        for b in 0..cfg.baskets_per_user {
            let mut items = set.clone();
            for _ in 0..cfg.noise_items {
                items.push(rng.gen_range(0..cfg.items));
            }
            for &i in &items {
                out.push(TransactionRecord {
                    user_id: format!("u{u:03}"),
                    day: (b * 7) as u32,
                    basket_key: None,
                    item_id: item_id(i),
                    price: prices[i],
                    category: format!("c{:02}", i % cfg.categories.max(1)),
                });
            }
        }
    }
    out
}

pub fn planted_dataset(cfg: &PlantedConfig) -> Result<Dataset> {
    let pre = PreprocessConfig { grouping: Grouping::Day, seed: cfg.seed, ..PreprocessConfig::default() };
    preprocess(planted_records(cfg), &pre)
}

/// Three users over six items in two categories, four baskets each.
pub fn toy_dataset() -> Result<Dataset> {
    let baskets: [&[&[usize]]; 3] = [
        &[&[0, 1], &[1, 2], &[0, 2, 3], &[1, 3]],
        &[&[3, 4], &[4, 5], &[3, 5], &[0, 4]],
        &[&[0, 5], &[2, 4], &[1, 5, 2], &[3]],
    ];
    let prices = [1.0, 2.5, 4.0, 1.5, 3.0, 6.0];
    let mut records = Vec::new();
    for (u, seq) in baskets.iter().enumerate() {
        for (b, items) in seq.iter().enumerate() {
            for &i in *items {
                records.push(TransactionRecord {
                    user_id: format!("u{u}"),
                    day: b as u32,
                    basket_key: None,
                    item_id: item_id(i),
                    price: prices[i],
                    category: if i < 3 { "dairy".into() } else { "bakery".into() },
                });
            }
        }
    }
    let pre = PreprocessConfig { grouping: Grouping::Day, price_levels: 3, ..PreprocessConfig::default() };
    preprocess(records, &pre)
}
