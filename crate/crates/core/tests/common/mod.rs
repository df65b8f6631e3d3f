#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bdhh::synthetic::{planted_records, PlantedConfig};

pub mod oracle;
pub mod props;

/// Writes a Dunnhumby-layout export (`transaction_data.csv` + `product.csv`)
/// generated from a small planted dataset and returns the transactions path.
pub fn write_dunnhumby_fixture(dir: &Path, cfg: &PlantedConfig) -> PathBuf {
    let records = planted_records(cfg);
    let mut tx = String::from("household_key,BASKET_ID,DAY,PRODUCT_ID,QUANTITY,SALES_VALUE,STORE_ID\n");
    let mut products = BTreeMap::new();
    for r in &records {
        let basket = format!("{}{:04}", r.user_id.trim_start_matches('u'), r.day);
        let product = r.item_id.trim_start_matches('i');
        writeln!(tx, "{},{},{},{},2,{:.4},1", r.user_id, basket, r.day, product, 2.0 * r.price).unwrap();
        products.insert(product.to_string(), r.category.clone());
    }
    let mut prod = String::from("PRODUCT_ID,DEPARTMENT,COMMODITY_DESC\n");
    for (p, c) in products {
        writeln!(prod, "{p},GROCERY,{c}").unwrap();
    }
    let path = dir.join("transaction_data.csv");
    fs::write(&path, tx).unwrap();
    fs::write(dir.join("product.csv"), prod).unwrap();
    path
}

pub fn tiny_planted() -> PlantedConfig {
    PlantedConfig { users: 8, baskets_per_user: 6, items: 16, set_size: 3, categories: 4, noise_items: 1, seed: 3 }
}

/// Config text for a fast run over `input` writing to `out`.
pub fn tiny_config(input: &Path, out: &Path) -> String {
    format!(
        "seed = 5\noutput_dir = {out:?}\n\n[data]\ninput = {input:?}\nformat = \"dunnhumby\"\ntag = \"fixture\"\n\n\
         [preprocess]\nmin_item_count = 1\nmax_baskets_per_user = 0\n\n\
         [model]\nembed_dim = 8\nheads = 2\nmax_seq_len = 24\n\n[train]\nlr = 1e-3\nepochs = 2\nbatch_size = 4\n"
    )
}
